"""Length-constrained neuroevolution for CNN architectures.

Two-stage search: first locate the architecture-length space that fits the
dataset, then run a genetic algorithm inside that space. Fitness evaluation is
pluggable: deterministic surrogates for desk-scale work, or an external
trainer over a newline-delimited JSON protocol.
"""

from .config import BUDGET_PRESETS, BackendConfig, ConfigError, EvolutionConfig, RunConfig, TrainBudget
from .evolution import (
    Member,
    NoCrossoverPoint,
    Population,
    RunHistory,
    crossover,
    environmental_select,
    evolve,
    init_population,
    mutate,
    tournament_select,
)
from .fitness import (
    BackendUnavailable,
    EvalCache,
    FitnessEvaluator,
    FitnessRecord,
    ProtocolClient,
    ProtocolError,
    SurrogateBackend,
    SurrogateSpec,
    Timeout,
    external_evaluate,
    surrogate_fitness,
)
from .genome import (
    Block,
    Genome,
    LayerGene,
    Lineage,
    MalformedGenome,
    OutOfShape,
    ShapeReport,
    count_params,
    deserialize,
    effective_length,
    genome_hash,
    infer_shapes,
    serialize,
    validate,
)
from .lengthsearch import (
    ZERO_SPACE,
    InvalidPartition,
    LengthSpace,
    NoOptimalSpace,
    OptimalSpace,
    SpaceResult,
    make_candidate,
    partition,
    run_length_search,
    select_space,
    zero_candidate,
)

__version__ = "0.1.0"
