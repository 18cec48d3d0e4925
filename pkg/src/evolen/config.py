"""Search configuration: training budgets, engine hyperparameters, and the
JSON run-config file consumed by the CLI. Unknown keys are rejected by name.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


@dataclass(frozen=True)
class TrainBudget:
    """What one fitness evaluation is allowed to spend."""

    epochs: int = 5
    data_fraction: float = 1.0
    batch_size: int = 128
    learning_rate: float = 1e-3
    momentum: float = 0.9

    def __post_init__(self):
        if not 0.0 < self.data_fraction <= 1.0:
            raise ConfigError(f"data_fraction must be in (0, 1], got {self.data_fraction}")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")

    def to_json(self) -> dict:
        return {
            "epochs": self.epochs,
            "data_fraction": self.data_fraction,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "momentum": self.momentum,
        }


# quick: the 5-epoch screening budget used while ranking candidate spaces.
# subset: 20% of the data for 100 epochs, the heavier screening setting.
# full: the final-training budget (full data, 400 epochs).
BUDGET_PRESETS = {
    "quick": TrainBudget(),
    "subset": TrainBudget(epochs=100, data_fraction=0.2),
    "full": TrainBudget(epochs=400, data_fraction=1.0),
}


@dataclass(frozen=True)
class EvolutionConfig:
    """All knobs for the length search and the genetic algorithm."""

    max_length: int = 24          # N: upper bound of the length axis
    space_width: int = 4          # k: width of one length space
    margin: int = 2               # extra layers granted past the selected space
    alpha: float = 0.05           # fitness margin for preferring a smaller space
    population_size: int = 25
    max_generations: int = 10
    crossover_prob: float = 0.2
    mutation_prob: float = 0.5
    repeats: int = 5              # candidate re-draws per space in the length search
    init_mode: str = "standard"   # "standard" | "random"
    target_fitness: float | None = None
    master_seed: int = 0
    eval_budget: TrainBudget = field(default_factory=TrainBudget)
    floor: float | None = None    # min acceptable mean fitness; None -> 1.5/num_classes
    input_shape: tuple[int, int, int] = (32, 32, 3)
    num_classes: int = 10
    dataset_name: str = "cifar10"
    jobs: int = 1                 # concurrent fitness evaluations

    def __post_init__(self):
        if not 0.0 <= self.crossover_prob <= 1.0:
            raise ConfigError(f"crossover_prob must be in [0, 1], got {self.crossover_prob}")
        if not 0.0 <= self.mutation_prob <= 1.0:
            raise ConfigError(f"mutation_prob must be in [0, 1], got {self.mutation_prob}")
        if self.population_size < 2:
            raise ConfigError("population_size must be >= 2")
        if self.max_generations < 1:
            raise ConfigError("max_generations must be >= 1")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if self.init_mode not in ("standard", "random"):
            raise ConfigError(f"init_mode must be 'standard' or 'random', got {self.init_mode!r}")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    @property
    def effective_floor(self) -> float:
        if self.floor is not None:
            return self.floor
        return 1.5 / self.num_classes  # 1.5x random-guess accuracy


@dataclass(frozen=True)
class BackendConfig:
    """Which fitness backend to run and how to reach it."""

    kind: str = "surrogate"  # "surrogate" | "external"
    # surrogate knobs
    family: str = "length_peak"
    peak_length: int = 6
    noise_scale: float = 0.0
    noise_seed: int = 0
    level: float = 0.5
    params_midpoint: float = 50_000.0
    # external knobs
    command: tuple[str, ...] | None = None
    address: str | None = None
    timeout: float = 60.0
    max_retries: int = 1

    def __post_init__(self):
        if self.kind not in ("surrogate", "external"):
            raise ConfigError(f"backend kind must be 'surrogate' or 'external', got {self.kind!r}")


@dataclass(frozen=True)
class RunConfig:
    evolution: EvolutionConfig
    backend: BackendConfig
    out_dir: str | None = None


_TOP_KEYS = {
    "max_length", "space_width", "margin", "alpha", "floor",
    "population_size", "max_generations", "crossover_prob", "mutation_prob",
    "repeats", "init_mode", "target_fitness", "master_seed", "jobs",
    "budget", "dataset", "backend", "out_dir",
}
_DATASET_KEYS = {"name", "input_shape", "num_classes"}
_BUDGET_KEYS = {"epochs", "data_fraction", "batch_size", "learning_rate", "momentum"}
_BACKEND_KEYS = {
    "kind", "family", "peak_length", "noise_scale", "noise_seed", "level",
    "params_midpoint", "command", "address", "timeout", "max_retries",
}


def _reject_unknown(obj: dict, allowed: set[str], where: str) -> None:
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"unknown config key {key!r} in {where}")


def parse_run_config(obj: object) -> RunConfig:
    if not isinstance(obj, dict):
        raise ConfigError("run config must be a JSON object")
    _reject_unknown(obj, _TOP_KEYS, "run config")

    budget = TrainBudget()
    raw_budget = obj.get("budget")
    if isinstance(raw_budget, str):
        if raw_budget not in BUDGET_PRESETS:
            raise ConfigError(f"unknown budget preset {raw_budget!r}; have {sorted(BUDGET_PRESETS)}")
        budget = BUDGET_PRESETS[raw_budget]
    elif isinstance(raw_budget, dict):
        _reject_unknown(raw_budget, _BUDGET_KEYS, "budget")
        budget = replace(budget, **raw_budget)
    elif raw_budget is not None:
        raise ConfigError("budget must be a preset name or an object")

    dataset = obj.get("dataset", {})
    if not isinstance(dataset, dict):
        raise ConfigError("dataset must be an object")
    _reject_unknown(dataset, _DATASET_KEYS, "dataset")
    input_shape = tuple(dataset.get("input_shape", (32, 32, 3)))
    if len(input_shape) != 3 or any(not isinstance(v, int) or v < 1 for v in input_shape):
        raise ConfigError(f"dataset input_shape must be [H, W, C] of positive ints, got {list(input_shape)}")

    evo_kwargs = {
        name: obj[name]
        for name in _TOP_KEYS - {"budget", "dataset", "backend", "out_dir"}
        if name in obj
    }
    evolution = EvolutionConfig(
        eval_budget=budget,
        input_shape=input_shape,  # type: ignore[arg-type]
        num_classes=dataset.get("num_classes", 10),
        dataset_name=dataset.get("name", "cifar10"),
        **evo_kwargs,
    )

    raw_backend = obj.get("backend", {})
    if not isinstance(raw_backend, dict):
        raise ConfigError("backend must be an object")
    _reject_unknown(raw_backend, _BACKEND_KEYS, "backend")
    if "command" in raw_backend and raw_backend["command"] is not None:
        raw_backend = dict(raw_backend, command=tuple(raw_backend["command"]))
    backend = BackendConfig(**raw_backend)

    out_dir = obj.get("out_dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigError("out_dir must be a string")
    return RunConfig(evolution=evolution, backend=backend, out_dir=out_dir)


def load_run_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    return parse_run_config(obj)
