"""The full two-stage pipeline: find the optimal length space, then evolve a
population inside it and watch the best fitness climb generation by generation."""

import statistics

from evolen import EvolutionConfig, FitnessEvaluator, SurrogateBackend, SurrogateSpec
from evolen import effective_length, run_length_search, evolve, serialize

cfg = EvolutionConfig(master_seed=2024)
landscape = SurrogateSpec(family="length_peak", peak_length=6, noise_scale=0.02, noise_seed=5)
evaluator = FitnessEvaluator(
    SurrogateBackend(landscape), input_shape=(32, 32, 3), num_classes=10,
    master_seed=cfg.master_seed,
)

# Stage 1: locate the space worth searching.
optimal, _ = run_length_search(cfg, evaluator)
print(f"optimal space [{optimal.selected.label}], cap {optimal.effective_max_length} layers")

# Stage 2: the genetic algorithm, 25 individuals for 10 generations.
# The same evaluator carries its cache over, so elites are never re-trained.
best, history = evolve(cfg, optimal, evaluator)

print("\n gen   best    mean   population")
per_gen: dict[int, list[float]] = {}
for row in history.rows:
    per_gen.setdefault(row.generation, []).append(row.fitness)
for gen in sorted(per_gen):
    fitnesses = per_gen[gen]
    print(f"  {gen:2d}  {max(fitnesses):5.3f}  {statistics.fmean(fitnesses):5.3f}   {len(fitnesses)}")

print(f"\nbest individual {best.id}: length {effective_length(best)}, "
      f"fitness {history.best_record.fitness:.3f}, "
      f"{history.best_record.num_params} parameters")
print(serialize(best))

# Lineage is recorded per individual: which parents, which operator.
sample = next(r for r in history.rows if r.operator not in ("init", "copy"))
print(f"\nexample lineage: {sample.individual_id} <- {list(sample.parent_ids)} via {sample.operator}")
