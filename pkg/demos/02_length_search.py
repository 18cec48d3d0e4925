"""Run the length search against two synthetic accuracy landscapes and watch
it pick different spaces: small inputs favor short nets, bigger ones go deeper.

The surrogate is a closed-form stand-in for trained accuracy, so the whole
strategy runs in milliseconds while behaving like the real thing (including
deep candidates collapsing out of shape on small images).
"""

from evolen import EvolutionConfig, FitnessEvaluator, SurrogateBackend, SurrogateSpec
from evolen import run_length_search

for name, peak in (("digits-like task", 2), ("natural-images-like task", 6)):
    cfg = EvolutionConfig(master_seed=7)
    landscape = SurrogateSpec(family="length_peak", peak_length=peak, noise_scale=0.02, noise_seed=1)
    evaluator = FitnessEvaluator(
        SurrogateBackend(landscape), input_shape=(32, 32, 3), num_classes=10,
        master_seed=cfg.master_seed,
    )

    optimal, results = run_length_search(cfg, evaluator)

    print(f"\n{name} (true best length {peak})")
    print("  space    mean    best   repeats")
    for r in results:
        marker = "  <- selected" if r.space == optimal.selected else ""
        print(f"  [{r.space.label:>5}]  {r.mean_fitness:5.3f}  {r.best_fitness:5.3f}  "
              f"{[round(f, 2) for f in r.fitnesses]}{marker}")
    print(f"  evolution may use lengths up to {optimal.effective_max_length} "
          f"(selected max + margin {optimal.margin})")

# Note the far spaces scoring exactly 0.0: their candidates down-sample a
# 32x32 input past 1x1 and are assigned fitness 0 without any training.
