import itertools
import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evolen.config import EvolutionConfig
from evolen.fitness import FitnessEvaluator, FitnessRecord, SurrogateBackend, SurrogateSpec
from evolen.genome import effective_length, infer_shapes, serialize, validate
from evolen.lengthsearch import (
    ZERO_SPACE,
    InvalidPartition,
    LengthSpace,
    NoOptimalSpace,
    SpaceResult,
    make_candidate,
    partition,
    run_length_search,
    select_space,
    write_space_reports,
    zero_candidate,
)


def make_evaluator(spec: SurrogateSpec, seed: int = 0, input_shape=(32, 32, 3)) -> FitnessEvaluator:
    return FitnessEvaluator(SurrogateBackend(spec), input_shape=input_shape, num_classes=10, master_seed=seed)


# -- partition ----------------------------------------------------------------


def test_partition_24_by_4_matches_published_tiling():
    spaces = partition(24, 4)
    assert [(s.min_length, s.max_length) for s in spaces] == [
        (0, 4), (4, 8), (8, 12), (12, 16), (16, 20), (20, 24),
    ]
    assert [s.candidate_length for s in spaces] == [2, 6, 10, 14, 18, 22]


def test_partition_single_space():
    spaces = partition(4, 4)
    assert len(spaces) == 1
    assert (spaces[0].min_length, spaces[0].max_length, spaces[0].candidate_length) == (0, 4, 2)


@pytest.mark.parametrize("n,k", [(24, 3), (24, 5), (3, 4), (24, 1), (26, 4)])
def test_partition_rejects_bad_widths(n, k):
    with pytest.raises(InvalidPartition):
        partition(n, k)


@given(st.integers(1, 12), st.integers(1, 6))
@settings(max_examples=60, deadline=None)
def test_partition_tiles_the_axis(tiles, half_width):
    width = 2 * half_width
    spaces = partition(tiles * width, width)
    assert spaces[0].min_length == 0
    assert spaces[-1].max_length == tiles * width
    for left, right in itertools.pairwise(spaces):
        assert left.max_length == right.min_length
    for s in spaces:
        assert s.candidate_length == (s.min_length + s.max_length) // 2


# -- candidates ---------------------------------------------------------------


def test_candidate_has_midpoint_length_and_dense_head():
    space = partition(24, 4)[1]  # [4-8]
    g = make_candidate(space, random.Random(3))
    assert effective_length(g) == 6
    head = g.blocks[-1]
    hidden = [gene for gene in head.layers[:-1] if gene.kind == "dense"]
    assert 1 <= len(hidden) <= 3
    assert head.layers[-1].kind == "dense"
    assert validate(g) == []


def test_first_space_candidate_has_length_two():
    g = make_candidate(partition(24, 4)[0], random.Random(0))
    assert effective_length(g) == 2


def test_candidates_are_seed_deterministic():
    space = partition(24, 4)[2]
    a = make_candidate(space, random.Random(11))
    b = make_candidate(space, random.Random(11))
    assert serialize(a) == serialize(b)


def test_zero_candidate_is_dense_only():
    g = zero_candidate(random.Random(5))
    assert effective_length(g) == 0
    assert validate(g) == []
    infer_shapes(g, (1, 1, 1))  # no down-sampling anywhere
    assert serialize(zero_candidate(random.Random(5))) == serialize(g)


# -- selection rule -----------------------------------------------------------


def result_with_mean(space: LengthSpace, mean: float, repeats: int = 5) -> SpaceResult:
    records = tuple(
        FitnessRecord(fitness=mean, loss=1 - mean, num_params=1000, eval_seconds=0.0, source="surrogate")
        for _ in range(repeats)
    )
    return SpaceResult(
        space=space,
        fitnesses=tuple(r.fitness for r in records),
        losses=tuple(r.loss for r in records),
        records=records,
    )


def spaces_24_4():
    return partition(24, 4)


def test_clear_winner_is_selected():
    spaces = spaces_24_4()
    means = [0.98, 0.72, 0.3, 0.2, 0.1, 0.05]
    results = [result_with_mean(s, m) for s, m in zip(spaces, means)]
    assert select_space(results, alpha=0.05, floor=0.15) == spaces[0]


def test_smaller_space_within_alpha_wins():
    spaces = spaces_24_4()
    results = [result_with_mean(spaces[1], 0.67), result_with_mean(spaces[2], 0.70)]
    assert select_space(results, alpha=0.05, floor=0.15) == spaces[1]


def test_all_dead_means_no_selection():
    results = [result_with_mean(s, 0.0) for s in spaces_24_4()]
    assert select_space(results, alpha=0.05, floor=0.15) is None


def test_selection_uses_mean_not_max():
    spaces = spaces_24_4()
    lucky = SpaceResult(
        space=spaces[2],
        fitnesses=(0.95, 0.1, 0.1, 0.1, 0.1),
        losses=(0.05, 0.9, 0.9, 0.9, 0.9),
        records=tuple(
            FitnessRecord(fitness=f, loss=1 - f, num_params=0, eval_seconds=0.0, source="surrogate")
            for f in (0.95, 0.1, 0.1, 0.1, 0.1)
        ),
    )
    steady = result_with_mean(spaces[3], 0.6)
    assert select_space([lucky, steady], alpha=0.05, floor=0.15) == spaces[3]


@given(st.permutations(range(6)))
@settings(max_examples=40, deadline=None)
def test_selection_is_order_invariant(order):
    spaces = spaces_24_4()
    means = [0.82, 0.88, 0.6, 0.3, 0.0, 0.0]
    results = [result_with_mean(s, m) for s, m in zip(spaces, means)]
    shuffled = [results[i] for i in order]
    assert select_space(shuffled, alpha=0.05, floor=0.15) == select_space(results, alpha=0.05, floor=0.15)


@given(
    st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=1, max_size=6),
    st.floats(min_value=0.0, max_value=0.3),
)
@settings(max_examples=100, deadline=None)
def test_selected_space_is_never_alpha_below_best(means, alpha):
    spaces = spaces_24_4()
    results = [result_with_mean(s, m) for s, m in zip(spaces, means)]
    selected = select_space(results, alpha=alpha, floor=0.0)
    best = max(r.mean_fitness for r in results)
    chosen = next(r for r in results if r.space == selected)
    assert chosen.mean_fitness >= best - alpha


# -- the full search ----------------------------------------------------------


class RecordingBackend(SurrogateBackend):
    def __init__(self, spec):
        super().__init__(spec)
        self.seen: list[tuple[str, int]] = []

    def run(self, genome, budget, *, repeat_index, **kwargs):
        self.seen.append((serialize(genome), repeat_index))
        return super().run(genome, budget, repeat_index=repeat_index, **kwargs)


def test_search_recovers_a_peak_at_six():
    cfg = EvolutionConfig(master_seed=42)
    evaluator = make_evaluator(SurrogateSpec(family="length_peak", peak_length=6, noise_scale=0.02))
    optimal, results = run_length_search(cfg, evaluator)
    assert optimal.selected.label == "4-8"
    assert optimal.effective_max_length == 10
    assert len(results) == 7  # zero sentinel + six spaces
    assert all(len(r.fitnesses) == cfg.repeats for r in results)


def test_search_repeats_redraw_hyperparameters():
    cfg = EvolutionConfig(master_seed=1, repeats=5)
    backend = RecordingBackend(SurrogateSpec(family="length_peak", peak_length=6))
    evaluator = FitnessEvaluator(backend, input_shape=(32, 32, 3), num_classes=10)
    run_length_search(cfg, evaluator)
    by_space: dict[int, set[str]] = {}
    # Out-of-shape candidates never reach the backend, so group what arrived.
    for text, _ in backend.seen:
        length = text.count('"kind":"conv"') + text.count('"kind":"pool"')
        by_space.setdefault(length, set()).add(text)
    for length, variants in by_space.items():
        assert len(variants) >= 2, f"candidates at length {length} never varied"


def test_concurrent_search_matches_serial_search():
    spec = SurrogateSpec(family="length_peak", peak_length=6, noise_scale=0.02)
    serial, threaded = EvolutionConfig(master_seed=5, jobs=1), EvolutionConfig(master_seed=5, jobs=4)
    opt1, res1 = run_length_search(serial, make_evaluator(spec))
    opt2, res2 = run_length_search(threaded, make_evaluator(spec))
    assert opt1 == opt2
    assert [r.fitnesses for r in res1] == [r.fitnesses for r in res2]


def test_plateau_below_floor_raises_with_results():
    cfg = EvolutionConfig(master_seed=0)
    evaluator = make_evaluator(SurrogateSpec(family="plateau", level=0.05))
    with pytest.raises(NoOptimalSpace) as exc:
        run_length_search(cfg, evaluator)
    assert len(exc.value.results) == 7


def test_peak_at_zero_selects_dense_only_sentinel():
    cfg = EvolutionConfig(master_seed=9)
    evaluator = make_evaluator(SurrogateSpec(family="length_peak", peak_length=0))
    optimal, _ = run_length_search(cfg, evaluator)
    assert optimal.selected == ZERO_SPACE
    assert optimal.effective_max_length == 2


def test_far_spaces_go_out_of_shape_on_small_inputs():
    cfg = EvolutionConfig(master_seed=3, input_shape=(32, 32, 3))
    evaluator = make_evaluator(SurrogateSpec(family="length_peak", peak_length=6))
    _, results = run_length_search(cfg, evaluator)
    by_label = {r.space.label: r for r in results}
    for label in ("16-20", "20-24"):
        assert by_label[label].fitnesses == (0.0,) * cfg.repeats


def test_reports_land_on_disk(tmp_path):
    cfg = EvolutionConfig(master_seed=2)
    evaluator = make_evaluator(SurrogateSpec(family="length_peak", peak_length=6))
    optimal, results = run_length_search(cfg, evaluator)
    write_space_reports(str(tmp_path), results, optimal, cfg)

    report = json.loads((tmp_path / "spaces.json").read_text())
    assert report["optimal"]["selected"]["min_length"] == 4
    assert len(report["spaces"]) == 7

    lines = (tmp_path / "spaces.csv").read_text().strip().splitlines()
    assert lines[0] == "space,repeat,fitness,loss,params"
    assert len(lines) == 1 + 7 * cfg.repeats
