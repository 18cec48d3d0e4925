"""Length search: tile the architecture-length axis into spaces, evaluate one
representative candidate per space (rebuilt with fresh hyperparameters on
every repeat), and select the optimal space.

Selection prefers the best mean fitness, breaking near-ties toward the
smaller space: if a strictly smaller space sits within `alpha` of the best
mean it wins, since the cheaper model fixes the data just as well. The winner
is widened by a `margin` of extra layers so evolution can cross into the
neighboring space if the true optimum sits on the boundary.
"""

from __future__ import annotations

import csv
import json
import os
import statistics
from dataclasses import dataclass

from . import rng as rngmod
from .config import EvolutionConfig
from .fitness import FitnessEvaluator, FitnessRecord
from .genome import (
    Block,
    Genome,
    batchnorm,
    dense,
    dropout,
    random_conv,
    random_dense,
    random_pool,
)


class InvalidPartition(ValueError):
    """The (max length, space width) pair cannot tile the length axis."""


class NoOptimalSpace(Exception):
    """Every candidate fell below the fitness floor.

    Carries the full per-space results so callers can still report them.
    """

    def __init__(self, results: list["SpaceResult"]):
        self.results = results
        super().__init__("no space produced a candidate above the fitness floor")


@dataclass(frozen=True)
class LengthSpace:
    """One tile [min_length, max_length] of the length axis, with the length
    of the candidate genome that represents it (the tile midpoint)."""

    index: int
    min_length: int
    max_length: int
    candidate_length: int

    @property
    def label(self) -> str:
        return f"{self.min_length}-{self.max_length}"

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "min_length": self.min_length,
            "max_length": self.max_length,
            "candidate_length": self.candidate_length,
        }

    @staticmethod
    def from_json(obj: dict) -> "LengthSpace":
        return LengthSpace(
            index=obj["index"],
            min_length=obj["min_length"],
            max_length=obj["max_length"],
            candidate_length=obj["candidate_length"],
        )


# Sentinel for the dense-only candidate; not a real tile of the axis.
ZERO_SPACE = LengthSpace(index=0, min_length=0, max_length=0, candidate_length=0)


def partition(max_length: int, width: int) -> list[LengthSpace]:
    """Tile [0, max_length] into max_length/width spaces of equal width.

    Candidate lengths land on tile midpoints, which is what requires an even
    width; for width 4 the i-th candidate length is 2*(2*i - 1).
    """
    if width < 2:
        raise InvalidPartition(f"space width must be >= 2, got {width}")
    if max_length < width:
        raise InvalidPartition(f"max length {max_length} is below the space width {width}")
    if width % 2 != 0:
        raise InvalidPartition(f"space width must be even to have integer midpoints, got {width}")
    if max_length % width != 0:
        raise InvalidPartition(f"space width {width} does not divide max length {max_length}")
    spaces = []
    for i in range(1, max_length // width + 1):
        spaces.append(
            LengthSpace(
                index=i,
                min_length=width * (i - 1),
                max_length=width * i,
                candidate_length=width * i - width // 2,
            )
        )
    return spaces


def head_genes(rng, num_classes: int) -> Block:
    """Dense head per the candidate recipe: 1-3 dense genes, each followed by
    batchnorm and dropout, then the classifier dense gene."""
    layers = []
    for _ in range(rng.randint(1, 3)):
        layers.extend([random_dense(rng), batchnorm(), dropout()])
    layers.append(dense(num_classes))
    return Block(kind="head", layers=tuple(layers))


def make_candidate(space: LengthSpace, rng, num_classes: int = 10) -> Genome:
    """Standard representative of a space: candidate_length/2 (conv, pool)
    pairs followed by a random dense head."""
    blocks = []
    for _ in range(space.candidate_length // 2):
        blocks.append(Block(kind="feature", layers=(random_conv(rng), random_pool(rng))))
    blocks.append(head_genes(rng, num_classes))
    return Genome(blocks=tuple(blocks))


def zero_candidate(rng, num_classes: int = 10) -> Genome:
    """Dense-only candidate: sometimes no feature extraction is needed at all."""
    return Genome(blocks=(head_genes(rng, num_classes),))


@dataclass(frozen=True)
class SpaceResult:
    space: LengthSpace
    fitnesses: tuple[float, ...]
    losses: tuple[float | None, ...]
    records: tuple[FitnessRecord, ...]

    @property
    def mean_fitness(self) -> float:
        return statistics.fmean(self.fitnesses)

    @property
    def best_fitness(self) -> float:
        return max(self.fitnesses)

    def to_json(self) -> dict:
        return {
            "space": self.space.to_json(),
            "fitnesses": list(self.fitnesses),
            "losses": list(self.losses),
            "mean_fitness": self.mean_fitness,
            "best_fitness": self.best_fitness,
            "records": [r.to_json() for r in self.records],
        }


@dataclass(frozen=True)
class OptimalSpace:
    selected: LengthSpace | None
    margin: int

    @property
    def effective_max_length(self) -> int | None:
        if self.selected is None:
            return None
        return self.selected.max_length + self.margin

    def to_json(self) -> dict:
        return {
            "selected": self.selected.to_json() if self.selected else None,
            "margin": self.margin,
            "effective_max_length": self.effective_max_length,
        }


def select_space(
    results: list[SpaceResult], alpha: float, floor: float
) -> LengthSpace | None:
    """Pick the space whose candidate fixed the data best, order-independent.

    The best-mean space wins unless a strictly smaller space has a mean within
    alpha of it; then the smallest such space wins. Returns None when even the
    best mean sits below the floor (nothing learned anywhere).
    """
    if not results:
        raise ValueError("results must be non-empty")
    best_mean = max(r.mean_fitness for r in results)
    if best_mean < floor:
        return None
    eligible = [r for r in results if r.mean_fitness >= best_mean - alpha]
    chosen = min(eligible, key=lambda r: (r.space.max_length, r.space.index))
    return chosen.space


def run_length_search(
    cfg: EvolutionConfig, evaluator: FitnessEvaluator
) -> tuple[OptimalSpace, list[SpaceResult]]:
    """Evaluate the zero candidate plus one candidate per space, `repeats`
    times each with fresh hyperparameter draws, and select the optimal space.

    Raises NoOptimalSpace (carrying the results) when nothing clears the floor.
    """
    spaces = [ZERO_SPACE] + partition(cfg.max_length, cfg.space_width)

    # Candidate construction is rng-derived per (space, repeat), so the whole
    # batch can be built up front and evaluated concurrently; records come
    # back in slot order either way.
    pending: list[tuple[Genome, int]] = []
    for space in spaces:
        for repeat in range(cfg.repeats):
            rng = rngmod.stream(cfg.master_seed, "lengthsearch", space.index, repeat)
            if space is ZERO_SPACE:
                candidate = zero_candidate(rng, cfg.num_classes)
            else:
                candidate = make_candidate(space, rng, cfg.num_classes)
            pending.append((candidate.with_identity(f"s{space.index:02d}r{repeat:02d}"), repeat))
    records = evaluator.evaluate_pairs(pending, cfg.eval_budget, jobs=cfg.jobs)

    results: list[SpaceResult] = []
    for si, space in enumerate(spaces):
        space_records = records[si * cfg.repeats:(si + 1) * cfg.repeats]
        results.append(
            SpaceResult(
                space=space,
                fitnesses=tuple(r.fitness for r in space_records),
                losses=tuple(r.loss for r in space_records),
                records=tuple(space_records),
            )
        )

    selected = select_space(results, cfg.alpha, cfg.effective_floor)
    if selected is None:
        raise NoOptimalSpace(results)
    return OptimalSpace(selected=selected, margin=cfg.margin), results


def write_space_reports(
    out_dir: str,
    results: list[SpaceResult],
    optimal: OptimalSpace | None,
    cfg: EvolutionConfig,
) -> None:
    """Emit spaces.json (full results + selection) and spaces.csv (one row per
    space and repeat, ready for plotting)."""
    os.makedirs(out_dir, exist_ok=True)
    report = {
        "alpha": cfg.alpha,
        "floor": cfg.effective_floor,
        "margin": cfg.margin,
        "optimal": optimal.to_json() if optimal else None,
        "spaces": [r.to_json() for r in results],
    }
    with open(os.path.join(out_dir, "spaces.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
        fh.write("\n")

    with open(os.path.join(out_dir, "spaces.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["space", "repeat", "fitness", "loss", "params"])
        for result in results:
            for repeat, record in enumerate(result.records):
                writer.writerow(
                    [
                        result.space.label,
                        repeat,
                        record.fitness,
                        "" if record.loss is None else record.loss,
                        record.num_params,
                    ]
                )
