"""Genetic search inside the selected length space: seeded initialization,
binary tournaments, multi-point hyperparameter crossover, add/update mutation
under the length cap, and elitist truncation of parents plus offspring.

Every stochastic step draws from a stream derived from (master seed, phase,
generation, slot), so a run is a deterministic function of its config and can
resume from any checkpoint without replaying earlier generations.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

from . import rng as rngmod
from .config import EvolutionConfig
from .fitness import FitnessEvaluator, FitnessRecord
from .genome import (
    CONV_FILTERS,
    CONV_KERNELS,
    DENSE_UNITS,
    POOL_MODES,
    Block,
    Genome,
    Lineage,
    conv,
    dense,
    effective_length,
    from_json_obj,
    pool,
    random_conv,
    random_dense,
    random_pool,
    to_json_obj,
    validate,
)
from .lengthsearch import LengthSpace, OptimalSpace


class NoCrossoverPoint(Exception):
    """The two genomes share no swappable layer kind; callers skip crossover."""


@dataclass(frozen=True)
class Member:
    genome: Genome
    record: FitnessRecord

    @property
    def id(self) -> str:
        return self.genome.id


@dataclass
class Population:
    generation: int
    members: list[Member]

    def best(self) -> Member:
        return min(self.members, key=_rank_key)


def _rank_key(member: Member):
    # Fitness first; ties go to the cheaper model, then the lower id.
    return (-member.record.fitness, member.record.num_params, member.id)


# -- initialization -----------------------------------------------------------

_STANDARD_PATTERNS = {2: ("CP",), 3: ("CPP",)}
_RANDOM_PATTERNS = {1: ("C",), 2: ("CC", "CP"), 3: ("CCC", "CCP", "CPP")}


def _compose_lengths(total: int, rng, sizes: tuple[int, ...]) -> list[int]:
    """Split `total` into block sizes drawn from `sizes` (falling back to a
    bare single-conv block when 1 is the only way to finish)."""
    parts = []
    remaining = total
    while remaining > 0:
        options = [s for s in sizes if s <= remaining and (remaining - s != 1 or 1 in sizes)]
        if not options:
            options = [1]
        parts.append(rng.choice(options))
        remaining -= parts[-1]
    return parts


def _block_from_pattern(pattern: str, rng) -> Block:
    layers = tuple(random_conv(rng) if ch == "C" else random_pool(rng) for ch in pattern)
    return Block(kind="feature", layers=layers)


def init_population(
    mode: str,
    space: OptimalSpace,
    count: int,
    rng,
    num_classes: int = 10,
) -> list[Genome]:
    """Seed `count` genomes at the bottom of the space, lengths jittered up by
    0-2 layers so the first generation is not uniform.

    standard: blocks are one conv followed by one or two pools.
    random:   any conv-led disposition of up to three conv/pool genes.
    """
    if space.selected is None:
        raise ValueError("cannot initialize a population without a selected space")
    base = max(1, space.selected.min_length)
    cap = space.effective_max_length
    patterns = _STANDARD_PATTERNS if mode == "standard" else _RANDOM_PATTERNS
    sizes = tuple(sorted(patterns))

    genomes = []
    for _ in range(count):
        target = min(base + rng.choice((0, 1, 2)), cap)
        blocks = []
        if target > 0:
            for size in _compose_lengths(target, rng, sizes):
                if size in patterns:
                    pattern = rng.choice(patterns[size])
                else:
                    pattern = "C"
                blocks.append(_block_from_pattern(pattern, rng))
        head = Block(kind="head", layers=(random_dense(rng), dense(num_classes)))
        genomes.append(Genome(blocks=tuple(blocks) + (head,)))
    return genomes


# -- variation operators ------------------------------------------------------


def tournament_select(pop: Population, rng) -> tuple[Member, Member]:
    """Two independent binary tournaments; the winners may coincide."""
    return _binary_tournament(pop.members, rng), _binary_tournament(pop.members, rng)


def _binary_tournament(members: list[Member], rng) -> Member:
    a, b = rng.sample(members, 2)
    if a.record.fitness > b.record.fitness:
        return a
    if b.record.fitness > a.record.fitness:
        return b
    return a if rng.random() < 0.5 else b  # fair coin keeps equal-fitness picks uniform


def _swappable_positions(genome: Genome) -> dict[str, list[tuple[int, int]]]:
    """Crossover points by kind. The classifier dense gene is excluded so the
    output width can never migrate between genomes."""
    positions: dict[str, list[tuple[int, int]]] = {"conv": [], "pool": [], "dense": []}
    for bi, block in enumerate(genome.blocks):
        for li, gene in enumerate(block.layers):
            if gene.kind in ("conv", "pool"):
                positions[gene.kind].append((bi, li))
            elif gene.kind == "dense" and not (block.kind == "head" and li == len(block.layers) - 1):
                positions["dense"].append((bi, li))
    return positions


def _replace_gene(genome: Genome, bi: int, li: int, gene) -> Genome:
    block = genome.blocks[bi]
    layers = block.layers[:li] + (gene,) + block.layers[li + 1:]
    blocks = genome.blocks[:bi] + (Block(kind=block.kind, layers=layers),) + genome.blocks[bi + 1:]
    return Genome(blocks=blocks)


def crossover(a: Genome, b: Genome, rng) -> tuple[Genome, Genome]:
    """Pair same-kind genes at random across the parents (each gene used at
    most once), pick a random nonempty subset of pairs as crossing points, and
    swap those genes' hyperparameter sets. Lengths and block structure are
    untouched."""
    pos_a = _swappable_positions(a)
    pos_b = _swappable_positions(b)
    pairs: list[tuple[tuple[int, int], tuple[int, int]]] = []
    for kind in ("conv", "pool", "dense"):
        n = min(len(pos_a[kind]), len(pos_b[kind]))
        if n == 0:
            continue
        pairs.extend(zip(rng.sample(pos_a[kind], n), rng.sample(pos_b[kind], n)))
    if not pairs:
        raise NoCrossoverPoint("parents share no conv, pool, or hidden dense genes")

    chosen = [p for p in pairs if rng.random() < 0.5]
    if not chosen:
        chosen = [pairs[rng.randrange(len(pairs))]]

    child_a, child_b = a, b
    for (abi, ali), (bbi, bli) in chosen:
        gene_a = child_a.blocks[abi].layers[ali]
        gene_b = child_b.blocks[bbi].layers[bli]
        child_a = _replace_gene(child_a, abi, ali, gene_b)
        child_b = _replace_gene(child_b, bbi, bli, gene_a)

    # Same-kind swaps cannot break the grammar; check anyway before releasing.
    if validate(child_a) or validate(child_b):
        return a, b
    return child_a, child_b


_MUTATION_RETRIES = 8


def mutate(genome: Genome, max_len: int, at_cap: bool, rng) -> Genome:
    """Add a conv/pool gene or rewrite one gene; at the length cap only the
    update operand is drawn. Proposals failing validation are retried up to a
    bound, after which the genome is returned unchanged."""
    capped = at_cap or effective_length(genome) >= max_len
    for _ in range(_MUTATION_RETRIES):
        op = "update" if capped else rng.choice(("add", "update"))
        proposal = _propose_add(genome, rng) if op == "add" else _propose_update(genome, rng)
        if proposal is not None and not validate(proposal, max_len):
            return proposal
    return genome


def _feature_blocks_with_index(genome: Genome) -> list[tuple[int, Block]]:
    return [(bi, b) for bi, b in enumerate(genome.blocks) if b.kind == "feature"]


def _propose_add(genome: Genome, rng) -> Genome | None:
    gene = random_conv(rng) if rng.random() < 0.5 else random_pool(rng)
    features = _feature_blocks_with_index(genome)

    targets: list[tuple[str, int]] = [("new", pos) for pos in range(len(features) + 1)]
    targets.extend(("into", bi) for bi, b in features if len(b.layers) < 3)
    action, where = rng.choice(targets)

    if action == "new":
        # Feature blocks precede the head, so feature position == block index.
        block = Block(kind="feature", layers=(gene,))
        blocks = genome.blocks[:where] + (block,) + genome.blocks[where:]
        return Genome(blocks=blocks)

    block = genome.blocks[where]
    n_conv = sum(1 for g in block.layers if g.kind == "conv")
    if gene.kind == "conv":
        li = rng.randint(0, n_conv)  # keep convs ahead of pools
    else:
        li = rng.randint(n_conv, len(block.layers))
    layers = block.layers[:li] + (gene,) + block.layers[li:]
    blocks = genome.blocks[:where] + (Block(kind="feature", layers=layers),) + genome.blocks[where + 1:]
    return Genome(blocks=blocks)


def _propose_update(genome: Genome, rng) -> Genome | None:
    positions = _swappable_positions(genome)
    flat = [(kind, bi, li) for kind, plist in positions.items() for bi, li in plist]
    if not flat:
        return None
    kind, bi, li = rng.choice(flat)
    current = genome.blocks[bi].layers[li]

    if kind == "conv":
        choice = rng.choice(("filters", "kernel", "flip"))
        if choice == "flip":
            gene = random_pool(rng)
        elif choice == "filters":
            gene = conv(filters=_other(rng, current.filters, CONV_FILTERS), kernel=current.kernel)
        else:
            gene = conv(filters=current.filters, kernel=_other(rng, current.kernel, CONV_KERNELS))
    elif kind == "pool":
        if rng.random() < 0.5:
            gene = random_conv(rng)
        else:
            gene = pool(mode=_other(rng, current.mode, POOL_MODES))
    else:  # hidden dense
        gene = dense(units=_other(rng, current.units, DENSE_UNITS))

    return _replace_gene(genome, bi, li, gene)


def _other(rng, current, menu):
    options = [v for v in menu if v != current]
    return rng.choice(options) if options else current


def environmental_select(parents: Population, offspring: list[Member], count: int) -> Population:
    """Elitist truncation: the top `count` of parents plus offspring survive."""
    union = parents.members + offspring
    if len(union) < count:
        raise ValueError(f"need at least {count} individuals, have {len(union)}")
    survivors = sorted(union, key=_rank_key)[:count]
    return Population(generation=parents.generation + 1, members=survivors)


# -- the evolution loop -------------------------------------------------------


@dataclass(frozen=True)
class HistoryRow:
    generation: int
    individual_id: str
    parent_ids: tuple[str, ...]
    operator: str
    effective_length: int
    num_params: int
    fitness: float
    loss: float | None
    eval_seconds: float


@dataclass
class RunHistory:
    rows: list[HistoryRow] = field(default_factory=list)
    best_id: str = ""
    best_record: FitnessRecord | None = None

    def generations(self) -> list[int]:
        seen: list[int] = []
        for row in self.rows:
            if not seen or row.generation != seen[-1]:
                seen.append(row.generation)
        return seen


HISTORY_COLUMNS = [
    "generation", "individual_id", "parent_ids", "operator",
    "effective_length", "num_params", "fitness", "loss", "eval_seconds",
]


def write_history_csv(path: str, rows: list[HistoryRow]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_COLUMNS)
        for row in rows:
            writer.writerow([
                row.generation,
                row.individual_id,
                "|".join(row.parent_ids),
                row.operator,
                row.effective_length,
                row.num_params,
                row.fitness,
                "" if row.loss is None else row.loss,
                row.eval_seconds,
            ])


def _rows_for(pop: Population) -> list[HistoryRow]:
    rows = []
    for member in sorted(pop.members, key=_rank_key):
        lineage = member.genome.lineage or Lineage(parents=(), operator="init")
        rows.append(
            HistoryRow(
                generation=pop.generation,
                individual_id=member.id,
                parent_ids=lineage.parents,
                operator=lineage.operator,
                effective_length=effective_length(member.genome),
                num_params=member.record.num_params,
                fitness=member.record.fitness,
                loss=member.record.loss,
                eval_seconds=member.record.eval_seconds,
            )
        )
    return rows


def save_checkpoint(path: str, pop: Population, rows: list[HistoryRow], space: OptimalSpace) -> None:
    state = {
        "generation": pop.generation,
        "space": space.to_json(),
        "members": [
            {
                "id": m.id,
                "genome": to_json_obj(m.genome),
                "parents": list((m.genome.lineage or Lineage((), "init")).parents),
                "operator": (m.genome.lineage or Lineage((), "init")).operator,
                "record": m.record.to_json(),
            }
            for m in pop.members
        ],
        "history": [
            {
                "generation": r.generation,
                "individual_id": r.individual_id,
                "parent_ids": list(r.parent_ids),
                "operator": r.operator,
                "effective_length": r.effective_length,
                "num_params": r.num_params,
                "fitness": r.fitness,
                "loss": r.loss,
                "eval_seconds": r.eval_seconds,
            }
            for r in rows
        ],
    }
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(state, fh, sort_keys=True, indent=2)
        fh.write("\n")
    os.replace(tmp, path)


def load_checkpoint(path: str) -> tuple[Population, list[HistoryRow], OptimalSpace]:
    with open(path, "r", encoding="utf-8") as fh:
        state = json.load(fh)
    members = []
    for m in state["members"]:
        genome = from_json_obj(m["genome"]).with_identity(
            m["id"], Lineage(parents=tuple(m["parents"]), operator=m["operator"])
        )
        members.append(Member(genome=genome, record=FitnessRecord.from_json(m["record"])))
    rows = [
        HistoryRow(
            generation=r["generation"],
            individual_id=r["individual_id"],
            parent_ids=tuple(r["parent_ids"]),
            operator=r["operator"],
            effective_length=r["effective_length"],
            num_params=r["num_params"],
            fitness=r["fitness"],
            loss=r["loss"],
            eval_seconds=r["eval_seconds"],
        )
        for r in state["history"]
    ]
    space_obj = state["space"]
    selected = space_obj.get("selected")
    space = OptimalSpace(
        selected=LengthSpace.from_json(selected) if selected else None,
        margin=space_obj["margin"],
    )
    return Population(generation=state["generation"], members=members), rows, space


def evolve(
    cfg: EvolutionConfig,
    space: OptimalSpace,
    evaluator: FitnessEvaluator,
    checkpoint_path: str | None = None,
    resume_state: tuple[Population, list[HistoryRow]] | None = None,
) -> tuple[Genome, RunHistory]:
    """Run the generational loop and return the all-time best genome plus the
    full history. Deterministic for a fixed (cfg, space) and a deterministic
    evaluator, regardless of evaluation completion order."""
    if space.selected is None:
        raise ValueError("evolve requires a selected space")
    cap = space.effective_max_length

    if resume_state is not None:
        pop, rows = resume_state
        rows = list(rows)
    else:
        init_rng = rngmod.stream(cfg.master_seed, "init")
        genomes = init_population(cfg.init_mode, space, cfg.population_size, init_rng, cfg.num_classes)
        genomes = [
            g.with_identity(f"g000x{slot:03d}", Lineage(parents=(), operator="init"))
            for slot, g in enumerate(genomes)
        ]
        records = evaluator.evaluate_many(genomes, cfg.eval_budget, jobs=cfg.jobs)
        pop = Population(generation=0, members=[Member(g, r) for g, r in zip(genomes, records)])
        rows = _rows_for(pop)
        if checkpoint_path:
            save_checkpoint(checkpoint_path, pop, rows, space)

    def target_met() -> bool:
        return (
            cfg.target_fitness is not None
            and pop.best().record.fitness >= cfg.target_fitness
        )

    while pop.generation < cfg.max_generations and not target_met():
        t = pop.generation
        children: list[Genome] = []
        for round_idx in range((cfg.population_size + 1) // 2):
            rng = rngmod.stream(cfg.master_seed, "breed", t, round_idx)
            m1, m2 = tournament_select(pop, rng)
            g1, g2 = m1.genome, m2.genome
            crossed = False
            if rng.random() < cfg.crossover_prob:
                try:
                    g1, g2 = crossover(g1, g2, rng)
                    crossed = True
                except NoCrossoverPoint:
                    pass
            for parent, child_genome in ((m1, g1), (m2, g2)):
                ops = ["crossover"] if crossed else []
                if rng.random() < cfg.mutation_prob:
                    mutated = mutate(child_genome, cap, effective_length(child_genome) >= cap, rng)
                    if mutated != child_genome:
                        ops.append("mutation")
                    child_genome = mutated
                parent_ids = (m1.id, m2.id) if crossed else (parent.id,)
                slot = len(children)
                children.append(
                    child_genome.with_identity(
                        f"g{t + 1:03d}x{slot:03d}",
                        Lineage(parents=parent_ids, operator="+".join(ops) or "copy"),
                    )
                )
        records = evaluator.evaluate_many(children, cfg.eval_budget, jobs=cfg.jobs)
        offspring = [Member(g, r) for g, r in zip(children, records)]
        pop = environmental_select(pop, offspring, cfg.population_size)
        rows.extend(_rows_for(pop))
        if checkpoint_path:
            save_checkpoint(checkpoint_path, pop, rows, space)

    best = pop.best()
    history = RunHistory(rows=rows, best_id=best.id, best_record=best.record)
    return best.genome, history
