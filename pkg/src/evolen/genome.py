"""Architectural genotype: layer genes grouped into blocks, plus shape and
parameter inference over the encoded CNN.

A genome is an ordered list of feature blocks (conv/pool genes) followed by
exactly one head block (dense/batchnorm/dropout genes ending in the
classifier dense gene). All values are immutable; every operation here is a
pure function.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Iterator

# Hyperparameter menus. Generation draws from these; validate() enforces the
# gene-level invariants (kernel in {3,5}, conv stride 1, 2x2 stride-2 pools).
CONV_FILTERS = (16, 32, 64, 128)
CONV_KERNELS = (3, 5)
POOL_MODES = ("max", "avg")
DENSE_UNITS = (64, 128, 256)
DROPOUT_RATE = 0.5

FEATURE_BLOCK_MAX_LAYERS = 3


class MalformedGenome(ValueError):
    """Raised when genome text cannot be parsed into a structurally sound genome."""


class OutOfShape(Exception):
    """A layer would produce a spatial dimension below 1.

    Genomes that down-sample past the input size are representable and
    evaluable (callers assign them fitness 0); this exception is the signal,
    not a validation failure.
    """

    def __init__(self, layer_index: int, detail: str = ""):
        self.layer_index = layer_index
        msg = f"out of shape at layer {layer_index}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


_KIND_FIELDS = {
    "conv": ("filters", "kernel", "padding", "stride"),
    "pool": ("mode", "stride", "window"),
    "dense": ("units",),
    "batchnorm": (),
    "dropout": ("rate",),
}

_FIELD_TYPES = {
    "filters": int,
    "kernel": int,
    "stride": int,
    "padding": str,
    "mode": str,
    "window": int,
    "units": int,
    "rate": float,
}


@dataclass(frozen=True)
class LayerGene:
    """One architectural gene. Exactly the fields for its kind are populated."""

    kind: str
    filters: int | None = None
    kernel: int | None = None
    stride: int | None = None
    padding: str | None = None
    mode: str | None = None
    window: int | None = None
    units: int | None = None
    rate: float | None = None

    def to_json(self) -> dict:
        out: dict = {"kind": self.kind}
        for name in _KIND_FIELDS.get(self.kind, ()):
            out[name] = getattr(self, name)
        return out


def conv(filters: int, kernel: int = 3, stride: int = 1, padding: str = "same") -> LayerGene:
    return LayerGene(kind="conv", filters=filters, kernel=kernel, stride=stride, padding=padding)


def pool(mode: str = "max", window: int = 2, stride: int = 2) -> LayerGene:
    return LayerGene(kind="pool", mode=mode, window=window, stride=stride)


def dense(units: int) -> LayerGene:
    return LayerGene(kind="dense", units=units)


def batchnorm() -> LayerGene:
    return LayerGene(kind="batchnorm")


def dropout(rate: float = DROPOUT_RATE) -> LayerGene:
    return LayerGene(kind="dropout", rate=rate)


def random_conv(rng) -> LayerGene:
    return conv(filters=rng.choice(CONV_FILTERS), kernel=rng.choice(CONV_KERNELS))


def random_pool(rng) -> LayerGene:
    return pool(mode=rng.choice(POOL_MODES))


def random_dense(rng) -> LayerGene:
    return dense(units=rng.choice(DENSE_UNITS))


@dataclass(frozen=True)
class Block:
    kind: str  # "feature" | "head"
    layers: tuple[LayerGene, ...]

    def to_json(self) -> dict:
        return {"kind": self.kind, "layers": [g.to_json() for g in self.layers]}


@dataclass(frozen=True)
class Lineage:
    parents: tuple[str, ...]
    operator: str


@dataclass(frozen=True)
class Genome:
    """Ordered blocks; `id` and `lineage` are run bookkeeping, not structure.

    Equality and serialization cover only the blocks, so two individuals with
    the same architecture hash and serialize identically.
    """

    blocks: tuple[Block, ...]
    id: str = field(default="", compare=False)
    lineage: Lineage | None = field(default=None, compare=False)

    def with_identity(self, id: str, lineage: Lineage | None = None) -> "Genome":
        return replace(self, id=id, lineage=lineage)

    @property
    def feature_blocks(self) -> tuple[Block, ...]:
        return tuple(b for b in self.blocks if b.kind == "feature")

    @property
    def head_block(self) -> Block | None:
        for b in self.blocks:
            if b.kind == "head":
                return b
        return None


def iter_genes(genome: Genome) -> Iterator[tuple[int, Block, LayerGene]]:
    """Yield (global layer index, block, gene) in network order."""
    idx = 0
    for block in genome.blocks:
        for gene in block.layers:
            yield idx, block, gene
            idx += 1


def effective_length(genome: Genome) -> int:
    """Number of conv + pool genes; dense/batchnorm/dropout do not count."""
    return sum(1 for _, _, g in iter_genes(genome) if g.kind in ("conv", "pool"))


@dataclass(frozen=True)
class ShapeReport:
    """Per-layer output shapes plus the total learnable parameter count.

    Feature-side entries are (height, width, channels); head-side entries are
    (units,) once the map has been flattened.
    """

    input_shape: tuple[int, int, int]
    layer_shapes: tuple[tuple[int, ...], ...]
    total_params: int


def infer_shapes(genome: Genome, input_shape: tuple[int, int, int]) -> ShapeReport:
    """Propagate shapes layer by layer and count learnable parameters.

    Raises OutOfShape at the first layer whose output spatial dimension would
    drop below 1.
    """
    h, w, c = input_shape
    if h < 1 or w < 1 or c < 1:
        raise ValueError(f"input shape must be >= 1x1x1, got {input_shape}")

    shapes: list[tuple[int, ...]] = []
    params = 0
    flat: int | None = None  # vector width once flattened

    for idx, block, gene in iter_genes(genome):
        if gene.kind == "conv":
            if gene.padding == "same":
                out_h, out_w = h, w
            else:  # valid
                out_h, out_w = h - gene.kernel + 1, w - gene.kernel + 1
            if out_h < 1 or out_w < 1:
                raise OutOfShape(idx, f"conv reduces {h}x{w} to {out_h}x{out_w}")
            params += (gene.kernel * gene.kernel * c + 1) * gene.filters
            h, w, c = out_h, out_w, gene.filters
            shapes.append((h, w, c))
        elif gene.kind == "pool":
            out_h = (h - gene.window) // gene.stride + 1
            out_w = (w - gene.window) // gene.stride + 1
            if out_h < 1 or out_w < 1:
                raise OutOfShape(idx, f"pool reduces {h}x{w} to {out_h}x{out_w}")
            h, w = out_h, out_w
            shapes.append((h, w, c))
        elif gene.kind == "dense":
            if flat is None:
                flat = h * w * c  # the first dense gene flattens the feature map
            params += (flat + 1) * gene.units
            flat = gene.units
            shapes.append((flat,))
        elif gene.kind == "batchnorm":
            width = flat if flat is not None else c
            params += 2 * width  # scale and shift; running stats are not learnable
            shapes.append((flat,) if flat is not None else (h, w, c))
        elif gene.kind == "dropout":
            shapes.append((flat,) if flat is not None else (h, w, c))
        else:
            raise MalformedGenome(f"unknown gene kind {gene.kind!r}")

    return ShapeReport(input_shape=input_shape, layer_shapes=tuple(shapes), total_params=params)


def count_params(genome: Genome, input_shape: tuple[int, int, int]) -> int:
    """Total learnable parameters; propagates OutOfShape."""
    return infer_shapes(genome, input_shape).total_params


def validate(genome: Genome, max_length: int | None = None) -> list[str]:
    """Return all invariant violations (empty list means valid).

    Violations are data, not exceptions: out-of-shape and over-length genomes
    are representable, and callers decide what to do with them.
    """
    violations: list[str] = []

    head_seen = False
    for bi, block in enumerate(genome.blocks):
        if block.kind == "feature":
            if head_seen:
                violations.append(f"block {bi}: feature block after the head")
            violations.extend(_check_feature_block(bi, block))
        elif block.kind == "head":
            if head_seen:
                violations.append(f"block {bi}: more than one head block")
            head_seen = True
            violations.extend(_check_head_block(bi, block))
        else:
            violations.append(f"block {bi}: unknown block kind {block.kind!r}")
    if not head_seen:
        violations.append("genome has no head block")

    features = genome.feature_blocks
    if features and features[0].layers and features[0].layers[0].kind != "conv":
        violations.append("first feature gene must be conv")

    for idx, _, gene in iter_genes(genome):
        violations.extend(f"layer {idx}: {v}" for v in _check_gene(gene))

    if max_length is not None:
        length = effective_length(genome)
        if length > max_length:
            violations.append(f"length {length} exceeds bound {max_length}")

    return violations


def _check_feature_block(bi: int, block: Block) -> list[str]:
    out = []
    n = len(block.layers)
    if not 1 <= n <= FEATURE_BLOCK_MAX_LAYERS:
        out.append(f"block {bi}: feature block has {n} layers, expected 1-{FEATURE_BLOCK_MAX_LAYERS}")
    kinds = [g.kind for g in block.layers]
    if any(k not in ("conv", "pool") for k in kinds):
        out.append(f"block {bi}: feature block may hold only conv/pool genes")
    if "conv" not in kinds:
        out.append(f"block {bi}: feature block needs at least one conv gene")
    else:
        seen_pool = False
        for k in kinds:
            if k == "pool":
                seen_pool = True
            elif k == "conv" and seen_pool:
                out.append(f"block {bi}: conv genes must precede pool genes")
                break
    return out


def _check_head_block(bi: int, block: Block) -> list[str]:
    out = []
    kinds = [g.kind for g in block.layers]
    if any(k not in ("dense", "batchnorm", "dropout") for k in kinds):
        out.append(f"block {bi}: head block may hold only dense/batchnorm/dropout genes")
    if not kinds or kinds[-1] != "dense":
        out.append(f"block {bi}: head block must end with the classifier dense gene")
    return out


def _check_gene(gene: LayerGene) -> list[str]:
    out = []
    expected = _KIND_FIELDS.get(gene.kind)
    if expected is None:
        return [f"unknown gene kind {gene.kind!r}"]
    for name in _FIELD_TYPES:
        value = getattr(gene, name)
        if name in expected and value is None:
            out.append(f"{gene.kind} gene missing field {name!r}")
        if name not in expected and value is not None:
            out.append(f"{gene.kind} gene must not set field {name!r}")
    if out:
        return out
    if gene.kind == "conv":
        if gene.filters < 1:
            out.append("conv filters must be positive")
        if gene.kernel not in CONV_KERNELS:
            out.append(f"conv kernel must be one of {CONV_KERNELS}")
        if gene.stride != 1:
            out.append("conv stride must be 1")
        if gene.padding not in ("same", "valid"):
            out.append("conv padding must be 'same' or 'valid'")
    elif gene.kind == "pool":
        if gene.mode not in POOL_MODES:
            out.append(f"pool mode must be one of {POOL_MODES}")
        if gene.window != 2 or gene.stride != 2:
            out.append("pool must be 2x2 with stride 2")
    elif gene.kind == "dense":
        if gene.units < 1:
            out.append("dense units must be positive")
    elif gene.kind == "dropout":
        if not 0.0 < gene.rate < 1.0:
            out.append("dropout rate must be in (0, 1)")
    return out


# -- canonical JSON ----------------------------------------------------------
#
# Canonical form: {"blocks": [...]} with sorted keys and no whitespace, so the
# serialized text doubles as a stable hash input for the fitness cache. The
# only float hyperparameter is the dropout rate. id/lineage are intentionally
# excluded: structurally equal genomes serialize to identical bytes.


def to_json_obj(genome: Genome) -> dict:
    return {"blocks": [b.to_json() for b in genome.blocks]}


def serialize(genome: Genome) -> str:
    return json.dumps(to_json_obj(genome), sort_keys=True, separators=(",", ":"))


def genome_hash(genome: Genome) -> str:
    return hashlib.sha256(serialize(genome).encode("utf-8")).hexdigest()


def from_json_obj(obj: object) -> Genome:
    if not isinstance(obj, dict):
        raise MalformedGenome(f"genome must be a JSON object, got {type(obj).__name__}")
    unknown = set(obj) - {"blocks"}
    if unknown:
        raise MalformedGenome(f"unknown genome key {sorted(unknown)[0]!r}")
    if "blocks" not in obj:
        raise MalformedGenome("genome object missing 'blocks'")
    raw_blocks = obj["blocks"]
    if not isinstance(raw_blocks, list):
        raise MalformedGenome("'blocks' must be a list")
    return Genome(blocks=tuple(_block_from_json(b) for b in raw_blocks))


def deserialize(text: str) -> Genome:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise MalformedGenome(f"invalid JSON: {e}") from e
    return from_json_obj(obj)


def _block_from_json(obj: object) -> Block:
    if not isinstance(obj, dict):
        raise MalformedGenome("block must be a JSON object")
    unknown = set(obj) - {"kind", "layers"}
    if unknown:
        raise MalformedGenome(f"unknown block key {sorted(unknown)[0]!r}")
    kind = obj.get("kind")
    if kind not in ("feature", "head"):
        raise MalformedGenome(f"block kind must be 'feature' or 'head', got {kind!r}")
    layers = obj.get("layers")
    if not isinstance(layers, list):
        raise MalformedGenome("block 'layers' must be a list")
    return Block(kind=kind, layers=tuple(_gene_from_json(g) for g in layers))


def _gene_from_json(obj: object) -> LayerGene:
    if not isinstance(obj, dict):
        raise MalformedGenome("gene must be a JSON object")
    kind = obj.get("kind")
    if kind not in _KIND_FIELDS:
        raise MalformedGenome(f"unknown gene kind {kind!r}")
    expected = _KIND_FIELDS[kind]
    unknown = set(obj) - {"kind"} - set(expected)
    if unknown:
        raise MalformedGenome(f"unknown {kind} gene key {sorted(unknown)[0]!r}")
    values = {}
    for name in expected:
        if name not in obj:
            raise MalformedGenome(f"{kind} gene missing field {name!r}")
        value = obj[name]
        want = _FIELD_TYPES[name]
        if want is float:
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise MalformedGenome(f"{kind} gene field {name!r} must be a number")
            value = float(value)
        elif not isinstance(value, want) or isinstance(value, bool):
            raise MalformedGenome(f"{kind} gene field {name!r} must be {want.__name__}")
        values[name] = value
    return LayerGene(kind=kind, **values)
