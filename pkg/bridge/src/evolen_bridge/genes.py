"""Parse the wire-format genome JSON into a flat gene list.

Deliberately independent of the search engine's own code: the bridge only
speaks the protocol, so the genome schema is re-implemented here from the
wire contract.
"""

from __future__ import annotations


class GenomeError(ValueError):
    """The genome object does not follow the wire schema."""


REQUIRED_FIELDS = {
    "conv": ("filters", "kernel", "padding", "stride"),
    "pool": ("mode", "window", "stride"),
    "dense": ("units",),
    "batchnorm": (),
    "dropout": ("rate",),
}


def parse_genome(obj: object) -> list[dict]:
    """Flatten {"blocks": [...]} into an ordered list of gene dicts."""
    if not isinstance(obj, dict) or "blocks" not in obj:
        raise GenomeError("genome must be an object with a 'blocks' list")
    blocks = obj["blocks"]
    if not isinstance(blocks, list):
        raise GenomeError("'blocks' must be a list")
    genes: list[dict] = []
    for bi, block in enumerate(blocks):
        if not isinstance(block, dict) or block.get("kind") not in ("feature", "head"):
            raise GenomeError(f"block {bi}: kind must be 'feature' or 'head'")
        layers = block.get("layers")
        if not isinstance(layers, list):
            raise GenomeError(f"block {bi}: 'layers' must be a list")
        for li, gene in enumerate(layers):
            genes.append(_check_gene(gene, f"block {bi} layer {li}"))
    if not genes or genes[-1]["kind"] != "dense":
        raise GenomeError("genome must end with the classifier dense gene")
    return genes


def _check_gene(gene: object, where: str) -> dict:
    if not isinstance(gene, dict):
        raise GenomeError(f"{where}: gene must be an object")
    kind = gene.get("kind")
    if kind not in REQUIRED_FIELDS:
        raise GenomeError(f"{where}: unknown gene kind {kind!r}")
    for name in REQUIRED_FIELDS[kind]:
        if name not in gene:
            raise GenomeError(f"{where}: {kind} gene missing {name!r}")
    if kind == "conv" and gene["padding"] not in ("same", "valid"):
        raise GenomeError(f"{where}: conv padding must be 'same' or 'valid'")
    if kind == "pool" and gene["mode"] not in ("max", "avg"):
        raise GenomeError(f"{where}: pool mode must be 'max' or 'avg'")
    return dict(gene)
