"""Materialize a genome as a torch model: one module per gene, in gene order.

Convolutions carry their ReLU inside the gene's module so the mapping between
genes and model layers stays one-to-one; the classifier (the final dense
gene) outputs bare logits.
"""

from __future__ import annotations

import torch
from torch import nn

from .genes import GenomeError, parse_genome


class BuildError(ValueError):
    """The genome cannot become a trainable model for this input shape."""


class BuiltModel(nn.Module):
    def __init__(self, layers: list[nn.Module]):
        super().__init__()
        self.layers = nn.ModuleList(layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for layer in self.layers:
            x = layer(x)
        return x

    @property
    def num_params(self) -> int:
        return sum(p.numel() for p in self.parameters() if p.requires_grad)


def build_model(genome_obj: object, input_shape: tuple[int, int, int], num_classes: int) -> BuiltModel:
    """One torch module per gene; raises BuildError when a layer would shrink
    the feature map below 1x1 or the genome is malformed."""
    try:
        genes = parse_genome(genome_obj)
    except GenomeError as e:
        raise BuildError(str(e)) from e

    h, w, c = input_shape
    if h < 1 or w < 1 or c < 1:
        raise BuildError(f"input shape must be >= 1x1x1, got {input_shape}")
    flat: int | None = None
    modules: list[nn.Module] = []

    dense_seen = 0
    dense_total = sum(1 for g in genes if g["kind"] == "dense")

    for idx, gene in enumerate(genes):
        kind = gene["kind"]
        if kind == "conv":
            if flat is not None:
                raise BuildError(f"layer {idx}: conv after the head was flattened")
            padding = gene["kernel"] // 2 if gene["padding"] == "same" else 0
            module = nn.Sequential(
                nn.Conv2d(c, gene["filters"], gene["kernel"], stride=gene["stride"], padding=padding),
                nn.ReLU(inplace=True),
            )
            if gene["padding"] == "valid":
                h, w = h - gene["kernel"] + 1, w - gene["kernel"] + 1
            if h < 1 or w < 1:
                raise BuildError(f"out of shape at layer {idx}")
            c = gene["filters"]
        elif kind == "pool":
            if flat is not None:
                raise BuildError(f"layer {idx}: pool after the head was flattened")
            h = (h - gene["window"]) // gene["stride"] + 1
            w = (w - gene["window"]) // gene["stride"] + 1
            if h < 1 or w < 1:
                raise BuildError(f"out of shape at layer {idx}")
            pool_cls = nn.MaxPool2d if gene["mode"] == "max" else nn.AvgPool2d
            module = pool_cls(gene["window"], gene["stride"])
        elif kind == "dense":
            dense_seen += 1
            # The final dense gene is the classifier: its width is the task's
            # class count and it emits logits (no activation).
            units = num_classes if dense_seen == dense_total else gene["units"]
            if flat is None:
                flat_in = h * w * c
                inner: list[nn.Module] = [nn.Flatten(), nn.Linear(flat_in, units)]
            else:
                inner = [nn.Linear(flat, units)]
            if dense_seen != dense_total:
                inner.append(nn.ReLU(inplace=True))
            module = nn.Sequential(*inner)
            flat = units
        elif kind == "batchnorm":
            module = nn.BatchNorm1d(flat) if flat is not None else nn.BatchNorm2d(c)
        elif kind == "dropout":
            module = nn.Dropout(float(gene["rate"]))
        else:  # unreachable after parse_genome
            raise BuildError(f"layer {idx}: unknown kind {kind!r}")
        modules.append(module)

    return BuiltModel(modules)
