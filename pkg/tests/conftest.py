"""Shared test oracles and random-genome builders.

The parameter oracle here is intentionally independent of the library's
analytic formulas: it materializes every weight tensor's dimensions as numpy
arrays and counts their entries.
"""

from __future__ import annotations

import random

import numpy as np

from evolen.genome import Block, Genome, batchnorm, conv, dense, dropout, iter_genes, pool


def oracle_param_count(genome: Genome, input_shape: tuple[int, int, int]) -> int:
    """Brute-force learnable-parameter count via materialized tensor shapes."""
    h, w, c = input_shape
    total = 0
    flat = None
    for _, _, gene in iter_genes(genome):
        if gene.kind == "conv":
            kernel_tensor = np.zeros((gene.kernel, gene.kernel, c, gene.filters), dtype=np.int8)
            bias = np.zeros((gene.filters,), dtype=np.int8)
            total += kernel_tensor.size + bias.size
            if gene.padding == "valid":
                h, w = h - gene.kernel + 1, w - gene.kernel + 1
            c = gene.filters
        elif gene.kind == "pool":
            h = (h - gene.window) // gene.stride + 1
            w = (w - gene.window) // gene.stride + 1
        elif gene.kind == "dense":
            if flat is None:
                flat = h * w * c
            weight = np.zeros((flat, gene.units), dtype=np.int8)
            bias = np.zeros((gene.units,), dtype=np.int8)
            total += weight.size + bias.size
            flat = gene.units
        elif gene.kind == "batchnorm":
            width = flat if flat is not None else c
            total += np.zeros((2, width), dtype=np.int8).size
    return total


def random_valid_genome(
    rng: random.Random,
    max_blocks: int = 4,
    num_classes: int = 10,
    with_regularizers: bool = True,
) -> Genome:
    """A random grammar-valid genome, assembled gene by gene (no reuse of the
    library's candidate or population builders)."""
    blocks = []
    for _ in range(rng.randint(0, max_blocks)):
        n_conv = rng.randint(1, 3)
        n_pool = rng.randint(0, 3 - n_conv)
        layers = [
            conv(filters=rng.choice((16, 32, 64, 128)), kernel=rng.choice((3, 5)))
            for _ in range(n_conv)
        ]
        layers += [pool(mode=rng.choice(("max", "avg"))) for _ in range(n_pool)]
        blocks.append(Block(kind="feature", layers=tuple(layers)))

    head = []
    for _ in range(rng.randint(0, 2)):
        head.append(dense(units=rng.choice((64, 128, 256))))
        if with_regularizers and rng.random() < 0.5:
            head.append(batchnorm())
        if with_regularizers and rng.random() < 0.5:
            head.append(dropout())
    head.append(dense(num_classes))
    blocks.append(Block(kind="head", layers=tuple(head)))
    return Genome(blocks=tuple(blocks))
