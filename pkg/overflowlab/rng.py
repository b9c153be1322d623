"""
Reproducible random streams for independent replications.

Replication `i` of a study seeded with `master_seed` draws from
`SeedSequence(entropy=master_seed, spawn_key=(i,))`. The seed sequence
hashes both values into the generator state, so streams depend only on
`(master_seed, i)` and never on how replications are spread over workers.
"""
from typing import Iterator

import numpy as np

BLOCK_SIZE = 4096


def replication_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    if master_seed < 0 or index < 0:
        raise ValueError(f"seeds must be non-negative, got master_seed={master_seed}, index={index}")
    return np.random.SeedSequence(entropy=master_seed, spawn_key=(index,))


def replication_generator(master_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(replication_seed(master_seed, index))


def uniforms(generator: np.random.Generator, block_size: int = BLOCK_SIZE) -> Iterator[float]:
    """Endless stream of U[0, 1) draws, fetched from `generator` in blocks."""
    while True:
        yield from generator.random(block_size).tolist()
