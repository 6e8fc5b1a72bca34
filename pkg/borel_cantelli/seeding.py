"""Per-replication random streams derived from one master seed."""

from typing import List, Sequence

import numpy as np

SEED_MASK = (1 << 64) - 1


def seed_sequence(master_seed: int, index: int) -> np.random.SeedSequence:
    """SeedSequence for replication `index`; independent of how many replications run."""
    return np.random.SeedSequence(entropy=int(master_seed) & SEED_MASK, spawn_key=(int(index),))


def derive_seed(master_seed: int, index: int) -> int:
    """64-bit seed of replication `index`, mixed from (master_seed, index)."""
    return int(seed_sequence(master_seed, index).generate_state(1, np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(int(seed) & SEED_MASK)


def replication_rngs(master_seed: int, indices: Sequence[int]) -> List[np.random.Generator]:
    return [make_rng(derive_seed(master_seed, i)) for i in indices]
