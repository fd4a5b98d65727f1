import numpy as np


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """
    Independent Generator for the stream (seed, *keys).

    Chunk k of a Monte Carlo run uses derive_rng(seed, k), so the split of
    chunks across workers never changes the numbers drawn.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))
