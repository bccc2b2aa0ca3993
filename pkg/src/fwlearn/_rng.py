"""Counter-based seeding so each trajectory owns an independent stream."""
import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x):
    x = (x + _GOLDEN) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def stream_seed(master_seed, index):
    """64-bit seed for trajectory ``index`` derived from ``master_seed``."""
    if master_seed < 0 or index < 0:
        raise ValueError("seed and index must be non-negative")
    return splitmix64(splitmix64(master_seed & _MASK) ^ (index & _MASK))


def stream(master_seed, index):
    return np.random.default_rng(stream_seed(master_seed, index))
