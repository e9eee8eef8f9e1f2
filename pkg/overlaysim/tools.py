"""Small helpers shared by the experiment code: seed splitting, value
lists and worker limits.
"""
import math
import os
from typing import Iterable, Sequence, Tuple, Union
import libaaron
import numpy as np

THREADS_ENV = "OVERLAY_SIM_THREADS"

SeedKey = Union[int, str]


def _key_int(key: SeedKey) -> int:
    if isinstance(key, str):
        # stable across processes, unlike hash()
        return int.from_bytes(key.encode("utf8")[:8].ljust(8, b"\0"), "big")
    return int(key)


def derive_seed(seed: int, *keys: SeedKey) -> int:
    """split a base seed into an independent 64-bit child seed.

    The child is ``SeedSequence(seed, spawn_key=keys)`` reduced to 64 bits,
    so (seed, keys) always maps to the same stream no matter which process
    asks for it.
    """
    seq = np.random.SeedSequence(
        int(seed) % 2**128, spawn_key=tuple(_key_int(k) for k in keys)
    )
    lo, hi = seq.generate_state(2, dtype=np.uint32)
    return int(hi) << 32 | int(lo)


def rng_for(seed: int, *keys: SeedKey) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *keys))


def parse_values(values, cast=float) -> Tuple:
    """turn "500,1000", [500, [1000, 2000]] or 4000 into a flat tuple."""
    if values is None:
        return ()
    if isinstance(values, str):
        values = [v for v in values.replace(";", ",").split(",") if v.strip()]
    elif not isinstance(values, Iterable):
        values = [values]
    return tuple(cast(v) for v in libaaron.flatten(values))


def fsum_mean(values: Sequence[float]) -> float:
    """order-independent mean, so merged records do not depend on which
    worker finished first.
    """
    if not len(values):
        return math.nan
    return math.fsum(values) / len(values)


def max_workers(default: int = 0) -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return default or os.cpu_count() or 1
