"""Counter-based random numbers (Philox4x32-10) for reproducible generation.

Every draw is a pure function of ``(seed, stream, index)``: the 128-bit
counter is ``(index_lo, index_hi, stream, 0)`` and the 64-bit key is the seed.
Item ``i`` of a generated dataset therefore gets the same numbers no matter
how many items are generated, in which order, or on which platform.

Streams used by this package:

==========  ==================================================
stream      purpose
==========  ==================================================
1           confidence / true-probability draw
2           correctness (Bernoulli outcome) draw
3           rare-slice membership draw
4           Gaussian logit draw
0x10000+r   workflow replication ``r`` outcome resampling
==========  ==================================================
"""

from __future__ import annotations

import numpy as np
from scipy import special

STREAM_CONFIDENCE = 1
STREAM_OUTCOME = 2
STREAM_SLICE = 3
STREAM_GAUSSIAN = 4
STREAM_REPLICATION_BASE = 0x10000

_MASK32 = np.uint64(0xFFFFFFFF)
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85


def philox4x32(counter: np.ndarray, key: tuple[int, int], rounds: int = 10) -> np.ndarray:
    """Apply the Philox4x32 bijection to an ``(N, 4)`` array of uint32 counters."""
    ctr = np.asarray(counter, dtype=np.uint64).reshape(-1, 4)
    c0, c1, c2, c3 = (ctr[:, j].copy() for j in range(4))
    k0, k1 = int(key[0]) & 0xFFFFFFFF, int(key[1]) & 0xFFFFFFFF
    for r in range(rounds):
        if r:
            k0 = (k0 + _W0) & 0xFFFFFFFF
            k1 = (k1 + _W1) & 0xFFFFFFFF
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> np.uint64(32)) ^ c1 ^ np.uint64(k0),
            p1 & _MASK32,
            (p0 >> np.uint64(32)) ^ c3 ^ np.uint64(k1),
            p0 & _MASK32,
        )
    return np.stack([c0, c1, c2, c3], axis=1).astype(np.uint32)


def _key(seed: int) -> tuple[int, int]:
    if seed < 0 or seed >= 1 << 64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed & 0xFFFFFFFF, seed >> 32


def uniform(seed: int, stream: int, indices, lane: int = 0) -> np.ndarray:
    """Uniform doubles in the open interval (0, 1), one per index.

    Each Philox block yields two 53-bit doubles; ``lane`` (0 or 1) picks which.
    """
    if lane not in (0, 1):
        raise ValueError("lane must be 0 or 1")
    idx = np.asarray(indices, dtype=np.uint64).ravel()
    ctr = np.zeros((idx.size, 4), dtype=np.uint64)
    ctr[:, 0] = idx & _MASK32
    ctr[:, 1] = idx >> np.uint64(32)
    ctr[:, 2] = np.uint64(stream & 0xFFFFFFFF)
    words = philox4x32(ctr, _key(seed)).astype(np.uint64)
    hi, lo = words[:, 2 * lane], words[:, 2 * lane + 1]
    bits53 = ((hi << np.uint64(32)) | lo) >> np.uint64(11)
    return (bits53.astype(np.float64) + 0.5) * 2.0**-53


def beta(seed: int, stream: int, indices, a: float, b: float) -> np.ndarray:
    """Beta(a, b) draws by inverse CDF of counter-based uniforms."""
    return special.betaincinv(a, b, uniform(seed, stream, indices))


def normal(seed: int, stream: int, indices, std: float = 1.0) -> np.ndarray:
    """Zero-mean Gaussian draws by inverse CDF."""
    return std * special.ndtri(uniform(seed, stream, indices))
