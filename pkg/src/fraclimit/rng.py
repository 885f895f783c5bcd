"""Counter-based random streams (Philox4x32-10).

Every random draw in the package is addressed, not sequenced: a draw is
identified by (master seed, stream id, lane, draw index) and is produced by one
evaluation of the Philox4x32-10 block cipher on that address.  Streams never
share state, so particles can be processed in any chunking/worker arrangement
with bit-identical results, and adding draws in one lane never shifts the
draws of another.

Counter layout (four 32-bit words): (pid_lo, pid_hi, draw_index, lane).
Key: the 64-bit master seed split into two 32-bit words.

The block function follows the reference Philox4x32 constants and round
permutation and reproduces the published known-answer vectors (asserted in the
test suite).
"""

from __future__ import annotations

import numpy as np

# Philox4x32 round multipliers and Weyl key increments (reference constants).
PHILOX_M0 = np.uint64(0xD2511F53)
PHILOX_M1 = np.uint64(0xCD9E8D57)
PHILOX_W0 = np.uint64(0x9E3779B9)
PHILOX_W1 = np.uint64(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_ROUNDS = 10

# Lane ids: one address sub-space per logical purpose.
LANE_GENERIC = 0
LANE_INIT_POS = 1
LANE_INIT_VEL = 2
LANE_FLIGHT = 3
LANE_SCATTER = 4
LANE_WALL = 5

_INV_2_53 = 1.0 / 9007199254740992.0  # 2^-53


def philox4x32(c0, c1, c2, c3, k0, k1, rounds: int = _ROUNDS):
    """Philox4x32 block function, vectorized over numpy arrays.

    Inputs are counter words c0..c3 and key words k0, k1 (uint64 arrays or
    scalars holding 32-bit values).  Returns four uint64 arrays of 32-bit
    output words.
    """
    x0 = np.uint64(c0) & _MASK32
    x1 = np.uint64(c1) & _MASK32
    x2 = np.uint64(c2) & _MASK32
    x3 = np.uint64(c3) & _MASK32
    k0 = np.uint64(k0) & _MASK32
    k1 = np.uint64(k1) & _MASK32
    thirtytwo = np.uint64(32)
    for _ in range(rounds):
        p0 = PHILOX_M0 * x0
        p1 = PHILOX_M1 * x2
        hi0 = p0 >> thirtytwo
        lo0 = p0 & _MASK32
        hi1 = p1 >> thirtytwo
        lo1 = p1 & _MASK32
        x0 = hi1 ^ x1 ^ k0
        x1 = lo1
        x2 = hi0 ^ x3 ^ k1
        x3 = lo0
        k0 = (k0 + PHILOX_W0) & _MASK32
        k1 = (k1 + PHILOX_W1) & _MASK32
    return x0, x1, x2, x3


def _u53(a, b):
    # 53-bit uniform from two 32-bit words; (k + 0.5) * 2^-53 lies in the open
    # interval (0, 1), so log(u) and log1p(-u) are always finite.
    hi = (np.uint64(a) >> np.uint64(5)).astype(np.float64)  # 27 bits
    lo = (np.uint64(b) >> np.uint64(6)).astype(np.float64)  # 26 bits
    return (hi * 67108864.0 + lo + 0.5) * _INV_2_53


class PhiloxEngine:
    """Keyed, stateless draw engine: uniforms addressed by (pid, index, lane)."""

    def __init__(self, seed: int):
        seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.seed = seed
        self._k0 = np.uint64(seed & 0xFFFFFFFF)
        self._k1 = np.uint64((seed >> 32) & 0xFFFFFFFF)

    def block(self, pid, idx, lane):
        pid = np.asarray(pid, dtype=np.uint64)
        idx = np.asarray(idx, dtype=np.uint64)
        c0 = pid & _MASK32
        c1 = (pid >> np.uint64(32)) & _MASK32
        c2 = idx & _MASK32
        c3 = np.uint64(int(lane)) & _MASK32
        return philox4x32(c0, c1, c2, np.broadcast_to(c3, c0.shape), self._k0, self._k1)

    def u01(self, pid, idx, lane=LANE_GENERIC):
        """One uniform in (0,1) per element of pid/idx (consumes one index)."""
        x0, x1, _, _ = self.block(pid, idx, lane)
        return _u53(x0, x1)

    def u01x2(self, pid, idx, lane=LANE_GENERIC):
        """Two uniforms per element from a single block (consumes one index)."""
        x0, x1, x2, x3 = self.block(pid, idx, lane)
        return _u53(x0, x1), _u53(x2, x3)


class RandomStream:
    """Sequential view of one (pid, lane) stream with an advancing cursor.

    Explicit per-worker value: construct one per consumer, never shared
    implicitly.  `spawn` derives an independent stream for a different id
    without touching this one.
    """

    def __init__(self, seed: int, pid: int = 0, lane: int = LANE_GENERIC):
        self.engine = PhiloxEngine(seed)
        self.pid = int(pid)
        self.lane = int(lane)
        self.cursor = 0

    def spawn(self, pid: int, lane: int | None = None) -> "RandomStream":
        return RandomStream(self.engine.seed, pid, self.lane if lane is None else lane)

    def uniform(self, n: int | None = None):
        """n uniforms in (0,1) (scalar when n is None); advances the cursor."""
        count = 1 if n is None else int(n)
        assert count >= 0
        idx = np.uint64(self.cursor) + np.arange(count, dtype=np.uint64)
        self.cursor += count
        u = self.engine.u01(np.full(count, self.pid, dtype=np.uint64), idx, self.lane)
        return float(u[0]) if n is None else u

    def exponential(self, rate: float, n: int | None = None):
        """Exponential(rate) draws via inversion."""
        assert rate > 0.0
        u = self.uniform(n)
        return -np.log(u) / rate
