"""Finite windows of the two-sided spin sequence and its queue recursions.

A spin window is a finite view of a bi-infinite +-1 sequence, carried with an
explicit signed origin so that "coordinate 0" stays addressable wherever the
window sits.  The queue recursion

    q[n] = max(q[n-1] - spin[n], 0)

is seeded one step left of the window; its backward dual

    r[n-1] = max(r[n] - spin[n], 0)

is seeded one step inside the right edge.  Running the forward recursion from
the extreme seeds 0 and M bounds the path for every true seed in [0, M];
where the two paths merge they stay merged, and the computed values are exact
for any true seed at most M.  Under the stationary seed law the chance the
true seed exceeds M is rho**(M+1).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import BadConfig

DEFAULT_SEED_CAP = 40


@dataclass(frozen=True)
class ModelParams:
    """Spin law: P(spin = +1) = p with 1/2 < p < 1.

    rho = (1-p)/p in (0,1) is the ratio of the stationary geometric queue law
    P(q = x) = (1-rho) * rho**x, x >= 0.
    """

    p: float | Fraction

    def __post_init__(self):
        if not (Fraction(1, 2) < Fraction(self.p) < 1):
            raise BadConfig(f"p must lie in (1/2, 1), got {self.p}")

    @property
    def rho(self):
        if isinstance(self.p, Fraction):
            return (1 - self.p) / self.p
        return (1.0 - self.p) / self.p

    def seed_tail_bound(self, seed_cap: int):
        """P(stationary seed > seed_cap) = rho**(seed_cap+1)."""
        return self.rho ** (seed_cap + 1)


def _as_spins(values) -> np.ndarray:
    a = np.asarray(values, dtype=np.int64)
    if a.ndim != 1:
        raise BadConfig("spin values must be one-dimensional")
    if a.size and not np.all(np.abs(a) == 1):
        raise BadConfig("spin values must be +1 or -1")
    return a


@dataclass(frozen=True, eq=False)
class SpinWindow:
    """Finite view of a +-1 sequence; entry i sits at index origin + i."""

    values: np.ndarray
    origin: int = 1

    def __post_init__(self):
        object.__setattr__(self, "values", _as_spins(self.values))

    def __len__(self) -> int:
        return len(self.values)

    @property
    def end(self) -> int:
        """One past the last index."""
        return self.origin + len(self.values)

    def index_of(self, coordinate: int) -> int:
        """Array position of a bi-infinite coordinate."""
        if not self.origin <= coordinate < self.end:
            raise IndexError(f"coordinate {coordinate} outside [{self.origin}, {self.end})")
        return coordinate - self.origin

    def slice(self, lo: int, hi: int) -> "SpinWindow":
        """Sub-window on coordinates [lo, hi)."""
        if not (self.origin <= lo <= hi <= self.end):
            raise IndexError("slice outside window")
        return SpinWindow(self.values[lo - self.origin:hi - self.origin], lo)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SpinWindow)
            and self.origin == other.origin
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True, eq=False)
class WalkPath:
    """Partial sums of a spin window, anchored at 0 one step before origin."""

    values: np.ndarray
    origin: int

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, WalkPath)
            and self.origin == other.origin
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True, eq=False)
class QueuePath:
    """Forward queue values over a window; seed sits one step left of origin.

    certified_from is the first index at which a two-seed coupling merged
    (None for exact-seed runs over the whole window, or if it never merged).
    """

    seed: int
    values: np.ndarray
    origin: int
    certified_from: int | None = None

    def value_at(self, coordinate: int) -> int:
        if coordinate == self.origin - 1:
            return self.seed
        return int(self.values[coordinate - self.origin])

    @property
    def last(self) -> int:
        """Queue value at the right edge (the seed if the window is empty)."""
        return int(self.values[-1]) if len(self.values) else self.seed


@dataclass(frozen=True, eq=False)
class DualQueuePath:
    """Backward dual queue; values cover [origin, origin+len], the last entry
    being the right-edge seed."""

    seed_right: int
    values: np.ndarray
    origin: int
    certified_until: int | None = None


def walk_from_spins(spins: SpinWindow) -> WalkPath:
    """Cumulative sums of the spins, anchored at 0 one step before origin."""
    return WalkPath(np.cumsum(spins.values, dtype=np.int64), spins.origin)


def lindley_values(seed: int, spins: np.ndarray) -> np.ndarray:
    """Closed form of the forward recursion.

    With partial sums S[n] (S[0] = 0), q[n] = max(seed, max_{i<=n} S[i]) - S[n].
    """
    if seed < 0:
        raise BadConfig("seed must be nonnegative")
    s = np.cumsum(spins, dtype=np.int64)
    if len(s) == 0:
        return s
    run = np.maximum.accumulate(np.maximum(s, 0))
    return np.maximum(seed, run) - s


def lindley_values_batch(seeds, spins2d: np.ndarray) -> np.ndarray:
    """Row-wise forward recursion: seeds (n,) or scalar, spins2d (n, L)."""
    s = np.cumsum(spins2d, axis=1, dtype=np.int64)
    run = np.maximum.accumulate(np.maximum(s, 0), axis=1)
    seeds = np.asarray(seeds, dtype=np.int64).reshape(-1, 1)
    return np.maximum(seeds, run) - s


def forward_lindley(seed: int, spins: SpinWindow) -> QueuePath:
    """Run q[n] = max(q[n-1] - spin[n], 0) with q[origin-1] = seed."""
    vals = lindley_values(seed, spins.values)
    return QueuePath(seed, vals, spins.origin, certified_from=None)


def backward_lindley(seed_right: int, sigma: SpinWindow) -> DualQueuePath:
    """Run r[n-1] = max(r[n] - sigma[n], 0) leftward from the right edge.

    Returned values cover [origin-1, origin+len-1]; the last entry equals
    seed_right.  The dual queue measures distance to the future minimum of
    the walk 2s - x built from sigma.
    """
    if seed_right < 0:
        raise BadConfig("seed_right must be nonnegative")
    rev = lindley_values(seed_right, sigma.values[::-1])
    vals = np.concatenate([rev[::-1], [np.int64(seed_right)]])
    return DualQueuePath(seed_right, vals, sigma.origin - 1, certified_until=None)


def sample_stationary_seed(params: ModelParams, rng: np.random.Generator,
                           size: int | None = None):
    """Draw from the stationary queue law P(x) = (1-rho) * rho**x, x >= 0."""
    rho = float(params.rho)
    draws = rng.geometric(1.0 - rho, size=size)
    return draws - 1


def coupled_lindley(seed_high: int, spins: SpinWindow,
                    seed_low: int = 0) -> tuple[QueuePath, int | None]:
    """Forward recursion from two seeds; returns the low path and the first
    index where the paths merge (None if they never do inside the window).

    By monotonicity the gap between the paths never grows, so past the merge
    index the low path is exact for every true seed in [seed_low, seed_high].
    """
    if not 0 <= seed_low <= seed_high:
        raise BadConfig("need 0 <= seed_low <= seed_high")
    low = lindley_values(seed_low, spins.values)
    high = lindley_values(seed_high, spins.values)
    eq = low == high
    if eq.any():
        certified_from = spins.origin + int(np.argmax(eq))
    else:
        certified_from = None
    return QueuePath(seed_low, low, spins.origin, certified_from), certified_from


def coupled_backward_lindley(seed_high: int, sigma: SpinWindow,
                             seed_low: int = 0) -> tuple[DualQueuePath, int | None]:
    """Two-seed version of the backward dual; certification grows leftward.

    Returns the low path and the last index (in the dual path's coordinates,
    which include origin-1) at which the two paths agree; they agree at every
    index to its left as well.
    """
    if not 0 <= seed_low <= seed_high:
        raise BadConfig("need 0 <= seed_low <= seed_high")
    low = backward_lindley(seed_low, sigma)
    high = backward_lindley(seed_high, sigma)
    eq = low.values == high.values
    if eq.any():
        # equality holds on a left segment; find its right end
        idx = np.nonzero(~eq)[0]
        last_equal = len(eq) - 1 if len(idx) == 0 else int(idx[0]) - 1
        certified_until = low.origin + last_equal if last_equal >= 0 else None
    else:
        certified_until = None
    dual = DualQueuePath(seed_low, low.values, low.origin, certified_until)
    return dual, certified_until
