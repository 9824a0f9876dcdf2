"""Continuous-time M/M/1 simulation and the Brownian analogue.

The queue is driven by two independent Poisson streams (arrivals at rate
lambda, service opportunities at rate xi > lambda) and started from its
stationary law, so every in-window statistic is exact in law.  Departures
are the service epochs that find a nonempty queue; the complement stream
(arrivals plus idle service epochs) pairs with the departures the way the
original (arrival, service) pair does.

The Brownian version replaces the walk by a drifting Brownian motion X and
the queue by M - X with M the running maximum over the infinite past.  On a
grid, M is sampled exactly in law by augmenting each cell with the maximum
of the Brownian bridge between its endpoints and seeding the pre-window
supremum with an independent exponential excess.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadConfig, DegenerateWindow
from .lindley import SpinWindow, lindley_values

ARRIVAL = -1
SERVICE = 1


@dataclass(frozen=True)
class Mm1Params:
    """Arrival intensity lam and service intensity xi, with 0 < lam < xi."""

    lam: float
    xi: float

    def __post_init__(self):
        if not (0.0 < self.lam < self.xi):
            raise BadConfig(f"need 0 < lambda < xi, got {self.lam}, {self.xi}")

    @property
    def spin_prob(self) -> float:
        """P(+1) of the embedded walk: xi / (lambda + xi)."""
        return self.xi / (self.lam + self.xi)

    @property
    def queue_ratio(self) -> float:
        """Ratio of the stationary queue law: lambda / xi."""
        return self.lam / self.xi


@dataclass(frozen=True, eq=False)
class EventStream:
    """Time-sorted marked events on a window; marks: -1 arrival, +1 service."""

    times: np.ndarray
    marks: np.ndarray
    window: tuple[float, float]

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        m = np.asarray(self.marks, dtype=np.int64)
        if t.shape != m.shape:
            raise BadConfig("times and marks must align")
        if len(t) and np.any(np.diff(t) <= 0):
            raise BadConfig("event times must be strictly increasing")
        lo, hi = self.window
        if len(t) and (t[0] <= lo or t[-1] > hi):
            raise BadConfig("event outside window")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "marks", m)

    def __len__(self) -> int:
        return len(self.times)


@dataclass(frozen=True, eq=False)
class QueueTrajectory:
    """Queue length at the window start and after each event."""

    initial: int
    steps: np.ndarray

    @property
    def final(self) -> int:
        return int(self.steps[-1]) if len(self.steps) else self.initial


@dataclass(frozen=True, eq=False)
class PointProcess:
    times: np.ndarray
    window: tuple[float, float]

    def count(self, lo: float, hi: float) -> int:
        """Number of points in (lo, hi]."""
        return int(np.count_nonzero((self.times > lo) & (self.times <= hi)))


@dataclass(frozen=True, eq=False)
class Mm1Result:
    events: EventStream
    queue: QueueTrajectory
    departures: PointProcess
    complement: PointProcess


def _poisson_times(rate: float, lo: float, hi: float,
                   rng: np.random.Generator) -> np.ndarray:
    gaps = []
    t = lo
    scale = 1.0 / rate
    while True:
        block = rng.exponential(scale, size=max(8, int((hi - t) * rate * 1.5) + 8))
        for g in block:
            t += g
            if t > hi:
                return np.array(gaps, dtype=float)
            gaps.append(t)


def simulate_mm1(params: Mm1Params, window: tuple[float, float],
                 rng: np.random.Generator) -> Mm1Result:
    """Simulate a stationary M/M/1 queue on a window.

    The initial queue is drawn from the geometric stationary law with ratio
    lambda/xi, independent of the in-window events.  Departures are the
    service epochs with a positive queue; the complement holds the arrivals
    and the idle service epochs.  The counting identity

        D(s, t] = Q(s) + A(s, t] - Q(t)

    holds exactly along every simulated path.
    """
    lo, hi = window
    if not hi > lo:
        raise DegenerateWindow(f"window [{lo}, {hi}] is empty")
    arrivals = _poisson_times(params.lam, lo, hi, rng)
    services = _poisson_times(params.xi, lo, hi, rng)
    # simultaneous events are measure-zero; resample on float collision
    while len(np.intersect1d(arrivals, services)):
        services = _poisson_times(params.xi, lo, hi, rng)
    times = np.concatenate([arrivals, services])
    marks = np.concatenate([np.full(len(arrivals), ARRIVAL, dtype=np.int64),
                            np.full(len(services), SERVICE, dtype=np.int64)])
    order = np.argsort(times, kind="stable")
    times, marks = times[order], marks[order]

    ratio = params.queue_ratio
    q0 = int(rng.geometric(1.0 - ratio) - 1)
    qvals = lindley_values(q0, marks)
    q_prev = np.concatenate([[np.int64(q0)], qvals[:-1]])

    dep_mask = (marks == SERVICE) & (q_prev > 0)
    events = EventStream(times, marks, window)
    queue = QueueTrajectory(q0, qvals)
    departures = PointProcess(times[dep_mask], window)
    complement = PointProcess(times[~dep_mask], window)
    return Mm1Result(events, queue, departures, complement)


def extract_embedded_walk(events: EventStream) -> SpinWindow:
    """One spin per event in time order: +1 service, -1 arrival.

    The spins are i.i.d. with P(+1) = xi / (lambda + xi), and feeding them to
    the discrete pipeline reproduces the departure structure: the transform
    output is +1 exactly at complement events and -1 exactly at departures.
    """
    return SpinWindow(events.marks.copy(), 1)


def counting_identity_violations(result: Mm1Result) -> int:
    """Number of event positions violating D(s,t] = Q(s) + A(s,t] - Q(t).

    Equivalent to: cumulative departures minus cumulative arrivals plus the
    queue is constant along the path.
    """
    marks = result.events.marks
    qvals = result.queue.steps
    q_prev = np.concatenate([[np.int64(result.queue.initial)], qvals[:-1]])
    cum_d = np.cumsum((marks == SERVICE) & (q_prev > 0))
    cum_a = np.cumsum(marks == ARRIVAL)
    const = cum_d - cum_a + qvals
    return int(np.count_nonzero(const != result.queue.initial))


@dataclass(frozen=True)
class BrownianConfig:
    """Grid parameters for the two-sided drifting Brownian motion.

    nu is the drift, h the grid step, and the window runs from -t_past to
    t_fut.  bridge=False replaces the exact bridge-augmented running maximum
    by the plain grid maximum (biased; kept for comparison).
    """

    nu: float
    h: float
    t_past: float
    t_fut: float = 1.0
    bridge: bool = True

    def __post_init__(self):
        if self.nu <= 0 or self.h <= 0 or self.t_past <= 0 or self.t_fut < 0:
            raise BadConfig("need nu > 0, h > 0, t_past > 0, t_fut >= 0")

    @property
    def n_past(self) -> int:
        return int(round(self.t_past / self.h))

    @property
    def n_fut(self) -> int:
        return int(round(self.t_fut / self.h))


@dataclass(frozen=True, eq=False)
class BrownianGrid:
    """Sampled paths on the grid; arrays are (paths, n_past + n_fut + 1).

    X is anchored to 0 at time 0 (column origin_index); M is the running
    maximum over the whole past including the pre-window supremum seed
    X(-t_past) + past_tail with past_tail exponential of rate 2 nu.
    """

    config: BrownianConfig
    X: np.ndarray
    M: np.ndarray
    past_tail: np.ndarray

    @property
    def origin_index(self) -> int:
        return self.config.n_past

    @property
    def times(self) -> np.ndarray:
        n = self.X.shape[1]
        return (np.arange(n) - self.origin_index) * self.config.h

    def column(self, t: float) -> int:
        j = self.origin_index + int(round(t / self.config.h))
        if not 0 <= j < self.X.shape[1]:
            raise BadConfig(f"time {t} outside grid")
        return j


def simulate_two_sided_bm(config: BrownianConfig, rng: np.random.Generator,
                          paths: int = 1) -> BrownianGrid:
    """Sample Brownian paths with their running maxima, exact in law on the grid.

    Between grid points the maximum of the connecting Brownian bridge is
    drawn by inverse CDF; the supremum over the pre-window past is seeded as
    X(-t_past) plus an independent exponential excess of rate 2 nu.
    """
    n = config.n_past + config.n_fut
    if n < 1:
        raise BadConfig("grid needs at least one step")
    h, nu = config.h, config.nu
    inc = rng.normal(nu * h, math.sqrt(h), size=(paths, n))
    x = np.concatenate([np.zeros((paths, 1)), np.cumsum(inc, axis=1)], axis=1)
    x -= x[:, config.n_past:config.n_past + 1]
    tail = rng.exponential(1.0 / (2.0 * nu), size=paths)
    seed = x[:, 0] + tail
    if config.bridge:
        a, b = x[:, :-1], x[:, 1:]
        u = rng.random(size=(paths, n))
        cell_max = 0.5 * (a + b + np.sqrt((b - a) ** 2 - 2.0 * h * np.log1p(-u)))
    else:
        cell_max = np.maximum(x[:, :-1], x[:, 1:])
    running = np.maximum(seed[:, None], np.maximum.accumulate(cell_max, axis=1))
    m = np.concatenate([seed[:, None], running], axis=1)
    return BrownianGrid(config, x, m, tail)


def brownian_burke_transform(grid: BrownianGrid) -> np.ndarray:
    """The reflected paths Y = 2M - X - 2M(0) on the grid.

    Y(0) = 0 exactly; Y has the law of X, and its restriction to t <= 0 is
    independent of M(0), which is exponential with rate 2 nu.
    """
    m0 = grid.M[:, grid.origin_index:grid.origin_index + 1]
    return 2.0 * grid.M - grid.X - 2.0 * m0
