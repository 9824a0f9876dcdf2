"""Iterated random functions: reversible families, exact stationary sampling
by backward coupling, and the relabelled-innovation construction.

A family supplies maps f[theta] on a state space, a label law kappa, and a
recovery function F with F(r, f_theta(r)) = theta.  Composing maps backward
in time converges to a stationary state; seeding a window's right edge with
it and recursing leftward yields a stationary two-sided stretch z together
with its driving labels.  Reading the transitions forward,

    eta[n] = F(z[n-1], z[n]),

the relabelled sequence has law kappa and is independent of z[0] whenever
the induced chain is reversible.  A non-reversible family is shipped as a
negative control: its forward pairs are sometimes unlabellable and the
labellable ones carry the wrong law.

Coalescence detection follows coupling-from-the-past discipline: the same
draws are reused when the past is extended, monotone families track the two
extreme trajectories, finite families track the full state-set image.  For
monotone families without a top element (the reflected walk), trajectories
start from a cap state instead; the stationary mass above the cap is bounded
by the family's tail bound and reported, never silently ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BadConfig, NoCoalescence, UnrealizablePair

DEFAULT_STATE_CAP = 64


class IrfFamily:
    """Behavioural contract shared by the shipped families.

    Subclasses define thetas (label values), kappa (label law), apply and
    recover (both numpy-vectorized), and either a finite `states` array or
    a monotone order via `bottom` (plus `top` or a tail-bounded cap).
    """

    name: str = "family"
    thetas: np.ndarray
    kappa: np.ndarray
    states: np.ndarray | None = None
    bottom: int | None = None
    top: int | None = None

    def apply(self, theta, state):
        raise NotImplementedError

    def recover(self, prev_state, next_state):
        """Return (labels, valid mask) for transitions prev -> next."""
        raise NotImplementedError

    def apply_index(self, theta_index, state):
        return self.apply(np.asarray(self.thetas)[theta_index], state)

    def tail_bound(self, cap: int) -> float:
        """P(stationary state above cap); 0 for finite state spaces."""
        return 0.0

    def start_states(self, cap: int, width: int) -> np.ndarray:
        """Trajectory starting points for coalescence tracking, (k, width)."""
        if self.states is not None:
            return np.repeat(self.states[:, None], width, axis=1)
        if self.bottom is None:
            raise BadConfig(f"{self.name}: no enumeration and no order")
        top = self.top if self.top is not None else cap
        return np.repeat(np.array([[self.bottom], [top]]), width, axis=1)

    def draw_labels(self, rng: np.random.Generator, shape) -> np.ndarray:
        cum = np.cumsum(self.kappa)
        return np.searchsorted(cum, rng.random(shape)).astype(np.int64)


class ReflectedWalkFamily(IrfFamily):
    """f[theta](x) = max(x + theta, 0) on the nonnegative integers.

    Labels are +-1 with kappa(+1) = up_prob < 1/2 (here +1 raises the state,
    so it plays the arrival role; the discrete-pipeline spin is the negated
    label).  Detailed balance gives a geometric stationary law with ratio
    up_prob / (1 - up_prob).
    """

    def __init__(self, up_prob: float):
        if not 0.0 < up_prob < 0.5:
            raise BadConfig("up_prob must lie in (0, 1/2)")
        self.up_prob = float(up_prob)
        self.name = f"reflected_walk_q{up_prob:g}"
        self.thetas = np.array([-1, 1], dtype=np.int64)
        self.kappa = np.array([1.0 - up_prob, up_prob])
        self.bottom = 0

    def apply(self, theta, state):
        return np.maximum(np.asarray(state) + np.asarray(theta), 0)

    def recover(self, prev_state, next_state):
        prev = np.asarray(prev_state)
        nxt = np.asarray(next_state)
        diff = nxt - prev
        theta = np.where(diff == 0, -1, diff)
        valid = (np.abs(diff) == 1) | ((prev == 0) & (nxt == 0))
        return theta.astype(np.int64), valid

    def stationary_ratio(self) -> float:
        """Detailed-balance solution: P(x+1)/P(x) = q / (1 - q)."""
        return self.up_prob / (1.0 - self.up_prob)

    def tail_bound(self, cap: int) -> float:
        # standard exponential (Lundberg) bound for the all-time maximum of
        # the negative-drift walk; needs no knowledge of the exact law
        return self.stationary_ratio() ** (cap + 1)


class BirthDeathFamily(IrfFamily):
    """Clipped +-1 moves on {0, ..., size-1} with symmetric label law.

    The top state absorbs up-moves (f[+1](top) = top) and the bottom absorbs
    down-moves, so recover(top, top) = +1 and recover(0, 0) = -1.  Any birth-
    death chain is reversible; with symmetric labels the stationary law is
    uniform.
    """

    def __init__(self, size: int = 6, up_prob: float = 0.5):
        if size < 2 or not 0.0 < up_prob < 1.0:
            raise BadConfig("need size >= 2 and up_prob in (0, 1)")
        self.size = size
        self.name = f"birth_death_{size}"
        self.thetas = np.array([-1, 1], dtype=np.int64)
        self.kappa = np.array([1.0 - up_prob, up_prob])
        self.states = np.arange(size, dtype=np.int64)
        self.bottom, self.top = 0, size - 1

    def apply(self, theta, state):
        return np.clip(np.asarray(state) + np.asarray(theta), 0, self.size - 1)

    def recover(self, prev_state, next_state):
        prev = np.asarray(prev_state)
        nxt = np.asarray(next_state)
        diff = nxt - prev
        theta = np.where(diff == 0, np.where(prev == 0, -1, 1), diff)
        valid = (np.abs(diff) == 1) | ((prev == 0) & (nxt == 0)) \
            | ((prev == self.size - 1) & (nxt == self.size - 1))
        return theta.astype(np.int64), valid


class AsymmetricCycleFamily(IrfFamily):
    """Non-reversible negative control on {0, 1, 2}.

    Label 0 rotates the cycle (0->1->2->0); label 1 contracts (0,1 -> 0,
    2 -> 2).  The induced chain has a unique stationary law but carries a
    net cycle flow, so detailed balance fails: forward-read transitions are
    sometimes unlabellable, and the labellable ones do not follow kappa.
    """

    _table = np.array([[1, 2, 0],
                       [0, 0, 2]], dtype=np.int64)

    def __init__(self):
        self.name = "asymmetric_cycle"
        self.thetas = np.array([0, 1], dtype=np.int64)
        self.kappa = np.array([0.5, 0.5])
        self.states = np.arange(3, dtype=np.int64)

    def apply(self, theta, state):
        return self._table[np.asarray(theta), np.asarray(state)]

    def recover(self, prev_state, next_state):
        prev = np.asarray(prev_state)
        nxt = np.asarray(next_state)
        hit0 = self._table[0, prev] == nxt
        hit1 = self._table[1, prev] == nxt
        theta = np.where(hit1, 1, 0)
        return theta.astype(np.int64), hit0 | hit1


def sample_stationary_states(family: IrfFamily, count: int,
                             rng: np.random.Generator,
                             cap: int = DEFAULT_STATE_CAP,
                             block: int = 64,
                             max_rounds: int = 12) -> np.ndarray:
    """Draw `count` independent stationary states by backward coupling.

    Extends draws into the past in doubling rounds, reusing earlier draws,
    until every tracked trajectory bundle coalesces.  The result is exact in
    law up to the family's reported tail bound at `cap` (zero for finite
    families).  Raises NoCoalescence if the round cap is reached.
    """
    result = np.empty(count, dtype=np.int64)
    pending = np.arange(count)
    draws = family.draw_labels(rng, (count, block))
    rounds = 0
    while len(pending):
        states = family.start_states(cap, len(pending))
        for t in range(draws.shape[1]):
            states = family.apply_index(draws[:, t], states)
        merged = np.all(states == states[0:1, :], axis=0)
        result[pending[merged]] = states[0, merged]
        pending = pending[~merged]
        draws = draws[~merged]
        if not len(pending):
            break
        rounds += 1
        if rounds > max_rounds:
            raise NoCoalescence(
                f"{family.name}: {len(pending)} of {count} samples did not "
                f"coalesce within {draws.shape[1]} backward steps")
        fresh = family.draw_labels(rng, (len(pending), draws.shape[1]))
        draws = np.concatenate([fresh, draws], axis=1)
    return result


@dataclass(frozen=True, eq=False)
class StatePath:
    """A stationary window z[0..L] with its driving labels.

    labels[i] carries state z[i+1] to z[i]: z[i] = f[labels[i]](z[i+1]).
    The rightmost state is an exact stationary draw seeded by backward
    coupling with fresh label draws beyond the window.
    """

    states: np.ndarray
    labels: np.ndarray
    tail_bound: float = 0.0


def stationary_path(family: IrfFamily, labels, rng: np.random.Generator,
                    cap: int = DEFAULT_STATE_CAP) -> StatePath:
    """Extend given window labels into a stationary state window.

    The rightmost state is drawn by backward coupling, then the recursion
    z[i] = f[labels[i]](z[i+1]) fills the window leftward, jointly exact in
    law with the supplied labels.
    """
    labels = np.asarray(labels, dtype=np.int64)
    seed = sample_stationary_states(family, 1, rng, cap=cap)[0]
    length = len(labels)
    states = np.empty(length + 1, dtype=np.int64)
    states[length] = seed
    for i in range(length - 1, -1, -1):
        states[i] = family.apply(family.thetas[labels[i]], states[i + 1])
    return StatePath(states, labels, family.tail_bound(cap))


def forward_labels(family: IrfFamily, path: StatePath) -> np.ndarray:
    """Relabel the window's transitions read forward.

    label[i] satisfies z[i+1] = f[label[i]](z[i]); raises UnrealizablePair if
    some forward pair admits no label, which signals a family that violates
    the reversibility premise.
    """
    theta, valid = family.recover(path.states[:-1], path.states[1:])
    if not np.all(valid):
        bad = int(np.count_nonzero(~valid))
        raise UnrealizablePair(
            f"{family.name}: {bad} forward pair(s) admit no label")
    check = family.apply(theta, path.states[:-1])
    if not np.array_equal(np.asarray(check), path.states[1:]):
        raise UnrealizablePair(f"{family.name}: recover/apply mismatch")
    return theta


def stationary_windows(family: IrfFamily, count: int, length: int,
                       rng: np.random.Generator,
                       cap: int = DEFAULT_STATE_CAP) -> tuple[np.ndarray, np.ndarray]:
    """Batch of stationary windows: states (count, length+1) and the label
    indices (count, length) that drive them right to left."""
    seeds = sample_stationary_states(family, count, rng, cap=cap)
    labels = family.draw_labels(rng, (count, length))
    states = np.empty((count, length + 1), dtype=np.int64)
    states[:, length] = seeds
    for i in range(length - 1, -1, -1):
        states[:, i] = family.apply_index(labels[:, i], states[:, i + 1])
    return states, labels


@dataclass
class RelabelSample:
    """Forward relabelling of a batch of stationary windows."""

    left_states: np.ndarray       # z[0] per window
    labels: np.ndarray            # label indices, -1 where unlabellable
    valid_windows: np.ndarray     # windows whose every pair was labellable
    unrealizable: int             # total unlabellable pairs


def relabel_windows(family: IrfFamily, states: np.ndarray) -> RelabelSample:
    """Vectorized forward relabelling with explicit invalid accounting."""
    theta, valid = family.recover(states[:, :-1], states[:, 1:])
    theta_idx = np.searchsorted(np.asarray(family.thetas), theta)
    theta_idx = np.where(valid, theta_idx, -1)
    return RelabelSample(
        left_states=states[:, 0].copy(),
        labels=theta_idx,
        valid_windows=np.all(valid, axis=1),
        unrealizable=int(np.count_nonzero(~valid)),
    )


def transition_matrix(family: IrfFamily) -> np.ndarray:
    """Label-averaged transition matrix of a finite family."""
    if family.states is None:
        raise BadConfig(f"{family.name} has no finite enumeration")
    k = len(family.states)
    mat = np.zeros((k, k))
    for idx, prob in enumerate(family.kappa):
        nxt = family.apply(family.thetas[idx], family.states)
        for s, t in zip(family.states, np.asarray(nxt)):
            mat[int(s), int(t)] += prob
    return mat


def stationary_distribution(matrix: np.ndarray) -> np.ndarray:
    """Stationary law of a finite chain by linear solve."""
    k = matrix.shape[0]
    a = np.vstack([matrix.T - np.eye(k), np.ones(k)])
    b = np.concatenate([np.zeros(k), [1.0]])
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    return np.maximum(pi, 0.0) / np.maximum(pi, 0.0).sum()


def is_reversible(family: IrfFamily, tol: float = 1e-12) -> bool:
    """Detailed-balance check for finite families."""
    mat = transition_matrix(family)
    pi = stationary_distribution(mat)
    flow = pi[:, None] * mat
    return bool(np.max(np.abs(flow - flow.T)) <= tol)


def spin_to_label(spins: np.ndarray) -> np.ndarray:
    """Bridge between the discrete pipeline and the reflected-walk family.

    A +1 spin lowers the queue while a +1 label raises the state, so the
    label is the negated spin; a spin law with P(+1) = p corresponds to a
    label law with up-probability 1 - p.
    """
    return -np.asarray(spins)
