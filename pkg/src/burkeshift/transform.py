"""The discrete Burke transform, its inverse, time reversal, and iteration.

The transform sends the increments of the walk x to the increments of
y = 2s - x, where s is the running supremum of x over the infinite past.
On a window this reduces to a one-pass local rule driven by the queue:

    output[n] = +1            if q[n-1] == 0
    output[n] = -input[n]     otherwise

The definitional route (build x, s = q + x, y = 2s - x, difference y) is kept
as an oracle twin and must agree bit for bit.

The inverse applies the mirrored rule driven by the backward dual queue; it
equals time-reversal conjugation of the forward transform.  Iterating the
transform consumes certified span from the left (the inverse from the right),
re-certifying each application with a fresh two-seed coupling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadConfig, CertificationLost
from .lindley import (
    DEFAULT_SEED_CAP,
    ModelParams,
    QueuePath,
    SpinWindow,
    backward_lindley,
    coupled_backward_lindley,
    coupled_lindley,
    forward_lindley,
)

MAX_ITERATES = 4096


@dataclass(frozen=True, eq=False)
class TransformResult:
    """Transform output together with the queue path that drove it.

    output[n] = +1 wherever queue[n-1] == 0, and -input[n] otherwise.
    certified_from / certified_until bound the span on which the output
    provably equals the bi-infinite value (None means no bound recorded on
    that side; exact-seed runs are certified over the whole window).
    """

    output: SpinWindow
    queue: QueuePath
    certified_from: int | None = None
    certified_until: int | None = None


def _local_rule(spins: np.ndarray, queue_prev: np.ndarray) -> np.ndarray:
    return np.where(queue_prev == 0, 1, -spins).astype(np.int64)


def burke_transform(spins: SpinWindow, seed: int) -> TransformResult:
    """Apply the transform with an exact queue seed one step left of origin."""
    q = forward_lindley(seed, spins)
    q_prev = np.concatenate([[np.int64(seed)], q.values[:-1]]) if len(spins) \
        else np.empty(0, dtype=np.int64)
    out = SpinWindow(_local_rule(spins.values, q_prev), spins.origin)
    return TransformResult(out, q, spins.origin, spins.end - 1)


def burke_transform_definitional(spins: SpinWindow, seed: int) -> SpinWindow:
    """Oracle twin of burke_transform via y = 2s - x.

    Builds the walk x, the supremum s = q + x seeded by `seed`, the reflected
    walk y, and returns the first differences of y.  Must equal the local
    rule bit for bit on every input.
    """
    if seed < 0:
        raise BadConfig("seed must be nonnegative")
    x = np.cumsum(spins.values, dtype=np.int64)
    q = forward_lindley(seed, spins).values
    y = 2 * (q + x) - x
    y_ext = np.concatenate([[np.int64(2 * seed)], y])
    return SpinWindow(np.diff(y_ext), spins.origin)


def inverse_burke_transform(sigma: SpinWindow, seed_right: int) -> SpinWindow:
    """Invert the transform given the dual queue seed at the right edge.

    With r the backward dual of sigma, the preimage spin is
    sigma[n] + 2*(r[n-1] - r[n]): -sigma[n] while r[n] - sigma[n] >= 0,
    +1 otherwise.  Equals time_reversal . burke_transform . time_reversal
    with the mirrored seed.
    """
    r = backward_lindley(seed_right, sigma).values
    out = sigma.values + 2 * (r[:-1] - r[1:])
    return SpinWindow(out, sigma.origin)


def time_reversal(spins: SpinWindow) -> SpinWindow:
    """Index mirror: entry at coordinate n moves to coordinate -n."""
    return SpinWindow(spins.values[::-1].copy(), -(spins.end - 1))


def forward_step_coupled(spins: SpinWindow, seed_cap: int) -> tuple[
        SpinWindow, QueuePath, int | None, int | None]:
    """One coupled application of the transform.

    Returns (full-window output computed from the low seed, low queue path,
    queue certification index, output certification index).  Output entries
    are exact from one step past the queue merge index onward.
    """
    q, merged_at = coupled_lindley(seed_cap, spins)
    q_prev = np.concatenate([[np.int64(0)], q.values[:-1]]) if len(spins) \
        else np.empty(0, dtype=np.int64)
    out = SpinWindow(_local_rule(spins.values, q_prev), spins.origin)
    out_certified_from = None if merged_at is None else merged_at + 1
    return out, q, merged_at, out_certified_from


def backward_step_coupled(sigma: SpinWindow, seed_cap: int) -> tuple[
        SpinWindow, np.ndarray, int | None]:
    """One coupled application of the inverse transform.

    Returns (full-window preimage from the low seed, low dual-queue values
    covering [origin-1, end-1], certification index).  Preimage entries and
    dual values are exact up to and including the certification index.
    """
    dual, merged_until = coupled_backward_lindley(seed_cap, sigma)
    r = dual.values
    out = SpinWindow(sigma.values + 2 * (r[:-1] - r[1:]), sigma.origin)
    return out, r, merged_until


def iterate_transform(spins: SpinWindow, count: int,
                      seed_cap: int = DEFAULT_SEED_CAP) -> TransformResult:
    """Apply the transform (count > 0) or its inverse (count < 0) |count|
    times, re-certifying each application with a fresh two-seed coupling.

    The returned window is trimmed to the intersection of certified spans:
    forward applications consume from the left, inverse ones from the right.
    Raises CertificationLost if the certified span becomes empty.
    """
    if abs(count) > MAX_ITERATES:
        raise BadConfig(f"|count| exceeds the configured maximum {MAX_ITERATES}")
    current = spins
    if count == 0:
        q = forward_lindley(0, current)
        return TransformResult(current, q, current.origin, current.end - 1)
    for step in range(abs(count)):
        if len(current) == 0:
            raise CertificationLost(f"window exhausted after {step} applications")
        if count > 0:
            out, _, _, cert_from = forward_step_coupled(current, seed_cap)
            if cert_from is None or cert_from >= current.end:
                raise CertificationLost(
                    f"coupling did not merge inside the window at step {step}")
            current = out.slice(cert_from, out.end)
        else:
            out, _, cert_until = backward_step_coupled(current, seed_cap)
            if cert_until is None or cert_until < current.origin:
                raise CertificationLost(
                    f"dual coupling did not merge inside the window at step {step}")
            current = out.slice(out.origin, cert_until + 1)
    queue, merged_at = coupled_lindley(seed_cap, current)
    return TransformResult(current, queue, current.origin, current.end - 1)


def stage_margin(params: ModelParams, seed_cap: int, stages: int) -> int:
    """Window margin consumed by `stages` coupled applications.

    A fresh [0, seed_cap] coupling merges once the input's partial-sum
    maximum reaches seed_cap, i.e. after about seed_cap/(2p-1) steps; the
    allocation adds headroom for fluctuations.  Certification, not this
    estimate, guarantees correctness.
    """
    drift = 2.0 * float(params.p) - 1.0
    per_stage = math.ceil((seed_cap + 8) / drift)
    return math.ceil(stages * per_stage * 1.25) + 64
