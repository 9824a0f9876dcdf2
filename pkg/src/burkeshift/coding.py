"""Coding of a spin sequence by its queue values across transform iterates.

The code of a sequence records, for each iterate index k, the queue at
coordinate 0 of the k-th transform iterate.  Certified entries are i.i.d.
geometric, and the full sequence can be recovered from the code alone:

* coordinate 0: scan the code forward from k to its first zero at m; the
  spin at iterate k is (-1)**(m-k), because a zero queue forces spin +1 and
  a positive queue flips the spin between consecutive iterates.
* coordinates n <= 0: the same scan applied to the row of queue values at
  coordinate n, rows chained downward by
  q[n-1](iterate k) = max(q[n](iterate k) - spin[n](iterate k+1), 0).
* coordinates n >= 1: a backward scan (a zero at iterate l forces spin +1 at
  iterate l+1), rows chained upward by the plain forward queue recursion.

Decoding works on a finite grid of (coordinate, iterate) cells with explicit
unknown states: any cell whose scan leaves the window, or crosses an
uncertified code entry, stays unknown rather than being guessed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BadConfig
from .lindley import DEFAULT_SEED_CAP, ModelParams, SpinWindow
from .transform import backward_step_coupled, forward_step_coupled, stage_margin

MAX_CODE_SPAN = 4096
_UNKNOWN = np.iinfo(np.int64).min


@dataclass(frozen=True, eq=False)
class CodeWindow:
    """Finite view of the code: entry i is the queue at coordinate 0 of
    iterate k_origin + i; known marks entries whose certification held."""

    values: np.ndarray
    known: np.ndarray
    k_origin: int

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.int64)
        known = np.asarray(self.known, dtype=bool)
        if vals.shape != known.shape or vals.ndim != 1:
            raise BadConfig("values and known must be 1-d arrays of equal length")
        if np.any(vals[known] < 0):
            raise BadConfig("code entries must be nonnegative")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "known", known)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def k_end(self) -> int:
        return self.k_origin + len(self.values)

    @classmethod
    def exact(cls, values, k_origin: int = 0) -> "CodeWindow":
        values = np.asarray(values, dtype=np.int64)
        return cls(values, np.ones(len(values), dtype=bool), k_origin)


@dataclass(frozen=True, eq=False)
class RecoveredField:
    """Decoded grid over coordinates [n_lo, n_hi] and the code's iterates.

    spins holds -1/+1 with 0 for unknown; queues holds queue values with a
    large negative sentinel for unknown.  Row r of each array is coordinate
    n_lo + r; column c is iterate k_origin + c.
    """

    spins: np.ndarray
    queues: np.ndarray
    n_lo: int
    k_origin: int

    @property
    def n_hi(self) -> int:
        return self.n_lo + self.spins.shape[0] - 1

    def spin(self, n: int, k: int) -> int | None:
        v = int(self.spins[n - self.n_lo, k - self.k_origin])
        return v if v != 0 else None

    def queue(self, n: int, k: int) -> int | None:
        v = int(self.queues[n - self.n_lo, k - self.k_origin])
        return v if v != _UNKNOWN else None

    def origin_spins(self) -> dict[int, int]:
        """Recovered spins of the original sequence (iterate 0), keyed by
        coordinate; unknown cells are omitted."""
        col = -self.k_origin
        if not 0 <= col < self.spins.shape[1]:
            return {}
        out = {}
        for r in range(self.spins.shape[0]):
            v = int(self.spins[r, col])
            if v != 0:
                out[self.n_lo + r] = v
        return out


def encode(spins: SpinWindow, k_lo: int, k_hi: int,
           seed_cap: int = DEFAULT_SEED_CAP) -> CodeWindow:
    """Compute code entries for iterates k in [k_lo, k_hi).

    Positive iterates consume certified span from the left of the window,
    negative ones from the right; each application re-couples from seeds
    [0, seed_cap].  Entries whose coupling failed to merge by coordinate 0
    (or whose window no longer covers coordinate 0) are flagged unknown
    instead of aborting the encode.
    """
    if not (k_lo <= 0 < k_hi):
        raise BadConfig("iterate range must contain 0")
    if k_hi - k_lo > MAX_CODE_SPAN:
        raise BadConfig(f"iterate range wider than {MAX_CODE_SPAN}")
    values = np.zeros(k_hi - k_lo, dtype=np.int64)
    known = np.zeros(k_hi - k_lo, dtype=bool)

    current = spins
    for k in range(0, k_hi):
        if len(current) == 0:
            break
        out, queue, merged_at, cert_from = forward_step_coupled(current, seed_cap)
        if (merged_at is not None and merged_at <= 0
                and current.origin <= 0 < current.end):
            values[k - k_lo] = queue.values[0 - current.origin]
            known[k - k_lo] = True
        if k == k_hi - 1:
            break
        if cert_from is None or cert_from >= out.end:
            break
        current = out.slice(cert_from, out.end)

    current = spins
    for k in range(-1, k_lo - 1, -1):
        if len(current) == 0:
            break
        out, dual_values, cert_until = backward_step_coupled(current, seed_cap)
        # dual_values[i] is the preimage queue at coordinate origin - 1 + i
        pos = 0 - (current.origin - 1)
        if (cert_until is not None and cert_until >= 0
                and 0 <= pos < len(dual_values)):
            values[k - k_lo] = dual_values[pos]
            known[k - k_lo] = True
        if cert_until is None or cert_until < current.origin:
            break
        current = out.slice(out.origin, cert_until + 1)

    return CodeWindow(values, known, k_lo)


def _scan_forward(values: np.ndarray, known: np.ndarray) -> np.ndarray:
    """Spins from rows scanned toward the next known zero at m >= k:
    spin[k] = (-1)**(m-k); 0 where the scan exits or crosses an unknown."""
    K = len(values)
    spins = np.zeros(K, dtype=np.int8)
    next_zero = -1
    for k in range(K - 1, -1, -1):
        if not known[k]:
            next_zero = -1
            continue
        if values[k] == 0:
            next_zero = k
        if next_zero >= 0:
            spins[k] = 1 if (next_zero - k) % 2 == 0 else -1
    return spins


def _scan_backward(values: np.ndarray, known: np.ndarray) -> np.ndarray:
    """Spins from rows scanned toward the last known zero at l <= k-1:
    spin[k] = (-1)**(k-1-l); 0 where the scan exits or crosses an unknown."""
    K = len(values)
    spins = np.zeros(K, dtype=np.int8)
    prev_zero = -1
    for k in range(K):
        if k > 0:
            if not known[k - 1]:
                prev_zero = -1
            elif values[k - 1] == 0:
                prev_zero = k - 1
        else:
            prev_zero = -1
        if prev_zero >= 0:
            spins[k] = 1 if (k - 1 - prev_zero) % 2 == 0 else -1
    return spins


def decode_origin_row(code: CodeWindow) -> tuple[np.ndarray, np.ndarray]:
    """Recover the coordinate-0 spin of every iterate in the code window.

    Returns (spins, known): spins[i] is the coordinate-0 spin of iterate
    k_origin + i where known, else 0.
    """
    spins = _scan_forward(code.values, code.known)
    return spins, spins != 0


def decode(code: CodeWindow, n_lo: int, n_hi: int) -> RecoveredField:
    """Recover spins and queue values on coordinates [n_lo, n_hi].

    The decoder consumes only the code window; unknown cells propagate and
    are flagged, never guessed.
    """
    if not (n_lo <= 0 <= n_hi):
        raise BadConfig("coordinate range must contain 0")
    if n_hi - n_lo > MAX_CODE_SPAN:
        raise BadConfig(f"coordinate range wider than {MAX_CODE_SPAN}")
    K = len(code)
    rows = n_hi - n_lo + 1
    spins = np.zeros((rows, K), dtype=np.int8)
    queues = np.full((rows, K), _UNKNOWN, dtype=np.int64)

    def row(n: int) -> int:
        return n - n_lo

    # stage A/B: walk coordinates 0, -1, ... using forward scans in k
    q_vals = code.values.copy()
    q_known = code.known.copy()
    if 0 <= row(0) < rows:
        queues[row(0)] = np.where(q_known, q_vals, _UNKNOWN)
    for n in range(0, n_lo - 1, -1):
        s = _scan_forward(q_vals, q_known)
        spins[row(n)] = s
        if n - 1 < n_lo:
            break
        new_vals = np.zeros(K, dtype=np.int64)
        new_known = np.zeros(K, dtype=bool)
        # q[n-1](k) needs the coordinate-n spin of iterate k+1
        ok = q_known[:-1] & (s[1:] != 0)
        new_vals[:-1][ok] = np.maximum(q_vals[:-1][ok] - s[1:][ok], 0)
        new_known[:-1] = ok
        q_vals, q_known = new_vals, new_known
        queues[row(n - 1)] = np.where(q_known, q_vals, _UNKNOWN)

    # stage C: walk coordinates 1, 2, ... using backward scans in k
    q_vals = code.values.copy()
    q_known = code.known.copy()
    for n in range(1, n_hi + 1):
        s = _scan_backward(q_vals, q_known)
        spins[row(n)] = s
        ok = q_known & (s != 0)
        new_vals = np.zeros(K, dtype=np.int64)
        new_vals[ok] = np.maximum(q_vals[ok] - s[ok], 0)
        q_vals, q_known = new_vals, ok
        queues[row(n)] = np.where(q_known, q_vals, _UNKNOWN)

    return RecoveredField(spins, queues, n_lo, code.k_origin)


@dataclass
class RoundtripReport:
    """Aggregate of encode/decode roundtrips over random stationary windows."""

    trials: int
    k_lo: int
    k_hi: int
    n_lo: int
    n_hi: int
    seed_cap: int
    margin_left: int
    margin_right: int
    mismatches: int = 0
    cells_checked: int = 0
    recovered_per_n: dict = field(default_factory=dict)
    entries_total: int = 0
    entries_certified: int = 0
    code_values: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    code_lag1: np.ndarray = field(default_factory=lambda: np.empty((0, 2), np.int64))

    def certification_rate(self, n_abs_max: int | None = None) -> float:
        ns = [n for n in self.recovered_per_n
              if n_abs_max is None or abs(n) <= n_abs_max]
        if not ns or self.trials == 0:
            return 0.0
        total = sum(self.recovered_per_n[n] for n in ns)
        return total / (len(ns) * self.trials)


def roundtrip_report(params: ModelParams, trials: int, rng,
                     k_lo: int = -32, k_hi: int = 32,
                     n_lo: int = -8, n_hi: int = 8,
                     seed_cap: int = DEFAULT_SEED_CAP,
                     margin_scale: float = 1.0) -> RoundtripReport:
    """Encode then decode random stationary windows; count mismatches.

    A mismatch on a recovered coordinate is a hard failure of the coding
    contract.  Certification rates per coordinate and the pooled certified
    code entries (with adjacent pairs) are collected for the law tests.
    """
    margin_left = int(stage_margin(params, seed_cap, max(k_hi, 1)) * margin_scale)
    margin_right = int(stage_margin(params, seed_cap, max(-k_lo, 1)) * margin_scale)
    report = RoundtripReport(trials, k_lo, k_hi, n_lo, n_hi, seed_cap,
                             margin_left, margin_right)
    report.recovered_per_n = {n: 0 for n in range(n_lo, n_hi + 1)}
    lo = n_lo - margin_left
    hi = n_hi + margin_right
    p = float(params.p)
    pooled_vals, pooled_pairs = [], []
    for _ in range(trials):
        draws = rng.random(hi - lo + 1)
        window = SpinWindow(np.where(draws < p, 1, -1), lo)
        code = encode(window, k_lo, k_hi, seed_cap)
        field_ = decode(code, n_lo, n_hi)
        recovered = field_.origin_spins()
        for n, spin in recovered.items():
            report.recovered_per_n[n] += 1
            report.cells_checked += 1
            truth = int(window.values[n - lo])
            if spin != truth:
                report.mismatches += 1
        report.entries_total += len(code)
        report.entries_certified += int(code.known.sum())
        pooled_vals.append(code.values[code.known])
        both = code.known[:-1] & code.known[1:]
        pooled_pairs.append(
            np.stack([code.values[:-1][both], code.values[1:][both]], axis=1))
    if trials:
        report.code_values = np.concatenate(pooled_vals)
        report.code_lag1 = np.concatenate(pooled_pairs, axis=0)
    return report
