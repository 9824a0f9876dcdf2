"""Exhaustive enumeration oracles over small windows and truncated seeds.

Every check sums P(seed) * P(spin window) over all pairs with seed <= M and
window length n, in exact rational arithmetic whenever the spin probability
is rational.  Truncating the geometric seed law at M discards total mass
rho**(M+1), so an enumerated law differs from the corresponding exact law by
at most that tail bound in every cell.  A deviation above the tail bound is
a build-stopping signal, not a tolerance to widen.

Weights are accumulated as integers over the common denominator
c**(M+1) * d**n (p = c/d), which keeps the theorem checks equality checks.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import product

import numpy as np

from .errors import ResourceLimit
from .lindley import ModelParams

MAX_WINDOW = 20
MAX_SEED_CAP = 64


def _guard(n: int, limit: int, seed_cap: int):
    if n > limit:
        raise ResourceLimit(f"window length {n} exceeds guard {limit}")
    if seed_cap > MAX_SEED_CAP:
        raise ResourceLimit(f"seed cap {seed_cap} exceeds guard {MAX_SEED_CAP}")
    if n < 0 or seed_cap < 0:
        raise ResourceLimit("window length and seed cap must be nonnegative")


def _rational(params: ModelParams) -> tuple[int, int]:
    p = Fraction(params.p)
    return p.numerator, p.denominator


@dataclass(frozen=True)
class ExactLaw:
    """Exact truncated law of outcome windows.

    support maps outcome tuples to exact masses; the mass missing from the
    enumeration (seeds above the cap) is bounded by tail_bound.
    """

    support: dict
    tail_bound: Fraction
    mass: Fraction
    seed_cap: int


def _transform_tuple(spins: tuple, seed: int) -> tuple:
    q, out = seed, []
    for w in spins:
        out.append(1 if q == 0 else -w)
        q = max(q - w, 0)
    return tuple(out)


def _lindley_tuple(spins: tuple, seed: int) -> list:
    q, out = seed, [seed]
    for w in spins:
        q = max(q - w, 0)
        out.append(q)
    return out


def _seed_weights_scaled(c: int, d: int, seed_cap: int) -> list[int]:
    """(1-rho) * rho**seed over the common denominator c**(seed_cap+1)."""
    return [(2 * c - d) * (d - c) ** s * c ** (seed_cap - s)
            for s in range(seed_cap + 1)]


def _spin_weight_scaled(c: int, d: int, spins: tuple) -> int:
    a = sum(1 for w in spins if w == 1)
    return c ** a * (d - c) ** (len(spins) - a)


def enumerate_output_law(n: int, seed_cap: int, params: ModelParams) -> ExactLaw:
    """Exact law of the transform output over windows of length n.

    Bins transform(seed, window) over all seeds <= seed_cap and all 2**n
    windows.  By measure preservation the result must match the product
    spin law cell by cell within the tail bound.
    """
    _guard(n, MAX_WINDOW, seed_cap)
    c, d = _rational(params)
    denom = c ** (seed_cap + 1) * d ** n
    seed_w = _seed_weights_scaled(c, d, seed_cap)
    acc: dict[tuple, int] = {}
    for seed in range(seed_cap + 1):
        ws = seed_w[seed]
        for spins in product((-1, 1), repeat=n):
            w = ws * _spin_weight_scaled(c, d, spins)
            out = _transform_tuple(spins, seed)
            acc[out] = acc.get(out, 0) + w
    support = {k: Fraction(v, denom) for k, v in acc.items()}
    mass = Fraction(sum(acc.values()), denom)
    rho = Fraction(d - c, c)
    return ExactLaw(support, rho ** (seed_cap + 1), mass, seed_cap)


def product_law_deviation(law: ExactLaw, n: int, params: ModelParams) -> Fraction:
    """Max deviation of an enumerated window law from the product spin law."""
    c, d = _rational(params)
    denom = d ** n
    dev = Fraction(0)
    for spins in product((-1, 1), repeat=n):
        theory = Fraction(_spin_weight_scaled(c, d, spins), denom)
        got = law.support.get(spins, Fraction(0))
        dev = max(dev, abs(theory - got))
    return dev


@dataclass(frozen=True)
class IndependenceCheck:
    max_deviation: Fraction
    tail_bound: Fraction
    cells: int


def verify_independence(past_len: int, seed_cap: int,
                        params: ModelParams) -> IndependenceCheck:
    """Joint law of (queue at 0, output on the past_len coordinates ending
    at 0) against geometric x product-spin.

    The max cell deviation must stay within the truncation tail bound; this
    is the exact form of the independence half of the output theorem.
    """
    _guard(past_len, 16, seed_cap)
    c, d = _rational(params)
    denom = c ** (seed_cap + 1) * d ** past_len
    seed_w = _seed_weights_scaled(c, d, seed_cap)
    acc: dict[tuple, int] = {}
    for seed in range(seed_cap + 1):
        ws = seed_w[seed]
        for spins in product((-1, 1), repeat=past_len):
            w = ws * _spin_weight_scaled(c, d, spins)
            out = _transform_tuple(spins, seed)
            q0 = _lindley_tuple(spins, seed)[-1]
            key = (q0, out)
            acc[key] = acc.get(key, 0) + w
    rho = Fraction(d - c, c)
    one_minus_rho = 1 - rho
    dev = Fraction(0)
    cells = 0
    q_max = seed_cap + past_len
    for q0 in range(q_max + 1):
        geo = one_minus_rho * rho ** q0
        for spins in product((-1, 1), repeat=past_len):
            theory = geo * Fraction(_spin_weight_scaled(c, d, spins), d ** past_len)
            got = Fraction(acc.get((q0, spins), 0), denom)
            dev = max(dev, abs(theory - got))
            cells += 1
    # cells with q0 beyond reach carry only theoretical mass, below the tail
    unreachable = one_minus_rho * rho ** (q_max + 1) * Fraction(c, d) ** past_len
    dev = max(dev, unreachable)
    return IndependenceCheck(dev, rho ** (seed_cap + 1), cells)


@dataclass(frozen=True)
class DualRecursionCheck:
    """Violation counts for the two sign variants of the cross-iterate queue
    recursion q[n-1] = max(q[n] -/+ output[n], 0)."""

    minus_violations: int
    plus_violations: int
    cases: int


def verify_dual_recursion(n: int, seed_cap: int,
                          params: ModelParams | None = None) -> DualRecursionCheck:
    """Exhaustively test both sign variants of the printed queue recursion.

    The counts are combinatorial (weights play no role): for every seed and
    window, the queue path of the input and the transform output either do
    or do not satisfy each variant at each position.
    """
    _guard(n, 12, seed_cap)
    minus = plus = cases = 0
    for seed in range(seed_cap + 1):
        for spins in product((-1, 1), repeat=n):
            q = _lindley_tuple(spins, seed)
            out = _transform_tuple(spins, seed)
            for i in range(n):
                cases += 1
                if q[i] != max(q[i + 1] - out[i], 0):
                    minus += 1
                if q[i] != max(q[i + 1] + out[i], 0):
                    plus += 1
    return DualRecursionCheck(minus, plus, cases)


@dataclass(frozen=True)
class StationaryCheck:
    max_deviation: Fraction
    tail_bound: Fraction


def stationary_law_check(n: int, seed_cap: int,
                         params: ModelParams) -> StationaryCheck:
    """Marginal law of the queue at every window position against the
    geometric law; exact stationarity of the seeded recursion."""
    _guard(n, 16, seed_cap)
    c, d = _rational(params)
    denom = c ** (seed_cap + 1) * d ** n
    seed_w = _seed_weights_scaled(c, d, seed_cap)
    marginals: list[dict[int, int]] = [dict() for _ in range(n)]
    for seed in range(seed_cap + 1):
        ws = seed_w[seed]
        for spins in product((-1, 1), repeat=n):
            w = ws * _spin_weight_scaled(c, d, spins)
            q = _lindley_tuple(spins, seed)
            for j in range(n):
                m = marginals[j]
                qj = q[j + 1]
                m[qj] = m.get(qj, 0) + w
    rho = Fraction(d - c, c)
    one_minus_rho = 1 - rho
    dev = Fraction(0)
    for j in range(n):
        q_max = seed_cap + n
        for x in range(q_max + 1):
            theory = one_minus_rho * rho ** x
            got = Fraction(marginals[j].get(x, 0), denom)
            dev = max(dev, abs(theory - got))
        dev = max(dev, one_minus_rho * rho ** (q_max + 1))
    return StationaryCheck(dev, rho ** (seed_cap + 1))
