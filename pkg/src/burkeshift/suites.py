"""Verification suites tying the library to reproducible pass/fail reports.

Each suite draws from streams derived from (root seed, fixed stream id), runs
its battery, and returns a RunReport whose serialized form is a pure function
of the configuration: identical configs produce identical bytes whatever the
thread count.  Sample sizes default to the acceptance scale.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import coding, continuum, irf, oracle
from .errors import BadConfig
from .lindley import ModelParams, SpinWindow, lindley_values_batch, sample_stationary_seed
from .stats import (
    PVALUE_FLOOR,
    TestReport,
    chi_square_gof,
    correlation_band_test,
    derive_stream,
    independence_test,
    ks_test,
    parallel_map,
)

_STREAM_DISCRETE = 2
_STREAM_ROUNDTRIP = 3
_STREAM_MM1 = 4
_STREAM_BROWNIAN = 5
_STREAM_IRF = 6
_STREAM_ENCODE = 7
_STREAM_DECODE = 8


@dataclass
class SuiteConfig:
    """Knobs shared by the suites; defaults are the acceptance-scale values."""

    p: float | Fraction = Fraction(2, 3)
    lam: float = 1.0
    xi: float = 2.0
    nu: float = 0.5
    window: int = 10                 # enumeration window / involution length scale
    involution_window: int = 256
    horizon: float = 50.0            # queue window length, time units
    brownian_h: float = 0.01
    brownian_past: float = 40.0
    brownian_future: float = 1.0
    iterates: int = 64               # code window span (split around 0)
    coords: int = 8                  # |coordinate| range for decoding
    samples: int | None = None       # override of the suite's main count
    sample_scale: float = 1.0        # multiplier on default counts (all suite)
    seed_cap: int = 40
    dual_seed_cap: int = 20
    indep_past: int = 8
    root_seed: int = 42
    threads: int = 1

    def validate(self):
        ModelParams(self.p)
        continuum.Mm1Params(self.lam, self.xi)
        if self.nu <= 0:
            raise BadConfig("nu must be positive")
        if self.window < 1 or self.iterates < 2 or self.coords < 0:
            raise BadConfig("window, iterates, coords out of range")
        if self.seed_cap < 0 or self.dual_seed_cap < 0:
            raise BadConfig("seed caps must be nonnegative")
        if self.samples is not None and self.samples < 0:
            raise BadConfig("samples must be nonnegative")
        if self.sample_scale <= 0:
            raise BadConfig("sample scale must be positive")
        if self.threads < 1:
            raise BadConfig("threads must be at least 1")
        return self

    def count(self, default: int, floor: int = 0) -> int:
        if self.samples is not None:
            return self.samples
        return max(int(round(default * self.sample_scale)), floor)

    def echo(self) -> dict:
        return {
            "p": str(Fraction(self.p)) if isinstance(self.p, Fraction) else self.p,
            "lambda": self.lam, "xi": self.xi, "nu": self.nu,
            "window": self.window, "involution_window": self.involution_window,
            "horizon": self.horizon, "brownian_h": self.brownian_h,
            "brownian_past": self.brownian_past,
            "brownian_future": self.brownian_future,
            "iterates": self.iterates, "coords": self.coords,
            "samples": self.samples, "sample_scale": self.sample_scale,
            "seed_cap": self.seed_cap, "dual_seed_cap": self.dual_seed_cap,
            "indep_past": self.indep_past, "root_seed": self.root_seed,
            "threads": self.threads,
        }


@dataclass
class RunReport:
    """Config echo plus per-test reports; pass is the conjunction of the
    mandatory tests.  Wall-clock stays out of the serialized payload so that
    reports are byte-stable."""

    suite: str
    config: dict
    tests: list = field(default_factory=list)
    wall_clock: float = 0.0

    @property
    def passed(self) -> bool:
        return all(t.passed for t in self.tests if t.mandatory)

    def to_json(self) -> str:
        payload = {
            "config": {"suite": self.suite, **self.config},
            "tests": [t.to_dict() for t in self.tests],
            "pass": self.passed,
        }
        return json.dumps(payload, separators=(",", ":"), allow_nan=False)

    def to_csv(self) -> str:
        lines = ["test,statistic,p_value,pass,n"]
        lines += [t.csv_row() for t in self.tests]
        return "\n".join(lines) + "\n"


def _timed(fn):
    def wrapper(cfg: SuiteConfig) -> RunReport:
        start = time.perf_counter()
        report = fn(cfg)
        report.wall_clock = time.perf_counter() - start
        return report
    return wrapper


def _geometric_cells(rho: float, cut: int) -> np.ndarray:
    probs = [(1.0 - rho) * rho ** x for x in range(cut)]
    probs.append(rho ** cut)
    return np.asarray(probs)


def _counts_up_to(values: np.ndarray, cut: int) -> np.ndarray:
    return np.bincount(np.minimum(values, cut), minlength=cut + 1)


# ---------------------------------------------------------------------------
# oracle suite: exact enumeration
# ---------------------------------------------------------------------------

@_timed
def run_oracle_suite(cfg: SuiteConfig) -> RunReport:
    """Exact enumeration checks; every bound is an exact rational comparison."""
    params = ModelParams(cfg.p)
    report = RunReport("oracle", cfg.echo())
    n = cfg.window

    law = oracle.enumerate_output_law(n, cfg.seed_cap, params)
    dev = oracle.product_law_deviation(law, n, params)
    report.tests.append(TestReport(
        "oracle_output_law_deviation", float(dev), None,
        dev <= law.tail_bound, 2 ** n * (cfg.seed_cap + 1),
        bound=float(law.tail_bound), params={"window": n, "seed_cap": cfg.seed_cap}))
    report.tests.append(TestReport(
        "oracle_mass_accounting", float(law.mass + law.tail_bound), None,
        law.mass + law.tail_bound == 1, len(law.support),
        params={"expected": 1.0}))

    indep = oracle.verify_independence(cfg.indep_past, cfg.seed_cap, params)
    report.tests.append(TestReport(
        "oracle_independence_deviation", float(indep.max_deviation), None,
        indep.max_deviation <= indep.tail_bound, indep.cells,
        bound=float(indep.tail_bound), params={"past": cfg.indep_past}))

    minus = plus = cases = 0
    for length in range(1, min(n, 10) + 1):
        chk = oracle.verify_dual_recursion(length, cfg.dual_seed_cap, params)
        minus += chk.minus_violations
        plus += chk.plus_violations
        cases += chk.cases
    report.tests.append(TestReport(
        "oracle_dual_recursion_minus_violations", float(minus), None,
        minus == 0, cases, params={"max_window": min(n, 10),
                                   "seed_cap": cfg.dual_seed_cap}))
    report.tests.append(TestReport(
        "oracle_dual_recursion_plus_violations", float(plus), None,
        plus > 0, cases, params={"note": "printed variant must fail"}))

    stat_n = min(n, 12)
    stat = oracle.stationary_law_check(stat_n, cfg.seed_cap, params)
    report.tests.append(TestReport(
        "oracle_stationary_marginals_deviation", float(stat.max_deviation), None,
        stat.max_deviation <= stat.tail_bound, 2 ** stat_n * (cfg.seed_cap + 1),
        bound=float(stat.tail_bound), params={"window": stat_n}))
    return report


# ---------------------------------------------------------------------------
# discrete suite: involution + stationary seed law (Monte Carlo)
# ---------------------------------------------------------------------------

def _involution_batch(p: float, seed_cap: int, length: int, count: int, rng):
    draws = rng.random((count, length))
    spins = np.where(draws < p, 1, -1).astype(np.int64)
    s = np.cumsum(spins, axis=1)
    run = np.maximum.accumulate(np.maximum(s, 0), axis=1)
    q_low = run - s
    q_high = np.maximum(seed_cap, run) - s
    merged = q_low == q_high
    has = merged.any(axis=1)
    first = np.where(has, np.argmax(merged, axis=1), length)

    q_prev = np.concatenate([np.zeros((count, 1), np.int64), q_low[:, :-1]], axis=1)
    sigma = np.where(q_prev == 0, 1, -spins)
    r_rev = lindley_values_batch(q_low[:, -1], sigma[:, ::-1])
    r = np.concatenate([r_rev[:, ::-1], q_low[:, -1:]], axis=1)
    recovered = sigma + 2 * (r[:, :-1] - r[:, 1:])

    cols = np.arange(length)
    certified = has[:, None] & (cols[None, :] >= (first + 1)[:, None])
    mism_cert = int(np.count_nonzero(certified & (recovered != spins)))
    mism_full = int(np.count_nonzero(recovered != spins))
    nonempty = int(np.count_nonzero(has & (first + 1 <= length - 1)))
    zeros_cert = int(np.count_nonzero(certified & (q_low == 0)))
    return {
        "mismatch_certified": mism_cert,
        "mismatch_full": mism_full,
        "nonempty_spans": nonempty,
        "certified_cells": int(certified.sum()),
        "zero_cells": zeros_cert,
        "trials": count,
    }


@_timed
def run_discrete_suite(cfg: SuiteConfig) -> RunReport:
    params = ModelParams(cfg.p)
    p, rho = float(params.p), float(params.rho)
    report = RunReport("discrete", cfg.echo())
    stream = derive_stream(cfg.root_seed, _STREAM_DISCRETE)

    trials = cfg.count(10_000, floor=10)
    if trials == 0:
        return report
    length = cfg.involution_window
    batch = 2000
    starts = list(range(0, trials, batch))

    def task(i):
        count = min(batch, trials - starts[i])
        rng = stream.substream(i).rng
        return _involution_batch(p, cfg.seed_cap, length, count, rng)

    parts = parallel_map(task, list(range(len(starts))), cfg.threads)
    tot = {k: sum(part[k] for part in parts) for k in parts[0]} if parts else {
        "mismatch_certified": 0, "mismatch_full": 0, "nonempty_spans": 0,
        "certified_cells": 0, "zero_cells": 0, "trials": 0}

    report.tests.append(TestReport(
        "involution_identity_on_certified_span", float(tot["mismatch_certified"]),
        None, tot["mismatch_certified"] == 0, tot["certified_cells"],
        params={"trials": trials, "window": length, "seed_cap": cfg.seed_cap}))
    report.tests.append(TestReport(
        "involution_identity_full_window", float(tot["mismatch_full"]), None,
        tot["mismatch_full"] == 0, trials * length, mandatory=False))
    rate = tot["nonempty_spans"] / trials if trials else 1.0
    report.tests.append(TestReport(
        "involution_certified_span_nonempty_rate", rate, None, rate >= 0.95,
        trials, bound=0.95))
    if tot["certified_cells"]:
        zero_freq = tot["zero_cells"] / tot["certified_cells"]
        report.tests.append(TestReport(
            "dual_queue_zero_frequency", zero_freq, None,
            abs(zero_freq - (1.0 - rho)) <= 0.02, tot["certified_cells"],
            bound=0.02, params={"expected": 1.0 - rho}, mandatory=False))

    law_samples = trials * 100
    seeds = sample_stationary_seed(params, stream.substream(10_001).rng,
                                   size=law_samples)
    cut = 16
    report.tests.append(chi_square_gof(
        _counts_up_to(seeds, cut), _geometric_cells(rho, cut),
        name="stationary_seed_geometric_law",
        params={"pool_from": cut, "rho": rho}))
    mean_dev = float(seeds.mean() - rho / (1.0 - rho))
    se = float(seeds.std(ddof=1)) / math.sqrt(law_samples)
    report.tests.append(TestReport(
        "stationary_seed_mean", mean_dev, None, abs(mean_dev) <= 3 * se,
        law_samples, bound=3 * se, params={"expected": rho / (1.0 - rho)}))

    # Monte Carlo spot check of the exact independence statement
    mc = min(max(trials * 10, 10_000), 200_000)
    rng = stream.substream(10_002).rng
    seeds2 = sample_stationary_seed(params, rng, size=mc)
    spins = np.where(rng.random((mc, cfg.indep_past)) < p, 1, -1).astype(np.int64)
    q = lindley_values_batch(seeds2, spins)
    q_prev = np.concatenate([seeds2[:, None], q[:, :-1]], axis=1)
    sigma = np.where(q_prev == 0, 1, -spins)
    report.tests.append(correlation_band_test(
        q[:, -1], sigma.sum(axis=1), name="queue_vs_past_output_correlation",
        params={"past": cfg.indep_past}))
    report.tests.append(independence_test(
        q[:, -1], sigma.sum(axis=1), name="queue_vs_past_output_gtest"))
    return report


# ---------------------------------------------------------------------------
# coding suites
# ---------------------------------------------------------------------------

def _code_law_tests(params: ModelParams, rep: coding.RoundtripReport,
                    prefix: str) -> list[TestReport]:
    rho = float(params.rho)
    tests = []
    if len(rep.code_values) >= 100:
        cut = 12
        tests.append(chi_square_gof(
            _counts_up_to(rep.code_values, cut), _geometric_cells(rho, cut),
            name=f"{prefix}_code_entries_geometric_law",
            params={"pool_from": cut}))
    if len(rep.code_lag1) >= 100:
        cap = 6
        tests.append(independence_test(
            np.minimum(rep.code_lag1[:, 0], cap),
            np.minimum(rep.code_lag1[:, 1], cap),
            name=f"{prefix}_code_lag1_independence"))
        tests.append(correlation_band_test(
            rep.code_lag1[:, 0], rep.code_lag1[:, 1],
            name=f"{prefix}_code_lag1_correlation"))
    if rep.entries_total:
        tests.append(TestReport(
            f"{prefix}_encode_certified_entry_rate",
            rep.entries_certified / rep.entries_total, None, True,
            rep.entries_total, mandatory=False))
    return tests


@_timed
def run_roundtrip_suite(cfg: SuiteConfig) -> RunReport:
    params = ModelParams(cfg.p)
    report = RunReport("roundtrip", cfg.echo())
    trials = cfg.count(1000)
    if trials == 0:
        return report
    k_hi = cfg.iterates // 2
    k_lo = k_hi - cfg.iterates
    stream = derive_stream(cfg.root_seed, _STREAM_ROUNDTRIP)
    rep = coding.roundtrip_report(
        params, trials, stream.rng, k_lo=k_lo, k_hi=k_hi,
        n_lo=-cfg.coords, n_hi=cfg.coords, seed_cap=cfg.seed_cap)
    report.tests.append(TestReport(
        "roundtrip_mismatches", float(rep.mismatches), None,
        rep.mismatches == 0, rep.cells_checked,
        params={"trials": trials, "iterates": [k_lo, k_hi],
                "coords": cfg.coords}))
    near = min(4, cfg.coords)
    report.tests.append(TestReport(
        "roundtrip_certification_rate_near_origin",
        rep.certification_rate(near), None, True,
        trials * (2 * near + 1), bound=0.90,
        params={"coords": near, "note": "report-only"}, mandatory=False))
    report.tests.append(TestReport(
        "roundtrip_certification_rate_all",
        rep.certification_rate(None), None, True,
        trials * (cfg.coords * 2 + 1), mandatory=False))
    if trials:
        report.tests.extend(_code_law_tests(params, rep, "roundtrip"))
    return report


@_timed
def run_encode_suite(cfg: SuiteConfig) -> RunReport:
    params = ModelParams(cfg.p)
    report = RunReport("encode", cfg.echo())
    trials = cfg.count(200)
    if trials == 0:
        return report
    k_hi = cfg.iterates // 2
    k_lo = k_hi - cfg.iterates
    stream = derive_stream(cfg.root_seed, _STREAM_ENCODE)
    rep = coding.roundtrip_report(
        params, trials, stream.rng, k_lo=k_lo, k_hi=k_hi, n_lo=0, n_hi=0,
        seed_cap=cfg.seed_cap)
    report.tests.append(TestReport(
        "encode_origin_mismatches", float(rep.mismatches), None,
        rep.mismatches == 0, rep.cells_checked))
    if trials:
        report.tests.extend(_code_law_tests(params, rep, "encode"))
    return report


@_timed
def run_decode_suite(cfg: SuiteConfig) -> RunReport:
    params = ModelParams(cfg.p)
    p = float(params.p)
    report = RunReport("decode", cfg.echo())
    trials = cfg.count(50)
    if trials == 0:
        return report
    stream = derive_stream(cfg.root_seed, _STREAM_DECODE)
    rng = stream.rng
    k_hi = max(cfg.iterates // 4, 4)
    k_lo = -k_hi
    n_span = min(cfg.coords, 4)
    margin = coding.stage_margin(params, cfg.seed_cap, 2 * k_hi)
    inconsistent = row0_mismatch = zero_rule = 0
    cells = 0
    for _ in range(trials):
        vals = np.where(rng.random(2 * margin + 2 * n_span + 1) < p, 1, -1)
        window = SpinWindow(vals, -(margin + n_span))
        code = coding.encode(window, k_lo, k_hi, cfg.seed_cap)
        fld = coding.decode(code, -n_span, n_span)
        row0 = fld.queues[n_span, :]
        expect = np.where(code.known, code.values, np.iinfo(np.int64).min)
        row0_mismatch += int(np.count_nonzero(row0 != expect))
        # internal queue recursion wherever all three cells are known
        for r in range(1, fld.spins.shape[0]):
            qn, qn1 = fld.queues[r], fld.queues[r - 1]
            sp = fld.spins[r]
            ok = (qn != np.iinfo(np.int64).min) \
                & (qn1 != np.iinfo(np.int64).min) & (sp != 0)
            cells += int(ok.sum())
            inconsistent += int(np.count_nonzero(
                qn[ok] != np.maximum(qn1[ok] - sp[ok], 0)))
        known = fld.queues != np.iinfo(np.int64).min
        zero_rule += int(np.count_nonzero(
            known & (fld.queues == 0) & (fld.spins != 1)))
    report.tests.append(TestReport(
        "decode_row0_equals_code", float(row0_mismatch), None,
        row0_mismatch == 0, trials))
    report.tests.append(TestReport(
        "decode_internal_queue_recursion", float(inconsistent), None,
        inconsistent == 0, cells))
    report.tests.append(TestReport(
        "decode_zero_queue_forces_plus", float(zero_rule), None,
        zero_rule == 0, cells))
    return report


# ---------------------------------------------------------------------------
# continuous-time queue suite
# ---------------------------------------------------------------------------

def _poisson_matrix(rate: float, length: float, rows: int, rng) -> np.ndarray:
    mean = rate * length
    n0 = int(mean + 6.0 * math.sqrt(mean) + 16)
    t = np.cumsum(rng.exponential(1.0 / rate, (rows, n0)), axis=1)
    while np.any(t[:, -1] <= length):
        extra = np.full((rows, n0), np.inf)
        bad = t[:, -1] <= length
        extra[bad] = rng.exponential(1.0 / rate, (int(bad.sum()), n0))
        t = np.concatenate([t, t[:, -1:] + np.cumsum(extra, axis=1)], axis=1)
    return np.where(t <= length, t, np.inf)


def _collision_rows(ta: np.ndarray, ts: np.ndarray) -> np.ndarray:
    comb = np.sort(np.concatenate([ta, ts], axis=1), axis=1)
    dup = (np.diff(comb, axis=1) == 0) & np.isfinite(comb[:, :-1])
    return dup.any(axis=1)


def _mm1_batch(params: continuum.Mm1Params, horizon: float, rows: int,
               rng, gap_buffer: float):
    ta = _poisson_matrix(params.lam, horizon, rows, rng)
    ts = _poisson_matrix(params.xi, horizon, rows, rng)
    bad = _collision_rows(ta, ts)
    while bad.any():
        repl = _poisson_matrix(params.xi, horizon, int(bad.sum()), rng)
        width = max(ts.shape[1], repl.shape[1])
        if repl.shape[1] < width:
            repl = np.pad(repl, ((0, 0), (0, width - repl.shape[1])),
                          constant_values=np.inf)
        if ts.shape[1] < width:
            ts = np.pad(ts, ((0, 0), (0, width - ts.shape[1])),
                        constant_values=np.inf)
        ts[bad] = repl
        bad = _collision_rows(ta, ts)

    times = np.concatenate([ta, ts], axis=1)
    marks = np.concatenate([
        np.full(ta.shape, continuum.ARRIVAL, dtype=np.int64),
        np.full(ts.shape, continuum.SERVICE, dtype=np.int64)], axis=1)
    order = np.argsort(times, axis=1, kind="stable")
    times = np.take_along_axis(times, order, axis=1)
    marks = np.take_along_axis(marks, order, axis=1)
    finite = np.isfinite(times)
    spins = np.where(finite, marks, 0)

    ratio = params.queue_ratio
    q0 = rng.geometric(1.0 - ratio, size=rows) - 1
    q = lindley_values_batch(q0, spins)
    q_prev = np.concatenate([q0[:, None], q[:, :-1]], axis=1)
    dep = (spins == continuum.SERVICE) & (q_prev > 0)
    comp = finite & ~dep

    sigma = np.where(q_prev == 0, 1, -spins)
    sigma_expect = np.where(comp, 1, -1)
    sigma_mism = int(np.count_nonzero(finite & (sigma != sigma_expect)))

    cum_d = np.cumsum(dep, axis=1)
    cum_a = np.cumsum(spins == continuum.ARRIVAL, axis=1)
    ident = int(np.count_nonzero((cum_d - cum_a + q) != q0[:, None]))

    h_int = int(round(horizon))
    bins = np.clip(np.ceil(times[dep]).astype(np.int64) - 1, 0, h_int - 1)
    rows_idx = np.broadcast_to(np.arange(rows)[:, None], times.shape)[dep]
    d_counts = np.bincount(rows_idx * h_int + bins,
                           minlength=rows * h_int).reshape(rows, h_int)
    bins_r = np.clip(np.ceil(times[comp]).astype(np.int64) - 1, 0, h_int - 1)
    rows_r = np.broadcast_to(np.arange(rows)[:, None], times.shape)[comp]
    r_counts = np.bincount(rows_r * h_int + bins_r,
                           minlength=rows * h_int).reshape(rows, h_int)

    t_global = times[dep] - horizon
    same = rows_idx[1:] == rows_idx[:-1]
    starts = t_global[:-1] <= -gap_buffer
    gaps = np.diff(t_global)[same & starts]

    return {
        "q_end": q[:, -1],
        "d_hist": np.bincount(np.minimum(d_counts.ravel(), 23), minlength=24),
        "r_hist": np.bincount(np.minimum(r_counts.ravel(), 23), minlength=24),
        "d_last": d_counts[:, -1], "r_last": r_counts[:, -1],
        "gaps": gaps,
        "sigma_mismatches": sigma_mism,
        "identity_violations": ident,
        "service_spins": int(np.count_nonzero(spins == 1)),
        "events": int(finite.sum()),
    }


def _poisson_cells(rate: float, cut: int) -> np.ndarray:
    probs = [math.exp(-rate) * rate ** k / math.factorial(k) for k in range(cut)]
    probs.append(max(1.0 - sum(probs), 0.0))
    return np.asarray(probs)


@_timed
def run_mm1_suite(cfg: SuiteConfig) -> RunReport:
    params = continuum.Mm1Params(cfg.lam, cfg.xi)
    report = RunReport("mm1", cfg.echo())
    replicas = cfg.count(10_000, floor=10)
    horizon = cfg.horizon
    gap_buffer = min(10.0, horizon / 5.0)
    stream = derive_stream(cfg.root_seed, _STREAM_MM1)
    batch = 2000
    starts = list(range(0, replicas, batch))

    def task(i):
        rows = min(batch, replicas - starts[i])
        return _mm1_batch(params, horizon, rows, stream.substream(i).rng,
                          gap_buffer)

    parts = parallel_map(task, list(range(len(starts))), cfg.threads)
    gaps = np.concatenate([p["gaps"] for p in parts])
    q_end = np.concatenate([p["q_end"] for p in parts])
    d_last = np.concatenate([p["d_last"] for p in parts])
    r_last = np.concatenate([p["r_last"] for p in parts])
    d_hist = np.sum([p["d_hist"] for p in parts], axis=0)
    r_hist = np.sum([p["r_hist"] for p in parts], axis=0)
    sigma_mism = sum(p["sigma_mismatches"] for p in parts)
    ident = sum(p["identity_violations"] for p in parts)
    service_spins = sum(p["service_spins"] for p in parts)
    events = sum(p["events"] for p in parts)

    lam = params.lam
    report.tests.append(ks_test(
        gaps, lambda x: 1.0 - np.exp(-lam * x),
        name="interdeparture_exponential_ks",
        params={"rate": lam, "gap_buffer": gap_buffer}))
    cut = 8
    report.tests.append(chi_square_gof(
        _hist_cells(d_hist, cut), _poisson_cells(lam, cut),
        name="departure_unit_counts_poisson",
        params={"rate": lam}))
    total = d_hist.sum()
    mean = float((np.arange(len(d_hist)) * d_hist).sum() / total)
    second = float(((np.arange(len(d_hist)) ** 2) * d_hist).sum() / total)
    vm = (second - mean * mean) / mean
    report.tests.append(TestReport(
        "departure_counts_dispersion", vm, None, 0.9 <= vm <= 1.1,
        int(total), params={"expected": 1.0, "band": [0.9, 1.1]}))
    report.tests.append(correlation_band_test(
        d_last, q_end, name="past_departures_vs_queue_correlation",
        params={"interval": [-1.0, 0.0]}))
    report.tests.append(chi_square_gof(
        _hist_cells(r_hist, cut + 4), _poisson_cells(params.xi, cut + 4),
        name="complement_unit_counts_poisson", params={"rate": params.xi}))
    report.tests.append(correlation_band_test(
        d_last, r_last, name="departure_vs_complement_counts_correlation"))
    rho_q = params.queue_ratio
    report.tests.append(chi_square_gof(
        _counts_up_to(q_end, 12), _geometric_cells(rho_q, 12),
        name="queue_at_zero_geometric_law", params={"ratio": rho_q}))
    report.tests.append(TestReport(
        "embedded_transform_matches_departure_structure", float(sigma_mism),
        None, sigma_mism == 0, events))
    report.tests.append(TestReport(
        "counting_identity_violations", float(ident), None, ident == 0, events))
    spin_freq = service_spins / events
    expected = params.spin_prob
    se = math.sqrt(expected * (1 - expected) / events)
    report.tests.append(TestReport(
        "embedded_spin_frequency", spin_freq - expected, None,
        abs(spin_freq - expected) <= 4 * se, events, bound=4 * se,
        params={"expected": expected}, mandatory=False))
    return report


def _hist_cells(hist: np.ndarray, cut: int) -> np.ndarray:
    out = np.zeros(cut + 1)
    out[:cut] = hist[:cut]
    out[cut] = hist[cut:].sum()
    return out


# ---------------------------------------------------------------------------
# Brownian suite
# ---------------------------------------------------------------------------

@_timed
def run_brownian_suite(cfg: SuiteConfig) -> RunReport:
    config = continuum.BrownianConfig(cfg.nu, cfg.brownian_h, cfg.brownian_past,
                                      cfg.brownian_future)
    report = RunReport("brownian", cfg.echo())
    replicas = cfg.count(10_000, floor=10)
    stream = derive_stream(cfg.root_seed, _STREAM_BROWNIAN)
    batch = 500
    starts = list(range(0, replicas, batch))

    def task(i):
        rows = min(batch, replicas - starts[i])
        grid = continuum.simulate_two_sided_bm(config, stream.substream(i).rng,
                                               paths=rows)
        y = continuum.brownian_burke_transform(grid)
        inc = np.diff(y, axis=1)
        j = grid.origin_index
        c1, c2 = grid.column(-1.0), grid.column(-2.0)
        return {
            "m0": grid.M[:, j].copy(),
            "sum": float(inc.sum()), "sumsq": float((inc * inc).sum()),
            "n_inc": inc.size,
            "y_past_inc": (y[:, c1] - y[:, c2]).copy(),
            "y0_max": float(np.max(np.abs(y[:, j]))),
        }

    parts = parallel_map(task, list(range(len(starts))), cfg.threads)
    m0 = np.concatenate([p["m0"] for p in parts])
    y_past = np.concatenate([p["y_past_inc"] for p in parts])
    n_inc = sum(p["n_inc"] for p in parts)
    total = math.fsum(p["sum"] for p in parts)
    totsq = math.fsum(p["sumsq"] for p in parts)
    y0_max = max(p["y0_max"] for p in parts)

    nu, h = cfg.nu, cfg.brownian_h
    rate = 2.0 * nu
    report.tests.append(ks_test(
        m0, lambda x: 1.0 - np.exp(-rate * x),
        name="past_maximum_exponential_ks", params={"rate": rate}))
    mean_dev = float(m0.mean() - 1.0 / rate)
    se_m = float(m0.std(ddof=1)) / math.sqrt(len(m0))
    report.tests.append(TestReport(
        "past_maximum_mean", mean_dev, None, abs(mean_dev) <= 3 * se_m,
        len(m0), bound=3 * se_m, params={"expected": 1.0 / rate}))
    inc_mean = total / n_inc
    inc_var = totsq / n_inc - inc_mean ** 2
    se_inc = math.sqrt(h / n_inc)
    report.tests.append(TestReport(
        "reflected_increment_mean", inc_mean - nu * h, None,
        abs(inc_mean - nu * h) <= 3 * se_inc, n_inc, bound=3 * se_inc,
        params={"expected": nu * h}))
    report.tests.append(TestReport(
        "reflected_increment_variance_ratio", inc_var / h, None,
        0.95 <= inc_var / h <= 1.05, n_inc,
        params={"expected": 1.0, "band": [0.95, 1.05]}))
    report.tests.append(correlation_band_test(
        m0, y_past, name="past_maximum_vs_past_increment_correlation",
        params={"increment": "Y(-1)-Y(-2)"}))
    report.tests.append(TestReport(
        "reflected_path_zero_at_origin", y0_max, None, y0_max == 0.0, len(m0)))

    # bias of the plain grid maximum, for comparison with the bridge sampler
    plain_cfg = continuum.BrownianConfig(cfg.nu, cfg.brownian_h,
                                         cfg.brownian_past, cfg.brownian_future,
                                         bridge=False)
    plain = continuum.simulate_two_sided_bm(
        plain_cfg, stream.substream(90_001).rng, paths=min(2000, replicas))
    plain_m0 = plain.M[:, plain.origin_index]
    report.tests.append(TestReport(
        "plain_grid_maximum_bias", float(plain_m0.mean() - 1.0 / rate), None,
        True, len(plain_m0), params={"note": "report-only comparison"},
        mandatory=False))
    return report


# ---------------------------------------------------------------------------
# iterated-random-functions suite
# ---------------------------------------------------------------------------

def _family_tallies(family, total: int, window: int, rng_stream, cap: int,
                    threads: int):
    batch = 200_000
    starts = list(range(0, total, batch))

    def task(i):
        count = min(batch, total - starts[i])
        rng = rng_stream.substream(i).rng
        states, _ = irf.stationary_windows(family, count, window, rng, cap=cap)
        sample = irf.relabel_windows(family, states)
        k = len(family.thetas)
        label_counts = np.bincount(sample.labels[sample.labels >= 0].ravel(),
                                   minlength=k)
        ok = sample.valid_windows
        powers = k ** np.arange(window)
        codes = (sample.labels[ok] * powers[None, :]).sum(axis=1)
        return {
            "label_counts": label_counts,
            "unrealizable": sample.unrealizable,
            "z0": sample.left_states[ok],
            "codes": codes,
            "eta_up": sample.labels[ok].sum(axis=1),
            "z0_all": sample.left_states,
        }

    parts = parallel_map(task, list(range(len(starts))), threads)
    return {
        "label_counts": np.sum([p["label_counts"] for p in parts], axis=0),
        "unrealizable": sum(p["unrealizable"] for p in parts),
        "z0": np.concatenate([p["z0"] for p in parts]),
        "codes": np.concatenate([p["codes"] for p in parts]),
        "eta_up": np.concatenate([p["eta_up"] for p in parts]),
        "z0_all": np.concatenate([p["z0_all"] for p in parts]),
    }


def _label_law_report(family, label_counts: np.ndarray, name: str,
                      mandatory: bool = True) -> TestReport:
    n = label_counts.sum()
    kappa = np.asarray(family.kappa)
    freq = label_counts / n if n else kappa
    zs = np.abs(freq - kappa) / np.sqrt(kappa * (1 - kappa) / max(n, 1))
    return TestReport(name, float(zs.max()), None, bool(zs.max() <= 3.0),
                      int(n), bound=3.0,
                      params={"kappa": kappa.tolist(), "freq": freq.tolist()},
                      mandatory=mandatory)


@_timed
def run_irf_suite(cfg: SuiteConfig) -> RunReport:
    report = RunReport("irf", cfg.echo())
    total = cfg.count(1_000_000, floor=1000)
    window = 8
    cap = 64
    stream = derive_stream(cfg.root_seed, _STREAM_IRF)
    p = float(Fraction(cfg.p)) if isinstance(cfg.p, Fraction) else float(cfg.p)
    queue_family = irf.ReflectedWalkFamily(up_prob=1.0 - p)
    bd_family = irf.BirthDeathFamily(6, 0.5)
    control = irf.AsymmetricCycleFamily()

    for fam_idx, family in enumerate((queue_family, bd_family)):
        tal = _family_tallies(family, total, window,
                              stream.substream(fam_idx * 1000), cap,
                              cfg.threads)
        name = family.name
        report.tests.append(_label_law_report(
            family, tal["label_counts"], f"{name}_relabelled_law_3sigma"))
        report.tests.append(TestReport(
            f"{name}_unrealizable_pairs", float(tal["unrealizable"]), None,
            tal["unrealizable"] == 0, total * window))
        report.tests.append(independence_test(
            np.minimum(tal["z0"], 12), tal["codes"],
            name=f"{name}_left_state_vs_labels_gtest"))
        report.tests.append(correlation_band_test(
            tal["z0"], tal["eta_up"],
            name=f"{name}_left_state_vs_labels_correlation"))
        if family.states is None:
            ratio = family.stationary_ratio()
            cut = 12
            report.tests.append(chi_square_gof(
                _counts_up_to(tal["z0_all"], cut), _geometric_cells(ratio, cut),
                name=f"{name}_state_law_detailed_balance",
                params={"ratio": ratio,
                        "cap_tail_bound": family.tail_bound(cap)}))
        else:
            pi = irf.stationary_distribution(irf.transition_matrix(family))
            counts = np.bincount(tal["z0_all"], minlength=len(pi))
            report.tests.append(chi_square_gof(
                counts, pi, name=f"{name}_state_law_linear_solve",
                params={"reversible": irf.is_reversible(family)}))

    ctl_total = max(total // 10, 1000)
    tal = _family_tallies(control, ctl_total, window,
                          stream.substream(99_000), cap, cfg.threads)
    inner = _label_law_report(control, tal["label_counts"],
                              "control_inner_label_law", mandatory=False)
    failed = (not inner.passed) or tal["unrealizable"] > 0
    report.tests.append(TestReport(
        "nonreversible_control_fails_relabelled_law", inner.statistic, None,
        failed, inner.n,
        params={"unrealizable": tal["unrealizable"],
                "reversible": irf.is_reversible(control)}))
    pi = irf.stationary_distribution(irf.transition_matrix(control))
    counts = np.bincount(tal["z0_all"], minlength=len(pi))
    report.tests.append(chi_square_gof(
        counts, pi, name="control_state_law_linear_solve",
        params={"reversible": irf.is_reversible(control)}, mandatory=True))
    return report


# ---------------------------------------------------------------------------
# combined suite
# ---------------------------------------------------------------------------

SUITES = {
    "oracle": run_oracle_suite,
    "discrete": run_discrete_suite,
    "roundtrip": run_roundtrip_suite,
    "encode": run_encode_suite,
    "decode": run_decode_suite,
    "mm1": run_mm1_suite,
    "brownian": run_brownian_suite,
    "irf": run_irf_suite,
}


@_timed
def run_all(cfg: SuiteConfig) -> RunReport:
    report = RunReport("all", cfg.echo())
    for name in ("oracle", "discrete", "roundtrip", "encode", "decode",
                 "mm1", "brownian", "irf"):
        sub = SUITES[name](cfg)
        report.tests.extend(sub.tests)
    return report
