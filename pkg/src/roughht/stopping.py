"""Stopping-time sequences, window-averaged comparison sequences, and the
executable forms of the sparse-maximum lemmas.

The comparison sequence beta assigns one nonnegative number per dyadic scale;
stopping times are the largest scales at which the accumulated beta stays
under successive multiples of the budget lambda0.  The checks here turn the
corresponding maximal-function lemmas into pointwise assertions that random
sweeps can falsify.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from .lattice import DyadicInterval, IntervalFamily, LatticeFunction, conditional_expectation, lp_norm
from .operators import TransformConfig, convolve

__all__ = [
    "StoppingSequence",
    "stopping_times",
    "averaged_convolutions",
    "build_beta",
    "OscillationReport",
    "oscillation_error",
    "ExceptionalSets",
    "exceptional_sets",
    "StoppingCheckReport",
    "check_stopping_max",
    "check_bad_stopping_max",
]


@dataclass
class StoppingSequence:
    """Stopping scales of a comparison sequence against budget lambda0.

    times[j-1] is the largest grid scale whose accumulated beta stays within
    j * lambda0; None when even the first grid scale overshoots.  The
    sequence is strictly increasing whenever every beta is at most lambda0;
    a repeat below the top scale is recorded as a stall.
    """

    lambda0: float
    betas: dict
    times: list
    stalled: bool
    hypothesis_ok: bool

    @property
    def j_max(self) -> int:
        return len(self.times)


def stopping_times(betas: dict, lambda0: float) -> StoppingSequence:
    """Largest scales with accumulated beta <= j*lambda0, j = 1, 2, ...

    Iteration stops once the top of the grid is reached (every later time
    would repeat it) or, failing that, just past ceil(total/lambda0) + 1.
    """
    if lambda0 <= 0:
        raise ValueError("lambda0 must be positive")
    scales = sorted(betas)
    if not scales:
        raise ValueError("empty beta grid")
    for n in scales:
        if n < 1 or (n & (n - 1)) != 0:
            raise ValueError(f"beta grid must consist of dyadic integers, got {n}")
        if betas[n] < 0:
            raise ValueError("beta values must be nonnegative")
    cums = []
    acc = 0.0
    for n in scales:
        acc += betas[n]
        cums.append(acc)
    total = cums[-1]
    hypothesis_ok = all(betas[n] <= lambda0 for n in scales)
    cap = math.ceil(total / lambda0) + 1
    times = []
    stalled = False
    j = 1
    while True:
        idx = bisect_right(cums, j * lambda0) - 1
        t = scales[idx] if idx >= 0 else None
        if times and t == times[-1] and t != scales[-1]:
            stalled = True
        times.append(t)
        if t == scales[-1] or j >= cap:
            break
        j += 1
    return StoppingSequence(lambda0=lambda0, betas=dict(betas), times=times, stalled=stalled, hypothesis_ok=hypothesis_ok)


# ---------------------------------------------------------------------------
# window-averaged comparison sequences
# ---------------------------------------------------------------------------


def averaged_convolutions(
    good_by_scale: dict, fam_q: IntervalFamily, cfg: TransformConfig
) -> dict:
    """Per scale n: measure_n convolved with the cube-averaged good part."""
    out = {}
    for n in cfg.scales:
        fg = good_by_scale.get(n)
        if fg is None or fg.is_zero():
            out[n] = LatticeFunction.zero()
            continue
        out[n] = convolve(cfg.measure(n), conditional_expectation(fg, fam_q))
    return out


def build_beta(
    good_by_scale: dict,
    fam_q: IntervalFamily,
    j: DyadicInterval,
    cfg: TransformConfig,
    streams: dict | None = None,
) -> dict:
    """beta_n = average over the window j of the cube-averaged convolution.

    Nonnegative whenever the good parts are nonnegative; constant on j by
    construction (one number per scale).  Precomputed streams may be passed
    to share work across windows.
    """
    if streams is None:
        streams = averaged_convolutions(good_by_scale, fam_q, cfg)
    betas = {}
    for n in cfg.scales:
        f = streams[n]
        i0 = int(np.searchsorted(f.sites, j.start))
        i1 = int(np.searchsorted(f.sites, j.stop))
        betas[n] = math.fsum(f.values[i0:i1]) / j.length
    return betas


@dataclass
class OscillationReport:
    """The scale-summed deviation of the averaged streams from their window means."""

    er: LatticeFunction
    l1: float
    ratio: float


def oscillation_error(
    good_by_scale: dict,
    fam_q: IntervalFamily,
    fam_j: IntervalFamily,
    cfg: TransformConfig,
    f0_l1: float,
    streams: dict | None = None,
) -> OscillationReport:
    """ER = sum over scales of |stream - window average of stream|.

    Returns ER together with ||ER||_1 / f0_l1, the decay quantity tracked
    across the top-scale sweep.
    """
    if streams is None:
        streams = averaged_convolutions(good_by_scale, fam_q, cfg)
    er = LatticeFunction.zero()
    for n in cfg.scales:
        f = streams[n]
        if f.is_zero():
            continue
        diff = f - conditional_expectation(f, fam_j)
        er = er + diff.abs()
    l1 = lp_norm(er, 1)
    ratio = l1 / f0_l1 if f0_l1 > 0 else math.inf
    return OscillationReport(er=er, l1=l1, ratio=ratio)


# ---------------------------------------------------------------------------
# exceptional sets
# ---------------------------------------------------------------------------


@dataclass
class ExceptionalSets:
    """Whole-window unions where the summed beta mass crosses its threshold."""

    by_a: dict
    by_s: dict
    chebyshev_rows: list = field(default_factory=list)

    def ok(self) -> bool:
        return all(size <= bound + 1e-12 for _, size, bound in self.chebyshev_rows)


def exceptional_sets(
    beta_totals_by_a: dict,
    beta_totals_by_s: dict,
    lam: float,
    fam_j: IntervalFamily,
    epsilon: float,
) -> ExceptionalSets:
    """Select whole windows whose summed beta reaches the class threshold.

    Height-divisor classes use threshold lam * a^2, shrink classes
    lam * 2^(s*epsilon); both inclusive.  Every selected set is a union of
    whole windows, and its size is checked against the Chebyshev bound
    (sum of |J| * total beta) / threshold.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    sets_a, sets_s, rows = {}, {}, []

    def build(totals: dict, threshold: float, label):
        picked = [j for j in fam_j if totals.get(j, 0.0) >= threshold]
        fam = IntervalFamily(picked)
        size = fam.total_length()
        mass = math.fsum(totals.get(j, 0.0) * j.length for j in fam_j)
        rows.append((label, size, mass / threshold))
        return fam

    for a, totals in sorted(beta_totals_by_a.items()):
        sets_a[a] = build(totals, lam * a * a, ("a", a))
    for s, totals in sorted(beta_totals_by_s.items()):
        sets_s[s] = build(totals, lam * 2.0 ** (s * epsilon), ("s", s))
    return ExceptionalSets(by_a=sets_a, by_s=sets_s, chebyshev_rows=rows)


# ---------------------------------------------------------------------------
# executable sparse-maximum checks
# ---------------------------------------------------------------------------


@dataclass
class StoppingCheckReport:
    """Pointwise outcome of a sparse-maximum implication sweep."""

    hypothesis_count: int = 0
    conclusion_count: int = 0
    er_branch_count: int = 0
    skipped_scales: list = field(default_factory=list)
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _dense_stream(terms: dict, scales: list, lo: int, hi: int) -> np.ndarray:
    """Stack per-scale functions into a (len(scales), hi-lo) dense matrix."""
    out = np.zeros((len(scales), hi - lo))
    for r, n in enumerate(scales):
        f = terms.get(n)
        if f is None or f.is_zero():
            continue
        out[r] = f.to_window(lo, hi)
    return out


def check_stopping_max(
    good_by_scale: dict,
    betas: dict,
    lambda0: float,
    cfg: TransformConfig,
    window: tuple[int, int] | None = None,
) -> StoppingCheckReport:
    """Verify: wherever some truncation of sum(measure_n * good_n - beta_n)
    reaches 4*lambda0 in absolute value, the same sum restricted to the
    stopping scales already reaches lambda0.

    Scales with beta above lambda0 violate the hypothesis and are split off
    and reported rather than checked (the two-collection remark); the check
    runs on the compliant collection.
    """
    report = StoppingCheckReport()
    compliant = [n for n in cfg.scales if betas.get(n, 0.0) <= lambda0]
    report.skipped_scales = [n for n in cfg.scales if n not in compliant]
    if not compliant:
        return report
    terms = {n: convolve(cfg.measure(n), good_by_scale[n]) for n in compliant if n in good_by_scale and not good_by_scale[n].is_zero()}
    if window is None:
        los = [int(t.sites[0]) for t in terms.values() if not t.is_zero()]
        his = [int(t.sites[-1]) for t in terms.values() if not t.is_zero()]
        if not los:
            return report
        window = (min(los), max(his) + 1)
    lo, hi = window
    sub_betas = {n: betas.get(n, 0.0) for n in compliant}
    seq = stopping_times(sub_betas, lambda0)
    stop_set = {t for t in seq.times if t is not None}
    mat = _dense_stream(terms, compliant, lo, hi)
    for r, n in enumerate(compliant):
        mat[r] -= sub_betas[n]
    partial = np.cumsum(mat, axis=0)
    all_max = np.abs(partial).max(axis=0)
    stop_rows = [r for r, n in enumerate(compliant) if n in stop_set]
    stop_max = np.abs(partial[stop_rows]).max(axis=0) if stop_rows else np.zeros(hi - lo)
    hyp = all_max >= 4 * lambda0
    report.hypothesis_count = int(hyp.sum())
    concl = stop_max >= lambda0
    report.conclusion_count = int((hyp & concl).sum())
    bad = hyp & ~concl
    for i in np.nonzero(bad)[0]:
        report.violations.append((lo + int(i), float(all_max[i]), float(stop_max[i])))
    return report


def check_bad_stopping_max(
    bad_by_scale: dict,
    good_by_scale: dict,
    fam_q: IntervalFamily,
    j: DyadicInterval,
    lambda0: float,
    cfg: TransformConfig,
) -> StoppingCheckReport:
    """The mean-zero variant: wherever some truncation of sum(measure_n * bad_n)
    reaches 4*lambda0 on the window j, then along the stopping scales of the
    window-averaged beta, restricted to one of the two collections
    {beta <= lambda0} / {beta > lambda0}, the truncations reach lambda0/8 --
    or the oscillation error has already reached lambda0.

    beta comes from the good parts over j; branch counts record how often the
    oscillation alternative fires rather than asserting which branch wins.
    """
    report = StoppingCheckReport()
    streams = averaged_convolutions(good_by_scale, fam_q, cfg)
    betas = build_beta(good_by_scale, fam_q, j, cfg, streams=streams)
    scales = cfg.scales
    seq = stopping_times(betas, lambda0)
    stop_set = sorted({t for t in seq.times if t is not None})
    collections = (
        [n for n in scales if betas[n] <= lambda0],
        [n for n in scales if betas[n] > lambda0],
    )
    report.skipped_scales = collections[1]
    lo, hi = j.start, j.stop
    terms = {
        n: convolve(cfg.measure(n), bad_by_scale[n])
        for n in scales
        if n in bad_by_scale and not bad_by_scale[n].is_zero()
    }
    mat = _dense_stream(terms, scales, lo, hi)
    all_max = np.abs(np.cumsum(mat, axis=0)).max(axis=0)
    stop_max = np.zeros(hi - lo)
    for coll in collections:
        if not coll:
            continue
        cmat = _dense_stream(terms, coll, lo, hi)
        cpartial = np.cumsum(cmat, axis=0)
        for t in stop_set:
            row = sum(1 for n in coll if n <= t) - 1
            if row >= 0:
                np.maximum(stop_max, np.abs(cpartial[row]), out=stop_max)
    er = np.zeros(hi - lo)
    for n in scales:
        er += np.abs(streams[n].to_window(lo, hi) - betas[n])
    hyp = all_max >= 4 * lambda0
    report.hypothesis_count = int(hyp.sum())
    stop_branch = stop_max >= lambda0 / 8
    er_branch = er >= lambda0
    report.conclusion_count = int((hyp & stop_branch).sum())
    report.er_branch_count = int((hyp & ~stop_branch & er_branch).sum())
    bad = hyp & ~stop_branch & ~er_branch
    for i in np.nonzero(bad)[0]:
        report.violations.append((lo + int(i), float(all_max[i]), float(stop_max[i])))
    return report
