"""Convolution engine and the truncated transforms with their maximal variants.

The running transform sums measure convolutions over a dyadic scale range
[M^theta, M].  The incremental maximal function and its brute-force oracle
are required to agree bit for bit, so every accumulation here fixes the same
floating-point order: scales increasing, one dense window buffer per call,
one in-place addition per scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import IntervalFamily, LatticeFunction, conditional_expectation, lp_norm, truncate_split
from .measures import BumpFunction, PointMassMeasure, antisymmetric_part, curve_measure, default_bump

__all__ = [
    "TransformConfig",
    "convolve",
    "partial_sum",
    "maximal_transform",
    "maximal_transform_bruteforce",
    "level_set_size",
    "weak_l1_ratio",
    "FourTermSplit",
    "four_term_split",
    "split_term_maximal_sups",
]

DIRECT_OP_LIMIT = 1 << 22  # atom count * support size below this runs the direct path
FFT_BUFFER_LIMIT = 1 << 24  # hard memory guard on the circular buffer


def _ceil_guarded(x: float) -> int:
    # theta * log2(M) is often an exact integer in intent but not in floats;
    # nudge before ceiling so 8.000000000000002 still counts as 8
    return math.ceil(x - 1e-9)


@dataclass
class TransformConfig:
    """Parameters of the truncated transform: top scale m, cutoff exponent theta,
    curve exponent alpha, and the bump profile.

    The dyadic scale set runs from 2^ceil(theta*log2(m)) up to m inclusive.
    Measures are built lazily and cached per scale.
    """

    m: int
    theta: float = 0.8
    alpha: float = 1.001
    phi: BumpFunction = field(default_factory=default_bump)
    allow_large_alpha: bool = False
    _measures: dict = field(default_factory=dict, repr=False, compare=False)
    _odd_measures: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.m < 2 or (self.m & (self.m - 1)) != 0:
            raise ValueError(f"m must be a dyadic integer >= 2, got {self.m}")
        if not (0.0 < self.theta < 1.0):
            raise ValueError(f"theta must lie in (0, 1), got {self.theta}")
        if not self.scales:
            raise ValueError("empty scale set; decrease theta or increase m")

    @property
    def log2_m(self) -> int:
        return self.m.bit_length() - 1

    @property
    def scales(self) -> list[int]:
        k_min = _ceil_guarded(self.theta * self.log2_m)
        return [1 << k for k in range(k_min, self.log2_m + 1)]

    def measure(self, n: int) -> PointMassMeasure:
        if n not in self._measures:
            self._measures[n] = curve_measure(
                n, self.alpha, self.phi, allow_large_alpha=self.allow_large_alpha
            )
        return self._measures[n]

    def odd_measure(self, n: int) -> PointMassMeasure:
        if n not in self._odd_measures:
            self._odd_measures[n] = antisymmetric_part(
                n, self.alpha, self.phi, allow_large_alpha=self.allow_large_alpha
            )
        return self._odd_measures[n]

    def site_extent(self) -> int:
        """Upper bound on |site| over every atom of every scale's odd measure."""
        top = self.measure(self.m)
        if len(top) == 0:
            return 1
        return int(top.sites[-1])


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------


def convolve(m: PointMassMeasure, f: LatticeFunction, mode: str = "auto") -> LatticeFunction:
    """(m * f)(x) = sum over atoms (s, w) of w * f(x - s).

    direct: exact sparse accumulation; fft: both factors embedded in a
    power-of-two circular buffer large enough to rule out wraparound.  auto
    picks direct below DIRECT_OP_LIMIT multiply-adds.
    """
    if len(m) == 0 or f.is_zero():
        return LatticeFunction.zero()
    lo = int(m.sites[0] + f.sites[0])
    hi = int(m.sites[-1] + f.sites[-1])
    span = hi - lo + 1
    if mode == "auto":
        mode = "direct" if len(m) * len(f) < DIRECT_OP_LIMIT else "fft"
    if mode == "direct":
        out = np.zeros(span)
        idx = (m.sites[:, None] - lo) + f.sites[None, :]
        np.add.at(out, idx.ravel(), (m.weights[:, None] * f.values[None, :]).ravel())
        return LatticeFunction.from_window(lo, out)
    if mode == "fft":
        size = 1 << (span - 1).bit_length()
        if size > FFT_BUFFER_LIMIT:
            raise MemoryError(
                f"fft convolution buffer of {size} sites exceeds the {FFT_BUFFER_LIMIT} guard; "
                "supports too wide"
            )
        dm = np.zeros(int(m.sites[-1] - m.sites[0]) + 1)
        dm[m.sites - m.sites[0]] = m.weights
        df = f.to_window(int(f.sites[0]), int(f.sites[-1]) + 1)
        spec = np.fft.rfft(dm, size) * np.fft.rfft(df, size)
        out = np.fft.irfft(spec, size)[:span]
        return LatticeFunction.from_window(lo, out)
    raise ValueError(f"unknown convolution mode {mode!r}")


# ---------------------------------------------------------------------------
# partial sums and maximal truncation
# ---------------------------------------------------------------------------


def _signed_measure(cfg: TransformConfig, n: int, signed: bool) -> PointMassMeasure:
    return cfg.odd_measure(n) if signed else cfg.measure(n)


def _accumulation_window(cfg: TransformConfig, f: LatticeFunction, signed: bool) -> tuple[int, int]:
    ext = cfg.site_extent()
    flo, fhi = f.support_bounds()
    lo = flo + (-ext if signed else 1)
    hi = fhi + ext
    return lo, hi + 1


def partial_sum(f: LatticeFunction, b: int, cfg: TransformConfig, signed: bool = True) -> LatticeFunction:
    """Sum over scales n <= b in the config's scale set of (measure_n * f)."""
    if b not in cfg.scales:
        raise ValueError(f"b = {b} is not one of the transform scales {cfg.scales}")
    if f.is_zero():
        return LatticeFunction.zero()
    lo, hi = _accumulation_window(cfg, f, signed)
    buf = np.zeros(hi - lo)
    for n in cfg.scales:
        if n > b:
            break
        term = convolve(_signed_measure(cfg, n, signed), f)
        if not term.is_zero():
            buf[term.sites - lo] += term.values
    return LatticeFunction.from_window(lo, buf)


def maximal_transform(f: LatticeFunction, cfg: TransformConfig) -> LatticeFunction:
    """Pointwise max over truncation levels b of |partial_sum(f, b)| (signed).

    Incremental: one running sum over scales, one running max.  Accumulation
    order (scales increasing, same window buffer) matches partial_sum exactly,
    so the result is bit-identical to the brute-force oracle.
    """
    if f.is_zero():
        return LatticeFunction.zero()
    lo, hi = _accumulation_window(cfg, f, signed=True)
    buf = np.zeros(hi - lo)
    best = np.zeros(hi - lo)
    for n in cfg.scales:
        term = convolve(cfg.odd_measure(n), f)
        if not term.is_zero():
            buf[term.sites - lo] += term.values
        np.maximum(best, np.abs(buf), out=best)
    return LatticeFunction.from_window(lo, best)


def maximal_transform_bruteforce(f: LatticeFunction, cfg: TransformConfig) -> LatticeFunction:
    """Oracle for maximal_transform: recompute every truncation from scratch."""
    if f.is_zero():
        return LatticeFunction.zero()
    lo, hi = _accumulation_window(cfg, f, signed=True)
    best = np.zeros(hi - lo)
    for b in cfg.scales:
        ps = partial_sum(f, b, cfg, signed=True)
        np.maximum(best, np.abs(ps.to_window(lo, hi)), out=best)
    return LatticeFunction.from_window(lo, best)


def l2_operator_norm(cfg: TransformConfig, min_grid: int = 1 << 18) -> float:
    """Exact l2 -> l2 norm of the transform's circulant embedding.

    The full transform is convolution by the sum of the odd measures, so its
    norm on the circular embedding is the largest spectral magnitude of that
    sum; random test vectors only see the spectral mean, which decays with
    the scale count, so the sup is computed from the spectrum directly.
    """
    ext = cfg.site_extent()
    dense = np.zeros(2 * ext + 1)
    for n in cfg.scales:
        nu = cfg.odd_measure(n)
        dense[nu.sites + ext] += nu.weights
    size = 1 << max((min_grid - 1).bit_length(), (len(dense) - 1).bit_length() + 1)
    return float(np.abs(np.fft.rfft(dense, size)).max())


def level_set_size(g: LatticeFunction, lam: float) -> int:
    """#{x : |g(x)| > lam}, strict inequality."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    return int(np.count_nonzero(np.abs(g.values) > lam))


def weak_l1_ratio(f: LatticeFunction, cfg: TransformConfig, lam: float) -> float:
    """lam * |{maximal transform > lam}| / ||f||_1, the weak (1,1) quotient."""
    if f.is_zero():
        raise ValueError("weak-type ratio of the zero function is undefined")
    g = maximal_transform(f, cfg)
    return lam * level_set_size(g, lam) / lp_norm(f, 1)


# ---------------------------------------------------------------------------
# four-term splitting
# ---------------------------------------------------------------------------


@dataclass
class FourTermSplit:
    """Per-scale decomposition of f0 into (high, E high, centered low, E f0).

    components[n] = (f_inf, e_f_inf, centered_low, e_f0) where f_inf is the
    part of f0 at height >= lam*n, centered_low = low - E low, and E averages
    over the cube family.  g_m is the signed-measure sum of the E f_inf parts.
    """

    lam: float
    fam_q: IntervalFamily
    fam_j: IntervalFamily | None
    e_f0: LatticeFunction
    components: dict
    g_m: LatticeFunction

    def reconstruction_error(self, f0: LatticeFunction) -> float:
        """Max over scales of the sup-distance between the recombined terms and f0."""
        worst = 0.0
        for f_inf, e_f_inf, centered_low, e_f0 in self.components.values():
            recon = f_inf - e_f_inf + centered_low + e_f0
            worst = max(worst, lp_norm(recon - f0, math.inf))
        return worst


def four_term_split(
    f0: LatticeFunction,
    cfg: TransformConfig,
    lam: float,
    fam_q: IntervalFamily,
    fam_j: IntervalFamily | None = None,
) -> FourTermSplit:
    """Split f0 at height lam*n for every scale n and average over the cubes.

    fam_q must be the Calderon-Zygmund family of (f0, lam); disjointness is
    enforced by IntervalFamily itself.  fam_j, when given, is carried along
    for downstream window machinery.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    e_f0 = conditional_expectation(f0, fam_q)
    components = {}
    g_m_parts = []
    for n in cfg.scales:
        low, high = truncate_split(f0, lam * n)
        e_high = conditional_expectation(high, fam_q)
        e_low = conditional_expectation(low, fam_q)
        components[n] = (high, e_high, low - e_low, e_f0)
        if not e_high.is_zero():
            g_m_parts.append(convolve(cfg.odd_measure(n), e_high))
    g_m = LatticeFunction.zero()
    for part in g_m_parts:
        g_m = g_m + part
    return FourTermSplit(lam=lam, fam_q=fam_q, fam_j=fam_j, e_f0=e_f0, components=components, g_m=g_m)


def split_term_maximal_sups(split: FourTermSplit, cfg: TransformConfig) -> tuple[float, float, float, float]:
    """Sup norms of the four maximal partial-sum streams of the split.

    Term k feeds component k of every scale into the signed running sum; the
    returned values are the sup over x and truncation level of each stream.
    """
    sups = []
    for k in range(4):
        buf = None
        lo = None
        best = 0.0
        for n in cfg.scales:
            comp = split.components[n][k]
            if comp.is_zero():
                continue
            term = convolve(cfg.odd_measure(n), comp)
            if term.is_zero():
                continue
            if buf is None:
                ext = cfg.site_extent()
                lo = int(term.sites[0]) - 2 * ext
                buf = np.zeros(int(term.sites[-1]) - lo + 2 * ext + 1)
            if term.sites[0] - lo < 0 or term.sites[-1] - lo >= len(buf):
                # grow the buffer; rare, supports are nested across scales
                new_lo = min(lo, int(term.sites[0]) - 1)
                new_hi = max(lo + len(buf), int(term.sites[-1]) + 2)
                grown = np.zeros(new_hi - new_lo)
                grown[lo - new_lo : lo - new_lo + len(buf)] = buf
                buf, lo = grown, new_lo
            buf[term.sites - lo] += term.values
            best = max(best, float(np.abs(buf).max()))
        sups.append(best)
    return tuple(sups)
