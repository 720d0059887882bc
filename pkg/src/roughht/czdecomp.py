"""Calderon-Zygmund decomposition on Z over the anchored dyadic grid.

Cube selection compares averages against the threshold in exact integer
arithmetic (float values are scaled to a common power-of-two exponent), so
the selected family satisfies lam <= average <= 2*lam with zero tolerance
and agrees with the exhaustive maximal-cube oracle even in borderline cases.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .lattice import DyadicInterval, IntervalFamily, LatticeFunction, band, interval_mean, truncate_split

__all__ = [
    "CZDecomposition",
    "BadIndex",
    "cz_decompose",
    "cz_decompose_bruteforce",
    "purge_small_cubes",
    "surviving_cubes",
    "cube_family",
    "size_class_exponent",
    "bad_part",
    "good_part",
    "good_part_sum",
    "scale_good_part",
    "valid_shrink_range",
    "CubeSizeReport",
    "check_cube_size_bounds",
]


# -- exact comparisons -------------------------------------------------------


def _to_mantissa(v: float) -> tuple[int, int]:
    """v = mant * 2^exp exactly (mant, exp integers)."""
    m, e = math.frexp(float(v))
    return int(m * (1 << 53)), e - 53


def _cmp_scaled(a_int: int, a_exp: int, b_int: int, b_exp: int) -> int:
    """Sign of a_int*2^a_exp - b_int*2^b_exp, computed exactly."""
    if a_exp >= b_exp:
        a_int = a_int << (a_exp - b_exp)
    else:
        b_int = b_int << (b_exp - a_exp)
    return (a_int > b_int) - (a_int < b_int)


class _ExactSums:
    """Exact range sums of a nonnegative sparse function via integer prefixes."""

    def __init__(self, f: LatticeFunction):
        self.sites = f.sites
        mants_exps = [_to_mantissa(v) for v in f.values]
        self.exp = min((e for _, e in mants_exps), default=0)
        prefix = [0]
        for m, e in mants_exps:
            prefix.append(prefix[-1] + (m << (e - self.exp)))
        self.prefix = prefix

    def range_sum(self, lo: int, hi: int) -> int:
        """Integer mantissa of the sum over sites in [lo, hi)."""
        i0 = bisect_left(self.sites, lo)
        i1 = bisect_left(self.sites, hi)
        return self.prefix[i1] - self.prefix[i0]

    def cmp_avg(self, q: DyadicInterval, lam_mant: int, lam_exp: int, mult: int = 1) -> int:
        """Sign of (average of f over q) - mult*lam, exact."""
        s = self.range_sum(q.start, q.stop)
        return _cmp_scaled(s, self.exp, mult * lam_mant, lam_exp + q.scale)

    def exact_average(self, q: DyadicInterval) -> Fraction:
        s = self.range_sum(q.start, q.stop)
        if self.exp >= 0:
            return Fraction(s << self.exp, q.length)
        return Fraction(s, q.length << (-self.exp))


# -- decomposition -----------------------------------------------------------


@dataclass
class CZDecomposition:
    """Maximal dyadic cubes where the source function averages above lam."""

    lam: float
    cubes: IntervalFamily
    averages: tuple
    source: LatticeFunction

    def __len__(self):
        return len(self.cubes)

    def cube_lengths(self) -> list[int]:
        return [q.length for q in self.cubes]

    def cube_for_site(self, x: int) -> DyadicInterval | None:
        return self.cubes.find(x)

    def dump_lines(self) -> list[str]:
        """Text rows 'scale index average', one per cube."""
        return [f"{q.scale} {q.index} {avg!r}" for q, avg in zip(self.cubes, self.averages)]


def _validate_input(f: LatticeFunction, lam: float):
    if np.any(f.values < 0):
        raise ValueError("decomposition requires a nonnegative function")
    if not (lam > 0 and math.isfinite(lam)):
        raise ValueError(f"lam must be a positive finite number, got {lam}")


def _root_cube(f: LatticeFunction, sums: _ExactSums, lam_mant: int, lam_exp: int) -> DyadicInterval:
    smin, smax = f.support_bounds()
    root = DyadicInterval.smallest_covering(smin, smax)
    while sums.cmp_avg(root, lam_mant, lam_exp) > 0:
        root = root.parent()
    return root


def cz_decompose(f: LatticeFunction, lam: float) -> CZDecomposition:
    """Maximal anchored dyadic cubes with average > lam.

    Starts from the smallest anchored cube covering the support, enlarged
    until its average drops to lam or below, then subdivides: any child whose
    average exceeds lam is selected (its average is automatically <= 2*lam),
    the rest recurse.  Off the selected union f <= lam pointwise.
    """
    _validate_input(f, lam)
    if f.is_zero():
        return CZDecomposition(lam, IntervalFamily([]), (), f)
    sums = _ExactSums(f)
    lam_mant, lam_exp = _to_mantissa(lam)
    root = _root_cube(f, sums, lam_mant, lam_exp)
    selected = []
    stack = [root]
    while stack:
        q = stack.pop()
        if q.scale == 0:
            continue
        for child in q.children():
            if sums.range_sum(child.start, child.stop) == 0:
                continue
            if sums.cmp_avg(child, lam_mant, lam_exp) > 0:
                selected.append(child)
            else:
                stack.append(child)
    selected.sort(key=lambda q: q.start)
    averages = tuple(float(sums.exact_average(q)) for q in selected)
    return CZDecomposition(lam, IntervalFamily(selected), averages, f)


def cz_decompose_bruteforce(f: LatticeFunction, lam: float) -> CZDecomposition:
    """Oracle: enumerate every dyadic cube meeting the support, keep the
    maximal ones with average > lam.  Exponential-ish but exact; for tests."""
    _validate_input(f, lam)
    if f.is_zero():
        return CZDecomposition(lam, IntervalFamily([]), (), f)
    sums = _ExactSums(f)
    lam_mant, lam_exp = _to_mantissa(lam)
    root = _root_cube(f, sums, lam_mant, lam_exp)
    smin, smax = f.support_bounds()
    marked = set()
    for k in range(root.scale + 1):
        for a in range(smin >> k, (smax >> k) + 1):
            q = DyadicInterval(k, a)
            if sums.cmp_avg(q, lam_mant, lam_exp) > 0:
                marked.add((k, a))
    maximal = []
    for k, a in marked:
        kk, aa = k, a
        is_max = True
        while kk < root.scale:
            kk, aa = kk + 1, aa >> 1
            if (kk, aa) in marked:
                is_max = False
                break
        if is_max:
            maximal.append(DyadicInterval(k, a))
    maximal.sort(key=lambda q: q.start)
    averages = tuple(float(sums.exact_average(q)) for q in maximal)
    return CZDecomposition(lam, IntervalFamily(maximal), averages, f)


def purge_small_cubes(f: LatticeFunction, dec: CZDecomposition, threshold: float) -> LatticeFunction:
    """Zero out f on every decomposition cube of length <= threshold."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    drop = np.zeros(len(f.sites), dtype=bool)
    for q in dec.cubes:
        if q.length <= threshold:
            drop |= (f.sites >= q.start) & (f.sites < q.stop)
    return f.restrict(~drop)


def surviving_cubes(dec: CZDecomposition, threshold: float) -> IntervalFamily:
    """The cubes that the purge keeps (length > threshold)."""
    return IntervalFamily([q for q in dec.cubes if q.length > threshold])


# -- size classes and bad/good functions -------------------------------------


@dataclass(frozen=True)
class BadIndex:
    """Index (a, n, s, i) of one localized height-band piece.

    a: dyadic height-band divisor; n: dyadic scale; s: size-class shrink
    exponent; i = 1 when 2^s > a, i = 2 when 2^s <= a (checked).
    """

    a: int
    n: int
    s: int
    i: int

    def __post_init__(self):
        for name, v in (("a", self.a), ("n", self.n)):
            if v < 1 or (v & (v - 1)) != 0:
                raise ValueError(f"{name} must be a positive power of two, got {v}")
        if self.s < 0:
            raise ValueError("s must be nonnegative")
        if self.i not in (1, 2):
            raise ValueError("i must be 1 or 2")
        if (self.i == 1) != (1 << self.s > self.a):
            raise ValueError(
                f"index class mismatch: i={self.i} requires 2^s {'>' if self.i == 1 else '<='} a "
                f"(s={self.s}, a={self.a})"
            )


def size_class_exponent(n: int, s: int, alpha: float) -> int:
    """log2 of the cube length class at shrink s: floor(alpha*(log2(n) - s)).

    Negative means the class sits below unit length and is empty.
    """
    return math.floor(alpha * ((n.bit_length() - 1) - s))


def cube_family(dec: CZDecomposition, idx: BadIndex, alpha: float) -> IntervalFamily:
    """Decomposition cubes whose length falls in the shrink-s dyadic class."""
    k = size_class_exponent(idx.n, idx.s, alpha)
    if k < 0:
        return IntervalFamily([])
    return IntervalFamily([q for q in dec.cubes if q.scale == k])


def valid_shrink_range(n: int, a: int, i: int) -> range:
    """Shrink exponents s compatible with class i at height divisor a.

    Classes below unit cube length are empty, so s is capped at log2(n).
    """
    log_n = n.bit_length() - 1
    log_a = a.bit_length() - 1
    if i == 1:
        return range(log_a + 1, log_n + 1)
    return range(0, min(log_a, log_n) + 1)


def bad_part(f: LatticeFunction, dec: CZDecomposition, idx: BadIndex, lam: float, alpha: float) -> LatticeFunction:
    """Mean-zero localized piece: on each class cube, the height band of f
    minus its cube average."""
    g = band(f, lam * idx.n, idx.a)
    fam = cube_family(dec, idx, alpha)
    parts = []
    for q in fam:
        g_q = g.restrict_interval(q.start, q.stop)
        avg = interval_mean(g, q)
        if g_q.is_zero() and avg == 0.0:
            continue
        dense = g_q.to_window(q.start, q.stop) - avg
        parts.append(LatticeFunction.from_window(q.start, dense))
    out = LatticeFunction.zero()
    for p in parts:
        out = out + p
    return out


def good_part(f: LatticeFunction, dec: CZDecomposition, idx: BadIndex, lam: float, alpha: float) -> LatticeFunction:
    """The uncentered piece: the height band of f restricted to the class cubes."""
    g = band(f, lam * idx.n, idx.a)
    fam = cube_family(dec, idx, alpha)
    out = LatticeFunction.zero()
    for q in fam:
        out = out + g.restrict_interval(q.start, q.stop)
    return out


def good_part_sum(f: LatticeFunction, dec: CZDecomposition, a: int, n: int, i: int, lam: float, alpha: float) -> LatticeFunction:
    """Sum over the shrink range of the uncentered pieces at fixed (a, n, i)."""
    out = LatticeFunction.zero()
    for s in valid_shrink_range(n, a, i):
        out = out + good_part(f, dec, BadIndex(a, n, s, i), lam, alpha)
    return out


def scale_good_part(f: LatticeFunction, dec: CZDecomposition, n: int, s: int, lam: float, alpha: float) -> LatticeFunction:
    """Class-2 pieces at fixed shrink s summed over height divisors a >= 2^s."""
    out = LatticeFunction.zero()
    a = 1 << s
    while a <= n:
        out = out + good_part(f, dec, BadIndex(a, n, s, 2), lam, alpha)
        a <<= 1
    return out


# -- executable cube-size bounds ----------------------------------------------


@dataclass
class CubeSizeReport:
    """Outcome of the cube-size lower-bound checks."""

    n: int
    a: int
    checked_high: int
    checked_band: int
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations


def check_cube_size_bounds(f: LatticeFunction, dec: CZDecomposition, lam: float, n: int, a: int) -> CubeSizeReport:
    """Check the derived cube-size bounds against a decomposition of (f, lam).

    Any cube containing a site where f >= lam*n must have length >= n/2, and
    any cube meeting the dyadic band at divisor a must have length >= n/(4a):
    both follow from the cube average being at most 2*lam.
    """
    report = CubeSizeReport(n=n, a=a, checked_high=0, checked_band=0, violations=[])
    _, high = truncate_split(f, lam * n)
    for x in high.sites:
        q = dec.cube_for_site(int(x))
        if q is None:
            continue
        report.checked_high += 1
        if q.length < n / 2:
            report.violations.append(("high", int(x), q))
    banded = band(f, lam * n, a)
    for x in banded.sites:
        q = dec.cube_for_site(int(x))
        if q is None:
            continue
        report.checked_band += 1
        if q.length < n / (4 * a):
            report.violations.append(("band", int(x), q))
    return report
