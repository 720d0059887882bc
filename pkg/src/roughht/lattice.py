"""Finitely supported functions on the integer lattice and dyadic interval algebra.

Everything downstream (curve measures, transforms, decompositions) is built on
two value types: LatticeFunction, a sparse real-valued function on Z, and
DyadicInterval, a half-open interval [a*2^k, (a+1)*2^k) on the grid anchored
at 0.  All values are immutable after construction and safe to share.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LatticeFunction",
    "DyadicInterval",
    "IntervalFamily",
    "lp_norm",
    "truncate_split",
    "band",
    "conditional_expectation",
    "hl_maximal",
]


class LatticeFunction:
    """Sparse real function on Z: sorted integer sites with nonzero values.

    Canonical form: sites strictly increasing, no stored value is exactly 0,
    support finite.  Absent sites evaluate to 0.
    """

    __slots__ = ("sites", "values")

    def __init__(self, sites, values, *, _canonical=False):
        sites = np.asarray(sites, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if sites.shape != values.shape or sites.ndim != 1:
            raise ValueError("sites and values must be 1-d arrays of equal length")
        if not _canonical:
            sites, values = _canonicalize(sites, values)
        self.sites = sites
        self.values = values
        self.sites.setflags(write=False)
        self.values.setflags(write=False)

    # -- constructors -------------------------------------------------------

    @staticmethod
    def zero() -> "LatticeFunction":
        return LatticeFunction(np.empty(0, np.int64), np.empty(0, np.float64), _canonical=True)

    @staticmethod
    def from_dict(d: dict) -> "LatticeFunction":
        if not d:
            return LatticeFunction.zero()
        items = sorted(d.items())
        return LatticeFunction([s for s, _ in items], [v for _, v in items])

    @staticmethod
    def delta(site: int, height: float = 1.0) -> "LatticeFunction":
        return LatticeFunction([site], [height])

    @staticmethod
    def from_window(lo: int, dense) -> "LatticeFunction":
        """Build from a dense array whose index 0 sits at lattice site lo."""
        dense = np.asarray(dense, dtype=np.float64)
        nz = np.nonzero(dense)[0]
        return LatticeFunction(nz + lo, dense[nz], _canonical=True)

    # -- basics -------------------------------------------------------------

    def __len__(self):
        return len(self.sites)

    def is_zero(self) -> bool:
        return len(self.sites) == 0

    def __eq__(self, other):
        if not isinstance(other, LatticeFunction):
            return NotImplemented
        return (
            len(self) == len(other)
            and bool(np.array_equal(self.sites, other.sites))
            and bool(np.array_equal(self.values, other.values))
        )

    def __hash__(self):
        return hash((self.sites.tobytes(), self.values.tobytes()))

    def __repr__(self):
        if len(self) > 6:
            return f"LatticeFunction(<{len(self)} sites on [{self.sites[0]}, {self.sites[-1]}]>)"
        pairs = ", ".join(f"{s}:{v:.6g}" for s, v in zip(self.sites, self.values))
        return f"LatticeFunction({{{pairs}}})"

    def __call__(self, x: int) -> float:
        i = np.searchsorted(self.sites, x)
        if i < len(self.sites) and self.sites[i] == x:
            return float(self.values[i])
        return 0.0

    def to_dict(self) -> dict:
        return {int(s): float(v) for s, v in zip(self.sites, self.values)}

    def support_bounds(self) -> tuple[int, int]:
        """(min site, max site); raises on the zero function."""
        if self.is_zero():
            raise ValueError("zero function has no support")
        return int(self.sites[0]), int(self.sites[-1])

    def to_window(self, lo: int, hi: int) -> np.ndarray:
        """Dense values on [lo, hi); sites outside the window are dropped."""
        out = np.zeros(hi - lo, dtype=np.float64)
        mask = (self.sites >= lo) & (self.sites < hi)
        out[self.sites[mask] - lo] = self.values[mask]
        return out

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other: "LatticeFunction") -> "LatticeFunction":
        if self.is_zero():
            return other
        if other.is_zero():
            return self
        sites = np.concatenate([self.sites, other.sites])
        values = np.concatenate([self.values, other.values])
        return LatticeFunction(sites, values)

    def __neg__(self) -> "LatticeFunction":
        return LatticeFunction(self.sites, -self.values, _canonical=True)

    def __sub__(self, other: "LatticeFunction") -> "LatticeFunction":
        return self + (-other)

    def __mul__(self, c: float) -> "LatticeFunction":
        c = float(c)
        if c == 0.0:
            return LatticeFunction.zero()
        return LatticeFunction(self.sites, self.values * c)

    __rmul__ = __mul__

    def abs(self) -> "LatticeFunction":
        return LatticeFunction(self.sites, np.abs(self.values), _canonical=True)

    def translate(self, k: int) -> "LatticeFunction":
        return LatticeFunction(self.sites + int(k), self.values, _canonical=True)

    def restrict(self, mask: np.ndarray) -> "LatticeFunction":
        """Keep the sites where the boolean mask (aligned with .sites) is True."""
        return LatticeFunction(self.sites[mask], self.values[mask])

    def restrict_interval(self, lo: int, hi: int) -> "LatticeFunction":
        """Restriction to sites in [lo, hi)."""
        i0 = int(np.searchsorted(self.sites, lo))
        i1 = int(np.searchsorted(self.sites, hi))
        return LatticeFunction(self.sites[i0:i1], self.values[i0:i1], _canonical=True)


def _canonicalize(sites, values):
    """Sort, merge duplicate sites by summation, drop exact zeros."""
    if len(sites) == 0:
        return sites.astype(np.int64), values.astype(np.float64)
    order = np.argsort(sites, kind="stable")
    sites = sites[order]
    values = values[order]
    uniq, inverse = np.unique(sites, return_inverse=True)
    if len(uniq) != len(sites):
        values = np.bincount(inverse, weights=values, minlength=len(uniq))
        sites = uniq
    nz = values != 0.0
    return sites[nz], values[nz]


@dataclass(frozen=True, order=True)
class DyadicInterval:
    """Half-open interval [index*2^scale, (index+1)*2^scale) on Z, anchored at 0."""

    scale: int
    index: int

    def __post_init__(self):
        if self.scale < 0:
            raise ValueError("scale must be nonnegative")

    @property
    def start(self) -> int:
        return self.index << self.scale

    @property
    def stop(self) -> int:
        return (self.index + 1) << self.scale

    def __len__(self) -> int:
        return 1 << self.scale

    @property
    def length(self) -> int:
        return 1 << self.scale

    @property
    def center(self) -> float:
        return (self.start + self.stop) / 2.0

    def contains_site(self, x: int) -> bool:
        return self.start <= x < self.stop

    def contains(self, other: "DyadicInterval") -> bool:
        return self.scale >= other.scale and (other.index >> (self.scale - other.scale)) == self.index

    def intersects(self, other: "DyadicInterval") -> bool:
        return self.start < other.stop and other.start < self.stop

    def parent(self) -> "DyadicInterval":
        return DyadicInterval(self.scale + 1, self.index >> 1)

    def children(self) -> tuple["DyadicInterval", "DyadicInterval"]:
        if self.scale == 0:
            raise ValueError("unit interval has no children")
        return (
            DyadicInterval(self.scale - 1, 2 * self.index),
            DyadicInterval(self.scale - 1, 2 * self.index + 1),
        )

    def sites(self) -> np.ndarray:
        return np.arange(self.start, self.stop, dtype=np.int64)

    @staticmethod
    def containing(scale: int, x: int) -> "DyadicInterval":
        """The unique interval of the given scale containing site x."""
        return DyadicInterval(scale, x >> scale)

    @staticmethod
    def smallest_covering(lo: int, hi: int) -> "DyadicInterval":
        """Smallest anchored dyadic interval containing {lo, ..., hi}."""
        if lo > hi:
            raise ValueError("empty site range")
        k = 0
        while (lo >> k) != (hi >> k):
            k += 1
        return DyadicInterval(k, lo >> k)


class IntervalFamily:
    """Finite family of pairwise disjoint dyadic intervals, sorted by start."""

    __slots__ = ("intervals",)

    def __init__(self, intervals):
        ivs = sorted(intervals, key=lambda q: q.start)
        for a, b in zip(ivs, ivs[1:]):
            if b.start < a.stop:
                raise ValueError(f"intervals overlap: {a} and {b}")
        self.intervals = tuple(ivs)

    def __iter__(self):
        return iter(self.intervals)

    def __len__(self):
        return len(self.intervals)

    def __getitem__(self, i):
        return self.intervals[i]

    def __repr__(self):
        return f"IntervalFamily({len(self.intervals)} intervals)"

    def total_length(self) -> int:
        return sum(q.length for q in self.intervals)

    def find(self, x: int) -> DyadicInterval | None:
        """The member containing site x, or None."""
        starts = [q.start for q in self.intervals]
        import bisect

        i = bisect.bisect_right(starts, x) - 1
        if i >= 0 and self.intervals[i].contains_site(x):
            return self.intervals[i]
        return None

    @staticmethod
    def tiling(lo: int, hi: int, scale: int) -> "IntervalFamily":
        """All scale-`scale` dyadic intervals meeting [lo, hi)."""
        a0 = lo >> scale
        a1 = (hi - 1) >> scale
        return IntervalFamily([DyadicInterval(scale, a) for a in range(a0, a1 + 1)])


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def lp_norm(f: LatticeFunction, p) -> float:
    """l^p norm of f, p in [1, inf]; p = inf gives sup |f|."""
    if p != math.inf and p < 1:
        raise ValueError(f"p must be in [1, inf], got {p}")
    if f.is_zero():
        return 0.0
    a = np.abs(f.values)
    if p == math.inf:
        return float(a.max())
    if p == 1:
        return float(math.fsum(a))
    if p == 2:
        return float(math.sqrt(math.fsum(a * a)))
    return float(math.fsum(a**p) ** (1.0 / p))


def truncate_split(f: LatticeFunction, cutoff: float) -> tuple[LatticeFunction, LatticeFunction]:
    """Split f into (low, high): low = f on {|f| < cutoff}, high = f - low.

    The split is a partition of the stored values, so low + high rebuilds f
    exactly, site by site.  The inequality is strict: |f| == cutoff lands in
    the high part.
    """
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    below = np.abs(f.values) < cutoff
    return f.restrict(below), f.restrict(~below)


def band(f: LatticeFunction, top: float, a: int) -> LatticeFunction:
    """Restriction of f to the dyadic height band top/(2a) <= |f| < top/a.

    Summing over dyadic a = 1, 2, 4, ... tiles (0, top), so the bands rebuild
    truncate_split(f, top).low exactly.
    """
    if top <= 0:
        raise ValueError("top must be positive")
    if a < 1 or (a & (a - 1)) != 0:
        raise ValueError(f"a must be a positive power of two, got {a}")
    c = a.bit_length() - 1
    # thresholds via ldexp: exact halving, graceful underflow for huge a
    lo_thr = math.ldexp(top, -(c + 1))
    hi_thr = math.ldexp(top, -c)
    mag = np.abs(f.values)
    mask = (mag >= lo_thr) & (mag < hi_thr)
    return f.restrict(mask)


def band_indices(f: LatticeFunction, top: float) -> list[int]:
    """The dyadic band indices a for which band(f, top, a) is nonzero."""
    out = set()
    for v in np.abs(f.values):
        if not 0.0 < v < top:
            continue
        # a = 2^c with top/(2a) <= v < top/a; locate by log, then settle
        # boundary rounding with the same comparisons band() itself uses
        e = max(0, int(math.floor(math.log2(top) - 1.0 - math.log2(v))))
        for c in (e - 1, e, e + 1, e + 2):
            if c < 0:
                continue
            if math.ldexp(top, -(c + 1)) <= v < math.ldexp(top, -c):
                out.add(1 << c)
                break
    return sorted(out)


def conditional_expectation(f: LatticeFunction, fam: IntervalFamily) -> LatticeFunction:
    """Replace f by its average on each interval of the family, 0 elsewhere."""
    sites_out = []
    values_out = []
    for q in fam:
        i0 = int(np.searchsorted(f.sites, q.start))
        i1 = int(np.searchsorted(f.sites, q.stop))
        if i1 == i0:
            continue
        avg = math.fsum(f.values[i0:i1]) / q.length
        if avg == 0.0:
            continue
        sites_out.append(q.sites())
        values_out.append(np.full(q.length, avg))
    if not sites_out:
        return LatticeFunction.zero()
    return LatticeFunction(np.concatenate(sites_out), np.concatenate(values_out))


def interval_mean(f: LatticeFunction, q: DyadicInterval) -> float:
    """Average of f over the interval q (absent sites count as 0)."""
    i0 = int(np.searchsorted(f.sites, q.start))
    i1 = int(np.searchsorted(f.sites, q.stop))
    return math.fsum(f.values[i0:i1]) / q.length


def hl_maximal(f: LatticeFunction, window: tuple[int, int]) -> LatticeFunction:
    """Centered Hardy-Littlewood maximal function of f on the window [lo, hi).

    At each x the sup runs over intervals {x-r, ..., x+r}, r >= 0.  Once the
    interval covers supp f the averages only decay, so radii are capped at the
    distance needed to cover the support.
    """
    lo, hi = window
    if f.is_zero():
        return LatticeFunction.zero()
    smin, smax = f.support_bounds()
    if not (lo <= smin and smax < hi):
        raise ValueError("window must cover the support of f")
    absf = np.abs(f.values)
    # prefix[i] = sum of |f| over sites < smin + i
    dense = np.zeros(smax - smin + 1)
    dense[f.sites - smin] = absf
    prefix = np.concatenate([[0.0], np.cumsum(dense)])

    def mass(a: int, b: int) -> np.ndarray:
        # sum of |f| over [a, b] (arrays), clipped to the support span
        a = np.clip(a - smin, 0, len(prefix) - 1)
        b = np.clip(b - smin + 1, 0, len(prefix) - 1)
        return prefix[b] - prefix[a]

    xs = np.arange(lo, hi, dtype=np.int64)
    out = np.empty(len(xs))
    for i, x in enumerate(xs):
        rmax = max(abs(int(x) - smin), abs(int(x) - smax))
        r = np.arange(rmax + 1)
        avgs = mass(x - r, x + r) / (2 * r + 1)
        out[i] = avgs.max()
    return LatticeFunction.from_window(lo, out)
