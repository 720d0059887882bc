"""Curve measures on Z, their reflections and autocorrelations, and bump profiles.

The basic object places mass phi(m/N)/m at the site floor(m^alpha) for
m = N..2N.  Floors are certified exactly: a float64 fast path accepts the
clear cases and an escalating-precision mpmath check settles anything close
to an integer, so no downstream test ever sees a silently wrong site.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import mpmath
import numpy as np

from .lattice import LatticeFunction

__all__ = [
    "BumpFunction",
    "default_bump",
    "window_bump",
    "zero_bump",
    "PointMassMeasure",
    "curve_measure",
    "reflect",
    "antisymmetric_part",
    "autocorrelation_offdiag_sup",
    "floor_powers",
]

ALPHA_SOFT_LIMIT = 1.001  # larger exponents are untested; allowed with a warning


@dataclass(frozen=True)
class BumpFunction:
    """Smooth profile with declared compact support (supp_lo, supp_hi).

    The evaluator must vanish identically outside the open support interval
    and be bounded by 1.
    """

    name: str
    evaluator: Callable[[float], float]
    supp_lo: float = 1.0
    supp_hi: float = 2.0

    def __call__(self, t) -> np.ndarray | float:
        t = np.asarray(t, dtype=np.float64)
        out = np.zeros_like(t)
        inside = (t > self.supp_lo) & (t < self.supp_hi)
        if np.any(inside):
            out[inside] = self.evaluator(t[inside])
        if out.ndim == 0:
            return float(out)
        return out


def _smooth_profile(t):
    # exp(4 - 1/((t-1)(2-t))), normalized to 1 at the midpoint t = 1.5
    denom = (t - 1.0) * (2.0 - t)
    return np.exp(4.0 - 1.0 / denom)


def default_bump() -> BumpFunction:
    """The standard compactly supported exponential bump on (1, 2), peak 1 at 1.5."""
    return BumpFunction("default", _smooth_profile, 1.0, 2.0)


def window_bump() -> BumpFunction:
    """Recentered copy of the default bump, supported on (-1/2, 1/2), peak 1 at 0.

    Used to weight sites of an interval J via t = (x - center(J)) / |J|, where
    a profile living on (1, 2) would vanish identically.
    """
    return BumpFunction("window", lambda t: _smooth_profile(t + 1.5), -0.5, 0.5)


def zero_bump() -> BumpFunction:
    return BumpFunction("zero", lambda t: np.zeros_like(t), 1.0, 2.0)


_NAMED_BUMPS = {"default": default_bump, "window": window_bump, "zero": zero_bump}


def bump_by_name(name: str) -> BumpFunction:
    try:
        return _NAMED_BUMPS[name]()
    except KeyError:
        raise ValueError(f"unknown bump {name!r}; known: {sorted(_NAMED_BUMPS)}") from None


class PointMassMeasure:
    """Finite signed atomic measure on Z: sorted sites with nonzero weights."""

    __slots__ = ("sites", "weights")

    def __init__(self, sites, weights, *, _canonical=False):
        sites = np.asarray(sites, dtype=np.int64)
        weights = np.asarray(weights, dtype=np.float64)
        if not _canonical:
            order = np.argsort(sites, kind="stable")
            sites, weights = sites[order], weights[order]
            uniq, inverse = np.unique(sites, return_inverse=True)
            if len(uniq) != len(sites):
                # colliding sites accumulate; never happens for alpha > 1
                weights = np.bincount(inverse, weights=weights, minlength=len(uniq))
                sites = uniq
            keep = weights != 0.0
            sites, weights = sites[keep], weights[keep]
        self.sites = sites
        self.weights = weights
        self.sites.setflags(write=False)
        self.weights.setflags(write=False)

    def __len__(self):
        return len(self.sites)

    def __repr__(self):
        if len(self) == 0:
            return "PointMassMeasure(empty)"
        return f"PointMassMeasure(<{len(self)} atoms on [{self.sites[0]}, {self.sites[-1]}]>)"

    def __eq__(self, other):
        if not isinstance(other, PointMassMeasure):
            return NotImplemented
        return bool(np.array_equal(self.sites, other.sites) and np.array_equal(self.weights, other.weights))

    def total_mass(self) -> float:
        # fsum is exactly rounded, so a weight multiset that cancels in exact
        # arithmetic really returns 0.0
        return float(math.fsum(self.weights))

    def weight_at(self, x: int) -> float:
        i = np.searchsorted(self.sites, x)
        if i < len(self.sites) and self.sites[i] == x:
            return float(self.weights[i])
        return 0.0

    def as_function(self) -> LatticeFunction:
        return LatticeFunction(self.sites, self.weights)

    def __neg__(self):
        return PointMassMeasure(self.sites, -self.weights, _canonical=True)

    def __sub__(self, other: "PointMassMeasure") -> "PointMassMeasure":
        return PointMassMeasure(
            np.concatenate([self.sites, other.sites]),
            np.concatenate([self.weights, -other.weights]),
        )


# ---------------------------------------------------------------------------
# exact floors of m^alpha
# ---------------------------------------------------------------------------

_FLOAT_MARGIN = 1e-8  # float64 fractional parts farther than this from 0/1 are trusted


def _floor_power_certified(m: int, alpha: float) -> int:
    """floor(m^alpha) with escalating mpmath precision until certain.

    m^alpha is never an integer for m >= 2 and non-integer binary64 alpha
    (the exponent's denominator is an enormous power of two), so the loop
    terminates; m = 1 is the one exact power.
    """
    if m == 1:
        return 1
    for dps in (50, 120, 300, 1000):
        with mpmath.workdps(dps):
            v = mpmath.power(m, mpmath.mpf(alpha))
            fl = mpmath.floor(v)
            # certified when the value is farther from the integer above/below
            # than the arithmetic error at this precision
            err = mpmath.mpf(10) ** (int(mpmath.log10(v)) - dps + 5)
            if v - fl > err and (fl + 1) - v > err:
                return int(fl)
    raise ArithmeticError(f"could not certify floor({m}^{alpha})")


def floor_powers(ms: np.ndarray, alpha: float) -> np.ndarray:
    """Exact floor(m^alpha) for an integer array, certified for m <= 2^24."""
    ms = np.asarray(ms, dtype=np.int64)
    if np.any(ms < 1) or np.any(ms > 1 << 24):
        raise ValueError("m out of the certified range [1, 2^24]")
    approx = np.power(ms.astype(np.float64), alpha)
    floors = np.floor(approx).astype(np.int64)
    frac = approx - floors
    suspicious = (frac < _FLOAT_MARGIN) | (frac > 1.0 - _FLOAT_MARGIN)
    for i in np.nonzero(suspicious)[0]:
        floors[i] = _floor_power_certified(int(ms[i]), alpha)
    return floors


def _check_alpha(alpha: float, allow_large: bool):
    if alpha <= 1.0:
        raise ValueError(f"alpha must exceed 1, got {alpha}")
    if alpha > ALPHA_SOFT_LIMIT and not allow_large:
        warnings.warn(
            f"alpha = {alpha} is above the tested range (1, {ALPHA_SOFT_LIMIT}]; proceeding",
            stacklevel=3,
        )


def _check_dyadic(n: int, name: str = "N"):
    if n < 2 or (n & (n - 1)) != 0:
        raise ValueError(f"{name} must be a dyadic integer >= 2, got {n}")


def curve_measure(n: int, alpha: float, phi: BumpFunction | None = None, *, allow_large_alpha=False) -> PointMassMeasure:
    """Atomic measure with mass phi(m/n)/m at floor(m^alpha), m = n..2n.

    The profile vanishes at both endpoints of (1, 2), so including m = n and
    m = 2n is immaterial; they are kept for definiteness.
    """
    _check_dyadic(n)
    _check_alpha(alpha, allow_large_alpha)
    if phi is None:
        phi = default_bump()
    ms = np.arange(n, 2 * n + 1, dtype=np.int64)
    w = np.asarray(phi(ms / n), dtype=np.float64) / ms
    keep = w != 0.0
    if not np.any(keep):
        return PointMassMeasure(np.empty(0, np.int64), np.empty(0, np.float64), _canonical=True)
    sites = floor_powers(ms[keep], alpha)
    return PointMassMeasure(sites, w[keep])


def reflect(m: PointMassMeasure) -> PointMassMeasure:
    """Pushforward under x -> -x: atom (s, w) becomes (-s, w)."""
    return PointMassMeasure(-m.sites[::-1], m.weights[::-1], _canonical=True)


def antisymmetric_part(n: int, alpha: float, phi: BumpFunction | None = None, *, allow_large_alpha=False) -> PointMassMeasure:
    """The odd measure curve_measure - its reflection; total mass exactly 0."""
    mu = curve_measure(n, alpha, phi, allow_large_alpha=allow_large_alpha)
    return mu - reflect(mu)


def autocorrelation_offdiag_sup(n: int, alpha: float, phi: BumpFunction | None = None, *, allow_large_alpha=False) -> float:
    """sup over x != 0 of |(mu * reflected mu)(x)|, rescaled by n^alpha.

    (mu * mu~)(x) = sum over atom pairs with site difference x of the weight
    products; the diagonal x = 0 (the squared-weight mass) is excluded.  The
    return value is the empirical constant of the off-diagonal decay bound.
    """
    mu = curve_measure(n, alpha, phi, allow_large_alpha=allow_large_alpha)
    k = len(mu)
    if k <= 1:
        return 0.0
    sites = mu.sites
    span = int(sites[-1] - sites[0])
    acc = np.zeros(2 * span + 1)
    # chunked double loop keeps the pair table small at large n
    chunk = max(1, (1 << 22) // k)
    for i0 in range(0, k, chunk):
        i1 = min(k, i0 + chunk)
        diffs = (sites[i0:i1, None] - sites[None, :]).ravel() + span
        prods = (mu.weights[i0:i1, None] * mu.weights[None, :]).ravel()
        acc += np.bincount(diffs, weights=prods, minlength=2 * span + 1)
    acc[span] = 0.0  # drop the diagonal
    return float(np.abs(acc).max() * n**alpha)
