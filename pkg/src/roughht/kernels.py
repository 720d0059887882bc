"""Bilinear window kernels of the curve measures and numerical regularity probes.

The kernel at scales (n1, n2) over a window J is the weighted correlation
K(x1, x2) = sum over y in J of w((y - center)/|J|) mu_n1(x1 - y) mu_n2(x2 - y),
computed exactly as a dense rectangle on the reachable sites.  The probes
measure its size constant, Holder increments (log-log regression), and the
near-diagonal structure at equal scales; none of them assume the bounds they
report on.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .lattice import DyadicInterval, LatticeFunction
from .measures import window_bump
from .operators import TransformConfig, convolve

__all__ = [
    "BilinearKernel",
    "kernel",
    "probe_size_bound",
    "probe_holder",
    "holder_increment_steps",
    "DiagonalSplit",
    "diagonal_split",
    "err_family_sum",
    "averaged_kernel_holder",
]

SUPPORT_RADIUS_FACTOR = lambda alpha: 2.0**alpha + 1.0  # noqa: E731


def _window_range(j) -> tuple[int, int]:
    """Normalize a window spec (DyadicInterval or (start, stop)) to ints."""
    if isinstance(j, DyadicInterval):
        return j.start, j.stop
    start, stop = j
    if stop <= start:
        raise ValueError("empty window")
    return int(start), int(stop)


@dataclass
class BilinearKernel:
    """Dense rectangle of kernel values with its provenance geometry.

    values[i1, i2] is the kernel at (x1_start + i1, x2_start + i2); the
    rectangle covers every reachable site, so the kernel is exactly zero
    outside it.
    """

    n1: int
    n2: int
    alpha: float
    j_start: int
    j_stop: int
    x1_start: int
    x2_start: int
    values: np.ndarray

    @property
    def center(self) -> float:
        return (self.j_start + self.j_stop) / 2.0

    @property
    def j_length(self) -> int:
        return self.j_stop - self.j_start

    def sup(self) -> float:
        if self.values.size == 0:
            return 0.0
        return float(np.abs(self.values).max())

    def support_violation_count(self) -> int:
        """Nonzero entries outside the declared rectangle |x - center| <= C*n^alpha."""
        if self.values.size == 0:
            return 0
        c = SUPPORT_RADIUS_FACTOR(self.alpha)
        x1 = self.x1_start + np.arange(self.values.shape[0])
        x2 = self.x2_start + np.arange(self.values.shape[1])
        ok1 = np.abs(x1 - self.center) <= c * self.n1**self.alpha
        ok2 = np.abs(x2 - self.center) <= c * self.n2**self.alpha
        outside = ~(ok1[:, None] & ok2[None, :])
        return int(np.count_nonzero(self.values[outside]))

    def sup_increment(self, h: int, direction: int) -> float:
        """sup over the plane of |K(x + h e_dir) - K(x)|; zero padding is exact."""
        if self.values.size == 0:
            return 0.0
        v = self.values if direction == 1 else self.values.T
        h = int(h)
        pad = np.zeros((h, v.shape[1]))
        ext = np.concatenate([pad, v, pad], axis=0)
        return float(np.abs(ext[h:] - ext[:-h]).max())

    def apply(self, b: LatticeFunction) -> np.ndarray:
        """Contraction along x1: returns sum_x1 K(x1, x2) b(x1) on the x2 range."""
        if self.values.size == 0:
            return np.zeros(0)
        v1 = b.to_window(self.x1_start, self.x1_start + self.values.shape[0])
        return v1 @ self.values

    def quadratic_form(self, b1: LatticeFunction, b2: LatticeFunction) -> float:
        """<K b1, b2> = sum over (x1, x2) of K(x1, x2) b1(x1) b2(x2)."""
        if self.values.size == 0:
            return 0.0
        v2 = b2.to_window(self.x2_start, self.x2_start + self.values.shape[1])
        return float(self.apply(b1) @ v2)


def kernel(n1: int, n2: int, j, cfg: TransformConfig) -> BilinearKernel:
    """Exact dense evaluation of the window kernel at scales (n1, n2).

    The window weight is the recentered bump at relative offset from the
    window center, so interior sites of j carry positive weight.
    """
    j_start, j_stop = _window_range(j)
    length = j_stop - j_start
    center = (j_start + j_stop) / 2.0
    ys = np.arange(j_start, j_stop)
    psi = np.asarray(window_bump()((ys - center) / length), dtype=np.float64)
    keep = psi > 0.0
    ys, psi = ys[keep], psi[keep]
    mu1, mu2 = cfg.measure(n1), cfg.measure(n2)
    if len(ys) == 0 or len(mu1) == 0 or len(mu2) == 0:
        return BilinearKernel(n1, n2, cfg.alpha, j_start, j_stop, 0, 0, np.zeros((0, 0)))
    x1_lo = int(ys[0] + mu1.sites[0])
    x2_lo = int(ys[0] + mu2.sites[0])
    d1 = int(ys[-1] + mu1.sites[-1]) - x1_lo + 1
    d2 = int(ys[-1] + mu2.sites[-1]) - x2_lo + 1
    if d1 * d2 > 1 << 27:
        raise MemoryError(f"kernel rectangle {d1} x {d2} exceeds the memory guard")
    rows = np.arange(len(ys))
    a1 = np.zeros((len(ys), d1))
    a1[rows[:, None], ys[:, None] + mu1.sites[None, :] - x1_lo] = mu1.weights[None, :]
    a2 = np.zeros((len(ys), d2))
    a2[rows[:, None], ys[:, None] + mu2.sites[None, :] - x2_lo] = mu2.weights[None, :]
    values = (a1 * psi[:, None]).T @ a2
    return BilinearKernel(n1, n2, cfg.alpha, j_start, j_stop, x1_lo, x2_lo, values)


# ---------------------------------------------------------------------------
# probes
# ---------------------------------------------------------------------------


def probe_size_bound(n1: int, n2: int, j, cfg: TransformConfig, kern: BilinearKernel | None = None) -> float:
    """Empirical constant of the unequal-scale size bound:
    sup |K| * (n1*n2)^alpha / |J|."""
    if n1 == n2:
        raise ValueError("size-bound probe requires distinct scales")
    if kern is None:
        kern = kernel(n1, n2, j, cfg)
    return kern.sup() * (n1 * n2) ** cfg.alpha / kern.j_length


def holder_increment_steps(n: int, alpha: float) -> list[int]:
    """Dyadic increments 1, 2, 4, ... capped at a quarter of the kernel scale."""
    top = max(1.0, n**alpha / 4.0)
    return [1 << k for k in range(int(math.log2(top)) + 1)]


def _loglog_fit(hs, ds, scale: float) -> tuple[float, float]:
    """Least squares of log d against log(h/scale); returns (slope, exp(intercept))."""
    xs = np.log(np.asarray(hs, dtype=np.float64) / scale)
    ys = np.log(np.asarray(ds, dtype=np.float64))
    slope, intercept = np.polyfit(xs, ys, 1)
    return float(slope), float(math.exp(intercept))


def probe_holder(
    n1: int, n2: int, j, cfg: TransformConfig, direction: int = 1, kern: BilinearKernel | None = None
) -> tuple[float, float]:
    """Fitted Holder exponent and constant of the kernel increments.

    Regresses sup |K(x + h e_dir) - K(x)| against h / n_dir^alpha over dyadic
    h; the constant is normalized like the size bound, by |J|/(n1*n2)^alpha.
    All-zero increments report an infinite exponent.
    """
    if direction not in (1, 2):
        raise ValueError("direction must be 1 or 2")
    if kern is None:
        kern = kernel(n1, n2, j, cfg)
    n_dir = n1 if direction == 1 else n2
    hs = holder_increment_steps(n_dir, cfg.alpha)
    ds = [kern.sup_increment(h, direction) for h in hs]
    pairs = [(h, d) for h, d in zip(hs, ds) if d > 0.0]
    if not pairs:
        return math.inf, 0.0
    if len(pairs) == 1:
        # single usable increment; exponent undetermined, report the raw level
        h, d = pairs[0]
        return math.inf, d * (n1 * n2) ** cfg.alpha / kern.j_length
    slope, level = _loglog_fit([p[0] for p in pairs], [p[1] for p in pairs], n_dir**cfg.alpha)
    c_hat = level * (n1 * n2) ** cfg.alpha / kern.j_length
    return slope, c_hat


@dataclass
class DiagonalSplit:
    """Equal-scale kernel split into smooth background, a lumped diagonal
    coefficient, and the banded remainder."""

    n: int
    epsilon: float
    band_halfwidth: int
    smooth: BilinearKernel
    err: BilinearKernel
    diag_coeff: float

    def diag_ratio(self, alpha: float) -> float:
        """|diagonal coefficient| normalized by |J| / n^(1+alpha)."""
        return abs(self.diag_coeff) * self.n ** (1.0 + alpha) / self.smooth.j_length

    def reconstruction_error(self, original: BilinearKernel) -> float:
        recon = self.smooth.values + self.err.values
        d1, d2 = recon.shape
        shift = self.smooth.x2_start - self.smooth.x1_start
        i2 = np.arange(d2)
        i1 = i2 + shift  # rows where x1 == x2
        ok = (i1 >= 0) & (i1 < d1)
        recon[i1[ok], i2[ok]] += self.diag_coeff
        denom = original.sup() or 1.0
        return float(np.abs(recon - original.values).max() / denom)


def _off_band_poly_fill(values: np.ndarray, shift: int, w: int, fit_width: int, degree: int = 2) -> np.ndarray:
    """Columnwise polynomial extrapolation of the off-band values into the band.

    shift maps column index i2 to the row index of the diagonal; columns whose
    off-band shell has too few points keep their original values.
    """
    smooth = values.copy()
    d1, d2 = values.shape
    for i2 in range(d2):
        diag_row = i2 + shift
        lo_b = max(0, diag_row - w)
        hi_b = min(d1, diag_row + w + 1)
        if lo_b >= d1 or hi_b <= 0 or lo_b >= hi_b:
            continue
        rows = np.concatenate(
            [np.arange(max(0, lo_b - fit_width), lo_b), np.arange(hi_b, min(d1, hi_b + fit_width))]
        )
        if len(rows) < degree + 2:
            continue
        coeffs = np.polyfit(rows - diag_row, values[rows, i2], degree)
        band_rows = np.arange(lo_b, hi_b)
        smooth[band_rows, i2] = np.polyval(coeffs, band_rows - diag_row)
    return smooth


def diagonal_split(n: int, j, cfg: TransformConfig, epsilon: float = 0.05) -> DiagonalSplit:
    """Split the equal-scale kernel near the diagonal.

    The band |x1 - x2| <= n^(1-epsilon) is refilled by a columnwise local
    polynomial fit of the off-band values (the smooth piece); the lumped
    diagonal coefficient is the mean excess of K over the smooth piece on the
    diagonal, and the banded remainder absorbs what is left, making the
    reconstruction exact by construction.
    """
    kern = kernel(n, n, j, cfg)
    w = max(1, int(n ** (1.0 - epsilon)))
    if kern.values.size == 0:
        zero = BilinearKernel(n, n, cfg.alpha, kern.j_start, kern.j_stop, kern.x1_start, kern.x2_start, np.zeros((0, 0)))
        return DiagonalSplit(n=n, epsilon=epsilon, band_halfwidth=w, smooth=kern, err=zero, diag_coeff=0.0)
    if 2 * w >= max(kern.values.shape):
        raise ValueError(f"band halfwidth {w} swallows the whole kernel rectangle")
    shift = kern.x2_start - kern.x1_start
    fit_width = max(4, w // 2)
    smooth_vals = _off_band_poly_fill(kern.values, shift, w, fit_width)
    # lumped diagonal coefficient: mean excess over the smooth fill on the diagonal
    d1, d2 = kern.values.shape
    i2 = np.arange(d2)
    diag_rows = i2 + shift
    ok = (diag_rows >= 0) & (diag_rows < d1)
    excess = kern.values[diag_rows[ok], i2[ok]] - smooth_vals[diag_rows[ok], i2[ok]]
    support = np.abs(kern.values[diag_rows[ok], i2[ok]]) > 0
    diag_coeff = float(excess[support].mean()) if np.any(support) else 0.0
    err_vals = kern.values - smooth_vals
    err_vals[diag_rows[ok], i2[ok]] -= diag_coeff
    # outside the band the smooth piece is the kernel itself and the remainder vanishes
    rows = np.arange(d1)
    in_band = np.abs(rows[:, None] - shift - i2[None, :]) <= w
    err_vals[~in_band] = 0.0
    smooth_vals = np.where(in_band, smooth_vals, kern.values)
    smooth = BilinearKernel(n, n, cfg.alpha, kern.j_start, kern.j_stop, kern.x1_start, kern.x2_start, smooth_vals)
    err = BilinearKernel(n, n, cfg.alpha, kern.j_start, kern.j_stop, kern.x1_start, kern.x2_start, err_vals)
    return DiagonalSplit(n=n, epsilon=epsilon, band_halfwidth=w, smooth=smooth, err=err, diag_coeff=diag_coeff)


def err_family_sum(n: int, j_length: int, cfg: TransformConfig, epsilon: float = 0.05) -> float:
    """sup over (x1, x2) of the sum over window translates of |banded remainder|,
    rescaled by n^alpha.

    Translates step by the window length and cover every window whose kernel
    can reach a neighborhood of the curve sites at scale n.
    """
    c = SUPPORT_RADIUS_FACTOR(cfg.alpha)
    reach = int(c * n**cfg.alpha)
    t_lo = -(2 * reach) // j_length - 1
    t_hi = (2 * reach) // j_length + 1
    acc: dict[tuple[int, int], float] = {}
    best = 0.0
    for t in range(t_lo, t_hi + 1):
        j = (t * j_length, (t + 1) * j_length)
        split = diagonal_split(n, j, cfg, epsilon)
        ev = split.err.values
        if ev.size == 0:
            continue
        nz = np.nonzero(ev)
        for i1, i2, v in zip(nz[0].tolist(), nz[1].tolist(), np.abs(ev[nz]).tolist()):
            key = (split.err.x1_start + i1, split.err.x2_start + i2)
            s = acc.get(key, 0.0) + v
            acc[key] = s
            if s > best:
                best = s
    return best * n**cfg.alpha


def averaged_kernel_holder(
    n: int, q: DyadicInterval, cfg: TransformConfig, h_list=None, epsilon: float = 0.05
) -> tuple[float, float]:
    """Holder probe of the box-averaged measure kernel in the l^2 sense.

    K(x) = (mu_n * indicator of q)(x) / |q|; the probe regresses
    sum_x |K(x+h) - K(x)|^2 against h / n^alpha and reports the fitted
    exponent and the constant normalized by n^alpha.  Boxes below the
    resolution threshold m^(alpha - 1 + epsilon) are allowed with a warning
    (the degradation is informative).
    """
    if q.length < cfg.m ** (cfg.alpha - 1.0 + epsilon):
        warnings.warn(
            f"box length {q.length} is below the resolution threshold; expect degraded regularity",
            stacklevel=2,
        )
    if h_list is None:
        h_list = holder_increment_steps(n, cfg.alpha)
    ind = LatticeFunction(q.sites(), np.ones(q.length))
    k = convolve(cfg.measure(n), ind) * (1.0 / q.length)
    if k.is_zero():
        return math.inf, 0.0
    lo, hi = k.support_bounds()
    dense = k.to_window(lo, hi + 1)
    gs = []
    for h in h_list:
        h = int(h)
        if h == 0:
            continue
        pad = np.zeros(h)
        ext = np.concatenate([pad, dense, pad])
        gs.append((h, float(np.sum((ext[h:] - ext[:-h]) ** 2))))
    pairs = [(h, g) for h, g in gs if g > 0.0]
    if len(pairs) < 2:
        return math.inf, 0.0
    slope, level = _loglog_fit([p[0] for p in pairs], [p[1] for p in pairs], n**cfg.alpha)
    return slope, level * n**cfg.alpha
