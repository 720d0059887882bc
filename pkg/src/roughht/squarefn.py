"""Dyadic-block square functions: the maximal-to-square reduction and the
windowed square-function two-sided computation.

menshov_check bounds a maximum of partial sums by the levelwise sum of
squared dyadic block sums with a logarithmic factor; square_function_sides
evaluates both sides of the windowed square-function estimate, with the
probe constants standing in for the unquantified ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import DyadicInterval, LatticeFunction, lp_norm
from .measures import window_bump
from .operators import TransformConfig, convolve
from .kernels import diagonal_split

__all__ = [
    "BlockSquareReport",
    "menshov_check",
    "dyadic_block_sums",
    "enclosing_block_interval",
    "SquareFunctionSides",
    "square_function_sides",
]


@dataclass
class BlockSquareReport:
    """Both sides of the dyadic-block square bound for one sequence."""

    d: int
    levels: int
    lhs: float
    rhs: float
    level_sums: list

    @property
    def ok(self) -> bool:
        return self.lhs <= self.rhs * (1 + 1e-12)


def menshov_check(a) -> BlockSquareReport:
    """max prefix-sum squared vs L * sum over levels of squared block sums.

    Levels run k = 0..L with L = ceil(log2(max(D, 2))), blocks of length 2^k
    aligned at multiples of 2^k (the last block may be short).  Any prefix
    decomposes into at most L aligned blocks, so the bound holds with the
    factor L; the convention keeps D = 1 non-vacuous.
    """
    a = np.asarray(a, dtype=np.float64)
    d = len(a)
    if d < 1:
        raise ValueError("sequence must be nonempty")
    levels = math.ceil(math.log2(max(d, 2)))
    prefix = np.cumsum(a)
    lhs = float(np.max(prefix**2))
    level_sums = []
    for k in range(levels + 1):
        width = 1 << k
        total = 0.0
        for s0 in range(0, d, width):
            blk = float(a[s0 : s0 + width].sum())
            total += blk * blk
        level_sums.append(total)
    rhs = levels * math.fsum(level_sums)
    return BlockSquareReport(d=d, levels=levels, lhs=lhs, rhs=rhs, level_sums=level_sums)


def dyadic_block_sums(terms: list, k: int) -> list:
    """Pointwise sums of consecutive groups of 2^k terms (last group may be short)."""
    if k < 0:
        raise ValueError("level must be nonnegative")
    width = 1 << k
    out = []
    for s0 in range(0, len(terms), width):
        acc = LatticeFunction.zero()
        for t in terms[s0 : s0 + width]:
            acc = acc + t
        out.append(acc)
    return out


def enclosing_block_interval(n: int, j: DyadicInterval, alpha: float) -> tuple[DyadicInterval, tuple[int, int]]:
    """The scale-n covering block of j and its 3x concentric enlargement.

    Blocks at scale n are the dyadic intervals with 8*n^alpha <= length
    < 16*n^alpha; the enlargement (a plain site range) is wide enough to
    contain every site a scale-n measure can reach from inside the block.
    """
    k = math.ceil(3.0 + alpha * (n.bit_length() - 1) - 1e-9)
    block = DyadicInterval.containing(k, j.start)
    if j.stop > block.stop:
        raise ValueError(f"window {j} does not fit inside a scale-{n} block")
    pad = block.length
    return block, (block.start - pad, block.stop + pad)


@dataclass
class SquareFunctionSides:
    """Left side and the three right-side terms of the windowed square bound."""

    lhs: float
    d1: float
    d2: float
    d3: float
    block_count: int
    details: dict = field(default_factory=dict)

    @property
    def rhs(self) -> float:
        return self.d1 + self.d2 + self.d3

    @property
    def ratio(self) -> float:
        if self.rhs == 0.0:
            return 0.0 if self.lhs == 0.0 else math.inf
        return self.lhs / self.rhs


def square_function_sides(
    j: DyadicInterval,
    bad_parts: dict,
    stops: list,
    cfg: TransformConfig,
    delta: float = 0.3,
    c_size: float = 1.0,
    c_diag: float = 1.0,
    epsilon: float = 0.05,
) -> SquareFunctionSides:
    """Evaluate the windowed square function and its three-term majorant.

    bad_parts maps (n, s) to the mean-zero localized piece at scale n and
    shrink s (fixed height class).  The left side sums, over blocks cut by
    the increasing stop list, the window-weighted squared block sums of the
    measure convolutions.  The right side uses the fitted kernel constants:
    a shrink-damped product of block l^1 norms (all scale pairs), a squared
    l^2 term, and the banded-remainder couplings (equal scales only).  None
    of the three depends on the stop list.
    """
    if list(stops) != sorted(stops) or len(set(stops)) != len(stops):
        raise ValueError("stop list must be strictly increasing")
    scales = [n for n in cfg.scales]
    shrinks = sorted({s for (_, s) in bad_parts})
    # left side: blocks (stops[t], stops[t+1]]
    lo, hi = j.start, j.stop
    ys = np.arange(lo, hi)
    psi = np.asarray(window_bump()((ys - j.center) / j.length), dtype=np.float64)
    conv = {}
    for (n, s), b in bad_parts.items():
        if b.is_zero():
            continue
        conv[(n, s)] = convolve(cfg.measure(n), b).to_window(lo, hi)
    lhs = 0.0
    block_count = 0
    for t in range(len(stops) - 1):
        blk = np.zeros(hi - lo)
        touched = False
        for (n, s), dense in conv.items():
            if stops[t] < n <= stops[t + 1]:
                blk += dense
                touched = True
        if touched:
            lhs += float(np.sum(blk * blk * psi))
            block_count += 1
    # right side
    norms1, norms2sq = {}, {}
    for (n, s), b in bad_parts.items():
        _, (e_lo, e_hi) = enclosing_block_interval(n, j, cfg.alpha)
        clipped = b.restrict_interval(e_lo, e_hi)
        norms1[(n, s)] = lp_norm(clipped, 1)
        norms2sq[(n, s)] = lp_norm(clipped, 2) ** 2
    d1 = 0.0
    for s1 in shrinks:
        for s2 in shrinks:
            damp = 2.0 ** (-delta * (s1 + s2))
            for n1 in scales:
                for n2 in scales:
                    if n2 > n1:
                        continue
                    a = norms1.get((n1, s1), 0.0)
                    b = norms1.get((n2, s2), 0.0)
                    if a == 0.0 or b == 0.0:
                        continue
                    d1 += damp * j.length / float(n1 * n2) ** cfg.alpha * a * b
    d1 *= c_size
    d2 = 0.0
    for (n, s), sq in norms2sq.items():
        d2 += j.length / float(n) ** (cfg.alpha + 1.0) * sq
    d2 *= c_diag
    d3 = 0.0
    err_cache = {}
    for n in scales:
        parts = [(s, b) for (nn, s), b in bad_parts.items() if nn == n and not b.is_zero()]
        if not parts:
            continue
        if n not in err_cache:
            err_cache[n] = diagonal_split(n, j, cfg, epsilon).err
        err = err_cache[n]
        for s1, b1 in parts:
            applied = np.abs(err.apply(b1))
            for s2, b2 in parts:
                v2 = np.abs(b2.to_window(err.x2_start, err.x2_start + err.values.shape[1]))
                d3 += float(applied @ v2)
    return SquareFunctionSides(
        lhs=lhs,
        d1=d1,
        d2=d2,
        d3=d3,
        block_count=block_count,
        details={"delta": delta, "c_size": c_size, "c_diag": c_diag, "shrinks": shrinks},
    )
