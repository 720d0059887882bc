import math

import numpy as np
import pytest

from roughht.lattice import IntervalFamily, LatticeFunction, lp_norm
from roughht.measures import PointMassMeasure, curve_measure
from roughht.operators import (
    TransformConfig,
    convolve,
    four_term_split,
    l2_operator_norm,
    level_set_size,
    maximal_transform,
    maximal_transform_bruteforce,
    partial_sum,
    split_term_maximal_sups,
    weak_l1_ratio,
)
from roughht.czdecomp import cz_decompose


def lf(d):
    return LatticeFunction.from_dict(d)


def random_pair(rng, atoms=20, sites=50, span=500):
    s1 = np.unique(rng.integers(-span, span, size=atoms))
    m = PointMassMeasure(s1, rng.normal(size=len(s1)))
    s2 = np.unique(rng.integers(-span, span, size=sites))
    f = LatticeFunction(s2, rng.normal(size=len(s2)))
    return m, f


# -- TransformConfig ----------------------------------------------------------


def test_scale_set():
    cfg = TransformConfig(m=16, theta=0.5)
    assert cfg.scales == [4, 8, 16]


def test_scale_set_integer_boundary():
    # theta * log2(m) = 8 exactly; the cutoff must not creep up to 2^9
    cfg = TransformConfig(m=1 << 10, theta=0.8)
    assert cfg.scales[0] == 1 << 8


def test_config_validation():
    with pytest.raises(ValueError):
        TransformConfig(m=100)
    with pytest.raises(ValueError):
        TransformConfig(m=16, theta=1.5)


# -- convolve -------------------------------------------------------------------


def test_convolve_single_shift():
    m = PointMassMeasure([5], [0.1])
    assert convolve(m, lf({0: 2.0})).to_dict() == {5: pytest.approx(0.2)}


def test_convolve_identity_atom():
    m = PointMassMeasure([0], [1.0])
    f = lf({0: 2.0, 3: -1.0})
    assert convolve(m, f) == f


def test_convolve_direct_vs_fft():
    rng = np.random.default_rng(11)
    for _ in range(20):
        m, f = random_pair(rng)
        d = convolve(m, f, mode="direct")
        g = convolve(m, f, mode="fft")
        lo = int(m.sites[0] + f.sites[0])
        hi = int(m.sites[-1] + f.sites[-1]) + 1
        dd, gg = d.to_window(lo, hi), g.to_window(lo, hi)
        scale = np.abs(dd).max()
        assert np.abs(dd - gg).max() <= 1e-9 * max(scale, 1e-30)


def test_convolve_memory_guard():
    m = PointMassMeasure([0, 1 << 26], [1.0, 1.0])
    f = lf({0: 1.0, 5: 1.0})
    with pytest.raises(MemoryError):
        convolve(m, f, mode="fft")


def test_convolve_empty():
    assert convolve(PointMassMeasure([], []), lf({0: 1.0})).is_zero()
    assert convolve(PointMassMeasure([1], [1.0]), LatticeFunction.zero()).is_zero()


# -- partial sums ----------------------------------------------------------------


def test_partial_sum_min_scale_is_odd_measure():
    cfg = TransformConfig(m=16, theta=0.5, alpha=1.001)
    ps = partial_sum(LatticeFunction.delta(0), cfg.scales[0], cfg, signed=True)
    nu = cfg.odd_measure(cfg.scales[0])
    assert ps == nu.as_function()


def test_partial_sum_zero_function():
    cfg = TransformConfig(m=16, theta=0.5)
    assert partial_sum(LatticeFunction.zero(), 16, cfg).is_zero()


def test_partial_sum_additivity():
    cfg = TransformConfig(m=64, theta=0.5)
    f = lf({0: 1.0, 3: -2.0})
    total = partial_sum(f, 64, cfg)
    prev = partial_sum(f, 16, cfg)
    tail = LatticeFunction.zero()
    for n in (32, 64):
        tail = tail + convolve(cfg.odd_measure(n), f)
    diff = total - prev
    lo, hi = -600, 600
    assert np.allclose(diff.to_window(lo, hi), tail.to_window(lo, hi), rtol=0, atol=1e-14)


def test_partial_sum_rejects_off_grid_level():
    cfg = TransformConfig(m=16, theta=0.5)
    with pytest.raises(ValueError):
        partial_sum(lf({0: 1.0}), 3, cfg)


def test_partial_sum_linearity():
    cfg = TransformConfig(m=32, theta=0.5)
    rng = np.random.default_rng(3)
    f = LatticeFunction(np.arange(10), rng.normal(size=10))
    g = LatticeFunction(np.arange(5, 20), rng.normal(size=15))
    a, b = 2.5, -1.25
    lhs = partial_sum(a * f + b * g, 32, cfg)
    rhs = a * partial_sum(f, 32, cfg) + b * partial_sum(g, 32, cfg)
    lo, hi = -200, 200
    scale = max(np.abs(lhs.to_window(lo, hi)).max(), 1e-30)
    assert np.abs(lhs.to_window(lo, hi) - rhs.to_window(lo, hi)).max() <= 1e-12 * scale


# -- maximal transform -------------------------------------------------------------


def test_maximal_zero():
    cfg = TransformConfig(m=16, theta=0.5)
    assert maximal_transform(LatticeFunction.zero(), cfg).is_zero()


def test_maximal_matches_bruteforce_bitwise():
    rng = np.random.default_rng(7)
    for m in (256, 1024):
        cfg = TransformConfig(m=m, theta=0.8)
        for _ in range(10):
            sites = np.unique(rng.integers(0, m // 2, size=12))
            f = LatticeFunction(sites, rng.normal(size=len(sites)))
            a = maximal_transform(f, cfg)
            b = maximal_transform_bruteforce(f, cfg)
            assert a == b  # bit-identical sites and values


def test_maximal_delta_shape():
    cfg = TransformConfig(m=16, theta=0.5, alpha=1.001)
    g = maximal_transform(LatticeFunction.delta(0), cfg)
    # prefix maxima of accumulated weights at each curve site
    nu_tot = {}
    best = {}
    for n in cfg.scales:
        nu = cfg.odd_measure(n)
        for s, w in zip(nu.sites, nu.weights):
            nu_tot[s] = nu_tot.get(s, 0.0) + w
            best[s] = max(best.get(s, 0.0), abs(nu_tot[s]))
    assert g.to_dict() == pytest.approx(best)


def test_maximal_dominates_full_sum():
    cfg = TransformConfig(m=64, theta=0.5)
    f = lf({0: 1.0, 7: 2.0})
    g = maximal_transform(f, cfg)
    h = partial_sum(f, 64, cfg)
    for s, v in h.to_dict().items():
        assert g(s) >= abs(v) - 1e-15


def test_maximal_translation_equivariance():
    cfg = TransformConfig(m=64, theta=0.5)
    rng = np.random.default_rng(9)
    f = LatticeFunction(np.arange(8), rng.normal(size=8))
    g0 = maximal_transform(f, cfg)
    g7 = maximal_transform(f.translate(7), cfg)
    assert g7 == g0.translate(7)


# -- level sets and ratios ----------------------------------------------------------


def test_level_set_counts():
    g = lf({0: 2.0})
    assert level_set_size(g, 1.0) == 1
    assert level_set_size(g, 2.0) == 0  # strict
    assert level_set_size(lf({0: 2.0, 3: -5.0}), 1.0) == 2


def test_level_set_rejects_nonpositive():
    with pytest.raises(ValueError):
        level_set_size(lf({0: 1.0}), 0.0)


def test_weak_ratio_zero_rejected():
    cfg = TransformConfig(m=16, theta=0.5)
    with pytest.raises(ValueError):
        weak_l1_ratio(LatticeFunction.zero(), cfg, 1.0)


def test_weak_ratio_translation_invariant():
    cfg = TransformConfig(m=32, theta=0.5)
    f = lf({0: 1.0, 2: 0.5})
    for lam in (0.01, 0.05):
        assert weak_l1_ratio(f, cfg, lam) == weak_l1_ratio(f.translate(13), cfg, lam)


# -- operator norm -------------------------------------------------------------------


def test_l2_norm_upper_bounds_random_vectors():
    cfg = TransformConfig(m=256)
    norm = l2_operator_norm(cfg)
    rng = np.random.default_rng(17)
    for _ in range(20):
        f = LatticeFunction(np.arange(128), rng.normal(size=128))
        assert lp_norm(partial_sum(f, 256, cfg), 2) <= norm * lp_norm(f, 2) * (1 + 1e-9)


def test_l2_norm_uniform_across_scales():
    norms = [l2_operator_norm(TransformConfig(m=1 << k)) for k in range(8, 13)]
    assert max(norms) / min(norms) < 4.0


# -- four-term split ------------------------------------------------------------------


def test_four_term_degenerate_low_height():
    cfg = TransformConfig(m=16, theta=0.5)
    f0 = lf({0: 0.5, 1: 0.25})
    lam = 1.0  # lam * n_min = 4 > sup f0: no high part anywhere
    dec = cz_decompose(f0, lam)
    split = four_term_split(f0, cfg, lam, dec.cubes)
    for n, (high, e_high, centered_low, e_f0) in split.components.items():
        assert high.is_zero()
        assert e_high.is_zero()
    assert split.reconstruction_error(f0) == 0.0


def test_four_term_reconstruction_random():
    rng = np.random.default_rng(23)
    cfg = TransformConfig(m=64, theta=0.5)
    for _ in range(25):
        sites = np.unique(rng.integers(0, 256, size=30))
        f0 = LatticeFunction(sites, rng.uniform(0.05, 1.0, size=len(sites)))
        lam = float(rng.uniform(0.05, 0.5))
        dec = cz_decompose(f0, lam)
        split = four_term_split(f0, cfg, lam, dec.cubes)
        tol = 1e-12 * (1.0 + lp_norm(f0, math.inf))
        assert split.reconstruction_error(f0) <= tol


def test_four_term_gm_stream():
    cfg = TransformConfig(m=16, theta=0.5)
    f0 = lf({0: 4.0})
    lam = 0.25  # high part survives at every scale
    dec = cz_decompose(f0, lam)
    split = four_term_split(f0, cfg, lam, dec.cubes)
    expect = LatticeFunction.zero()
    for n in cfg.scales:
        high = f0 if lam * n <= 4.0 else LatticeFunction.zero()
        from roughht.lattice import conditional_expectation

        e_high = conditional_expectation(high, dec.cubes)
        if not e_high.is_zero():
            expect = expect + convolve(cfg.odd_measure(n), e_high)
    lo, hi = -200, 200
    assert np.allclose(split.g_m.to_window(lo, hi), expect.to_window(lo, hi), rtol=0, atol=1e-15)


def test_split_term_sups_nonnegative():
    cfg = TransformConfig(m=64, theta=0.5)
    f0 = lf({0: 1.0, 9: 3.0})
    lam = 0.05
    dec = cz_decompose(f0, lam)
    split = four_term_split(f0, cfg, lam, dec.cubes)
    sups = split_term_maximal_sups(split, cfg)
    assert len(sups) == 4
    assert all(s >= 0 for s in sups)
    assert sups[3] > 0  # averaged stream always produces something here
