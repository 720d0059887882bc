import math

import numpy as np
import pytest

from roughht.lattice import LatticeFunction
from roughht.measures import (
    PointMassMeasure,
    antisymmetric_part,
    autocorrelation_offdiag_sup,
    bump_by_name,
    curve_measure,
    default_bump,
    floor_powers,
    reflect,
    window_bump,
    zero_bump,
)

# frozen high-precision evaluations of the closed-form profile
PHI_125 = 0.26359713811572677  # exp(4 - 16/3)
MASS_INTEGRAL = 0.2580992326734724  # integral over (1,2) of phi(t)/t dt


# -- bump ----------------------------------------------------------------------


def test_bump_normalization_point():
    phi = default_bump()
    assert phi(1.5) == 1.0


def test_bump_support_endpoints():
    phi = default_bump()
    assert phi(1.0) == 0.0
    assert phi(2.0) == 0.0
    assert phi(0.5) == 0.0
    assert phi(2.5) == 0.0


def test_bump_quarter_points():
    phi = default_bump()
    assert phi(1.25) == pytest.approx(PHI_125, rel=1e-14)
    assert phi(1.75) == pytest.approx(PHI_125, rel=1e-14)  # symmetric profile


def test_bump_bounded_by_one():
    phi = default_bump()
    ts = np.linspace(0.9, 2.1, 1201)
    assert np.all(phi(ts) <= 1.0)
    assert np.all(phi(ts) >= 0.0)


def test_window_bump_recentered():
    w = window_bump()
    assert w(0.0) == 1.0
    assert w(-0.5) == 0.0 and w(0.5) == 0.0
    assert w(-0.25) == pytest.approx(PHI_125, rel=1e-14)


def test_bump_by_name():
    assert bump_by_name("default")(1.5) == 1.0
    with pytest.raises(ValueError):
        bump_by_name("nope")


# -- exact floors ---------------------------------------------------------------


def test_floor_powers_small_exact():
    ms = np.arange(1, 200)
    out = floor_powers(ms, 1.001)
    # m^1.001 = m * m^0.001 barely exceeds m; floors equal m until the excess
    # accumulates to a full unit
    assert out[0] == 1
    assert np.all(out >= ms)
    assert np.all(np.diff(out) >= 1)


def test_floor_powers_against_mpmath():
    import mpmath

    rng = np.random.default_rng(5)
    ms = rng.integers(2, 1 << 24, size=50)
    out = floor_powers(ms, 1.001)
    with mpmath.workdps(60):
        for m, got in zip(ms, out):
            assert int(mpmath.floor(mpmath.power(int(m), mpmath.mpf(1.001)))) == got


def test_floor_powers_range_guard():
    with pytest.raises(ValueError):
        floor_powers(np.array([1 << 25]), 1.001)


# -- curve measure ---------------------------------------------------------------


def test_curve_measure_n4_sites_and_weights():
    mu = curve_measure(4, 1.001)
    assert mu.sites.tolist() == [5, 6, 7]
    assert mu.weights[0] == pytest.approx(PHI_125 / 5, rel=1e-13)
    assert mu.weights[1] == pytest.approx(1.0 / 6.0, rel=1e-15)
    assert mu.weights[2] == pytest.approx(PHI_125 / 7, rel=1e-13)


def test_curve_measure_total_mass_converges():
    n = 1 << 12
    mu = curve_measure(n, 1.001)
    assert mu.total_mass() == pytest.approx(MASS_INTEGRAL, abs=4.0 / n)


def test_curve_measure_zero_bump():
    assert len(curve_measure(4, 1.001, zero_bump())) == 0


def test_curve_measure_invariants():
    for k in (3, 6, 9):
        n = 1 << k
        mu = curve_measure(n, 1.001)
        assert np.all(np.diff(mu.sites) >= 1)  # no collisions for alpha > 1
        assert mu.sites[0] >= n
        assert mu.sites[-1] < (2 * n) ** 1.001 + 1
        assert np.all(mu.weights > 0)
        assert np.all(mu.weights <= 1.0 / n)
        assert len(mu) <= n + 1


def test_curve_measure_rejects_bad_args():
    with pytest.raises(ValueError):
        curve_measure(3, 1.001)
    with pytest.raises(ValueError):
        curve_measure(4, 0.999)


def test_curve_measure_large_alpha_warns():
    with pytest.warns(UserWarning):
        curve_measure(4, 1.05)


# -- reflect / antisymmetric ------------------------------------------------------


def test_reflect_example():
    m = PointMassMeasure([5], [0.1])
    assert reflect(m).sites.tolist() == [-5]
    assert reflect(m).weights.tolist() == [0.1]


def test_reflect_involution():
    mu = curve_measure(16, 1.001)
    assert reflect(reflect(mu)) == mu


def test_reflect_empty():
    m = PointMassMeasure([], [])
    assert len(reflect(m)) == 0


def test_antisymmetric_structure():
    nu = antisymmetric_part(4, 1.001)
    assert nu.sites.tolist() == [-7, -6, -5, 5, 6, 7]
    for s in (5, 6, 7):
        assert nu.weight_at(-s) == -nu.weight_at(s)
    assert nu.total_mass() == 0.0  # exact via fsum
    assert nu.weight_at(0) == 0.0


def test_antisymmetric_zero_mass_large():
    nu = antisymmetric_part(1 << 10, 1.001)
    assert nu.total_mass() == 0.0


# -- autocorrelation ---------------------------------------------------------------


def brute_offdiag_sup(mu, alpha, n):
    acc = {}
    for s1, w1 in zip(mu.sites, mu.weights):
        for s2, w2 in zip(mu.sites, mu.weights):
            d = int(s1 - s2)
            if d != 0:
                acc[d] = acc.get(d, 0.0) + w1 * w2
    if not acc:
        return 0.0
    return max(abs(v) for v in acc.values()) * n**alpha


def test_autocorrelation_n4_matches_bruteforce():
    got = autocorrelation_offdiag_sup(4, 1.001)
    want = brute_offdiag_sup(curve_measure(4, 1.001), 1.001, 4)
    assert got == pytest.approx(want, rel=1e-12)


def test_autocorrelation_single_atom():
    # a profile that keeps exactly one m alive
    from roughht.measures import BumpFunction

    spike = BumpFunction("spike", lambda t: np.where(np.abs(t - 1.5) < 0.05, 1.0, 0.0), 1.0, 2.0)
    assert autocorrelation_offdiag_sup(4, 1.001, spike) == 0.0


def test_autocorrelation_bruteforce_n32():
    got = autocorrelation_offdiag_sup(32, 1.001)
    want = brute_offdiag_sup(curve_measure(32, 1.001), 1.001, 32)
    assert got == pytest.approx(want, rel=1e-12)


def test_autocorrelation_diag_positive():
    mu = curve_measure(16, 1.001)
    assert float(np.sum(mu.weights**2)) > 0
