import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roughht.lattice import DyadicInterval, LatticeFunction, band, lp_norm, truncate_split
from roughht.czdecomp import (
    BadIndex,
    bad_part,
    check_cube_size_bounds,
    cube_family,
    cz_decompose,
    cz_decompose_bruteforce,
    good_part,
    good_part_sum,
    purge_small_cubes,
    scale_good_part,
    size_class_exponent,
    surviving_cubes,
    valid_shrink_range,
)
from roughht.experiments import cz_invariant_violations


def lf(d):
    return LatticeFunction.from_dict(d)


nonneg_functions = st.dictionaries(
    st.integers(-500, 500),
    st.floats(0.01, 40, allow_nan=False),
    min_size=1,
    max_size=30,
).map(lf)


# -- decomposition --------------------------------------------------------------


def test_single_spike_trace():
    dec = cz_decompose(lf({0: 8.0}), 1.0)
    assert [(q.scale, q.index) for q in dec.cubes] == [(2, 0)]
    assert dec.averages == (2.0,)


def test_below_height_empty():
    dec = cz_decompose(lf({0: 0.5, 10: 0.9}), 1.0)
    assert len(dec) == 0


def test_rejects_negative_values():
    with pytest.raises(ValueError):
        cz_decompose(lf({0: -1.0}), 1.0)
    with pytest.raises(ValueError):
        cz_decompose(lf({0: 1.0}), 0.0)


def test_zero_function_empty():
    assert len(cz_decompose(LatticeFunction.zero(), 1.0)) == 0


@given(nonneg_functions, st.floats(0.05, 30))
@settings(max_examples=80, deadline=None)
def test_oracle_equivalence(f, lam):
    d1 = cz_decompose(f, lam)
    d2 = cz_decompose_bruteforce(f, lam)
    assert list(d1.cubes) == list(d2.cubes)


@given(nonneg_functions, st.floats(0.05, 30))
@settings(max_examples=80, deadline=None)
def test_invariants_exact(f, lam):
    dec = cz_decompose(f, lam)
    assert cz_invariant_violations(dec) == []
    # sup of the averaged function is at most 2*lam
    if dec.averages:
        assert max(dec.averages) <= 2 * lam * (1 + 1e-15)


def test_exact_boundary_average():
    # average exactly lam must NOT be selected (selection is avg > lam);
    # the child at exactly 2*lam must be (2*lam <= 2*lam)
    f = lf({0: 2.0, 1: 2.0})  # [0,2) avg 2.0; [0,1) avg 2.0
    dec = cz_decompose(f, 2.0)
    assert len(dec) == 0
    dec = cz_decompose(f, 1.0)
    assert [(q.scale, q.index) for q in dec.cubes] == [(1, 0)]
    assert dec.averages == (2.0,)


def test_negative_sites_and_straddle():
    f = lf({-3: 5.0, 2: 5.0})
    dec = cz_decompose(f, 0.5)
    viol = cz_invariant_violations(dec)
    assert viol == []
    assert list(dec.cubes) == list(cz_decompose_bruteforce(f, 0.5).cubes)


# -- purge -----------------------------------------------------------------------


def test_purge_below_min_length_keeps_f():
    f = lf({0: 8.0})
    dec = cz_decompose(f, 1.0)
    assert purge_small_cubes(f, dec, 2.0) == f  # cube has length 4 > 2


def test_purge_at_length_zeroes():
    f = lf({0: 8.0})
    dec = cz_decompose(f, 1.0)
    assert purge_small_cubes(f, dec, 4.0).is_zero()  # length 4 <= 4


def test_purge_everything_leaves_bounded_rest():
    rng = np.random.default_rng(2)
    sites = np.unique(rng.integers(0, 128, size=25))
    f = LatticeFunction(sites, rng.uniform(0.1, 5.0, size=len(sites)))
    lam = 0.8
    dec = cz_decompose(f, lam)
    rest = purge_small_cubes(f, dec, max(dec.cube_lengths() or [1]))
    assert lp_norm(rest, math.inf) <= lam


def test_surviving_cubes_complement():
    f = lf({0: 8.0, 100: 64.0})
    dec = cz_decompose(f, 1.0)
    fam = surviving_cubes(dec, 4.0)
    assert all(q.length > 4 for q in fam)


# -- size classes ------------------------------------------------------------------


def test_bad_index_validation():
    BadIndex(2, 8, 2, 1)  # 2^2 = 4 > 2
    BadIndex(4, 8, 2, 2)  # 2^2 = 4 <= 4
    with pytest.raises(ValueError):
        BadIndex(4, 8, 2, 1)
    with pytest.raises(ValueError):
        BadIndex(3, 8, 2, 1)


def test_size_class_exponent_values():
    assert size_class_exponent(16, 0, 1.001) == 4
    assert size_class_exponent(16, 4, 1.001) == 0
    assert size_class_exponent(16, 5, 1.001) < 0


def test_size_classes_partition():
    # union over shrink of the classes covers exactly the cubes of length <= n^alpha
    rng = np.random.default_rng(4)
    sites = np.unique(rng.integers(0, 4096, size=200))
    f = LatticeFunction(sites, rng.uniform(0.1, 20.0, size=len(sites)))
    dec = cz_decompose(f, 0.35)
    n, alpha = 64, 1.001
    assert len(set(dec.cube_lengths())) >= 2
    covered = []
    for s in range(0, 10):
        i = 1 if (1 << s) > 1 else 2  # a = 1
        fam = cube_family(dec, BadIndex(1, n, s, i), alpha)
        covered.extend(fam)
    eligible = [q for q in dec.cubes if q.length <= n**alpha]
    assert sorted(covered, key=lambda q: q.start) == sorted(eligible, key=lambda q: q.start)
    # and each eligible cube appears exactly once
    assert len(covered) == len(eligible)


def test_class_disjointness_in_i():
    with pytest.raises(ValueError):
        BadIndex(2, 16, 1, 1)  # 2^1 = 2 is not > 2
    with pytest.raises(ValueError):
        BadIndex(2, 16, 2, 2)  # 2^2 = 4 is not <= 2


def test_valid_shrink_ranges():
    assert list(valid_shrink_range(16, 4, 1)) == [3, 4]
    assert list(valid_shrink_range(16, 4, 2)) == [0, 1, 2]
    assert list(valid_shrink_range(16, 1, 1)) == [1, 2, 3, 4]
    assert list(valid_shrink_range(16, 1, 2)) == [0]


# -- bad and good parts ---------------------------------------------------------------


def pipeline(rng, span=512, lam=None):
    sites = np.unique(rng.integers(0, span, size=40))
    f = LatticeFunction(sites, rng.uniform(0.05, 3.0, size=len(sites)))
    lam = lam or float(rng.uniform(0.1, 0.8))
    return f, lam, cz_decompose(f, lam)


def test_bad_part_empty_family():
    f, lam, dec = pipeline(np.random.default_rng(5))
    idx = BadIndex(1, 4, 9, 1)  # class far below unit length
    assert bad_part(f, dec, idx, lam, 1.001).is_zero()


def test_bad_part_cube_mean_zero():
    rng = np.random.default_rng(6)
    for _ in range(30):
        f, lam, dec = pipeline(rng)
        n = 1 << int(rng.integers(2, 7))
        for s in range(0, 7):
            a_pool = [a for a in (1, 2, 4, 8)]
            a = a_pool[int(rng.integers(0, 4))]
            i = 1 if (1 << s) > a else 2
            idx = BadIndex(a, n, s, i)
            b = bad_part(f, dec, idx, lam, 1.001)
            for q in cube_family(dec, idx, 1.001):
                i0 = int(np.searchsorted(b.sites, q.start))
                i1 = int(np.searchsorted(b.sites, q.stop))
                assert abs(math.fsum(b.values[i0:i1])) <= 1e-12 * (1 + lp_norm(f, 1))


def test_bad_part_constant_band_on_cube():
    # band value constant on its cube: the centered piece vanishes there
    f = lf({0: 1.0, 1: 1.0, 2: 1.0, 3: 1.0})
    dec = cz_decompose(f, 0.5)
    assert [(q.scale, q.index) for q in dec.cubes] == [(3, 0)]
    # place the full function in one band: top=8*lam=4, values 1 in [1, 2)? 1 in [top/2a, top/a)
    idx = BadIndex(4, 8, 0, 2)
    b = bad_part(f, dec, idx, 1.0, 1.001)
    # cube [0,8): band = f on {0..3}, average 0.5 over 8 sites: nonzero piece
    q = dec.cubes[0]
    i0 = int(np.searchsorted(b.sites, q.start))
    i1 = int(np.searchsorted(b.sites, q.stop))
    assert abs(math.fsum(b.values[i0:i1])) <= 1e-14


def test_good_parts_nonnegative_and_supported():
    rng = np.random.default_rng(8)
    f, lam, dec = pipeline(rng)
    n = 16
    for s in range(0, 5):
        for a in (1, 2, 4):
            i = 1 if (1 << s) > a else 2
            idx = BadIndex(a, n, s, i)
            g = good_part(f, dec, idx, lam, 1.001)
            assert np.all(g.values >= 0)
            fam = cube_family(dec, idx, 1.001)
            for x in g.sites:
                assert any(q.contains_site(int(x)) for q in fam)


def test_good_part_sum_is_shrink_sum():
    rng = np.random.default_rng(9)
    f, lam, dec = pipeline(rng)
    n, a, i = 16, 2, 1
    total = good_part_sum(f, dec, a, n, i, lam, 1.001)
    manual = LatticeFunction.zero()
    for s in valid_shrink_range(n, a, i):
        manual = manual + good_part(f, dec, BadIndex(a, n, s, i), lam, 1.001)
    assert total == manual


def test_scale_good_part_sums_divisors():
    rng = np.random.default_rng(10)
    f, lam, dec = pipeline(rng)
    n, s = 16, 1
    total = scale_good_part(f, dec, n, s, lam, 1.001)
    manual = LatticeFunction.zero()
    a = 1 << s
    while a <= n:
        manual = manual + good_part(f, dec, BadIndex(a, n, s, 2), lam, 1.001)
        a <<= 1
    assert total == manual


# -- cube size bounds -------------------------------------------------------------------


def test_cube_size_bound_spike():
    f = lf({0: 8.0})
    dec = cz_decompose(f, 1.0)
    rep = check_cube_size_bounds(f, dec, 1.0, 2, 1)
    assert rep.ok and rep.checked_high == 1


def test_cube_size_bound_vacuous():
    f = lf({0: 0.5})
    dec = cz_decompose(f, 1.0)
    rep = check_cube_size_bounds(f, dec, 1.0, 64, 1)
    assert rep.ok and rep.checked_high == 0


@given(nonneg_functions, st.floats(0.05, 5), st.integers(1, 7), st.integers(0, 4))
@settings(max_examples=80, deadline=None)
def test_cube_size_bounds_random(f, lam, nk, ak):
    dec = cz_decompose(f, lam)
    rep = check_cube_size_bounds(f, dec, lam, 1 << nk, 1 << ak)
    assert rep.ok
