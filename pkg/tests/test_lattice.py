import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roughht.lattice import (
    DyadicInterval,
    IntervalFamily,
    LatticeFunction,
    band,
    band_indices,
    conditional_expectation,
    hl_maximal,
    interval_mean,
    lp_norm,
    truncate_split,
)


def lf(d):
    return LatticeFunction.from_dict(d)


sparse_functions = st.dictionaries(
    st.integers(-2000, 2000),
    st.floats(-50, 50, allow_nan=False).filter(lambda v: v != 0.0),
    min_size=0,
    max_size=40,
).map(lf)


# -- LatticeFunction basics ---------------------------------------------------


def test_canonical_form_drops_zeros_and_sorts():
    f = LatticeFunction([3, 1, 2], [1.0, 0.0, 2.0])
    assert f.sites.tolist() == [2, 3]
    assert f.values.tolist() == [2.0, 1.0]


def test_duplicate_sites_accumulate():
    f = LatticeFunction([1, 1, 2], [1.0, 2.0, -1.0])
    assert f.to_dict() == {1: 3.0, 2: -1.0}


def test_add_sub_roundtrip():
    f = lf({0: 1.5, 3: -2.0})
    g = lf({0: -1.5, 5: 4.0})
    assert (f + g).to_dict() == {3: -2.0, 5: 4.0}
    assert (f - f).is_zero()


def test_translate_and_call():
    f = lf({0: 2.0})
    assert f.translate(7)(7) == 2.0
    assert f(1) == 0.0


# -- lp_norm ------------------------------------------------------------------


def test_lp_norm_zero_function():
    assert lp_norm(LatticeFunction.zero(), 1) == 0.0


def test_lp_norm_345():
    f = lf({0: 3.0, 4: -4.0})
    assert lp_norm(f, 2) == 5.0
    assert lp_norm(f, math.inf) == 4.0
    assert lp_norm(f, 1) == 7.0


def test_lp_norm_rejects_small_p():
    with pytest.raises(ValueError):
        lp_norm(lf({0: 1.0}), 0.5)


# -- truncate_split -----------------------------------------------------------


def test_truncate_below_cutoff():
    low, high = truncate_split(lf({0: 3.0}), 5.0)
    assert low.to_dict() == {0: 3.0}
    assert high.is_zero()


def test_truncate_strict_at_cutoff():
    low, high = truncate_split(lf({0: 5.0}), 5.0)
    assert low.is_zero()
    assert high.to_dict() == {0: 5.0}


def test_truncate_pointwise():
    low, high = truncate_split(lf({0: 3.0, 1: 8.0}), 5.0)
    assert low.to_dict() == {0: 3.0}
    assert high.to_dict() == {1: 8.0}


@given(sparse_functions, st.floats(0.01, 100))
def test_truncate_split_exact_reconstruction(f, cutoff):
    low, high = truncate_split(f, cutoff)
    assert (low + high) == f


# -- band ---------------------------------------------------------------------


def test_band_membership():
    assert band(lf({0: 3.0}), 8.0, 2).to_dict() == {0: 3.0}  # 3 in [2, 4)
    assert band(lf({0: 3.0}), 8.0, 1).is_zero()  # 3 not in [4, 8)


def test_band_tiling_small():
    f = lf({0: 3.0, 1: 7.0, 2: 0.6})
    total = LatticeFunction.zero()
    for a in (1, 2, 4, 8):
        total = total + band(f, 8.0, a)
    assert total == f


@given(sparse_functions.filter(lambda f: not f.is_zero()), st.floats(0.5, 200))
@settings(max_examples=60)
def test_band_tiling_property(f, top):
    low, _ = truncate_split(f, top)
    total = LatticeFunction.zero()
    for a in band_indices(f, top):
        total = total + band(f, top, a)
    # dyadic bands tile (0, top): their sum rebuilds the strictly-low part
    assert total == low


def test_band_rejects_bad_divisor():
    with pytest.raises(ValueError):
        band(lf({0: 1.0}), 4.0, 3)


# -- dyadic intervals ---------------------------------------------------------


def test_interval_geometry():
    q = DyadicInterval(2, -1)
    assert (q.start, q.stop, q.length) == (-4, 0, 4)
    assert q.contains_site(-1) and not q.contains_site(0)
    assert q.parent() == DyadicInterval(3, -1)
    a, b = q.parent().children()
    assert a == DyadicInterval(2, -2) and b == q


def test_smallest_covering():
    q = DyadicInterval.smallest_covering(3, 5)
    assert q.contains_site(3) and q.contains_site(5)
    for child_scale in range(q.scale):
        assert not (
            DyadicInterval.containing(child_scale, 3) == DyadicInterval.containing(child_scale, 5)
        )


@given(st.integers(0, 8), st.integers(-64, 64), st.integers(0, 8), st.integers(-64, 64))
def test_dyadic_nesting(k1, a1, k2, a2):
    p, q = DyadicInterval(k1, a1), DyadicInterval(k2, a2)
    if p.intersects(q):
        assert p.contains(q) or q.contains(p)


def test_family_rejects_overlap():
    with pytest.raises(ValueError):
        IntervalFamily([DyadicInterval(2, 0), DyadicInterval(1, 1)])


def test_family_find():
    fam = IntervalFamily([DyadicInterval(2, 0), DyadicInterval(2, 2)])
    assert fam.find(2) == DyadicInterval(2, 0)
    assert fam.find(5) is None
    assert fam.find(9) == DyadicInterval(2, 2)


def test_tiling_covers():
    fam = IntervalFamily.tiling(-10, 10, 3)
    assert fam[0].start <= -10 and fam[-1].stop >= 10
    assert fam.total_length() == len(fam) * 8


# -- conditional expectation --------------------------------------------------


def test_conditional_expectation_mean():
    fam = IntervalFamily([DyadicInterval(2, 0)])
    e = conditional_expectation(lf({0: 2.0, 1: 4.0}), fam)
    assert e.to_dict() == {0: 1.5, 1: 1.5, 2: 1.5, 3: 1.5}


def test_conditional_expectation_zero():
    fam = IntervalFamily([DyadicInterval(2, 0)])
    assert conditional_expectation(LatticeFunction.zero(), fam).is_zero()


@st.composite
def function_with_family(draw):
    f = draw(sparse_functions)
    scale = draw(st.integers(0, 4))
    indices = draw(st.sets(st.integers(-100, 100), min_size=1, max_size=8))
    fam = IntervalFamily([DyadicInterval(scale, a) for a in indices])
    return f, fam


@given(function_with_family())
@settings(max_examples=60)
def test_conditional_expectation_idempotent(f_fam):
    f, fam = f_fam
    e1 = conditional_expectation(f, fam)
    e2 = conditional_expectation(e1, fam)
    assert np.allclose(e1.to_window(-3200, 3232), e2.to_window(-3200, 3232), rtol=0, atol=1e-13)


@given(function_with_family())
@settings(max_examples=60)
def test_conditional_expectation_preserves_cube_mass(f_fam):
    f, fam = f_fam
    e = conditional_expectation(f, fam)
    for q in fam:
        assert math.isclose(
            interval_mean(e, q) * q.length,
            interval_mean(f, q) * q.length,
            rel_tol=0,
            abs_tol=1e-12 * (1 + lp_norm(f, 1)),
        )


@given(function_with_family())
@settings(max_examples=60)
def test_conditional_expectation_contractions(f_fam):
    f, fam = f_fam
    e = conditional_expectation(f, fam)
    # restrict f to the union before comparing norms
    union = LatticeFunction.zero()
    for q in fam:
        union = union + f.restrict_interval(q.start, q.stop)
    slack = 1e-12 * (1 + lp_norm(f, 1))
    assert lp_norm(e, 1) <= lp_norm(union, 1) + slack
    assert lp_norm(e, math.inf) <= lp_norm(union, math.inf) + slack


# -- Hardy-Littlewood maximal -------------------------------------------------


# narrow-span functions keep the quadratic brute-force oracle affordable
compact_functions = st.dictionaries(
    st.integers(-60, 60),
    st.floats(-50, 50, allow_nan=False).filter(lambda v: v != 0.0),
    min_size=1,
    max_size=10,
).map(lf)


def brute_hl(f, x):
    smin, smax = f.support_bounds()
    best = 0.0
    for r in range(0, max(abs(x - smin), abs(x - smax)) + 1):
        s = sum(abs(f(y)) for y in range(x - r, x + r + 1))
        best = max(best, s / (2 * r + 1))
    return best


def test_hl_delta_at_center():
    g = hl_maximal(lf({0: 1.0}), (-4, 5))
    assert g(0) == 1.0


def test_hl_delta_offset():
    g = hl_maximal(lf({0: 1.0}), (-4, 5))
    assert g(2) == pytest.approx(1.0 / 5.0, rel=0, abs=0)
    assert g(2) == pytest.approx(brute_hl(lf({0: 1.0}), 2))


@given(compact_functions)
@settings(max_examples=25, deadline=None)
def test_hl_matches_bruteforce(f):
    smin, smax = f.support_bounds()
    g = hl_maximal(f, (smin - 3, smax + 4))
    for x in range(smin - 3, smax + 4, max(1, (smax - smin) // 5 + 1)):
        assert g(x) == pytest.approx(brute_hl(f, x), rel=1e-12)


def test_hl_dominates_f():
    f = lf({0: 2.0, 5: 1.0})
    g = hl_maximal(f, (-2, 8))
    for x, v in f.to_dict().items():
        assert g(x) >= abs(v)


@given(compact_functions)
@settings(max_examples=25, deadline=None)
def test_hl_weak_type_constant_4(f):
    smin, smax = f.support_bounds()
    g = hl_maximal(f, (smin - 8, smax + 9))
    l1 = lp_norm(f, 1)
    for lam_frac in (0.1, 0.3, 0.7):
        lam = lam_frac * lp_norm(g, math.inf)
        if lam <= 0:
            continue
        size = int(np.count_nonzero(np.abs(g.values) > lam))
        assert lam * size <= 4.0 * l1


def test_hl_requires_covering_window():
    with pytest.raises(ValueError):
        hl_maximal(lf({10: 1.0}), (0, 5))
