import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from texturebit.quantize import QuantSpec, dde_level_schedule, discretize_tanh, ste_gradient

mpmath.mp.dps = 40

finite = st.floats(-30, 30, allow_nan=False)
level_counts = st.sampled_from([2, 3, 4, 5, 8, 16, 32, 64, 128, 256])


def test_level_set_shape():
    for L in (2, 4, 16, 256):
        ls = QuantSpec(L).level_set
        assert ls[0] == -1.0 and ls[-1] == 1.0
        assert np.all(np.diff(ls) > 0)
        assert np.allclose(ls, -ls[::-1], atol=1e-15)
    assert QuantSpec(4).level_set.tolist() == pytest.approx([-1, -1 / 3, 1 / 3, 1])


def test_quantspec_rejects_one_level():
    with pytest.raises(ValueError):
        QuantSpec(1)


def test_discretize_examples():
    # tanh(0.7) from a 40-digit oracle
    assert float(mpmath.tanh(0.7)) == pytest.approx(0.6043677771171636)
    assert discretize_tanh(0.7, QuantSpec(2)) == 1.0
    assert discretize_tanh(0.0, QuantSpec(2)) == 1.0  # tie goes up
    assert float(mpmath.tanh(-3)) == pytest.approx(-0.9950547536867305)
    assert discretize_tanh(-3.0, QuantSpec(4)) == -1.0


def test_discretize_tie_goes_to_larger_level():
    # for L=4, tanh(0) = 0 is midway between -1/3 and 1/3
    assert discretize_tanh(0.0, QuantSpec(4)) == pytest.approx(1 / 3)
    assert discretize_tanh(0.0, 3) == 0.0


def test_ste_examples():
    assert ste_gradient(0.0) == 1.0
    assert ste_gradient(50.0) == 0.0
    assert ste_gradient(-50.0) == 0.0
    t = mpmath.tanh(mpmath.mpf("0.7"))
    assert ste_gradient(0.7) == pytest.approx(float(1 - t * t), abs=1e-15)
    assert ste_gradient(0.7) == pytest.approx(0.6347, abs=1e-4)


def test_ste_matches_finite_difference():
    x = np.linspace(-5, 5, 2001)
    h = 1e-5
    fd = (np.tanh(x + h) - np.tanh(x - h)) / (2 * h)
    assert np.max(np.abs(ste_gradient(x) - fd)) <= 1e-6


def test_ste_independent_of_levels():
    x = np.linspace(-3, 3, 11)
    base = ste_gradient(x)
    for L in (2, 16, 256):
        # the derivative used for every quantizer is tanh', whatever L is
        assert np.array_equal(ste_gradient(x), base)


def test_schedule():
    sched = dde_level_schedule()
    assert [s.levels for s in sched] == [256, 128, 64, 32, 16, 8, 4, 2]
    for a, b in zip(sched, sched[1:]):
        assert a.levels == 2 * b.levels
    assert [s.levels for s in dde_level_schedule(5)] == [256, 128, 64, 32, 16]


@settings(max_examples=300, deadline=None)
@given(finite, level_counts)
def test_output_is_level_member(x, L):
    out = discretize_tanh(x, L)
    assert out in QuantSpec(L).level_set.tolist()


@settings(max_examples=300, deadline=None)
@given(finite, finite, level_counts)
def test_monotone(x, y, L):
    lo, hi = sorted((x, y))
    assert discretize_tanh(lo, L) <= discretize_tanh(hi, L)


@settings(max_examples=100, deadline=None)
@given(level_counts)
def test_idempotent_on_levels(L):
    ls = QuantSpec(L).level_set
    inner = ls[np.abs(ls) < 1]
    assert np.array_equal(discretize_tanh(np.arctanh(inner), L), inner)


def test_idempotent_exhaustive_256():
    ls = QuantSpec(256).level_set
    inner = ls[1:-1]
    assert np.array_equal(discretize_tanh(np.arctanh(inner), 256), inner)


@settings(max_examples=50, deadline=None)
@given(level_counts, st.integers(0, 2**32 - 1))
def test_cardinality(L, seed):
    x = np.random.default_rng(seed).normal(0, 3, (32, 32))
    assert len(np.unique(discretize_tanh(x, L))) <= L


def test_float32_exact_membership():
    x = np.random.default_rng(0).normal(0, 2, 10000).astype(np.float32)
    for L in (2, 16, 256):
        out = discretize_tanh(x, L)
        assert out.dtype == np.float32
        assert np.isin(out, QuantSpec(L).level_set.astype(np.float32)).all()
