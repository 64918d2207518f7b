import numpy as np
import pytest
from hypothesis import given, strategies as st

from enginectx.wavelets import band_energies, daubechies_lowpass, dwt, quadrature_mirror
from oracles import DB2_LOWPASS, DB4_LOWPASS, loop_dwt


def test_filters_match_published_coefficients():
    assert np.allclose(daubechies_lowpass(2), DB2_LOWPASS, atol=1e-12)
    assert np.allclose(daubechies_lowpass(4), DB4_LOWPASS, atol=1e-12)
    assert np.allclose(daubechies_lowpass(1), [2 ** -0.5, 2 ** -0.5])


@pytest.mark.parametrize("order", range(1, 11))
def test_filter_is_orthonormal_with_vanishing_moments(order):
    h = daubechies_lowpass(order)
    g = quadrature_mirror(h)
    assert h.size == 2 * order
    assert h.sum() == pytest.approx(np.sqrt(2.0))
    for shift in range(0, h.size, 2):
        dot = h[shift:] @ h[:h.size - shift]
        assert dot == pytest.approx(1.0 if shift == 0 else 0.0, abs=1e-9)
    n = np.arange(g.size)
    for p in range(order):
        assert abs(np.sum(n ** p * g)) < 1e-6 * max(1, np.sum(np.abs(n ** p * g)))


def test_matches_loop_oracle():
    x = np.random.default_rng(0).standard_normal(300)
    a, details = dwt(x, 4, 5)
    bands = loop_dwt(x, daubechies_lowpass(4), 5)
    for got, want in zip(details + [a], bands):
        assert np.allclose(got, want, atol=1e-12)


@given(st.integers(64, 3000), st.integers(1, 6), st.sampled_from([1, 2, 4, 6]), st.integers(0, 2 ** 31))
def test_energy_is_conserved(n, levels, order, seed):
    x = np.random.default_rng(seed).standard_normal(n)
    e = band_energies(x, order, levels)
    assert e.size == levels + 1
    assert abs(e.sum() - x @ x) <= 1e-9 * (x @ x)


def test_band_lengths_and_padding():
    a, details = dwt(np.ones(100), 4, 3)
    assert [d.size for d in details] == [52, 26, 13]
    assert a.size == 13
    with pytest.raises(ValueError):
        dwt(np.ones(4), 4, 3)
    with pytest.raises(ValueError):
        daubechies_lowpass(0)


def test_constant_signal_lives_in_approximation():
    e = band_energies(np.ones(512), 4, 6)
    assert np.all(e[:-1] < 1e-20)
    assert e[-1] == pytest.approx(512.0)
