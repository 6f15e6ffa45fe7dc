from __future__ import annotations

import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from tfmg.stencil import Grid1D, gamma3_interval, make_params, tempered_stencil
from tfmg.symbol import (
    SCAN_POINTS, SymbolSpec, f_symbol, omega_star, partial_symbol, smoothing_bound,
    stability_check, symbol_scan, szego_sampling_check, xi_table,
)


def test_symbol_examples():
    assert f_symbol(1.5, 0.01, 0.0) == 0.0
    for a, g in ((1.2, 0.0), (1.5, 0.01), (1.8, 0.02)):
        assert f_symbol(a, g, np.pi) == pytest.approx(-(2 ** a) * (a - 1 + 4 * g), rel=1e-13)
    # at alpha = 2, gamma3 = 0 the symbol is that of tridiag{1, -2, 1}
    x = np.linspace(-3, 3, 7)
    assert np.allclose(f_symbol(2.0, 0.0, x), 2 * np.cos(x) - 2)


def test_symbol_is_even():
    x = np.linspace(0.01, np.pi, 50)
    assert np.array_equal(f_symbol(1.7, 0.01, x), f_symbol(1.7, 0.01, -x))


@settings(max_examples=20, deadline=None)
@given(alpha=st.floats(1.05, 1.95), frac=st.floats(0, 1))
def test_fourier_coefficients_match_stencil(alpha, frac):
    lo, hi = gamma3_interval(alpha)
    g3 = lo + frac * (hi - lo)
    st_ = tempered_stencil(make_params(alpha, g3, 0.0), 1.0, 3)
    a0 = quad(lambda x: f_symbol(alpha, g3, x), 0, np.pi, limit=200)[0] / np.pi
    a1 = quad(lambda x: f_symbol(alpha, g3, x) * np.cos(x), 0, np.pi, limit=200)[0] / np.pi
    assert a0 == pytest.approx(st_.g[1], abs=1e-8)
    assert a1 == pytest.approx((st_.g[0] + st_.g[2]) / 2, abs=1e-8)


def test_partial_sums_converge():
    p = make_params(1.5, 0.01, 2.0)
    x = np.linspace(-np.pi, np.pi, 1001)
    f = f_symbol(1.5, 0.01, x)
    errs = [np.max(np.abs(partial_symbol(p, 1e-9, M, x) - f)) for M in (500, 1000, 5000)]
    assert errs[0] > errs[1] > errs[2]
    with pytest.raises(ValueError):
        partial_symbol(p, 0.1, 1, x)


def test_smoothing_bound_examples():
    sb = smoothing_bound(SymbolSpec(1.5, 0.01), 1)
    assert sb.zeroth_coeff == pytest.approx(0.91)
    assert sb.inf_norm == pytest.approx(2 ** 1.5 * 0.54)
    assert sb.omega_star == pytest.approx(2 * sb.xi / 3)
    assert [round(omega_star(a, 0.01), 2) for a in (1.2, 1.5, 1.8)] == [0.85, 0.79, 0.71]
    assert [round(omega_star(a, 0.00235), 2) for a in (1.4, 1.7, 1.9)] == [0.85, 0.75, 0.69]
    assert omega_star(1.8, 0.0235, 1.6) == pytest.approx(0.8507, abs=5e-5)


def test_smoothing_bound_scales_with_coefficients():
    a = smoothing_bound(SymbolSpec(1.5, 0.01, c=1.0), 1)
    b = smoothing_bound(SymbolSpec(1.5, 0.01, c=3.0), 1)
    assert a.xi == pytest.approx(b.xi)


def test_smoothing_bound_errors():
    with pytest.raises(ValueError):
        SymbolSpec(2.0, 0.0)
    with pytest.raises(ValueError):
        SymbolSpec(1.5, 0.0, c=-1)
    with pytest.raises(ValueError):
        smoothing_bound(SymbolSpec(1.5, 0.0), 2)
    with pytest.raises(ValueError):
        smoothing_bound(SymbolSpec(1.5, 0.0), 3)


def test_closed_form_maximum_without_warning():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        for a in np.linspace(1.05, 1.95, 10):
            smoothing_bound(SymbolSpec(float(a), 0.01), 1)


def test_xi_table_rows():
    tab = xi_table([1.2, 1.5], 0.01)
    assert tab.shape == (2, 3)
    assert np.allclose(tab[:, 2], [omega_star(1.2, 0.01), omega_star(1.5, 0.01)])


def test_stability_example():
    rho = stability_check(make_params(1.5, 0.01, 2), Grid1D(0, 1, 32), 1 / 32)
    assert rho < 1
    with pytest.raises(ValueError):
        stability_check(make_params(1.5), Grid1D(0, 1, 600), 0.1)


def test_szego_deviation_decreases():
    p = make_params(1.5, 0.01, 0.0)
    assert szego_sampling_check(p, 64) > szego_sampling_check(p, 256)


def test_symbol_scan_columns():
    p = make_params(1.5, 0.01, 2.0)
    out = symbol_scan(p, None, 100)
    assert out.shape == (SCAN_POINTS, 3)
    assert out[0, 0] == -np.pi and out[-1, 0] == np.pi
    assert symbol_scan(p, None, None).shape == (SCAN_POINTS, 2)
