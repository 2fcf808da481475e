import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from enaqt.bath import (DrudeBath, ExponentialKernel, KernelTruncationError, correlation_integral_quadrature,
                        correlation_quadrature, correlation_table, drude_matsubara_terms, expand_correlation,
                        spectral_density, validation_grid)
from enaqt.exciton import KAPPA

# C(t) in rad^2/ps^2 from a 30-digit mpmath evaluation of the thermal frequency
# integral (quadosc on the full oscillatory range), computed before the build
MPMATH_C = [
    ((0.01, 35, 50, 298), 469.4782006740846 - 56.51141958440348j),
    ((0.05, 35, 50, 298), 319.6620506679787 - 38.77254607789617j),
    ((0.1, 35, 50, 298), 199.60708628510585 - 24.210817299036336j),
    ((0.5, 35, 50, 298), 4.613781172035204 - 0.5596164700026164j),
    ((0.2, 500, 300, 150), 0.008727923938765127 - 0.06572574434935288j),
    ((1.0, 1, 10, 77), 0.5757086506321885 - 0.05394381547105699j),
]


# -- spectral density -----------------------------------------------------------

def test_spectral_density_zero_and_peak():
    b = DrudeBath(35, 50, 298)
    lam, gam, _ = b.angular()
    assert spectral_density(0.0, b) == 0.0
    assert spectral_density(gam, b) == pytest.approx(lam, rel=1e-14)


@pytest.mark.parametrize("lam,gam", [(35, 50), (1, 10), (500, 300)])
def test_reorganization_sum_rule(lam, gam):
    b = DrudeBath(lam, gam, 298)
    g = b.angular()[1]
    f = lambda w: spectral_density(w, b) / w
    val = (quad(f, 0, g, limit=200)[0] + quad(f, g, np.inf, limit=200)[0]) / np.pi
    assert val == pytest.approx(lam * KAPPA, rel=1e-6)


def test_unscaled_form_equals_standard_with_rescaled_lambda():
    a = DrudeBath(35, 50, 298, "unscaled_drude")
    b = DrudeBath(35 / 50, 50, 298)
    w = np.linspace(0, 100, 11)
    np.testing.assert_allclose(spectral_density(w, a), spectral_density(w, b), rtol=1e-14)
    assert correlation_quadrature(0.1, a) == pytest.approx(correlation_quadrature(0.1, b), rel=1e-12)


def test_bath_validation():
    for args in [(-1, 50, 298), (35, 0, 298), (35, 50, 0)]:
        with pytest.raises(ValueError):
            DrudeBath(*args)
    with pytest.raises(ValueError):
        DrudeBath(35, 50, 298, "lorentzian")


# -- correlation function by quadrature ------------------------------------------

@pytest.mark.parametrize("args,expected", MPMATH_C)
def test_correlation_matches_high_precision_oracle(args, expected):
    t, lam, gam, T = args
    assert abs(correlation_quadrature(t, DrudeBath(lam, gam, T)) - expected) <= 1e-7 * abs(expected)


def test_zero_coupling_gives_zero_correlation():
    b = DrudeBath(0.0, 50, 298)
    assert all(correlation_quadrature(t, b) == 0 for t in (0.0, 0.1, 1.0))


@pytest.mark.parametrize("T", [77, 150, 298, 1000])
def test_imaginary_part_is_temperature_independent(T):
    b = DrudeBath(35, 50, T)
    lam, gam, _ = b.angular()
    assert correlation_quadrature(0.0, b).imag == -lam * gam
    for t in (1e-3, 0.05, 0.3):
        assert correlation_quadrature(t, b).imag == pytest.approx(-lam * gam * np.exp(-gam * t), rel=1e-7)


def test_correlation_decays_monotonically():
    b = DrudeBath(35, 50, 298)
    mags = [abs(correlation_quadrature(t, b)) for t in np.linspace(0.01, 0.5, 50)]
    assert np.all(np.diff(mags) < 0)


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        correlation_quadrature(-0.1, DrudeBath())


def test_real_part_increases_with_temperature():
    vals = [correlation_quadrature(0.01, DrudeBath(35, 50, T)).real for T in (77, 120, 200, 298, 400, 600)]
    assert np.all(np.diff(vals) > 0)


@pytest.mark.parametrize("t", [0.01, 0.1, 0.7])
def test_integrated_correlation_matches_kernel_integral(t):
    b = DrudeBath(35, 50, 298)
    # the integrated tail of the Matsubara series falls off only like 1/N
    k = expand_correlation(b, n_matsubara=2000)
    ref = correlation_integral_quadrature(t, b)
    assert abs(k.integral(t) - ref) <= 1e-4 * abs(ref)


# -- exponential kernel --------------------------------------------------------------

def test_fmo_kernel_is_small():
    b = DrudeBath(35, 50, 298)
    k = expand_correlation(b, tol=1e-4)
    assert k.n_terms <= 4
    grid = validation_grid(b)
    cq = np.array([correlation_quadrature(t, b) for t in grid])
    assert np.abs(k(grid) - cq).max() <= 1e-4 * np.abs(cq).max()
    assert k.truncation_bound <= 1e-4 * np.abs(cq).max()


def test_zero_coupling_kernel_has_zero_amplitudes():
    k = expand_correlation(DrudeBath(0.0, 50, 298))
    assert np.all(k.amplitudes == 0)
    assert np.all(k.decay_rates.real > 0)


def test_kernel_term_structure():
    b = DrudeBath(35, 50, 298)
    lam, gam, beta = b.angular()
    amps, rates = drude_matsubara_terms(b, 3)
    assert rates[0] == gam
    np.testing.assert_allclose(rates[1:].real, 2 * np.pi * np.arange(1, 4) / beta, rtol=1e-14)
    assert amps[0].imag == pytest.approx(-lam * gam, rel=1e-14)
    assert np.all(amps[1:].imag == 0) and np.all(amps[1:].real > 0)


def test_kernel_rejects_nondecaying_term():
    with pytest.raises(ValueError):
        ExponentialKernel([1.0], [0.0])
    with pytest.raises(ValueError):
        expand_correlation(DrudeBath(), tol=0)


def test_extreme_low_temperature_hits_term_cap():
    with pytest.raises(KernelTruncationError):
        expand_correlation(DrudeBath(35, 50, 1.0))


@settings(max_examples=12, deadline=None)
@given(st.floats(1, 500), st.floats(10, 300), st.floats(77, 400))
def test_kernel_agrees_with_quadrature(lam, gam, T):
    b = DrudeBath(lam, gam, T)
    k = expand_correlation(b, tol=1e-4)
    assert np.all(k.decay_rates.real > 0)
    # off the validation nodes, over the 10 fs to 2 ps window
    grid = np.linspace(0.01, 2.0, 61) + 0.0037
    grid[0] = 0.01
    cq = np.array([correlation_quadrature(t, b) for t in grid])
    assert np.abs(k(grid) - cq).max() <= 1e-4 * np.abs(cq).max()


def test_correlation_table_columns():
    b = DrudeBath(35, 50, 298)
    k = expand_correlation(b)
    tab = correlation_table(b, k, [0.01, 0.1])
    assert tab.shape == (2, 5)
    assert tab[1, 1] + 1j * tab[1, 2] == pytest.approx(correlation_quadrature(0.1, b), rel=1e-12)
    assert tab[1, 3] + 1j * tab[1, 4] == pytest.approx(k(0.1), rel=1e-12)
