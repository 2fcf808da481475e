"""Drude-Lorentz bath: spectral density, correlation function, exponential kernel.

Internally hbar = 1 and frequencies are angular (rad/ps), so C(t) carries
units of rad^2/ps^2.  Bath parameters are given in cm^-1 and K.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .exciton import KAPPA, KB_CM

SPECTRAL_FORMS = ("standard_drude", "unscaled_drude")

#: Earliest time (ps) at which kernel truncation is validated. Re C(t) of a
#: Drude bath diverges like -log(t) as t -> 0, so no finite kernel can match
#: it there; 10 fs resolves the fastest FMO Bohr frequency (~94 rad/ps).
KERNEL_VALIDATION_T_MIN = 0.01
MAX_KERNEL_TERMS = 512


class QuadratureError(RuntimeError):
    def __init__(self, msg, error_estimate=None):
        super().__init__(msg)
        self.error_estimate = error_estimate


class KernelTruncationError(RuntimeError):
    pass


@dataclass(frozen=True)
class DrudeBath:
    """Overdamped Brownian-oscillator (Drude-Lorentz) bath.

    ``spectral_form="unscaled_drude"`` uses J(w) = 2 lambda w / (w^2 + gamma^2)
    with all quantities in cm^-1, which equals the standard form with the
    reorganization energy divided by the numerical value of gamma.
    """

    reorganization_energy: float = 35.0
    cutoff_frequency: float = 50.0
    temperature: float = 298.0
    spectral_form: str = "standard_drude"

    def __post_init__(self):
        if self.reorganization_energy < 0:
            raise ValueError("reorganization energy must be >= 0")
        if self.cutoff_frequency <= 0:
            raise ValueError("cutoff frequency must be > 0")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.spectral_form not in SPECTRAL_FORMS:
            raise ValueError(f"spectral_form must be one of {SPECTRAL_FORMS}")

    @property
    def effective_reorganization_energy(self) -> float:
        """Reorganization energy (cm^-1) of the equivalent standard form."""
        if self.spectral_form == "unscaled_drude":
            return self.reorganization_energy / self.cutoff_frequency
        return self.reorganization_energy

    def angular(self):
        """(lambda, gamma, beta) in rad/ps, rad/ps and ps/rad."""
        lam = self.effective_reorganization_energy * KAPPA
        gam = self.cutoff_frequency * KAPPA
        beta = 1.0 / (KB_CM * self.temperature * KAPPA)
        return lam, gam, beta


@dataclass(frozen=True)
class ExponentialKernel:
    """C(t) ~ sum_k amplitudes[k] * exp(-decay_rates[k] * t)."""

    amplitudes: np.ndarray
    decay_rates: np.ndarray
    truncation_bound: float = 0.0
    validation_window: tuple = (KERNEL_VALIDATION_T_MIN, np.inf)

    def __post_init__(self):
        a = np.array(self.amplitudes, dtype=complex).ravel()
        nu = np.array(self.decay_rates, dtype=complex).ravel()
        if a.shape != nu.shape:
            raise ValueError("amplitudes and decay_rates differ in length")
        if np.any(nu.real <= 0):
            raise ValueError("every decay rate needs a positive real part")
        a.setflags(write=False)
        nu.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)
        object.__setattr__(self, "decay_rates", nu)

    @property
    def n_terms(self) -> int:
        return self.amplitudes.size

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.exp(-np.multiply.outer(t, self.decay_rates)) @ self.amplitudes

    def integral(self, t):
        """int_0^t C(s) ds."""
        t = np.asarray(t, dtype=float)
        return (-np.expm1(-np.multiply.outer(t, self.decay_rates))) @ (self.amplitudes / self.decay_rates)


def spectral_density(omega, bath: DrudeBath):
    """J(omega) in rad/ps for omega in rad/ps (Drude-Lorentz form)."""
    lam, gam, _ = bath.angular()
    omega = np.asarray(omega, dtype=float)
    return 2.0 * lam * gam * omega / (omega**2 + gam**2)


def _thermal_integrand(bath: DrudeBath):
    # J(w) coth(beta w / 2) / pi, finite at w = 0
    lam, gam, beta = bath.angular()

    def f(w):
        wc = 2.0 / beta if w == 0.0 else w / np.tanh(0.5 * beta * w)
        return 2.0 * lam * gam * wc / (np.pi * (w * w + gam * gam))

    return f


def correlation_quadrature(t: float, bath: DrudeBath, rtol: float = 1e-8) -> complex:
    """Bath correlation function C(t) by direct frequency quadrature.

    C(t) = (1/pi) int_0^inf J(w) [coth(beta w/2) cos(w t) - i sin(w t)] dw,
    which is the thermal integral with J continued as an odd function to
    negative frequencies.  For t = 0 the real part diverges and ``inf`` is
    returned in it.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    lam, gam, beta = bath.angular()
    if lam == 0.0:
        return 0j
    if t == 0.0:
        return complex(np.inf, -lam * gam)
    epsabs = 1e-12 * lam * gam
    f = _thermal_integrand(bath)
    odd = lambda w: 2.0 * lam * gam * w / (np.pi * (w * w + gam * gam))
    # resolve the low-frequency structure on a finite interval, leave the
    # slowly decaying oscillatory tail to QAWF
    split = 50.0 * max(gam, 1.0 / beta)
    re_err = im_err = 0.0
    re = im = 0.0
    for g, w, acc in ((f, "cos", "re"), (odd, "sin", "im")):
        lo, e_lo = quad(g, 0.0, split, weight=w, wvar=t, epsabs=epsabs, epsrel=rtol * 0.1, limit=400)
        hi, e_hi = quad(g, split, np.inf, weight=w, wvar=t, epsabs=epsabs, epsrel=rtol * 0.1, limlst=200)
        if acc == "re":
            re, re_err = lo + hi, e_lo + e_hi
        else:
            im, im_err = lo + hi, e_lo + e_hi
    err = np.hypot(re_err, im_err)
    val = complex(re, -im)
    if err > max(rtol * abs(val), 1e3 * epsabs):
        raise QuadratureError(f"C({t}) quadrature did not converge (error estimate {err:.3g})", err)
    return val


def correlation_integral_quadrature(t: float, bath: DrudeBath, rtol: float = 1e-8) -> complex:
    """int_0^t C(s) ds by frequency quadrature (finite despite the t=0 log singularity)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    lam, gam, _ = bath.angular()
    if lam == 0.0 or t == 0.0:
        return 0j
    f = _thermal_integrand(bath)
    epsabs = 1e-12 * lam
    # sin(w t)/w is regular; split so QAWF never sees the 1/w factor at w = 0
    split = 10.0 / t
    re_lo, e1 = quad(lambda w: f(w) * t * np.sinc(w * t / np.pi), 0.0, split,
                     epsabs=epsabs, epsrel=rtol * 1e-2, limit=400)
    re_hi, e2 = quad(lambda w: f(w) / w, split, np.inf, weight="sin", wvar=t,
                     epsabs=epsabs, epsrel=rtol * 1e-2, limlst=200)
    im = -lam * (1.0 - np.exp(-gam * t))
    err = np.hypot(e1, e2)
    val = complex(re_lo + re_hi, im)
    if err > max(rtol * abs(val), 1e3 * epsabs):
        raise QuadratureError(f"int_0^{t} C quadrature did not converge (error {err:.3g})", err)
    return val


def drude_matsubara_terms(bath: DrudeBath, n_matsubara: int):
    """Drude pole plus ``n_matsubara`` Matsubara terms (amplitudes, rates)."""
    lam, gam, beta = bath.angular()
    n = np.arange(1, n_matsubara + 1)
    nu_n = 2.0 * np.pi * n / beta
    amps = np.empty(n_matsubara + 1, dtype=complex)
    rates = np.empty(n_matsubara + 1, dtype=complex)
    amps[0] = lam * gam * (1.0 / np.tan(0.5 * beta * gam) - 1j)
    rates[0] = gam
    amps[1:] = 4.0 * lam * gam * nu_n / (beta * (nu_n**2 - gam**2))
    rates[1:] = nu_n
    return amps, rates


def validation_grid(bath: DrudeBath, t_min: float = KERNEL_VALIDATION_T_MIN,
                    t_max: float | None = None, n_points: int = 200) -> np.ndarray:
    _, gam, _ = bath.angular()
    if t_max is None:
        t_max = max(5.0 / gam, 2.0)
    return np.linspace(t_min, t_max, n_points)


@functools.lru_cache(maxsize=512)
def _unit_quadrature_table(gamma_cm, temperature, t_grid: tuple):
    # C is linear in lambda: tabulate once at lambda = 1 cm^-1
    unit = DrudeBath(1.0, gamma_cm, temperature)
    return np.array([correlation_quadrature(t, unit) for t in t_grid])


def expand_correlation(bath: DrudeBath, n_matsubara: int | None = None, tol: float = 1e-4,
                       t_min: float = KERNEL_VALIDATION_T_MIN, t_max: float | None = None
                       ) -> ExponentialKernel:
    """Exponential decomposition of C(t): Drude pole plus Matsubara terms.

    With ``n_matsubara=None`` the number of Matsubara terms grows until
    ``max|C_quad - C_kernel| <= tol * max|C_quad|`` on the validation grid
    [t_min, max(5/gamma, 2 ps)].
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    grid = validation_grid(bath, t_min, t_max)
    window = (float(grid[0]), float(grid[-1]))
    lam_eff = bath.effective_reorganization_energy
    if lam_eff == 0.0:
        n = 0 if n_matsubara is None else n_matsubara
        amps, rates = drude_matsubara_terms(bath, n)
        return ExponentialKernel(np.zeros_like(amps), rates, 0.0, window)

    unit_table = _unit_quadrature_table(float(bath.cutoff_frequency), float(bath.temperature),
                                        tuple(float(t) for t in grid))
    c_quad = lam_eff * unit_table
    scale = np.abs(c_quad).max()

    def deviation(n):
        amps, rates = drude_matsubara_terms(bath, n)
        approx = np.exp(-np.multiply.outer(grid, rates)) @ amps
        return np.abs(c_quad - approx).max()

    if n_matsubara is not None:
        if n_matsubara < 0:
            raise ValueError("n_matsubara must be >= 0")
        n = n_matsubara
        dev = deviation(n)
    else:
        n = 0
        dev = deviation(0)
        while dev > tol * scale:
            n += 1
            if n + 1 > MAX_KERNEL_TERMS:
                raise KernelTruncationError(
                    f"tol={tol:g} not reached with {MAX_KERNEL_TERMS} terms "
                    f"(T={bath.temperature} K); deviation {dev / scale:.3g}"
                )
            dev = deviation(n)
    amps, rates = drude_matsubara_terms(bath, n)
    return ExponentialKernel(amps, rates, float(dev), window)


def correlation_table(bath: DrudeBath, kernel: ExponentialKernel, times) -> np.ndarray:
    """Rows (t, Re C_quad, Im C_quad, Re C_kernel, Im C_kernel)."""
    times = np.asarray(times, dtype=float)
    cq = np.array([correlation_quadrature(t, bath) for t in times])
    ck = kernel(times)
    return np.column_stack([times, cq.real, cq.imag, ck.real, ck.imag])
