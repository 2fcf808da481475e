"""Energy transfer efficiency and yield bookkeeping.

    eta       = 2 r_trap int_0^inf rho_trap,trap dt
    loss      = sum_j 2 r_loss_j int_0^inf rho_jj dt
    eta + loss + Tr rho(T) = Tr rho(0)

Two routes: time integration with the yields carried as extra ODE
components (stopped at a trace floor), or the exact infinite-horizon
resolvent, where int_0^inf x(t) dt = -L^{-1} x(0) for the linear generator L.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .tc2 import (GeneratorSet, IntegrationError, OpenSystemState, PositivityWarning, SolverOptions,
                  Trajectory, _make_rhs, _min_eig, _steps, generator_matrix, spectral_abscissa)

DEFAULT_TRACE_FLOOR = 1e-4
DENSITY_TOL = 1e-10


@dataclass(frozen=True)
class TransferResult:
    eta: float
    loss_yield: float
    residual_trace: float
    t_final: float
    converged: bool
    min_eigenvalue: float = np.nan
    method: str = "dop853"
    message: str = ""
    trajectory: Trajectory | None = field(default=None, repr=False, compare=False)

    @property
    def bookkeeping_error(self) -> float:
        """|1 - (eta + loss + residual)| for a unit-trace initial state."""
        return abs(1.0 - (self.eta + self.loss_yield + self.residual_trace))


def validate_density(rho0, n: int | None = None, tol: float = DENSITY_TOL) -> np.ndarray:
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.ndim != 2 or rho0.shape[0] != rho0.shape[1]:
        raise ValueError("density matrix must be square")
    if n is not None and rho0.shape[0] != n:
        raise ValueError(f"density matrix must be {n}x{n}")
    if np.abs(rho0 - rho0.conj().T).max() > tol:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho0) - 1.0) > tol:
        raise ValueError("density matrix trace differs from 1")
    if np.linalg.eigvalsh(0.5 * (rho0 + rho0.conj().T))[0] < -tol:
        raise ValueError("density matrix is not positive semidefinite")
    return rho0


def site_state(n: int, site: int) -> np.ndarray:
    """|site><site| with 1-based site index."""
    rho = np.zeros((n, n), complex)
    rho[site - 1, site - 1] = 1.0
    return rho


def mixed_state(n: int, sites) -> np.ndarray:
    """Equal incoherent mixture of the given 1-based sites."""
    rho = np.zeros((n, n), complex)
    for s in sites:
        rho[s - 1, s - 1] += 1.0 / len(sites)
    return rho


def compute_ete(gen: GeneratorSet, rho0, opts: SolverOptions | None = None,
                convergence_trace_floor: float = DEFAULT_TRACE_FLOOR,
                record: bool = False) -> TransferResult:
    """Trapping yield, loss yield and leftover trace for initial state ``rho0``.

    Time-stepping methods integrate the yields alongside the state and stop
    once Tr rho drops below ``convergence_trace_floor`` (``converged=False``
    if ``opts.t_max`` comes first).  ``method="resolvent"`` returns the exact
    infinite-time yields.  ``record=True`` keeps every ``opts.record_stride``-th
    step as ``result.trajectory``.
    """
    opts = opts or SolverOptions()
    rho0 = validate_density(rho0, gen.n_sites)
    if opts.method == "resolvent":
        return _ete_resolvent(gen, rho0)
    n, K = gen.n_sites, gen.n_terms
    nn = n * n
    n_state = nn * (1 + n * K)
    fun = _make_rhs(gen, with_yields=True)
    y0 = np.concatenate([OpenSystemState.initial(rho0, gen).pack(), np.zeros(1 + n)])
    min_eig = _min_eig(rho0)
    t, y = 0.0, y0
    converged = False
    msg = ""
    times, rhos = [0.0], [rho0.copy()]
    step = 0
    try:
        for t, y in _steps(fun, y0, opts, opts.t_max):
            step += 1
            rho = y[:nn].reshape(n, n)
            min_eig = min(min_eig, _min_eig(rho))
            converged = np.real(np.trace(rho)) < convergence_trace_floor
            if record and (converged or step % opts.record_stride == 0):
                times.append(t)
                rhos.append(rho.copy())
            if converged:
                break
    except IntegrationError as exc:
        msg = str(exc)
    if min_eig < -opts.positivity_tol:
        warnings.warn(f"rho lost positivity: min eigenvalue {min_eig:.3g}", PositivityWarning,
                      stacklevel=2)
    rho = y[:nn].reshape(n, n)
    yields = y[n_state:].real
    traj = None
    if record:
        if times[-1] != t:
            times.append(t)
            rhos.append(rho.copy())
        rhos = np.array(rhos)
        traj = Trajectory(np.array(times), rhos, np.real(np.einsum("tjj->t", rhos)),
                          np.real(rhos[:, gen.trap_site - 1, gen.trap_site - 1]), min_eig,
                          OpenSystemState.unpack(y, n, K, t), step, min_eig < -opts.positivity_tol)
    return TransferResult(
        eta=float(yields[0]), loss_yield=float(np.sum(np.sort(yields[1:]))),
        residual_trace=float(np.real(np.trace(rho))), t_final=float(t), converged=bool(converged),
        min_eigenvalue=min_eig, method=opts.method, message=msg, trajectory=traj,
    )


def _integrated_density(gen: GeneratorSet, rho0_columns: np.ndarray) -> np.ndarray:
    """int_0^inf rho(t) dt for each column of vectorized initial states."""
    n = gen.n_sites
    L = generator_matrix(gen)
    rhs = np.zeros((L.shape[0], rho0_columns.shape[1]), complex)
    rhs[:n * n] = -rho0_columns
    lu = spla.splu(L)
    sol = lu.solve(rhs)
    return sol[:n * n].T.reshape(-1, n, n)


def _ete_resolvent(gen: GeneratorSet, rho0: np.ndarray) -> TransferResult:
    trap = gen.trap_site - 1
    P = _integrated_density(gen, rho0.reshape(-1, 1))[0]
    pops = np.real(np.diagonal(P))
    eta = 2.0 * gen.trap_rate * pops[trap]
    loss = float(np.sum(np.sort(2.0 * gen.loss_rates * pops)))
    # the integral only exists if no mode of the generator grows
    abscissa = spectral_abscissa(gen)
    ok = abscissa < 0 and -1e-9 <= eta <= 1.0 + 1e-4 and np.all(np.isfinite(P))
    msg = "" if ok else f"no finite-time limit (spectral abscissa {abscissa:.3g}, eta={eta:.4g})"
    return TransferResult(
        eta=float(eta), loss_yield=loss, residual_trace=0.0, t_final=np.inf, converged=bool(ok),
        min_eigenvalue=np.nan, method="resolvent", message=msg,
    )


@dataclass(frozen=True)
class EfficiencyOperator:
    """eta(rho0) = Re Tr(trap @ rho0), loss(rho0) = Re Tr(loss @ rho0).

    Valid for Hermitian rho0; both matrices are Hermitian.
    """

    trap: np.ndarray
    loss: np.ndarray

    def eta(self, rho0) -> float:
        return float(np.real(np.sum(self.trap.T * rho0)))

    def loss_yield(self, rho0) -> float:
        return float(np.real(np.sum(self.loss.T * rho0)))

    def etas(self, rhos) -> np.ndarray:
        return np.real(np.einsum("ba,sab->s", self.trap, np.asarray(rhos)))


def efficiency_operator(gen: GeneratorSet) -> EfficiencyOperator:
    """Both yields as linear functionals of the initial state (n^2 resolvent solves)."""
    n = gen.n_sites
    trap = gen.trap_site - 1
    P = _integrated_density(gen, np.eye(n * n))  # P[a*n+b] from |a><b|
    eta_ab = 2.0 * gen.trap_rate * P[:, trap, trap]
    loss_ab = np.einsum("sjj,j->s", P, 2.0 * gen.loss_rates)
    E_trap = eta_ab.reshape(n, n).T
    E_loss = loss_ab.reshape(n, n).T
    return EfficiencyOperator(0.5 * (E_trap + E_trap.conj().T), 0.5 * (E_loss + E_loss.conj().T))
