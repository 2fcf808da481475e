"""TC2 time-nonlocal master equation with exciton loss and trapping.

    d rho/dt = -i[H, rho] - sum_j r_j {S_j, rho} - r_trap {S_trap, rho}
               - sum_j [S_j, Lambda_j(t) - Lambda_j(t)^dagger]

    Lambda_j(t) = int_0^t C_j(t - s) U(t - s) S_j rho(s) U(t - s)^dagger ds

With C_j a sum of exponentials the memory operator splits into auxiliaries
A_jk obeying local ODEs, which is what ``propagate`` integrates.
``propagate_oracle`` evaluates the convolution from the stored history
instead and serves as an independent check.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import DOP853, RK45

from .bath import DrudeBath, ExponentialKernel, correlation_integral_quadrature, \
    correlation_quadrature, expand_correlation
from .exciton import KAPPA, SiteBasisHamiltonian

ADAPTIVE_METHODS = {"dop853": DOP853, "rk45": RK45}
METHODS = ("dop853", "rk45", "rk4", "resolvent")
MAX_ORACLE_STEPS = 100_000


class IntegrationError(RuntimeError):
    """Integrator failure; ``time`` is where it happened (ps)."""

    def __init__(self, msg, time=None):
        super().__init__(msg)
        self.time = time


class PositivityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class TrapLossConfig:
    """Trap site (1-based) and rates in ps^-1."""

    trap_site: int = 3
    trap_rate: float = 2.0
    loss_rate: float | Sequence[float] = 1e-3

    @classmethod
    def from_times(cls, trap_site=3, trap_time=0.5, loss_time=1000.0):
        """Rates from time scales in ps (``inf`` disables the channel)."""
        return cls(trap_site, 1.0 / trap_time, 1.0 / loss_time)


@dataclass(frozen=True)
class SolverOptions:
    """Integration settings.

    ``method``: "dop853" or "rk45" (adaptive embedded pairs), "rk4" (fixed
    step ``step``), or "resolvent" (exact infinite-time yields, efficiency
    only).
    """

    method: str = "dop853"
    rtol: float = 1e-7
    atol: float = 1e-10
    step: float = 1e-3
    first_step: float = 1e-3
    t_max: float = 20_000.0
    record_stride: int = 1
    positivity_tol: float = 1e-3

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.rtol <= 0 or self.atol <= 0 or self.step <= 0 or self.first_step <= 0:
            raise ValueError("tolerances and steps must be positive")
        if self.t_max <= 0:
            raise ValueError("t_max must be positive")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")


@dataclass(frozen=True, eq=False)
class GeneratorSet:
    """Everything the TC2 right-hand side needs, precomputed once.

    Angular quantities (``*_ang``) are in rad/ps; ``eigenvalues`` in cm^-1.
    """

    hamiltonian: SiteBasisHamiltonian
    trap_site: int
    trap_rate: float
    loss_rates: np.ndarray
    kernels: tuple
    baths: tuple | None = None
    eigenvalues: np.ndarray = field(init=False)
    eigenbasis: np.ndarray = field(init=False)

    def __post_init__(self):
        n = self.hamiltonian.n_sites
        if not 1 <= self.trap_site <= n:
            raise ValueError(f"trap_site must be in 1..{n}")
        if self.trap_rate < 0:
            raise ValueError("trap rate must be >= 0")
        loss = np.broadcast_to(np.asarray(self.loss_rates, dtype=float), (n,)).copy()
        if np.any(loss < 0):
            raise ValueError("loss rates must be >= 0")
        loss.setflags(write=False)
        object.__setattr__(self, "loss_rates", loss)
        if len(self.kernels) != n:
            raise ValueError("need one kernel per site")
        object.__setattr__(self, "kernels", tuple(self.kernels))
        w, V = np.linalg.eigh(self.hamiltonian.matrix())
        object.__setattr__(self, "eigenvalues", w)
        object.__setattr__(self, "eigenbasis", V)

        K = max(k.n_terms for k in self.kernels)
        amps = np.zeros((n, K), complex)
        rates = np.ones((n, K), complex)
        for j, k in enumerate(self.kernels):
            amps[j, :k.n_terms] = k.amplitudes
            rates[j, :k.n_terms] = k.decay_rates
        gamma = loss.copy()
        gamma[self.trap_site - 1] += self.trap_rate
        H = self.hamiltonian.matrix() * KAPPA
        object.__setattr__(self, "_amps", amps)
        object.__setattr__(self, "_rates", rates)
        object.__setattr__(self, "_H", H)
        object.__setattr__(self, "_sink", gamma)
        object.__setattr__(self, "_Heff", H - 1j * np.diag(gamma))

    @property
    def n_sites(self) -> int:
        return self.hamiltonian.n_sites

    @property
    def n_terms(self) -> int:
        return self._amps.shape[1]

    @property
    def h_angular(self) -> np.ndarray:
        return self._H

    @property
    def sink_rates(self) -> np.ndarray:
        """Total anticommutator rate per site (loss plus trap), ps^-1."""
        return self._sink


@dataclass
class OpenSystemState:
    """System density matrix plus auxiliary memory operators A[j, k]."""

    rho: np.ndarray
    auxiliaries: np.ndarray
    time: float = 0.0

    @classmethod
    def initial(cls, rho0, gen: GeneratorSet) -> "OpenSystemState":
        rho0 = np.array(rho0, dtype=complex)
        n = gen.n_sites
        if rho0.shape != (n, n):
            raise ValueError(f"rho0 must be {n}x{n}")
        return cls(rho0, np.zeros((n, gen.n_terms, n, n), complex), 0.0)

    def pack(self) -> np.ndarray:
        return np.concatenate([self.rho.ravel(), self.auxiliaries.ravel()])

    @classmethod
    def unpack(cls, y, n, K, time=0.0) -> "OpenSystemState":
        nn = n * n
        return cls(y[:nn].reshape(n, n).copy(), y[nn:nn * (1 + n * K)].reshape(n, K, n, n).copy(), time)


@dataclass
class Trajectory:
    times: np.ndarray
    rhos: np.ndarray
    traces: np.ndarray
    trap_populations: np.ndarray
    min_eigenvalue: float
    final_state: OpenSystemState | None = None
    n_steps: int = 0
    positivity_violated: bool = False

    def populations(self) -> np.ndarray:
        return np.real(np.einsum("tjj->tj", self.rhos))

    def min_eigenvalues(self) -> np.ndarray:
        return np.array([np.linalg.eigvalsh(0.5 * (r + r.conj().T))[0] for r in self.rhos])


def assemble_generators(h: SiteBasisHamiltonian, trap_loss: TrapLossConfig | None = None,
                        baths: DrudeBath | Sequence[DrudeBath] | None = None,
                        n_matsubara: int | None = None, kernel_tol: float = 1e-4) -> GeneratorSet:
    """Eigendecompose H, expand each bath correlation function, package rates."""
    trap_loss = trap_loss or TrapLossConfig()
    n = h.n_sites
    if baths is None:
        baths = DrudeBath()
    if isinstance(baths, DrudeBath):
        baths = (baths,) * n
    baths = tuple(baths)
    if len(baths) != n:
        raise ValueError("need one bath per site")
    cache = {}
    kernels = []
    for b in baths:
        if b not in cache:
            cache[b] = expand_correlation(b, n_matsubara=n_matsubara, tol=kernel_tol)
        kernels.append(cache[b])
    return GeneratorSet(h, int(trap_loss.trap_site), float(trap_loss.trap_rate),
                        trap_loss.loss_rate, tuple(kernels), baths)


# -- right-hand side -----------------------------------------------------------

def _make_rhs(gen: GeneratorSet, with_yields: bool = False):
    n, K = gen.n_sites, gen.n_terms
    nn = n * n
    H, Heff = gen._H, gen._Heff
    Heff_dag = Heff.conj().T
    amps = gen._amps[:, :, None, None]
    rates = gen._rates[:, :, None, None]
    idx = np.arange(n)
    n_state = nn * (1 + n * K)
    sink2 = 2.0 * gen._sink
    trap = gen.trap_site - 1
    loss2 = 2.0 * gen.loss_rates

    def rhs(t, y):
        rho = y[:nn].reshape(n, n)
        A = y[nn:n_state].reshape(n, K, n, n)
        drho = -1j * (Heff @ rho - rho @ Heff_dag)
        B = A.sum(axis=1)
        B = B - B.conj().transpose(0, 2, 1)
        # -[S_j, B_j]: minus row j of B_j, plus column j of B_j
        drho[idx, :] -= B[idx, idx, :]
        drho[:, idx] += B[idx, :, idx].T
        Srho = np.zeros((n, n, n), complex)
        Srho[idx, idx, :] = rho
        dA = amps * Srho[:, None] - 1j * (H @ A - A @ H) - rates * A
        if not with_yields:
            return np.concatenate([drho.ravel(), dA.ravel()])
        pops = np.real(np.diagonal(rho))
        return np.concatenate([drho.ravel(), dA.ravel(), (2.0 * gen.trap_rate * pops[trap],),
                               loss2 * pops])

    return rhs


def derivative(state: OpenSystemState, gen: GeneratorSet) -> OpenSystemState:
    """Time derivative of (rho, auxiliaries) as an OpenSystemState."""
    y = _make_rhs(gen)(state.time, state.pack())
    return OpenSystemState.unpack(y, gen.n_sites, gen.n_terms, state.time)


def _steps(fun, y0, opts: SolverOptions, t_max: float):
    """Yield (t, y) after every accepted step."""
    if opts.method == "rk4":
        h = opts.step
        t, y = 0.0, y0.copy()
        n_steps = int(np.ceil(t_max / h - 1e-9))
        for i in range(n_steps):
            dt = min(h, t_max - t)
            k1 = fun(t, y)
            k2 = fun(t + dt / 2, y + dt / 2 * k1)
            k3 = fun(t + dt / 2, y + dt / 2 * k2)
            k4 = fun(t + dt, y + dt * k3)
            y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            t = (i + 1) * h if i + 1 < n_steps else t_max
            if not np.all(np.isfinite(y)):
                raise IntegrationError(f"non-finite state at t={t:.6g} ps", t)
            yield t, y
        return
    if opts.method not in ADAPTIVE_METHODS:
        raise ValueError(f"method {opts.method!r} cannot propagate trajectories")
    solver = ADAPTIVE_METHODS[opts.method](fun, 0.0, y0, t_max, rtol=opts.rtol, atol=opts.atol,
                                           first_step=min(opts.first_step, t_max))
    while solver.status == "running":
        msg = solver.step()
        if solver.status == "failed":
            raise IntegrationError(f"integration failed at t={solver.t:.6g} ps: {msg}", solver.t)
        yield solver.t, solver.y


def _min_eig(rho) -> float:
    return float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0])


def propagate(state0: OpenSystemState, gen: GeneratorSet, opts: SolverOptions | None = None,
              stop: Callable[[float, np.ndarray], bool] | None = None) -> Trajectory:
    """Integrate the auxiliary-operator form of TC2 from ``state0`` to ``opts.t_max``.

    Records every ``record_stride`` accepted steps (plus t=0 and the final
    step).  ``stop(t, rho)`` may end the run early.  A minimum eigenvalue of
    rho below ``-positivity_tol`` triggers a PositivityWarning.
    """
    opts = opts or SolverOptions()
    if state0.time != 0.0 or np.any(state0.auxiliaries != 0):
        raise ValueError("propagation starts at t=0 with zero auxiliaries")
    n, K = gen.n_sites, gen.n_terms
    nn = n * n
    trap = gen.trap_site - 1
    fun = _make_rhs(gen)
    y0 = state0.pack()

    times, rhos = [0.0], [state0.rho.copy()]
    min_eig = _min_eig(state0.rho)
    t, y = 0.0, y0
    step = 0
    recorded = True
    for t, y in _steps(fun, y0, opts, opts.t_max):
        step += 1
        rho = y[:nn].reshape(n, n)
        min_eig = min(min_eig, _min_eig(rho))
        done = stop is not None and stop(t, rho)
        recorded = step % opts.record_stride == 0
        if recorded or done:
            times.append(t)
            rhos.append(rho.copy())
            recorded = True
        if done:
            break
    if not recorded:
        times.append(t)
        rhos.append(y[:nn].reshape(n, n).copy())
    rhos = np.array(rhos)
    violated = min_eig < -opts.positivity_tol
    if violated:
        warnings.warn(f"rho lost positivity: min eigenvalue {min_eig:.3g}", PositivityWarning,
                      stacklevel=2)
    return Trajectory(
        times=np.array(times), rhos=rhos, traces=np.real(np.einsum("tjj->t", rhos)),
        trap_populations=np.real(rhos[:, trap, trap]), min_eigenvalue=min_eig,
        final_state=OpenSystemState.unpack(y, n, K, t), n_steps=step, positivity_violated=violated,
    )


# -- linear generator (exact) --------------------------------------------------

def generator_matrix(gen: GeneratorSet) -> sp.csc_matrix:
    """Sparse complex-linear generator of the extended state.

    Variables are rho and D_jk = A_jk - A_jk^dagger, which close on their own
    for real decay rates.  Complex rates fall back to carrying A_jk and
    A_jk^dagger separately.  Vectorization is row-major.
    """
    n, K = gen.n_sites, gen.n_terms
    nn = n * n
    eye = sp.identity(n, format="csr")
    left = lambda M: sp.kron(sp.csr_matrix(M), eye, format="csr")
    right = lambda M: sp.kron(eye, sp.csr_matrix(M).T, format="csr")
    H, Heff = gen._H, gen._Heff
    L_rho = -1j * (left(Heff) - right(Heff.conj().T))
    comm = -1j * (left(H) - right(H))
    I_d = sp.identity(nn, format="csr")
    real_rates = np.all(gen._rates.imag == 0)

    n_aux = n * K * (1 if real_rates else 2)
    blocks = [[None] * (1 + n_aux) for _ in range(1 + n_aux)]
    blocks[0][0] = L_rho
    slot = 1
    for j in range(n):
        S = np.zeros((n, n))
        S[j, j] = 1.0
        LS, RS = left(S), right(S)
        for k in range(K):
            a, nu = gen._amps[j, k], gen._rates[j, k]
            if real_rates:
                blocks[slot][slot] = comm - nu.real * I_d
                blocks[slot][0] = a * LS - np.conj(a) * RS
                blocks[0][slot] = -(LS - RS)
                slot += 1
            else:
                blocks[slot][slot] = comm - nu * I_d
                blocks[slot][0] = a * LS
                blocks[slot + 1][slot + 1] = comm - np.conj(nu) * I_d
                blocks[slot + 1][0] = np.conj(a) * RS
                blocks[0][slot] = -(LS - RS)
                blocks[0][slot + 1] = LS - RS
                slot += 2
    return sp.bmat(blocks, format="csc")


def spectral_abscissa(gen: GeneratorSet, dense: bool = False, k: int = 12) -> float:
    """Largest real part of the generator spectrum.

    By default only the ``k`` eigenvalues closest to zero are computed
    (shift-invert); growing modes of this generator sit among the slowest
    ones.  ``dense=True`` diagonalizes the full matrix.
    """
    L = generator_matrix(gen)
    if not dense and L.shape[0] > k + 2:
        try:
            w = spla.eigs(L, k=k, sigma=0.0, which="LM", return_eigenvectors=False)
            return float(w.real.max())
        except (spla.ArpackNoConvergence, RuntimeError):
            pass
    return float(np.linalg.eigvals(L.toarray()).real.max())


# -- history-convolution oracle ------------------------------------------------

def _gregory_weights(P: int) -> np.ndarray:
    """Composite weights (unit spacing) for P intervals, exact for cubics."""
    if P == 0:
        return np.zeros(1)
    if P == 1:
        return np.array([0.5, 0.5])
    if P == 2:
        return np.array([1, 4, 1]) / 3.0
    if P == 3:
        return np.array([3, 9, 9, 3]) / 8.0
    if P == 4:
        return np.array([14, 64, 24, 64, 14]) / 45.0
    w = np.ones(P + 1)
    end = np.array([3 / 8, 7 / 6, 23 / 24])
    w[:3] = end
    w[-3:] = end[::-1]
    return w


def propagate_oracle(state0: OpenSystemState, gen: GeneratorSet, fixed_step: float, t_max: float,
                     correlation: str = "kernel") -> Trajectory:
    """Brute-force TC2 integration that convolves the stored history.

    Classical RK4 in time; the memory integral is re-evaluated from scratch
    at every stage with composite quadrature on a half-step grid, with the
    free propagator applied through the eigenbasis of H.  Cost is
    O(steps^2).  ``correlation="kernel"`` tabulates C(t) from the generator's
    exponential kernels; ``"quadrature"`` uses direct frequency quadrature
    (the t=0 log singularity is absorbed into an exact first-panel integral,
    which lowers the order to 2).
    """
    if correlation not in ("kernel", "quadrature"):
        raise ValueError("correlation must be 'kernel' or 'quadrature'")
    n_steps = int(round(t_max / fixed_step))
    if n_steps > MAX_ORACLE_STEPS:
        raise ValueError(f"{n_steps} oracle steps exceed the limit of {MAX_ORACLE_STEPS}")
    if n_steps < 1 or not np.isclose(n_steps * fixed_step, t_max, rtol=1e-9, atol=0):
        raise ValueError("t_max must be a positive multiple of fixed_step")
    if correlation == "quadrature" and gen.baths is None:
        raise ValueError("quadrature correlation needs the generator's baths")

    n = gen.n_sites
    h = fixed_step
    delta = h / 2.0
    Q = 2 * n_steps
    trap = gen.trap_site - 1
    E = gen.eigenvalues * KAPPA
    V = gen.eigenbasis
    Vh = V.conj().T
    U = V.conj()  # U[j, a] = <a|j>
    Heff = gen._Heff
    Heff_dag = Heff.conj().T
    q = np.arange(Q + 1)
    phase_tab = np.exp(-1j * np.outer(E, q * delta))  # (a, q)

    # group sites by correlation function
    groups: dict = {}
    for j in range(n):
        key = (gen.baths[j] if correlation == "quadrature" else
               (gen.kernels[j].amplitudes.tobytes(), gen.kernels[j].decay_rates.tobytes()))
        groups.setdefault(key, []).append(j)
    kernel_tabs = []
    for key, sites in groups.items():
        if correlation == "kernel":
            c = gen.kernels[sites[0]](q * delta)
        else:
            bath = key
            c = np.empty(Q + 1, complex)
            c[1:] = [correlation_quadrature(t, bath) for t in q[1:] * delta]
            # trapezoid weight on the first panel then integrates C exactly
            c[0] = 2.0 / delta * correlation_integral_quadrature(delta, bath) - c[1]
        kernel_tabs.append((np.array(sites), c[None, :] * phase_tab))

    hist = np.zeros((Q + 1, n, n), complex)  # r-hat[m, j, b]

    def history_node(m, rho):
        # e^{-i E_b t_m} (rho V)[j, b]
        hist[m] = (rho @ V) * np.exp(-1j * E * m * delta)[None, :]

    def memory(P):
        """Sum_j [S_j, Lambda_j - Lambda_j^dag] at t = P delta from nodes 0..P."""
        if P == 0:
            return np.zeros((n, n), complex)
        if correlation == "kernel":
            w = _gregory_weights(P) * delta
        else:
            w = np.full(P + 1, delta)
            w[[0, -1]] *= 0.5
        lam_eig = np.empty((n, n, n), complex)  # [j, a, b]
        out_phase = np.exp(1j * E * P * delta)
        for sites, tab in kernel_tabs:
            G = tab[:, P::-1] * w[None, :]          # (a, m): C(t - t_m) e^{-iE_a (t - t_m)}
            R = hist[:P + 1][:, sites, :].reshape(P + 1, -1)
            T = (G @ R).reshape(n, len(sites), n)    # [a, j, b]
            lam_eig[sites] = U[sites][:, :, None] * T.transpose(1, 0, 2) * out_phase[None, None, :]
        lam = V[None] @ lam_eig @ Vh[None]          # back to site basis
        B = lam - lam.conj().transpose(0, 2, 1)
        idx = np.arange(n)
        comm = np.zeros((n, n), complex)
        comm[idx, :] += B[idx, idx, :]
        comm[:, idx] -= B[idx, :, idx].T
        return comm

    def F(rho, P):
        return -1j * (Heff @ rho - rho @ Heff_dag) - memory(P)

    rho = np.array(state0.rho, dtype=complex)
    history_node(0, rho)
    times, rhos = [0.0], [rho.copy()]
    min_eig = _min_eig(rho)
    k1 = F(rho, 0)
    for s in range(n_steps):
        P = 2 * s
        y2 = rho + delta * k1
        history_node(P + 1, y2)
        k2 = F(y2, P + 1)
        y3 = rho + delta * k2
        history_node(P + 1, y3)
        k3 = F(y3, P + 1)
        y4 = rho + h * k3
        history_node(P + 1, 0.5 * (y2 + y3))
        history_node(P + 2, y4)
        k4 = F(y4, P + 2)
        new = rho + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        # settle the mid node by cubic Hermite interpolation, then refresh f
        history_node(P + 2, new)
        f_new = F(new, P + 2)
        mid = 0.5 * (rho + new) + h / 8.0 * (k1 - f_new)
        history_node(P + 1, mid)
        k1 = F(new, P + 2)
        rho = new
        times.append((s + 1) * h)
        rhos.append(rho.copy())
        min_eig = min(min_eig, _min_eig(rho))
    rhos = np.array(rhos)
    return Trajectory(
        times=np.array(times), rhos=rhos, traces=np.real(np.einsum("tjj->t", rhos)),
        trap_populations=np.real(rhos[:, trap, trap]), min_eigenvalue=min_eig, n_steps=n_steps,
    )


def write_trajectory_csv(path, traj: Trajectory, coherences: Sequence[tuple] = ()) -> None:
    """Columns t_ps, trace, pop_1..pop_N, min_eigenvalue, then re/im of each (j, k) pair (1-based)."""
    n = traj.rhos.shape[1]
    for j, k in coherences:
        if not (1 <= j <= n and 1 <= k <= n):
            raise ValueError(f"coherence ({j}, {k}) out of range")
    fmt = lambda x: format(float(x), ".17g")
    pops = traj.populations()
    mins = traj.min_eigenvalues()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["t_ps", "trace"] + [f"pop_{j}" for j in range(1, n + 1)] + ["min_eigenvalue"]
        for j, k in coherences:
            header += [f"re_rho_{j}_{k}", f"im_rho_{j}_{k}"]
        w.writerow(header)
        for i, t in enumerate(traj.times):
            row = [fmt(t), fmt(traj.traces[i])] + [fmt(p) for p in pops[i]] + [fmt(mins[i])]
            for j, k in coherences:
                c = traj.rhos[i, j - 1, k - 1]
                row += [fmt(c.real), fmt(c.imag)]
            w.writerow(row)
