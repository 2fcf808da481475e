"""Complete parameter set for one efficiency evaluation, plus a process-pool map."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

import numpy as np

from .bath import DrudeBath, KernelTruncationError, QuadratureError
from .efficiency import TransferResult, compute_ete, mixed_state
from .exciton import (ChromophoreGeometry, SiteBasisHamiltonian, couplings_from_geometry,
                      fmo_default_geometry, fmo_default_hamiltonian, rescale_geometry)
from .tc2 import IntegrationError, SolverOptions, TrapLossConfig, assemble_generators

#: Canonical names of scannable parameters and their CLI aliases.
PARAMETERS = {
    "reorganization_energy": ("lambda", "lam"),
    "cutoff_frequency": ("gamma",),
    "temperature": ("T", "temp"),
    "trap_rate_inverse": ("trap-time", "trap_time"),
    "loss_rate_inverse": ("loss-time", "loss_time"),
    "compactness": ("k",),
}
UNITS = {
    "reorganization_energy": "cm^-1",
    "cutoff_frequency": "cm^-1",
    "temperature": "K",
    "trap_rate_inverse": "ps",
    "loss_rate_inverse": "ps",
    "compactness": "",
}
LABELS = {
    "reorganization_energy": "lambda",
    "cutoff_frequency": "gamma",
    "temperature": "T",
    "trap_rate_inverse": "1/r_trap",
    "loss_rate_inverse": "1/r_loss",
    "compactness": "k",
}


def canonical_parameter(name: str) -> str:
    if name in PARAMETERS:
        return name
    for canon, aliases in PARAMETERS.items():
        if name in aliases:
            return canon
    raise ValueError(f"unknown parameter {name!r}; choose from {sorted(PARAMETERS)}")


def default_initial_state(n: int = 7) -> np.ndarray:
    """Equal mixture of sites 1 and 6 (falls back to site 1 for small systems)."""
    return mixed_state(n, [1, 6] if n >= 6 else [1])


@dataclass(frozen=True, eq=False)
class ModelConfig:
    """Hamiltonian, geometry, bath, sinks, initial state and solver settings."""

    hamiltonian: SiteBasisHamiltonian = field(default_factory=fmo_default_hamiltonian)
    geometry: ChromophoreGeometry | None = field(default_factory=fmo_default_geometry)
    bath: DrudeBath = DrudeBath()
    trap: TrapLossConfig = TrapLossConfig()
    rho0: np.ndarray | None = None
    solver: SolverOptions = SolverOptions()
    trace_floor: float = 1e-4
    n_matsubara: int | None = None
    kernel_tol: float = 1e-4

    def __post_init__(self):
        n = self.hamiltonian.n_sites
        if self.rho0 is None:
            object.__setattr__(self, "rho0", default_initial_state(n))
        if self.geometry is not None and self.geometry.n_sites != n:
            raise ValueError("geometry and Hamiltonian differ in size")
        if not 1 <= self.trap.trap_site <= n:
            raise ValueError(f"trap site must be in 1..{n}")

    @property
    def n_sites(self) -> int:
        return self.hamiltonian.n_sites

    def generators(self):
        return assemble_generators(self.hamiltonian, self.trap, self.bath, self.n_matsubara,
                                   self.kernel_tol)

    def with_parameter(self, name: str, value: float) -> "ModelConfig":
        """Copy with one scannable parameter replaced."""
        name = canonical_parameter(name)
        value = float(value)
        if name == "reorganization_energy":
            return replace(self, bath=replace(self.bath, reorganization_energy=value))
        if name == "cutoff_frequency":
            return replace(self, bath=replace(self.bath, cutoff_frequency=value))
        if name == "temperature":
            return replace(self, bath=replace(self.bath, temperature=value))
        if name == "trap_rate_inverse":
            return replace(self, trap=replace(self.trap, trap_rate=1.0 / value))
        if name == "loss_rate_inverse":
            return replace(self, trap=replace(self.trap, loss_rate=1.0 / value))
        if self.geometry is None:
            raise ValueError("compactness needs a chromophore geometry")
        J = couplings_from_geometry(rescale_geometry(self.geometry, value))
        return replace(self, hamiltonian=self.hamiltonian.with_couplings(J))


def evaluate(cfg: ModelConfig) -> TransferResult:
    """Efficiency for one configuration; numerical failures become a NaN result."""
    try:
        return compute_ete(cfg.generators(), cfg.rho0, cfg.solver, cfg.trace_floor)
    except (IntegrationError, KernelTruncationError, QuadratureError, np.linalg.LinAlgError,
            RuntimeError) as exc:
        return failed_result(str(exc), cfg.solver.method)


def failed_result(message: str, method: str = "") -> TransferResult:
    return TransferResult(np.nan, np.nan, np.nan, np.nan, False, np.nan, method, message)


def default_workers() -> int:
    return os.cpu_count() or 1


def parallel_map(fn: Callable, items: Iterable, workers: int | None = None) -> list:
    """Ordered map; a process pool when ``workers > 1``, a plain loop otherwise."""
    items = list(items)
    workers = default_workers() if workers is None else int(workers)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def parameter_value(cfg: ModelConfig, name: str) -> float:
    """Current value of a scannable parameter (compactness of the stored geometry is 1)."""
    name = canonical_parameter(name)
    if name == "reorganization_energy":
        return cfg.bath.reorganization_energy
    if name == "cutoff_frequency":
        return cfg.bath.cutoff_frequency
    if name == "temperature":
        return cfg.bath.temperature
    if name == "trap_rate_inverse":
        return 1.0 / cfg.trap.trap_rate if cfg.trap.trap_rate > 0 else np.inf
    if name == "loss_rate_inverse":
        r = float(np.mean(cfg.trap.loss_rate))
        return 1.0 / r if r > 0 else np.inf
    return 1.0
