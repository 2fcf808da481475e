"""Efficiency landscapes over parameter pairs and their stencil derivatives."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .efficiency import TransferResult
from .model import LABELS, ModelConfig, canonical_parameter, default_workers, evaluate, parallel_map

SPACINGS = ("linear", "logarithmic")
STENCIL_MARGIN = 2


def _fmt(x) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True, eq=False)
class ScanAxis:
    parameter: str
    grid: np.ndarray
    spacing: str = "linear"

    def __post_init__(self):
        object.__setattr__(self, "parameter", canonical_parameter(self.parameter))
        spacing = {"lin": "linear", "log": "logarithmic"}.get(self.spacing, self.spacing)
        if spacing not in SPACINGS:
            raise ValueError(f"spacing must be one of {SPACINGS}")
        object.__setattr__(self, "spacing", spacing)
        g = np.array(self.grid, dtype=float).ravel()
        if g.size < 5:
            raise ValueError("an axis needs at least 5 nodes for the five-point stencil")
        if np.any(np.diff(g) <= 0):
            raise ValueError("axis grid must be strictly increasing")
        if np.any(g <= 0):
            raise ValueError(f"{self.parameter} values must be positive")
        g.setflags(write=False)
        object.__setattr__(self, "grid", g)

    @classmethod
    def from_range(cls, parameter, start, stop, count, spacing="linear") -> "ScanAxis":
        spacing = {"lin": "linear", "log": "logarithmic"}.get(spacing, spacing)
        if spacing == "logarithmic":
            grid = np.geomspace(start, stop, int(count))
        else:
            grid = np.linspace(start, stop, int(count))
        return cls(parameter, grid, spacing)

    @classmethod
    def parse(cls, parameter: str, text: str) -> "ScanAxis":
        """``start:stop:count[:spacing]`` with spacing ``lin`` or ``log``."""
        parts = text.split(":")
        if len(parts) not in (3, 4):
            raise ValueError(f"axis {text!r} is not start:stop:count[:spacing]")
        spacing = parts[3] if len(parts) == 4 else "linear"
        return cls.from_range(parameter, float(parts[0]), float(parts[1]), int(parts[2]), spacing)

    def __len__(self):
        return self.grid.size

    def coordinates(self) -> np.ndarray:
        """Node positions in the declared spacing (log of the value for log axes)."""
        return np.log(self.grid) if self.spacing == "logarithmic" else self.grid.copy()

    def normalized(self) -> np.ndarray:
        c = self.coordinates()
        return (c - c[0]) / (c[-1] - c[0])

    def step(self, coordinates: str = "normalized") -> float:
        """Uniform node spacing; raises for a non-uniform grid."""
        c = self.normalized() if coordinates == "normalized" else self.coordinates()
        d = np.diff(c)
        if not np.allclose(d, d[0], rtol=1e-9, atol=0):
            raise ValueError(f"{self.parameter} axis is not uniform in {self.spacing} spacing")
        return float(d[0])

    def label(self) -> str:
        return LABELS[self.parameter]


@dataclass(eq=False)
class ScanGrid2D:
    axis1: ScanAxis
    axis2: ScanAxis
    eta: np.ndarray
    loss_yield: np.ndarray
    residual_trace: np.ndarray
    converged: np.ndarray
    metadata: dict = field(default_factory=dict)

    def node(self, v1: float, v2: float) -> tuple:
        """Index of the grid node nearest (v1, v2), measured in normalized coordinates."""
        def nearest(axis, v):
            c = np.log(v) if axis.spacing == "logarithmic" else v
            return int(np.argmin(np.abs(axis.coordinates() - c)))
        return nearest(self.axis1, v1), nearest(self.axis2, v2)


@dataclass(eq=False)
class DerivativeField:
    """Norm fields on interior nodes; index [i, j] is grid node [i + 2, j + 2]."""

    gradient_norm: np.ndarray | None = None
    hessian_norm: np.ndarray | None = None
    hessian_eigenvalues: np.ndarray | None = None
    stencil_margin: int = STENCIL_MARGIN
    coordinates: str = "normalized"


def _node_job(args):
    cfg, p1, v1, p2, v2 = args
    return evaluate(cfg.with_parameter(p1, v1).with_parameter(p2, v2))


def scan_ete_2d(base: ModelConfig, axis1: ScanAxis, axis2: ScanAxis, workers: int | None = 1,
                known: dict | None = None, on_result=None) -> ScanGrid2D:
    """Efficiency at every node of axis1 x axis2, all other parameters from ``base``.

    ``known`` maps (i, j) to an already computed TransferResult (resumed
    scans).  Failed nodes and resolvent nodes without a finite-time limit
    are stored as NaN.  ``on_result(i, j, result)`` fires for each newly
    computed node as soon as its block of nodes finishes.
    """
    if axis1.parameter == axis2.parameter:
        raise ValueError("the two axes must scan different parameters")
    known = known or {}
    n1, n2 = len(axis1), len(axis2)
    todo = [(i, j) for i in range(n1) for j in range(n2) if (i, j) not in known]
    results = dict(known)
    block = max(1, 4 * (workers or default_workers()))
    for start in range(0, len(todo), block):
        chunk = todo[start:start + block]
        jobs = [(base, axis1.parameter, axis1.grid[i], axis2.parameter, axis2.grid[j]) for i, j in chunk]
        for (i, j), r in zip(chunk, parallel_map(_node_job, jobs, workers)):
            results[(i, j)] = r
            if on_result is not None:
                on_result(i, j, r)

    eta = np.full((n1, n2), np.nan)
    loss = np.full((n1, n2), np.nan)
    resid = np.full((n1, n2), np.nan)
    conv = np.zeros((n1, n2), bool)
    for i in range(n1):
        for j in range(n2):
            r: TransferResult = results[(i, j)]
            if r.method == "resolvent" and not r.converged:
                continue
            eta[i, j], loss[i, j], resid[i, j], conv[i, j] = r.eta, r.loss_yield, r.residual_trace, r.converged
    meta = {"base": describe_config(base), "axis1": axis1.parameter, "axis2": axis2.parameter}
    return ScanGrid2D(axis1, axis2, eta, loss, resid, conv, meta)


def describe_config(cfg: ModelConfig) -> dict:
    return {
        "reorganization_energy": cfg.bath.reorganization_energy,
        "cutoff_frequency": cfg.bath.cutoff_frequency,
        "temperature": cfg.bath.temperature,
        "spectral_form": cfg.bath.spectral_form,
        "trap_site": cfg.trap.trap_site,
        "trap_rate": cfg.trap.trap_rate,
        "loss_rate": np.asarray(cfg.trap.loss_rate, dtype=float).tolist(),
        "method": cfg.solver.method,
    }


# -- stencils --------------------------------------------------------------

def _d1(f, h, axis):
    """Five-point first derivative on interior nodes along ``axis``."""
    f = np.moveaxis(f, axis, 0)
    d = (-f[4:] + 8 * f[3:-1] - 8 * f[1:-3] + f[:-4]) / (12.0 * h)
    return np.moveaxis(d, 0, axis)


def _d2(f, h, axis):
    f = np.moveaxis(f, axis, 0)
    d = (-f[4:] + 16 * f[3:-1] - 30 * f[2:-2] + 16 * f[1:-3] - f[:-4]) / (12.0 * h * h)
    return np.moveaxis(d, 0, axis)


def _dxy(f, h1, h2):
    """Fourth-order mixed derivative from the two diagonal shells."""
    n1, n2 = f.shape
    c = lambda a, b: f[2 + a:n1 - 2 + a, 2 + b:n2 - 2 + b]
    d1 = c(1, 1) - c(1, -1) - c(-1, 1) + c(-1, -1)
    d2 = c(2, 2) - c(2, -2) - c(-2, 2) + c(-2, -2)
    return (16.0 * d1 - d2) / (48.0 * h1 * h2)


def stencil_gradient(f: np.ndarray, h1: float, h2: float) -> np.ndarray:
    """(df/dx1, df/dx2) on interior nodes, shape (2, n1 - 4, n2 - 4)."""
    f = np.asarray(f, dtype=float)
    return np.stack([_d1(f, h1, 0)[:, 2:-2], _d1(f, h2, 1)[2:-2, :]])


def stencil_hessian(f: np.ndarray, h1: float, h2: float) -> np.ndarray:
    """2x2 Hessians on interior nodes, shape (n1 - 4, n2 - 4, 2, 2)."""
    f = np.asarray(f, dtype=float)
    fxx = _d2(f, h1, 0)[:, 2:-2]
    fyy = _d2(f, h2, 1)[2:-2, :]
    fxy = _dxy(f, h1, h2)
    return np.stack([np.stack([fxx, fxy], -1), np.stack([fxy, fyy], -1)], -2)


def _steps(grid: ScanGrid2D, coordinates: str):
    if coordinates not in ("normalized", "raw"):
        raise ValueError("coordinates must be 'normalized' or 'raw'")
    return grid.axis1.step(coordinates), grid.axis2.step(coordinates)


def gradient_norm_field(grid: ScanGrid2D, coordinates: str = "normalized") -> DerivativeField:
    """Euclidean norm of the five-point gradient; NaN where a stencil touches a missing node."""
    h1, h2 = _steps(grid, coordinates)
    g = stencil_gradient(grid.eta, h1, h2)
    norm = np.sqrt(g[0] ** 2 + g[1] ** 2)
    # the centre weight of the first-derivative stencil is zero; a missing node is still missing
    m = STENCIL_MARGIN
    norm[np.isnan(grid.eta[m:-m, m:-m])] = np.nan
    return DerivativeField(gradient_norm=norm, coordinates=coordinates)


def hessian_norm_field(grid: ScanGrid2D, coordinates: str = "normalized",
                       norm: str = "spectral") -> DerivativeField:
    """Spectral (largest |eigenvalue|) or Frobenius norm of the stencil Hessian."""
    if norm not in ("spectral", "frobenius"):
        raise ValueError("norm must be 'spectral' or 'frobenius'")
    h1, h2 = _steps(grid, coordinates)
    H = stencil_hessian(grid.eta, h1, h2)
    bad = ~np.isfinite(H).all(axis=(-1, -2))
    H = np.where(bad[..., None, None], 0.0, H)
    ev = np.linalg.eigvalsh(H)
    if norm == "spectral":
        val = np.abs(ev).max(axis=-1)
    else:
        val = np.sqrt((H ** 2).sum(axis=(-1, -2)))
    val[bad] = np.nan
    ev[bad] = np.nan
    return DerivativeField(hessian_norm=val, hessian_eigenvalues=ev, coordinates=coordinates)


def derivative_fields(grid: ScanGrid2D, coordinates: str = "normalized",
                      norm: str = "spectral") -> DerivativeField:
    g = gradient_norm_field(grid, coordinates)
    h = hessian_norm_field(grid, coordinates, norm)
    return replace(h, gradient_norm=g.gradient_norm)


def percentile_rank(values: np.ndarray, index) -> float:
    """Fraction of finite values strictly below ``values[index]``."""
    v = values[np.isfinite(values)]
    return float(np.count_nonzero(v < values[index]) / v.size)


# -- trap-site sweep ---------------------------------------------------------

@dataclass(eq=False)
class TrapSweepResult:
    lambdas: np.ndarray
    sites: np.ndarray
    eta: np.ndarray  # [lambda, site]
    results: list = field(default_factory=list)

    def best_sites(self) -> np.ndarray:
        return self.sites[np.nanargmax(self.eta, axis=1)]


def _trap_job(args):
    cfg, site, lam = args
    cfg = replace(cfg, trap=replace(cfg.trap, trap_site=int(site)))
    return evaluate(cfg.with_parameter("reorganization_energy", lam))


def trap_site_sweep(base: ModelConfig, lambdas, sites=None, workers: int | None = 1) -> TrapSweepResult:
    """Efficiency versus reorganization energy for every candidate trap site.

    The initial state is the maximally mixed state I/N.
    """
    lambdas = np.asarray(lambdas, dtype=float).ravel()
    if lambdas.size < 2:
        raise ValueError("a trap-site sweep needs at least two reorganization energies")
    n = base.n_sites
    sites = np.arange(1, n + 1) if sites is None else np.asarray(sites, dtype=int)
    cfg = replace(base, rho0=np.eye(n, dtype=complex) / n)
    jobs = [(cfg, s, lam) for lam in lambdas for s in sites]
    res = parallel_map(_trap_job, jobs, workers)
    eta = np.array([r.eta if (r.converged or r.method != "resolvent") else np.nan for r in res])
    return TrapSweepResult(lambdas, sites, eta.reshape(lambdas.size, sites.size), res)


# -- CSV ----------------------------------------------------------------------

SCAN_COLUMNS = ("axis1_value", "axis2_value", "eta", "loss_yield", "residual_trace", "converged")


def scan_row(v1, v2, r: TransferResult) -> list:
    return [_fmt(v1), _fmt(v2), _fmt(r.eta), _fmt(r.loss_yield), _fmt(r.residual_trace),
            str(bool(r.converged)).lower()]


def write_scan_csv(path, grid: ScanGrid2D):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCAN_COLUMNS)
        for i, v1 in enumerate(grid.axis1.grid):
            for j, v2 in enumerate(grid.axis2.grid):
                w.writerow([_fmt(v1), _fmt(v2), _fmt(grid.eta[i, j]), _fmt(grid.loss_yield[i, j]),
                            _fmt(grid.residual_trace[i, j]), str(bool(grid.converged[i, j])).lower()])


def read_scan_csv(path, axis1: ScanAxis, axis2: ScanAxis, method: str = "") -> dict:
    """Rows of an earlier scan keyed by grid index, for resuming."""
    if not os.path.exists(path):
        return {}
    idx1 = {_fmt(v): i for i, v in enumerate(axis1.grid)}
    idx2 = {_fmt(v): j for j, v in enumerate(axis2.grid)}
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            key = (idx1.get(_fmt(row["axis1_value"])), idx2.get(_fmt(row["axis2_value"])))
            if None in key:
                continue
            out[key] = TransferResult(float(row["eta"]), float(row["loss_yield"]),
                                      float(row["residual_trace"]), np.nan,
                                      row["converged"] == "true", np.nan, method)
    return out


def write_derivative_csv(path, grid: ScanGrid2D, fields: DerivativeField):
    m = fields.stencil_margin
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["axis1_value", "axis2_value", "gradient_norm", "hessian_norm"])
        g, h = fields.gradient_norm, fields.hessian_norm
        for i, v1 in enumerate(grid.axis1.grid[m:-m]):
            for j, v2 in enumerate(grid.axis2.grid[m:-m]):
                w.writerow([_fmt(v1), _fmt(v2), _fmt(g[i, j] if g is not None else np.nan),
                            _fmt(h[i, j] if h is not None else np.nan)])


def write_trap_sweep_csv(path, sweep: TrapSweepResult):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["reorganization_energy"] + [f"eta_site_{s}" for s in sweep.sites])
        for lam, row in zip(sweep.lambdas, sweep.eta):
            w.writerow([_fmt(lam)] + [_fmt(x) for x in row])
