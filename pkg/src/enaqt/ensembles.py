"""Random initial states and structural disorder: efficiency statistics."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .efficiency import efficiency_operator, validate_density
from .exciton import DegenerateGeometryError, DisorderSpec, apply_disorder
from .model import ModelConfig, evaluate, failed_result, parallel_map
from .tc2 import spectral_abscissa

HISTOGRAM_BIN_WIDTH = 0.02
THRESHOLDS = (0.9, 0.95)
MIXES = ("pure", "mixed", "both")
MAX_RESAMPLE = 100


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def sample_density_hs(n: int, rng_seed=None) -> np.ndarray:
    """Hilbert-Schmidt random density matrix G G^dag / Tr(G G^dag)."""
    if n < 1:
        raise ValueError("dimension must be >= 1")
    rng = _rng(rng_seed)
    G = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    rho = G @ G.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.real(np.trace(rho))


def sample_pure_haar(n: int, rng_seed=None) -> np.ndarray:
    """Projector onto a unitarily invariant random pure state."""
    if n < 1:
        raise ValueError("dimension must be >= 1")
    rng = _rng(rng_seed)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    return np.outer(v, v.conj())


@dataclass(frozen=True)
class EnsembleSummary:
    n_samples: int
    mean: float
    std: float
    min: float
    max: float
    histogram: np.ndarray
    bin_edges: np.ndarray
    fraction_above: dict
    n_failed: int = 0
    n_resampled: int = 0

    @classmethod
    def from_values(cls, values, thresholds=THRESHOLDS, bin_width: float = HISTOGRAM_BIN_WIDTH,
                    n_failed: int = 0, n_resampled: int = 0) -> "EnsembleSummary":
        """Order-independent statistics: sorted values, compensated sums."""
        v = np.sort(np.asarray(values, dtype=float))
        v = v[np.isfinite(v)]
        n = v.size
        n_bins = int(round(1.0 / bin_width))
        edges = np.linspace(0.0, 1.0, n_bins + 1)
        if n == 0:
            return cls(0, np.nan, np.nan, np.nan, np.nan, np.zeros(n_bins, int), edges,
                       {t: np.nan for t in thresholds}, n_failed, n_resampled)
        mean = math.fsum(v) / n
        var = math.fsum(np.sort((v - mean) ** 2)) / n
        # values are clipped into [0, 1] so every sample lands in a bin
        counts = np.bincount(np.clip((v / bin_width).astype(int), 0, n_bins - 1), minlength=n_bins)
        fractions = {t: float(np.count_nonzero(v >= t) / n) for t in thresholds}
        # mean can drift by an ulp outside [min, max] for constant samples
        mean = min(max(mean, v[0]), v[-1])
        return cls(n, mean, math.sqrt(var), float(v[0]), float(v[-1]), counts, edges, fractions,
                   n_failed, n_resampled)


@dataclass(eq=False)
class InitialStateRow:
    reorganization_energy: float
    mix: str
    summary: EnsembleSummary
    etas: np.ndarray


def _initial_states(n: int, n_samples: int, kind: str, rng_seed) -> np.ndarray:
    # sub-seed (seed, kind, index): independent of worker layout and of lambda
    code = 0 if kind == "mixed" else 1
    draw = sample_density_hs if kind == "mixed" else sample_pure_haar
    return np.array([draw(n, np.random.default_rng([rng_seed, code, i])) for i in range(n_samples)])


def _sample_job(args):
    cfg, rho = args
    return evaluate(replace(cfg, rho0=rho))


def initial_state_sweep(base: ModelConfig, lambdas, n_samples: int = 500, mix: str = "mixed",
                        rng_seed: int = 0, method: str = "operator",
                        workers: int | None = 1) -> list[InitialStateRow]:
    """Efficiency statistics over random initial states at each reorganization energy.

    ``method="operator"`` builds the linear map rho0 -> eta once per lambda
    (exact infinite-time yields); ``"propagate"`` runs ``base.solver`` for
    every sample.  The same states are used at every lambda.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    if mix not in MIXES:
        raise ValueError(f"mix must be one of {MIXES}")
    if method not in ("operator", "propagate"):
        raise ValueError("method must be 'operator' or 'propagate'")
    kinds = ("pure", "mixed") if mix == "both" else (mix,)
    n = base.n_sites
    states = {k: _initial_states(n, n_samples, k, rng_seed) for k in kinds}
    for rhos in states.values():
        for rho in rhos:
            validate_density(rho, n)

    rows = []
    for lam in np.atleast_1d(np.asarray(lambdas, dtype=float)):
        cfg = base.with_parameter("reorganization_energy", lam)
        if method == "operator":
            gen = cfg.generators()
            stable = spectral_abscissa(gen) < 0
            op = efficiency_operator(gen) if stable else None
        for k in kinds:
            if method == "operator":
                etas = op.etas(states[k]) if stable else np.full(n_samples, np.nan)
            else:
                res = parallel_map(_sample_job, [(cfg, r) for r in states[k]], workers)
                etas = np.array([r.eta if r.converged else np.nan for r in res])
            failed = int(np.count_nonzero(~np.isfinite(etas)))
            rows.append(InitialStateRow(float(lam), k, EnsembleSummary.from_values(etas, n_failed=failed), etas))
    return rows


@dataclass(eq=False)
class DisorderResult:
    summary: EnsembleSummary
    etas: np.ndarray
    converged: np.ndarray
    resamples: np.ndarray = field(default_factory=lambda: np.zeros(0, int))


def _disorder_job(args):
    base, spec, seed, index = args
    for attempt in range(MAX_RESAMPLE):
        try:
            h, _ = apply_disorder(base.hamiltonian, base.geometry, spec,
                                  np.random.default_rng([seed, index, attempt]))
        except DegenerateGeometryError:
            continue
        return evaluate(replace(base, hamiltonian=h)), attempt
    return failed_result("no non-degenerate geometry drawn", base.solver.method), MAX_RESAMPLE


def disorder_sweep(base: ModelConfig, spec: DisorderSpec, n_samples: int = 500, rng_seed: int = 0,
                   workers: int | None = 1) -> DisorderResult:
    """Efficiency statistics over disordered Hamiltonians (bath and sinks at base values).

    Samples whose perturbed geometry collides are redrawn from a fresh
    sub-seed; the number of redraws is reported.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    if base.geometry is None:
        raise ValueError("disorder needs a chromophore geometry")
    out = parallel_map(_disorder_job, [(base, spec, rng_seed, i) for i in range(n_samples)], workers)
    etas = np.array([r.eta if r.converged else np.nan for r, _ in out])
    conv = np.array([r.converged for r, _ in out])
    resamples = np.array([a for _, a in out])
    summary = EnsembleSummary.from_values(etas, n_failed=int(np.count_nonzero(~conv)),
                                          n_resampled=int(resamples.sum()))
    return DisorderResult(summary, etas, conv, resamples)


# -- CSV ----------------------------------------------------------------------

def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_samples_csv(path, etas, converged=None):
    etas = np.asarray(etas, dtype=float)
    converged = np.isfinite(etas) if converged is None else np.asarray(converged)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_index", "eta", "converged"])
        for i, (e, c) in enumerate(zip(etas, converged)):
            w.writerow([i, _fmt(e), str(bool(c)).lower()])


SUMMARY_COLUMNS = ("label", "n_samples", "mean", "std", "min", "max", "fraction_above_0.9",
                   "fraction_above_0.95", "n_failed", "n_resampled")


def write_summary_csv(path, summaries: dict):
    """``summaries`` maps a row label to an EnsembleSummary."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for label, s in summaries.items():
            w.writerow([label, s.n_samples, _fmt(s.mean), _fmt(s.std), _fmt(s.min), _fmt(s.max),
                        _fmt(s.fraction_above.get(0.9, np.nan)),
                        _fmt(s.fraction_above.get(0.95, np.nan)), s.n_failed, s.n_resampled])


def write_histogram_csv(path, summary: EnsembleSummary):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", "count"])
        for lo, hi, c in zip(summary.bin_edges[:-1], summary.bin_edges[1:], summary.histogram):
            w.writerow([_fmt(lo), _fmt(hi), int(c)])
