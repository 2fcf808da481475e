"""Frenkel exciton model: site Hamiltonian, chromophore geometry and disorder.

Energies are in cm^-1, distances in Angstrom, times in ps.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

#: Angular frequency (rad/ps) of 1 cm^-1, i.e. 2*pi*c.
KAPPA = 0.1883651567
#: Boltzmann constant in cm^-1 / K.
KB_CM = 0.6950348
#: Point-dipole prefactor C|mu|^2 for BChl a, cm^-1 Angstrom^3.
FMO_COUPLING_CONSTANT = 134000.0

_FMO_H = (
    (280, -106, 8, -5, 6, -8, -4),
    (-106, 420, 28, 6, 2, 13, 1),
    (8, 28, 0, -62, -1, -9, 17),
    (-5, 6, -62, 175, -70, -19, -57),
    (6, 2, -1, -70, 320, 40, -2),
    (-8, 13, -9, -19, 40, 360, 32),
    (-4, 1, 17, -57, -2, 32, 260),
)

_FMO_POSITIONS = (
    (28.032, 163.534, 94.400),
    (17.140, 168.057, 100.162),
    (5.409, 180.553, 97.621),
    (9.062, 187.635, 89.474),
    (21.823, 185.260, 84.721),
    (23.815, 173.888, 82.810),
    (12.735, 174.887, 89.044),
)

# (theta, phi - pi); pi is added back in fmo_default_geometry
_FMO_ANGLES = (
    (0.3816, -0.6423),
    (0.067, 0.5209),
    (0.1399, 1.3616),
    (0.257, -0.6098),
    (-0.1606, 0.6899),
    (-0.4214, -1.4686),
    (0.578, -1.0076),
)


class DegenerateGeometryError(ValueError):
    """Two chromophores closer than the allowed distance floor."""


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SiteBasisHamiltonian:
    """Site energies and couplings of an N-site exciton Hamiltonian (cm^-1)."""

    site_energies: np.ndarray
    couplings: np.ndarray

    def __post_init__(self):
        eps = _frozen(self.site_energies)
        J = _frozen(self.couplings)
        n = eps.shape[0]
        if eps.ndim != 1 or n < 1:
            raise ValueError("site_energies must be a non-empty 1-D array")
        if J.shape != (n, n):
            raise ValueError(f"couplings must have shape {(n, n)}, got {J.shape}")
        if not np.array_equal(J, J.T):
            raise ValueError("couplings must be symmetric")
        if np.any(np.diag(J) != 0):
            raise ValueError("couplings must have a zero diagonal")
        object.__setattr__(self, "site_energies", eps)
        object.__setattr__(self, "couplings", J)

    @property
    def n_sites(self) -> int:
        return self.site_energies.shape[0]

    def matrix(self) -> np.ndarray:
        """The assembled real symmetric Hamiltonian matrix."""
        return np.diag(self.site_energies) + self.couplings

    @classmethod
    def from_matrix(cls, H) -> "SiteBasisHamiltonian":
        H = np.asarray(H, dtype=float)
        J = H - np.diag(np.diag(H))
        # symmetrize exactly: CSV round trips may leave 1-ulp asymmetry
        J = 0.5 * (J + J.T)
        return cls(np.diag(H).copy(), J)

    def with_couplings(self, couplings) -> "SiteBasisHamiltonian":
        return replace(self, couplings=couplings)


@dataclass(frozen=True)
class ChromophoreGeometry:
    """Chromophore positions (Angstrom) and transition-dipole angles (rad).

    ``dipole_angles[j] = (theta, phi)`` where theta is the elevation above the
    x-y plane and phi the azimuth, so the unit dipole is
    ``(cos(theta) cos(phi), cos(theta) sin(phi), sin(theta))``.
    """

    positions: np.ndarray
    dipole_angles: np.ndarray
    coupling_constant: float = FMO_COUPLING_CONSTANT

    def __post_init__(self):
        pos = _frozen(self.positions)
        ang = _frozen(self.dipole_angles)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError("positions must have shape (N, 3)")
        if ang.shape != (pos.shape[0], 2):
            raise ValueError("dipole_angles must have shape (N, 2)")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "dipole_angles", ang)
        object.__setattr__(self, "coupling_constant", float(self.coupling_constant))

    @property
    def n_sites(self) -> int:
        return self.positions.shape[0]

    def dipoles(self) -> np.ndarray:
        """Unit transition dipoles, shape (N, 3)."""
        return dipole_unit_vectors(self.dipole_angles)

    def distances(self) -> np.ndarray:
        d = self.positions[:, None, :] - self.positions[None, :, :]
        return np.linalg.norm(d, axis=-1)


def dipole_unit_vectors(angles) -> np.ndarray:
    angles = np.asarray(angles, dtype=float)
    theta, phi = angles[:, 0], angles[:, 1]
    return np.stack(
        [np.cos(theta) * np.cos(phi), np.cos(theta) * np.sin(phi), np.sin(theta)],
        axis=-1,
    )


def angles_from_unit_vectors(mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    mu = mu / np.linalg.norm(mu, axis=-1, keepdims=True)
    theta = np.arcsin(np.clip(mu[:, 2], -1.0, 1.0))
    phi = np.arctan2(mu[:, 1], mu[:, 0])
    return np.stack([theta, phi], axis=-1)


@dataclass(frozen=True)
class DisorderSpec:
    """Uniform static disorder.

    Small mode shifts every site energy, angle and Cartesian coordinate by an
    independent U(-w, +w) draw.  Large mode redraws dipole directions
    uniformly on the sphere and site energies on
    [site_energy_min, site_energy_max]; positions are still shifted.

    ``coupling_mode="recompute"`` rebuilds couplings from the perturbed
    geometry; ``"shift"`` keeps the input couplings and adds the change in
    point-dipole coupling caused by the perturbation.
    """

    site_energy_halfwidth: float = 0.0
    angle_halfwidth: float = 0.0
    position_halfwidth: float = 0.0
    large_mode: bool = False
    site_energy_min: float = 0.0
    site_energy_max: float = 500.0
    coupling_mode: str = "recompute"

    def __post_init__(self):
        for name in ("site_energy_halfwidth", "angle_halfwidth", "position_halfwidth"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.large_mode and self.site_energy_min > self.site_energy_max:
            raise ValueError("site_energy_min must not exceed site_energy_max")
        if self.coupling_mode not in ("recompute", "shift"):
            raise ValueError(f"unknown coupling_mode {self.coupling_mode!r}")

    @classmethod
    def small(cls, **kw) -> "DisorderSpec":
        """+-10 cm^-1 site energies, +-5 degrees angles, +-2.5 A positions."""
        base = dict(site_energy_halfwidth=10.0, angle_halfwidth=np.deg2rad(5.0),
                    position_halfwidth=2.5)
        base.update(kw)
        return cls(**base)

    @classmethod
    def large(cls, **kw) -> "DisorderSpec":
        """Free dipoles, site energies anywhere in [0, 500] cm^-1, +-2.5 A."""
        base = dict(position_halfwidth=2.5, large_mode=True,
                    site_energy_min=0.0, site_energy_max=500.0)
        base.update(kw)
        return cls(**base)


@dataclass(frozen=True)
class CompactnessScale:
    k: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.k) and self.k > 0):
            raise ValueError("compactness factor must be positive and finite")


def fmo_default_hamiltonian() -> SiteBasisHamiltonian:
    """Reference 7-site FMO Hamiltonian in cm^-1 (sites 1..7)."""
    return SiteBasisHamiltonian.from_matrix(np.array(_FMO_H, dtype=float))


def fmo_default_geometry() -> ChromophoreGeometry:
    angles = np.array(_FMO_ANGLES, dtype=float)
    angles[:, 1] += np.pi
    return ChromophoreGeometry(np.array(_FMO_POSITIONS), angles, FMO_COUPLING_CONSTANT)


def couplings_from_geometry(geom: ChromophoreGeometry, min_distance: float = 1.0) -> np.ndarray:
    """Point-dipole couplings J_jk in cm^-1.

    J_jk = C/R^3 * (mu_j.mu_k - 3 (mu_j.R)(mu_k.R) / R^2)
    """
    R = geom.positions[None, :, :] - geom.positions[:, None, :]
    r = np.linalg.norm(R, axis=-1)
    n = geom.n_sites
    off = ~np.eye(n, dtype=bool)
    if n > 1 and r[off].min() < min_distance:
        j, k = np.argwhere((r < min_distance) & off)[0]
        raise DegenerateGeometryError(
            f"sites {j + 1} and {k + 1} are {r[j, k]:.3g} A apart (floor {min_distance} A)"
        )
    mu = geom.dipoles()
    r_safe = np.where(off, r, 1.0)
    proj_j = np.einsum("ja,jka->jk", mu, R)
    proj_k = np.einsum("ka,jka->jk", mu, R)
    J = geom.coupling_constant / r_safe**3 * (mu @ mu.T - 3.0 * proj_j * proj_k / r_safe**2)
    J[~off] = 0.0
    # exact symmetry; the two einsums round differently
    return 0.5 * (J + J.T)


def rescale_geometry(geom: ChromophoreGeometry, scale: CompactnessScale | float) -> ChromophoreGeometry:
    """Scale all positions about their centroid by ``k``."""
    k = scale.k if isinstance(scale, CompactnessScale) else CompactnessScale(float(scale)).k
    centroid = geom.positions.mean(axis=0)
    return replace(geom, positions=centroid + k * (geom.positions - centroid))


def apply_disorder(h: SiteBasisHamiltonian, geom: ChromophoreGeometry, spec: DisorderSpec,
                   rng_seed=None, min_distance: float = 1.0):
    """Draw one disordered (Hamiltonian, geometry) pair.

    ``rng_seed`` may be an int, a sequence of ints or a ``numpy.random.Generator``.
    """
    if h.n_sites != geom.n_sites:
        raise ValueError("Hamiltonian and geometry have different site counts")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    n = h.n_sites
    w, a, d = spec.site_energy_halfwidth, spec.angle_halfwidth, spec.position_halfwidth

    # draw order is fixed so a seed always yields the same sample
    if spec.large_mode:
        eps = rng.uniform(spec.site_energy_min, spec.site_energy_max, n)
        v = rng.standard_normal((n, 3))
        angles = angles_from_unit_vectors(v)
    else:
        eps = h.site_energies + rng.uniform(-w, w, n)
        angles = geom.dipole_angles + rng.uniform(-a, a, (n, 2))
    positions = geom.positions + rng.uniform(-d, d, (n, 3))

    new_geom = replace(geom, positions=positions, dipole_angles=angles)
    J = couplings_from_geometry(new_geom, min_distance)
    if spec.coupling_mode == "shift":
        J = h.couplings + (J - couplings_from_geometry(geom, min_distance))
    return SiteBasisHamiltonian(eps, J), new_geom


def hamiltonian_from_geometry(site_energies, geom: ChromophoreGeometry) -> SiteBasisHamiltonian:
    return SiteBasisHamiltonian(np.asarray(site_energies, float), couplings_from_geometry(geom))


# -- CSV ---------------------------------------------------------------------

def write_geometry_csv(geom: ChromophoreGeometry, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "z", "theta", "phi", "coupling_constant"])
        for (x, y, z), (th, ph) in zip(geom.positions, geom.dipole_angles):
            w.writerow([_fmt(x), _fmt(y), _fmt(z), _fmt(th), _fmt(ph), _fmt(geom.coupling_constant)])


def read_geometry_csv(path) -> ChromophoreGeometry:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no geometry rows")
    pos = [[float(r["x"]), float(r["y"]), float(r["z"])] for r in rows]
    ang = [[float(r["theta"]), float(r["phi"])] for r in rows]
    C = float(rows[0].get("coupling_constant") or FMO_COUPLING_CONSTANT)
    return ChromophoreGeometry(np.array(pos), np.array(ang), C)


def write_hamiltonian_csv(h: SiteBasisHamiltonian, path) -> None:
    H = h.matrix()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"site_{k + 1}" for k in range(h.n_sites)])
        for row in H:
            w.writerow([_fmt(v) for v in row])


def read_hamiltonian_csv(path) -> SiteBasisHamiltonian:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    H = np.array([[float(v) for v in r] for r in rows[1:]])
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"{path}: Hamiltonian block must be square")
    return SiteBasisHamiltonian.from_matrix(H)


def _fmt(x) -> str:
    return format(float(x), ".17g")
