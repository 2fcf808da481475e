"""JSON run configuration with command-line overrides."""
from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass

import numpy as np

from .bath import SPECTRAL_FORMS, DrudeBath
from .efficiency import mixed_state, site_state
from .ensembles import sample_density_hs, sample_pure_haar
from .exciton import (ChromophoreGeometry, SiteBasisHamiltonian, fmo_default_geometry,
                      fmo_default_hamiltonian, read_geometry_csv, read_hamiltonian_csv)
from .model import ModelConfig
from .tc2 import METHODS, SolverOptions, TrapLossConfig

OUTPUT_DIR_ENV = "ENAQT_OUTPUT_DIR"
INITIAL_STATES = ("site", "mix-1-6", "maximally-mixed", "hs-random", "pure-random")
REQUIRED_BLOCKS = ("system", "bath", "trap", "loss")

DEFAULTS = {
    "system": "fmo-default",
    "bath": {"reorganization_energy": 35.0, "cutoff_frequency": 50.0, "temperature": 298.0,
             "spectral_form": "standard_drude"},
    "trap": {"site": 3, "rate": 2.0},
    "loss": {"rate": 1e-3},
    "initial_state": {"kind": "mix-1-6", "site": 1, "seed": 0},
    "solver": {"method": "dop853", "rtol": 1e-7, "atol": 1e-10, "step": 1e-3, "first_step": 1e-3,
               "t_max": 20000.0, "record_stride": 1, "positivity_tol": 1e-3, "trace_floor": 1e-4},
    "output_dir": None,
}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry (dotted path)."""

    def __init__(self, msg, field=None):
        super().__init__(msg)
        self.field = field


def _deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config_file(path) -> dict:
    """Parse a JSON config; every required block must be present."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    for block in REQUIRED_BLOCKS:
        if block not in raw:
            raise ConfigError(f"{path}: missing required field '{block}'", block)
    for block in ("bath",):
        for key in ("reorganization_energy", "cutoff_frequency", "temperature"):
            if key not in raw[block]:
                raise ConfigError(f"{path}: missing required field '{block}.{key}'", f"{block}.{key}")
    unknown = set(raw) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"{path}: unknown field '{sorted(unknown)[0]}'", sorted(unknown)[0])
    return raw


def _number(d: dict, block: str, key: str, lo=None, positive=False, integer=False):
    v = d[block][key]
    name = f"{block}.{key}"
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"field '{name}' must be a number", name)
    if integer and int(v) != v:
        raise ConfigError(f"field '{name}' must be an integer", name)
    if positive and not v > 0:
        raise ConfigError(f"field '{name}' must be positive", name)
    if lo is not None and v < lo:
        raise ConfigError(f"field '{name}' must be >= {lo}", name)
    return int(v) if integer else float(v)


@dataclass(frozen=True, eq=False)
class RunConfig:
    """Resolved configuration; ``raw`` is the JSON-compatible tree it came from."""

    raw: dict
    hamiltonian: SiteBasisHamiltonian
    geometry: ChromophoreGeometry | None
    bath: DrudeBath
    trap: TrapLossConfig
    initial_state: str
    initial_site: int
    seed: int
    solver: SolverOptions
    trace_floor: float
    output_dir: str

    @classmethod
    def resolve(cls, file_values: dict | None = None, overrides: dict | None = None) -> "RunConfig":
        """Defaults < file values < overrides (a nested dict of flag values)."""
        raw = _deep_merge(DEFAULTS, file_values or {})
        raw = _deep_merge(raw, overrides or {})
        h, geom = _system(raw["system"])
        n = h.n_sites

        b = raw["bath"]
        if b.get("spectral_form", "standard_drude") not in SPECTRAL_FORMS:
            raise ConfigError(f"field 'bath.spectral_form' must be one of {SPECTRAL_FORMS}",
                              "bath.spectral_form")
        bath = DrudeBath(_number(raw, "bath", "reorganization_energy", lo=0.0),
                         _number(raw, "bath", "cutoff_frequency", positive=True),
                         _number(raw, "bath", "temperature", positive=True),
                         b.get("spectral_form", "standard_drude"))
        site = _number(raw, "trap", "site", integer=True)
        if not 1 <= site <= n:
            raise ConfigError(f"field 'trap.site' must be in 1..{n}", "trap.site")
        trap = TrapLossConfig(site, _number(raw, "trap", "rate", lo=0.0), _number(raw, "loss", "rate", lo=0.0))

        ini = raw["initial_state"]
        kind = ini.get("kind", "mix-1-6")
        if kind not in INITIAL_STATES:
            raise ConfigError(f"field 'initial_state.kind' must be one of {INITIAL_STATES}",
                              "initial_state.kind")
        ini_site = _number(raw, "initial_state", "site", integer=True) if "site" in ini else 1
        if not 1 <= ini_site <= n:
            raise ConfigError(f"field 'initial_state.site' must be in 1..{n}", "initial_state.site")
        seed = _number(raw, "initial_state", "seed", integer=True, lo=0) if "seed" in ini else 0

        s = raw["solver"]
        if s.get("method") not in METHODS:
            raise ConfigError(f"field 'solver.method' must be one of {METHODS}", "solver.method")
        try:
            solver = SolverOptions(
                method=s["method"], rtol=_number(raw, "solver", "rtol", positive=True),
                atol=_number(raw, "solver", "atol", positive=True),
                step=_number(raw, "solver", "step", positive=True),
                first_step=_number(raw, "solver", "first_step", positive=True),
                t_max=_number(raw, "solver", "t_max", positive=True),
                record_stride=_number(raw, "solver", "record_stride", integer=True, lo=1),
                positivity_tol=_number(raw, "solver", "positivity_tol", lo=0.0),
            )
        except KeyError as exc:
            raise ConfigError(f"missing field 'solver.{exc.args[0]}'", f"solver.{exc.args[0]}") from exc
        floor = _number(raw, "solver", "trace_floor", positive=True)

        out = raw.get("output_dir") or os.environ.get(OUTPUT_DIR_ENV) or "enaqt-output"
        raw["output_dir"] = out
        return cls(raw, h, geom, bath, trap, kind, ini_site, seed, solver, floor, str(out))

    def rho0(self) -> np.ndarray:
        n = self.hamiltonian.n_sites
        if self.initial_state == "site":
            return site_state(n, self.initial_site)
        if self.initial_state == "mix-1-6":
            return mixed_state(n, [1, 6])
        if self.initial_state == "maximally-mixed":
            return np.eye(n, dtype=complex) / n
        if self.initial_state == "hs-random":
            return sample_density_hs(n, self.seed)
        return sample_pure_haar(n, self.seed)

    def model(self) -> ModelConfig:
        return ModelConfig(self.hamiltonian, self.geometry, self.bath, self.trap, self.rho0(),
                           self.solver, self.trace_floor)

    def to_json(self) -> str:
        return json.dumps(self.raw, indent=2, sort_keys=True)


def _system(system):
    if system == "fmo-default":
        return fmo_default_hamiltonian(), fmo_default_geometry()
    if not isinstance(system, dict):
        raise ConfigError("field 'system' must be \"fmo-default\" or an object", "system")
    try:
        if "hamiltonian_csv" in system:
            h = read_hamiltonian_csv(system["hamiltonian_csv"])
        elif "hamiltonian" in system:
            h = SiteBasisHamiltonian.from_matrix(np.array(system["hamiltonian"], dtype=float))
        else:
            raise ConfigError("missing field 'system.hamiltonian'", "system.hamiltonian")
        geom = None
        if "geometry_csv" in system:
            geom = read_geometry_csv(system["geometry_csv"])
        elif "geometry" in system:
            g = system["geometry"]
            geom = ChromophoreGeometry(np.array(g["positions"], float), np.array(g["dipole_angles"], float),
                                       float(g["coupling_constant"]))
    except (KeyError, TypeError, ValueError, OSError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid field 'system': {exc}", "system") from exc
    if geom is not None and geom.n_sites != h.n_sites:
        raise ConfigError("field 'system.geometry' size differs from the Hamiltonian", "system.geometry")
    return h, geom
