"""Command-line interface: ete, scan, ensemble, trapsweep, dump-bath, dump-model."""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .bath import correlation_table, expand_correlation
from .config import ConfigError, RunConfig, load_config_file
from .efficiency import compute_ete
from .ensembles import (THRESHOLDS, disorder_sweep, initial_state_sweep, write_histogram_csv,
                        write_samples_csv, write_summary_csv)
from .exciton import DisorderSpec, couplings_from_geometry, write_geometry_csv, write_hamiltonian_csv
from .landscape import (SCAN_COLUMNS, ScanAxis, derivative_fields, read_scan_csv, scan_ete_2d,
                        scan_row, trap_site_sweep, write_derivative_csv, write_scan_csv,
                        write_trap_sweep_csv)
from .model import LABELS, UNITS, canonical_parameter, default_workers, parameter_value
from .svg import heatmap_svg, histogram_svg, line_plot_svg, write_svg
from .tc2 import write_trajectory_csv

DEFAULT_RANGES = {
    "reorganization_energy": "1:500:21:log",
    "cutoff_frequency": "10:300:21:log",
    "temperature": "100:350:21:lin",
    "trap_rate_inverse": "0.001:100:21:log",
    "loss_rate_inverse": "10:10000:21:log",
    "compactness": "0.5:5:11:log",
}


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _float_list(text: str) -> list:
    return [float(v) for v in text.split(",") if v.strip()]


def _add_model_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("model overrides (win over --config)")
    g.add_argument("--config", help="JSON run configuration")
    g.add_argument("--lambda", dest="lam", type=float, help="reorganization energy, cm^-1")
    g.add_argument("--gamma", type=float, help="bath cutoff frequency, cm^-1")
    g.add_argument("--temperature", type=float, help="K")
    g.add_argument("--spectral-form", choices=("standard_drude", "unscaled_drude"))
    g.add_argument("--trap-site", type=int)
    g.add_argument("--trap-rate", type=float, help="ps^-1")
    g.add_argument("--trap-time", type=float, help="1/r_trap in ps")
    g.add_argument("--loss-rate", type=float, help="ps^-1, every site")
    g.add_argument("--loss-time", type=float, help="1/r_loss in ps")
    g.add_argument("--initial-state", help="site:K, mix-1-6, maximally-mixed, hs-random or pure-random")
    g.add_argument("--initial-seed", type=int, help="seed for random initial states")
    g.add_argument("--method", choices=("dop853", "rk45", "rk4", "resolvent"))
    g.add_argument("--rtol", type=float)
    g.add_argument("--atol", type=float)
    g.add_argument("--step", type=float, help="fixed step for rk4, ps")
    g.add_argument("--t-max", type=float, help="ps")
    g.add_argument("--record-stride", type=int)
    g.add_argument("--trace-floor", type=float)
    g.add_argument("--output-dir", help="output directory (default: $ENAQT_OUTPUT_DIR or ./enaqt-output)")
    g.add_argument("--workers", type=int, default=None, help="worker processes (default: all processors)")


def _overrides(a) -> dict:
    o: dict = {}

    def put(block, key, value):
        if value is not None:
            o.setdefault(block, {})[key] = value

    put("bath", "reorganization_energy", a.lam)
    put("bath", "cutoff_frequency", a.gamma)
    put("bath", "temperature", a.temperature)
    put("bath", "spectral_form", a.spectral_form)
    put("trap", "site", a.trap_site)
    put("trap", "rate", a.trap_rate)
    if a.trap_time is not None:
        put("trap", "rate", 1.0 / a.trap_time)
    put("loss", "rate", a.loss_rate)
    if a.loss_time is not None:
        put("loss", "rate", 1.0 / a.loss_time)
    if a.initial_state is not None:
        kind, _, site = a.initial_state.partition(":")
        put("initial_state", "kind", kind)
        if site:
            put("initial_state", "site", int(site))
    put("initial_state", "seed", a.initial_seed)
    put("solver", "method", a.method)
    put("solver", "rtol", a.rtol)
    put("solver", "atol", a.atol)
    put("solver", "step", a.step)
    put("solver", "t_max", a.t_max)
    put("solver", "record_stride", a.record_stride)
    put("solver", "trace_floor", a.trace_floor)
    if a.output_dir is not None:
        o["output_dir"] = a.output_dir
    return o


def _resolve(a) -> RunConfig:
    file_values = load_config_file(a.config) if a.config else None
    cfg = RunConfig.resolve(file_values, _overrides(a))
    os.makedirs(cfg.output_dir, exist_ok=True)
    if not os.access(cfg.output_dir, os.W_OK):
        raise ConfigError(f"output directory {cfg.output_dir} is not writable", "output_dir")
    return cfg


def _write_manifest(cfg: RunConfig, command: str, a, extra: dict | None = None):
    args = {k: v for k, v in sorted(vars(a).items()) if v is not None and k not in ("func",)}
    manifest = {"command": command, "version": __version__, "config": cfg.raw, "arguments": args}
    manifest.update(extra or {})
    path = os.path.join(cfg.output_dir, f"{command}-manifest.json")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _workers(a) -> int:
    return default_workers() if a.workers is None else max(1, a.workers)


# -- commands -----------------------------------------------------------------

def cmd_ete(a) -> int:
    cfg = _resolve(a)
    model = cfg.model()
    gen = model.generators()
    res = compute_ete(gen, model.rho0, cfg.solver, cfg.trace_floor, record=cfg.solver.method != "resolvent")
    out = cfg.output_dir
    pairs = [tuple(int(s) for s in p.split("-")) for p in a.coherences.split(",") if p] if a.coherences else []
    if res.trajectory is not None:
        write_trajectory_csv(os.path.join(out, "ete_trajectory.csv"), res.trajectory, pairs)
    with open(os.path.join(out, "ete_result.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eta", "loss_yield", "residual_trace", "t_final", "converged", "min_eigenvalue"])
        w.writerow([_fmt(res.eta), _fmt(res.loss_yield), _fmt(res.residual_trace), _fmt(res.t_final),
                    str(res.converged).lower(), _fmt(res.min_eigenvalue)])
    _write_manifest(cfg, "ete", a)
    print(f"eta = {res.eta:.6f}")
    print(f"loss_yield = {res.loss_yield:.6f}")
    print(f"residual_trace = {res.residual_trace:.3e}")
    print(f"t_final = {res.t_final:.4g} ps")
    print(f"converged = {str(res.converged).lower()}")
    if res.message:
        print(f"note: {res.message}", file=sys.stderr)
    return 0


def _axis(spec: list) -> ScanAxis:
    if not 1 <= len(spec) <= 2:
        raise ConfigError("an axis is PARAMETER [start:stop:count:spacing]")
    name = canonical_parameter(spec[0])
    return ScanAxis.parse(name, spec[1] if len(spec) == 2 else DEFAULT_RANGES[name])


def _axis_title(axis: ScanAxis) -> str:
    unit = UNITS[axis.parameter]
    return f"{LABELS[axis.parameter]} ({unit})" if unit else LABELS[axis.parameter]


def cmd_scan(a) -> int:
    cfg = _resolve(a)
    try:
        ax1, ax2 = _axis(a.axis1), _axis(a.axis2)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    model = cfg.model()
    stem = os.path.join(cfg.output_dir, f"scan_{ax1.parameter}_{ax2.parameter}")
    final, partial = stem + ".csv", stem + ".partial.csv"
    known = {}
    if not a.no_resume:
        known.update(read_scan_csv(final, ax1, ax2, cfg.solver.method))
        known.update(read_scan_csv(partial, ax1, ax2, cfg.solver.method))
    if known:
        print(f"resuming: {len(known)} of {len(ax1) * len(ax2)} nodes already computed")
    new_file = not os.path.exists(partial) or a.no_resume
    fh = open(partial, "w" if new_file else "a", newline="", encoding="utf-8")
    writer = csv.writer(fh, lineterminator="\n")
    if new_file:
        writer.writerow(SCAN_COLUMNS)

    def on_result(i, j, r):
        writer.writerow(scan_row(ax1.grid[i], ax2.grid[j], r))
        fh.flush()
        if not np.isfinite(r.eta) or (r.method == "resolvent" and not r.converged):
            print(f"node ({ax1.grid[i]:.4g}, {ax2.grid[j]:.4g}) missing: {r.message}", file=sys.stderr)

    try:
        grid = scan_ete_2d(model, ax1, ax2, workers=_workers(a), known=known, on_result=on_result)
    finally:
        fh.close()
    write_scan_csv(final, grid)
    os.remove(partial)

    marker = (parameter_value(model, ax1.parameter), parameter_value(model, ax2.parameter))
    log1, log2 = ax1.spacing == "logarithmic", ax2.spacing == "logarithmic"
    xl, yl = _axis_title(ax1), _axis_title(ax2)
    write_svg(stem + ".svg", heatmap_svg(ax1.grid, ax2.grid, grid.eta, "efficiency", xl, yl, log1, log2,
                                         marker, "eta"))
    files = [final, stem + ".svg"]
    if a.derivatives:
        d = derivative_fields(grid, a.coordinates, a.norm)
        inner1, inner2 = ax1.grid[2:-2], ax2.grid[2:-2]
        for name, field in (("gradient_norm", d.gradient_norm), ("hessian_norm", d.hessian_norm)):
            sub = _only(d, name, field)
            write_derivative_csv(f"{stem}_{name}.csv", grid, sub)
            write_svg(f"{stem}_{name}.svg", heatmap_svg(inner1, inner2, field, name.replace("_", " "),
                                                        xl, yl, log1, log2, marker, name))
            files += [f"{stem}_{name}.csv", f"{stem}_{name}.svg"]
    _write_manifest(cfg, "scan", a, {"axis1": ax1.grid.tolist(), "axis2": ax2.grid.tolist()})
    n_missing = int(np.count_nonzero(~np.isfinite(grid.eta)))
    print(f"eta range [{np.nanmin(grid.eta):.6f}, {np.nanmax(grid.eta):.6f}]; missing nodes: {n_missing}")
    for f in files:
        print(f"wrote {f}")
    return 0


def _only(d, name, field):
    """Derivative field carrying only ``name`` (the other column is written as NaN)."""
    other = "hessian_norm" if name == "gradient_norm" else "gradient_norm"
    return replace(d, **{name: field, other: None})


def cmd_ensemble(a) -> int:
    cfg = _resolve(a)
    model = cfg.model()
    out = cfg.output_dir
    stem = os.path.join(out, f"ensemble_{a.mode}")
    summaries = {}
    if a.mode == "initial-states":
        lambdas = _float_list(a.lambdas)
        method = "operator" if cfg.solver.method == "resolvent" or a.ensemble_method == "operator" else "propagate"
        rows = initial_state_sweep(model, lambdas, a.samples, a.mix, a.seed, method, _workers(a))
        for r in rows:
            label = f"lambda={r.reorganization_energy:g},{r.mix}"
            summaries[label] = r.summary
            tag = f"{stem}_lambda_{r.reorganization_energy:g}_{r.mix}"
            write_samples_csv(tag + "_samples.csv", r.etas)
            write_histogram_csv(tag + "_histogram.csv", r.summary)
        last = rows[-1]
        write_svg(stem + "_histogram.svg", histogram_svg(last.summary.bin_edges, last.summary.histogram,
                                                         f"eta, lambda={last.reorganization_energy:g}", "eta"))
        series = {m: [r.summary.mean for r in rows if r.mix == m] for m in dict.fromkeys(r.mix for r in rows)}
        if len(lambdas) >= 2:
            write_svg(stem + "_mean.svg", line_plot_svg(lambdas, series, "mean efficiency",
                                                        "lambda (cm^-1)", "eta", log_x=True))
    else:
        spec = (DisorderSpec.small if a.mode == "disorder-small" else DisorderSpec.large)(
            coupling_mode=a.coupling_mode)
        res = disorder_sweep(model, spec, a.samples, a.seed, _workers(a))
        summaries[a.mode] = res.summary
        write_samples_csv(stem + "_samples.csv", res.etas, res.converged)
        write_histogram_csv(stem + "_histogram.csv", res.summary)
        write_svg(stem + "_histogram.svg", histogram_svg(res.summary.bin_edges, res.summary.histogram,
                                                         f"eta, {a.mode}", "eta"))
    write_summary_csv(stem + "_summary.csv", summaries)
    _write_manifest(cfg, "ensemble", a)
    print("label,n,mean,std,min,max," + ",".join(f"fraction_above[{t}]" for t in THRESHOLDS))
    for label, s in summaries.items():
        fr = ",".join(f"{s.fraction_above[t]:.4f}" for t in THRESHOLDS)
        print(f"{label},{s.n_samples},{s.mean:.6f},{s.std:.3e},{s.min:.6f},{s.max:.6f},{fr}")
        if s.n_failed or s.n_resampled:
            print(f"  failed samples: {s.n_failed}, geometry redraws: {s.n_resampled}")
    return 0


def cmd_trapsweep(a) -> int:
    cfg = _resolve(a)
    lambdas = _float_list(a.lambdas)
    if len(lambdas) < 2:
        raise ConfigError("--lambdas needs at least two values for a curve", "lambdas")
    model = cfg.model()
    sweep = trap_site_sweep(model, lambdas, workers=_workers(a))
    path = os.path.join(cfg.output_dir, "trapsweep.csv")
    write_trap_sweep_csv(path, sweep)
    series = {f"site {s}": sweep.eta[:, k] for k, s in enumerate(sweep.sites)}
    write_svg(os.path.join(cfg.output_dir, "trapsweep.svg"),
              line_plot_svg(sweep.lambdas, series, "efficiency by trap site", "lambda (cm^-1)", "eta",
                            log_x=min(lambdas) > 0))
    _write_manifest(cfg, "trapsweep", a)
    print("lambda,best_site," + ",".join(f"site_{s}" for s in sweep.sites))
    for lam, best, row in zip(sweep.lambdas, sweep.best_sites(), sweep.eta):
        print(f"{lam:g},{best}," + ",".join(f"{x:.6f}" for x in row))
    return 0


def cmd_dump_bath(a) -> int:
    cfg = _resolve(a)
    parts = a.times.split(":")
    if len(parts) != 3:
        raise ConfigError("--times is start:stop:count", "times")
    times = np.linspace(float(parts[0]), float(parts[1]), int(parts[2]))
    kernel = expand_correlation(cfg.bath)
    table = correlation_table(cfg.bath, kernel, times)
    path = os.path.join(cfg.output_dir, "bath_correlation.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_ps", "re", "im", "kernel_re", "kernel_im"])
        for row in table:
            w.writerow([_fmt(v) for v in row])
    _write_manifest(cfg, "dump-bath", a, {"kernel_terms": kernel.n_terms,
                                          "truncation_bound": kernel.truncation_bound})
    print(f"kernel: {kernel.n_terms} terms, truncation bound {kernel.truncation_bound:.3e} rad^2/ps^2")
    print(f"wrote {path}")
    return 0


def cmd_dump_model(a) -> int:
    cfg = _resolve(a)
    out = cfg.output_dir
    write_hamiltonian_csv(cfg.hamiltonian, os.path.join(out, "hamiltonian.csv"))
    files = ["hamiltonian.csv"]
    if cfg.geometry is not None:
        write_geometry_csv(cfg.geometry, os.path.join(out, "geometry.csv"))
        dipole = cfg.hamiltonian.with_couplings(couplings_from_geometry(cfg.geometry))
        write_hamiltonian_csv(dipole, os.path.join(out, "hamiltonian_dipole_couplings.csv"))
        files += ["geometry.csv", "hamiltonian_dipole_couplings.csv"]
    _write_manifest(cfg, "dump-model", a)
    for f in files:
        print(f"wrote {os.path.join(out, f)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="enaqt", description="Exciton transfer efficiency with the TC2 master equation")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ete", help="one propagation: efficiency and trajectory")
    _add_model_flags(s)
    s.add_argument("--coherences", default="", help="site pairs for the trajectory CSV, e.g. 1-2,3-4")
    s.set_defaults(func=cmd_ete)

    s = sub.add_parser("scan", help="2-D efficiency landscape")
    _add_model_flags(s)
    s.add_argument("--axis1", nargs="+", required=True, metavar="SPEC", help="PARAMETER [start:stop:count:spacing]")
    s.add_argument("--axis2", nargs="+", required=True, metavar="SPEC")
    s.add_argument("--derivatives", action="store_true", help="also gradient and Hessian norm fields")
    s.add_argument("--coordinates", choices=("normalized", "raw"), default="normalized")
    s.add_argument("--norm", choices=("spectral", "frobenius"), default="spectral")
    s.add_argument("--no-resume", action="store_true", help="recompute nodes present in earlier output")
    s.set_defaults(func=cmd_scan)

    s = sub.add_parser("ensemble", help="random initial states or structural disorder")
    _add_model_flags(s)
    s.add_argument("--mode", choices=("initial-states", "disorder-small", "disorder-large"), required=True)
    s.add_argument("-n", "--samples", type=int, default=500)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--lambdas", default="1,35,500", help="comma-separated, initial-states mode")
    s.add_argument("--mix", choices=("pure", "mixed", "both"), default="mixed")
    s.add_argument("--ensemble-method", choices=("operator", "propagate"), default="operator")
    s.add_argument("--coupling-mode", choices=("recompute", "shift"), default="recompute")
    s.set_defaults(func=cmd_ensemble)

    s = sub.add_parser("trapsweep", help="efficiency versus lambda for every trap site")
    _add_model_flags(s)
    s.add_argument("--lambdas", default="1,10,35,100,500")
    s.set_defaults(func=cmd_trapsweep)

    s = sub.add_parser("dump-bath", help="C(t) table: quadrature against the exponential kernel")
    _add_model_flags(s)
    s.add_argument("--times", default="0:2:201", help="start:stop:count in ps")
    s.set_defaults(func=cmd_dump_bath)

    s = sub.add_parser("dump-model", help="write Hamiltonian and geometry CSVs")
    _add_model_flags(s)
    s.set_defaults(func=cmd_dump_model)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    try:
        return a.func(a)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
