"""Efficiency landscape over (lambda, gamma) with gradient and Hessian norms.

An 11x11 log grid solved with the resolvent; writes three heatmaps and
reports where the default parameters sit in the gradient-norm ranking.

    python demos/landscape.py [output_dir]
"""
import sys
from dataclasses import replace
from pathlib import Path

from enaqt.landscape import STENCIL_MARGIN, ScanAxis, derivative_fields, percentile_rank, scan_ete_2d
from enaqt.model import ModelConfig
from enaqt.svg import heatmap_svg, write_svg
from enaqt.tc2 import SolverOptions


def main(out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    base = replace(ModelConfig(), solver=SolverOptions("resolvent"))
    a1 = ScanAxis.from_range("lambda", 1, 500, 11, "log")
    a2 = ScanAxis.from_range("gamma", 10, 300, 11, "log")
    grid = scan_ete_2d(base, a1, a2)
    fields = derivative_fields(grid)
    m = STENCIL_MARGIN
    marker = (35.0, 50.0)
    write_svg(out / "eta.svg", heatmap_svg(a1.grid, a2.grid, grid.eta, "efficiency", "lambda (cm^-1)",
                                           "gamma (cm^-1)", True, True, marker, "eta"))
    for name in ("gradient_norm", "hessian_norm"):
        write_svg(out / f"{name}.svg",
                  heatmap_svg(a1.grid[m:-m], a2.grid[m:-m], getattr(fields, name), name.replace("_", " "),
                              "lambda (cm^-1)", "gamma (cm^-1)", True, True, marker, name))
    i, j = grid.node(*marker)
    rank = percentile_rank(fields.gradient_norm, (i - m, j - m))
    print(f"eta range {grid.eta[grid.converged].min():.4f}..{grid.eta[grid.converged].max():.4f}; "
          f"{(~grid.converged).sum()} nodes without a finite-time limit")
    print(f"node nearest (35, 50): eta={grid.eta[i, j]:.5f}, gradient-norm percentile {rank:.2f}")
    print(f"wrote eta.svg, gradient_norm.svg, hessian_norm.svg to {out}")


if __name__ == "__main__":
    main(Path(sys.argv[1] if len(sys.argv) > 1 else "demo-output"))
