"""Transfer efficiency of the FMO complex versus bath coupling strength.

Runs the default model once by time integration, then sweeps the
reorganization energy with the exact resolvent and writes a line plot.

    python demos/fmo_efficiency.py [output_dir]
"""
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from enaqt.model import ModelConfig, evaluate
from enaqt.svg import line_plot_svg, write_svg
from enaqt.tc2 import SolverOptions


def main(out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    base = ModelConfig()
    r = evaluate(base)
    print(f"default model: eta={r.eta:.5f} loss={r.loss_yield:.5f} residual={r.residual_trace:.1e} "
          f"after {r.t_final:.0f} ps")

    exact = replace(base, solver=SolverOptions("resolvent"))
    lambdas = np.geomspace(0.1, 500, 31)
    etas = np.array([evaluate(exact.with_parameter("lambda", lam)).eta for lam in lambdas])
    k = int(np.nanargmax(etas))
    print(f"maximum eta={etas[k]:.5f} at lambda={lambdas[k]:.1f} cm^-1; "
          f"eta(0.1)={etas[0]:.4f}, eta(500)={etas[-1]:.4f}")
    write_svg(out / "eta_vs_lambda.svg",
              line_plot_svg(lambdas, {"eta": etas}, "efficiency vs reorganization energy",
                            "lambda (cm^-1)", "eta", log_x=True))
    print(f"wrote {out / 'eta_vs_lambda.svg'}")


if __name__ == "__main__":
    main(Path(sys.argv[1] if len(sys.argv) > 1 else "demo-output"))
