"""Robustness of the efficiency to the initial state and to static disorder.

Random Hilbert-Schmidt initial states at three coupling strengths (exact
linear map), then a small batch of disordered Hamiltonians.

    python demos/robustness.py [n_samples]
"""
import sys
from dataclasses import replace

from enaqt.ensembles import disorder_sweep, initial_state_sweep
from enaqt.exciton import DisorderSpec
from enaqt.model import ModelConfig
from enaqt.tc2 import SolverOptions


def main(n: int) -> None:
    base = ModelConfig()
    for row in initial_state_sweep(base, [1.0, 35.0, 200.0], n_samples=n, mix="both", rng_seed=0):
        s = row.summary
        print(f"lambda={row.reorganization_energy:>5g} {row.mix:>5}: mean={s.mean:.4f} std={s.std:.2e} "
              f"range=[{s.min:.4f}, {s.max:.4f}]")
    exact = replace(base, solver=SolverOptions("resolvent"))
    for label, spec in (("small", DisorderSpec.small()), ("large", DisorderSpec.large())):
        res = disorder_sweep(exact, spec, n_samples=max(2, n // 10), rng_seed=0)
        s = res.summary
        print(f"{label} disorder ({s.n_samples} samples): mean={s.mean:.4f} "
              f"fraction(eta>=0.9)={s.fraction_above[0.9]:.2f}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 200)
