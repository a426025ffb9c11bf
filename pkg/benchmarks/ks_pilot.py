"""Pilot calibration of the KS thresholds used by the acceptance suite.

Draws independent reduced-model ensembles (disjoint seed blocks) for each
shipped additive config and reports the spread of the two-sample KS
distance for the terminal amplitude and the censored exit time.  The output
is written next to this script as ``ks_pilot.txt``.

Run with ``python3 benchmarks/ks_pilot.py [replicates]``.
"""

import os
import sys
from importlib import resources

import numpy as np

from hopfavg import averaging, stats
from hopfavg.config import parse_config
from hopfavg.dde_core.spectral import build_spectral
from hopfavg.reduced_sde import run_reduced_ensemble

CASES = ("additive", "cubic", "quadratic")


def pilot(name, n, reps):
    text = resources.files("hopfavg").joinpath("configs", f"{name}.cfg").read_text()
    cfg = parse_config(text)
    sp = build_spectral(cfg.kernel())
    model = averaging.average_additive(cfg.perturbation(), cfg.kernel(), sp, H_star=cfg.H_star)
    term, ext = [], []
    for k in range(reps):
        a = run_reduced_ensemble(model, cfg.hbar0, cfg.T_end, base_seed=10**6 * (2 * k + 1), n_samples=n)
        b = run_reduced_ensemble(model, cfg.hbar0, cfg.T_end, base_seed=10**6 * (2 * k + 2), n_samples=n)
        rep = stats.compare_ensembles(a, b, cfg.T_end)
        term.append(rep.ks_terminal)
        ext.append(rep.ks_exit)
    return np.array(term), np.array(ext)


def main(reps=20):
    lines = [f"# reduced vs reduced, independent seed blocks, {reps} replicates"]
    lines.append("case,n,stat,mean,q95,max")
    for n in (1000, 4000):
        for name in CASES:
            term, ext = pilot(name, n, reps)
            for label, v in (("terminal", term), ("exit", ext)):
                lines.append(
                    f"{name},{n},{label},{v.mean():.4f},{np.quantile(v, 0.95):.4f},{v.max():.4f}"
                )
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    with open(os.path.join(os.path.dirname(os.path.abspath(__file__)), "ks_pilot.txt"), "w") as fh:
        fh.write(text)


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 20)
