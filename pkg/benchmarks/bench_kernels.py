"""Compare the numba and numpy backends of the simulation kernels.

Times the full SDDE ensemble and the reduced SDE ensemble on the shipped
additive setup with both backends, checks that the two agree, and writes
``bench_kernels.txt`` next to this script.  The numba timings exclude the
first (compiling) call.

Run with ``python3 benchmarks/bench_kernels.py [n_paths]``.
"""

import math
import os
import sys
import time

import numpy as np

from hopfavg import averaging
from hopfavg._accel import HAVE_NUMBA
from hopfavg.dde_core.kernel import MeasureKernel
from hopfavg.dde_core.spectral import build_spectral
from hopfavg.perturbation import delay_monomial_perturbation
from hopfavg.reduced_sde import run_reduced_ensemble
from hopfavg.sdde_sim import initial_segment, run_ensemble


def best_of(fn, repeat=3):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(n_paths=64):
    kernel = MeasureKernel(1.0, ((-1.0, -math.pi / 2),))
    sp = build_spectral(kernel)
    spec = delay_monomial_perturbation(0.025, gamma_c=1.0)
    model = averaging.average_additive(spec, kernel, sp)
    init = initial_segment(sp, 0.72)
    T_slow = 0.25  # 102400 steps per path at eps = 0.025

    def full(backend):
        return run_ensemble(init, spec, kernel, sp, T_slow, 1.5, n_samples=n_paths, backend=backend, threads=1)

    def reduced(backend):
        return run_reduced_ensemble(model, 0.72, 2.0, n_samples=50 * n_paths, backend=backend, threads=1)

    lines = [f"paths={n_paths} numba={'yes' if HAVE_NUMBA else 'no'}"]
    for name, fn in (("sdde_ensemble", full), ("reduced_ensemble", reduced)):
        t_np, out_np = best_of(lambda: fn("numpy"), repeat=1 if name == "sdde_ensemble" else 3)
        if HAVE_NUMBA:
            fn("numba")  # compile
            t_nb, out_nb = best_of(lambda: fn("numba"))
            diff = max(float(np.max(np.abs(a.hbar - b.hbar))) for a, b in zip(out_np, out_nb))
            lines.append(
                f"{name}: numpy {t_np:.3f}s  numba {t_nb:.3f}s  speedup {t_np / t_nb:.1f}x  max|dhbar| {diff:.1e}"
            )
        else:
            lines.append(f"{name}: numpy {t_np:.3f}s")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    with open(os.path.join(os.path.dirname(os.path.abspath(__file__)), "bench_kernels.txt"), "w") as fh:
        fh.write(text)


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 64)
