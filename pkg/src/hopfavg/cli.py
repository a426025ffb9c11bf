"""Command line entry point: ``hopfavg {analyze,average,compare,lyapunov,scaling}``."""

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

from . import averaging, reduced_sde, sdde_sim, stats
from ._accel import default_threads
from .config import load_config
from .dde_core.spectral import build_spectral
from .errors import (
    ConfigError,
    ContractViolation,
    CriticalityError,
    DegenerateDiffusionError,
    DegenerateEigenvalueError,
    GqConditionError,
    HopfAvgError,
    NumericalBlowup,
    TrajectoryTooShort,
    UnstableError,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NOT_CRITICAL = 2
EXIT_UNSTABLE = 3
EXIT_GQ = 4
EXIT_NO_L1 = 5
EXIT_NUMERIC = 6
EXIT_BLOWUP = 7


class _Exit(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _threads(args):
    return default_threads() if args.threads is None else args.threads


def _write(out_dir, name, text):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _emit(out_dir, name, values):
    text = stats.summary_text(values)
    sys.stdout.write(text)
    _write(out_dir, name, text)


def _spectral(cfg, with_fundamental=True):
    try:
        return build_spectral(cfg.kernel(), with_fundamental=with_fundamental)
    except UnstableError as exc:
        raise _Exit(EXIT_UNSTABLE, f"unstable: {exc}") from None
    except (CriticalityError, DegenerateEigenvalueError) as exc:
        raise _Exit(EXIT_NOT_CRITICAL, f"not critical: {exc}") from None


def _model(cfg, spectral):
    spec = cfg.perturbation()
    if spec.multiplicative:
        domain = None if cfg.H_lower is None else (cfg.H_lower, cfg.H_star)
        try:
            return averaging.average_multiplicative(spec.noise.L1, spectral, domain=domain, G=spec.G)
        except DegenerateDiffusionError as exc:
            raise _Exit(EXIT_NOT_CRITICAL, f"degenerate diffusion: {exc}") from None
    try:
        return averaging.average_additive(spec, cfg.kernel(), spectral, H_star=cfg.H_star)
    except GqConditionError as exc:
        raise _Exit(EXIT_GQ, f"G_q condition failed: violation={exc.violation:.6e}") from None


# ---------------------------------------------------------------- commands


def cmd_analyze(cfg, args):
    sp = _spectral(cfg)
    _write(cfg.out_dir, "h_table.csv", sp.h_csv())
    _emit(cfg.out_dir, "analyze.txt", {
        "omega_c": sp.omega_c,
        "kappa": sp.kappa,
        "period": sp.period,
        "Psi_tilde_1": float(sp.Psi_tilde[0]),
        "Psi_tilde_2": float(sp.Psi_tilde[1]),
        "duality_residual": sp.duality_residual,
        "K_bound": sp.K_bound,
        "t_max": sp.t_max,
        "n_roots": len(sp.roots),
    })  # fmt: skip
    return EXIT_OK


def cmd_average(cfg, args):
    sp = _spectral(cfg)
    model = _model(cfg, sp)
    _write(cfg.out_dir, "average.csv", model.csv())
    summary = {"multiplicative": model.multiplicative, "H_star": model.H_star}
    if model.kappa_b is not None:
        summary["kappa_b"] = model.kappa_b
        summary["kappa_d"] = model.kappa_d
        summary["residual_2kb_minus_kd"] = 2.0 * model.kappa_b - model.kappa_d
    if "gq_violation" in model.meta:
        summary["gq_violation"] = model.meta["gq_violation"]
    if model.multiplicative:
        lya = averaging.lyapunov_avg(model)
        summary["lambda_avg"] = lya.lambda_avg
        summary["alignment"] = lya.alignment
    _emit(cfg.out_dir, "average.txt", summary)
    return EXIT_OK


def cmd_compare(cfg, args):
    sp = _spectral(cfg)
    model = _model(cfg, sp)
    spec = cfg.perturbation()
    kernel = cfg.kernel()
    init = sdde_sim.initial_segment(sp, cfg.hbar0)
    H_lower = cfg.H_lower if spec.multiplicative else None
    full = sdde_sim.run_ensemble(
        init, spec, kernel, sp, cfg.T_end, cfg.H_star, H_lower,
        base_seed=cfg.base_seed, n_samples=cfg.N_samp, threads=_threads(args), n=cfg.grid_n,
    )  # fmt: skip
    # disjoint seed block keeps the two ensembles independent
    red = reduced_sde.run_reduced_ensemble(
        model, cfg.hbar0, cfg.T_end, dt=cfg.reduced_dt,
        base_seed=cfg.base_seed + cfg.N_samp, n_samples=cfg.N_samp, threads=_threads(args),
    )  # fmt: skip
    n_blow = full.n_blowup + red.n_blowup
    if len(full) - full.n_blowup == 0 or len(red) - red.n_blowup == 0:
        raise _Exit(EXIT_BLOWUP, f"blow-ups: full={full.n_blowup} reduced={red.n_blowup}")
    rep = stats.compare_ensembles(full, red, cfg.T_end)
    _write(cfg.out_dir, "terminal_cdf.csv", stats.cdf_csv(rep.terminal_full, rep.terminal_reduced))
    _write(cfg.out_dir, "exit_cdf.csv", stats.cdf_csv(rep.exit_full, rep.exit_reduced))
    _write(cfg.out_dir, "exit_full.csv", sdde_sim.exit_csv(full))
    _write(cfg.out_dir, "exit_reduced.csv", sdde_sim.exit_csv(red))
    _emit(cfg.out_dir, "compare.txt", {
        "N_samp": cfg.N_samp,
        "epsilon": cfg.epsilon,
        "ks_terminal": rep.ks_terminal,
        "ks_exit": rep.ks_exit,
        "exit_fraction_full": rep.exit_full.mass,
        "exit_fraction_reduced": rep.exit_reduced.mass,
        "blowup_full": full.n_blowup,
        "blowup_reduced": red.n_blowup,
    })  # fmt: skip
    if n_blow:
        raise _Exit(EXIT_BLOWUP, f"blow-ups: full={full.n_blowup} reduced={red.n_blowup}")
    return EXIT_OK


def cmd_lyapunov(cfg, args):
    spec = cfg.perturbation()
    if not spec.multiplicative:
        raise _Exit(EXIT_NO_L1, "lyapunov needs noise.type = multiplicative with a noise.L1 kernel")
    sp = _spectral(cfg, with_fundamental=False)
    model = _model(cfg, sp)
    lya = averaging.lyapunov_avg(model)
    kernel = cfg.kernel()
    init = sdde_sim.initial_segment(sp, cfg.hbar0)

    def one(i):
        t, sup = sdde_sim.simulate_path(
            init, spec, kernel, sp, cfg.lyapunov_T, n_points=cfg.lyapunov_points,
            seed=cfg.base_seed + i, n=cfg.grid_n,
        )  # fmt: skip
        return stats.lyapunov_estimate(t, sup)

    try:
        with ThreadPoolExecutor(max(1, _threads(args))) as pool:
            curves = list(pool.map(one, range(cfg.lyapunov_paths)))
    except NumericalBlowup as exc:
        raise _Exit(EXIT_BLOWUP, f"blow-up: {exc}") from None
    agg = stats.aggregate_lyapunov(curves)
    _write(cfg.out_dir, "lyapunov.csv", agg.csv())
    _emit(cfg.out_dir, "lyapunov.txt", {
        "lambda_avg": lya.lambda_avg,
        "alignment": lya.alignment,
        "verdict": "stable" if lya.stable else "unstable",
        "predicted_rate": 0.5 * cfg.epsilon**2 * lya.lambda_avg,
        "simulated_rate": agg.summary,
        "simulated_min": float(agg.summaries.min()),
        "simulated_max": float(agg.summaries.max()),
        "T_phys": cfg.lyapunov_T,
        "paths": cfg.lyapunov_paths,
    })  # fmt: skip
    return EXIT_OK


def cmd_scaling(cfg, args):
    if len(cfg.scaling_eps) < 3:
        raise _Exit(EXIT_USAGE, "scaling needs at least three epsilon values")
    sp = _spectral(cfg, with_fundamental=False)
    eps = sorted(cfg.scaling_eps, reverse=True)
    table = sdde_sim.stable_projection_scaling(
        cfg.perturbation(), cfg.kernel(), sp, eps, cfg.scaling_T_end, seed=cfg.base_seed,
        n_paths=cfg.scaling_paths, init=sdde_sim.initial_segment(sp, cfg.hbar0),
        threads=_threads(args),
    )  # fmt: skip
    _write(cfg.out_dir, "scaling.csv", table.csv())
    _emit(cfg.out_dir, "scaling.txt", {"slope": table.slope, "n_eps": len(eps)})
    return EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "average": cmd_average,
    "compare": cmd_compare,
    "lyapunov": cmd_lyapunov,
    "scaling": cmd_scaling,
}


def build_parser():
    p = argparse.ArgumentParser(prog="hopfavg", description=__doc__)
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="experiment config (key = value)")
    p.add_argument("--out", help="output directory (overrides out_dir)")
    p.add_argument("--seed", type=int, help="override base_seed")
    p.add_argument("--threads", type=int, help="worker threads (default HOPFAVG_THREADS or 1)")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed must be >= 0", key="--seed")
            cfg = cfg.with_seed(args.seed)
        if args.out is not None:
            cfg = replace(cfg, out_dir=args.out)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("threads must be >= 1", key="--threads")
        code = COMMANDS[args.command](cfg, args)
        _write(cfg.out_dir, "config.cfg", cfg.to_text())
        return code
    except _Exit as exc:
        print(f"hopfavg: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, OSError, TrajectoryTooShort, ContractViolation) as exc:
        print(f"hopfavg: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except HopfAvgError as exc:
        print(f"hopfavg: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
