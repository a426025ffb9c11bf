"""Integration of the averaged one-dimensional amplitude SDE."""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels as K
from ._accel import default_threads, resolve_backend
from .errors import ContractViolation
from .sdde_sim import STATUS_NAMES, Ensemble, brownian_increments, CHUNK

RECORD_EVERY = 10
DEFAULT_STEPS = 5000


@dataclass
class ReducedTrajectory:
    """Recorded path of the reduced SDE, truncated at exit."""

    times: np.ndarray
    hbar: np.ndarray
    exit_time: Optional[float]
    seed: int
    status: str

    @property
    def terminal(self):
        return float(self.hbar[-1])

    @property
    def stable_norm(self):
        return np.zeros_like(self.hbar)

    def same_as(self, other):
        return (
            np.array_equal(self.times, other.times)
            and np.array_equal(self.hbar, other.hbar)
            and self.exit_time == other.exit_time
            and self.seed == other.seed
        )


def _model_args(model):
    h_lower = model.H_lower if model.multiplicative else -math.inf
    return (
        float(model.b0),
        float(model.b1),
        model.spline_coeffs,
        float(model.nodes[-1]),
        float(model.s1),
        float(model.s2),
        float(model.H_star),
        float(h_lower),
        True,
    )


def _increments(seed, n_steps, dt, refine=1):
    need = n_steps * refine
    per = CHUNK // refine
    chunks = [
        brownian_increments(seed, c, dt, refine, size=n_steps - c * per)
        for c in range(-(-need // CHUNK))
    ]
    return np.concatenate(chunks)[:n_steps]


def _steps_for(T_end, dt, record_every):
    if dt is None:
        n_steps = DEFAULT_STEPS
    else:
        n_steps = int(round(T_end / dt))
    n_steps = max(record_every, int(math.ceil(n_steps / record_every)) * record_every)
    return n_steps, T_end / n_steps


def _to_traj(out, exit_idx, status, seed, dt, record_every):
    if status == K.EXITED:
        stop = int(exit_idx)
    elif status == K.BLOWUP:
        stop = max(int(exit_idx) - 1, 0)
    else:
        stop = out.size - 1
    times = np.arange(stop + 1) * (dt * record_every)
    exit_time = float(times[-1]) if status == K.EXITED else None
    return ReducedTrajectory(times, out[: stop + 1].copy(), exit_time, int(seed), STATUS_NAMES[int(status)])


def simulate_reduced(model, hbar0, T_end, dt=None, seed=0, backend=None, record_every=RECORD_EVERY, noise_refine=1):
    """Full-truncation Euler-Maruyama for the averaged SDE.

    Parameters
    ----------
    model : AveragedModel
    hbar0 : float
        Start value in ``[H_lower, H_star)``.
    T_end : float
        Horizon (slow time).
    dt : float, optional
        Step; defaults to ``T_end / 5000``.  Rounded so that the records every
        ``record_every`` steps land on ``T_end``.
    """
    return run_reduced_ensemble(
        model, [hbar0], T_end, dt=dt, base_seed=seed, backend=backend,
        record_every=record_every, threads=1, noise_refine=noise_refine,
    )[0]  # fmt: skip


def run_reduced_ensemble(
    model,
    hbar0_list,
    T_end,
    dt=None,
    base_seed=0,
    n_samples=None,
    backend=None,
    record_every=RECORD_EVERY,
    threads=None,
    noise_refine=1,
):
    """Seeded ensemble; path ``i`` uses ``seed = base_seed + i``.

    ``hbar0_list`` is a scalar shared by ``n_samples`` paths or a sequence.
    """
    if np.ndim(hbar0_list) == 0:
        if n_samples is None or n_samples < 1:
            raise ContractViolation("n_samples must be >= 1")
        h0 = np.full(n_samples, float(hbar0_list))
    else:
        h0 = np.asarray(hbar0_list, dtype=float)
    lo = model.H_lower if model.multiplicative else 0.0
    if np.any(h0 < lo) or np.any(h0 >= model.H_star):
        raise ContractViolation("initial amplitudes must lie in [H_lower, H_star)")
    n_steps, step = _steps_for(T_end, dt, record_every)
    n_rec = n_steps // record_every + 1
    args = _model_args(model)
    seeds = [int(base_seed) + i for i in range(h0.size)]
    backend = resolve_backend(backend)
    threads = default_threads() if threads is None else int(threads)
    if backend == "numba":

        def work(i):
            dW = _increments(seeds[i], n_steps, step, noise_refine)
            out = np.full(n_rec, np.nan)
            exit_idx, status = K.reduced_path(h0[i], dW, step, *args, record_every, out)
            return _to_traj(out, exit_idx, status, seeds[i], step, record_every)

        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                records = list(pool.map(work, range(h0.size)))
        else:
            records = [work(i) for i in range(h0.size)]
    else:
        dW = np.stack([_increments(s, n_steps, step, noise_refine) for s in seeds])
        out = np.full((h0.size, n_rec), np.nan)
        exit_idx, status = K.reduced_batch(h0, dW, step, *args, record_every, out)
        records = [
            _to_traj(out[i], exit_idx[i], status[i], seeds[i], step, record_every)
            for i in range(h0.size)
        ]
    n_blow = sum(r.status == "blowup" for r in records)
    return Ensemble(records, n_blow, {"T_end": T_end, "dt": step, "base_seed": base_seed})


def reduced_csv(ensemble):
    lines = ["id,t,hbar,stable_norm"]
    for i, rec in enumerate(ensemble):
        for t, h in zip(rec.times, rec.hbar):
            lines.append(f"{i},{t:.17g},{h:.17g},0")
    return "\n".join(lines) + "\n"
