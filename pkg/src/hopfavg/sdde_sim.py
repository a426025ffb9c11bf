"""Monte Carlo integration of the perturbed delay equation.

The unscaled equation

    dX = L0 X_t dt + eps G_q(X_t) dt + eps^2 G(X_t) dt + eps F(X_t) dW

is integrated in physical time and reported on the slow clock
``t_slow = eps^2 t``.  The drift is treated by the trapezoidal predictor
(stochastic Heun) and the noise by the Ito increment at the start of the
step.  Plain Euler-Maruyama amplifies the critical rotation at a rate
``omega^2 dt / (2 (1 + omega^2))`` per unit time, which on the slow clock
is ``O(dt / eps^2)`` and swamps the averaged drift; the trapezoidal drift
reduces that error to ``O(dt^2)`` and is slightly dissipative.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels as K
from ._accel import default_threads, resolve_backend
from .dde_core.kernel import Segment, check_span
from .dde_core.spectral import critical_segment
from .errors import ContractViolation, NumericalBlowup
from .perturbation import compile_poly, sparse_weights

CHUNK = 65536
BATCH = 256
_BUFFER_EXTRA = 8192
_MASK64 = (1 << 64) - 1

STATUS_NAMES = {K.EXITED: "exited", K.FINISHED: "finished", K.BLOWUP: "blowup"}


# ---------------------------------------------------------------- noise


def normal_chunk(seed, chunk, size=CHUNK):
    """Standard normals number ``chunk * CHUNK ...`` of the stream for ``seed``.

    A counter-based Philox generator keyed by ``(seed, chunk)`` makes every
    block addressable independently of execution order.  ``size < CHUNK``
    returns a prefix of the same block.
    """
    seed = int(seed)
    if seed < 0 or seed > _MASK64:
        raise ContractViolation("seed must be a 64-bit unsigned integer")
    bitgen = np.random.Philox(key=seed + (int(chunk) << 64))
    return np.random.Generator(bitgen).standard_normal(size)


def brownian_increments(seed, chunk, dt, refine=1, size=None):
    """Wiener increments over steps of length ``dt``.

    With ``refine = R`` each increment is the sum of ``R`` increments of the
    finer step ``dt / R``, so runs with different ``dt`` share one path when
    ``dt / R`` is fixed.  ``size`` truncates the block to that many increments.
    """
    if CHUNK % refine:
        raise ContractViolation(f"refine={refine} must divide {CHUNK}")
    z = normal_chunk(seed, chunk, CHUNK if size is None else min(CHUNK, size * refine))
    if refine > 1:
        z = z.reshape(-1, refine).sum(axis=1)
    return z * math.sqrt(dt / refine)


# ---------------------------------------------------------------- setup


def default_grid(kernel, spectral):
    """Cells per delay span, so that ``dt = r / n <= min(r, period) / 256``."""
    r = kernel.delay_span
    return int(math.ceil(256 * max(1.0, r / spectral.period) - 1e-9))


def slow_scale(epsilon):
    """Factor from physical to slow time; the clocks coincide when ``eps = 0``."""
    return epsilon * epsilon if epsilon > 0 else 1.0


@dataclass
class _Context:
    n: int
    dt: float
    eps: float
    scheme: int
    l0: tuple
    gq: tuple
    g: tuple
    mult: bool
    sigma: float
    l1: tuple
    reuse: bool
    proj_w: np.ndarray
    phi_grid: np.ndarray


def _as_tuple(cp):
    return (cp.idx, cp.frac, cp.coef, cp.powers)


def _context(spec, kernel, spectral, n=None, scheme="heun"):
    spec.check_span(kernel.delay_span)
    r = kernel.delay_span
    n = default_grid(kernel, spectral) if n is None else int(n)
    l0_idx, l0_w = sparse_weights(kernel, n)
    gq = compile_poly(spec.G_q, r, n)
    g = compile_poly(spec.G, r, n)
    if spec.multiplicative:
        l1_idx, l1_w = sparse_weights(spec.noise.L1, n)
        sigma = 0.0
    else:
        l1_idx, l1_w = np.zeros(0, np.int64), np.zeros(0)
        sigma = float(spec.noise.sigma)
    reuse = not (np.any(l0_idx == n) or gq.touches(n) or g.touches(n))
    proj = spectral.projector(n)
    return _Context(
        n=n,
        dt=r / n,
        eps=float(spec.epsilon),
        scheme={"heun": K.HEUN, "euler": K.EULER}[scheme],
        l0=(l0_idx, l0_w),
        gq=_as_tuple(gq),
        g=_as_tuple(g),
        mult=spec.multiplicative,
        sigma=sigma,
        l1=(l1_idx, l1_w),
        reuse=bool(reuse),
        proj_w=np.ascontiguousarray(proj.weights),
        phi_grid=np.ascontiguousarray(proj.phi_grid),
    )


def _resample(seg, kernel, n):
    check_span(kernel, seg)
    if seg.n == n:
        return seg.values
    theta = np.linspace(-kernel.delay_span, 0.0, n + 1)
    theta[-1] = 0.0
    return seg(theta)


def record_steps(n_steps, n_records=500):
    """Step indices of the recording grid, including 0 and ``n_steps``."""
    steps = np.round(np.linspace(0, n_steps, n_records + 1)).astype(np.int64)
    return np.unique(steps)


# ---------------------------------------------------------------- records


@dataclass
class TrajectoryRecord:
    """Slow-time record of one trajectory.

    Attributes
    ----------
    times : ndarray
        Slow times of the recorded points (truncated at exit).
    hbar, stable_norm : ndarray
        Amplitude and ``sup |(I - pi) X_t|`` at ``times``.
    exit_time : float or None
        First recorded time with the amplitude outside ``(H_lower, H_star)``.
    seed : int
    status : str
        ``"finished"``, ``"exited"`` or ``"blowup"``.
    """

    times: np.ndarray
    hbar: np.ndarray
    stable_norm: np.ndarray
    exit_time: Optional[float]
    seed: int
    status: str
    sup_abs: Optional[np.ndarray] = None
    states: Optional[np.ndarray] = None
    blowup_time: Optional[float] = None

    @property
    def terminal(self):
        """Amplitude at ``T_end`` or at the exit time, whichever comes first."""
        return float(self.hbar[-1])

    def same_as(self, other):
        arrays = ("times", "hbar", "stable_norm")
        return (
            all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays)
            and self.exit_time == other.exit_time
            and self.seed == other.seed
            and self.status == other.status
        )


@dataclass
class Ensemble:
    records: list
    n_blowup: int = 0
    settings: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def terminal_values(self, include_blowup=False):
        return np.array(
            [r.terminal for r in self.records if include_blowup or r.status != "blowup"]
        )

    def exit_times(self):
        return [r.exit_time for r in self.records if r.status != "blowup"]


# ---------------------------------------------------------------- drivers


def _alloc(n_rec, n, store, shape=()):
    rec = {
        "h": np.full(shape + (n_rec,), np.nan),
        "stable": np.full(shape + (n_rec,), np.nan),
        "sup": np.full(shape + (n_rec,), np.nan),
    }
    rec["states"] = (
        np.full(shape + (n_rec, n + 1), np.nan) if store else np.zeros(shape + (1, 1))
    )
    return rec


def _finish(ctx, steps, rec, stop, status, seed, blowup_step, time_scale, store, sup=False):
    m = stop + 1
    times = steps[:m] * ctx.dt * time_scale
    exit_time = float(times[-1]) if status == K.EXITED else None
    return TrajectoryRecord(
        times=times,
        hbar=rec["h"][:m].copy(),
        stable_norm=rec["stable"][:m].copy(),
        exit_time=exit_time,
        seed=int(seed),
        status=STATUS_NAMES[status],
        sup_abs=rec["sup"][:m].copy() if sup else None,
        states=rec["states"][:m].copy() if store else None,
        blowup_time=blowup_step * ctx.dt * time_scale if status == K.BLOWUP else None,
    )


def _run_path(ctx, init_values, seed, steps, h_star, h_lower, store, refine, time_scale, sup):
    n = ctx.n
    buf = np.zeros(n + 1 + _BUFFER_EXTRA)
    buf[: n + 1] = init_values
    istate = np.array([n, 0, 0, K.RUNNING], dtype=np.int64)
    fstate = np.zeros(2)
    rec = _alloc(steps.size, n, store)
    chunk = 0
    while istate[3] == K.RUNNING:
        dW = brownian_increments(seed, chunk, ctx.dt, refine)
        K.sdde_path(
            buf, istate, fstate, dW, n, ctx.dt, ctx.eps, ctx.scheme,
            ctx.l0[0], ctx.l0[1], ctx.gq, ctx.g, ctx.mult, ctx.sigma, ctx.l1[0], ctx.l1[1],
            ctx.reuse, steps, ctx.proj_w, ctx.phi_grid, h_star, h_lower,
            rec["h"], rec["stable"], rec["sup"], rec["states"], store,
        )  # fmt: skip
        chunk += 1
    status = int(istate[3])
    if status == K.BLOWUP:
        stop = int(istate[2]) - 1
        blow = int(istate[1])
    else:
        stop = int(istate[2]) - 1
        blow = 0
    return _finish(ctx, steps, rec, stop, status, seed, blow, time_scale, store, sup)


def _run_batch(ctx, init_values, seeds, steps, h_star, h_lower, store, refine, time_scale, sup):
    n = ctx.n
    P = len(seeds)
    buf = np.zeros((P, n + 1 + _BUFFER_EXTRA))
    buf[:, : n + 1] = init_values
    istate = [n, 0, 0]
    fstate = {"status": np.full(P, K.RUNNING), "f0": None, "have": False}
    rec = _alloc(steps.size, n, store, (P,))
    blow_step = np.zeros(P, dtype=np.int64)
    chunk = 0
    while np.any(fstate["status"] == K.RUNNING):
        dW = np.stack([brownian_increments(s, chunk, ctx.dt, refine) for s in seeds])
        before = fstate["status"].copy()
        K.sdde_batch(
            buf, istate, fstate, dW, n, ctx.dt, ctx.eps, ctx.scheme,
            ctx.l0[0], ctx.l0[1], ctx.gq, ctx.g, ctx.mult, ctx.sigma, ctx.l1[0], ctx.l1[1],
            ctx.reuse, steps, ctx.proj_w, ctx.phi_grid, h_star, h_lower,
            rec["h"], rec["stable"], rec["sup"], rec["states"], store,
        )  # fmt: skip
        newly = (before == K.RUNNING) & (fstate["status"] == K.BLOWUP)
        blow_step[newly] = istate[1]
        chunk += 1
    out = []
    for i, seed in enumerate(seeds):
        finite = np.flatnonzero(~np.isnan(rec["h"][i]))
        stop = int(finite[-1]) if finite.size else 0
        sub = {k: v[i] for k, v in rec.items()}
        status = int(fstate["status"][i])
        out.append(
            _finish(ctx, steps, sub, stop, status, seed, int(blow_step[i]), time_scale, store, sup)
        )
    return out


# ---------------------------------------------------------------- public API


def step(state, spec, kernel, dt, dW, scheme="heun", time=None):
    """One step of the discretised equation on a :class:`Segment`.

    ``dt`` must equal the segment's grid step, so the history shifts by one
    cell.  ``scheme="euler"`` gives the plain Euler-Maruyama update.

    Raises
    ------
    NumericalBlowup
        The new endpoint is not finite.
    """
    check_span(kernel, state)
    n = state.n
    if abs(dt - state.grid_step) > 1e-12 * state.grid_step:
        raise ContractViolation(f"dt={dt} must equal the segment grid step {state.grid_step}")
    r = kernel.delay_span
    l0_idx, l0_w = sparse_weights(kernel, n)
    gq = _as_tuple(compile_poly(spec.G_q, r, n))
    g = _as_tuple(compile_poly(spec.G, r, n))
    eps = float(spec.epsilon)
    v = np.array(state.values)[None, :]
    f0 = K._drift_batch(v, eps, l0_idx, l0_w, gq, g)[0]
    if spec.multiplicative:
        idx, w = sparse_weights(spec.noise.L1, n)
        fn = float(v[0, idx] @ w)
    else:
        fn = spec.noise.sigma
    incr = eps * fn * dW
    x = v[0, -1]
    new = np.empty(n + 2)
    new[: n + 1] = v[0]
    if scheme == "heun":
        new[-1] = x + f0 * dt + incr
        f1 = K._drift_batch(new[None, 1:], eps, l0_idx, l0_w, gq, g)[0]
        new[-1] = x + 0.5 * (f0 + f1) * dt + incr
    elif scheme == "euler":
        new[-1] = x + f0 * dt + incr
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    if not np.isfinite(new[-1]):
        raise NumericalBlowup(float("nan") if time is None else time)
    return Segment(state.delay_span, new[1:])


def _prepare(spec, kernel, spectral, T_end_slow, n, scheme, n_records):
    ctx = _context(spec, kernel, spectral, n=n, scheme=scheme)
    scale = slow_scale(ctx.eps)
    n_steps = int(round(T_end_slow / scale / ctx.dt))
    if n_steps < 1:
        raise ContractViolation("T_end_slow is shorter than one step")
    return ctx, record_steps(n_steps, n_records), scale


def _check_init(spectral, kernel, values, ctx, H_star, H_lower):
    z = ctx.proj_w @ values
    h = 0.5 * float(z @ z)
    if not h < H_star or (H_lower is not None and not h > H_lower):
        raise ContractViolation(f"initial amplitude {h:.6g} outside the domain")


def simulate_trajectory(
    init,
    spec,
    kernel,
    spectral,
    T_end_slow,
    H_star,
    H_lower=None,
    seed=0,
    n=None,
    n_records=500,
    store_states=False,
    backend=None,
    noise_refine=1,
    scheme="heun",
):
    """Integrate one trajectory up to ``T_end_slow`` or exit.

    Parameters
    ----------
    init : Segment
        Initial history; resampled to the simulation grid if needed.
    spec : PerturbationSpec
    kernel : MeasureKernel
    spectral : SpectralData
    T_end_slow : float
        Horizon on the slow clock.
    H_star, H_lower : float
        Amplitude domain ``(H_lower, H_star)``; ``H_lower=None`` disables the
        lower boundary.
    seed : int
    n : int, optional
        Cells per delay span (``dt = r / n``).
    noise_refine : int
        Build each increment from this many finer increments.

    Raises
    ------
    NumericalBlowup
        The state became non-finite.
    """
    record = _simulate_many(
        [init], spec, kernel, spectral, T_end_slow, H_star, H_lower, [seed],
        n, n_records, store_states, backend, noise_refine, scheme, 1,
    )[0]  # fmt: skip
    if record.status == "blowup":
        raise NumericalBlowup(record.blowup_time, seed)
    return record


def _simulate_many(
    inits, spec, kernel, spectral, T_end_slow, H_star, H_lower, seeds,
    n, n_records, store_states, backend, noise_refine, scheme, threads, sup=False,
):  # fmt: skip
    ctx, steps, scale = _prepare(spec, kernel, spectral, T_end_slow, n, scheme, n_records)
    values = [_resample(s, kernel, ctx.n) for s in inits]
    for v in values:
        _check_init(spectral, kernel, v, ctx, H_star, H_lower)
    hl = -math.inf if H_lower is None else float(H_lower)
    hs = float(H_star)
    backend = resolve_backend(backend)
    args = (steps, hs, hl, bool(store_states), int(noise_refine), scale, sup)
    if backend == "numba":
        jobs = [(values[i], seeds[i]) for i in range(len(seeds))]

        def work(job):
            return _run_path(ctx, job[0], job[1], *args)

        if threads > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(threads) as pool:
                return list(pool.map(work, jobs))
        return [work(j) for j in jobs]
    batches = [range(i, min(i + BATCH, len(seeds))) for i in range(0, len(seeds), BATCH)]

    def work_batch(idx):
        init_values = np.stack([values[i] for i in idx])
        return _run_batch(ctx, init_values, [seeds[i] for i in idx], *args)

    if threads > 1 and len(batches) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(work_batch, batches))
    else:
        parts = [work_batch(b) for b in batches]
    return [rec for part in parts for rec in part]


def run_ensemble(
    inits,
    spec,
    kernel,
    spectral,
    T_end_slow,
    H_star,
    H_lower=None,
    base_seed=0,
    n_samples=None,
    threads=None,
    n=None,
    n_records=500,
    store_states=False,
    backend=None,
    noise_refine=1,
    scheme="heun",
):
    """Seeded ensemble; trajectory ``i`` uses ``seed = base_seed + i``.

    ``inits`` is one :class:`Segment` shared by all trajectories or a list
    of ``n_samples`` segments.  Blow-ups are counted, not raised.
    """
    if isinstance(inits, Segment):
        if n_samples is None or n_samples < 1:
            raise ContractViolation("n_samples must be >= 1")
        inits = [inits] * n_samples
    else:
        inits = list(inits)
        n_samples = len(inits) if n_samples is None else n_samples
        if n_samples != len(inits) or n_samples < 1:
            raise ContractViolation("n_samples must match the number of initial segments")
    seeds = [int(base_seed) + i for i in range(n_samples)]
    threads = default_threads() if threads is None else int(threads)
    records = _simulate_many(
        inits, spec, kernel, spectral, T_end_slow, H_star, H_lower, seeds,
        n, n_records, store_states, backend, noise_refine, scheme, threads,
    )  # fmt: skip
    n_blow = sum(r.status == "blowup" for r in records)
    settings = {
        "epsilon": spec.epsilon,
        "T_end": T_end_slow,
        "H_star": H_star,
        "H_lower": H_lower,
        "base_seed": base_seed,
    }
    return Ensemble(records, n_blow, settings)


def initial_segment(spectral, hbar0, n=None, phase=0.0):
    """``sqrt(2 hbar0) Phi_1`` rotated by ``phase`` (time units), on ``n`` cells."""
    n = default_grid(spectral.kernel, spectral) if n is None else n
    z = spectral.rotation(phase) @ np.array([math.sqrt(2.0 * hbar0), 0.0])
    return critical_segment(spectral, z, n)


def simulate_path(init, spec, kernel, spectral, T_phys, n_points=200, seed=0, n=None, backend=None):
    """Long trajectory recording ``sup_{[t-r, t]} |X|`` on a log-spaced grid.

    Returns
    -------
    times : ndarray
        Physical times (``t >= r``).
    sup_abs : ndarray
    """
    ctx = _context(spec, kernel, spectral, n=n)
    n_steps = int(round(T_phys / ctx.dt))
    lo = max(ctx.n, 1)
    steps = np.unique(np.round(np.geomspace(lo, n_steps, n_points)).astype(np.int64))
    steps = np.concatenate([[0], steps])
    values = _resample(init, kernel, ctx.n)
    backend = resolve_backend(backend)
    args = (steps, math.inf, -math.inf, False, 1, 1.0, True)
    if backend == "numba":
        rec = _run_path(ctx, values, seed, *args)
    else:
        rec = _run_batch(ctx, values[None, :], [seed], *args)[0]
    if rec.status == "blowup":
        raise NumericalBlowup(rec.blowup_time, seed)
    return rec.times[1:], rec.sup_abs[1:]


# ---------------------------------------------------------------- diagnostics


def _poly_on_states(poly, r, states):
    if poly is None or poly.is_zero():
        return np.zeros(states.shape[0])
    n = states.shape[1] - 1
    cp = compile_poly(poly, r, n)
    return K._poly_batch(states, _as_tuple(cp))


def martingale_residual(ensemble, spec, spectral, kernel):
    """Ensemble mean and standard error of the martingale residual.

    ``M_t = hbar_t - hbar_0 - int_0^t (L hbar)(X_u) du`` with the generator
    ``G E + F^2 |Psi~|^2 / 2 + G_q E / eps`` and ``E = Psi~ . z``, evaluated
    along the recorded states by the trapezoid rule and frozen after exit.

    Returns
    -------
    times, mean, stderr : ndarray
    """
    recs = [r for r in ensemble if r.status != "blowup"]
    if not recs or any(r.states is None for r in recs):
        raise ContractViolation("martingale_residual needs an ensemble run with store_states=True")
    r = kernel.delay_span
    n = recs[0].states.shape[1] - 1
    proj = spectral.projector(n)
    pt = np.asarray(spectral.Psi_tilde)
    eps = float(spec.epsilon)
    longest = max(recs, key=lambda x: x.times.size).times
    M = np.empty((len(recs), longest.size))
    for i, rec in enumerate(recs):
        S = rec.states
        z = S @ proj.weights.T
        h = 0.5 * np.sum(z * z, axis=1)
        E = z @ pt
        gen = np.zeros(S.shape[0])
        if eps > 0:
            gen = gen + _poly_on_states(spec.G, r, S) * E
            if spec.multiplicative:
                idx, w = sparse_weights(spec.noise.L1, n)
                F = S[:, idx] @ w
            else:
                F = np.full(S.shape[0], spec.noise.sigma)
            gen = gen + 0.5 * F * F * float(pt @ pt)
            if spec.G_q is not None:
                gen = gen + _poly_on_states(spec.G_q, r, S) * E / eps
        t = rec.times
        integral = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (gen[1:] + gen[:-1]))])
        m = h - h[0] - integral
        M[i, : m.size] = m
        M[i, m.size :] = m[-1]
    mean = M.mean(axis=0)
    se = M.std(axis=0, ddof=1) / math.sqrt(M.shape[0]) if M.shape[0] > 1 else np.zeros_like(mean)
    return longest, mean, se


def stable_integral(record):
    """``int_0^{T ^ e} |(I - pi) X_s| ds`` on the slow clock (trapezoid)."""
    t, s = record.times, record.stable_norm
    return float(np.sum(0.5 * np.diff(t) * (s[1:] + s[:-1])))


@dataclass
class ScalingTable:
    eps: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    slope: float

    def csv(self):
        lines = ["eps,mean_integral,stderr"]
        for e, m, s in zip(self.eps, self.mean, self.stderr):
            lines.append(f"{e:.17g},{m:.17g},{s:.17g}")
        lines.append(f"# slope={self.slope:.17g}")
        return "\n".join(lines) + "\n"


def stable_projection_scaling(
    spec,
    kernel,
    spectral,
    eps_list,
    T_end_slow,
    seed=0,
    n_paths=16,
    init=None,
    H_star=math.inf,
    threads=None,
    backend=None,
):
    """Mean slow-time integral of the stable component for each ``eps``.

    Returns a :class:`ScalingTable` whose ``slope`` is the least-squares
    slope of ``log mean`` against ``log eps``.
    """
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 3:
        raise ContractViolation("need at least three epsilon values")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ContractViolation("eps_list must be decreasing")
    if init is None:
        init = initial_segment(spectral, 0.72)
    means, ses = [], []
    for eps in eps_list:
        ens = run_ensemble(
            init, spec.with_epsilon(eps), kernel, spectral, T_end_slow, H_star,
            base_seed=seed, n_samples=n_paths, threads=threads, backend=backend,
        )  # fmt: skip
        vals = np.array([stable_integral(r) for r in ens if r.status != "blowup"])
        means.append(vals.mean())
        ses.append(vals.std(ddof=1) / math.sqrt(vals.size) if vals.size > 1 else 0.0)
    means = np.array(means)
    slope = float(np.polyfit(np.log(eps_list), np.log(means), 1)[0])
    return ScalingTable(np.array(eps_list), means, np.array(ses), slope)


# ---------------------------------------------------------------- export


def ensemble_csv(ensemble):
    lines = ["id,t,hbar,stable_norm"]
    for i, rec in enumerate(ensemble):
        for t, h, s in zip(rec.times, rec.hbar, rec.stable_norm):
            lines.append(f"{i},{t:.17g},{h:.17g},{s:.17g}")
    return "\n".join(lines) + "\n"


def exit_csv(ensemble):
    lines = ["id,seed,exit_time,status"]
    for i, rec in enumerate(ensemble):
        et = "" if rec.exit_time is None else f"{rec.exit_time:.17g}"
        lines.append(f"{i},{rec.seed},{et},{rec.status}")
    return "\n".join(lines) + "\n"
