"""Distribution-level comparison of full and reduced dynamics."""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, TrajectoryTooShort

MIN_LYAPUNOV_TIME = 1.0e4


@dataclass(frozen=True)
class EcdfReport:
    """Right-continuous empirical (sub-)distribution function.

    Attributes
    ----------
    values : ndarray
        Sorted finite sample points; censored observations are omitted.
    grid, cdf : ndarray
        Evaluation grid and ``F(grid)``.
    n : int
        Sample size including censored observations, so ``F(+inf) = len(values) / n``.
    """

    values: np.ndarray
    grid: np.ndarray
    cdf: np.ndarray
    n: int

    def __call__(self, x):
        return np.searchsorted(self.values, np.asarray(x, dtype=float), side="right") / self.n

    @property
    def mass(self):
        return self.values.size / self.n


def _clean(sample):
    x = np.asarray(sample, dtype=float).ravel()
    if x.size == 0:
        raise ContractViolation("empty sample")
    if np.isnan(x).any():
        raise ContractViolation("sample contains NaN")
    return x


def ecdf(sample, grid=None):
    """ECDF of ``sample``; ``+inf`` entries count in ``n`` but never jump."""
    x = _clean(sample)
    finite = np.sort(x[np.isfinite(x)])
    if grid is None:
        grid = np.unique(finite)
    grid = np.asarray(grid, dtype=float)
    cdf = np.searchsorted(finite, grid, side="right") / x.size
    return EcdfReport(finite, grid, cdf, int(x.size))


def _as_report(s):
    return s if isinstance(s, EcdfReport) else ecdf(s)


def ks_distance(a, b):
    """Two-sample Kolmogorov-Smirnov distance, exact at the merged jumps.

    ``a`` and ``b`` are samples or :class:`EcdfReport` objects.  Censored
    (``+inf``) observations make the functions sub-distributions and the
    distance is taken between those.
    """
    fa, fb = _as_report(a), _as_report(b)
    pts = np.union1d(fa.values, fb.values)
    if pts.size == 0:
        return 0.0
    return float(np.max(np.abs(fa(pts) - fb(pts))))


def exit_times_of(records, T_end):
    """Exit times with ``+inf`` for trajectories still inside at ``T_end``."""
    out = []
    for r in records:
        if getattr(r, "status", None) == "blowup":
            continue
        t = r.exit_time
        out.append(math.inf if t is None or t > T_end else float(t))
    return np.array(out)


def exit_time_cdf(records, T_end, grid=None):
    """Censored exit-time law on ``[0, T_end]``.

    Non-exited trajectories hold the missing mass, so ``F(T_end)`` is the
    fraction that left before the horizon.
    """
    times = exit_times_of(records, T_end)
    if grid is None:
        grid = np.linspace(0.0, T_end, 201)
    return ecdf(times, grid)


def terminal_cdf(records, grid=None):
    x = np.array([r.terminal for r in records if getattr(r, "status", None) != "blowup"])
    return ecdf(x, grid)


@dataclass(frozen=True)
class CompareReport:
    ks_terminal: float
    ks_exit: float
    terminal_full: EcdfReport
    terminal_reduced: EcdfReport
    exit_full: EcdfReport
    exit_reduced: EcdfReport


def compare_ensembles(full, reduced, T_end, n_grid=201):
    """KS distances for terminal amplitudes and censored exit times."""
    tf, tr = terminal_cdf(full), terminal_cdf(reduced)
    hi = max(tf.values.max(initial=0.0), tr.values.max(initial=0.0))
    grid = np.linspace(0.0, hi, n_grid)
    tf, tr = ecdf(_terminals(full), grid), ecdf(_terminals(reduced), grid)
    ef, er = exit_time_cdf(full, T_end), exit_time_cdf(reduced, T_end)
    return CompareReport(ks_distance(tf, tr), ks_distance(ef, er), tf, tr, ef, er)


def _terminals(records):
    return np.array([r.terminal for r in records if getattr(r, "status", None) != "blowup"])


def cdf_csv(full, reduced, grid=None):
    """Columns ``grid,cdf_full,cdf_reduced`` with 17 significant digits."""
    grid = full.grid if grid is None else np.asarray(grid, dtype=float)
    lines = ["grid,cdf_full,cdf_reduced"]
    for g, a, b in zip(grid, full(grid), reduced(grid)):
        lines.append(f"{g:.17g},{a:.17g},{b:.17g}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- Lyapunov


def sliding_sup(times, values, window):
    """``sup_{s in [t - window, t]} |x(s)|`` at every sample time of a dense path."""
    t = np.asarray(times, dtype=float)
    a = np.abs(np.asarray(values, dtype=float))
    start = np.searchsorted(t, t - window, side="left")
    out = np.empty_like(a)
    # monotone deque over indices
    dq = []
    head = 0
    for i in range(t.size):
        while len(dq) > head and a[dq[-1]] <= a[i]:
            dq.pop()
        dq.append(i)
        while dq[head] < start[i]:
            head += 1
        out[i] = a[dq[head]]
    return out


@dataclass(frozen=True)
class LyapunovCurve:
    times: np.ndarray
    lam: np.ndarray
    summary: float


def lyapunov_estimate(times, sup_abs, min_time=MIN_LYAPUNOV_TIME):
    """``lambda(t) = log(sup |X|) / t`` and its mean over the last decade of time.

    Parameters
    ----------
    times : ndarray
        Physical times, increasing and positive.
    sup_abs : ndarray
        Windowed suprema of ``|X|`` at ``times``.

    Raises
    ------
    TrajectoryTooShort
        The last time is below ``min_time``.
    """
    t = np.asarray(times, dtype=float)
    s = np.asarray(sup_abs, dtype=float)
    if t.size == 0 or t[-1] < min_time:
        last = t[-1] if t.size else 0.0
        raise TrajectoryTooShort(f"trajectory ends at t={last:.6g} < {min_time:.6g}")
    if np.any(t <= 0):
        raise ContractViolation("times must be positive")
    with np.errstate(divide="ignore"):
        lam = np.log(s) / t
    tail = t >= t[-1] / 10.0
    return LyapunovCurve(t, lam, float(np.mean(lam[tail])))


@dataclass(frozen=True)
class LyapunovAggregate:
    times: np.ndarray
    mean: np.ndarray
    min: np.ndarray
    max: np.ndarray
    summaries: np.ndarray

    @property
    def summary(self):
        return float(np.mean(self.summaries))

    def csv(self):
        lines = ["t,mean,min,max"]
        for row in zip(self.times, self.mean, self.min, self.max):
            lines.append(",".join(f"{v:.17g}" for v in row))
        return "\n".join(lines) + "\n"


def aggregate_lyapunov(curves):
    """Pointwise mean, min and max of curves sharing one time grid."""
    if not curves:
        raise ContractViolation("no curves to aggregate")
    t = curves[0].times
    if any(c.times.shape != t.shape or not np.array_equal(c.times, t) for c in curves):
        raise ContractViolation("curves must share a time grid")
    L = np.stack([c.lam for c in curves])
    return LyapunovAggregate(
        t, L.mean(axis=0), L.min(axis=0), L.max(axis=0), np.array([c.summary for c in curves])
    )


# ---------------------------------------------------------------- output


def format_value(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def summary_text(values):
    """Flat ``key=value`` lines in insertion order."""
    return "".join(f"{k}={format_value(v)}\n" for k, v in values.items())
