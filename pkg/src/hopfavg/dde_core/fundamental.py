"""Deterministic linear DDE integration and the stable fundamental solution."""

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ContractViolation, HorizonTooSmall
from .quad import gauss_legendre

_GL3_X, _GL3_W = np.polynomial.legendre.leggauss(3)
_GL3_X = 0.5 * (_GL3_X + 1.0)
_GL3_W = 0.5 * _GL3_W


def _hermite(x0, x1, d0, d1, dt, t):
    """Cubic Hermite interpolant on a cell of width ``dt`` at local ``t in [0, 1]``."""
    t2 = t * t
    t3 = t2 * t
    return (
        (2 * t3 - 3 * t2 + 1) * x0
        + (t3 - 2 * t2 + t) * dt * d0
        + (-2 * t3 + 3 * t2) * x1
        + (t3 - t2) * dt * d1
    )


class _Solution:
    """Growing table of ``x`` and ``x'`` on the grid ``t_k = k dt``."""

    def __init__(self, history, x0, dt, n_steps):
        self.history = history
        self.dt = dt
        self.X = np.empty(n_steps + 1)
        # one-sided derivatives: a node can be a breakpoint of x'
        self.D = np.full(n_steps + 1, np.nan)
        self.DL = np.full(n_steps + 1, np.nan)
        self.C = np.zeros(n_steps + 1)  # integral of x over [0, t_k]
        self.X[0] = x0
        self.n = 0  # index of the latest accepted node

    def _cell(self, k, t):
        dt = self.dt
        if k + 1 > self.n or np.isnan(self.DL[k + 1]):
            return self.X[k] + t * (self.X[k + 1] - self.X[k])
        return _hermite(self.X[k], self.X[k + 1], self.D[k], self.DL[k + 1], dt, t)

    def value(self, s):
        """``x(s)`` for ``0 <= s <= t_n``."""
        pos = s / self.dt
        k = min(int(math.floor(pos + 1e-9)), self.n)
        if k >= self.n or abs(pos - round(pos)) < 1e-9:
            return self.X[min(int(round(pos)), self.n)]
        return self._cell(k, pos - k)

    def _partial(self, k, p, q):
        """Integral over local ``[p, q]`` of cell ``k``."""
        if q <= p:
            return 0.0
        t = p + (q - p) * _GL3_X
        return self.dt * (q - p) * float(np.sum(_GL3_W * self._cell(k, t)))

    def integral(self, lo, hi):
        """``int_lo^hi x`` for ``0 <= lo <= hi <= t_n``."""
        if hi <= lo:
            return 0.0
        dt = self.dt
        a, b = lo / dt, hi / dt
        ka = min(int(math.floor(a + 1e-12)), self.n - 1)
        kb = min(int(math.floor(b - 1e-12)), self.n - 1)
        if ka == kb:
            return self._partial(ka, a - ka, b - ka)
        total = self._partial(ka, a - ka, 1.0) + self._partial(kb, 0.0, b - kb)
        total += self.C[kb] - self.C[ka + 1]
        return total

    def accept(self, x_new, d_right, d_left_next):
        """Append ``x(t_{n+1})`` with ``x'(t_n+)`` and ``x'(t_{n+1}-)``."""
        n = self.n
        self.D[n] = d_right
        self.DL[n + 1] = d_left_next
        self.X[n + 1] = x_new
        self.n = n + 1
        dt = self.dt
        self.C[n + 1] = self.C[n] + 0.5 * dt * (self.X[n] + x_new) + dt * dt / 12.0 * (
            d_right - d_left_next
        )


def _history_integral(history, lo, hi, dt):
    if hi <= lo:
        return 0.0
    panels = max(1, int(math.ceil((hi - lo) / dt - 1e-9)))
    edges = np.linspace(lo, hi, panels + 1)
    x, w = gauss_legendre(-1.0, 1.0, 8)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return float(weights @ history(nodes))


def integrate_dde(kernel, history, x0, t_end, dt):
    """Solve ``x' = L x_t`` by RK4 with interpolated delays (method of steps).

    Parameters
    ----------
    kernel : MeasureKernel
    history : callable
        Vectorised initial function on ``[-r, 0]``; ``history(0)`` is the left
        limit at 0 and may differ from ``x0``.
    x0 : float
        ``x(0)``.
    t_end, dt : float
        Horizon and step.  When every delay is a multiple of ``dt`` the jump
        at 0 only ever sits on step boundaries and RK4 keeps its order.

    Returns
    -------
    t : ndarray
        ``k dt`` for ``k = 0..N``.
    x : ndarray
        Solution on ``t``.
    """
    n_steps = int(math.ceil(t_end / dt - 1e-9))
    sol = _Solution(history, float(x0), dt, n_steps)
    atoms = kernel.atoms
    pieces = kernel.density_pieces

    def lookup(s, left_end, xn, tn, ystage, tstage):
        if s < -1e-12 * dt or (abs(s) <= 1e-12 * dt and left_end < -1e-12 * dt):
            return float(history(np.array([min(s, 0.0)]))[0])
        if s <= tn + 1e-12 * dt:
            return sol.value(max(s, 0.0))
        if tstage <= tn:
            return xn
        return xn + (s - tn) / (tstage - tn) * (ystage - xn)

    def integral(lo, hi, xn, tn, ystage, tstage):
        total = _history_integral(history, lo, min(hi, 0.0), dt) if lo < 0.0 else 0.0
        p, q = max(lo, 0.0), min(hi, tn)
        if q > p:
            total += sol.integral(p, q)
        if hi > tn and tstage > tn:
            p = max(lo, tn)
            fp = xn + (p - tn) / (tstage - tn) * (ystage - xn)
            fq = xn + (hi - tn) / (tstage - tn) * (ystage - xn)
            total += 0.5 * (hi - p) * (fp + fq)
        return total

    def rhs(tn, c, xn, ystage):
        t = tn + c * dt
        total = 0.0
        for loc, w in atoms:
            total += w * lookup(t + loc, tn + loc, xn, tn, ystage, t)
        for a, b, cval in pieces:
            total += cval * integral(t + a, t + b, xn, tn, ystage, t)
        return total

    for n in range(n_steps):
        tn = n * dt
        xn = sol.X[n]
        k1 = rhs(tn, 0.0, xn, xn)
        y2 = xn + 0.5 * dt * k1
        k2 = rhs(tn, 0.5, xn, y2)
        y3 = xn + 0.5 * dt * k2
        k3 = rhs(tn, 0.5, xn, y3)
        y4 = xn + dt * k3
        k4 = rhs(tn, 1.0, xn, y4)
        x_new = xn + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        sol.accept(x_new, k1, rhs(tn, 1.0, xn, x_new))
    return np.arange(n_steps + 1) * dt, sol.X.copy()


@dataclass(frozen=True)
class StableTable:
    h_times: np.ndarray
    h_values: np.ndarray
    x_times: np.ndarray
    x_values: np.ndarray
    K_bound: float


def _check_step(r, dt):
    m = r / dt
    if abs(m - round(m)) > 1e-9 * max(1.0, m) or round(m) < 1:
        raise ContractViolation(f"step {dt} does not divide the delay span {r}")
    return int(round(m))


def stable_fundamental(spec, kernel, t_max=None, dt=None):
    """Stable part of the unit pulse, traced at ``theta = 0``.

    Solves the unperturbed equation from ``x(t) = -Phi(t) Psi~`` on
    ``[-r, 0)`` and ``x(0) = 1 - Psi~_1`` and returns ``h(t) = x(t)``.

    Parameters
    ----------
    spec : SpectralData
        Needs ``omega_c``, ``Psi_tilde`` and ``kappa``.
    kernel : MeasureKernel
    t_max : float, optional
        Horizon.  The default is ``ln(K / 1e-8) / kappa``, found by iterating
        on the fitted ``K``.
    dt : float, optional
        Grid step, must divide ``r``.  Defaults to ``r / 256``.

    Raises
    ------
    HorizonTooSmall
        ``|h(t_max)| > 1e-6 |h(0)|``.
    """
    r = kernel.delay_span
    dt = r / 256.0 if dt is None else float(dt)
    m = _check_step(r, dt)
    w = spec.omega_c
    pt = np.asarray(spec.Psi_tilde, dtype=float)
    kappa = spec.kappa

    def history(t):
        return -(np.cos(w * t) * pt[0] + np.sin(w * t) * pt[1])

    x0 = 1.0 - pt[0]
    auto = t_max is None
    horizon = math.log(1e8) / kappa + r if auto else float(t_max)
    for _ in range(8):
        t, x = integrate_dde(kernel, history, x0, horizon, dt)
        K = _fit_K(t, x, kappa)
        if not auto:
            break
        need = math.log(K / 1e-8) / kappa
        if need <= t[-1] + 1e-12:
            break
        horizon = need * 1.05
    if abs(x[-1]) > 1e-6 * abs(x[0]):
        raise HorizonTooSmall(
            f"|h(t_max)| = {abs(x[-1]):.3e} exceeds 1e-6 |h(0)|; increase t_max"
        )
    hist_t = -r + np.arange(m) * dt
    x_times = np.concatenate([hist_t, t])
    x_values = np.concatenate([history(hist_t), x])
    for arr in (t, x, x_times, x_values):
        arr.setflags(write=False)
    return StableTable(t, x, x_times, x_values, K)


def _fit_K(t, h, kappa):
    return float(np.max(np.abs(h) * np.exp(kappa * t)))
