"""Averaged coefficients of the one-dimensional amplitude equation.

Every average runs over one period of the critical rotation, along
``zeta_s = Phi exp(B s) z0`` with the representative ``z0 = (sqrt(2 hbar), 0)``.
On the delayed points this is ``zeta_s(theta) = sqrt(2 hbar) cos(w (theta + s))``
when ``z0`` lies on the first axis.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

from .dde_core.quad import gauss_legendre, periodic_nodes
from .dde_core.spectral import rotation_matrix
from .errors import (
    DegenerateDiffusionError,
    GqConditionError,
    GqConditionNotChecked,
    HorizonTooSmall,
    UndefinedRotation,
)

N_NODES = 64


# ---------------------------------------------------------------- helpers


def _orbit(spectral, z0, s):
    """Coordinates ``exp(B s) z0`` for an array of times, shape ``(2, len(s))``."""
    w = spectral.omega_c
    c, sn = np.cos(w * s), np.sin(w * s)
    return np.stack([c * z0[0] + sn * z0[1], -sn * z0[0] + c * z0[1]])


def _delayed(spectral, poly, coords):
    """Values ``Phi(tau_j) . coords`` at the polynomial's delays, shape ``(m, ...)``."""
    if not poly.delays:
        return np.zeros((0,) + coords.shape[1:])
    phi = spectral.Phi(np.array(poly.delays))  # (2, m)
    return np.tensordot(phi.T, coords, axes=(1, 0))


def _representative(spectral, hbar, phase=0.0):
    z0 = np.array([math.sqrt(2.0 * hbar), 0.0])
    return rotation_matrix(spectral.omega_c, phase) @ z0


# ---------------------------------------------------------------- model


@dataclass
class AveragedModel:
    """Reduced SDE ``dh = b_H(h) dt + sqrt(sigma2_H(h)) dW`` on ``(H_lower, H_star)``.

    The drift is ``b0 + b1 h + spline(h)`` and the squared diffusion
    ``s1 h + s2 h^2``; the spline carries every contribution that is not
    affine (cubic and quadratic perturbations) tabulated on ``nodes``.
    """

    b0: float
    b1: float
    s1: float
    s2: float
    H_star: float
    H_lower: float = 0.0
    nodes: np.ndarray = None
    extra: np.ndarray = None
    kappa_b: Optional[float] = None
    kappa_d: Optional[float] = None
    multiplicative: bool = False
    components: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.nodes is None:
            self.nodes = np.linspace(0.0, self.H_star, N_NODES)
        if self.extra is None:
            self.extra = np.zeros_like(self.nodes)
        self._spline = CubicSpline(self.nodes, self.extra) if np.any(self.extra) else None

    @property
    def spline_coeffs(self):
        """``(4, m)`` coefficients on the uniform nodes (empty when zero)."""
        if self._spline is None:
            return np.zeros((4, 0))
        return np.ascontiguousarray(self._spline.c)

    def b_H(self, hbar):
        hbar = np.asarray(hbar, dtype=float)
        out = self.b0 + self.b1 * hbar
        if self._spline is not None:
            out = out + self._spline(hbar)
        return out

    def sigma2_H(self, hbar):
        hbar = np.asarray(hbar, dtype=float)
        return self.s1 * hbar + self.s2 * hbar * hbar

    def table(self, hbar=None):
        """Rows ``(hbar, b_H, sigma2_H, b1, b2, bq1, bq2)``."""
        hbar = self.nodes if hbar is None else np.asarray(hbar, dtype=float)
        cols = [hbar, self.b_H(hbar), self.sigma2_H(hbar)]
        for name in ("b1", "b2", "bq1", "bq2"):
            comp = self.components.get(name)
            cols.append(np.zeros_like(hbar) if comp is None else comp(hbar))
        return np.stack(cols, axis=1)

    def csv(self):
        lines = []
        if self.kappa_b is not None:
            lines.append(f"# kappa_b={self.kappa_b:.17g}")
            lines.append(f"# kappa_d={self.kappa_d:.17g}")
            lines.append(f"# residual_2kb_minus_kd={2 * self.kappa_b - self.kappa_d:.17g}")
        lines.append("hbar,b_H,sigma2_H,b1,b2,bq1,bq2")
        for row in self.table():
            lines.append(",".join(f"{v:.17g}" for v in row))
        return "\n".join(lines) + "\n"


def _spline_component(nodes, values):
    if not np.any(values):
        return lambda h: np.zeros_like(np.asarray(h, dtype=float))
    spl = CubicSpline(nodes, values)
    return lambda h: spl(np.asarray(h, dtype=float))


# ---------------------------------------------------------------- additive


def cubic_drift(G, spectral, hbar, n_quad=256, phase=0.0):
    """Period average of ``G(zeta_s) E(zeta_s)`` with ``E = Psi~ . z``."""
    if G is None or G.is_zero():
        return 0.0
    s = periodic_nodes(spectral.period, n_quad)
    coords = _orbit(spectral, _representative(spectral, hbar, phase), s)
    E = np.asarray(spectral.Psi_tilde) @ coords
    return float(np.mean(G(_delayed(spectral, G, coords)) * E))


def average_additive(
    spec,
    kernel,
    spectral,
    n_quad=256,
    H_star=1.5,
    gq_check=None,
    with_q2=True,
):
    """Averaged model for additive noise.

    ``kappa_b = sigma^2 |Psi~|^2 / 2`` and ``sigma2_H = kappa_d hbar`` come from
    periodic-trapezoid averages with ``n_quad`` nodes; the cubic and quadratic
    drifts are tabulated on 64 uniform nodes over ``[0, H_star]``.

    Parameters
    ----------
    spec : PerturbationSpec
        Additive noise.
    gq_check : GqCheck, optional
        Result of :func:`check_gq_condition`; computed here when omitted.
    """
    if n_quad < 64:
        raise ValueError("n_quad must be at least 64")
    sigma = float(spec.noise.sigma)
    pt = np.asarray(spectral.Psi_tilde)
    s = periodic_nodes(spectral.period, n_quad)
    unit = _orbit(spectral, np.array([math.sqrt(2.0), 0.0]), s)  # hbar = 1
    E = pt @ unit
    kappa_b = float(np.mean(0.5 * sigma**2 * np.full(s.size, pt @ pt)))
    kappa_d = float(np.mean(sigma**2 * E * E))
    nodes = np.linspace(0.0, H_star, N_NODES)
    b2 = np.array([cubic_drift(spec.G, spectral, h, n_quad) for h in nodes])
    bq1 = np.zeros_like(nodes)
    bq2 = np.zeros_like(nodes)
    meta = {}
    if spec.G_q is not None and not spec.G_q.is_zero():
        check = gq_check if gq_check is not None else check_gq_condition(spec.G_q, spectral)
        if not check.passed:
            raise GqConditionError(check.violation, check.threshold)
        bq1 = np.array([drift_q1(spec.G_q, spectral, h, check) for h in nodes])
        if with_q2:
            bq2 = np.array([drift_q2(spec.G_q, spectral, kernel, h, n_quad=n_quad) for h in nodes])
        meta["gq_violation"] = check.violation
    comps = {
        "b1": lambda h: np.full_like(np.asarray(h, dtype=float), kappa_b),
        "b2": _spline_component(nodes, b2),
        "bq1": _spline_component(nodes, bq1),
        "bq2": _spline_component(nodes, bq2),
    }
    return AveragedModel(
        b0=kappa_b,
        b1=0.0,
        s1=kappa_d,
        s2=0.0,
        H_star=H_star,
        H_lower=0.0,
        nodes=nodes,
        extra=b2 + bq1 + bq2,
        kappa_b=kappa_b,
        kappa_d=kappa_d,
        components=comps,
        meta=meta,
    )


# ---------------------------------------------------------------- quadratic terms


@dataclass(frozen=True)
class GqCheck:
    violation: float
    threshold: float
    passed: bool
    hbar_list: tuple = ()


def check_gq_condition(G_q, spectral, hbar_list=(0.25, 0.5, 1.0), n_quad=256):
    """Zero-average condition ``int_0^T G_q(T(s) eta) exp(-B s) Psi~ ds = 0``.

    Evaluated for eight rotated representatives per amplitude; passes when the
    largest norm is below ``1e-8 T |Psi~|``.
    """
    pt = np.asarray(spectral.Psi_tilde)
    period = spectral.period
    threshold = 1e-8 * period * float(np.linalg.norm(pt))
    if G_q is None or G_q.is_zero():
        return GqCheck(0.0, threshold, True, tuple(hbar_list))
    s = periodic_nodes(period, n_quad)
    w = spectral.omega_c
    # exp(-B s) Psi~
    back = np.stack([np.cos(w * s) * pt[0] - np.sin(w * s) * pt[1],
                     np.sin(w * s) * pt[0] + np.cos(w * s) * pt[1]])  # fmt: skip
    worst = 0.0
    for h in hbar_list:
        for k in range(8):
            z = _representative(spectral, h, k * period / 8.0)
            g = G_q(_delayed(spectral, G_q, _orbit(spectral, z, s)))
            vec = period * np.mean(g * back, axis=1)
            worst = max(worst, float(np.linalg.norm(vec)))
    return GqCheck(worst, threshold, worst < threshold, tuple(hbar_list))


def rotation_time(z, omega_c):
    """Time ``t in [0, T)`` with ``exp(B t) z = |z| (1, 0)``."""
    z = np.asarray(z, dtype=float)
    if not np.any(z):
        raise UndefinedRotation("rotation time is undefined at z = 0")
    period = 2.0 * math.pi / omega_c
    t = (math.atan2(z[1], z[0]) % (2.0 * math.pi)) / omega_c
    return 0.0 if t >= period else t


def _phi_derivative(G_q, spectral, coords, direction):
    """``(xi . grad) [G_q E]`` at ``Phi coords`` with ``xi = Phi direction``."""
    pt = np.asarray(spectral.Psi_tilde)
    vals = _delayed(spectral, G_q, coords)
    dirs = _delayed(spectral, G_q, direction)
    grad = G_q.gradient(vals)
    return np.sum(grad * dirs, axis=0) * (pt @ coords) + G_q(vals) * (pt @ direction)


def drift_q1(G_q, spectral, hbar, check, n_quad=64, phase=0.0):
    """First quadratic-drift correction.

    ``b = -(1/T) int_0^T G_q(zeta_u) a1(z_u) du`` with
    ``a1(z) = -int_0^{tau(z)} (xi_s . grad) phi(zeta_s) ds``,
    ``phi = G_q E`` and ``xi_s = Phi exp(B s) Psi~``.

    ``a1`` jumps where the rotation time wraps, so both integrals use
    Gauss-Legendre on the open interval rather than the periodic trapezoid.

    Raises
    ------
    GqConditionNotChecked
        ``check`` is not a passing :class:`GqCheck`.
    """
    if not isinstance(check, GqCheck):
        raise GqConditionNotChecked("run check_gq_condition before drift_q1")
    if not check.passed:
        raise GqConditionError(check.violation, check.threshold)
    if G_q is None or G_q.is_zero() or hbar == 0.0:
        return 0.0
    period = spectral.period
    pt = np.asarray(spectral.Psi_tilde)
    z0 = _representative(spectral, hbar, phase)
    tau0 = rotation_time(z0, spectral.omega_c)
    u, wu = gauss_legendre(0.0, period, n_quad)
    x, wx = gauss_legendre(0.0, 1.0, n_quad)
    total = 0.0
    for ui, wi in zip(u, wu):
        zu = _orbit(spectral, z0, np.array([ui]))[:, 0]
        tau = (tau0 - ui) % period
        if tau == 0.0:
            continue
        s = tau * x
        coords = _orbit(spectral, zu, s)
        direction = _orbit(spectral, pt, s)
        a1 = -tau * float(wx @ _phi_derivative(G_q, spectral, coords, direction))
        gq_u = float(G_q(_delayed(spectral, G_q, zu[:, None]))[0])
        total += wi * gq_u * a1
    return -total / period


def _x_stable_at(spectral, t):
    """Stable solution at times ``t``; nodes at exactly 0 get the jump midpoint."""
    pt = np.asarray(spectral.Psi_tilde)
    w = spectral.omega_c
    t = np.asarray(t, dtype=float)
    hist = -(np.cos(w * t) * pt[0] + np.sin(w * t) * pt[1])
    table = np.interp(t, spectral.h_times, spectral.h_values)
    tol = 1e-9 * (spectral.h_times[1] - spectral.h_times[0])
    mid = 0.5 * (-pt[0] + spectral.h_values[0])
    return np.where(np.abs(t) <= tol, mid, np.where(t < 0.0, hist, table))


def default_s_max(spectral):
    return math.log(spectral.K_bound / 1e-8) / spectral.kappa


def drift_q2(G_q, spectral, kernel, hbar, s_max=None, n_quad=256, phase=0.0, return_bound=False):
    """Second quadratic-drift correction through the stable fundamental solution.

    ``b = (1/T) int_0^T G_q(zeta_u) a_q(zeta_u) du`` with
    ``a_q(zeta) = int_0^{s_max} sum_k d_k G_q(zeta_s) x(s + tau_k) E(zeta_s) ds``.
    The outer average is the periodic trapezoid with ``n_quad`` nodes, the inner
    integral the trapezoid on the grid of the tabulated ``h``.

    Returns
    -------
    float, or (float, float) with ``return_bound``
        The drift and the bound on the truncation error of the inner integral.

    Raises
    ------
    HorizonTooSmall
        ``s_max`` beyond the tabulated horizon.
    """
    if spectral.h_times is None:
        raise HorizonTooSmall("spectral data has no stable fundamental table")
    s_max = default_s_max(spectral) if s_max is None else float(s_max)
    if s_max > spectral.t_max + 1e-12:
        raise HorizonTooSmall(f"s_max={s_max:.6g} beyond tabulated horizon {spectral.t_max:.6g}")
    if G_q is None or G_q.is_zero() or hbar == 0.0:
        return (0.0, 0.0) if return_bound else 0.0
    pt = np.asarray(spectral.Psi_tilde)
    dt = spectral.h_times[1] - spectral.h_times[0]
    m = int(math.floor(s_max / dt + 1e-9))
    s = np.arange(m + 1) * dt
    ws = np.full(m + 1, dt)
    ws[0] = ws[-1] = 0.5 * dt
    tail = s_max - s[-1]
    if tail > 1e-12:
        s = np.append(s, s_max)
        ws[-1] += 0.5 * tail
        ws = np.append(ws, 0.5 * tail)
    taus = np.array(G_q.delays)
    xs = _x_stable_at(spectral, s[None, :] + taus[:, None])  # (m, S)
    z0 = _representative(spectral, hbar, phase)
    u = periodic_nodes(spectral.period, n_quad)
    total = 0.0
    envelope = 0.0
    for ui in u:
        coords = _orbit(spectral, z0, ui + s)  # (2, S)
        vals = _delayed(spectral, G_q, coords)
        grad = G_q.gradient(vals)
        E = pt @ coords
        integrand = np.sum(grad * xs, axis=0) * E
        a_q = float(ws @ integrand)
        gq_u = float(G_q(_delayed(spectral, G_q, coords[:, :1]))[0])
        total += gq_u * a_q
        envelope = max(envelope, abs(gq_u) * float(np.max(np.sum(np.abs(grad), axis=0) * np.abs(E))))
    value = total / u.size
    if return_bound:
        bound = envelope * spectral.K_bound * math.exp(-spectral.kappa * s_max) / spectral.kappa
        return value, bound
    return value


# ---------------------------------------------------------------- multiplicative


def kernel_on_basis(L1, spectral):
    """``L1 Phi = (L1 Phi_1, L1 Phi_2)`` with the closed-form basis."""
    out = np.zeros(2)
    for loc, w in L1.atoms:
        out += w * spectral.Phi(np.array([loc]))[:, 0]
    for a, b, c in L1.density_pieces:
        x, wq = gauss_legendre(a, b, 64)
        out += c * (spectral.Phi(x) @ wq)
    return out


def average_multiplicative(L1, spectral, n_quad=256, domain=None, G=None):
    """Averaged model for the linear multiplicative noise ``F = L1``.

    ``b_H = A B hbar / 2`` and ``sigma2_H = (A B / 2 + c^2) hbar^2`` with
    ``A = |Psi~|^2``, ``B = |L1 Phi|^2`` and ``c = Psi~ . L1 Phi``; both are
    cross-checked against the period averages of ``F^2 |Psi~|^2 / 2`` and
    ``F^2 E^2``.

    Parameters
    ----------
    domain : (H_lower, H_star), optional
        When given, ``sigma2_H`` must be bounded away from zero on it.

    Raises
    ------
    DegenerateDiffusionError
        ``sigma2_H`` vanishes somewhere on ``domain``.
    """
    pt = np.asarray(spectral.Psi_tilde)
    l1phi = kernel_on_basis(L1, spectral)
    A = float(pt @ pt)
    B = float(l1phi @ l1phi)
    c = float(pt @ l1phi)
    cb = 0.5 * A * B
    cd = 0.5 * A * B + c * c
    s = periodic_nodes(spectral.period, n_quad)
    coords = _orbit(spectral, np.array([math.sqrt(2.0), 0.0]), s)
    F = l1phi @ coords
    E = pt @ coords
    cb_q = float(np.mean(0.5 * F * F * A))
    cd_q = float(np.mean(F * F * E * E))
    mismatch = max(abs(cb - cb_q), abs(cd - cd_q))
    if mismatch > 1e-8 * max(1.0, abs(cb), abs(cd)):
        raise AssertionError(f"closed form and quadrature disagree by {mismatch:.3e}")
    H_lower, H_star = (0.0, 1.5) if domain is None else (float(domain[0]), float(domain[1]))
    if domain is not None:
        floor = cd * H_lower * H_lower
        if not floor > 0.0:
            raise DegenerateDiffusionError(
                f"sigma2_H(H_lower) = {floor:.3e}; the diffusion degenerates on the domain"
            )
    nodes = np.linspace(0.0, H_star, N_NODES)
    b2 = np.array([cubic_drift(G, spectral, h, n_quad) for h in nodes]) if G is not None else np.zeros_like(nodes)
    comps = {
        "b1": lambda h: cb * np.asarray(h, dtype=float),
        "b2": _spline_component(nodes, b2),
    }
    return AveragedModel(
        b0=0.0,
        b1=cb,
        s1=0.0,
        s2=cd,
        H_star=H_star,
        H_lower=H_lower,
        nodes=nodes,
        extra=b2,
        multiplicative=True,
        components=comps,
        meta={"L1Phi": l1phi, "Psi_dot_L1Phi": c, "norm2_Psi": A, "norm2_L1Phi": B},
    )


@dataclass(frozen=True)
class LyapunovAvg:
    lambda_avg: float
    alignment: float
    stable: bool


def lyapunov_avg(model):
    """Growth rate of ``log hbar`` for the multiplicative model.

    ``lambda = A B (1 - 2 rho^2) / 4`` with the alignment
    ``rho = |Psi~ . L1 Phi| / (|Psi~| |L1 Phi|)``; stable iff ``rho > 1/sqrt 2``.
    """
    if not model.multiplicative:
        raise ValueError("lyapunov_avg needs a multiplicative model")
    A = model.meta["norm2_Psi"]
    B = model.meta["norm2_L1Phi"]
    c = model.meta["Psi_dot_L1Phi"]
    rho = abs(c) / math.sqrt(A * B) if A * B > 0 else 0.0
    lam = 0.25 * A * B * (1.0 - 2.0 * rho * rho)
    return LyapunovAvg(lam, rho, rho > 1.0 / math.sqrt(2.0))


# ---------------------------------------------------------------- comparison bound


def seam_theta(delta, alpha, eps):
    """Comparison exponent ``theta(delta, alpha)`` for the multiplicative example."""
    if np.any(np.asarray(alpha) <= 0):
        raise ValueError("alpha must be positive")
    first = delta + 0.5 * alpha * (math.pi / 2.0) ** 2 * np.exp(2.0 * delta) + 0.5 / alpha
    second = 0.5 * alpha * eps * eps * np.exp(2.0 * np.maximum(delta, 0.0))
    return -delta + np.maximum(first, second)


def seam_theta_infimum(eps, n_grid=400, delta_range=(-5.0, 5.0), log_alpha_range=(-10.0, 10.0)):
    """Grid search over ``(delta, log alpha)`` polished by coordinate descent.

    Returns
    -------
    (theta_min, delta, alpha)
    """
    d = np.linspace(*delta_range, n_grid)
    la = np.linspace(*log_alpha_range, n_grid)
    D, LA = np.meshgrid(d, la, indexing="ij")
    vals = seam_theta(D, np.exp(LA), eps)
    i, j = np.unravel_index(np.argmin(vals), vals.shape)
    delta, log_a = float(d[i]), float(la[j])
    hd = d[1] - d[0]
    ha = la[1] - la[0]
    best = float(vals[i, j])
    for _ in range(50):
        res = minimize_scalar(
            lambda x: float(seam_theta(x, math.exp(log_a), eps)),
            bounds=(max(delta - hd, delta_range[0]), min(delta + hd, delta_range[1])),
            method="bounded",
            options={"xatol": 1e-12},
        )
        delta = float(res.x)
        res = minimize_scalar(
            lambda x: float(seam_theta(delta, math.exp(x), eps)),
            bounds=(max(log_a - ha, log_alpha_range[0]), min(log_a + ha, log_alpha_range[1])),
            method="bounded",
            options={"xatol": 1e-12},
        )
        log_a = float(res.x)
        if best - res.fun < 1e-14:
            best = min(best, float(res.fun))
            break
        best = float(res.fun)
    return best, delta, math.exp(log_a)

