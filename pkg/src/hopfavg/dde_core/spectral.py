"""Critical eigenbasis, adjoint basis and spectral projection.

The critical space is spanned by ``Phi = (cos(w .), sin(w .))`` on ``[-r, 0]``;
the adjoint basis ``Psi`` lives on ``[0, r]`` and is normalised through the
bilinear form

    <phi, psi> = phi(0) psi(0) + int_{-r}^0 phi(u) g(u) du,
    g(u) = int_{[-r, u]} psi(u - theta) dmu(theta).
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ..errors import ContractViolation, DegenerateEigenvalueError
from .kernel import MeasureKernel, Segment, check_span
from .quad import adaptive_simpson, gauss_legendre

_GL_INNER = 24
_GL_CELL = 8


def trig_basis(omega, x):
    """``(cos(omega x), sin(omega x))`` stacked along a new leading axis."""
    x = np.asarray(x, dtype=float)
    return np.stack([np.cos(omega * x), np.sin(omega * x)])


def rotation_matrix(omega, t):
    """``exp(B t)`` for ``B = [[0, omega], [-omega, 0]]``."""
    c, s = math.cos(omega * t), math.sin(omega * t)
    return np.array([[c, s], [-s, c]])


def bilinear_form_exact(kernel, phi, psi, tol=1e-12):
    """Bilinear form for scalar callables, inner integrals by adaptive Simpson.

    Atom contributions ``alpha int_theta^0 phi(u) psi(u - theta) du`` use
    adaptive Simpson at ``tol``.  Density pieces need a double integral; the
    outer one is adaptive Simpson, the inner one a Gauss-Legendre rule that is
    exact to rounding for the trigonometric integrands used here.
    """
    total = float(phi(0.0)) * float(psi(0.0))
    for loc, w in kernel.atoms:
        if loc == 0.0 or w == 0.0:
            continue
        total += w * adaptive_simpson(lambda u, t=loc: phi(u) * psi(u - t), loc, 0.0, tol)
    for a, b, c in kernel.density_pieces:
        if c == 0.0:
            continue

        def inner(theta):
            if theta >= 0.0:
                return 0.0
            x, wq = gauss_legendre(theta, 0.0, _GL_INNER)
            return float(np.sum(wq * phi(x) * psi(x - theta)))

        total += c * adaptive_simpson(inner, a, b, tol)
    return total


def _breakpoints(kernel, n):
    r = kernel.delay_span
    pts = list(np.linspace(-r, 0.0, n + 1))
    for loc, _ in kernel.atoms:
        pts.append(loc)
    for a, b, _ in kernel.density_pieces:
        pts.extend((a, b))
    pts = np.unique(np.clip(np.array(pts), -r, 0.0))
    keep = np.concatenate([[True], np.diff(pts) > 1e-13 * r])
    return pts[keep]


def _g_values(kernel, psi, u):
    """``g(u)`` for a vectorised ``psi`` returning shape ``(m, len(u))``."""
    out = None
    for loc, w in kernel.atoms:
        # u >= loc; nodes never sit on loc because cells are split there
        term = w * psi(u - loc) * (u > loc)
        out = term if out is None else out + term
    for a, b, c in kernel.density_pieces:
        hi = np.minimum(u, b)
        span = np.maximum(hi - a, 0.0)
        x, wq = _unit_gl(_GL_INNER)
        theta = a + span[:, None] * x[None, :]
        vals = psi((u[:, None] - theta).ravel()).reshape(-1, u.size, x.size)
        term = c * np.sum(vals * wq, axis=-1) * span
        out = term if out is None else out + term
    if out is None:
        probe = np.asarray(psi(np.zeros(1)))
        out = np.zeros(probe.shape[:-1] + (u.size,))
    return out


@lru_cache(maxsize=8)
def _unit_gl(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def pairing_weights(kernel, psi, n):
    """Weights ``W`` (shape ``(m, n + 1)``) with ``<seg, psi_j> = W[j] @ seg.values``.

    ``psi`` maps an array of ``s in [0, r]`` to an ``(m, len(s))`` array.  The
    integral of the piecewise-linear interpolant of the segment against ``g``
    is computed cell by cell, each cell split at atom locations and density
    endpoints so that jumps of ``g`` never fall inside a quadrature panel.
    """
    r = kernel.delay_span
    step = r / n
    pts = _breakpoints(kernel, n)
    p, q = pts[:-1], pts[1:]
    x, wq = _unit_gl(_GL_CELL)
    u = (p[:, None] + (q - p)[:, None] * x[None, :]).ravel()
    wu = ((q - p)[:, None] * wq[None, :]).ravel()
    g = np.atleast_2d(_g_values(kernel, psi, u))
    m = g.shape[0]
    pos = (u + r) / step
    k = np.clip(np.floor(pos).astype(int), 0, n - 1)
    frac = pos - k
    W = np.zeros((m, n + 1))
    for j in range(m):
        gw = g[j] * wu
        np.add.at(W[j], k, gw * (1.0 - frac))
        np.add.at(W[j], k + 1, gw * frac)
    psi0 = np.atleast_1d(np.asarray(psi(np.zeros(1)))[..., 0])
    W[:, n] += psi0
    return W


def bilinear_form(kernel, phi, psi):
    """``<phi, psi>`` for a :class:`Segment` ``phi`` and scalar callable ``psi``.

    Parameters
    ----------
    kernel : MeasureKernel
    phi : Segment
        Sampled history, span must match the kernel.
    psi : callable
        Vectorised function on ``[0, r]``.
    """
    check_span(kernel, phi)

    def psi2(s):
        return np.atleast_2d(psi(s))

    return float(pairing_weights(kernel, psi2, phi.n)[0] @ phi.values)


def build_adjoint_basis(kernel, omega_c):
    """Coefficients of the adjoint basis in the ``(cos, sin)`` system.

    Returns
    -------
    Psi_coeffs : ndarray, shape (2, 2)
        Row ``j`` holds ``(p, q)`` with ``psi_j(s) = p cos(w s) + q sin(w s)``.
    Psi_tilde : ndarray, shape (2,)
        ``Psi(0)``.
    """
    w = float(omega_c)
    phis = (lambda x: np.cos(w * x), lambda x: np.sin(w * x))
    es = phis
    gram = np.array(
        [[bilinear_form_exact(kernel, phis[i], es[k]) for k in range(2)] for i in range(2)]
    )
    if abs(np.linalg.det(gram)) < 1e-12 * max(1.0, np.abs(gram).max() ** 2):
        raise DegenerateEigenvalueError(f"singular Gram matrix {gram.tolist()}")
    coeffs = np.linalg.inv(gram).T
    return coeffs, coeffs[:, 0].copy()


class GridProjector:
    """Spectral projection for segments on an ``n``-cell grid.

    The raw pairing weights are calibrated so that the sampled critical basis
    is reproduced exactly (``W @ Phi_grid = I``); this makes the discrete
    projection idempotent to rounding while changing each weight by only the
    interpolation error of the grid.
    """

    def __init__(self, kernel, omega_c, psi_coeffs, n):
        self.n = int(n)
        self.delay_span = kernel.delay_span
        theta = np.linspace(-kernel.delay_span, 0.0, self.n + 1)
        theta[-1] = 0.0
        self.theta = theta
        self.phi_grid = trig_basis(omega_c, theta).T  # (n + 1, 2)
        coeffs = np.asarray(psi_coeffs)

        def psi(s):
            return coeffs @ trig_basis(omega_c, s)

        raw = pairing_weights(kernel, psi, self.n)
        gram = raw @ self.phi_grid
        self.raw_weights = raw
        self.calibration = gram
        self.weights = np.linalg.solve(gram, raw)
        self.weights.setflags(write=False)

    def coords(self, values):
        return np.asarray(values) @ self.weights.T if np.ndim(values) > 1 else self.weights @ values

    def project(self, values):
        return self.phi_grid @ self.coords(values)

    def complement(self, values):
        return np.asarray(values) - self.project(values)


@dataclass
class SpectralData:
    """Critical spectral data of a kernel.

    Attributes
    ----------
    omega_c : float
    Psi_coeffs : ndarray (2, 2)
    Psi_tilde : ndarray (2,)
    kappa : float
        Decay margin of the non-critical spectrum.
    K_bound : float
        ``max_t |h(t)| exp(kappa t)`` over the tabulated trace.
    h_times, h_values : ndarray
        Stable fundamental trace ``h`` on ``[0, t_max]``.
    x_times, x_values : ndarray
        Same solution on ``[-r, t_max]`` including the initial history.
    """

    kernel: MeasureKernel
    omega_c: float
    Psi_coeffs: np.ndarray
    Psi_tilde: np.ndarray
    kappa: float
    K_bound: float = float("nan")
    h_times: np.ndarray = None
    h_values: np.ndarray = None
    x_times: np.ndarray = None
    x_values: np.ndarray = None
    duality_residual: float = float("nan")
    roots: tuple = ()
    _projectors: dict = field(default_factory=dict, repr=False)

    @property
    def period(self):
        return 2.0 * math.pi / self.omega_c

    @property
    def B(self):
        return np.array([[0.0, self.omega_c], [-self.omega_c, 0.0]])

    @property
    def delay_span(self):
        return self.kernel.delay_span

    @property
    def t_max(self):
        return float(self.h_times[-1]) if self.h_times is not None else float("nan")

    def Phi(self, theta):
        return trig_basis(self.omega_c, theta)

    def Psi(self, s):
        return self.Psi_coeffs @ trig_basis(self.omega_c, s)

    def rotation(self, t):
        return rotation_matrix(self.omega_c, t)

    def projector(self, n):
        n = int(n)
        if n not in self._projectors:
            self._projectors[n] = GridProjector(self.kernel, self.omega_c, self.Psi_coeffs, n)
        return self._projectors[n]

    def x_stable(self, t):
        """Interpolated stable solution ``x(t)`` (right-continuous at 0)."""
        return np.interp(t, self.x_times[self.x_times.size - self.h_times.size :], self.h_values)

    def h_csv(self):
        lines = ["t,h"]
        lines += [f"{t:.17g},{h:.17g}" for t, h in zip(self.h_times, self.h_values)]
        return "\n".join(lines) + "\n"


def duality_residual(kernel, omega_c, psi_coeffs):
    """``max |<Phi_i, psi_j> - delta_ij|`` with the exact bilinear form."""
    w = float(omega_c)
    phis = (lambda x: np.cos(w * x), lambda x: np.sin(w * x))
    worst = 0.0
    for i in range(2):
        for j in range(2):
            p, q = psi_coeffs[j]

            def psi(s, p=p, q=q):
                return p * np.cos(w * s) + q * np.sin(w * s)

            val = bilinear_form_exact(kernel, phis[i], psi)
            worst = max(worst, abs(val - (1.0 if i == j else 0.0)))
    return worst


def _projector_for(spec, kernel, seg):
    check_span(kernel, seg)
    if abs(spec.delay_span - seg.delay_span) > 1e-12 * spec.delay_span:
        raise ContractViolation("segment span does not match the spectral data")
    return spec.projector(seg.n)


def project_coords(spec, kernel, seg):
    """Critical coordinates ``z = <seg, Psi>``."""
    return _projector_for(spec, kernel, seg).coords(seg.values)


def project_segment(spec, kernel, seg):
    """``pi seg`` as a :class:`Segment` on the same grid."""
    return Segment(seg.delay_span, _projector_for(spec, kernel, seg).project(seg.values))


def complement_segment(spec, kernel, seg):
    """``(I - pi) seg``."""
    return Segment(seg.delay_span, _projector_for(spec, kernel, seg).complement(seg.values))


def amplitude(spec, kernel, seg):
    """Slow amplitude ``hbar = |z|^2 / 2``."""
    z = project_coords(spec, kernel, seg)
    return 0.5 * float(z @ z)


def critical_segment(spec, z, n):
    """Segment ``Phi z`` on an ``n``-cell grid."""
    theta = np.linspace(-spec.delay_span, 0.0, int(n) + 1)
    theta[-1] = 0.0
    return Segment(spec.delay_span, np.asarray(z, dtype=float) @ spec.Phi(theta))


def build_spectral(
    kernel,
    search_re_min=-5.0,
    search_im_max=None,
    t_max=None,
    dt=None,
    with_fundamental=True,
):
    """Criticality check, adjoint basis and stable fundamental solution.

    Parameters
    ----------
    kernel : MeasureKernel
    search_re_min, search_im_max : float, optional
        Root search strip, see :func:`~hopfavg.dde_core.roots.verify_criticality`.
    t_max, dt : float, optional
        Horizon and step for the stable fundamental solution.  By default the
        step is ``r / 256`` and the horizon ``ln(K / 1e-8) / kappa``.
    with_fundamental : bool
        Skip the ``h`` table when only the projection is needed.
    """
    from .fundamental import stable_fundamental
    from .roots import verify_criticality

    report = verify_criticality(kernel, search_re_min, search_im_max)
    coeffs, psi_tilde = build_adjoint_basis(kernel, report.omega_c)
    spec = SpectralData(
        kernel=kernel,
        omega_c=report.omega_c,
        Psi_coeffs=coeffs,
        Psi_tilde=psi_tilde,
        kappa=report.kappa,
        duality_residual=duality_residual(kernel, report.omega_c, coeffs),
        roots=report.roots,
    )
    if with_fundamental:
        table = stable_fundamental(spec, kernel, t_max=t_max, dt=dt)
        spec.h_times, spec.h_values = table.h_times, table.h_values
        spec.x_times, spec.x_values = table.x_times, table.x_values
        spec.K_bound = table.K_bound
    return spec
