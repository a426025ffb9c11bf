"""Linear delay kernels and sampled history segments."""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..errors import ContractViolation
from .quad import gauss_legendre, linear_cell_weights

_LOC_TOL = 1e-12


@dataclass(frozen=True)
class MeasureKernel:
    """A bounded linear functional on ``C([-r, 0])`` given as a signed measure.

    ``L(eta) = sum_i w_i eta(theta_i) + sum_j c_j * int_{a_j}^{b_j} eta``.

    Parameters
    ----------
    delay_span : float
        History window length ``r``.
    atoms : tuple of (location, weight)
        Dirac masses, locations in ``[-r, 0]``.
    density_pieces : tuple of (a, b, value)
        Piecewise-constant density ``value`` on ``[a, b]``.
    """

    delay_span: float
    atoms: tuple = ()
    density_pieces: tuple = ()

    def __post_init__(self):
        r = float(self.delay_span)
        if not np.isfinite(r) or r <= 0:
            raise ContractViolation(f"delay_span must be positive, got {self.delay_span}")
        atoms = tuple((float(loc), float(w)) for loc, w in self.atoms)
        pieces = tuple((float(a), float(b), float(c)) for a, b, c in self.density_pieces)
        for loc, w in atoms:
            if not (-r - _LOC_TOL <= loc <= _LOC_TOL) or not np.isfinite(w):
                raise ContractViolation(f"atom ({loc}, {w}) outside [-{r}, 0]")
        for a, b, c in pieces:
            if not (-r - _LOC_TOL <= a < b <= _LOC_TOL) or not np.isfinite(c):
                raise ContractViolation(f"density piece [{a}, {b}] invalid for span {r}")
        ordered = sorted(pieces)
        for (a0, b0, _), (a1, _, _) in zip(ordered, ordered[1:]):
            if a1 < b0 - _LOC_TOL:
                raise ContractViolation("density pieces overlap")
        object.__setattr__(self, "delay_span", r)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "density_pieces", pieces)

    @classmethod
    def zero(cls, delay_span=1.0):
        return cls(delay_span)

    def total_mass(self):
        """``L(1)``."""
        return sum(w for _, w in self.atoms) + sum(c * (b - a) for a, b, c in self.density_pieces)

    def total_variation(self):
        return sum(abs(w) for _, w in self.atoms) + sum(
            abs(c) * (b - a) for a, b, c in self.density_pieces
        )

    def scaled(self, factor):
        return MeasureKernel(
            self.delay_span,
            tuple((loc, factor * w) for loc, w in self.atoms),
            tuple((a, b, factor * c) for a, b, c in self.density_pieces),
        )

    def is_zero(self):
        return all(w == 0 for _, w in self.atoms) and all(c == 0 for *_, c in self.density_pieces)

    def grid_weights(self, n):
        """Weights ``w`` (length ``n + 1``) with ``L(seg) = w @ seg.values``.

        Atoms use linear interpolation; density pieces integrate the
        piecewise-linear interpolant exactly (split at piece endpoints).
        """
        return _grid_weights(self, int(n))

    def apply_function(self, f, n_gauss=64):
        """Apply the functional to a vectorised callable on ``[-r, 0]``."""
        total = 0.0
        for loc, w in self.atoms:
            total = total + w * f(np.float64(loc))
        for a, b, c in self.density_pieces:
            x, wq = gauss_legendre(a, b, n_gauss)
            total = total + c * np.tensordot(wq, f(x), axes=(0, 0))
        return total


@lru_cache(maxsize=256)
def _grid_weights(kernel, n):
    r = kernel.delay_span
    step = r / n
    w = np.zeros(n + 1)
    for loc, weight in kernel.atoms:
        pos = (loc + r) / step
        k = int(np.floor(pos + 1e-9))
        frac = pos - k
        if abs(frac) < 1e-9 or k >= n:
            w[min(k, n)] += weight
        else:
            w[k] += weight * (1.0 - frac)
            w[k + 1] += weight * frac
    for a, b, c in kernel.density_pieces:
        w += c * linear_cell_weights(n, step, -r, a, b)
    w.setflags(write=False)
    return w


class Segment:
    """History function on ``[-r, 0]`` sampled on a uniform grid.

    Values are stored at ``theta_k = -r + k * r / n``, ``k = 0..n``; the last
    entry is ``seg(0)``.  Between nodes the segment is piecewise linear.
    """

    __slots__ = ("delay_span", "values")

    def __init__(self, delay_span, values):
        values = np.array(values, dtype=float)
        if values.ndim != 1 or values.size < 2:
            raise ContractViolation("segment values must be a 1-D array with >= 2 entries")
        values.setflags(write=False)
        self.delay_span = float(delay_span)
        self.values = values

    @classmethod
    def from_function(cls, f, delay_span, n):
        theta = np.linspace(-delay_span, 0.0, int(n) + 1)
        theta[-1] = 0.0
        return cls(delay_span, f(theta))

    @classmethod
    def zeros(cls, delay_span, n):
        return cls(delay_span, np.zeros(int(n) + 1))

    @property
    def n(self):
        return self.values.size - 1

    @property
    def grid_step(self):
        return self.delay_span / self.n

    @property
    def theta(self):
        t = np.linspace(-self.delay_span, 0.0, self.n + 1)
        t[-1] = 0.0
        return t

    def __call__(self, theta):
        return np.interp(theta, self.theta, self.values)

    def __add__(self, other):
        _check_same_grid(self, other)
        return Segment(self.delay_span, self.values + other.values)

    def __sub__(self, other):
        _check_same_grid(self, other)
        return Segment(self.delay_span, self.values - other.values)

    def __mul__(self, scalar):
        return Segment(self.delay_span, self.values * float(scalar))

    __rmul__ = __mul__

    def sup_norm(self):
        return float(np.max(np.abs(self.values)))

    def __repr__(self):
        return f"Segment(delay_span={self.delay_span}, n={self.n})"


def _check_same_grid(a, b):
    if a.delay_span != b.delay_span or a.n != b.n:
        raise ContractViolation("segments live on different grids")


def check_span(kernel, seg):
    if abs(kernel.delay_span - seg.delay_span) > 1e-12 * kernel.delay_span:
        raise ContractViolation(
            f"segment span {seg.delay_span} does not match kernel span {kernel.delay_span}"
        )


def apply_kernel(kernel, seg):
    """Evaluate ``L(seg)`` for a :class:`Segment` or a vectorised callable."""
    if isinstance(seg, Segment):
        check_span(kernel, seg)
        return float(kernel.grid_weights(seg.n) @ seg.values)
    return kernel.apply_function(seg)


def _density_term(lam, a, b):
    """``int_a^b exp(lam * theta) dtheta`` with the ``lam -> 0`` limit handled."""
    z = lam * (b - a)
    small = np.abs(z) < 1e-8
    safe = np.where(small, 1.0, z)
    ratio = np.where(small, 1.0 + 0.5 * z, np.expm1(safe) / safe)
    return np.exp(lam * a) * (b - a) * ratio


def _density_term_deriv(lam, a, b):
    """``int_a^b theta exp(lam * theta) dtheta``."""
    lam = np.asarray(lam, dtype=complex)
    out = np.empty_like(lam)
    z = lam * (b - a)
    small = np.abs(z) < 1e-2
    if np.any(small):
        x, w = gauss_legendre(a, b, 16)
        ls = lam[small][..., None]
        out[small] = np.sum(w * x * np.exp(ls * x), axis=-1)
    big = ~small
    if np.any(big):
        lb = lam[big]
        eb, ea = np.exp(lb * b), np.exp(lb * a)
        out[big] = (b * eb - a * ea) / lb - (eb - ea) / lb**2
    return out


def char_fn(kernel, lam):
    """Characteristic function ``Delta(lam) = lam - L(exp(lam * .))``."""
    lam = np.asarray(lam, dtype=complex)
    total = np.array(lam, copy=True)
    for loc, w in kernel.atoms:
        total = total - w * np.exp(lam * loc)
    for a, b, c in kernel.density_pieces:
        total = total - c * _density_term(lam, a, b)
    return total if total.ndim else complex(total)


def char_fn_deriv(kernel, lam):
    lam = np.asarray(lam, dtype=complex)
    total = np.ones_like(lam)
    for loc, w in kernel.atoms:
        total = total - w * loc * np.exp(lam * loc)
    for a, b, c in kernel.density_pieces:
        total = total - c * _density_term_deriv(lam, a, b)
    return total if total.ndim else complex(total)
