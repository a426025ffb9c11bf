"""Perturbation terms of the noisy delay equation.

Nonlinear terms are polynomials in finitely many delayed values,
``G(eta) = sum_t c_t prod_j eta(tau_j)^{p_tj}``.  Gradients are derived from
the polynomial, so Gateaux derivatives along any direction are exact.
"""

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .dde_core.kernel import MeasureKernel
from .errors import ContractViolation


@dataclass(frozen=True)
class DelayPolynomial:
    """Polynomial in delayed values ``eta(tau_1), ..., eta(tau_m)``.

    Parameters
    ----------
    delays : tuple of float
        Delay points in ``[-r, 0]``.
    terms : tuple of (coef, powers)
        ``powers`` is a tuple of nonnegative ints, one per delay.
    """

    delays: tuple
    terms: tuple

    def __post_init__(self):
        delays = tuple(float(d) for d in self.delays)
        terms = []
        for coef, powers in self.terms:
            powers = tuple(int(p) for p in powers)
            if len(powers) != len(delays) or any(p < 0 for p in powers):
                raise ContractViolation(f"term powers {powers} do not match {len(delays)} delays")
            if not np.isfinite(coef):
                raise ContractViolation("non-finite polynomial coefficient")
            terms.append((float(coef), powers))
        object.__setattr__(self, "delays", delays)
        object.__setattr__(self, "terms", tuple(terms))

    @classmethod
    def monomial(cls, coef, delay, power):
        """``coef * eta(delay) ** power``."""
        return cls((delay,), ((coef, (power,)),))

    @classmethod
    def zero(cls):
        return cls((), ())

    def is_zero(self):
        return all(c == 0.0 for c, _ in self.terms)

    @property
    def degrees(self):
        return sorted({sum(p) for c, p in self.terms if c != 0.0})

    def is_homogeneous(self, degree):
        return self.degrees in ([], [degree])

    def __call__(self, values):
        """Evaluate on delayed values of shape ``(m, ...)``."""
        values = np.asarray(values, dtype=float)
        out = np.zeros(values.shape[1:]) if values.ndim > 1 else 0.0
        for coef, powers in self.terms:
            term = coef
            for v, p in zip(values, powers):
                if p:
                    term = term * v**p
            out = out + term
        return out

    def gradient(self, values):
        """Partial derivatives, shape ``(m, ...)``."""
        values = np.asarray(values, dtype=float)
        grad = np.zeros(values.shape)
        for coef, powers in self.terms:
            for j, pj in enumerate(powers):
                if pj == 0:
                    continue
                term = coef * pj * values[j] ** (pj - 1)
                for i, (v, p) in enumerate(zip(values, powers)):
                    if i != j and p:
                        term = term * v**p
                grad[j] = grad[j] + term
        return grad

    def sample(self, eta):
        """Delayed values of a vectorised callable ``eta`` on ``[-r, 0]``."""
        return np.array([eta(np.float64(d)) for d in self.delays])

    def on_function(self, eta):
        return self(self.sample(eta))

    def check_span(self, delay_span):
        for d in self.delays:
            if not (-delay_span - 1e-12 <= d <= 1e-12):
                raise ContractViolation(f"delay {d} outside [-{delay_span}, 0]")


@dataclass(frozen=True)
class Additive:
    sigma: float

    def __post_init__(self):
        if not (self.sigma > 0 and np.isfinite(self.sigma)):
            raise ContractViolation("additive noise needs sigma > 0")


@dataclass(frozen=True)
class LinearMultiplicative:
    L1: MeasureKernel


@dataclass(frozen=True)
class PerturbationSpec:
    """``dX = L0 X_t dt + eps G_q(X_t) dt + eps^2 G(X_t) dt + eps F(X_t) dW``."""

    epsilon: float
    noise: Union[Additive, LinearMultiplicative]
    G: DelayPolynomial = field(default_factory=DelayPolynomial.zero)
    G_q: Optional[DelayPolynomial] = None

    def __post_init__(self):
        if not (self.epsilon >= 0 and np.isfinite(self.epsilon)):
            raise ContractViolation("epsilon must be finite and nonnegative")

    @property
    def multiplicative(self):
        return isinstance(self.noise, LinearMultiplicative)

    def with_epsilon(self, epsilon):
        return PerturbationSpec(epsilon, self.noise, self.G, self.G_q)

    def check_span(self, delay_span):
        self.G.check_span(delay_span)
        if self.G_q is not None:
            self.G_q.check_span(delay_span)
        if self.multiplicative and abs(self.noise.L1.delay_span - delay_span) > 1e-12:
            raise ContractViolation("L1 span differs from the kernel span")


def delay_monomial_perturbation(epsilon, gamma_q=0.0, gamma_c=0.0, sigma=1.0, delay=-1.0):
    """Additive noise with ``G = gamma_c eta(delay)^3`` and ``G_q = gamma_q eta(delay)^2``."""
    G = DelayPolynomial.monomial(gamma_c, delay, 3) if gamma_c else DelayPolynomial.zero()
    Gq = DelayPolynomial.monomial(gamma_q, delay, 2) if gamma_q else None
    return PerturbationSpec(epsilon, Additive(sigma), G, Gq)


# ---------------------------------------------------------------- compilation


def _interp_index(delay, r, n):
    pos = (delay + r) / (r / n)
    k = int(np.floor(pos + 1e-9))
    frac = pos - k
    if abs(frac) < 1e-9:
        frac = 0.0
    if k >= n:
        k, frac = n - 1, 1.0
    return k, frac


@dataclass(frozen=True)
class CompiledPoly:
    """Polynomial compiled against a segment grid for the simulation kernels."""

    idx: np.ndarray  # (m,) left node of the interpolation cell
    frac: np.ndarray  # (m,)
    coef: np.ndarray  # (T,)
    powers: np.ndarray  # (T, m)

    def touches(self, node):
        """True when a delay reads grid node ``node`` with nonzero weight."""
        left = (self.idx == node) & (self.frac < 1.0)
        right = (self.idx + 1 == node) & (self.frac > 0.0)
        return bool(np.any(left | right))


def compile_poly(poly, r, n):
    if poly is None or poly.is_zero():
        return CompiledPoly(
            np.zeros(0, np.int64), np.zeros(0), np.zeros(0), np.zeros((0, 0), np.int64)
        )
    idx, frac = zip(*(_interp_index(d, r, n) for d in poly.delays))
    coef = np.array([c for c, _ in poly.terms], dtype=float)
    powers = np.array([p for _, p in poly.terms], dtype=np.int64).reshape(len(coef), -1)
    return CompiledPoly(np.array(idx, np.int64), np.array(frac, float), coef, powers)


def sparse_weights(kernel, n):
    w = kernel.grid_weights(n)
    idx = np.flatnonzero(w)
    return idx.astype(np.int64), w[idx].astype(float)
