"""Characteristic roots of linear retarded equations and the criticality test."""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from ..errors import (
    DegenerateCriticalityError,
    NotCriticalError,
    RegionTooLarge,
    RootFinderInconsistency,
    UnstableError,
)
from .kernel import MeasureKernel, char_fn, char_fn_deriv

AXIS_TOL = 1e-9
RESIDUAL_TOL = 1e-9


@dataclass(frozen=True)
class CharacteristicRoot:
    value: complex
    residual: float
    multiplicity_hint: int = 1

    @property
    def real(self):
        return self.value.real

    @property
    def imag(self):
        return self.value.imag


@dataclass(frozen=True)
class CriticalityReport:
    """Outcome of :func:`verify_criticality`.

    ``kappa`` is the distance from the imaginary axis to the next root found
    in the searched strip (or to the strip's left edge when none was found).
    """

    omega_c: float
    kappa: float
    roots: tuple
    region: tuple


def winding_number(kernel, region, min_points=400, max_points=2**20):
    """Number of zeros of the characteristic function inside ``region``.

    The boundary is traversed counter-clockwise and resampled until no
    argument increment exceeds 0.3 rad.  Returns ``(count, min_abs)`` where
    ``min_abs`` is the smallest ``|Delta|`` seen on the boundary.
    """
    re0, re1, im0, im1 = region
    corners = [complex(re0, im0), complex(re1, im0), complex(re1, im1), complex(re0, im1)]
    perimeter = 2.0 * ((re1 - re0) + (im1 - im0))
    n = max(min_points, int(64 * perimeter))
    while True:
        pts = []
        for k in range(4):
            a, b = corners[k], corners[(k + 1) % 4]
            m = max(8, int(n * abs(b - a) / perimeter))
            t = np.linspace(0.0, 1.0, m, endpoint=False)
            pts.append(a + (b - a) * t)
        z = np.concatenate(pts + [np.array([corners[0]])])
        d = char_fn(kernel, z)
        darg = np.angle(d[1:] / d[:-1])
        if np.max(np.abs(darg)) < 0.3 or z.size > max_points:
            break
        n *= 2
    return int(round(np.sum(darg) / (2.0 * math.pi))), float(np.min(np.abs(d)))


def _newton(kernel, seeds, max_iter=80):
    lam = np.array(seeds, dtype=complex)
    active = np.ones(lam.shape, dtype=bool)
    for _ in range(max_iter):
        if not active.any():
            break
        la = lam[active]
        with np.errstate(all="ignore"):
            step = char_fn(kernel, la) / char_fn_deriv(kernel, la)
        step = np.where(np.isfinite(step), step, 0.0)
        # damp wild jumps so seeds stay near their basin
        big = np.abs(step) > 2.0
        step[big] *= 2.0 / np.abs(step[big])
        la = la - step
        lam[active] = la
        done = np.abs(step) < 1e-14 * (1.0 + np.abs(la))
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    return lam


def _polish(kernel, lam, iters=4):
    lam = np.array(lam, dtype=complex)
    for _ in range(iters):
        d = char_fn_deriv(kernel, lam)
        with np.errstate(all="ignore"):
            step = np.where(d != 0, char_fn(kernel, lam) / np.where(d != 0, d, 1.0), 0.0)
        lam = lam - step
    return lam if lam.ndim else complex(lam)


def _refine_candidates(kernel, seeds, region):
    re0, re1, im0, im1 = region
    z = _newton(kernel, seeds)
    keep = np.isfinite(z) & (z.real > re0) & (z.real < re1) & (z.imag > im0) & (z.imag < im1)
    z = _polish(kernel, z[keep])
    res = np.abs(char_fn(kernel, z))
    good = res < RESIDUAL_TOL * np.maximum(1.0, np.abs(z))
    out = []
    for zi, ri in zip(z[good], res[good]):
        if any(abs(zi - w) < 1e-7 * (1.0 + abs(w)) for w, _ in out):
            continue
        out.append((complex(zi), float(ri)))
    return out


def _multiplicity_hint(kernel, z):
    d = abs(char_fn_deriv(kernel, z))
    return 2 if d < 1e-6 else 1


def _safe_region(kernel, region):
    """Nudge the region outward until its boundary stays clear of roots."""
    re0, re1, im0, im1 = region
    pad = 0.0
    for _ in range(20):
        reg = (re0 - pad, re1 + pad, im0 - pad, im1 + pad)
        count, min_abs = winding_number(kernel, reg)
        if min_abs >= 1e-6:
            return reg, count
        pad = 1e-4 if pad == 0.0 else 2.0 * pad
    return reg, count


def find_roots(kernel: MeasureKernel, region, max_roots=200, n_seed=50):
    """All characteristic roots inside a rectangle, refined by Newton.

    Parameters
    ----------
    kernel : MeasureKernel
    region : tuple of float
        ``(re_min, re_max, im_min, im_max)``.
    max_roots : int
        Guard against regions too large to resolve.
    n_seed : int
        Newton seeds per side of the uniform seeding grid.

    Returns
    -------
    list of CharacteristicRoot
        Sorted by decreasing real part.

    Raises
    ------
    RootFinderInconsistency
        The refined roots do not match the argument-principle count.
    RegionTooLarge
        More than ``max_roots`` roots in the region.
    """
    re0, re1, im0, im1 = (float(v) for v in region)
    if not (re0 < re1 and im0 < im1) or not all(map(math.isfinite, (re0, re1, im0, im1))):
        raise ValueError(f"invalid region {region}")
    region, count = _safe_region(kernel, (re0, re1, im0, im1))
    if count > max_roots:
        raise RegionTooLarge(count, max_roots)

    found = []
    rng = np.random.default_rng(12345)
    for attempt in range(4):
        n = n_seed * (2**attempt)
        xr = np.linspace(region[0], region[1], n)
        xi = np.linspace(region[2], region[3], n)
        seeds = (xr[:, None] + 1j * xi[None, :]).ravel()
        if attempt:
            jitter = rng.uniform(-0.5, 0.5, seeds.shape) * (xr[1] - xr[0])
            seeds = seeds + jitter + 1j * rng.uniform(-0.5, 0.5, seeds.shape) * (xi[1] - xi[0])
        for z, res in _refine_candidates(kernel, seeds, region):
            if not any(abs(z - r.value) < 1e-7 * (1.0 + abs(z)) for r in found):
                found.append(CharacteristicRoot(z, res, _multiplicity_hint(kernel, z)))
        total = sum(r.multiplicity_hint for r in found)
        if total == count:
            break
    total = sum(r.multiplicity_hint for r in found)
    if total != count:
        raise RootFinderInconsistency(count, total)
    return sorted(found, key=lambda r: (-r.real, r.imag))


def default_search_region(kernel, search_re_min=-5.0, search_im_max=None):
    """Rectangle guaranteed to contain every root with nonnegative real part.

    A root with ``Re >= 0`` satisfies ``|lam| <= V`` where ``V`` is the total
    variation of the measure, so the box is widened to cover that disc.
    """
    v = kernel.total_variation()
    if search_im_max is None:
        search_im_max = 10.0 * 2.0 * math.pi / kernel.delay_span
    re_max = max(0.5, v + 0.1)
    im_max = max(float(search_im_max), v + 0.5)
    # a slightly negative lower edge keeps real roots off the boundary
    return (float(search_re_min), re_max, -0.0137, im_max)


def verify_criticality(kernel, search_re_min=-5.0, search_im_max=None, max_roots=400):
    """Check that exactly one conjugate pair lies on the axis and the rest decays.

    Returns
    -------
    CriticalityReport
        With ``omega_c`` the critical frequency and ``kappa`` the margin.

    Raises
    ------
    UnstableError
        A root with real part above ``1e-9``.
    NotCriticalError
        No root on the imaginary axis.
    DegenerateCriticalityError
        More than one critical pair, a double critical root or a zero root.
    """
    region = default_search_region(kernel, search_re_min, search_im_max)
    roots = find_roots(kernel, region, max_roots=max_roots)
    unstable = [r for r in roots if r.real > AXIS_TOL]
    if unstable:
        raise UnstableError(f"root {unstable[0].value:.6g} has positive real part")
    axis = [r for r in roots if abs(r.real) <= AXIS_TOL]
    zero = [r for r in axis if abs(r.imag) <= AXIS_TOL]
    pairs = [r for r in axis if r.imag > AXIS_TOL]
    if zero:
        raise DegenerateCriticalityError("zero is a characteristic root")
    if not pairs:
        raise NotCriticalError("no characteristic root on the imaginary axis")
    if len(pairs) > 1 or pairs[0].multiplicity_hint > 1:
        raise DegenerateCriticalityError(
            f"{len(pairs)} critical pairs found; a single simple pair is required"
        )
    others = [r.real for r in roots if abs(r.real) > AXIS_TOL]
    kappa = -max(others) if others else -region[0]
    return CriticalityReport(float(pairs[0].imag), float(kappa), tuple(roots), region)


def critical_frequencies(base, omega_max, n_scan=4000):
    """Positive ``omega`` with ``Re L(exp(i omega .)) = 0`` for a base kernel."""

    def re_part(w):
        return -char_fn(base, 1j * w).real

    grid = np.linspace(1e-6, omega_max, n_scan)
    vals = -char_fn(base, 1j * grid).real
    out = []
    for k in np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0):
        out.append(brentq(re_part, grid[k], grid[k + 1], xtol=1e-15, rtol=1e-15))
    return out


def scale_to_criticality(base, omega_max=None, search_re_min=-5.0):
    """Scale a kernel shape so that a conjugate pair sits on the imaginary axis.

    For each candidate frequency ``omega`` with ``Re L(e^{i omega .}) = 0``
    the factor ``s = omega / Im L(e^{i omega .})`` makes ``i omega`` a root of
    ``s * L``.  The first candidate whose scaled kernel passes
    :func:`verify_criticality` is returned.

    Returns
    -------
    (MeasureKernel, CriticalityReport)

    Raises
    ------
    NotCriticalError
        No candidate frequency yields a critical kernel.
    """
    if omega_max is None:
        omega_max = 10.0 * 2.0 * math.pi / base.delay_span
    for w in critical_frequencies(base, omega_max):
        im = (1j * w - char_fn(base, 1j * w)).imag
        if abs(im) < 1e-12:
            continue
        scaled = base.scaled(w / im)
        try:
            report = verify_criticality(scaled, search_re_min)
        except (NotCriticalError, UnstableError, DegenerateCriticalityError):
            continue
        return scaled, report
    raise NotCriticalError("no scaling of the kernel shape is critical")
