import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hopfavg.dde_core.kernel import (
    MeasureKernel,
    Segment,
    apply_kernel,
    char_fn,
    char_fn_deriv,
)
from hopfavg.errors import ContractViolation

from conftest import HALF_PI, delay_kernel


def test_apply_atom_on_constant():
    seg = Segment.from_function(lambda t: np.ones_like(t), 1.0, 256)
    assert apply_kernel(delay_kernel(), seg) == pytest.approx(-HALF_PI, abs=1e-15)


def test_apply_atom_on_cosine_vanishes():
    seg = Segment.from_function(lambda t: np.cos(HALF_PI * t), 1.0, 256)
    assert abs(apply_kernel(delay_kernel(), seg)) < 1e-15


def test_apply_density_on_constant():
    beta = 0.7
    k = MeasureKernel(1.0, (), ((-0.5, 0.0, beta),))
    seg = Segment.from_function(lambda t: np.ones_like(t), 1.0, 64)
    assert apply_kernel(k, seg) == pytest.approx(beta / 2.0, rel=1e-14)


def test_density_split_off_grid_is_exact_for_linear():
    # trapezoid with exact split integrates a piecewise-linear segment exactly
    k = MeasureKernel(1.0, (), ((-0.33, -0.1, 2.0),))
    seg = Segment.from_function(lambda t: 3.0 * t + 1.0, 1.0, 10)
    exact = 2.0 * (1.5 * (0.1**2 - 0.33**2) + (0.33 - 0.1))
    assert apply_kernel(k, seg) == pytest.approx(exact, rel=1e-13)


def test_apply_span_mismatch():
    seg = Segment.zeros(2.0, 16)
    with pytest.raises(ContractViolation):
        apply_kernel(delay_kernel(), seg)


def test_char_fn_examples():
    assert abs(char_fn(delay_kernel(), 1j * HALF_PI)) < 1e-15
    assert char_fn(delay_kernel(), 0.0) == pytest.approx(HALF_PI)
    k = MeasureKernel(1.0, ((-1.0, -1.0),))
    assert char_fn(k, 1.0) == pytest.approx(1.0 + math.exp(-1.0), rel=1e-14)


def test_char_fn_density_limit_at_zero():
    k = MeasureKernel(2.0, (), ((-1.5, -0.5, 0.3),))
    assert char_fn(k, 0.0) == pytest.approx(-0.3, rel=1e-14)
    assert char_fn(k, 1e-12) == pytest.approx(1e-12 - 0.3, rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(
    lam_re=st.floats(-3, 3),
    lam_im=st.floats(-10, 10),
    loc=st.floats(-1, 0),
    a=st.floats(-1, -0.01),
)
def test_char_fn_deriv_matches_finite_difference(lam_re, lam_im, loc, a):
    k = MeasureKernel(1.0, ((loc, -0.8),), ((a, 0.0, 0.4),))
    lam = complex(lam_re, lam_im)
    h = 1e-6
    fd = (char_fn(k, lam + h) - char_fn(k, lam - h)) / (2 * h)
    assert abs(char_fn_deriv(k, lam) - fd) < 1e-6 * (1 + abs(fd))


def test_kernel_validation():
    with pytest.raises(ContractViolation):
        MeasureKernel(1.0, ((-1.5, 1.0),))
    with pytest.raises(ContractViolation):
        MeasureKernel(1.0, (), ((-0.2, -0.4, 1.0),))
    with pytest.raises(ContractViolation):
        MeasureKernel(-1.0)


@settings(max_examples=30, deadline=None)
@given(
    w=st.lists(st.floats(-3, 3), min_size=1, max_size=3),
    c=st.floats(-2, 2),
)
def test_constant_consistency(w, c):
    atoms = tuple((-k / len(w), wk) for k, wk in enumerate(w))
    k = MeasureKernel(1.0, atoms, ((-0.8, -0.2, c),))
    seg = Segment.from_function(lambda t: np.ones_like(t), 1.0, 40)
    assert apply_kernel(k, seg) == pytest.approx(sum(w) + 0.6 * c, abs=1e-12)
    assert k.total_mass() == pytest.approx(sum(w) + 0.6 * c, abs=1e-12)


def test_segment_basics():
    seg = Segment.from_function(np.sin, 1.0, 8)
    assert seg.n == 8
    assert seg.values.size == 9
    assert seg(0.0) == seg.values[-1]
    assert seg.grid_step == pytest.approx(0.125)
    with pytest.raises(ValueError):
        seg.values[0] = 1.0
