import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hopfavg.dde_core.fundamental import integrate_dde
from hopfavg.dde_core.kernel import MeasureKernel, Segment
from hopfavg.dde_core.roots import scale_to_criticality
from hopfavg.dde_core.spectral import (
    amplitude,
    bilinear_form,
    bilinear_form_exact,
    build_adjoint_basis,
    build_spectral,
    complement_segment,
    critical_segment,
    duality_residual,
    project_coords,
    project_segment,
)
from hopfavg.errors import ContractViolation

from conftest import HALF_PI, N_CONST


def psi_closed_form(s):
    c, sn = np.cos(HALF_PI * s), np.sin(HALF_PI * s)
    return N_CONST * np.array([c - HALF_PI * sn, HALF_PI * c + sn])


def test_psi_tilde_closed_form(spectral):
    assert spectral.omega_c == pytest.approx(HALF_PI, abs=1e-12)
    expected = N_CONST * np.array([1.0, HALF_PI])
    np.testing.assert_allclose(spectral.Psi_tilde, expected, atol=1e-12)
    assert N_CONST == pytest.approx(0.576800, abs=1e-6)


def test_psi_function_closed_form(spectral):
    s = np.linspace(0.0, 1.0, 17)
    np.testing.assert_allclose(spectral.Psi(s), psi_closed_form(s), atol=1e-12)


def test_duality(spectral):
    assert spectral.duality_residual < 1e-10


def test_bilinear_form_on_grid(kernel, spectral):
    phi1 = critical_segment(spectral, (1.0, 0.0), 512)
    psi1 = lambda s: spectral.Psi(s)[0]
    psi2 = lambda s: spectral.Psi(s)[1]
    assert bilinear_form(kernel, phi1, psi1) == pytest.approx(1.0, abs=1e-5)
    assert bilinear_form(kernel, phi1, psi2) == pytest.approx(0.0, abs=1e-5)


def test_bilinear_form_zero_kernel(rng):
    k = MeasureKernel.zero(1.0)
    seg = Segment(1.0, rng.normal(size=33))
    psi = lambda s: np.cos(3.0 * s) + 0.5
    assert bilinear_form(k, seg, psi) == pytest.approx(seg.values[-1] * 1.5, rel=1e-14)
    assert bilinear_form_exact(k, np.sin, np.cos) == 0.0


def test_bilinear_form_span_mismatch(kernel):
    with pytest.raises(ContractViolation):
        bilinear_form(kernel, Segment.zeros(2.0, 8), np.cos)


def test_project_coords_examples(kernel, spectral):
    n = 256
    np.testing.assert_allclose(
        project_coords(spectral, kernel, critical_segment(spectral, (1, 0), n)), [1, 0], atol=1e-12
    )
    np.testing.assert_allclose(
        project_coords(spectral, kernel, critical_segment(spectral, (3, -2), n)), [3, -2], atol=1e-12
    )


def test_amplitude_examples(kernel, spectral):
    seg = critical_segment(spectral, (math.sqrt(2 * 0.72), 0.0), 256)
    assert amplitude(spectral, kernel, seg) == pytest.approx(0.72, abs=1e-12)
    assert amplitude(spectral, kernel, Segment.zeros(1.0, 256)) == 0.0
    seg = critical_segment(spectral, (0.0, 1.0), 256)
    assert amplitude(spectral, kernel, seg) == pytest.approx(0.5, abs=1e-12)


def test_projection_idempotent_100(kernel, spectral, rng):
    for _ in range(100):
        seg = Segment(1.0, rng.normal(size=257))
        z = project_coords(spectral, kernel, seg)
        z2 = project_coords(spectral, kernel, project_segment(spectral, kernel, seg))
        np.testing.assert_allclose(z2, z, atol=1e-9)
        q = complement_segment(spectral, kernel, seg)
        np.testing.assert_allclose(project_coords(spectral, kernel, q), 0.0, atol=1e-9)


def _flow_coords(kernel, spectral, z, t_end, n=256):
    w = spectral.omega_c
    hist = lambda t: z[0] * np.cos(w * t) + z[1] * np.sin(w * t)
    t, x = integrate_dde(kernel, hist, float(hist(0.0)), t_end, 1.0 / n)
    seg = Segment(1.0, x[-(n + 1) :])
    return project_coords(spectral, kernel, seg), t[-1]


@settings(max_examples=10, deadline=None)
@given(
    z1=st.floats(-2, 2),
    z2=st.floats(-2, 2),
    t_end=st.floats(1.0, 4.0),
)
def test_rotation_covariance(kernel, spectral, z1, z2, t_end):
    z = np.array([z1, z2])
    t_end = round(t_end * 256) / 256
    zt, t = _flow_coords(kernel, spectral, z, t_end)
    np.testing.assert_allclose(zt, spectral.rotation(t) @ z, atol=1e-6 * (1 + np.abs(z).max()))


def test_amplitude_conserved_over_period(kernel, spectral):
    z = np.array([0.8, -0.6])
    h0 = 0.5 * z @ z
    for t_end in (1.0, 2.0, 3.0, 4.0):
        zt, _ = _flow_coords(kernel, spectral, z, t_end)
        assert 0.5 * zt @ zt == pytest.approx(h0, abs=1e-6)


def test_duality_random_kernels(rng):
    for _ in range(3):
        base = MeasureKernel(
            1.0,
            ((-1.0, -1.0), (-rng.uniform(0.1, 0.9), rng.uniform(-0.4, 0.4))),
            ((rng.uniform(-1.0, -0.6), rng.uniform(-0.5, 0.0), rng.uniform(-0.5, 0.5)),),
        )
        k, rep = scale_to_criticality(base)
        coeffs, _ = build_adjoint_basis(k, rep.omega_c)
        assert duality_residual(k, rep.omega_c, coeffs) < 1e-10


def test_spectral_without_table(kernel):
    sp = build_spectral(kernel, with_fundamental=False)
    assert sp.h_times is None
    assert math.isnan(sp.t_max)
