import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import HALF_PI, N_CONST
from hopfavg import averaging
from hopfavg.averaging import (
    GqCheck,
    average_additive,
    average_multiplicative,
    check_gq_condition,
    cubic_drift,
    drift_q1,
    drift_q2,
    kernel_on_basis,
    lyapunov_avg,
    rotation_time,
    seam_theta,
    seam_theta_infimum,
)
from hopfavg.dde_core.kernel import MeasureKernel
from hopfavg.dde_core.spectral import build_spectral, rotation_matrix
from hopfavg.errors import (
    DegenerateDiffusionError,
    GqConditionError,
    GqConditionNotChecked,
    UndefinedRotation,
)
from hopfavg.perturbation import DelayPolynomial, delay_monomial_perturbation

PSI1, PSI2 = N_CONST, N_CONST * HALF_PI
HBARS = (0.25, 0.5, 1.0, 1.4)


@pytest.fixture(scope="module")
def gq_check(spectral, gq_square):
    return check_gq_condition(gq_square, spectral)


# ---------------------------------------------------------------- additive


def test_additive_constants(additive_model):
    assert additive_model.kappa_b == pytest.approx(N_CONST, abs=1e-12)
    assert additive_model.kappa_d == pytest.approx(2 * N_CONST, abs=1e-12)
    assert abs(2 * additive_model.kappa_b - additive_model.kappa_d) < 1e-10
    h = np.array(HBARS)
    np.testing.assert_allclose(additive_model.sigma2_H(h), 2 * N_CONST * h, rtol=1e-12)
    np.testing.assert_allclose(additive_model.b_H(h), N_CONST, rtol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 5.0))
def test_additive_constants_scale_with_sigma_squared(kernel, spectral, sigma):
    m = average_additive(delay_monomial_perturbation(0.1, sigma=sigma), kernel, spectral)
    assert m.kappa_b == pytest.approx(N_CONST * sigma**2, rel=1e-12)
    assert m.sigma2_H(0.7) == pytest.approx(2 * N_CONST * sigma**2 * 0.7, rel=1e-12)


@pytest.mark.parametrize("gamma_c", [1.0, -0.5, 2.0])
def test_cubic_drift_closed_form(spectral, gamma_c):
    G = DelayPolynomial.monomial(gamma_c, -1.0, 3)
    for h in HBARS:
        expected = -gamma_c * 1.5 * PSI2 * h * h
        assert cubic_drift(G, spectral, h) == pytest.approx(expected, rel=1e-8)


def test_cubic_component_in_model(kernel, spectral):
    m = average_additive(delay_monomial_perturbation(0.025, gamma_c=1.0), kernel, spectral)
    h = m.nodes
    np.testing.assert_allclose(m.components["b2"](h), -1.5 * PSI2 * h * h, rtol=1e-8, atol=1e-14)
    between = np.array([0.33, 0.77, 1.21])
    np.testing.assert_allclose(m.components["b2"](between), -1.5 * PSI2 * between**2, rtol=1e-6)


def test_zero_cubic_gives_zero_component(additive_model):
    assert np.all(additive_model.components["b2"](np.linspace(0, 1.5, 7)) == 0)
    assert cubic_drift(DelayPolynomial.zero(), None, 0.7) == 0.0


def test_averages_do_not_depend_on_phase(spectral):
    G = DelayPolynomial((-1.0, -0.3, 0.0), ((1.0, (3, 0, 0)), (0.4, (1, 1, 1)), (-0.7, (0, 2, 1))))
    ref = cubic_drift(G, spectral, 0.8)
    for u0 in (0.3, 1.1, 2.9):
        assert cubic_drift(G, spectral, 0.8, phase=u0) == pytest.approx(ref, abs=1e-9)


def test_quadrature_doubling_is_converged(kernel, spectral):
    G = DelayPolynomial((-1.0, -0.3), ((1.0, (3, 0)), (0.4, (1, 2))))
    for h in HBARS:
        a = cubic_drift(G, spectral, h, n_quad=256)
        b = cubic_drift(G, spectral, h, n_quad=512)
        assert abs(a - b) < 1e-9
    spec = delay_monomial_perturbation(0.1, sigma=0.8)
    m1 = average_additive(spec, kernel, spectral, n_quad=256)
    m2 = average_additive(spec, kernel, spectral, n_quad=512)
    assert abs(m1.kappa_d - m2.kappa_d) < 1e-9


def test_small_n_quad_rejected(kernel, spectral):
    with pytest.raises(ValueError):
        average_additive(delay_monomial_perturbation(0.1), kernel, spectral, n_quad=32)


def test_csv_header(additive_model):
    text = additive_model.csv()
    assert text.startswith("# kappa_b=")
    assert "hbar,b_H,sigma2_H,b1,b2,bq1,bq2" in text
    assert len(text.strip().splitlines()) == 3 + 1 + averaging.N_NODES


# ---------------------------------------------------------------- quadratic condition


def test_gq_condition_passes_for_homogeneous_quadratic(gq_check):
    assert gq_check.passed
    assert gq_check.violation < 1e-12


def test_gq_condition_fails_for_linear(spectral):
    check = check_gq_condition(DelayPolynomial.monomial(1.0, 0.0, 1), spectral)
    assert not check.passed
    # closed form: int_0^T cos(w s) exp(-B s) Psi~ ds has norm T |Psi~| / 2 for sqrt(2 h) = 1
    assert check.violation == pytest.approx(
        math.sqrt(2 * 1.0) * spectral.period * np.linalg.norm([PSI1, PSI2]) / 2, rel=1e-10
    )


def test_gq_condition_zero(spectral):
    check = check_gq_condition(DelayPolynomial.zero(), spectral)
    assert check.passed and check.violation == 0.0


def test_additive_model_rejects_linear_gq(kernel, spectral):
    spec = delay_monomial_perturbation(0.1)
    spec = type(spec)(0.1, spec.noise, spec.G, DelayPolynomial.monomial(1.0, -1.0, 1))
    with pytest.raises(GqConditionError) as err:
        average_additive(spec, kernel, spectral)
    assert err.value.violation > 0


# ---------------------------------------------------------------- rotation time


def test_rotation_time_examples():
    assert rotation_time((2.5, 0.0), HALF_PI) == 0.0
    assert rotation_time((0.0, 1.0), HALF_PI) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(UndefinedRotation):
        rotation_time((0.0, 0.0), HALF_PI)


@settings(max_examples=100, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(0.2, 5.0))
def test_rotation_time_defining_property(x, y, w):
    z = np.array([x, y])
    if np.linalg.norm(z) < 1e-6:
        return
    t = rotation_time(z, w)
    assert 0.0 <= t < 2 * math.pi / w
    np.testing.assert_allclose(rotation_matrix(w, t) @ z, [np.linalg.norm(z), 0.0], atol=1e-12 * max(1, abs(x) + abs(y)))


# ---------------------------------------------------------------- quadratic drifts


def test_drift_q1_closed_form(spectral, gq_square, gq_check):
    for h in HBARS:
        expected = -(1.0 / (2 * math.pi)) * PSI1 * PSI2 * (2 * h) ** 2
        assert drift_q1(gq_square, spectral, h, gq_check) == pytest.approx(expected, rel=1e-8)


def test_drift_q1_scales_quartically(spectral, gq_square, gq_check):
    for h in (0.2, 0.5):
        ratio = drift_q1(gq_square, spectral, 2 * h, gq_check) / drift_q1(gq_square, spectral, h, gq_check)
        assert ratio == pytest.approx(4.0, rel=1e-9)


def test_drift_q1_phase_independent(spectral, gq_square, gq_check):
    ref = drift_q1(gq_square, spectral, 0.6, gq_check)
    for u0 in (0.7, 2.2):
        assert drift_q1(gq_square, spectral, 0.6, gq_check, phase=u0) == pytest.approx(ref, abs=1e-9)


def test_drift_q1_needs_check(spectral, gq_square):
    with pytest.raises(GqConditionNotChecked):
        drift_q1(gq_square, spectral, 0.5, None)
    with pytest.raises(GqConditionError):
        drift_q1(gq_square, spectral, 0.5, GqCheck(1.0, 1e-8, False))


def test_drift_q1_zero(spectral, gq_check):
    assert drift_q1(DelayPolynomial.zero(), spectral, 0.5, gq_check) == 0.0


def test_drift_q2_constant(spectral, kernel, gq_square):
    for h in (0.5, 1.0):
        const = drift_q2(gq_square, spectral, kernel, h) / (2 * h) ** 2
        assert const == pytest.approx(-0.1973, abs=2e-3)


def test_drift_q2_truncation_converged(kernel, spectral, gq_square):
    s0 = averaging.default_s_max(spectral)
    long = build_spectral(kernel, t_max=2 * s0 + 1)
    a, bound = drift_q2(gq_square, long, kernel, 0.5, s_max=s0, return_bound=True)
    b = drift_q2(gq_square, long, kernel, 0.5, s_max=2 * s0)
    assert abs(a - b) < 1e-6 * abs(a)
    assert abs(a - b) <= bound


def test_drift_q2_phase_independent(spectral, kernel, gq_square):
    ref = drift_q2(gq_square, spectral, kernel, 0.5)
    assert drift_q2(gq_square, spectral, kernel, 0.5, phase=1.3) == pytest.approx(ref, abs=1e-9)


def test_drift_q2_zero(spectral, kernel):
    assert drift_q2(DelayPolynomial.zero(), spectral, kernel, 0.5) == 0.0


def test_quadratic_model_components(kernel, spectral):
    gq = 1 / math.sqrt(3)
    m = average_additive(delay_monomial_perturbation(0.025, gamma_q=gq), kernel, spectral)
    h = np.array([0.3, 0.9])
    q1 = -(gq**2) / (2 * math.pi) * PSI1 * PSI2 * (2 * h) ** 2
    np.testing.assert_allclose(m.components["bq1"](h), q1, rtol=1e-6)
    np.testing.assert_allclose(m.components["bq2"](h) / (gq**2 * (2 * h) ** 2), -0.1973, atol=2e-3)
    np.testing.assert_allclose(
        m.b_H(h), N_CONST + m.components["bq1"](h) + m.components["bq2"](h), rtol=1e-10
    )


# ---------------------------------------------------------------- multiplicative


def test_multiplicative_delay_noise(mult_model, spectral):
    np.testing.assert_allclose(kernel_on_basis(MeasureKernel(1.0, ((-1.0, 1.0),)), spectral), [0, -1], atol=1e-14)
    assert mult_model.meta["Psi_dot_L1Phi"] == pytest.approx(-N_CONST * HALF_PI, rel=1e-12)
    h = np.array(HBARS)
    np.testing.assert_allclose(mult_model.b_H(h), N_CONST * h, rtol=1e-12)
    sigma2 = (N_CONST + (N_CONST * HALF_PI) ** 2) * h * h
    np.testing.assert_allclose(mult_model.sigma2_H(h), sigma2, rtol=1e-12)


def test_multiplicative_zero_noise(spectral):
    m = average_multiplicative(MeasureKernel.zero(1.0), spectral)
    assert np.all(m.b_H(np.array(HBARS)) == 0)
    assert np.all(m.sigma2_H(np.array(HBARS)) == 0)


def test_multiplicative_domain_bound(spectral):
    L1 = MeasureKernel(1.0, ((-1.0, 1.0),))
    m = average_multiplicative(L1, spectral, domain=(0.1, 2.0))
    assert m.H_lower == 0.1 and m.H_star == 2.0
    with pytest.raises(DegenerateDiffusionError):
        average_multiplicative(L1, spectral, domain=(0.0, 2.0))


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 3.0))
def test_multiplicative_scaling_laws(spectral, c):
    m1 = average_multiplicative(MeasureKernel(1.0, ((-1.0, 1.0), (-0.4, 0.3))), spectral)
    mc = average_multiplicative(MeasureKernel(1.0, ((-1.0, c), (-0.4, 0.3 * c))), spectral)
    assert mc.b_H(0.5) == pytest.approx(c * c * m1.b_H(0.5), rel=1e-10)
    assert m1.sigma2_H(1.0) == pytest.approx(4 * m1.sigma2_H(0.5), rel=1e-12)
    assert m1.b_H(1.0) == pytest.approx(2 * m1.b_H(0.5), rel=1e-12)


def test_lyapunov_closed_form(mult_model):
    lya = lyapunov_avg(mult_model)
    assert lya.lambda_avg == pytest.approx(-0.122, abs=1e-3)
    assert 0.5 * 0.1**2 * lya.lambda_avg == pytest.approx(-0.0006, abs=1e-4)
    assert lya.stable
    # log-amplitude drift b/h - sigma2/(2 h^2)
    h = 0.8
    assert mult_model.b_H(h) / h - 0.5 * mult_model.sigma2_H(h) / h**2 == pytest.approx(lya.lambda_avg, rel=1e-12)


def test_lyapunov_orthogonal_noise_is_unstable(spectral):
    # L1 Phi = (pi/2, -1) is orthogonal to Psi~ = N (1, pi/2)
    m = average_multiplicative(MeasureKernel(1.0, ((-1.0, 1.0), (0.0, HALF_PI))), spectral)
    lya = lyapunov_avg(m)
    assert lya.alignment == pytest.approx(0.0, abs=1e-12)
    A, B = m.meta["norm2_Psi"], m.meta["norm2_L1Phi"]
    assert lya.lambda_avg == pytest.approx(0.25 * A * B, rel=1e-12)
    assert not lya.stable


def test_lyapunov_aligned_noise_is_stable(spectral):
    # L1 Phi = (1, pi/2) is parallel to Psi~
    m = average_multiplicative(MeasureKernel(1.0, ((-1.0, -HALF_PI), (0.0, 1.0))), spectral)
    lya = lyapunov_avg(m)
    assert lya.alignment == pytest.approx(1.0, abs=1e-12)
    assert lya.stable and lya.lambda_avg < 0


def test_lyapunov_needs_multiplicative(additive_model):
    with pytest.raises(ValueError):
        lyapunov_avg(additive_model)


# ---------------------------------------------------------------- comparison bound


def test_seam_theta_examples():
    assert seam_theta(0.0, 2 / math.pi, 0.01) == pytest.approx(HALF_PI, rel=1e-14)
    big = [seam_theta(0.0, 1.0, e) for e in (1e2, 1e3, 1e4)]
    assert big[1] == pytest.approx(0.5 * 1e6, rel=1e-12)
    assert big[0] < big[1] < big[2]
    with pytest.raises(ValueError):
        seam_theta(0.0, -1.0, 0.1)


def test_seam_theta_infimum():
    theta, delta, alpha = seam_theta_infimum(0.01)
    assert 0.70 <= theta <= 0.80
    assert seam_theta(delta, alpha, 0.01) == pytest.approx(theta, abs=1e-12)
    # the polished point is a local minimum
    for dd, da in ((1e-3, 0), (-1e-3, 0), (0, 1e-3), (0, -1e-3)):
        assert seam_theta(delta + dd, alpha * math.exp(da), 0.01) >= theta - 1e-12


def test_kernel_on_basis_with_density(spectral):
    # int_{-1}^{0} (cos(w t), sin(w t)) dt = (sin w, cos w - 1) / w
    w = spectral.omega_c
    got = kernel_on_basis(MeasureKernel(1.0, (), ((-1.0, 0.0, 1.0),)), spectral)
    np.testing.assert_allclose(got, [math.sin(w) / w, (math.cos(w) - 1) / w], atol=1e-13)
