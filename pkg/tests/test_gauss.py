import math

import numpy as np
import pytest
from scipy import special

from markset.core.covariance import CovarianceModel
from markset.core.gauss import (
    KMM_EXCESS_THRESHOLD,
    C_t,
    E_t,
    Psi,
    ThresholdModel,
    V_0,
    V_t,
    biv_density,
    bivariate_conditional_moments,
    bivariate_moment_quadrature,
    cov_deriv_at_zero,
    derivative_numerator,
    diagonal_integral,
    f0,
    f_t,
    fig_covt_evidence,
    g0,
    integral_identity_lhs,
    integral_identity_rhs,
    mean_mark,
    orthant_P,
    phi,
    q,
    q_lower_bound,
    richardson_forward_derivative,
    set_cov_deriv_at_zero,
    theory_t,
    theory_t0,
)
from markset.errors import DegenerateError, DomainError

THRESHOLDS = [-2.0, -1.0, 0.0, 0.5, 1.0, 2.0]


def test_psi_symmetry_and_limits():
    assert Psi(0.0) == pytest.approx(0.5)
    assert Psi(1.3) + Psi(-1.3) == pytest.approx(1.0, abs=1e-15)
    assert Psi(np.inf) == 0.0
    assert Psi(-np.inf) == 1.0


def test_psi_far_tail_keeps_relative_accuracy():
    for t in (6.5, 8.0, 12.0):
        assert Psi(t) == pytest.approx(special.ndtr(-t), rel=1e-10)


def test_psi_vectorized():
    out = Psi(np.array([-1.0, 0.0, 7.0]))
    assert out.shape == (3,)
    assert out[1] == pytest.approx(0.5)


def test_biv_density_rejects_boundary_correlation():
    with pytest.raises(DomainError):
        biv_density(0.0, 0.0, 1.0)


@pytest.mark.parametrize("t", THRESHOLDS)
def test_boundary_identities(t):
    p, s = phi(t), Psi(t)
    assert orthant_P(t, 1.0) == pytest.approx(s, abs=1e-10)
    assert E_t(t, 1.0) == pytest.approx(p, abs=1e-10)
    assert C_t(t, 1.0) == pytest.approx(t * p + s, abs=1e-10)
    assert E_t(t, 0.0) == pytest.approx(p * s, abs=1e-10)


@pytest.mark.parametrize("t", THRESHOLDS)
def test_independence_values(t):
    p, s = phi(t), Psi(t)
    assert orthant_P(t, 0.0) == pytest.approx(s * s, abs=1e-12)
    assert C_t(t, 0.0) == pytest.approx(p * p, abs=1e-12)
    assert V_t(t, 0.0) == pytest.approx((t * p + s) * s, abs=1e-12)


def test_orthant_probability_at_zero_threshold():
    for rho in np.linspace(-1.0, 1.0, 21):
        expected = (math.asin(rho) + 0.5 * math.pi) / (2 * math.pi)
        assert orthant_P(0.0, rho) == pytest.approx(expected, abs=1e-10)


@pytest.mark.parametrize("t", [-1.0, 0.5, 2.0])
def test_perfect_anticorrelation(t):
    assert orthant_P(t, -1.0) == pytest.approx(max(0.0, 2 * Psi(t) - 1))
    assert E_t(t, -1.0) == 0.0


def test_rho_outside_domain():
    with pytest.raises(DomainError):
        orthant_P(0.0, 1.5)
    with pytest.raises(DomainError):
        E_t(0.0, float("nan"))


def test_c_t_tends_to_correlation_for_low_threshold():
    assert C_t(-9.0, 0.4) == pytest.approx(0.4, abs=1e-8)


def test_v_t_at_one_is_second_tail_moment():
    for t in (-1.0, 0.0, 1.5):
        assert V_t(t, 1.0) == pytest.approx(t * phi(t) + Psi(t), abs=1e-9)


def test_v0_matches_general_threshold():
    for rho in (-0.7, 0.0, 0.35, 0.9):
        assert V_t(0.0, rho) == pytest.approx(V_0(rho), abs=1e-9)


def test_integral_identity_grid():
    for t in np.linspace(-3.0, 3.0, 13):
        for rho in np.linspace(-0.99, 0.99, 19):
            assert integral_identity_lhs(t, rho) == pytest.approx(integral_identity_rhs(t, rho), abs=1e-9)


def test_diagonal_integral_zero_length():
    assert diagonal_integral(1.0, 0.0) == 0.0


@pytest.mark.parametrize("t,rho", [(-1.0, -0.4), (0.0, 0.4), (0.5, 0.8), (1.0, 0.0)])
def test_moments_match_tensor_quadrature(t, rho):
    assert E_t(t, rho) == pytest.approx(bivariate_moment_quadrature(t, rho, "E"), abs=1e-6)
    assert C_t(t, rho) == pytest.approx(bivariate_moment_quadrature(t, rho, "C"), abs=1e-6)
    assert V_t(t, rho) == pytest.approx(bivariate_moment_quadrature(t, rho, "V"), abs=1e-6)


def test_tensor_quadrature_rejects_unknown_kind():
    with pytest.raises(DomainError):
        bivariate_moment_quadrature(0.0, 0.5, "X")


def test_theory_t0_limits():
    one = theory_t0(1.0)
    assert one.E == pytest.approx(math.sqrt(2 / math.pi))
    assert one.cov == pytest.approx(1 - 2 / math.pi)
    assert one.gamma == pytest.approx(0.0, abs=1e-15)
    assert one.cor == pytest.approx(1.0)
    assert one.kmm == pytest.approx(math.pi / 2)

    zero = theory_t0(0.0)
    assert zero.E == pytest.approx(math.sqrt(2 / math.pi))
    assert zero.cov == pytest.approx(0.0, abs=1e-15)
    assert zero.cor == pytest.approx(0.0, abs=1e-15)
    assert zero.kmm == pytest.approx(1.0)
    assert zero.gamma == pytest.approx(1 - 2 / math.pi)


def test_theory_t0_at_minus_one_is_continuous():
    limit = theory_t0(-1.0)
    assert limit.E == limit.cov == limit.gamma == limit.kmm == 0.0
    assert limit.cor == pytest.approx((8 - 3 * math.pi) / (16 - 3 * math.pi))
    assert limit.cor == pytest.approx(-0.2167, abs=1e-4)
    assert theory_t0(-1.0 + 1e-5).cor == pytest.approx(limit.cor, abs=1e-3)


def test_f0_and_g0_are_increasing_on_unit_interval():
    rho = np.linspace(0.0, 1.0, 51)
    assert np.all(np.diff([f0(r) for r in rho]) > 0)
    assert np.all(np.diff([g0(r) for r in rho]) > 0)


def test_q_excess_threshold():
    assert KMM_EXCESS_THRESHOLD == pytest.approx(0.8160, abs=1e-4)
    assert q_lower_bound(KMM_EXCESS_THRESHOLD) == pytest.approx(1.0, abs=1e-12)
    for rho in np.linspace(-1.0, 1.0, 41):
        assert q(rho) >= q_lower_bound(rho) - 1e-15
    assert q(0.9) > 1.0


def test_mean_mark():
    assert mean_mark(0.0) == pytest.approx(math.sqrt(2 / math.pi))
    with pytest.raises(DegenerateError):
        mean_mark(50.0)


def test_f_t_at_zero_threshold_is_f0():
    for rho in np.linspace(-0.99, 1.0, 21):
        assert f_t(0.0, rho) == pytest.approx(f0(rho), abs=1e-9)


def test_theory_t_agrees_with_closed_form():
    for rho in (-0.5, 0.3, 0.9):
        general, closed = theory_t(0.0, rho), theory_t0(rho)
        for name in ("E", "cov", "gamma", "cor", "kmm"):
            assert getattr(general, name) == pytest.approx(getattr(closed, name), abs=1e-9)


@pytest.mark.parametrize("t", [-1.0, 1.0])
def test_theory_t_independence(t):
    values = theory_t(t, 0.0)
    assert values.cov == pytest.approx(0.0, abs=1e-12)
    assert values.cor == pytest.approx(0.0, abs=1e-12)
    assert values.kmm == pytest.approx(1.0, abs=1e-12)


def test_derivative_numerator_is_positive():
    assert np.all(derivative_numerator(np.linspace(-10.0, 10.0, 401)) > 0)


@pytest.mark.parametrize("t", [-1.0, 0.0, 1.0])
def test_origin_derivatives_match_finite_differences(t, gaussian_model):
    model = ThresholdModel(t, gaussian_model)
    cov_fd = richardson_forward_derivative(lambda r: f_t(t, gaussian_model(r)))
    set_fd = richardson_forward_derivative(lambda r: orthant_P(t, gaussian_model(r)))
    assert cov_fd == pytest.approx(cov_deriv_at_zero(model).value, rel=1e-3)
    assert set_fd == pytest.approx(set_cov_deriv_at_zero(model).value, rel=1e-3)


def test_mark_covariance_slope_at_zero_threshold(gaussian_model):
    slope = cov_deriv_at_zero(ThresholdModel(0.0, gaussian_model))
    assert slope.is_finite
    assert slope.value == pytest.approx(-0.1230, abs=1e-4)


def test_rough_field_has_infinite_slope():
    model = ThresholdModel(0.5, CovarianceModel.exponential(2.0))
    assert not cov_deriv_at_zero(model).is_finite
    assert str(set_cov_deriv_at_zero(model)) == "-inf"


def test_constant_field_is_rejected():
    with pytest.raises(DomainError):
        cov_deriv_at_zero(ThresholdModel(0.0, CovarianceModel.constant()))


def test_richardson_removes_linear_error():
    assert richardson_forward_derivative(lambda r: 3 + 2 * r + r * r) == pytest.approx(2.0, abs=1e-9)


def test_threshold_model_needs_finite_level(gaussian_model):
    with pytest.raises(DomainError):
        ThresholdModel(float("inf"), gaussian_model)


@pytest.mark.parametrize("t", [-1.0, 0.0, 1.0])
def test_covt_evidence(t):
    evidence = fig_covt_evidence(t, np.linspace(0.0, 1.0, 41))
    assert evidence.increasing
    assert evidence.values[0] == pytest.approx(0.0, abs=1e-12)


def test_covt_evidence_needs_ascending_grid():
    with pytest.raises(DomainError):
        fig_covt_evidence(0.0, [0.0, 0.5, 0.4])


def test_conditional_monte_carlo_agrees_with_closed_form():
    mc = bivariate_conditional_moments(0.0, 0.5, n=200_000, seed=7)
    exact = theory_t0(0.5)
    for name in ("E", "cov", "gamma", "cor", "kmm"):
        assert abs(getattr(mc.values, name) - getattr(exact, name)) <= 5 * getattr(mc.stderr, name)
    assert mc.n_accepted == pytest.approx(200_000 * orthant_P(0.0, 0.5), rel=0.02)


def _conditioned_reference(t, rho):
    """(P_t, f_t) from 40-digit quadrature of the conditional representation."""
    mp = pytest.importorskip("mpmath").mp
    with mp.workdps(40):
        t_, rho_ = mp.mpf(t), mp.mpf(rho)
        s = mp.sqrt(1 - rho_**2)

        def b(x):
            return (t_ - rho_ * x) / s

        nodes = [t_, t_ + 1, t_ + 4, mp.inf]
        P = mp.quad(lambda x: mp.npdf(x) * mp.ncdf(-b(x)), nodes)
        E = mp.quad(lambda x: x * mp.npdf(x) * mp.ncdf(-b(x)), nodes)
        C = mp.quad(
            lambda x: x * mp.npdf(x) * (rho_ * x * mp.ncdf(-b(x)) + s * mp.npdf(b(x))), nodes
        )
        return float(P), float(C / P - (E / P) ** 2)


@pytest.mark.parametrize("t,rho", [(4.0, -0.9), (3.0, -0.5), (2.0, -0.9), (3.0, -0.9)])
def test_anticorrelated_high_threshold_keeps_accuracy(t, rho):
    P, cov = _conditioned_reference(t, rho)
    assert orthant_P(t, rho) == pytest.approx(P, rel=1e-6)
    assert f_t(t, rho) == pytest.approx(cov, rel=1e-5)
    assert theory_t(t, rho).cov == pytest.approx(cov, rel=1e-5)


def test_anticorrelated_value_at_four():
    assert f_t(4.0, -0.9) == pytest.approx(-6.19206e-05, rel=1e-4)
    assert orthant_P(4.0, -0.9) == pytest.approx(7.37e-74, rel=1e-2)


def test_anticorrelated_path_matches_diagonal_form_at_moderate_threshold():
    t, rho = 1.0, -0.5
    assert orthant_P(t, rho) == pytest.approx(Psi(t) ** 2 + diagonal_integral(t, rho), abs=1e-11)
    P = orthant_P(t, rho)
    E = E_t(t, rho) / P
    assert f_t(t, rho) == pytest.approx(C_t(t, rho) / P - E * E, abs=1e-8)
    assert theory_t(t, rho).gamma == pytest.approx((V_t(t, rho) - C_t(t, rho)) / P, abs=1e-8)


def test_anticorrelated_path_is_continuous_at_independence():
    for t in (-1.0, 0.0, 2.0):
        assert orthant_P(t, -1e-9) == pytest.approx(orthant_P(t, 0.0), abs=1e-12)
        assert f_t(t, -1e-9) == pytest.approx(f_t(t, 0.0), abs=1e-8)


def test_underflowing_joint_probability_is_degenerate():
    with pytest.raises(DegenerateError):
        f_t(10.0, -0.9)
    with pytest.raises(DegenerateError):
        theory_t(10.0, -0.9)
    assert orthant_P(10.0, -0.9) == 0.0


def test_mark_covariance_at_positive_threshold_agrees_with_monte_carlo():
    mc = bivariate_conditional_moments(1.0, 0.5, n=400_000, seed=3)
    assert abs(mc.values.cov - f_t(1.0, 0.5)) <= 5 * mc.stderr.cov
