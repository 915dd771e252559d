import math

import numpy as np
import pytest
from pydantic import ValidationError

from markset.analysis.definiteness import (
    cnd_test_via_exponential,
    fourier_coefficients,
    fourier_pd_test,
    gram_pd_test,
    max_at_origin_test,
    reproduce_witness,
)
from markset.core.gauss import KMM_EXCESS_THRESHOLD, theory_t0
from markset.errors import DomainError
from markset.schemas import DefinitenessReport
from markset.services.simulate import periodic_triangle_breakpoints, periodic_triangle_cov


@pytest.mark.parametrize(
    "normalization,expected",
    [("integral", math.pi), ("mean", 0.5), ("cosine-series", 1.0)],
)
def test_fourier_normalizations(normalization, expected):
    coeffs = fourier_coefficients(np.cos, 2 * math.pi, 2, normalization=normalization)
    assert coeffs.values[1] == pytest.approx(expected, abs=1e-10)
    assert coeffs.values[0] == pytest.approx(0.0, abs=1e-10)
    assert coeffs.values[2] == pytest.approx(0.0, abs=1e-10)


def test_fourier_rejects_bad_input():
    with pytest.raises(DomainError):
        fourier_coefficients(np.cos, 0.0, 2)
    with pytest.raises(DomainError):
        fourier_coefficients(np.cos, 1.0, 2, normalization="unit")
    with pytest.raises(DomainError):
        fourier_coefficients(lambda r: 1.0 / r, 1.0, 2)


def test_fourier_pd_test_verdicts():
    good = fourier_pd_test(lambda r: 1.0 + np.cos(2 * math.pi * r), 1.0)
    assert good.verdict == "pd-consistent"

    bad_f = lambda r: 0.5 - np.cos(2 * math.pi * r)
    bad = fourier_pd_test(bad_f, 1.0)
    assert bad.verdict == "not-pd"
    assert bad.witness["index"] == 1
    assert reproduce_witness(bad, bad_f) == pytest.approx(bad.witness["coefficient"])


def test_gram_test_on_smooth_kernel():
    report = gram_pd_test(lambda r: np.exp(-0.5 * r * r), np.arange(6.0))
    assert report.verdict == "pd-consistent"
    assert report.details["min_eigenvalue"] > 0


def test_gram_test_witness_reproduces():
    sign = lambda r: np.where(np.asarray(r) < 0.5, 1.0, -1.0)
    report = gram_pd_test(sign, [0.0, 1.0, 2.0])
    assert report.verdict == "not-pd"
    assert report.witness["min_eigenvalue"] == pytest.approx(-1.0)
    assert reproduce_witness(report, sign) == pytest.approx(-1.0)


def test_gram_needs_two_points():
    with pytest.raises(DomainError):
        gram_pd_test(np.cos, [0.0])


def test_gram_test_is_invariant_under_rigid_motions():
    kernel = lambda r: np.exp(-0.5 * r * r) * np.cos(3.0 * r)
    points = np.random.default_rng(5).uniform(0.0, 3.0, (12, 2))
    angle = 0.7
    rotation = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    reflection = np.diag([1.0, -1.0])
    base = gram_pd_test(kernel, points)
    for moved in (points + [4.0, -2.5], points @ rotation.T, points @ reflection):
        report = gram_pd_test(kernel, moved)
        assert report.verdict == base.verdict
        assert report.details["min_eigenvalue"] == pytest.approx(base.details["min_eigenvalue"], abs=1e-10)


def test_max_at_origin():
    assert max_at_origin_test(lambda r: np.exp(-r), np.linspace(0, 3, 31)).verdict == "pd-consistent"
    growing = max_at_origin_test(lambda r: 1.0 + r, np.linspace(0, 3, 31))
    assert growing.verdict == "not-pd"
    assert growing.witness["r"] == pytest.approx(3.0)
    negative = max_at_origin_test(lambda r: -np.ones_like(r), [1.0])
    assert negative.witness["r"] == 0.0
    assert reproduce_witness(negative, lambda r: -np.ones_like(r)) == pytest.approx(1.0)


def test_scalar_callables_are_accepted():
    scalar = lambda r: math.exp(-float(r))
    assert max_at_origin_test(scalar, [0.5, 1.0]).verdict == "pd-consistent"


def test_kmm_exceeds_its_origin_value():
    kmm = lambda r: theory_t0(math.exp(-float(r))).kmm
    report = max_at_origin_test(kmm, np.linspace(0.0, 2.0, 401))
    assert report.violated
    assert math.exp(-report.witness["r"]) > KMM_EXCESS_THRESHOLD
    assert reproduce_witness(report, kmm) == pytest.approx(report.witness["excess"])


def test_linear_variogram_power_is_cnd():
    report = cnd_test_via_exponential(
        lambda r: np.asarray(r) ** 2, [0.5, 1.0, 2.0], method="gram-matrix", points=np.arange(5.0)
    )
    assert report.verdict == "cnd-consistent"
    assert report.details["s_tested"] == [0.5, 1.0, 2.0]


def test_quartic_is_not_cnd():
    report = cnd_test_via_exponential(
        lambda r: np.asarray(r) ** 4, [0.01], method="gram-matrix", points=[0.0, 1.0, 2.0]
    )
    assert report.verdict == "not-cnd"
    assert report.witness["s"] == 0.01
    assert report.witness["min_eigenvalue"] < 0


def test_threshold_variogram_is_not_cnd():
    gamma = lambda r: theory_t0(math.cos(float(r))).gamma
    report = cnd_test_via_exponential(gamma, [1.0], period=2 * math.pi, breakpoints=(math.pi,))
    assert report.verdict == "not-cnd"
    assert report.details["coefficients"][1] == pytest.approx(-0.03364, abs=2e-4)
    kernel = lambda r: math.exp(-gamma(r))
    assert reproduce_witness(report, kernel) < 0


def test_cnd_argument_checks():
    gamma = lambda r: np.asarray(r) ** 2
    with pytest.raises(DomainError):
        cnd_test_via_exponential(gamma, [1.0])
    with pytest.raises(DomainError):
        cnd_test_via_exponential(gamma, [1.0], method="gram-matrix")
    with pytest.raises(DomainError):
        cnd_test_via_exponential(gamma, [0.0], period=1.0)


@pytest.mark.parametrize("p,integral", [(0.7, -0.0022776), (0.8, -0.0013727), (0.9, -0.0003931)])
def test_triangle_covariance_is_not_pd(p, integral):
    report = fourier_pd_test(lambda r: periodic_triangle_cov(r, p), 1.0, breakpoints=periodic_triangle_breakpoints(p))
    assert report.verdict == "not-pd"
    assert report.details["coefficients"][0] == pytest.approx(integral, abs=1e-6)


def test_violation_needs_witness():
    with pytest.raises(ValidationError):
        DefinitenessReport(method="gram-matrix", verdict="not-pd", tolerance=1e-8)
    with pytest.raises(DomainError):
        reproduce_witness(DefinitenessReport(method="gram-matrix", verdict="pd-consistent", tolerance=1e-8), np.cos)
