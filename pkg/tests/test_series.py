import math

import numpy as np
import pytest
from mpmath import mp, mpf

from markset.core.gauss import f0, g0
from markset.errors import DomainError, VerificationError
from markset.series import monotonicity
from markset.series.monotonicity import (
    crossover_bounds,
    g_coefficient,
    g_series_coeffs,
    h2_at_one,
    h_second_deriv_on_circle,
    series_arcsin_shifted,
    taylor_f0,
    taylor_g0,
    verify_absolute_monotonicity,
)
from markset.series.powerseries import PowerSeries


def test_series_products_and_quotients():
    x = PowerSeries.variable(6)
    product = (1 + x) * (1 - x)
    assert product.to_floats() == [1, 0, -1, 0, 0, 0, 0]
    geometric = 1 / (1 - x)
    assert geometric.to_floats() == [1.0] * 7


def test_binary_operations_truncate_to_lower_order():
    a = PowerSeries([1, 2, 3, 4])
    b = PowerSeries([1, 1])
    assert (a + b).order == 1
    assert (a * b).to_floats() == [1, 3]


def test_sqrt_squares_back():
    s = PowerSeries([1, 1], order=10)
    root = s.sqrt()
    assert (root * root).almost_equal(s, 1e-12)
    with pytest.raises(DomainError):
        PowerSeries([0, 1]).sqrt()


def test_compose_and_calculus():
    x = PowerSeries.variable(8)
    geometric = 1 / (1 - x)
    doubled = geometric.compose(x * 2)
    assert doubled.to_floats() == [2.0**k for k in range(9)]
    series = PowerSeries([3, 1, 4, 1, 5])
    assert series.deriv().integ(3).to_floats() == series.to_floats()
    with pytest.raises(DomainError):
        geometric.compose(1 + x)


def test_division_by_series_without_constant_term():
    with pytest.raises(ZeroDivisionError):
        PowerSeries([1, 1]) / PowerSeries([0, 1])


def test_arcsin_series():
    expected = [math.pi / 2, 1, 0, 1 / 6, 0, 3 / 40]
    assert series_arcsin_shifted(5).to_floats() == pytest.approx(expected)


def test_taylor_series_evaluate_to_closed_forms():
    assert float(taylor_f0(25).evaluate(0.3)) == pytest.approx(f0(0.3), abs=1e-10)
    assert float(taylor_g0(25).evaluate(-0.2)) == pytest.approx(g0(-0.2), abs=1e-10)


def test_f0_leading_coefficients():
    coefficients = taylor_f0(5).to_floats()
    assert coefficients[0] == pytest.approx(0.0, abs=1e-30)
    assert coefficients[1] == pytest.approx((1 - 2 / math.pi) ** 2)


def test_singular_part_coefficients_match_closed_form():
    with mp.workprec(128):
        series = g_series_coeffs(40)
        for n in range(2, 41):
            assert abs(series[n] - g_coefficient(n)) < mpf(10) ** -30
    with pytest.raises(DomainError):
        g_coefficient(1)


def test_crossover_starts_at_thirty():
    assert not crossover_bounds(29).holds
    at_thirty = crossover_bounds(30)
    assert at_thirty.holds
    assert at_thirty.a_n_lower == pytest.approx(2.1116e-4, rel=1e-3)
    assert at_thirty.b_n_upper == pytest.approx(0.182 / 870)


def test_remainder_second_derivative_at_one():
    assert float(h2_at_one()) == pytest.approx(0.07988, abs=1e-4)
    assert abs(h_second_deriv_on_circle(0.0)) < monotonicity.H2_AT_ONE_BOUND
    near = h_second_deriv_on_circle(1e-6)
    assert abs(near) == pytest.approx(float(h2_at_one()), abs=1e-2)


def test_verify_f0():
    report = verify_absolute_monotonicity("f0", 30)
    assert report.verdict == "verified-to-order-N"
    assert report.min_coefficient >= -report.tolerance
    assert report.circle_max < monotonicity.CIRCLE_BOUND
    assert report.circle_argmax == 0.0
    assert [row.n for row in report.crossover] == [30]
    assert all(row.holds for row in report.crossover)


def test_verify_g0():
    report = verify_absolute_monotonicity("g0", 30)
    assert report.verdict == "verified-to-order-N"
    assert report.crossover == []
    assert len(report.coefficients) == 31


@pytest.mark.parametrize(
    "tag,order,samples",
    [("h0", 30, 720), ("f0", 12, 720), ("f0", 30, 90)],
)
def test_verify_rejects_bad_arguments(tag, order, samples):
    with pytest.raises(DomainError):
        verify_absolute_monotonicity(tag, order, circle_samples=samples)


def test_verify_raises_when_bound_is_violated(monkeypatch):
    monkeypatch.setattr(monotonicity, "CIRCLE_BOUND", 0.01)
    with pytest.raises(VerificationError):
        verify_absolute_monotonicity("f0", 30)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_random_series_ring_identities(seed):
    rng = np.random.default_rng(seed)
    coefficients = [rng.uniform(1.0, 2.0)] + list(rng.uniform(-1.0, 1.0, 20))
    with mp.workprec(128):
        s = PowerSeries(coefficients)
        one = PowerSeries.constant(1, s.order)
        assert (s * (1 / s)).almost_equal(one, mpf("1e-25"))
        root = s.sqrt()
        assert (root * root).almost_equal(s, mpf("1e-25"))


@pytest.mark.parametrize("x", [0.1, 0.5, 0.9])
def test_truncated_f0_is_within_tail_bound(x):
    with mp.workprec(128):
        series = taylor_f0(60)
        bound = series.tail_bound(x)
        assert abs(float(series.evaluate(x)) - f0(x)) <= float(bound) + 1e-14
    assert float(bound) < 1e-4


def test_tail_bound_outside_unit_disk():
    assert PowerSeries([1, 1]).tail_bound(1.0) == mp.inf


def test_h_second_derivative_is_conjugate_symmetric():
    for angle in (0.3, 1.2, 2.5, 3.0):
        upper = h_second_deriv_on_circle(angle)
        lower = h_second_deriv_on_circle(2.0 * math.pi - angle)
        assert lower == pytest.approx(upper.conjugate(), rel=1e-12)


def test_h_second_derivative_is_continuous_at_minus_one():
    centre = h_second_deriv_on_circle(math.pi)
    for offset in (-1e-6, 1e-6):
        assert abs(h_second_deriv_on_circle(math.pi + offset) - centre) <= 1e-4
