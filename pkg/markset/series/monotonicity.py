"""
Taylor expansions of the t = 0 mark covariance f0 and correlation g0 at rho = 0
and the numeric checks that their coefficients are nonnegative.

Coefficients up to order 29 are checked directly. Beyond that the argument
splits f0 (minus its linear term) into g(z) = c1 (1-z)^(1/2) + c2 (1-z)^(3/2),
which carries the singular behaviour at z = 1, and a remainder h whose second
derivative is bounded on the unit circle. Cauchy's estimate then bounds the
remainder's coefficients by max|h''| / (n (n-1)), which the explicit
coefficients a_n of g dominate from n = 30 on.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Optional

from mpmath import mp, mpc, mpf

from markset.errors import DomainError, VerificationError
from markset.schemas import CrossoverRow, MonotonicityReport
from markset.series.powerseries import PowerSeries

logger = logging.getLogger(__name__)

DIRECT_ORDER = 29
CIRCLE_BOUND = 0.182
H2_AT_ONE_BOUND = 0.08
DEFAULT_PRECISION_BITS = 128


def series_arcsin_shifted(N: int) -> PowerSeries:
    """arcsin(x) + pi/2 to order N."""
    if N < 1:
        raise DomainError(f"order must be at least 1, got {N}")
    c = [mp.pi / 2] + [mpf(0)] * N
    for n in range((N - 1) // 2 + 1):
        k = 2 * n + 1
        c[k] = mp.factorial(2 * n) / (mpf(4) ** n * mp.factorial(n) ** 2 * k)
    return PowerSeries(c)


def _building_blocks(N: int):
    x = PowerSeries.variable(N)
    A = series_arcsin_shifted(N)
    S = (1 - x * x).sqrt()
    lead = (1 + x) ** 2 * (mp.pi / 2)
    return x, A, S, lead


def taylor_f0(N: int, precision_bits: int = DEFAULT_PRECISION_BITS) -> PowerSeries:
    """f0(x) = x + S/A - (pi/2)(1+x)^2/A^2 as a series."""
    with mp.workprec(precision_bits):
        x, A, S, lead = _building_blocks(N)
        return x + S / A - lead / (A * A)


def taylor_g0(N: int, precision_bits: int = DEFAULT_PRECISION_BITS) -> PowerSeries:
    """g0(x) = (x A^2 + S A - lead) / (A^2 + x S A - lead) as a series."""
    with mp.workprec(precision_bits):
        x, A, S, lead = _building_blocks(N)
        A2 = A * A
        return (x * A2 + S * A - lead) / (A2 + x * S * A - lead)


def singular_constants():
    """(c1, c2) of g(z) = c1 (1-z)^(1/2) + c2 (1-z)^(3/2) at the active precision."""
    pi = mp.pi
    c1 = -mp.sqrt(2) * (4 / pi**2 - 1 / pi)
    c2 = mp.sqrt(2) * (-1 / (4 * pi) + mpf(11) / (3 * pi**2) + 2 / pi**3 - 16 / pi**4)
    return c1, c2


def g_series_coeffs(N: int, precision_bits: int = DEFAULT_PRECISION_BITS) -> PowerSeries:
    """Taylor coefficients a_n of g at 0, built from the series of sqrt(1 - z)."""
    if N < 0:
        raise DomainError(f"order must be nonnegative, got {N}")
    with mp.workprec(precision_bits):
        c1, c2 = singular_constants()
        one_minus = PowerSeries([1, -1], order=N)
        root = one_minus.sqrt()
        return root * c1 + one_minus * root * c2


def g_coefficient(n: int) -> mpf:
    """Closed form of a_n for n >= 2 at the active precision."""
    if n < 2:
        raise DomainError("closed form holds for n >= 2")
    c1, c2 = singular_constants()
    f = mp.factorial
    first = -c1 * f(2 * n - 2) / (f(n) * f(n - 1) * mpf(2) ** (2 * n - 1))
    second = 3 * c2 * f(2 * n - 4) / (f(n) * f(n - 2) * mpf(2) ** (2 * n - 2))
    return first + second


@dataclass(frozen=True)
class CrossoverBounds:
    n: int
    a_n_lower: float
    b_n_upper: float
    a_bound_valid: bool

    @property
    def holds(self) -> bool:
        return self.a_n_lower > self.b_n_upper


def crossover_bounds(n: int, circle_bound: float = CIRCLE_BOUND) -> CrossoverBounds:
    """Lower bound on a_n and upper bound on the remainder coefficient b_n."""
    if n < 2:
        raise DomainError(f"crossover bounds need n >= 2, got {n}")
    a_lower = (4.0 - math.pi) / (math.pi**2 * math.sqrt(2.0 * math.pi)) * n ** -1.5
    b_upper = circle_bound / (n * (n - 1))
    return CrossoverBounds(n=n, a_n_lower=a_lower, b_n_upper=b_upper, a_bound_valid=n >= 6)


def h2_at_one() -> mpf:
    """Limit of h'' at z = 1."""
    pi = mp.pi
    return -1 / pi - 2 / (3 * pi**2) + 20 / pi**3 + 8 / pi**4 - 80 / pi**5


def _h2(z: mpc) -> mpc:
    pi = mp.pi
    A = mp.asin(z) + pi / 2
    S = mp.sqrt(1 - z * z)
    u2 = -1 / (S * A) + z * (-z * A / S + 1) / (S**2 * A**2) + 2 / (S * A**3)
    v2 = 2 / A**2 - 8 * (1 + z) / (S * A**3) - 2 * (1 + z) ** 2 * (z * A / S - 3) / (S**2 * A**4)
    c1, c2 = singular_constants()
    w = 1 - z
    g2 = -(c1 / 4) * w ** mpf(-1.5) + (3 * c2 / 4) * w ** mpf(-0.5)
    return u2 - (pi / 2) * v2 - g2


def h_second_deriv_on_circle(phi: float, dps: int = 60) -> complex:
    """h''(e^{i phi}) with principal branches, extended continuously at z = +-1."""
    angle = math.fmod(float(phi), 2.0 * math.pi)
    if angle < 0:
        angle += 2.0 * math.pi
    with mp.workdps(dps):
        if angle == 0.0:
            return complex(h2_at_one())
        if abs(angle - math.pi) < 1e-12:
            # z = -1 is a removable point; approach it along the circle
            with mp.workdps(max(dps, 100)):
                return complex(_h2(mp.expj(mp.pi - mpf(10) ** -25)))
        return complex(_h2(mp.expj(mpf(angle))))


def circle_scan(samples: int = 720, dps: int = 60):
    """Return (angles, |h''| values) at ``samples`` equally spaced angles."""
    angles = [2.0 * math.pi * k / samples for k in range(samples)]
    values = [abs(h_second_deriv_on_circle(a, dps)) for a in angles]
    return angles, values


def verify_absolute_monotonicity(
    tag: str,
    N: int,
    precision_bits: int = DEFAULT_PRECISION_BITS,
    bound_order: Optional[int] = None,
    circle_samples: int = 720,
) -> MonotonicityReport:
    """Check nonnegativity of the Taylor coefficients of f0 or g0.

    Raises VerificationError when any check fails.
    """
    if tag not in ("f0", "g0"):
        raise DomainError(f"tag must be 'f0' or 'g0', got {tag!r}")
    if N < DIRECT_ORDER + 1:
        raise DomainError(f"order must be at least {DIRECT_ORDER + 1}, got {N}")
    if circle_samples < 720:
        raise DomainError("the circle scan needs at least 720 angles")
    bound_order = max(N, bound_order or N)

    series = taylor_f0(N, precision_bits) if tag == "f0" else taylor_g0(N, precision_bits)
    with mp.workprec(precision_bits):
        tol = mpf(2) ** (-(precision_bits // 2))
        coefficients = list(series.c)
        min_index = min(range(len(coefficients)), key=lambda k: coefficients[k])
        failures: List[str] = []
        for n, c in enumerate(coefficients[: DIRECT_ORDER + 1]):
            if c < -tol:
                failures.append(f"coefficient {n} is negative: {mp.nstr(c, 10)}")
        if tag == "g0":
            for n, c in enumerate(coefficients[DIRECT_ORDER + 1 :], start=DIRECT_ORDER + 1):
                if c < -tol:
                    failures.append(f"coefficient {n} is negative: {mp.nstr(c, 10)}")

    crossover: List[CrossoverRow] = []
    circle_max = circle_argmax = h1 = None
    if tag == "f0":
        dps = max(60, int(precision_bits * 0.30103) + 10)
        angles, values = circle_scan(circle_samples, dps)
        k = max(range(len(values)), key=values.__getitem__)
        circle_max, circle_argmax = values[k], angles[k]
        h1 = float(h2_at_one())
        if not circle_max < CIRCLE_BOUND:
            failures.append(f"max |h''| on the circle is {circle_max:.6f}, not below {CIRCLE_BOUND}")
        if not abs(h1) < H2_AT_ONE_BOUND:
            failures.append(f"|h''(1)| = {abs(h1):.6f} is not below {H2_AT_ONE_BOUND}")
        logger.info(f"circle scan: max |h''| = {circle_max:.6f} at phi = {circle_argmax:.4f}")

        with mp.workprec(precision_bits):
            for n in range(DIRECT_ORDER + 1, bound_order + 1):
                bounds = crossover_bounds(n)
                a_n = float(g_coefficient(n))
                row = CrossoverRow(
                    n=n,
                    a_n=a_n,
                    a_lower=bounds.a_n_lower,
                    b_upper=bounds.b_n_upper,
                    holds=bounds.holds and a_n >= bounds.a_n_lower,
                )
                crossover.append(row)
                if not row.holds:
                    failures.append(f"crossover fails at n={n}")

    report = MonotonicityReport(
        tag=tag,
        order=N,
        precision_bits=precision_bits,
        coefficients=[float(c) for c in coefficients],
        min_coefficient=float(coefficients[min_index]),
        min_index=min_index,
        tolerance=float(tol),
        crossover=crossover,
        circle_samples=circle_samples if tag == "f0" else 0,
        circle_max=circle_max,
        circle_argmax=circle_argmax,
        h2_at_one=h1,
        verdict="failed" if failures else "verified-to-order-N",
        failures=failures,
    )
    if failures:
        logger.error(f"{tag} verification failed: {failures[:3]}")
        raise VerificationError(f"{tag} absolute monotonicity check failed: {'; '.join(failures[:3])}")
    logger.info(f"{tag} verified to order {N}; smallest coefficient {report.min_coefficient:.3e} at n={min_index}")
    return report
