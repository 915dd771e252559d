"""
Gaussian threshold model (excursion set Xi_t = {Z >= t} marked by Z).

Every probability and moment here depends on the pair (o, h) only through
rho = R(|h|), so all functions take the correlation directly. Integrals of the
bivariate density along the diagonal are evaluated after the substitution
s = sin(theta), which turns phi(t, t, s) ds into the bounded integrand
exp(-t^2 / (1 + sin theta)) / (2 pi) d theta.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Callable, Dict, Optional, Sequence

import numpy as np
from scipy import integrate, special

from markset.core.covariance import CovarianceModel
from markset.core.extended import ExtendedReal
from markset.errors import DegenerateError, DomainError

logger = logging.getLogger(__name__)

SQRT_2PI = math.sqrt(2.0 * math.pi)
INV_2PI = 1.0 / (2.0 * math.pi)

# k_mm(rho) exceeds k_mm(0) for rho above this value when t = 0
KMM_EXCESS_THRESHOLD = (math.pi**2 - 1.0) / (math.pi**2 + 1.0)

QUAD_EPSABS = 1e-13
QUAD_EPSREL = 1e-12
QUAD_LIMIT = 200
_PSI_SWITCH = 6.0
_RHO_SLACK = 1e-12


@dataclass(frozen=True)
class ThresholdModel:
    """Excursion set of a centred unit-variance field above level ``t``."""

    t: float
    covariance: CovarianceModel

    def __post_init__(self):
        if not math.isfinite(self.t):
            raise DomainError(f"threshold must be finite, got {self.t}")


@dataclass(frozen=True)
class SecondOrderValues:
    """Mark characteristics at a single lag."""

    E: float
    cov: float
    gamma: float
    cor: float
    kmm: float

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


# ---------------------------------------------------------------------------
# scalar special functions
# ---------------------------------------------------------------------------

def phi(t):
    """Standard normal density."""
    t = np.asarray(t, dtype=float)
    out = np.exp(-0.5 * t * t) / SQRT_2PI
    return float(out) if out.ndim == 0 else out


def Psi(t):
    """Upper tail probability P(Z >= t) of a standard normal.

    Uses ``ndtr`` for |t| <= 6 and the scaled complementary error function
    beyond, so the relative error stays small far in the tail.
    """
    t = np.asarray(t, dtype=float)
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        upper = 0.5 * special.erfcx(np.abs(t) / math.sqrt(2.0)) * np.exp(-0.5 * t * t)
        out = np.where(
            np.abs(t) <= _PSI_SWITCH,
            special.ndtr(-t),
            np.where(t > 0, upper, 1.0 - upper),
        )
    # erfcx * exp gives nan at +-inf
    out = np.where(np.isposinf(t), 0.0, np.where(np.isneginf(t), 1.0, out))
    return float(out) if out.ndim == 0 else out


def biv_density(s: float, t: float, rho: float) -> float:
    """Bivariate standard normal density with correlation ``rho``."""
    if not -1.0 < rho < 1.0:
        raise DomainError(f"bivariate density needs rho in (-1, 1), got {rho}")
    one_minus = 1.0 - rho * rho
    q = (s * s - 2.0 * rho * s * t + t * t) / (2.0 * one_minus)
    return INV_2PI * math.exp(-q) / math.sqrt(one_minus)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _check_rho(rho: float, *, allow_minus_one: bool = True) -> float:
    rho = float(rho)
    if not math.isfinite(rho):
        raise DomainError(f"rho must be finite, got {rho}")
    if rho > 1.0 + _RHO_SLACK or rho < -1.0 - _RHO_SLACK:
        raise DomainError(f"rho must lie in [-1, 1], got {rho}")
    rho = min(1.0, max(-1.0, rho))
    if rho == -1.0 and not allow_minus_one:
        raise DomainError("rho = -1 is outside the domain of this function")
    return rho


def _diag_kernel(theta: float, t: float) -> float:
    """exp(-t^2 / (1 + sin theta)); the limit at theta = -pi/2 is 0 unless t = 0."""
    d = 1.0 + math.sin(theta)
    if d <= 0.0:
        return 1.0 if t == 0.0 else 0.0
    return math.exp(-t * t / d)


def diagonal_integral(
    t: float,
    rho: float,
    weight: Optional[Callable[[float], float]] = None,
    tol: float = 1e-10,
) -> float:
    """Integral of phi(t, t, s) * weight(s) over s in [0, rho]."""
    rho = _check_rho(rho)
    if rho == 0.0:
        return 0.0
    upper = math.asin(rho)
    if weight is None:
        integrand = lambda th: _diag_kernel(th, t)
    else:
        integrand = lambda th: _diag_kernel(th, t) * weight(math.sin(th))
    value, abserr = integrate.quad(
        integrand, 0.0, upper, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=QUAD_LIMIT
    )
    if abserr * INV_2PI > tol:
        logger.warning(f"diagonal quadrature error {abserr * INV_2PI:.2e} above {tol:.0e} (t={t}, rho={rho})")
    return value * INV_2PI


def _tail_arg(t: float, rho: float) -> float:
    """a = t * sqrt((1 - rho) / (1 + rho)) for rho in (-1, 1]."""
    return t * math.sqrt((1.0 - rho) / (1.0 + rho))


@dataclass(frozen=True)
class _ScaledMoments:
    """P, E, C, V divided by exp(log_scale); ``abserr`` is the quadrature error of P."""

    log_scale: float
    P: float
    E: float
    C: float
    V: float
    abserr: float


def _anticorrelated_moments(t: float, rho: float) -> _ScaledMoments:
    """Joint moments for rho in (-1, 0) by conditioning on Z(o) = x.

    Given Z(o) = x, Z(h) is N(rho x, s^2) with s = sqrt(1 - rho^2), so every
    moment is a one-dimensional integral over x >= t of phi(x) Psi(b) times a
    polynomial weight, b = (t - rho x) / s. The integrand is evaluated in log
    space and scaled by its value at max(t, 0); no term is subtracted, so P_t
    keeps its relative accuracy far below Psi(t)^2.
    """
    s = math.sqrt(1.0 - rho * rho)
    x0 = max(t, 0.0)
    b0 = (t - rho * x0) / s
    log_scale = -0.5 * x0 * x0 - math.log(SQRT_2PI) + float(special.log_ndtr(-b0))
    upper = x0 + 40.0

    def log_weight(x: float) -> float:
        b = (t - rho * x) / s
        return -0.5 * x * x - math.log(SQRT_2PI) + float(special.log_ndtr(-b)) - log_scale

    def mills(x: float) -> float:
        b = (t - rho * x) / s
        return math.exp(-0.5 * b * b - math.log(SQRT_2PI) - float(special.log_ndtr(-b)))

    # decay length of the integrand at x0
    width = 1.0 / (x0 + (-rho / s) * max(abs(b0), 1.0) + 1.0)
    points = [x0 + width * k for k in (1.0, 10.0, 100.0)] + [x0, t / rho]
    points = sorted(p for p in set(points) if t < p < upper)

    def quad(func: Callable[[float], float]):
        return integrate.quad(
            func, t, upper, points=points, epsabs=1e-14, epsrel=QUAD_EPSREL, limit=QUAD_LIMIT
        )

    P, abserr = quad(lambda x: math.exp(log_weight(x)))
    E, _ = quad(lambda x: x * math.exp(log_weight(x)))
    V, _ = quad(lambda x: x * x * math.exp(log_weight(x)))
    C, _ = quad(lambda x: x * math.exp(log_weight(x)) * (rho * x + s * mills(x)))
    return _ScaledMoments(log_scale=log_scale, P=P, E=E, C=C, V=V, abserr=abserr)


def _scaled_moments(t: float, rho: float) -> _ScaledMoments:
    """Scaled moments for rho in (-1, 0); raises when P_t is lost to underflow or noise."""
    moments = _anticorrelated_moments(t, rho)
    if moments.P <= moments.abserr or math.exp(moments.log_scale) * moments.P == 0.0:
        raise DegenerateError(f"P_t underflows to zero at t={t}, rho={rho}")
    return moments


# ---------------------------------------------------------------------------
# joint moments of the threshold model
# ---------------------------------------------------------------------------

def orthant_P(t: float, rho: float) -> float:
    """P(Z(o) >= t, Z(h) >= t) for correlation ``rho``."""
    rho = _check_rho(rho)
    psi = Psi(t)
    if rho == -1.0:
        return max(0.0, 2.0 * psi - 1.0)
    if rho < 0.0:
        moments = _anticorrelated_moments(t, rho)
        return max(0.0, math.exp(moments.log_scale) * moments.P)
    return psi * psi + diagonal_integral(t, rho)


def E_t(t: float, rho: float) -> float:
    """E[Z(o) 1{Z(o) >= t} 1{Z(h) >= t}]."""
    rho = _check_rho(rho)
    if rho == -1.0:
        return 0.0
    return phi(t) * (rho + 1.0) * Psi(_tail_arg(t, rho))


def C_t(t: float, rho: float, tol: float = 1e-9) -> float:
    """E[Z(o) Z(h) 1{Z(o) >= t} 1{Z(h) >= t}].

    Satisfies C_t(0) = phi(t)^2 and C_t(1) = t phi(t) + Psi(t).
    """
    rho = _check_rho(rho)
    phi_t, psi_t = phi(t), Psi(t)
    integral = diagonal_integral(t, rho, lambda s: rho - s - t * t, tol=tol)
    tail = 0.0 if rho == -1.0 else (rho + 1.0) * Psi(_tail_arg(t, rho))
    return integral + rho * psi_t**2 + phi_t**2 + 2.0 * t * phi_t * (tail - psi_t)


def V_t(t: float, rho: float, tol: float = 1e-9) -> float:
    """E[Z(o)^2 1{Z(o) >= t} 1{Z(h) >= t}], integrated from V_t(0) = (t phi + Psi) Psi."""
    rho = _check_rho(rho)
    phi_t, psi_t = phi(t), Psi(t)
    start = (t * phi_t + psi_t) * psi_t
    if rho == 0.0:
        return start

    def slope(s: float) -> float:
        if s <= -1.0:
            return 0.0
        a = _tail_arg(t, s)
        return 2.0 * phi_t * (s * t * Psi(a) + math.sqrt(max(0.0, 1.0 - s * s)) * phi(a))

    smooth, abserr = integrate.quad(slope, 0.0, rho, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=QUAD_LIMIT)
    if abserr > tol:
        logger.warning(f"V_t quadrature error {abserr:.2e} above {tol:.0e} (t={t}, rho={rho})")
    diag = 0.0 if t == 0.0 else t * t * diagonal_integral(t, rho, tol=tol)
    return start + smooth + diag


def V_0(rho: float) -> float:
    """E[Z(o)^2 1{Z(o) >= 0} 1{Z(h) >= 0}] in closed form."""
    rho = _check_rho(rho)
    return INV_2PI * (rho * math.sqrt(1.0 - rho * rho) + math.asin(rho) + 0.5 * math.pi)


def integral_identity_lhs(t: float, rho: float) -> float:
    """t * integral over [0, rho] of phi(t, t, s) / (1 + s) ds."""
    rho = _check_rho(rho, allow_minus_one=False)
    if t == 0.0 or rho == 0.0:
        return 0.0
    return t * diagonal_integral(t, rho, lambda s: 1.0 / (1.0 + s))


def integral_identity_rhs(t: float, rho: float) -> float:
    """Closed form phi(t) [Psi(t sqrt((1-rho)/(1+rho))) - Psi(t)]."""
    rho = _check_rho(rho, allow_minus_one=False)
    return phi(t) * (Psi(_tail_arg(t, rho)) - Psi(t))


# ---------------------------------------------------------------------------
# characteristics
# ---------------------------------------------------------------------------

def mean_mark(t: float) -> float:
    """E[Z(o) | Z(o) >= t] = phi(t) / Psi(t)."""
    psi_t = Psi(t)
    if psi_t <= 0.0:
        raise DegenerateError(f"Psi({t}) underflows to zero")
    return phi(t) / psi_t


def theory_t0(rho: float) -> SecondOrderValues:
    """Closed-form characteristics of (Xi_0, Z) at correlation ``rho``."""
    rho = _check_rho(rho)
    if rho == -1.0:
        # continuous limits; cov and the variance both vanish linearly in 1 + rho
        cor = (8.0 - 3.0 * math.pi) / (16.0 - 3.0 * math.pi)
        return SecondOrderValues(E=0.0, cov=0.0, gamma=0.0, cor=cor, kmm=0.0)
    A = math.asin(rho) + 0.5 * math.pi
    S = math.sqrt(1.0 - rho * rho)
    E = math.sqrt(0.5 * math.pi) * (1.0 + rho) / A
    cov = f0(rho)
    gamma = (1.0 - rho) * (1.0 - S / A)
    cor = g0(rho)
    kmm = 0.5 * math.pi * q(rho)
    return SecondOrderValues(E=E, cov=cov, gamma=gamma, cor=cor, kmm=kmm)


def f0(rho: float) -> float:
    """rho + S/A - (pi/2)(1+rho)^2/A^2 with A = arcsin rho + pi/2, S = sqrt(1-rho^2)."""
    rho = _check_rho(rho)
    if rho == -1.0:
        return 0.0
    A = math.asin(rho) + 0.5 * math.pi
    S = math.sqrt(1.0 - rho * rho)
    return rho + S / A - 0.5 * math.pi * (1.0 + rho) ** 2 / A**2


def g0(rho: float) -> float:
    """Mark correlation of (Xi_0, Z) as a function of rho."""
    rho = _check_rho(rho)
    if rho == -1.0:
        return (8.0 - 3.0 * math.pi) / (16.0 - 3.0 * math.pi)
    A = math.asin(rho) + 0.5 * math.pi
    S = math.sqrt(1.0 - rho * rho)
    lead = 0.5 * math.pi * (1.0 + rho) ** 2
    return (rho * A * A + S * A - lead) / (A * A + rho * S * A - lead)


def q(rho: float) -> float:
    """k_mm(rho) / k_mm(0) at t = 0, i.e. rho + sqrt(1-rho^2) / (arcsin rho + pi/2)."""
    rho = _check_rho(rho)
    if rho == -1.0:
        return 0.0
    return rho + math.sqrt(1.0 - rho * rho) / (math.asin(rho) + 0.5 * math.pi)


def q_lower_bound(rho: float) -> float:
    rho = _check_rho(rho)
    return rho + math.sqrt(1.0 - rho * rho) / math.pi


def f_t(t: float, rho: float) -> float:
    """Mark covariance C_t/P_t - (E_t/P_t)^2 at correlation ``rho``."""
    rho = _check_rho(rho)
    if -1.0 < rho < 0.0:
        moments = _scaled_moments(t, rho)
        E = moments.E / moments.P
        return moments.C / moments.P - E * E
    P = orthant_P(t, rho)
    if P <= 0.0:
        raise DegenerateError(f"P_t underflows to zero at t={t}, rho={rho}")
    E = E_t(t, rho) / P
    return C_t(t, rho) / P - E * E


def _conditional_kappas(t: float, rho: float):
    """E_t/P_t, C_t/P_t and V_t/P_t."""
    rho = _check_rho(rho)
    if -1.0 < rho < 0.0:
        moments = _scaled_moments(t, rho)
        return moments.E / moments.P, moments.C / moments.P, moments.V / moments.P
    P = orthant_P(t, rho)
    if P <= 0.0:
        raise DegenerateError(f"P_t underflows to zero at t={t}, rho={rho}")
    return E_t(t, rho) / P, C_t(t, rho) / P, V_t(t, rho) / P


def theory_t(t: float, rho: float) -> SecondOrderValues:
    """All five characteristics for a general threshold via quadrature."""
    kappa_e, kappa_c, kappa_v = _conditional_kappas(t, rho)
    cov = kappa_c - kappa_e**2
    variance = kappa_v - kappa_e**2
    if variance <= 0.0:
        raise DegenerateError(f"conditional mark variance vanishes at t={t}, rho={rho}")
    m = mean_mark(t)
    return SecondOrderValues(
        E=kappa_e,
        cov=cov,
        gamma=kappa_v - kappa_c,
        cor=cov / variance,
        kmm=kappa_c / (m * m),
    )


# ---------------------------------------------------------------------------
# behaviour at the origin
# ---------------------------------------------------------------------------

def derivative_numerator(t) -> float:
    """(t^2 - 1) Psi^2 - 3 t phi Psi + 2 phi^2, positive for every t."""
    p, s = phi(t), Psi(t)
    return (np.asarray(t) ** 2 - 1.0) * s * s - 3.0 * np.asarray(t) * p * s + 2.0 * p * p


def _require_nonconstant(model: ThresholdModel) -> float:
    if model.covariance.is_constant:
        raise DomainError("behaviour at the origin is undefined for the constant correlation R == 1")
    return model.covariance.second_deriv_at_zero


def set_cov_deriv_at_zero(model: ThresholdModel) -> ExtendedReal:
    """Right derivative at 0 of the set covariance r -> P_t(R(r))."""
    r2 = _require_nonconstant(model)
    if not math.isfinite(r2):
        return ExtendedReal.neg_inf()
    return ExtendedReal.finite(-phi(model.t) / SQRT_2PI * math.sqrt(-r2))


def cov_deriv_at_zero(model: ThresholdModel) -> ExtendedReal:
    """Right derivative at 0 of the mark covariance r -> f_t(R(r))."""
    r2 = _require_nonconstant(model)
    if not math.isfinite(r2):
        return ExtendedReal.neg_inf()
    t = model.t
    psi_t = Psi(t)
    if psi_t <= 0.0:
        raise DegenerateError(f"Psi({t}) underflows to zero")
    value = -derivative_numerator(t) / psi_t**3 * phi(t) * math.sqrt(-r2) / SQRT_2PI
    return ExtendedReal.finite(float(value))


def richardson_forward_derivative(
    func: Callable[[float], float], steps: Sequence[float] = (1e-3, 1e-4)
) -> float:
    """Right derivative at 0 from forward differences at two steps.

    The curves involved behave like c0 + c1 r + c2 r^2 near 0, so first-order
    Richardson extrapolation in the step removes the leading error term.
    """
    h1, h2 = steps
    f0_ = func(0.0)
    d1 = (func(h1) - f0_) / h1
    d2 = (func(h2) - f0_) / h2
    return (h1 * d2 - h2 * d1) / (h1 - h2)


# ---------------------------------------------------------------------------
# evidence and oracles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CovtEvidence:
    t: float
    rho: np.ndarray
    values: np.ndarray
    derivative: np.ndarray
    increasing: bool
    convex: bool


def fig_covt_evidence(
    t: float, rho_grid: Optional[Sequence[float]] = None, tol: float = 1e-9
) -> CovtEvidence:
    """Divided-difference evidence that f_t is increasing and convex on [0, 1]."""
    rho = np.linspace(0.0, 1.0, 101) if rho_grid is None else np.asarray(rho_grid, dtype=float)
    if rho.size < 3 or np.any(np.diff(rho) <= 0):
        raise DomainError("rho grid needs at least 3 strictly ascending points")
    values = np.array([f_t(t, r) for r in rho])
    first = np.diff(values) / np.diff(rho)
    mids = 0.5 * (rho[1:] + rho[:-1])
    second = np.diff(first) / np.diff(mids)
    increasing = bool(np.all(first >= -tol))
    convex = bool(np.all(second >= -tol * 100))
    if not (increasing and convex):
        logger.info(f"f_t evidence at t={t}: increasing={increasing} convex={convex}")
    return CovtEvidence(
        t=t,
        rho=rho,
        values=values,
        derivative=np.gradient(values, rho),
        increasing=increasing,
        convex=convex,
    )


_MOMENT_WEIGHTS: Dict[str, Callable[[float, float], float]] = {
    "P": lambda x, y: 1.0,
    "E": lambda x, y: x,
    "C": lambda x, y: x * y,
    "V": lambda x, y: x * x,
}


def bivariate_moment_quadrature(t: float, rho: float, kind: str, epsabs: float = 1e-11) -> float:
    """Brute-force 2-D quadrature of E[w(Z(o), Z(h)) 1{both >= t}].

    ``kind`` selects w: P -> 1, E -> x, C -> x y, V -> x^2.
    """
    if kind not in _MOMENT_WEIGHTS:
        raise DomainError(f"unknown moment kind {kind!r}; expected one of {sorted(_MOMENT_WEIGHTS)}")
    rho = _check_rho(rho, allow_minus_one=False)
    if rho == 1.0:
        raise DomainError("tensor quadrature needs rho < 1")
    weight = _MOMENT_WEIGHTS[kind]
    upper = max(t, 0.0) + 12.0
    value, abserr = integrate.dblquad(
        lambda y, x: weight(x, y) * biv_density(x, y, rho),
        t,
        upper,
        t,
        upper,
        epsabs=epsabs,
        epsrel=1e-10,
    )
    logger.debug(f"dblquad {kind} t={t} rho={rho}: {value} (+/- {abserr:.1e})")
    return value


@dataclass(frozen=True)
class MonteCarloMoments:
    values: SecondOrderValues
    stderr: SecondOrderValues
    n_pairs: int
    n_accepted: int


def bivariate_conditional_moments(
    t: float, rho: float, n: int = 1_000_000, seed: int = 0, batches: int = 20
) -> MonteCarloMoments:
    """Monte Carlo characteristics from bivariate normals conditioned on both >= t.

    Standard errors are batch-means errors over ``batches`` equal batches.
    """
    rho = _check_rho(rho, allow_minus_one=False)
    if n < batches * 10:
        raise DomainError(f"need at least {batches * 10} pairs, got {n}")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    y = rho * x + math.sqrt(max(0.0, 1.0 - rho * rho)) * rng.standard_normal(n)
    m = mean_mark(t)

    def stats(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        keep = (xs >= t) & (ys >= t)
        if not np.any(keep):
            raise DegenerateError(f"no conditioned pairs at t={t}, rho={rho}")
        a, b = xs[keep], ys[keep]
        ea, eb = a.mean(), b.mean()
        va, vb = (a * a).mean(), (b * b).mean()
        c = (a * b).mean()
        cov = c - ea * eb
        return np.array(
            [ea, cov, 0.5 * (va + vb) - c, cov / math.sqrt((va - ea**2) * (vb - eb**2)), c / (m * m)]
        )

    full = stats(x, y)
    per_batch = np.array([stats(bx, by) for bx, by in zip(np.array_split(x, batches), np.array_split(y, batches))])
    se = per_batch.std(axis=0, ddof=1) / math.sqrt(batches)
    accepted = int(np.count_nonzero((x >= t) & (y >= t)))
    return MonteCarloMoments(
        values=SecondOrderValues(*map(float, full)),
        stderr=SecondOrderValues(*map(float, se)),
        n_pairs=n,
        n_accepted=accepted,
    )
