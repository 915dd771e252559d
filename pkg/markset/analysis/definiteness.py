"""
Necessary-condition tests for positive definiteness (PD) and conditional
negative definiteness (CND) of radial functions.

A passing test only means "pd-consistent": finite numerics can refute
definiteness with a witness but never certify it.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy import integrate, linalg
from scipy.spatial.distance import cdist

from markset.errors import DomainError
from markset.schemas import DefinitenessReport

logger = logging.getLogger(__name__)

NORMALIZATIONS = ("integral", "mean", "cosine-series")
DEFAULT_TOL = 1e-8


def _evaluate(f: Callable, r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    try:
        values = np.asarray(f(r), dtype=float)
    except (TypeError, ValueError):
        values = None
    if values is None or values.shape != r.shape:
        # scalar-only callables
        values = np.array([float(f(float(x))) for x in r.ravel()]).reshape(r.shape)
    return values


@dataclass(frozen=True)
class FourierCoefficients:
    period: float
    normalization: str
    values: List[float]
    errors: List[float]


def fourier_coefficients(
    f: Callable,
    period: float,
    n_max: int,
    normalization: str = "integral",
    breakpoints: Sequence[float] = (),
    check_points: int = 257,
) -> FourierCoefficients:
    """Cosine coefficients k * int_0^P f(r) cos(2 pi n r / P) dr for n = 0..n_max.

    ``k`` is 1 for "integral", 1/P for "mean" and 2/P for "cosine-series".
    The interval is split at ``breakpoints`` where f has kinks.
    """
    if not period > 0:
        raise DomainError(f"period must be positive, got {period}")
    if normalization not in NORMALIZATIONS:
        raise DomainError(f"normalization must be one of {NORMALIZATIONS}")
    samples = _evaluate(f, np.linspace(0.0, period, check_points))
    if not np.all(np.isfinite(samples)):
        raise DomainError("function has non-finite samples on [0, P]")

    scale = {"integral": 1.0, "mean": 1.0 / period, "cosine-series": 2.0 / period}[normalization]
    cuts = sorted({0.0, float(period), *(float(b) for b in breakpoints if 0.0 < b < period)})
    scalar = lambda x: float(_evaluate(f, np.array([x]))[0])

    values, errors = [], []
    for n in range(n_max + 1):
        omega = 2.0 * math.pi * n / period
        total, err = 0.0, 0.0
        for a, b in zip(cuts, cuts[1:]):
            if n == 0:
                v, e = integrate.quad(scalar, a, b, epsabs=1e-13, epsrel=1e-12, limit=200)
            else:
                v, e = integrate.quad(scalar, a, b, weight="cos", wvar=omega, epsabs=1e-13, epsrel=1e-12, limit=200)
            total += v
            err += e
        values.append(scale * total)
        errors.append(scale * err)
    logger.debug(f"fourier coefficients ({normalization}): {values[: min(4, len(values))]}")
    return FourierCoefficients(period=float(period), normalization=normalization, values=values, errors=errors)


def fourier_pd_test(
    f: Callable,
    period: float,
    n_max: int = 8,
    tol: float = DEFAULT_TOL,
    breakpoints: Sequence[float] = (),
) -> DefinitenessReport:
    """A continuous P-periodic function is PD iff all its Fourier coefficients are >= 0."""
    coeffs = fourier_coefficients(f, period, n_max, breakpoints=breakpoints)
    values = np.asarray(coeffs.values)
    threshold = tol * max(1.0, float(np.max(np.abs(values))))
    k = int(np.argmin(values))
    details = {"coefficients": coeffs.values, "errors": coeffs.errors, "normalization": coeffs.normalization}
    if values[k] < -threshold:
        return DefinitenessReport(
            method="fourier-periodic",
            verdict="not-pd",
            witness={"index": k, "coefficient": float(values[k]), "period": float(period)},
            tolerance=threshold,
            details=details,
        )
    return DefinitenessReport(method="fourier-periodic", verdict="pd-consistent", tolerance=threshold, details=details)


def gram_pd_test(f: Callable, points, tol: float = DEFAULT_TOL) -> DefinitenessReport:
    """Smallest eigenvalue of the matrix f(|x_i - x_j|)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[0] < 2:
        raise DomainError("gram test needs at least two points")
    dist = cdist(pts, pts)
    gram = _evaluate(f, dist)
    gram = 0.5 * (gram + gram.T)
    eigenvalues, eigenvectors = linalg.eigh(gram)
    threshold = tol * max(float(np.max(np.abs(gram))), np.finfo(float).tiny)
    lam = float(eigenvalues[0])
    details = {"min_eigenvalue": lam, "max_eigenvalue": float(eigenvalues[-1]), "n_points": int(pts.shape[0])}
    if lam < -threshold:
        return DefinitenessReport(
            method="gram-matrix",
            verdict="not-pd",
            witness={
                "points": pts.tolist(),
                "min_eigenvalue": lam,
                "coefficients": eigenvectors[:, 0].tolist(),
            },
            tolerance=threshold,
            details=details,
        )
    return DefinitenessReport(method="gram-matrix", verdict="pd-consistent", tolerance=threshold, details=details)


def max_at_origin_test(f: Callable, r_grid, tol: float = DEFAULT_TOL) -> DefinitenessReport:
    """A PD function satisfies f(0) >= 0 and |f(r)| <= f(0)."""
    r = np.asarray(r_grid, dtype=float)
    if r.size == 0:
        raise DomainError("r_grid must be nonempty")
    f_origin = float(_evaluate(f, np.array([0.0]))[0])
    threshold = tol * max(1.0, abs(f_origin))
    if f_origin < -threshold:
        return DefinitenessReport(
            method="max-at-origin",
            verdict="not-pd",
            witness={"r": 0.0, "value": f_origin, "f0": f_origin, "excess": -f_origin},
            tolerance=threshold,
        )
    values = _evaluate(f, r)
    excess = np.abs(values) - f_origin
    k = int(np.argmax(excess))
    details = {"f0": f_origin, "max_excess": float(excess[k])}
    if excess[k] > threshold:
        return DefinitenessReport(
            method="max-at-origin",
            verdict="not-pd",
            witness={"r": float(r[k]), "value": float(values[k]), "f0": f_origin, "excess": float(excess[k])},
            tolerance=threshold,
            details=details,
        )
    return DefinitenessReport(method="max-at-origin", verdict="pd-consistent", tolerance=threshold, details=details)


def cnd_test_via_exponential(
    gamma: Callable,
    s_values: Sequence[float],
    method: str = "fourier-periodic",
    period: Optional[float] = None,
    points=None,
    n_max: int = 8,
    breakpoints: Sequence[float] = (),
    tol: float = DEFAULT_TOL,
) -> DefinitenessReport:
    """gamma is CND iff exp(-s gamma) is PD for every s > 0."""
    gamma_origin = float(_evaluate(gamma, np.array([0.0]))[0])
    if not math.isfinite(gamma_origin):
        raise DomainError("gamma(0) must be finite")
    if method == "fourier-periodic" and period is None:
        raise DomainError("fourier-periodic method needs a period")
    if method == "gram-matrix" and points is None:
        raise DomainError("gram-matrix method needs points")
    if method not in ("fourier-periodic", "gram-matrix"):
        raise DomainError(f"unsupported method {method!r}")

    tested = []
    last: Optional[DefinitenessReport] = None
    for s in s_values:
        if not s > 0:
            raise DomainError(f"s values must be positive, got {s}")
        kernel = lambda r, s=s: np.exp(-s * _evaluate(gamma, r))
        if method == "fourier-periodic":
            report = fourier_pd_test(kernel, period, n_max=n_max, tol=tol, breakpoints=breakpoints)
        else:
            report = gram_pd_test(kernel, points, tol=tol)
        tested.append(float(s))
        last = report
        if report.violated:
            logger.info(f"exp(-{s} gamma) is not PD; gamma is not CND")
            return DefinitenessReport(
                method=method,
                verdict="not-cnd",
                witness={"s": float(s), **report.witness},
                tolerance=report.tolerance,
                details={"s_tested": tested, **report.details},
            )
    return DefinitenessReport(
        method=method,
        verdict="cnd-consistent",
        tolerance=last.tolerance if last else tol,
        details={"s_tested": tested},
    )


def reproduce_witness(report: DefinitenessReport, f: Callable) -> float:
    """Re-evaluate the violation a not-pd report's witness describes.

    Returns the violating quantity: a negative coefficient or eigenvalue-type
    quadratic form, or the positive excess over f(0).
    """
    if not report.violated:
        raise DomainError("report carries no violation")
    w = report.witness
    if report.method == "max-at-origin":
        f_origin = float(_evaluate(f, np.array([0.0]))[0])
        if w["r"] == 0.0:
            return -f_origin
        return abs(float(_evaluate(f, np.array([w["r"]]))[0])) - f_origin
    if report.method == "gram-matrix":
        pts = np.asarray(w["points"], dtype=float)
        a = np.asarray(w["coefficients"], dtype=float)
        gram = _evaluate(f, cdist(pts, pts))
        return float(a @ gram @ a)
    coeffs = fourier_coefficients(f, w["period"], w["index"], normalization=report.details.get("normalization", "integral"))
    return coeffs.values[w["index"]]
