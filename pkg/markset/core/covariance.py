"""Stationary isotropic correlation functions R(r) with R(0) = 1."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import special

from markset.errors import DomainError

logger = logging.getLogger(__name__)

FAMILIES = ("gaussian", "exponential", "cosine", "matern", "constant", "tabulated")


@dataclass(frozen=True)
class CovarianceModel:
    """Correlation function of a centred unit-variance Gaussian field.

    ``second_deriv_at_zero`` is R''(0+): a finite negative number when the
    field is mean-square differentiable, ``-inf`` when it is not, and 0 only
    for R == 1 (the constant model or an all-ones table).
    """

    family: str
    length_scale: float = 1.0
    nu: Optional[float] = None
    table_r: Tuple[float, ...] = field(default_factory=tuple)
    table_values: Tuple[float, ...] = field(default_factory=tuple)
    tabulated_second_deriv: Optional[float] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown covariance family {self.family!r}; expected one of {FAMILIES}")
        if not (self.length_scale > 0 and math.isfinite(self.length_scale)):
            raise DomainError(f"length_scale must be positive and finite, got {self.length_scale}")
        if self.family == "matern" and (self.nu is None or self.nu <= 0):
            raise DomainError("matern family needs a positive smoothness nu")
        if self.family == "tabulated":
            self._validate_table()

    def _validate_table(self) -> None:
        r = np.asarray(self.table_r, dtype=float)
        v = np.asarray(self.table_values, dtype=float)
        if r.ndim != 1 or r.size < 2 or r.shape != v.shape:
            raise DomainError("tabulated model needs matching 1-D r and value tables with >= 2 entries")
        if r[0] != 0.0 or np.any(np.diff(r) <= 0):
            raise DomainError("table r must start at 0 and be strictly ascending")
        if not math.isclose(v[0], 1.0, abs_tol=1e-12):
            raise DomainError(f"tabulated R(0) must equal 1, got {v[0]}")
        if np.any(np.abs(v) > 1.0 + 1e-12):
            raise DomainError("tabulated |R(r)| must not exceed 1")
        if self.tabulated_second_deriv is None:
            raise DomainError("tabulated model needs an explicit second derivative at zero")
        if self.tabulated_second_deriv > 0:
            raise DomainError("R''(0+) must be <= 0")
        if self.tabulated_second_deriv == 0 and not np.allclose(v, 1.0, rtol=0.0, atol=1e-12):
            raise DomainError("R''(0+) = 0 is only valid for the constant table R == 1")

    @classmethod
    def gaussian(cls, length_scale: float = 1.0) -> "CovarianceModel":
        return cls("gaussian", length_scale)

    @classmethod
    def exponential(cls, length_scale: float = 1.0) -> "CovarianceModel":
        return cls("exponential", length_scale)

    @classmethod
    def cosine(cls, length_scale: float = 1.0) -> "CovarianceModel":
        return cls("cosine", length_scale)

    @classmethod
    def matern(cls, nu: float, length_scale: float = 1.0) -> "CovarianceModel":
        return cls("matern", length_scale, nu=nu)

    @classmethod
    def constant(cls) -> "CovarianceModel":
        return cls("constant")

    @classmethod
    def tabulated(
        cls, r: Sequence[float], values: Sequence[float], second_deriv_at_zero: float
    ) -> "CovarianceModel":
        return cls(
            "tabulated",
            table_r=tuple(float(x) for x in r),
            table_values=tuple(float(x) for x in values),
            tabulated_second_deriv=float(second_deriv_at_zero),
        )

    @property
    def is_constant(self) -> bool:
        if self.family == "tabulated":
            return self.tabulated_second_deriv == 0
        return self.family == "constant"

    @property
    def second_deriv_at_zero(self) -> float:
        ell = self.length_scale
        if self.family == "gaussian":
            return -2.0 / ell**2
        if self.family == "exponential":
            return -math.inf
        if self.family == "cosine":
            return -1.0 / ell**2
        if self.family == "matern":
            if self.nu <= 1.0:
                return -math.inf
            return -self.nu / ((self.nu - 1.0) * ell**2)
        if self.family == "constant":
            return 0.0
        return float(self.tabulated_second_deriv)

    def __call__(self, r):
        """Evaluate R at distance(s) ``r`` (scalar or array, r >= 0)."""
        r_arr = np.abs(np.asarray(r, dtype=float))
        s = r_arr / self.length_scale
        if self.family == "gaussian":
            out = np.exp(-s**2)
        elif self.family == "exponential":
            out = np.exp(-s)
        elif self.family == "cosine":
            out = np.cos(s)
        elif self.family == "matern":
            out = self._matern(s)
        elif self.family == "constant":
            out = np.ones_like(s)
        else:
            out = np.interp(r_arr, self.table_r, self.table_values)
        return float(out) if np.ndim(out) == 0 else out

    def _matern(self, s: np.ndarray) -> np.ndarray:
        nu = self.nu
        scaled = np.sqrt(2.0 * nu) * np.atleast_1d(s)
        out = np.ones_like(scaled)
        pos = scaled > 0
        x = scaled[pos]
        with np.errstate(over="ignore", invalid="ignore"):
            vals = (2.0 ** (1.0 - nu) / special.gamma(nu)) * x**nu * special.kv(nu, x)
        # kv underflows to 0 far out; x**nu overflows only there as well
        out[pos] = np.where(np.isfinite(vals), vals, 0.0)
        return out.reshape(np.shape(s))


def from_params(family: str, length_scale: float = 1.0, **params) -> CovarianceModel:
    """Build a model from flat config parameters."""
    if family == "matern":
        if params.get("nu") is None:
            raise DomainError("matern covariance needs a smoothness nu")
        return CovarianceModel.matern(params["nu"], length_scale)
    if family == "tabulated":
        return CovarianceModel.tabulated(params["r"], params["values"], params["second_deriv_at_zero"])
    if family == "constant":
        return CovarianceModel.constant()
    return CovarianceModel(family, length_scale)
