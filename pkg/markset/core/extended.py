"""Extended reals: a finite value or minus infinity."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class ExtendedReal:
    """Tagged value ``finite`` or ``neg_inf``.

    One-sided derivatives of the excursion-set characteristics are either
    finite or diverge to minus infinity; both outcomes are legitimate results
    and are kept distinguishable from a numeric ``-inf`` produced by overflow.
    """

    value: float
    kind: str = "finite"

    def __post_init__(self):
        if self.kind not in ("finite", "neg_inf"):
            raise ValueError(f"unknown extended-real kind {self.kind!r}")
        if self.kind == "finite" and not math.isfinite(self.value):
            raise ValueError("finite extended real needs a finite value")

    @classmethod
    def finite(cls, value: float) -> "ExtendedReal":
        return cls(float(value), "finite")

    @classmethod
    def neg_inf(cls) -> "ExtendedReal":
        return cls(-math.inf, "neg_inf")

    @property
    def is_finite(self) -> bool:
        return self.kind == "finite"

    def __float__(self) -> float:
        return self.value

    def __str__(self) -> str:
        return f"{self.value:.12g}" if self.is_finite else "-inf"
