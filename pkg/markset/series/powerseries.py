"""
Truncated power series with mpmath coefficients.

``PowerSeries([c0, c1, ..., cN])`` represents c0 + c1 x + ... + cN x**N where
terms above order N are unknown rather than zero. Binary operations truncate
to the lower of the two orders. Coefficients are ``mpmath.mpf`` values and all
arithmetic runs at the precision of the active mpmath context, so callers wrap
construction in ``mp.workprec(bits)``.
"""

from __future__ import annotations

from typing import Iterable, List, Union

from mpmath import mp, mpf

from markset.errors import DomainError

Number = Union[int, float, mpf]


class PowerSeries:
    """Truncated real power series."""

    __slots__ = ("c",)

    def __init__(self, coefficients: Iterable[Number], order: int = None):
        c = [mpf(x) for x in coefficients]
        if order is not None:
            if order < 0:
                raise DomainError(f"order cannot be negative, got {order}")
            c = (c + [mpf(0)] * (order + 1))[: order + 1]
        if not c:
            raise DomainError("power series needs at least one coefficient")
        self.c: List[mpf] = c

    @classmethod
    def constant(cls, value: Number, order: int) -> "PowerSeries":
        return cls([value], order=order)

    @classmethod
    def variable(cls, order: int) -> "PowerSeries":
        """The series for x itself."""
        return cls([0, 1], order=order)

    @property
    def order(self) -> int:
        return len(self.c) - 1

    def __len__(self) -> int:
        return len(self.c)

    def __getitem__(self, i):
        return self.c[i]

    def __iter__(self):
        return iter(self.c)

    def __repr__(self) -> str:
        head = ", ".join(mp.nstr(x, 8) for x in self.c[:6])
        return f"PowerSeries([{head}{', ...' if self.order > 5 else ''}], order={self.order})"

    def truncate(self, order: int) -> "PowerSeries":
        return PowerSeries(self.c[: order + 1], order=order)

    # -- ring operations ---------------------------------------------------

    def __add__(self, other):
        if isinstance(other, PowerSeries):
            n = min(self.order, other.order)
            return PowerSeries([a + b for a, b in zip(self.c[: n + 1], other.c[: n + 1])])
        c = list(self.c)
        c[0] = c[0] + other
        return PowerSeries(c)

    __radd__ = __add__

    def __neg__(self):
        return PowerSeries([-a for a in self.c])

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, PowerSeries):
            return PowerSeries([a * other for a in self.c])
        n = min(self.order, other.order)
        a, b = self.c, other.c
        out = []
        for k in range(n + 1):
            out.append(mp.fsum(a[i] * b[k - i] for i in range(k + 1)))
        return PowerSeries(out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, PowerSeries):
            if other == 0:
                raise ZeroDivisionError("division of a power series by zero")
            return PowerSeries([a / other for a in self.c])
        if other.c[0] == 0:
            raise ZeroDivisionError("divisor has zero constant term")
        n = min(self.order, other.order)
        b = other.c
        out: List[mpf] = []
        for k in range(n + 1):
            acc = self.c[k] - mp.fsum(out[i] * b[k - i] for i in range(k))
            out.append(acc / b[0])
        return PowerSeries(out)

    def __rtruediv__(self, other):
        return PowerSeries.constant(other, self.order) / self

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise DomainError("only nonnegative integer powers are supported")
        result = PowerSeries.constant(1, self.order)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    # -- analytic operations ----------------------------------------------

    def sqrt(self) -> "PowerSeries":
        """Principal square root; needs a positive constant term."""
        if self.c[0] <= 0:
            raise DomainError("sqrt needs a positive constant term")
        s0 = mp.sqrt(self.c[0])
        out = [s0]
        for k in range(1, self.order + 1):
            acc = self.c[k] - mp.fsum(out[i] * out[k - i] for i in range(1, k))
            out.append(acc / (2 * s0))
        return PowerSeries(out)

    def compose(self, inner: "PowerSeries") -> "PowerSeries":
        """self(inner(x)); ``inner`` must have a zero constant term."""
        if inner.c[0] != 0:
            raise DomainError("composition needs an inner series with zero constant term")
        n = min(self.order, inner.order)
        inner = inner.truncate(n)
        result = PowerSeries.constant(self.c[n], n)
        for coefficient in reversed(self.c[:n]):
            result = result * inner + coefficient
        return result

    def __call__(self, x):
        if isinstance(x, PowerSeries):
            return self.compose(x)
        return self.evaluate(x)

    def deriv(self) -> "PowerSeries":
        if self.order == 0:
            return PowerSeries([0])
        return PowerSeries([k * self.c[k] for k in range(1, self.order + 1)])

    def integ(self, constant: Number = 0) -> "PowerSeries":
        return PowerSeries([mpf(constant)] + [self.c[k] / (k + 1) for k in range(self.order + 1)])

    def evaluate(self, x: Number) -> mpf:
        """Horner evaluation of the truncated polynomial."""
        x = mp.mpmathify(x)
        acc = mpf(0)
        for coefficient in reversed(self.c):
            acc = acc * x + coefficient
        return acc

    def tail_bound(self, x: Number) -> mpf:
        """Bound on the neglected tail at |x| < 1, assuming |c_n| <= |c_N| for n > N."""
        x = abs(mp.mpmathify(x))
        if x >= 1:
            return mp.inf
        return abs(self.c[-1]) * x ** (self.order + 1) / (1 - x)

    def to_floats(self) -> List[float]:
        return [float(a) for a in self.c]

    def almost_equal(self, other: "PowerSeries", tol: Number) -> bool:
        n = min(self.order, other.order)
        return all(abs(a - b) <= tol for a, b in zip(self.c[: n + 1], other.c[: n + 1]))

