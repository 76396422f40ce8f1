"""Exact rational-complex scalars and coercion helpers.

States and inner products stay exact whenever every input was built from
rational data; operator norms always go through floating point.  The two
scalar worlds are :class:`QC` (a complex number with `Fraction` parts) and
the builtin ``complex``.  Mixing them silently degrades to ``complex``.
"""

from __future__ import annotations

from fractions import Fraction
from numbers import Integral


class QC:
    """Complex number with exact rational real and imaginary parts."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        object.__setattr__(self, "re", Fraction(re))
        object.__setattr__(self, "im", Fraction(im))

    def __setattr__(self, name, value):
        raise AttributeError("QC is immutable")

    # -- arithmetic ---------------------------------------------------
    def __add__(self, other):
        q = _lift(other)
        if q is not None:
            return QC(self.re + q.re, self.im + q.im)
        if isinstance(other, (float, complex)):
            return complex(self) + other
        return NotImplemented

    __radd__ = __add__

    def __neg__(self):
        return QC(-self.re, -self.im)

    def __sub__(self, other):
        q = _lift(other)
        if q is not None:
            return QC(self.re - q.re, self.im - q.im)
        if isinstance(other, (float, complex)):
            return complex(self) - other
        return NotImplemented

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __mul__(self, other):
        q = _lift(other)
        if q is not None:
            return QC(
                self.re * q.re - self.im * q.im,
                self.re * q.im + self.im * q.re,
            )
        if isinstance(other, (float, complex)):
            return complex(self) * other
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        q = _lift(other)
        if q is not None:
            d = q.re * q.re + q.im * q.im
            if d == 0:
                raise ZeroDivisionError("division by zero QC")
            return QC(
                (self.re * q.re + self.im * q.im) / d,
                (self.im * q.re - self.re * q.im) / d,
            )
        if isinstance(other, (float, complex)):
            return complex(self) / other
        return NotImplemented

    def __rtruediv__(self, other):
        q = _lift(other)
        if q is not None:
            return q.__truediv__(self)
        if isinstance(other, (float, complex)):
            return other / complex(self)
        return NotImplemented

    def __pow__(self, n):
        if not isinstance(n, Integral) or n < 0:
            return complex(self) ** n
        out = QC(1)
        base = self
        n = int(n)
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    # -- structure ----------------------------------------------------
    def conjugate(self):
        return QC(self.re, -self.im)

    def abs2(self) -> Fraction:
        """|z|^2 as an exact Fraction."""
        return self.re * self.re + self.im * self.im

    def __abs__(self) -> float:
        return abs(complex(self))

    def __complex__(self) -> complex:
        return complex(float(self.re), float(self.im))

    def __float__(self) -> float:
        if self.im != 0:
            raise ValueError("QC with nonzero imaginary part has no float value")
        return float(self.re)

    def __bool__(self) -> bool:
        return bool(self.re) or bool(self.im)

    def __eq__(self, other):
        q = _lift(other)
        if q is not None:
            return self.re == q.re and self.im == q.im
        if isinstance(other, (float, complex)):
            return complex(self) == other
        return NotImplemented

    def __hash__(self):
        if self.im == 0:
            return hash(self.re)
        return hash((self.re, self.im))

    def __repr__(self):
        if self.im == 0:
            return f"QC({self.re})"
        return f"QC({self.re}, {self.im})"


def _lift(value):
    """Lift exact numbers into QC; None signals an inexact or foreign type."""
    if isinstance(value, QC):
        return value
    if isinstance(value, (Integral, Fraction)):
        return QC(value)
    return None


QC_ZERO = QC(0)
QC_ONE = QC(1)


def as_scalar(value):
    """Normalize a user-supplied number to QC (exact) or complex (float)."""
    if isinstance(value, QC):
        return value
    if isinstance(value, (Integral, Fraction)):
        return QC(value)
    if isinstance(value, (float, complex)):
        return complex(value)
    raise TypeError(f"not a scalar: {value!r}")


def is_exact(value) -> bool:
    return isinstance(value, QC)


def conj(value):
    if isinstance(value, QC):
        return value.conjugate()
    return complex(value).conjugate()


def to_complex(value) -> complex:
    return complex(value)


def scalar_is_zero(value, tol: float = 0.0) -> bool:
    if isinstance(value, QC):
        return not bool(value)
    return abs(complex(value)) <= tol


def exact_sqrt(fr: Fraction):
    """Square root of a nonnegative Fraction if it is again rational, else None."""
    if fr < 0:
        raise ValueError("negative radicand")
    num, den = fr.numerator, fr.denominator
    rn = _isqrt_exact(num)
    rd = _isqrt_exact(den)
    if rn is None or rd is None:
        return None
    return Fraction(rn, rd)


def _isqrt_exact(n: int):
    import math

    r = math.isqrt(n)
    return r if r * r == n else None
