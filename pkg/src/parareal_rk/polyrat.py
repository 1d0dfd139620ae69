"""Polynomials and rational functions with real coefficients.

Coefficients are stored in ascending order, ``coeffs[k]`` multiplies ``z**k``.
Nothing here reduces a rational function to lowest terms: every denominator
that shows up in this package is nonvanishing on the negative real axis, so
evaluation just guards against underflowing denominators instead.

The classes are generic over the coefficient type.  Floats are the normal
case; the scheme catalog also pushes ``mpmath.mpf`` coefficients through the
same code when it needs extended precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import DegreeOverflow, PoleError, ToleranceNotMet

DEGREE_CAP = 64
POLE_TOL = 1e-300


def _trim(coeffs: Iterable[Any]) -> tuple:
    c = list(coeffs)
    while len(c) > 1 and c[-1] == 0:
        c.pop()
    if not c:
        c = [0.0]
    return tuple(c)


@dataclass(frozen=True)
class Polynomial:
    coeffs: tuple

    def __init__(self, coeffs: Iterable[Any], cap: int = DEGREE_CAP):
        c = _trim(coeffs)
        if len(c) - 1 > cap:
            raise DegreeOverflow(f"polynomial degree {len(c) - 1} exceeds cap {cap}")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def constant(cls, value: Any) -> "Polynomial":
        return cls([value])

    @classmethod
    def monomial(cls, k: int, value: Any = 1.0) -> "Polynomial":
        return cls([0.0] * k + [value])

    def degree(self) -> int:
        """Degree of the polynomial; the zero polynomial reports -1."""
        if self.is_zero():
            return -1
        return len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return len(self.coeffs) == 1 and self.coeffs[0] == 0

    @property
    def leading(self) -> Any:
        return self.coeffs[-1]

    def __call__(self, z: Any) -> Any:
        # Horner; works for python scalars, numpy arrays and mpmath numbers
        acc = self.coeffs[-1] * (z * 0 + 1) if isinstance(z, np.ndarray) else self.coeffs[-1]
        for c in reversed(self.coeffs[:-1]):
            acc = acc * z + c
        return acc

    def derivative(self) -> "Polynomial":
        if len(self.coeffs) == 1:
            return Polynomial([self.coeffs[0] * 0])
        return Polynomial([k * c for k, c in enumerate(self.coeffs) if k > 0])

    def __neg__(self) -> "Polynomial":
        return Polynomial([-c for c in self.coeffs])

    def __add__(self, other: "Polynomial | float") -> "Polynomial":
        other = _as_poly(other)
        n = max(len(self.coeffs), len(other.coeffs))
        a = list(self.coeffs) + [0] * (n - len(self.coeffs))
        b = list(other.coeffs) + [0] * (n - len(other.coeffs))
        return Polynomial([x + y for x, y in zip(a, b)])

    __radd__ = __add__

    def __sub__(self, other: "Polynomial | float") -> "Polynomial":
        return self + (-_as_poly(other))

    def __rsub__(self, other: "Polynomial | float") -> "Polynomial":
        return _as_poly(other) - self

    def __mul__(self, other: "Polynomial | float") -> "Polynomial":
        if not isinstance(other, Polynomial):
            return self.scale(other)
        if self.is_zero() or other.is_zero():
            return Polynomial([self.coeffs[0] * 0])
        out = [self.coeffs[0] * 0] * (len(self.coeffs) + len(other.coeffs) - 1)
        for i, a in enumerate(self.coeffs):
            if a == 0:
                continue
            for j, b in enumerate(other.coeffs):
                out[i + j] = out[i + j] + a * b
        return Polynomial(out)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "Polynomial":
        if n < 0:
            raise ValueError("negative polynomial power")
        out = Polynomial([self.coeffs[0] * 0 + 1])
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base if n > 1 else base
            n >>= 1
        return out

    def scale(self, a: Any) -> "Polynomial":
        return Polynomial([a * c for c in self.coeffs])

    def compose_affine(self, a: Any, b: Any = 0.0) -> "Polynomial":
        """Return the polynomial ``z -> self(a*z + b)``."""
        inner = Polynomial([b, a])
        acc = Polynomial([self.coeffs[-1]])
        for c in reversed(self.coeffs[:-1]):
            acc = acc * inner + c
        return acc

    def chop(self, rtol: float = 1e-13) -> "Polynomial":
        """Drop trailing coefficients that are roundoff relative to the largest one."""
        scale = max(abs(c) for c in self.coeffs)
        c = list(self.coeffs)
        while len(c) > 1 and abs(c[-1]) <= rtol * scale:
            c.pop()
        return Polynomial(c)

    def max_abs_coeff(self) -> float:
        return float(max(abs(c) for c in self.coeffs))

    def to_float(self) -> "Polynomial":
        return Polynomial([float(c) for c in self.coeffs])

    def __repr__(self) -> str:
        return f"Polynomial({list(self.coeffs)!r})"


def _as_poly(x: Any) -> Polynomial:
    return x if isinstance(x, Polynomial) else Polynomial([x])


@dataclass(frozen=True)
class RationalFn:
    num: Polynomial
    den: Polynomial

    def __post_init__(self):
        if self.den.is_zero():
            raise ZeroDivisionError("rational function with zero denominator")

    @classmethod
    def from_coeffs(cls, num: Sequence[Any], den: Sequence[Any]) -> "RationalFn":
        return cls(Polynomial(num), Polynomial(den))

    @classmethod
    def constant(cls, value: Any) -> "RationalFn":
        return cls(Polynomial([value]), Polynomial([1.0]))

    def eval(self, z: Any) -> Any:
        d = self.den(z)
        if np.any(np.abs(d) < POLE_TOL):
            raise PoleError(f"denominator underflows at z={z!r}")
        return self.num(z) / d

    __call__ = eval

    def minus_one(self) -> "RationalFn":
        """``self - 1`` kept over the same denominator (accurate near r = 1)."""
        return RationalFn(self.num - self.den, self.den)

    def value_at_infinity(self) -> float:
        dn, dd = self.num.degree(), self.den.degree()
        if dn < dd:
            return 0.0
        ratio = self.num.leading / self.den.leading
        if dn == dd:
            return ratio
        return math.copysign(math.inf, float(ratio))

    def value_at_minus_infinity(self) -> float:
        """Limit of ``self(z)`` as z runs to -infinity along the real axis."""
        dn, dd = self.num.degree(), self.den.degree()
        if dn <= dd:
            return self.value_at_infinity()
        sign = float(self.num.leading / self.den.leading) * (-1) ** (dn - dd)
        return math.copysign(math.inf, sign)

    def __add__(self, other: "RationalFn | float") -> "RationalFn":
        other = _as_rational(other)
        return RationalFn(self.num * other.den + other.num * self.den, self.den * other.den)

    __radd__ = __add__

    def __neg__(self) -> "RationalFn":
        return RationalFn(-self.num, self.den)

    def __sub__(self, other: "RationalFn | float") -> "RationalFn":
        return self + (-_as_rational(other))

    def __mul__(self, other: "RationalFn | float") -> "RationalFn":
        if not isinstance(other, RationalFn):
            return self.scale(other)
        return RationalFn(self.num * other.num, self.den * other.den)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "RationalFn":
        return RationalFn(self.num**n, self.den**n)

    def scale(self, a: Any) -> "RationalFn":
        return RationalFn(self.num.scale(a), self.den)

    def compose_affine(self, a: Any, b: Any = 0.0) -> "RationalFn":
        """Return ``z -> self(a*z + b)``."""
        return RationalFn(self.num.compose_affine(a, b), self.den.compose_affine(a, b))

    def to_float(self) -> "RationalFn":
        return RationalFn(self.num.to_float(), self.den.to_float())

    def __repr__(self) -> str:
        return f"RationalFn(num={list(self.num.coeffs)!r}, den={list(self.den.coeffs)!r})"


def _as_rational(x: Any) -> RationalFn:
    return x if isinstance(x, RationalFn) else RationalFn.constant(x)


def add(f: RationalFn, g: RationalFn) -> RationalFn:
    return f + g


def mul(f: RationalFn, g: RationalFn) -> RationalFn:
    return f * g


def scale(f: RationalFn, a: float) -> RationalFn:
    return f.scale(a)


def compose_affine(f: RationalFn, a: float, b: float = 0.0) -> RationalFn:
    return f.compose_affine(a, b)


def _bisect_newton(p: Polynomial, dp: Polynomial, a: float, b: float, tol: float) -> float:
    """Root of ``p`` in the sign-change bracket [a, b].

    Newton steps are taken while they stay inside the bracket; otherwise the
    bracket is bisected.  The bracket always shrinks, so this terminates.
    """
    fa = p(a)
    if fa == 0:
        return a
    if p(b) == 0:
        return b
    x = 0.5 * (a + b)
    for _ in range(100):
        fx = p(x)
        if fx == 0:
            return x
        if (fx < 0) == (fa < 0):
            a, fa = x, fx
        else:
            b = x
        d = dp(x)
        newton_ok = False
        if d != 0:
            x_new = x - fx / d
            if a < x_new < b:
                newton_ok = True
                if abs(x_new - x) < tol:
                    return x_new
                x = x_new
        if not newton_ok:
            x = 0.5 * (a + b)
        if b - a < tol:
            return 0.5 * (a + b)
    # Newton never settled: plain bisection on what is left of the bracket
    for _ in range(2000):
        if b - a < tol:
            return 0.5 * (a + b)
        m = 0.5 * (a + b)
        fm = p(m)
        if fm == 0:
            return m
        if (fm < 0) == (fa < 0):
            a, fa = m, fm
        else:
            b = m
    raise ToleranceNotMet(f"root bracket [{a}, {b}] did not shrink below {tol}")


def real_roots_in(
    p: Polynomial, lo: float, hi: float, tol: float = 1e-12, grid: int = 4096
) -> list[float]:
    """Real roots of ``p`` in [lo, hi], sorted.

    Simple roots are bracketed by sign changes on a uniform grid and polished
    with safeguarded Newton.  Even-multiplicity roots do not change sign; they
    are picked up as critical points of ``p`` where ``p`` itself is (numerically)
    zero, which only works down to the grid resolution.
    """
    if not lo < hi:
        raise ValueError("real_roots_in needs lo < hi")
    if p.is_zero():
        raise ValueError("the zero polynomial has no isolated roots")
    p = p.to_float()
    dp = p.derivative()
    xs = np.linspace(lo, hi, grid + 1)
    ys = p(xs)
    scale_tol = tol * max(1.0, p.max_abs_coeff())

    roots: list[float] = []
    for i in range(grid):
        y0, y1 = ys[i], ys[i + 1]
        if y0 == 0:
            roots.append(float(xs[i]))
        elif y0 * y1 < 0:
            roots.append(_bisect_newton(p, dp, float(xs[i]), float(xs[i + 1]), tol))
    if ys[-1] == 0:
        roots.append(float(xs[-1]))

    # touching roots: sign change of p' with |p| ~ 0 at the critical point
    if dp.degree() >= 1:
        ddp = dp.derivative()
        dys = dp(xs)
        for i in range(grid):
            if dys[i] * dys[i + 1] < 0:
                xc = _bisect_newton(dp, ddp, float(xs[i]), float(xs[i + 1]), tol)
                if abs(p(xc)) <= scale_tol and all(abs(xc - r) > 10 * tol for r in roots):
                    roots.append(xc)

    roots.sort()
    merged: list[float] = []
    for r in roots:
        if not merged or abs(r - merged[-1]) > 10 * tol:
            merged.append(r)
    return merged
