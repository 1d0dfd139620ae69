"""Suprema that bound the parareal contraction rate.

With a backward-Euler coarse step and a fine scheme with stability function
``r``, every spectral component of the parareal error contracts per iteration
by at most

    phi(J) = sup_{s > 0} | ((1 + s) r(-s/J)^J - 1) / s |,

where ``J`` is the coarse/fine step ratio.  As J grows ``r(-s/J)^J`` tends to
``exp(-s)`` and the factor tends to

    kappa_alpha = sup_{s > 0} | ((1 + s) exp(-alpha s) - 1) / s |,   alpha = 1.

Suprema over (0, inf) are split into a log-spaced interior scan, the two
endpoint limits, and a golden-section polish of the best interior samples.
The signed quantity is refined on its positive and negative sides separately
so the |.| kink never sits inside a refinement bracket.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DivergentFactor, DomainError, NoThreshold
from .polyrat import RationalFn

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0

KAPPA_GRID = 8192
KAPPA_S_MAX = 50.0
FACTOR_GRID = 16384
S_MIN = 1e-8


def golden_max(f: Callable[[float], float], a: float, b: float, tol: float = 1e-10,
               max_iter: int = 200) -> tuple[float, float]:
    """Maximise a unimodal ``f`` on [a, b]; returns ``(x, f(x))``."""
    x1 = b - INV_PHI * (b - a)
    x2 = a + INV_PHI * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + INV_PHI * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - INV_PHI * (b - a)
            f1 = f(x1)
    return (x1, f1) if f1 >= f2 else (x2, f2)


def _refine_signed(g: Callable[[np.ndarray], np.ndarray], s: np.ndarray, vals: np.ndarray,
                   tol: float) -> tuple[float, float]:
    """Sup of |g| from samples, polishing the largest positive and negative excursions."""
    best_s, best_v = float(s[0]), float(abs(vals[0]))
    for sign in (1.0, -1.0):
        sv = sign * vals
        i = int(np.argmax(sv))
        if sv[i] <= 0:
            continue
        if sv[i] > best_v:
            best_s, best_v = float(s[i]), float(sv[i])
        if 0 < i < len(s) - 1:
            x, v = golden_max(lambda x: sign * float(g(np.array([x]))[0]),
                              float(s[i - 1]), float(s[i + 1]), tol)
            if v > best_v:
                best_s, best_v = x, v
    return best_s, best_v


# ------------------------------------------------------------------ kappa


@dataclass(frozen=True)
class KappaValue:
    alpha: float
    kappa: float
    argsup_s: float
    # True when the sup is only reached in the limit s -> 0+ (argsup_s is then 0)
    at_zero_limit: bool = False


def kappa_profile(alpha: float, s: np.ndarray) -> np.ndarray:
    """Signed ``((1+s) exp(-alpha s) - 1) / s`` without cancellation at small s."""
    s = np.asarray(s, dtype=float)
    return (1.0 + s) * np.expm1(-alpha * s) / s + 1.0


def kappa_bound(alpha: float) -> float:
    """Elementary upper bound for kappa_alpha: e^(alpha-2), or max(e^(alpha-2), 1-alpha) below 1."""
    if alpha >= 1.0:
        return math.exp(alpha - 2.0)
    return max(math.exp(alpha - 2.0), 1.0 - alpha)


def kappa(alpha: float, grid: int = KAPPA_GRID, tol: float = 1e-10) -> KappaValue:
    if not 0.0 <= alpha <= 2.0:
        raise DomainError(f"alpha={alpha} outside [0, 2]")
    s = np.logspace(math.log10(S_MIN), math.log10(KAPPA_S_MAX), grid)
    g = lambda x: kappa_profile(alpha, x)
    arg, val = _refine_signed(g, s, g(s), tol)
    zero_limit = abs(1.0 - alpha)
    # the s -> inf limit is 0 and never wins; grid points at s ~ 1e-8 that
    # beat the s -> 0+ limit only by roundoff are the limit itself
    if zero_limit >= val - 1e-12:
        return KappaValue(alpha, zero_limit, 0.0, True)
    return KappaValue(alpha, val, arg, False)


def kappa_curve(n: int) -> list[KappaValue]:
    if n < 2:
        raise ValueError("kappa_curve needs n >= 2")
    return [kappa(float(a)) for a in np.linspace(0.0, 2.0, n)]


# ------------------------------------------------------- parareal factor


@dataclass(frozen=True)
class FactorReport:
    scheme: str
    J: int
    phi: float
    argmax_s: float
    tail_bound_used: bool
    grid_points: int


def factor_profile(r: RationalFn, J: int, s: np.ndarray) -> np.ndarray:
    """Signed ``((1+s) r(-s/J)^J - 1) / s``.

    ``r^J - 1`` is formed as ``expm1(J log1p(r - 1))`` wherever ``r`` is safely
    positive, with ``r - 1`` taken from the numerator ``num - den`` (whose
    constant term vanishes), so small s keeps full relative accuracy.
    """
    s = np.asarray(s, dtype=float)
    x = -s / J
    rm1 = r.minus_one()(x)
    rv = 1.0 + rm1
    out = np.empty_like(s)
    pos = rv > 0.5
    out[pos] = np.expm1(J * np.log1p(rm1[pos]))
    out[~pos] = rv[~pos] ** J - 1.0
    return (1.0 + s) * out / s + 1.0


def _tail_bound(r: RationalFn, J: int, s_right: float) -> float:
    """Bound on the factor for s beyond the scanned range.

    Uses |((1+s) r^J - 1)/s| <= (1+s)/s |r(-s/J)|^J + 1/s at the right end,
    with |r| there replaced by the larger of its value and its limit at -inf.
    """
    r_end = max(abs(float(r(-s_right / J))), abs(float(r.value_at_minus_infinity())))
    return (1.0 + s_right) / s_right * r_end**J + 1.0 / s_right


def parareal_factor(r: RationalFn, J: int, grid: int = FACTOR_GRID, tol: float = 1e-10,
                    scheme: str = "") -> FactorReport:
    if J < 1:
        raise DomainError("J must be at least 1")
    s_right = max(1e8, 100.0 * J)
    s = np.logspace(math.log10(S_MIN), math.log10(s_right), grid)
    g = lambda x: factor_profile(r, J, x)
    vals = g(s)
    arg, phi = _refine_signed(g, s, vals, tol)
    tail = _tail_bound(r, J, s_right)
    used = tail > phi
    if used:
        phi, arg = tail, s_right
    if not np.isfinite(phi) or phi > 1e3:
        raise DivergentFactor(f"factor {phi:.3g} for J={J}: r is not strongly stable enough")
    return FactorReport(scheme, J, phi, arg, used, grid)


@dataclass
class ThresholdReport:
    gamma: float
    J_star: int | None
    table: dict[int, float] = field(default_factory=dict)


def factor_table(r: RationalFn, J_values) -> dict[int, float]:
    return {int(J): parareal_factor(r, int(J)).phi for J in J_values}


def find_threshold(r: RationalFn, gamma: float, J_max: int = 64, J_min: int = 2) -> ThresholdReport:
    """Smallest J_* in [J_min, J_max] with phi(J) <= gamma for every J in [J_*, J_max].

    The scan starts at J = 2 by default: J = 1 means equal coarse and fine
    steps, which is not a parareal configuration.
    """
    if not 0.0 < gamma < 1.0:
        raise DomainError("gamma must lie in (0, 1)")
    if J_max > 1024 or J_max < J_min:
        raise DomainError("need J_min <= J_max <= 1024")
    table = factor_table(r, range(J_min, J_max + 1))
    J_star = None
    for J in range(J_max, J_min - 1, -1):
        if table[J] <= gamma:
            J_star = J
        else:
            break
    if J_star is None:
        raise NoThreshold(f"phi(J) > {gamma} at J_max={J_max}", table)
    return ThresholdReport(gamma, J_star, table)


# ------------------------------------------------------------ sandwich


@dataclass(frozen=True)
class SandwichReport:
    passed: bool
    worst_margin: float
    worst_s: float
    lower_ok: bool
    upper_ok: bool


def sandwich_check(r: RationalFn, alpha: float, beta: float, s_star: float,
                   points: int = 100_000) -> SandwichReport:
    """Check exp(-beta s) <= r(-s) <= exp(-alpha s) on (0, s_star]."""
    if not 0.0 < alpha < beta:
        raise DomainError("need 0 < alpha < beta")
    if s_star <= 0:
        raise DomainError("s_star must be positive")
    s = np.linspace(s_star / points, s_star, points)
    rm1 = r.minus_one()(-s)
    lower = rm1 - np.expm1(-beta * s)
    upper = np.expm1(-alpha * s) - rm1
    margin = np.minimum(lower, upper)
    i = int(np.argmin(margin))
    return SandwichReport(bool(margin[i] >= 0), float(margin[i]), float(s[i]),
                          bool(lower.min() >= 0), bool(upper.min() >= 0))


def tail_sup(r: RationalFn, s_star: float, s_max: float = 1e6, points: int = 1_000_000) -> float:
    """Dense-scan estimate of sup_{s > s_star} |r(-s)| (including the limit at infinity)."""
    s = np.concatenate([np.linspace(s_star, 100 * s_star, points // 2),
                        np.logspace(math.log10(100 * s_star), math.log10(s_max), points // 2)])
    return max(float(np.max(np.abs(r(-s)))), abs(float(r.value_at_minus_infinity())))
