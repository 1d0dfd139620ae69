"""The parareal iteration with a cheap coarse and an accurate fine propagator.

Any object with ``step(t, v) -> u`` and a ``dt`` attribute can serve as a
propagator.  Fine sweeps over the coarse subintervals run on a thread pool
(the tridiagonal and banded solves release the GIL); the coarse corrections
run serially in time order.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Literal, Protocol, Sequence

import numpy as np

from .errors import DomainError, InsufficientData

ERROR_FLOOR = 1e-12
FIT_WINDOW = (1e-11, 1e-1)
CSV_COLUMNS = ("k", "max_error", "factor_estimate", "fine_sweep_ms")


class Propagator(Protocol):
    dt: float

    def step(self, t: float, v: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class PararealConfig:
    N_c: int
    J: int
    dt: float
    K_max: int = 10
    stop: Literal["fixed", "tolerance"] = "fixed"
    tol: float = 1e-10
    initial_guess: Literal["coarse", "constant"] = "coarse"
    threads: int = 1

    def __post_init__(self):
        if self.N_c < 1:
            raise DomainError("N_c must be at least 1")
        if self.J < 1:
            raise DomainError("J must be at least 1")
        if self.K_max < 1:
            raise DomainError("K_max must be at least 1")
        if self.dt <= 0:
            raise DomainError("dt must be positive")
        if self.stop not in ("fixed", "tolerance"):
            raise DomainError(f"unknown stop rule {self.stop!r}")
        if self.initial_guess not in ("coarse", "constant"):
            raise DomainError(f"unknown initial guess {self.initial_guess!r}")
        if self.threads < 1:
            raise DomainError("threads must be at least 1")

    @property
    def dT(self) -> float:
        return self.J * self.dt

    @property
    def T(self) -> float:
        return self.N_c * self.J * self.dt

    @classmethod
    def for_horizon(cls, T: float, dt: float, J: int, **kw) -> "PararealConfig":
        """Config whose coarse grid covers [0, T]; T must be a multiple of J*dt."""
        n = T / (J * dt)
        N_c = int(round(n))
        if N_c < 1 or abs(N_c * J * dt - T) > 1e-12 * max(1.0, T):
            raise DomainError(f"T={T} is not a multiple of J*dt={J * dt}")
        return cls(N_c=N_c, J=J, dt=dt, **kw)


@dataclass
class IterationHistory:
    errors: list[float] = field(default_factory=list)
    profiles: list[np.ndarray] = field(default_factory=list)
    fine_ms: list[float] = field(default_factory=list)
    converged: bool = False
    budget_exceeded: bool = False
    iterates: list[np.ndarray] | None = None

    @property
    def iterations(self) -> int:
        """Number of corrections performed (k = 0 is the initial guess)."""
        return len(self.errors) - 1

    def ratios(self) -> list[float]:
        e = self.errors
        return [e[k + 1] / e[k] if e[k] > 0 else math.nan for k in range(len(e) - 1)]

    def factor_estimates(self) -> list[float]:
        return [math.nan] + self.ratios()

    def rows(self) -> list[tuple]:
        est = self.factor_estimates()
        ms = [math.nan] + list(self.fine_ms)
        return [(k, self.errors[k], est[k], ms[k] if k < len(ms) else math.nan)
                for k in range(len(self.errors))]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for k, e, f, ms in self.rows():
                w.writerow([k, repr(float(e)), repr(float(f)), repr(float(ms))])


def fine_sweep(fine: Propagator, t0: float, v: np.ndarray, J: int) -> np.ndarray:
    u = v
    for j in range(J):
        u = fine.step(t0 + j * fine.dt, u)
    return u


def sequential_fine_reference(fine: Propagator, u0: np.ndarray, cfg: PararealConfig) -> list[np.ndarray]:
    """States u^{nJ}, n = 0..N_c, of plain serial fine time stepping."""
    out = [np.asarray(u0, dtype=float)]
    u = out[0]
    for n in range(cfg.N_c):
        u = fine_sweep(fine, n * cfg.dT, u, cfg.J)
        out.append(u)
    return out


def _error_profile(U: Sequence[np.ndarray], ref: Sequence[np.ndarray],
                   norm: Callable[[np.ndarray], float]) -> np.ndarray:
    return np.array([norm(U[n] - ref[n]) for n in range(1, len(ref))])


def run(coarse: Propagator, fine: Propagator, u0: np.ndarray, cfg: PararealConfig,
        norm: Callable[[np.ndarray], float] | None = None,
        reference: Sequence[np.ndarray] | None = None,
        keep_iterates: bool = False) -> IterationHistory:
    """Parareal iteration; errors are measured against the serial fine solution.

    ``norm`` defaults to the Euclidean norm; pass the mass norm for finite
    element states.  ``reference`` may be supplied to avoid recomputing it.
    """
    if abs(coarse.dt - cfg.dT) > 1e-12 * cfg.dT or abs(fine.dt - cfg.dt) > 1e-12 * cfg.dt:
        raise DomainError("propagator step sizes do not match the configuration")
    norm = norm or (lambda e: float(np.linalg.norm(e)))
    if reference is None:
        reference = sequential_fine_reference(fine, u0, cfg)
    N, dT = cfg.N_c, cfg.dT
    u0 = np.asarray(u0, dtype=float)

    U = [u0]
    if cfg.initial_guess == "coarse":
        for n in range(N):
            U.append(coarse.step(n * dT, U[n]))
    else:
        U += [u0.copy() for _ in range(N)]
    G_old = [None] + [coarse.step(n * dT, U[n]) for n in range(N)]

    hist = IterationHistory(iterates=[list(U)] if keep_iterates else None)
    prof = _error_profile(U, reference, norm)
    hist.profiles.append(prof)
    hist.errors.append(float(prof.max()))

    pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
    try:
        for k in range(cfg.K_max):
            t0 = time.perf_counter()
            if pool is None:
                Ft = [fine_sweep(fine, n * dT, U[n], cfg.J) for n in range(N)]
            else:
                Ft = list(pool.map(lambda n: fine_sweep(fine, n * dT, U[n], cfg.J), range(N)))
            hist.fine_ms.append(1e3 * (time.perf_counter() - t0))

            new = [u0]
            G_new: list = [None]
            for n in range(N):
                g = coarse.step(n * dT, new[n])
                G_new.append(g)
                new.append(g + Ft[n] - G_old[n + 1])
            change = max(norm(new[n] - U[n]) for n in range(1, N + 1))
            U, G_old = new, G_new

            if keep_iterates:
                hist.iterates.append(list(U))
            prof = _error_profile(U, reference, norm)
            hist.profiles.append(prof)
            hist.errors.append(float(prof.max()))
            if cfg.stop == "tolerance" and change <= cfg.tol:
                hist.converged = True
                break
    finally:
        if pool is not None:
            pool.shutdown()
    if cfg.stop == "tolerance" and not hist.converged:
        hist.budget_exceeded = True
    if cfg.stop == "fixed":
        hist.converged = True
    return hist


def measured_factor(errors: IterationHistory | Sequence[float],
                    window: tuple[float, float] = FIT_WINDOW, min_points: int = 4) -> float:
    """exp of the least-squares slope of log(error) against k over the linear regime."""
    e = errors.errors if isinstance(errors, IterationHistory) else list(errors)
    lo, hi = window
    pts = [(k, math.log(x)) for k, x in enumerate(e) if lo <= x <= hi]
    if len(pts) < min_points:
        raise InsufficientData(f"only {len(pts)} iterations inside the fit window {window}")
    k, y = np.array(pts).T
    slope = np.polyfit(k, y, 1)[0]
    return float(math.exp(slope))
