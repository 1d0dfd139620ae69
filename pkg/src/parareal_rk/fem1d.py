"""Piecewise-linear Galerkin discretization of -d^2/dx^2 on (0, pi).

Uniform mesh with ``M`` intervals.  Dirichlet problems keep the ``M - 1``
interior nodes as unknowns; Neumann problems keep all ``M + 1`` nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Literal

import numpy as np
from scipy.linalg import lapack

from .errors import MeshTooCoarse, SingularMatrix

BC = Literal["dirichlet", "neumann"]


@dataclass(frozen=True)
class Mesh1D:
    M: int
    bc: BC = "dirichlet"
    length: float = math.pi

    def __post_init__(self):
        if self.bc not in ("dirichlet", "neumann"):
            raise ValueError(f"unknown boundary condition {self.bc!r}")
        if self.M < 3:
            raise MeshTooCoarse(f"need at least 3 intervals, got M={self.M}")

    @property
    def h(self) -> float:
        return self.length / self.M

    @cached_property
    def all_nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.M + 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        """Coordinates of the unknowns."""
        x = self.all_nodes
        return x[1:-1] if self.bc == "dirichlet" else x

    @property
    def ndof(self) -> int:
        return self.M - 1 if self.bc == "dirichlet" else self.M + 1


@dataclass(frozen=True)
class TriMatrix:
    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray

    def __post_init__(self):
        n = len(self.diag)
        if len(self.sub) != n - 1 or len(self.sup) != n - 1:
            raise ValueError("band lengths do not match the dimension")

    @property
    def n(self) -> int:
        return len(self.diag)

    @property
    def dtype(self):
        return np.result_type(self.sub, self.diag, self.sup)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """``A @ x`` for a vector or for an (n, k) block of columns."""
        x = np.asarray(x)
        d = self.diag if x.ndim == 1 else self.diag[:, None]
        lo = self.sub if x.ndim == 1 else self.sub[:, None]
        up = self.sup if x.ndim == 1 else self.sup[:, None]
        y = d * x
        y[1:] += lo * x[:-1]
        y[:-1] += up * x[1:]
        return y

    __matmul__ = matvec

    def __add__(self, other: "TriMatrix") -> "TriMatrix":
        return TriMatrix(self.sub + other.sub, self.diag + other.diag, self.sup + other.sup)

    def __mul__(self, a: complex) -> "TriMatrix":
        return TriMatrix(a * self.sub, a * self.diag, a * self.sup)

    __rmul__ = __mul__

    @property
    def T(self) -> "TriMatrix":
        return TriMatrix(self.sup.copy(), self.diag.copy(), self.sub.copy())

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.sub, -1) + np.diag(self.sup, 1)

    def to_banded(self) -> np.ndarray:
        """(3, n) layout expected by :func:`scipy.linalg.solve_banded` with (1, 1)."""
        ab = np.zeros((3, self.n), dtype=self.dtype)
        ab[0, 1:] = self.sup
        ab[1] = self.diag
        ab[2, :-1] = self.sub
        return ab


def combine(alpha: complex, mass: TriMatrix, beta: complex, stiffness: TriMatrix) -> TriMatrix:
    """``alpha * mass + beta * stiffness``."""
    return mass * alpha + stiffness * beta


@dataclass(frozen=True)
class FemSystem:
    mesh: Mesh1D
    mass: TriMatrix
    stiffness: TriMatrix

    @property
    def ndof(self) -> int:
        return self.mass.n

    def norm(self, e: np.ndarray) -> float:
        """Discrete L2 norm sqrt(e^T M e)."""
        return mass_norm(self.mass, e)


def assemble(mesh: Mesh1D, lumped: bool = False) -> tuple[TriMatrix, TriMatrix]:
    """Mass and stiffness matrices; ``lumped`` replaces the mass by its row sums."""
    h, n = mesh.h, mesh.ndof
    md = np.full(n, 4.0 * h / 6.0)
    mo = np.full(n - 1, h / 6.0)
    kd = np.full(n, 2.0 / h)
    ko = np.full(n - 1, -1.0 / h)
    if mesh.bc == "neumann":
        md[[0, -1]] = h / 3.0
        kd[[0, -1]] = 1.0 / h
    if lumped:
        # row sums of the unreduced matrix: h inside, h/2 at a Neumann end
        rows = np.full(n, h)
        if mesh.bc == "neumann":
            rows[[0, -1]] = h / 2.0
        mass = TriMatrix(np.zeros(n - 1), rows, np.zeros(n - 1))
    else:
        mass = TriMatrix(mo, md, mo.copy())
    return mass, TriMatrix(ko, kd, ko.copy())


def fem_system(mesh: Mesh1D, lumped: bool = False) -> FemSystem:
    mass, stiffness = assemble(mesh, lumped)
    return FemSystem(mesh, mass, stiffness)


def mass_norm(mass: TriMatrix, e: np.ndarray) -> float:
    return math.sqrt(max(float(np.real(np.vdot(e, mass.matvec(e)))), 0.0))


# ------------------------------------------------------------- projection


@dataclass(frozen=True)
class Indicator:
    """Characteristic function of the open interval (lo, hi)."""

    lo: float
    hi: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return ((x > self.lo) & (x < self.hi)).astype(float)


def indicator_load(mesh: Mesh1D, f: Indicator) -> np.ndarray:
    """Exact integrals of the indicator against every hat function."""
    x = mesh.all_nodes
    h = mesh.h
    a = np.clip(np.maximum(x[:-1], f.lo), x[:-1], x[1:])
    b = np.clip(np.minimum(x[1:], f.hi), x[:-1], x[1:])
    b = np.maximum(a, b)
    # on element [x_k, x_k+1]: left hat (x_k+1 - x)/h, right hat (x - x_k)/h
    left = ((x[1:] - a) ** 2 - (x[1:] - b) ** 2) / (2.0 * h)
    right = ((b - x[:-1]) ** 2 - (a - x[:-1]) ** 2) / (2.0 * h)
    load = np.zeros(mesh.M + 1)
    load[:-1] += left
    load[1:] += right
    return load[1:-1] if mesh.bc == "dirichlet" else load


def project(mesh: Mesh1D, f: Callable, mass: TriMatrix | None = None) -> np.ndarray:
    """Finite element representation of ``f``.

    Continuous data is interpolated at the nodes.  An :class:`Indicator` is
    L2-projected instead (exact element integrals, then a mass solve), so a
    node sitting on a jump gets the projected value rather than 0 or 1.
    """
    if isinstance(f, Indicator):
        if mass is None:
            mass, _ = assemble(mesh)
        return np.real(solve_tri(mass, indicator_load(mesh, f)))
    return np.asarray(f(mesh.nodes), dtype=float)


# ---------------------------------------------------------------- solvers


def solve_tri(A: TriMatrix, rhs: np.ndarray) -> np.ndarray:
    """Thomas algorithm for ``A x = rhs`` (real or complex, one or many right-hand sides).

    No pivoting: fine for the diagonally dominant and SPD pencils used here.
    """
    n = A.n
    dtype = np.result_type(A.dtype, np.asarray(rhs).dtype, float)
    b = np.asarray(rhs, dtype=dtype).copy()
    cp = np.empty(n - 1, dtype=dtype)
    scale = max(float(np.max(np.abs(A.diag))), 1e-300)
    piv = A.diag[0]
    if abs(piv) <= 1e-14 * scale:
        raise SingularMatrix("zero pivot in row 0")
    if n > 1:
        cp[0] = A.sup[0] / piv
    b[0] = b[0] / piv
    for i in range(1, n):
        piv = A.diag[i] - A.sub[i - 1] * cp[i - 1]
        if abs(piv) <= 1e-14 * scale:
            raise SingularMatrix(f"zero pivot in row {i}")
        if i < n - 1:
            cp[i] = A.sup[i] / piv
        b[i] = (b[i] - A.sub[i - 1] * b[i - 1]) / piv
    for i in range(n - 2, -1, -1):
        b[i] = b[i] - cp[i] * b[i + 1]
    return b


class TriFactor:
    """LU factorization of a tridiagonal matrix, reused across many solves."""

    def __init__(self, A: TriMatrix):
        self.n = A.n
        self.complex = np.iscomplexobj(A.sub) or np.iscomplexobj(A.diag) or np.iscomplexobj(A.sup)
        self._small = A if A.n < 3 else None  # scipy's ?gttrf wrapper rejects n = 2
        if self._small is not None:
            solve_tri(A, np.ones(A.n))  # pivot check
            return
        dt = complex if self.complex else float
        gttrf = lapack.zgttrf if self.complex else lapack.dgttrf
        self._gttrs = lapack.zgttrs if self.complex else lapack.dgttrs
        dl, d, du, du2, ipiv, info = gttrf(
            np.asarray(A.sub, dtype=dt), np.asarray(A.diag, dtype=dt), np.asarray(A.sup, dtype=dt)
        )
        if info != 0:
            raise SingularMatrix(f"tridiagonal factorization failed (info={info})")
        self._lu = (dl, d, du, du2, ipiv)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs)
        if self._small is not None:
            return solve_tri(self._small, rhs)
        if not self.complex and np.iscomplexobj(rhs):
            return self.solve(rhs.real) + 1j * self.solve(rhs.imag)
        x, info = self._gttrs(*self._lu, rhs.astype(complex if self.complex else float))
        if info != 0:
            raise SingularMatrix(f"tridiagonal solve failed (info={info})")
        return x
