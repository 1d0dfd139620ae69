"""One-step solution operators for the semi-discrete problems.

Linear problems  M u' + K u = M F(t)  (Dirichlet, forcing F interpolated at
the nodes) and the Allen-Cahn problem  M u' + K u = M f(u)  with
f(u) = (u - u^3)/eps^2 (Neumann, f applied nodally).

Coarse operators are backward Euler (semi-implicit in the nonlinear case).
Fine operators are implicit Runge-Kutta steps with stages

    M U_i = M v + dt sum_j a_ij (-K U_j + M G_j),
    u+    = v + dt M^{-1} sum_i b_i (-K U_i + M G_i),

where G_j is the forcing at t + c_j dt or f(U_j).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from .errors import NewtonDiverged, NonDiagonalizableTableau, SingularMatrix
from .fem1d import FemSystem, TriFactor, TriMatrix, combine
from .schemes import ButcherTableau, SchemeSpec

Forcing = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class LinearProblem:
    fem: FemSystem
    forcing: Forcing | None
    T: float
    u0: np.ndarray

    def load(self, t: float) -> np.ndarray:
        """``M F(t)`` with F interpolated at the unknowns."""
        if self.forcing is None:
            return np.zeros(self.fem.ndof)
        return self.fem.mass.matvec(np.asarray(self.forcing(self.fem.mesh.nodes, t), dtype=float))


@dataclass(frozen=True)
class SemilinearProblem:
    fem: FemSystem
    epsilon: float
    T: float
    u0: np.ndarray

    def __post_init__(self):
        if self.fem.mesh.bc != "neumann":
            raise ValueError("the Allen-Cahn problem is posed with Neumann boundary conditions")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")

    def f(self, u: np.ndarray) -> np.ndarray:
        return (u - u**3) / self.epsilon**2

    def df(self, u: np.ndarray) -> np.ndarray:
        return (1.0 - 3.0 * u**2) / self.epsilon**2


@dataclass(frozen=True)
class NewtonConfig:
    tol: float = 1e-11
    max_iter: int = 25


# ------------------------------------------------------- diagonalization


@dataclass(frozen=True)
class StageDecomposition:
    eigenvalues: np.ndarray
    V: np.ndarray
    V_inv: np.ndarray
    # conj[i] = j when eigenpair j is the complex conjugate of pair i (i < j),
    # so stage i is solved and stage j is its conjugate; -1 otherwise
    conj: tuple[int, ...] = ()

    @classmethod
    def of(cls, A: np.ndarray, tol: float = 1e-12) -> "StageDecomposition":
        A = np.asarray(A, dtype=float)
        lam, V = np.linalg.eig(A)
        order = np.lexsort((lam.imag, lam.real))
        lam, V = lam[order], V[:, order]
        m = len(lam)
        conj = [-1] * m
        taken = set()
        for i in range(m):
            if i in taken or abs(lam[i].imag) <= 1e-14:
                continue
            j = min((k for k in range(m) if k != i and k not in taken),
                    key=lambda k: abs(lam[k] - np.conj(lam[i])))
            if abs(lam[j] - np.conj(lam[i])) > 1e-10:
                continue
            lam[j], V[:, j] = np.conj(lam[i]), np.conj(V[:, i])
            conj[i] = j
            taken.update((i, j))
        if np.linalg.cond(V) > 1e8:
            raise NonDiagonalizableTableau("Butcher matrix eigenvectors are (nearly) dependent")
        V_inv = np.linalg.inv(V)
        err = np.max(np.abs(V @ np.diag(lam) @ V_inv - A))
        if err > tol * max(1.0, np.max(np.abs(A))):
            raise NonDiagonalizableTableau(f"diagonalization residual {err:.2e}")
        return cls(lam, V, V_inv, tuple(conj))

    def solved_stages(self) -> list[int]:
        """Stages that need an actual solve; the rest are conjugates."""
        partners = {j for j in self.conj if j >= 0}
        return [i for i in range(len(self.eigenvalues)) if i not in partners]


def stage_band(A: np.ndarray, dt: float, mass: TriMatrix, ops: list[TriMatrix]) -> np.ndarray:
    """Banded storage of the stage matrix with blocks ``d_ij M + dt a_ij L_j``.

    Unknowns are ordered node-major (all stages of node 0, then node 1, ...),
    so the matrix has half-bandwidth 2m - 1.  The layout is the one taken by
    :func:`scipy.linalg.solve_banded` with ``(2m-1, 2m-1)``.
    """
    m, n = len(ops), mass.n
    bw = 2 * m - 1
    ab = np.zeros((2 * bw + 1, m * n))
    rows_sub = np.arange(1, n)
    rows_diag = np.arange(n)
    for j, L in enumerate(ops):
        for i in range(m):
            a = dt * A[i, j]
            eye = 1.0 if i == j else 0.0
            bands = (
                (rows_sub, rows_sub - 1, eye * mass.sub + a * L.sub),
                (rows_diag, rows_diag, eye * mass.diag + a * L.diag),
                (rows_sub - 1, rows_sub, eye * mass.sup + a * L.sup),
            )
            for r, c, val in bands:
                gr, gc = r * m + i, c * m + j
                ab[bw + gr - gc, gc] = val
    return ab


class BandedLU:
    """LAPACK band LU of a matrix given in :func:`stage_band` layout."""

    def __init__(self, ab: np.ndarray):
        self.bw = (ab.shape[0] - 1) // 2
        work = np.zeros((3 * self.bw + 1, ab.shape[1]))
        work[self.bw:] = ab
        lu, piv, info = lapack.dgbtrf(work, self.bw, self.bw)
        if info != 0:
            raise SingularMatrix(f"band factorization failed (info={info})")
        self._lu, self._piv = lu, piv

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        x, info = lapack.dgbtrs(self._lu, self.bw, self.bw, rhs, self._piv)
        if info != 0:
            raise SingularMatrix(f"band solve failed (info={info})")
        return x


def _real_if_close(z: complex) -> complex | float:
    return z.real if abs(z.imag) <= 1e-14 * max(1.0, abs(z)) else z


# --------------------------------------------------------------- linear


class LinearCoarse:
    """Backward Euler over ``dT`` with the forcing taken at the left endpoint."""

    def __init__(self, problem: LinearProblem, dT: float):
        if dT <= 0:
            raise ValueError("dT must be positive")
        self.problem, self.dt = problem, dT
        fem = problem.fem
        self._lu = TriFactor(combine(1.0, fem.mass, dT, fem.stiffness))

    def step(self, t: float, v: np.ndarray) -> np.ndarray:
        rhs = self.problem.fem.mass.matvec(v) + self.dt * self.problem.load(t)
        return self._lu.solve(rhs)


class LinearFine:
    """Implicit Runge-Kutta step of size ``dt`` for a :class:`LinearProblem`.

    ``method="diag"`` decouples the stage system through the eigenvectors of
    the Butcher matrix (m complex tridiagonal solves).  Tableaus whose matrix
    cannot be diagonalized fall back to ``"banded"``, one LU of the whole
    block system in node-major band storage.  ``"dense"`` does the same with
    a plain dense LU and is only meant as a cross-check.
    """

    def __init__(self, problem: LinearProblem, scheme: SchemeSpec, dt: float, method: str = "diag"):
        if scheme.tableau is None:
            raise ValueError(f"scheme {scheme.name!r} has no Butcher tableau")
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.problem, self.scheme, self.dt = problem, scheme, dt
        tab: ButcherTableau = scheme.tableau
        self.A, self.b, self.c = tab.A, tab.b, tab.c
        fem = problem.fem
        self._mass_lu = TriFactor(fem.mass)
        self.method = method
        if method == "diag":
            try:
                self.decomp = StageDecomposition.of(self.A)
            except NonDiagonalizableTableau:
                self.method = "banded"
        elif method not in ("banded", "dense"):
            raise ValueError(f"unknown stage solver {method!r}")
        if self.method == "diag":
            d = self.decomp
            self._stage_lu = {
                i: TriFactor(combine(1.0, fem.mass, dt * _real_if_close(d.eigenvalues[i]), fem.stiffness))
                for i in d.solved_stages()
            }
            self._w1 = d.V_inv @ np.ones(tab.m)
        elif self.method == "banded":
            self._band_lu = BandedLU(stage_band(self.A, dt, fem.mass, [fem.stiffness] * tab.m))
        else:
            self._block_lu = sla.lu_factor(self._block_matrix())

    def _block_matrix(self) -> np.ndarray:
        Md = self.problem.fem.mass.to_dense()
        Kd = self.problem.fem.stiffness.to_dense()
        m = len(self.b)
        return np.kron(np.eye(m), Md) + self.dt * np.kron(self.A, Kd)

    def _loads(self, t: float) -> np.ndarray:
        return np.array([self.problem.load(t + ci * self.dt) for ci in self.c])

    def stages(self, t: float, v: np.ndarray, G: np.ndarray | None = None) -> np.ndarray:
        """Stage values U, shape (m, n)."""
        fem, dt = self.problem.fem, self.dt
        if G is None:
            G = self._loads(t)
        Mv = fem.mass.matvec(v)
        m = len(self.b)
        if self.method == "banded":
            rhs = Mv + dt * (self.A @ G)
            return self._band_lu.solve(rhs.T.ravel()).reshape(-1, m).T
        if self.method == "dense":
            rhs = np.tile(Mv, len(self.b)) + dt * (np.kron(self.A, np.eye(len(v))) @ G.ravel())
            return sla.lu_solve(self._block_lu, rhs).reshape(len(self.b), -1)
        d = self.decomp
        WG = d.V_inv @ G
        W = np.empty(G.shape, dtype=complex)
        for i, lu in self._stage_lu.items():
            W[i] = lu.solve(self._w1[i] * Mv + dt * d.eigenvalues[i] * WG[i])
            if d.conj[i] >= 0:
                W[d.conj[i]] = np.conj(W[i])
        return np.real(d.V @ W)

    def step(self, t: float, v: np.ndarray) -> np.ndarray:
        G = self._loads(t)
        U = self.stages(t, v, G)
        K = self.problem.fem.stiffness
        slope = self.b @ (G - K.matvec(U.T).T)
        return v + self.dt * self._mass_lu.solve(slope)


def coarse_step(p: LinearProblem, t: float, dT: float, v: np.ndarray) -> np.ndarray:
    return LinearCoarse(p, dT).step(t, v)


def fine_step_linear(p: LinearProblem, scheme: SchemeSpec, t: float, dt: float,
                     v: np.ndarray, method: str = "diag") -> np.ndarray:
    return LinearFine(p, scheme, dt, method).step(t, v)


# ----------------------------------------------------------- semilinear


class SemilinearCoarse:
    """Backward Euler with the nonlinearity lagged: (M + dT K) u = M (v + dT f(v))."""

    def __init__(self, problem: SemilinearProblem, dT: float):
        if dT <= 0:
            raise ValueError("dT must be positive")
        self.problem, self.dt = problem, dT
        fem = problem.fem
        self._lu = TriFactor(combine(1.0, fem.mass, dT, fem.stiffness))

    def step(self, t: float, v: np.ndarray) -> np.ndarray:
        p = self.problem
        return self._lu.solve(p.fem.mass.matvec(v + self.dt * p.f(v)))


def _scaled_band(mass: TriMatrix, d: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bands of ``M diag(d)``."""
    return mass.sub * d[:-1], mass.diag * d, mass.sup * d[1:]


@dataclass
class NewtonStats:
    iterations: list[int] = field(default_factory=list)
    last_residuals: list[float] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def record(self, residuals: list[float]) -> None:
        with self._lock:
            self.iterations.append(len(residuals) - 1)
            self.last_residuals = residuals

    @property
    def max_iterations(self) -> int:
        return max(self.iterations, default=0)


class SemilinearFine:
    """Fully implicit Runge-Kutta step for Allen-Cahn, stages solved by Newton.

    Newton starts from all stages equal to the input state; the Newton matrix
    is solved in the banded node-major layout of :func:`stage_band`.
    """

    def __init__(self, problem: SemilinearProblem, scheme: SchemeSpec, dt: float,
                 newton: NewtonConfig = NewtonConfig()):
        if scheme.tableau is None:
            raise ValueError(f"scheme {scheme.name!r} has no Butcher tableau")
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.problem, self.scheme, self.dt, self.newton = problem, scheme, dt, newton
        self.A, self.b = scheme.tableau.A, scheme.tableau.b
        self._mass_lu = TriFactor(problem.fem.mass)
        self.stats = NewtonStats()

    def residual(self, v: np.ndarray, U: np.ndarray) -> np.ndarray:
        fem, p = self.problem.fem, self.problem
        slopes = fem.mass.matvec(p.f(U).T).T - fem.stiffness.matvec(U.T).T
        return fem.mass.matvec((U - v).T).T - self.dt * (self.A @ slopes)

    def jacobian_banded(self, U: np.ndarray) -> np.ndarray:
        """Newton matrix, blocks d_ij M + dt a_ij (K - M diag f'(U_j)), band layout."""
        fem = self.problem.fem
        ops = []
        for Uj in U:
            Ms, Md, Mu = _scaled_band(fem.mass, self.problem.df(Uj))
            K = fem.stiffness
            ops.append(TriMatrix(K.sub - Ms, K.diag - Md, K.sup - Mu))
        return stage_band(self.A, self.dt, fem.mass, ops)

    def stages(self, t: float, v: np.ndarray) -> np.ndarray:
        m, n = len(self.b), len(v)
        U = np.tile(v, (m, 1))
        R = self.residual(v, U)
        res = [float(np.max(np.abs(R)))]
        bw = 2 * m - 1
        while res[-1] >= self.newton.tol:
            if len(res) > self.newton.max_iter:
                raise NewtonDiverged(
                    f"Newton did not converge in {self.newton.max_iter} iterations "
                    f"(residual {res[-1]:.3e}); reduce the step size", res)
            try:
                delta = sla.solve_banded((bw, bw), self.jacobian_banded(U), -R.T.ravel())
            except np.linalg.LinAlgError as exc:
                raise SingularMatrix(str(exc)) from exc
            U = U + delta.reshape(n, m).T
            R = self.residual(v, U)
            res.append(float(np.max(np.abs(R))))
            if not np.isfinite(res[-1]):
                raise NewtonDiverged("Newton iterates blew up; reduce the step size", res)
        self.stats.record(res)
        return U

    def step(self, t: float, v: np.ndarray) -> np.ndarray:
        U = self.stages(t, v)
        fem, p = self.problem.fem, self.problem
        slopes = fem.mass.matvec(p.f(U).T).T - fem.stiffness.matvec(U.T).T
        return v + self.dt * self._mass_lu.solve(self.b @ slopes)


def coarse_step_semilinear(p: SemilinearProblem, t: float, dT: float, v: np.ndarray) -> np.ndarray:
    return SemilinearCoarse(p, dT).step(t, v)


def fine_step_semilinear(p: SemilinearProblem, scheme: SchemeSpec, t: float, dt: float,
                         v: np.ndarray, newton: NewtonConfig = NewtonConfig()) -> np.ndarray:
    return SemilinearFine(p, scheme, dt, newton).step(t, v)
