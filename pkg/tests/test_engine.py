from __future__ import annotations

import csv
import math
import os
import time

import numpy as np
import pytest
import scipy.linalg as sla

from parareal_rk.engine import (PararealConfig, fine_sweep, measured_factor, run,
                                sequential_fine_reference)
from parareal_rk.errors import DomainError, InsufficientData
from parareal_rk.experiments import build, preset
from parareal_rk.fem1d import Indicator, Mesh1D, fem_system, project
from parareal_rk.propagators import LinearCoarse, LinearFine, LinearProblem
from parareal_rk.schemes import builtin


def step_problem(M=40):
    mesh = Mesh1D(M)
    fem = fem_system(mesh)
    u0 = project(mesh, Indicator(0.0, math.pi / 2), fem.mass)
    return LinearProblem(fem, lambda x, t: math.cos(t) * np.sin(x), 1.0, u0)


def make(p, scheme, dt, J, **kw):
    cfg = PararealConfig(N_c=kw.pop("N_c"), J=J, dt=dt, **kw)
    return cfg, LinearCoarse(p, cfg.dT), LinearFine(p, builtin(scheme), dt)


def test_config_validation():
    with pytest.raises(DomainError):
        PararealConfig(N_c=0, J=2, dt=0.1)
    with pytest.raises(DomainError):
        PararealConfig(N_c=2, J=0, dt=0.1)
    with pytest.raises(DomainError):
        PararealConfig(N_c=2, J=2, dt=0.1, K_max=0)
    with pytest.raises(DomainError):
        PararealConfig.for_horizon(1.0, 0.3, 2)
    cfg = PararealConfig.for_horizon(1.0, 1 / 3000, 10)
    assert cfg.N_c == 300 and cfg.T == pytest.approx(1.0, abs=1e-12)


def test_reference_single_step():
    p = step_problem()
    cfg, _, fine = make(p, "lobatto3c-2", 0.1, 1, N_c=1)
    ref = sequential_fine_reference(fine, p.u0, cfg)
    assert len(ref) == 2
    assert np.array_equal(ref[1], fine.step(0.0, p.u0))


def test_reference_eigenvector():
    mesh = Mesh1D(30)
    fem = fem_system(mesh)
    lam, Phi = sla.eigh(fem.stiffness.to_dense(), fem.mass.to_dense())
    p = LinearProblem(fem, None, 1.0, Phi[:, 2])
    cfg, _, fine = make(p, "lobatto3c-3", 0.01, 3, N_c=4)
    ref = sequential_fine_reference(fine, p.u0, cfg)
    rr = builtin("lobatto3c-3").r(-0.01 * lam[2])
    for n, u in enumerate(ref):
        assert np.allclose(u, rr ** (n * 3) * Phi[:, 2], atol=1e-12)


def test_fine_equals_coarse_converges_in_one_iteration():
    p = step_problem()
    cfg = PararealConfig(N_c=8, J=1, dt=0.05, K_max=3)
    be = LinearFine(p, builtin("backward-euler"), 0.05)
    hist = run(LinearCoarse(p, 0.05), be, p.u0, cfg, norm=p.fem.norm)
    assert hist.errors[0] > 1e-3
    assert max(hist.errors[1:]) < 1e-13


def test_finite_termination():
    p = step_problem()
    cfg, coarse, fine = make(p, "lobatto3c-2", 1 / 60, 4, N_c=6, K_max=6, initial_guess="coarse")
    ref = sequential_fine_reference(fine, p.u0, cfg)
    scale = 1 + max(p.fem.norm(u) for u in ref)
    hist = run(coarse, fine, p.u0, cfg, norm=p.fem.norm, reference=ref)
    for k, prof in enumerate(hist.profiles):
        # profile index i is coarse node n = i + 1
        for n in range(1, k + 1):
            if n <= 6:
                assert prof[n - 1] <= 1e-11 * scale


def test_constant_initial_guess_profile():
    p = step_problem()
    cfg, coarse, fine = make(p, "lobatto3c-2", 1 / 60, 2, N_c=5, K_max=1, initial_guess="constant")
    ref = sequential_fine_reference(fine, p.u0, cfg)
    hist = run(coarse, fine, p.u0, cfg, norm=p.fem.norm, reference=ref)
    expected = [p.fem.norm(p.u0 - ref[n]) for n in range(1, 6)]
    assert np.allclose(hist.profiles[0], expected, rtol=1e-14)


def test_history_length_and_ratios():
    p = step_problem()
    cfg, coarse, fine = make(p, "lobatto3c-2", 1 / 100, 2, N_c=20, K_max=5)
    hist = run(coarse, fine, p.u0, cfg, norm=p.fem.norm)
    assert len(hist.errors) == 6 and hist.iterations == 5
    assert len(hist.fine_ms) == 5
    assert all(e >= 0 for e in hist.errors)


@pytest.mark.parametrize("name", ["lobatto3c-2", "lobatto3c-3", "lobatto3c-4"])
@pytest.mark.parametrize("J", [2, 5])
def test_geometric_envelope(name, J):
    p = step_problem(40)
    dt = 1 / 300
    cfg, coarse, fine = make(p, name, dt, J, N_c=300 // J, K_max=15, initial_guess="constant")
    hist = run(coarse, fine, p.u0, cfg, norm=p.fem.norm)
    for a, b in zip(hist.errors, hist.errors[1:]):
        assert b <= 0.31 * a + 1e-13


def test_tolerance_stop():
    p = step_problem()
    cfg, coarse, fine = make(p, "lobatto3c-2", 1 / 100, 2, N_c=50, K_max=40, stop="tolerance", tol=1e-9)
    hist = run(coarse, fine, p.u0, cfg, norm=p.fem.norm)
    assert hist.converged and not hist.budget_exceeded
    assert hist.iterations < 40


def test_budget_exceeded():
    p = step_problem()
    cfg, coarse, fine = make(p, "lobatto3c-2", 1 / 100, 2, N_c=50, K_max=2, stop="tolerance", tol=1e-14)
    hist = run(coarse, fine, p.u0, cfg, norm=p.fem.norm)
    assert hist.budget_exceeded and not hist.converged
    assert len(hist.errors) == 3


def test_determinism():
    p = step_problem()
    runs = []
    for threads in (1, 1, 3):
        cfg, coarse, fine = make(p, "lobatto3c-3", 1 / 90, 3, N_c=30, K_max=4, threads=threads)
        runs.append(run(coarse, fine, p.u0, cfg, norm=p.fem.norm, keep_iterates=True))
    assert runs[0].errors == runs[1].errors
    for a, b in zip(runs[0].iterates[-1], runs[2].iterates[-1]):
        assert np.max(np.abs(a - b)) <= 1e-14


def test_step_size_mismatch():
    p = step_problem()
    cfg = PararealConfig(N_c=5, J=2, dt=0.1)
    with pytest.raises(DomainError):
        run(LinearCoarse(p, 0.3), LinearFine(p, builtin("lobatto3c-2"), 0.1), p.u0, cfg)


def test_measured_factor_geometric():
    assert measured_factor([0.3**k for k in range(25)]) == pytest.approx(0.3, abs=1e-12)


def test_measured_factor_window():
    # values outside [1e-11, 1e-1] are ignored
    errs = [5.0, 2.0] + [0.05 * 0.25**k for k in range(10)] + [1e-13, 1e-15]
    assert measured_factor(errs) == pytest.approx(0.25, abs=1e-12)


def test_measured_factor_insufficient():
    with pytest.raises(InsufficientData):
        measured_factor([1.0, 0.01, 1e-4, 1e-13])


def test_csv(tmp_path):
    p = step_problem()
    cfg, coarse, fine = make(p, "lobatto3c-2", 1 / 100, 2, N_c=10, K_max=3)
    hist = run(coarse, fine, p.u0, cfg, norm=p.fem.norm)
    path = tmp_path / "h.csv"
    hist.write_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["k", "max_error", "factor_estimate", "fine_sweep_ms"]
    assert len(rows) == hist.iterations + 2
    assert float(rows[2][1]) == hist.errors[1]


def test_ex1b_full_resolution_reference():
    cfg = preset("ex1b", M=1000, K_max=1)
    s = build(cfg)
    short = PararealConfig(N_c=50, J=2, dt=cfg.dt_fine)
    ref = sequential_fine_reference(s.fine, s.u0, short)
    assert all(np.all(np.isfinite(u)) for u in ref)
    assert s.norm(ref[-1]) < s.norm(ref[0])


@pytest.mark.skipif((os.cpu_count() or 1) < 4, reason="needs at least 4 cores")
def test_parallel_speedup():
    s = build(preset("ex1b", M=1000, J=2))
    N_c = 16
    U = [s.u0] * N_c
    from concurrent.futures import ThreadPoolExecutor

    def sweep(threads):
        t0 = time.perf_counter()
        if threads == 1:
            [fine_sweep(s.fine, 0.0, U[n], 20) for n in range(N_c)]
        else:
            with ThreadPoolExecutor(threads) as pool:
                list(pool.map(lambda n: fine_sweep(s.fine, 0.0, U[n], 20), range(N_c)))
        return time.perf_counter() - t0

    sweep(1)
    assert sweep(4) < 0.5 * sweep(1)
