"""Acceptance suite: one test per criterion, each printing a single pass/fail line.

Runtime limits are part of each criterion and are checked alongside the numbers.
"""

from __future__ import annotations

import csv
import math
import os
import time

import numpy as np
import pytest
import scipy.linalg as sla

from conftest import ACCEPTANCE_LINES
from parareal_rk.cli import write_kappa_curve
from parareal_rk.convergence import (find_threshold, kappa, kappa_bound, parareal_factor, sandwich_check,
                                     tail_sup)
from parareal_rk.engine import (ERROR_FLOOR, PararealConfig, fine_sweep, measured_factor, run,
                                sequential_fine_reference)
from parareal_rk.experiments import build, preset
from parareal_rk.fem1d import Indicator, Mesh1D, fem_system, project
from parareal_rk.propagators import LinearCoarse, LinearFine, LinearProblem, fine_step_linear
from parareal_rk.schemes import BUILTIN_NAMES, builtin, explicit_stability, max_relative_deviation

LOBATTO = ("lobatto3c-2", "lobatto3c-3", "lobatto3c-4")
NIGHTLY = os.environ.get("PARAREAL_NIGHTLY") == "1"


def report(n: int, ok: bool, detail: str, elapsed: float, limit: float) -> None:
    in_time = elapsed < limit
    verdict = "PASS" if ok and in_time else "FAIL"
    line = f"criterion {n}: {verdict} ({detail}; {elapsed:.2f} s, limit {limit:g} s)"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line
    assert in_time, line


def ratios_above_floor(errors: list[float]) -> list[float]:
    return [b / a for a, b in zip(errors, errors[1:]) if a >= ERROR_FLOOR and b >= ERROR_FLOOR]


def experiment(cfg):
    s = build(cfg)
    ref = sequential_fine_reference(s.fine, s.u0, s.parareal)
    hist = run(s.coarse, s.fine, s.u0, s.parareal, norm=s.norm, reference=ref)
    return s, hist


def test_criterion_01_kappa_one():
    t0 = time.perf_counter()
    k = kappa(1.0)
    ok = abs(k.kappa - 0.2984) <= 5e-4 and abs(k.argsup_s - 1.793) <= 5e-3
    report(1, ok, f"kappa_1 = {k.kappa:.5f} at s = {k.argsup_s:.4f}", time.perf_counter() - t0, 1)


def test_criterion_02_kappa_102():
    t0 = time.perf_counter()
    k = kappa(1.02)
    ok = abs(k.kappa - 0.3078) <= 5e-4 and abs(k.argsup_s - 1.715) <= 5e-3 and k.kappa < 0.31
    report(2, ok, f"kappa_1.02 = {k.kappa:.5f} at s = {k.argsup_s:.4f}", time.perf_counter() - t0, 1)


def test_criterion_03_lemma_envelope(tmp_path):
    t0 = time.perf_counter()
    path = tmp_path / "kappa_curve.csv"
    write_kappa_curve(path, 200)
    rows = list(csv.DictReader(open(path)))
    alphas = np.array([float(r["alpha"]) for r in rows])
    kap = np.array([float(r["kappa"]) for r in rows])
    bound = np.array([kappa_bound(a) for a in alphas])
    envelope = np.maximum(1 - alphas, np.exp(alphas - 2))
    low = alphas <= 0.69
    ok = (len(rows) == 200 and bool(np.all(kap <= bound + 1e-9)) and bool(np.all(kap <= envelope + 1e-9))
          and bool(np.all(np.abs(kap[low] - envelope[low]) <= 1e-6)))
    worst = float(np.max(kap - envelope))
    report(3, ok, f"200 alphas, max(kappa - envelope) = {worst:.2e}, "
                  f"max gap on [0, 0.69] = {np.max(np.abs(kap[low] - envelope[low])):.1e}",
           time.perf_counter() - t0, 5)


def test_criterion_04_backward_euler_factor():
    t0 = time.perf_counter()
    r = builtin("backward-euler").r
    phis = {J: parareal_factor(r, J).phi for J in range(2, 11)}
    ok = all(abs(p - 0.298) <= 2e-3 for p in phis.values())
    table = ", ".join(f"{J}: {p:.4f}" for J, p in phis.items())
    report(4, ok, f"Phi_BE(J) = {{{table}}}, target 0.298 +- 2e-3", time.perf_counter() - t0, 2)


def test_criterion_05_thresholds():
    t0 = time.perf_counter()
    parts, ok = [], True
    for name, s_star, bound in zip(LOBATTO, (3.2, 2.0, 6.8), (0.11, 0.15, 0.02)):
        r = builtin(name).r
        th = find_threshold(r, 0.31, J_max=64)
        tail = tail_sup(r, s_star)
        ok &= th.J_star == 2 and tail <= bound
        parts.append(f"{name}: J_* = {th.J_star}, tail {tail:.4f} <= {bound}")
    report(5, ok, "; ".join(parts), time.perf_counter() - t0, 10)


def test_criterion_06_sandwich():
    t0 = time.perf_counter()
    parts, ok = [], True
    for name, s_star in zip(LOBATTO, (3.2, 2.0, 6.8)):
        rep = sandwich_check(builtin(name).r, 0.69, 1.02, s_star, points=100_000)
        ok &= rep.passed
        parts.append(f"{name}: margin {rep.worst_margin:.2e}")
    report(6, ok, "; ".join(parts), time.perf_counter() - t0, 5)


def test_criterion_07_stability_functions():
    t0 = time.perf_counter()
    devs = {name: max_relative_deviation(builtin(name).r, explicit_stability(name), npts=1000)
            for name in LOBATTO + ("calahan",)}
    ok = all(d <= 1e-10 for d in devs.values())
    report(7, ok, ", ".join(f"{n}: {d:.1e}" for n, d in devs.items()), time.perf_counter() - t0, 1)


def test_criterion_08_spectral_keystone():
    t0 = time.perf_counter()
    mesh = Mesh1D(200)
    fem = fem_system(mesh)
    lam, Phi = sla.eigh(fem.stiffness.to_dense(), fem.mass.to_dense())
    p = LinearProblem(fem, None, 1.0, np.zeros(fem.ndof))
    worst = 0.0
    for name in BUILTIN_NAMES:
        spec = builtin(name)
        for dt in (1 / 3000, 0.1):
            for k in (0, 1, 9, 99, 198):
                got = fine_step_linear(p, spec, 0.0, dt, Phi[:, k])
                worst = max(worst, float(np.max(np.abs(got - spec.r(-dt * lam[k]) * Phi[:, k]))))
    report(8, worst <= 1e-9, f"5 schemes, max deviation {worst:.2e}", time.perf_counter() - t0, 10)


def _step_data_factors(M: int, K_max: int):
    parts, ok = [], True
    for name in LOBATTO:
        for J in (2, 3, 10):
            _, hist = experiment(preset("ex1b", M=M, scheme=name, J=J, K_max=K_max))
            f = measured_factor(hist)
            worst = max(ratios_above_floor(hist.errors))
            ok &= f <= 0.31 and worst <= 0.31 + 2e-2
            parts.append(f"{name} J={J}: {f:.3f}/{worst:.3f}")
    return ok, "factor/max ratio " + ", ".join(parts)


@pytest.mark.slow
def test_criterion_09_step_data_factors_desk_scale():
    t0 = time.perf_counter()
    ok, detail = _step_data_factors(200, 22)
    report(9, ok, "M = 200, " + detail, time.perf_counter() - t0, 180)


@pytest.mark.nightly
@pytest.mark.skipif(not NIGHTLY, reason="set PARAREAL_NIGHTLY=1 for the M = 1000 run")
def test_criterion_09_step_data_factors_full_resolution():
    t0 = time.perf_counter()
    ok, detail = _step_data_factors(1000, 25)
    report(9, ok, "M = 1000, " + detail, time.perf_counter() - t0, math.inf)


@pytest.mark.slow
def test_criterion_10_first_iteration_scaling():
    t0 = time.perf_counter()
    e1 = {}
    for dT in (1 / 300, 1 / 600):
        _, hist = experiment(preset("ex1a", M=200, J=10, dt_fine=dT / 10, K_max=1))
        e1[dT] = hist.errors[1]
    ratio = e1[1 / 300] / e1[1 / 600]
    report(10, 1.6 <= ratio <= 2.4, f"e1(1/300) = {e1[1 / 300]:.3e}, e1(1/600) = {e1[1 / 600]:.3e}, "
                                    f"ratio {ratio:.3f}", time.perf_counter() - t0, 120)


@pytest.mark.slow
def test_criterion_11_calahan_contrast():
    # the slow Calahan mode is the stiffest one, so this runs at the example's own M = 1000;
    # at M = 200 lambda_max * dT is only about 32 and the contrast disappears
    t0 = time.perf_counter()
    f = {}
    for J in (2, 10):
        _, hist = experiment(preset("ex1b", M=1000, scheme="calahan", J=J, K_max=20))
        f[J] = measured_factor(hist)
    ok = f[2] > 0.31 and f[10] <= 0.35 and f[10] < f[2]
    report(11, ok, f"M = 1000, Calahan factor J=2: {f[2]:.3f}, J=10: {f[10]:.3f}", time.perf_counter() - t0, 120)


@pytest.mark.slow
def test_criterion_12_allen_cahn():
    t0 = time.perf_counter()
    parts, ok = [], True
    for name in LOBATTO:
        for J in (2, 3, 10):
            s, hist = experiment(preset("ex2", M=200, scheme=name, J=J, K_max=12))
            f = measured_factor(hist)
            newton = s.fine.stats.max_iterations
            ok &= f <= 0.35 and newton <= 8
            parts.append(f"{name} J={J}: {f:.3f}/{newton}")
    report(12, ok, "factor/max Newton iterations " + ", ".join(parts), time.perf_counter() - t0, 300)


def test_criterion_13_exactness():
    t0 = time.perf_counter()
    mesh = Mesh1D(200)
    fem = fem_system(mesh)
    u0 = project(mesh, Indicator(0.0, math.pi / 2), fem.mass)
    p = LinearProblem(fem, lambda x, t: math.cos(t) * np.sin(x), 1.0, u0)
    cfg = PararealConfig(N_c=6, J=5, dt=1 / 30, K_max=6, initial_guess="constant")
    fine = LinearFine(p, builtin("lobatto3c-3"), cfg.dt)
    ref = sequential_fine_reference(fine, u0, cfg)
    hist = run(LinearCoarse(p, cfg.dT), fine, u0, cfg, norm=fem.norm, reference=ref)
    worst = 0.0
    for k, prof in enumerate(hist.profiles):
        for n in range(1, min(k, 6) + 1):
            worst = max(worst, prof[n - 1] / fem.norm(ref[n]))
    report(13, worst <= 1e-11, f"max relative error at nodes n <= k: {worst:.2e}", time.perf_counter() - t0, 10)


def test_criterion_14_sequential_order():
    t0 = time.perf_counter()
    mesh = Mesh1D(100)
    fem = fem_system(mesh)
    h, x = mesh.h, mesh.nodes
    lam = lambda k: 6 / h**2 * (1 - math.cos(k * h)) / (2 + math.cos(k * h))
    u0 = np.sin(x) + 0.5 * np.sin(2 * x)
    exact = math.exp(-lam(1)) * np.sin(x) + 0.5 * math.exp(-lam(2)) * np.sin(2 * x)
    p = LinearProblem(fem, None, 1.0, u0)
    parts, ok = [], True
    for name, q in (("backward-euler", 1), ("lobatto3c-2", 2), ("calahan", 3), ("lobatto3c-3", 4)):
        errs = [fem.norm(fine_sweep(LinearFine(p, builtin(name), 1 / N), 0.0, u0, N) - exact) for N in (20, 40)]
        order = math.log2(errs[0] / errs[1])
        ok &= abs(order - q) <= 0.15 * q
        parts.append(f"{name}: {order:.3f} (q = {q})")
    report(14, ok, ", ".join(parts), time.perf_counter() - t0, 60)
