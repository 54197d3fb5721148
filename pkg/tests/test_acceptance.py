"""Acceptance criteria, one test each, at the stated tolerances and time limits.

Every test records a PASS/FAIL line that is repeated in the pytest terminal
summary under "acceptance criteria".
"""

import json
import math
import time

import numpy as np
import pytest
from scipy.integrate import quad

from concaflow import cli
from concaflow.admissible import make_hot, make_power, make_power_log
from concaflow.concavity import check_F_concavity, envelope_bruteforce_1d, f_concave_envelope, run_disruption
from concaflow.criterion import dhf_criterion, plaplace_initial_rate, pm_initial_rate, semilinear_criterion
from concaflow.flow import GridFunction, dirichlet_cn, hot_h, hot_h_prime
from concaflow.hierarchy import ha_approximant


def _quad_h(z):
    # heat kernel at t=1 integrated over the positive half-line
    val, _ = quad(lambda w: math.exp(-((z - w) ** 2) / 4.0) / math.sqrt(4.0 * math.pi), 0.0, math.inf, epsabs=1e-14, epsrel=1e-13)
    return val


def test_criterion_1_hot_function(verdict_line):
    t0 = time.perf_counter()
    z = np.linspace(-8.0, 8.0, 1601)
    oracle = np.array([_quad_h(v) for v in z])
    err = float(np.max(np.abs(hot_h(z) - oracle)))
    mid = abs(float(hot_h(0.0)) - 0.5)
    slope = abs(float(hot_h_prime(0.0)) - (4.0 * math.pi) ** -0.5)
    elapsed = time.perf_counter() - t0
    ok = err <= 1e-9 and mid <= 1e-14 and slope <= 1e-12 and elapsed < 1.0
    verdict_line(1, ok, f"sup|h - quad|={err:.2e} |h(0)-1/2|={mid:.1e} |h'(0)-c|={slope:.1e} time={elapsed:.2f}s")
    assert ok


def test_criterion_2_criterion_table(verdict_line):
    t0 = time.perf_counter()
    cases = [(make_power(a), a == 0) for a in (-2, -1, -0.5, 0, 0.5, 1, 2)]
    cases += [(make_power_log(a), 0.5 <= a <= 1) for a in (0, 0.25, 0.5, 0.75, 1, 1.25, 2)]
    cases += [(make_hot(a), True) for a in (0.5, 1, 10, math.inf)]
    mismatches = [F.label for F, want in cases if dhf_criterion(F).preserved != want]
    elapsed = time.perf_counter() - t0
    ok = not mismatches and elapsed < 5.0
    verdict_line(2, ok, f"{len(cases)} transforms, mismatches={mismatches} time={elapsed:.2f}s")
    assert ok


def test_criterion_3_semilinear_table(verdict_line):
    t0 = time.perf_counter()
    families = [(make_power(0), True)]
    families += [(make_power_log(a), 0.5 <= a <= 1) for a in (0, 0.25, 0.5, 0.75, 1, 1.25, 2)]
    families += [(make_hot(a), True) for a in (1, 10)]
    mismatches = []
    count = 0
    for p in (2, 3):
        for F, want in families:
            count += 2
            if semilinear_criterion(F, -1.0, p).preserved != want:
                mismatches.append((F.label, -1, p))
            if semilinear_criterion(F, 1.0, p).preserved:
                mismatches.append((F.label, 1, p))
    elapsed = time.perf_counter() - t0
    ok = not mismatches and elapsed < 5.0
    verdict_line(3, ok, f"{count} verdicts, mismatches={mismatches} time={elapsed:.2f}s")
    assert ok


def test_criterion_4_preservation(verdict_line):
    t0 = time.perf_counter()
    F = make_hot(1.0)
    worst = 0.0
    failures = []
    for seed in range(20):
        u0 = cli.random_profile_datum(F, 513, seed)
        for snap in dirichlet_cn(u0, [0.01, 0.05, 0.2], dt=1e-4):
            r = check_F_concavity(snap.u, F, tol=1e-5, seed=seed)
            worst = max(worst, r.worst_violation)
            if not r.passed:
                failures.append((seed, snap.t))
    elapsed = time.perf_counter() - t0
    ok = not failures and worst <= 1e-5 and elapsed < 60.0
    verdict_line(4, ok, f"60 snapshots, worst violation={worst:.2e} failures={failures} time={elapsed:.1f}s")
    assert ok


@pytest.mark.slow
def test_criterion_5_disruption(verdict_line):
    t0 = time.perf_counter()
    details = []
    ok = True
    for F in (make_power(-1.0), make_power_log(2.0)):
        run = run_disruption(F, n=257, t_list=(0.001, 0.01, 0.05))
        best = max(r.worst_violation for t, r in run.results if t <= 0.05)
        control = max(r.worst_violation for _, r in run.control)
        found = best >= 10.0 * run.budget
        clean = control <= run.budget
        ok &= found and clean
        details.append(f"{F.label}: ratio={best / run.budget:.0f} control={control:.1e}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 120.0
    verdict_line(5, ok, "; ".join(details) + f" time={elapsed:.1f}s")
    assert ok


def _random_instance(rng, n, F):
    x = np.linspace(0.0, 1.0, n)
    vals = rng.uniform(0.05, 1.0, n)
    if math.isfinite(F.a):
        vals *= 0.9 * F.a
    return GridFunction(vals, (0.0,), (x[1] - x[0],))


def _concave_instance(rng, n, F):
    # concave g with g(+-1) >= top - 3, so a top 4 above a finite J_lo keeps g inside J
    x = np.linspace(-1.0, 1.0, n)
    if math.isfinite(F.J_hi):
        top = F.J_hi - 1.0
    elif math.isfinite(F.J_lo):
        top = F.J_lo + 4.0
    else:
        top = rng.uniform(-1.0, 1.0)
    g = top - rng.uniform(0.5, 2.0) * x**2 - rng.uniform(0.0, 1.0) * x**4
    return GridFunction(F.f(g), (-1.0,), (x[1] - x[0],))


def test_criterion_6_envelope(verdict_line):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    families = [make_power(0), make_power(0.5), make_hot(1), make_power_log(0.5)]
    idem = dom = exact = 0.0
    for k in range(100):
        F = families[k % len(families)]
        u = _random_instance(rng, int(rng.integers(20, 200)), F)
        env = f_concave_envelope(u, F)
        env2 = f_concave_envelope(env, F)
        idem = max(idem, float(np.max(np.abs(env2.values - env.values))))
        dom = max(dom, float(np.max(u.values - env.values)))
        c = _concave_instance(rng, int(rng.integers(20, 200)), F)
        exact = max(exact, float(np.max(np.abs(f_concave_envelope(c, F).values - c.values))))
    brute = 0.0
    for k in range(10):
        F = families[k % len(families)]
        u = _random_instance(rng, 65, F)
        brute = max(brute, float(np.max(np.abs(envelope_bruteforce_1d(u, F) - f_concave_envelope(u, F).values))))
    elapsed = time.perf_counter() - t0
    ok = idem <= 1e-10 and dom <= 1e-10 and exact <= 1e-10 and brute <= 1e-8 and elapsed < 30.0
    verdict_line(6, ok, f"idempotence={idem:.1e} domination={dom:.1e} concave-input={exact:.1e} brute-force={brute:.1e} time={elapsed:.1f}s")
    assert ok


def test_criterion_7_rates(verdict_line):
    t0 = time.perf_counter()
    mismatches = []
    count = 0
    for m in (1.5, 2.0, 3.0):
        for alpha in (-1.0, 0.0, 0.1, (m - 1) / 2, m - 1):
            v = pm_initial_rate(m, alpha)
            e = v.analytic["exponent"]
            want = e is not None and 0.0 <= e <= 1.0
            count += 1
            if v.preserved != want:
                mismatches.append(("pm", m, alpha))
    # alpha=0 at m=2: the rate is 4 e^z; brute-force its worst relative midpoint defect
    z = np.linspace(0.1, 4.0, 1001)
    g = 4.0 * np.exp(z)
    worst = max(
        float(np.max((0.5 * (g[: -2 * k] + g[2 * k :]) - g[k:-k]) / np.maximum(1.0, np.maximum(g[: -2 * k], g[2 * k :]))))
        for k in range(1, 501)
    )
    v = pm_initial_rate(2.0, 0.0)
    count += 1
    if v.preserved or abs(v.conditions[0].violation - worst) > 1e-12:
        mismatches.append(("pm", 2.0, "4e^z"))
    for p in (3.0, 4.0):
        threshold = (p - 2) / p
        for alpha in (-1.0, 0.0, 0.1, threshold / 2, threshold):
            v = plaplace_initial_rate(p, alpha)
            count += 1
            if v.preserved != (alpha >= threshold) or v.analytic["above_threshold"] != (alpha >= threshold):
                mismatches.append(("plaplace", p, alpha))
    elapsed = time.perf_counter() - t0
    ok = not mismatches and elapsed < 2.0
    verdict_line(7, ok, f"{count} rate checks, mismatches={mismatches} time={elapsed:.2f}s")
    assert ok


def test_criterion_8_hierarchy_chain(verdict_line, tmp_path):
    t0 = time.perf_counter()
    families = ["hot:1", "lalpha:0.75", "lalpha:1", "lalpha:0.5"]
    code = cli.main(
        ["hierarchy", "--families", ",".join(families), "--expect-order", "hot:1,lalpha:0.5,lalpha:0.75,lalpha:1", "--out", str(tmp_path)]
    )
    report = json.loads((tmp_path / "report.json").read_text())
    result = report["verdicts"][0]
    elapsed = time.perf_counter() - t0
    ok = code == 0 and result["order"] == ["hot:1", "lalpha:0.5", "lalpha:0.75", "lalpha:1"]
    ok &= result["links"] == [">", ">", ">"] and elapsed < 5.0
    verdict_line(8, ok, f"chain: {result['chain']} exit={code} time={elapsed:.2f}s")
    assert ok


def test_criterion_9_hot_approximation(verdict_line):
    t0 = time.perf_counter()
    f = GridFunction.sample(lambda x: np.exp(-x * x), -2.0, 2.0, 401)
    errors = []
    for a in (10.0, 100.0, 1000.0):
        fa, _ = ha_approximant(a, f)
        errors.append(float(np.max(np.abs(fa.values - f.values))))
    elapsed = time.perf_counter() - t0
    decreasing = errors[0] > errors[1] > errors[2]
    ok = decreasing and errors[2] <= 0.05 and elapsed < 5.0
    verdict_line(9, ok, f"sup errors a=10,100,1000: {', '.join(f'{e:.4f}' for e in errors)} (need <= 0.05 at a=1000) time={elapsed:.2f}s")
    assert decreasing
    assert errors[2] <= 0.05
