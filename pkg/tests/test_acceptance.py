"""One test per acceptance criterion, each at its stated tolerance.

A line per criterion is printed in the terminal summary.
"""

import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE, SEEDS
from mbpre import (
    build_chain,
    build_qkernel,
    classify,
    corollary_checks,
    eqy_residual,
    estimate_Y,
    f1,
    f2,
    f3,
    lambda_prime_at_one,
    lambda_r_theta,
    qstat,
    survival_exact,
    survival_mc,
    survival_tilted,
    theorem1_report,
    yaglom_exact,
    yaglom_mc,
)
from mbpre.lyapunov import STRONG
from mbpre.oracle import unit_grid
from mbpre.qprocess import CorollaryConfig, t_star

pytestmark = pytest.mark.acceptance


def check(num, label, ok, detail):
    ACCEPTANCE.append((num, label, bool(ok), detail))
    print(f"criterion {num} {'PASS' if ok else 'FAIL'}: {label} ({detail})")
    assert ok, f"criterion {num}: {detail}"


def test_criterion_01_scalar_exact():
    t0 = time.perf_counter()
    m = f2()
    chain = build_chain(m, 2)
    err = max(abs(survival_exact(chain, (1,), n).lower - 0.375**n) for n in range(41))
    widest = max(survival_exact(chain, (1,), n).width for n in range(41))
    rep = theorem1_report(chain, [(1,)], n_max=40)
    ratio_err = max(abs(r["ratio"] - 1.0) for r in rep.rows)
    elapsed = time.perf_counter() - t0
    ok = err <= 1e-12 and widest == 0.0 and ratio_err <= 1e-12 and rep.summary[0]["target"] == 1.0 and elapsed < 1
    check(1, "F2 survival (3/8)^n and theorem1 ratio 1", ok,
          f"survival err {err:.1e}, ratio err {ratio_err:.1e}, {elapsed:.2f}s")


def test_criterion_02_lambda_theta_f2():
    m = f2()
    errs = [abs(lambda_r_theta(m, t).lam - ((0.25**t + 0.5**t) / 2)) for t in (0.5, 1.0, 1.5, 2.0)]
    a, b = 0.25, 0.5
    exact_d = (0.5 * (a * np.log(a) + b * np.log(b))) / 0.375
    d = lambda_prime_at_one(m).value
    label = classify(m).label
    ok = max(errs) <= 1e-6 and abs(d - exact_d) <= 5e-3 and label == STRONG
    check(2, "F2 lambda(theta), Lambda'(1), classification", ok,
          f"max lambda err {max(errs):.1e}, Lambda'(1) {d:.6f} vs {exact_d:.6f}, {label}")


@pytest.fixture(scope="module")
def f3_data():
    chain = build_chain(f3(), 40)
    ya = yaglom_exact(chain)
    return chain, ya, build_qkernel(chain)


def test_criterion_03_theorem1_f3(f3_data):
    chain, ya, _ = f3_data
    rep = theorem1_report(chain, [(1, 0), (0, 1), (1, 1), (2, 1)], n_max=40, n_ref=30, yaglom=ya)
    stab = max(s["stabilization"] for s in rep.summary)
    rel = max(s["rel_error"] for s in rep.summary)
    gap = max(s["linearity_gap"] for s in rep.summary)
    ok = stab < 1e-3 and rel < 1e-3 and gap < 1e-3
    check(3, "F3 survival ratio converges to (z,U)/W", ok,
          f"stabilization {stab:.1e}, limit rel err {rel:.1e}, linearity gap {gap:.1e}")


def test_criterion_04_decay_rate(f3_data):
    gaps = []
    for chain in (build_chain(f1(), 2), build_chain(f2(), 2), f3_data[0]):
        y = yaglom_exact(chain) if chain is not f3_data[0] else f3_data[1]
        gaps.append(abs(y.rate - chain.lam))
    check(4, "quasi-stationary rate equals Perron root", max(gaps) <= 1e-6,
          "gaps " + ", ".join(f"{g:.1e}" for g in gaps))


def test_criterion_05_eqy(f3_data):
    _, ya, _ = f3_data
    grid = unit_grid(2, 11)
    r = eqy_residual(f3(), ya, grid)
    at_one = r.residuals[np.all(grid == 1.0, axis=1)][0]
    ok = r.max_residual <= 1e-6 + r.tail_bound and at_one == 0.0
    check(5, "EqY residual on 11x11 grid", ok,
          f"max {r.max_residual:.1e}, tail bound {r.tail_bound:.1e}, at s=1 {at_one:g}")


def test_criterion_06_qprocess(f3_data):
    chain, ya, q = f3_data
    small = []
    for c in (build_chain(f1(), 2), build_chain(f2(), 2)):
        qq = build_qkernel(c)
        small.append(max(float(qq.leak_star.max()), qq.row_sum_error()))
    ts = t_star(q, ya)
    weighted_leak = float(ts @ q.leak_star)
    rows = q.row_sum_error()
    st = qstat(q, ya)
    cor = corollary_checks(chain, q, ya)
    ok = (max(small) <= 1e-10 and weighted_leak <= 1e-6 and rows <= 1e-10 and st.residual <= 1e-6
          and cor.c_max_error <= 1e-10 and cor.d_max_error <= 2e-3)
    check(6, "size-biased kernel, invariant law, path identity, limit law", ok,
          f"F1/F2 leak {max(small):.1e}, F3 t*-weighted leak {weighted_leak:.1e}, "
          f"|rows+leak-1| {rows:.1e}, invariance {st.residual:.1e}, path identity {cor.c_max_error:.1e}, "
          f"limit {cor.d_max_error:.1e}")


def test_criterion_07_factorization(f3_data):
    chain, ya, q = f3_data
    cor = corollary_checks(chain, q, ya, CorollaryConfig(gap_times=(30, 60), mass_floor=1e-3))
    ok = cor.b_max_error <= 1e-3 and cor.b_pairs > 0
    check(7, "two-time factorization at (30, 60)", ok, f"max err {cor.b_max_error:.1e} over {cor.b_pairs} pairs")


def test_criterion_08_importance_sampling():
    m2 = f2()
    worst, spread = 0.0, 0.0
    for n in (1, 10, 40):
        for samples in (1, 10_000):
            e = estimate_Y(m2, [1], n, samples, SEEDS[0])
            worst = max(worst, abs(e.value / 0.375**n - 1))
            spread = max(spread, e.stderr / e.value)
    m1 = f1()
    tilt = survival_tilted(m1, [1], 30, 10_000, SEEDS[0])
    rel_se = tilt.stderr / tilt.value
    rel_err = abs(tilt.value / 0.5**30 - 1)
    naive = 10_000 * 0.5**30
    # floating-point summation order leaves relative spread at the 1e-16 level
    ok = worst <= 1e-6 and spread <= 1e-12 and rel_se < 0.1 and rel_err <= 1e-6
    check(8, "tilted estimators", ok,
          f"F2 rel err {worst:.1e}, rel stderr {spread:.1e}; F1 n=30 rel stderr {rel_se:.1e}, "
          f"naive survivors {naive:.1e}")


def test_criterion_09_monte_carlo_agreement(f3_data):
    chain3, ya3, _ = f3_data
    cases = [(f1(), build_chain(f1(), 2), (1,), 8), (f2(), build_chain(f2(), 2), (2,), 8),
             (f3(), chain3, (1, 0), 10), (f3(), chain3, (2, 1), 10)]
    fails, details = 0, []
    for k, (m, c, z, n) in enumerate(cases):
        br = survival_exact(c, z, n)
        for est in ("quenched", "indicator"):
            e = survival_mc(m, np.array(z, dtype=np.int64), n, 100_000, SEEDS[k % 3], estimator=est)
            # rounding floor for the zero-variance single-state case
            dev = max(0.0, br.lower - e.value - 1e-12 * br.lower, e.value - br.upper - 1e-12 * br.upper)
            if dev > 3 * e.stderr:
                fails += 1
            details.append(dev / e.stderr if e.stderr else (0.0 if dev == 0 else np.inf))
    tvs = []
    for m in (f1(), f2()):
        ys = yaglom_mc(m, np.array([1]), 5, 100_000, SEEDS[1])
        tvs.append(ys.tv_distance(np.array([[1]]), [1.0]))
    ys3 = yaglom_mc(f3(), np.array([1, 0]), 25, 10_000_000, SEEDS[2])
    tvs.append(ys3.tv_distance(ya3.states, ya3.t))
    ok = fails == 0 and max(tvs) <= 0.05
    check(9, "Monte Carlo vs oracle", ok,
          f"worst survival deviation {max(details):.2f} stderr, Yaglom TV {', '.join(f'{t:.3f}' for t in tvs)} "
          f"(F3 n=25: {ys3.survivors} survivors of 10^7)")


def test_criterion_10_property_suite():
    here = Path(__file__).resolve().parent
    others = sorted(str(p) for p in here.glob("test_*.py") if p.name != Path(__file__).name)
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *others],
                          capture_output=True, text=True, cwd=here.parent, check=False)
    elapsed = time.perf_counter() - t0
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    ok = proc.returncode == 0 and elapsed < 300 and len(SEEDS) >= 3
    check(10, "module property suite", ok, f"{tail}; {elapsed:.0f}s; seeds {list(SEEDS)}")
