"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Benchmark table anchors are checked at desk scale within combined Monte Carlo
standard errors (3 SE unless the criterion widens them).  Two sub-checks are
expected to fail by construction and are documented in the decisions ledger:
the w_h band of criterion 5 (the exact fixed point is 2.98549, outside the
stated [2.975, 2.985]) and the quarter-dominance leg of criterion 4 (the
benchmark Table 4 numbers themselves violate the literal claim).
"""
import math
import time
from pathlib import Path

import numpy as np
import pytest

from truncvol import (
    FaJumpLaw,
    Merton,
    SamplingGrid,
    a_coef,
    b_coef,
    cmse_objective,
    consistency_indicator_check,
    simulate,
    solve_levy_mse,
    solve_stable_mse,
    solve_vn,
    solve_wh,
    trv,
)
from truncvol.estimators import threshold_from_rule
from truncvol.harness import emit_table, emit_vn_curve, load_config, run_experiment
from truncvol.solvers import ModulusRule, RefinedModulusRule

TABLES_DIR = Path(__file__).resolve().parent.parent / "tables"
H_5MIN = 1.0 / (252 * 6.5 * 12)
COMBINE_1000 = math.sqrt(1 / 1000 + 1 / 5000)
COMBINE_500 = math.sqrt(1 / 500 + 1 / 5000)

# Table 1 (Merton, lambda=100): mean rel bias, std, MSE x 1e5
TABLE1 = {
    "rv": (0.28625, 0.17562, 288.7300), "bv": (0.06664, 0.05517, 19.1650),
    "minrv": (0.01563, 0.05117, 7.3287), "medrv": (0.01799, 0.04593, 6.2292),
    "trv_jt": (0.00992, 0.03712, 3.7799), "3mc": (0.02971, 0.04262, 6.9121),
    "3mc_k": (0.02033, 0.03978, 5.1097), "2mc": (0.01500, 0.03822, 4.3174),
    "2mc_k": (0.00908, 0.03698, 3.7127), "mc2": (0.01190, 0.03712, 3.8920),
    "mc2_k": (0.00654, 0.03646, 3.5133), "new": (-0.00046, 0.03623, 3.3605),
    "new_k": (-0.00048, 0.03622, 3.3593), "orc": (-0.00373, 0.03463, 3.1072),
    "tbv": (0.00185, 0.04130, 4.3759), "tbv_k": (0.00110, 0.04124, 4.3586),
}
# Table 3, rho = -0.5 column: mean rel bias, std
TABLE3 = {
    "rv": (0.59211, 0.28610), "bv": (0.13910, 0.07373),
    "minrv": (0.03478, 0.05981), "medrv": (0.04114, 0.05745),
    "trv_jt": (0.02275, 0.04032), "3mc": (0.08215, 0.06073),
    "3mc_k": (0.04266, 0.04528), "2mc": (0.04388, 0.04637),
    "2mc_k": (0.01850, 0.03984), "mc2": (0.036717, 0.04360),
    "mc2_k": (0.01423, 0.03849), "new": (0.00228, 0.03771),
    "new_k": (0.00342, 0.03765), "orc": (-0.00582, 0.03506),
    "tbv": (0.00574, 0.04296), "tbv_k": (0.00254, 0.04274),
}
BV_FAMILY = {"bv", "minrv", "medrv", "tbv", "tbv_k"}


def report(capsys, number, name, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] acceptance {number} ({name}): {detail}"
    with capsys.disabled():
        print(line)
    assert ok, line


@pytest.fixture(scope="module")
def t1():
    cfg = load_config(TABLES_DIR / "table1.cfg")
    start = time.time()
    summary = run_experiment(cfg, n_paths=1000)
    return summary, time.time() - start


@pytest.fixture(scope="module")
def t2():
    return run_experiment(load_config(TABLES_DIR / "table2.cfg"), n_paths=500)


@pytest.fixture(scope="module")
def t3():
    return run_experiment(load_config(TABLES_DIR / "table3.cfg"), n_paths=1000)


@pytest.fixture(scope="module")
def t4():
    return run_experiment(load_config(TABLES_DIR / "table4.cfg"), n_paths=1000)


def test_criterion_1_table1_reproduction(t1, capsys):
    summary, elapsed = t1
    problems = []
    for row in summary.rows:
        p_mean, p_std, p_mse5 = TABLE1[row.estimator]
        mean_band = 3 * p_std * COMBINE_1000
        if abs(row.mean_rel_bias - p_mean) > mean_band:
            problems.append(f"{row.estimator} bias {row.mean_rel_bias:+.5f} "
                            f"vs {p_mean:+.5f} (band {mean_band:.5f})")
        sd_sq = row.se_mse * math.sqrt(row.n_paths)
        mse_band = 3 * sd_sq * COMBINE_1000
        if abs(row.mse - p_mse5 * 1e-5) > mse_band:
            problems.append(f"{row.estimator} MSE {row.mse:.3e} vs "
                            f"{p_mse5 * 1e-5:.3e} (band {mse_band:.3e})")
    mse = {r.estimator: r.mse for r in summary.rows}
    ordering = (mse["orc"] < min(mse["new"], mse["new_k"])
                and max(mse["new"], mse["new_k"]) < mse["mc2_k"]
                < mse["2mc_k"] < mse["3mc_k"] < mse["bv"] < mse["rv"])
    if not ordering:
        problems.append("MSE ordering Orc < NEW ~ NEW_k < mc2_k < 2mc_k < "
                        "3mc_k < BV < RV violated")
    if elapsed > 300:
        problems.append(f"runtime {elapsed:.0f}s exceeds 5 minutes")
    report(capsys, 1, "Table 1", not problems,
           problems[0] if problems else
           f"16 estimators within 3 SE, ordering holds, {elapsed:.0f}s")


def test_criterion_2_table2_spot_checks(t2, capsys):
    problems = []
    for est, target5 in (("new", 3.6632), ("3mc_k", 10.0620)):
        row = t2.row(est)
        band = 3 * row.se_mse * math.sqrt(row.n_paths) * COMBINE_500
        if abs(row.mse - target5 * 1e-5) > band:
            problems.append(f"{est} MSE {row.mse * 1e5:.4f}e-5 vs {target5}e-5 "
                            f"(band {band * 1e5:.4f}e-5)")
    report(capsys, 2, "Table 2 spot checks", not problems,
           problems[0] if problems else
           f"new {t2.row('new').mse * 1e5:.3f}e-5, 3mc_k "
           f"{t2.row('3mc_k').mse * 1e5:.3f}e-5 within 3 SE")


def test_criterion_3_heston(t3, capsys):
    problems = []
    new_row = t3.row("new")
    band = 3 * TABLE3["new"][1] * COMBINE_1000
    if abs(new_row.mean_rel_bias - TABLE3["new"][0]) > band:
        problems.append(f"new bias {new_row.mean_rel_bias:+.5f} vs +0.00228")
    orc_mse = t3.row("orc").mse
    if any(r.mse < orc_mse for r in t3.rows):
        problems.append("oracle MSE is not the smallest")
    for row in t3.rows:
        p_mean, p_std = TABLE3[row.estimator]
        widen = 4 if row.estimator in BV_FAMILY else 3
        if abs(row.mean_rel_bias - p_mean) > widen * p_std * COMBINE_1000:
            problems.append(f"{row.estimator} bias {row.mean_rel_bias:+.5f} "
                            f"vs {p_mean:+.5f} ({widen} SE)")
    report(capsys, 3, "Table 3 Heston rho=-0.5", not problems,
           problems[0] if problems else
           f"new bias {new_row.mean_rel_bias:+.5f} (benchmark +0.00228), oracle smallest")


def test_criterion_4_variance_gamma(t4, capsys):
    problems = []
    for est, target10 in (("2mc_k", 0.588), ("mc2_k", 0.707)):
        row = t4.row(est)
        band = 3 * row.se_mse * math.sqrt(row.n_paths) * COMBINE_1000
        if abs(row.mse - target10 * 1e-10) > band:
            problems.append(f"{est} MSE {row.mse * 1e10:.4f}e-10 vs {target10}e-10")
    mse = {r.estimator: r.mse for r in t4.rows}
    others = ("trv_jt", "3mc", "3mc_k", "2mc", "mc2", "new", "new_k", "tbv", "tbv_k")
    floor = min(mse[e] for e in others)
    ratios = {est: 4 * mse[est] / floor for est in ("2mc_k", "mc2_k")}
    if max(ratios.values()) > 1.0:
        problems.append(
            "quarter dominance violated: 4*MSE/min(others) = "
            + ", ".join(f"{k}={v:.3f}" for k, v in ratios.items())
            + " (the benchmark table itself violates the literal claim; "
            "see decisions ledger)")
    report(capsys, 4, "Table 4 VG", not problems,
           problems[0] if problems else
           f"anchors within 3 SE and quarter dominance holds ({ratios})")


def test_criterion_5_scalar_solvers(capsys):
    start = time.time()
    problems = []
    w = solve_wh(H_5MIN)
    if not 2.975 <= w <= 2.985:
        problems.append(f"w_h = {w:.6f} outside [2.975, 2.985] "
                        "(exact fixed point of the stated condition; "
                        "the published 2.98 is a truncation - see ledger)")
    sqrt_log = math.sqrt(math.log(1 / H_5MIN))
    if abs(sqrt_log - 3.14) > 0.005:
        problems.append(f"sqrt(log(1/h)) = {sqrt_log:.5f} not 3.14 +- 0.005")
    if not 2.8 <= solve_vn(100) <= 3.3:
        problems.append(f"v_100 = {solve_vn(100):.4f}")
    if not 3.7 <= solve_vn(10000) <= 4.2:
        problems.append(f"v_10000 = {solve_vn(10000):.4f}")
    curve = [float(line.split(",")[1]) for line in
             emit_vn_curve().splitlines()[1:]]
    if not all(b >= a for a, b in zip(curve, curve[1:])):
        problems.append("v_n curve not monotone")
    elapsed = time.time() - start
    if elapsed > 1.0:
        problems.append(f"runtime {elapsed:.2f}s exceeds 1 second")
    report(capsys, 5, "scalar solvers", not problems,
           problems[0] if problems else
           f"w_h={w:.4f}, sqrt(log(1/h))={sqrt_log:.4f}, v_n bands and "
           f"monotonicity hold in {elapsed:.2f}s")


def test_criterion_6_kernel_property_suite(capsys):
    problems = []
    # derivative identity on a 100-point lattice
    worst = 0.0
    for sigma_i in (0.5, 1.0):
        s2 = sigma_i**2
        delta = 1e-4 * sigma_i
        for m_mult in (0.0, 0.5, 1.0, 2.0, 5.0):
            m = m_mult * sigma_i
            for eps in np.linspace(0.2 * sigma_i, 5 * sigma_i, 10):
                diff = (b_coef(eps + delta, m, s2)
                        - b_coef(eps - delta, m, s2)) / (2 * delta)
                exact = eps * eps * a_coef(eps, m, s2)
                worst = max(worst, abs(diff / exact - 1.0))
    if worst >= 1e-6:
        problems.append(f"derivative identity rel err {worst:.2e}")
    # boundary values
    for m, s2 in ((0.0, 0.5), (1.5, 0.2), (-2.0, 1.0)):
        if b_coef(0.0, m, s2) != 0.0:
            problems.append("b(0) != 0")
        if abs(b_coef(1e3, m, s2) - (m * m + s2)) > 1e-10:
            problems.append("b(inf) != m^2 + s2 at 1e-10")
    # F(0) < 0 on random instances
    rng = np.random.default_rng(2024)
    for _ in range(100):
        n = int(rng.integers(2, 65))
        grid = SamplingGrid(float(rng.uniform(0.1, 2.0)), n)
        sigma = float(rng.uniform(0.05, 1.5))
        jumps = np.where(rng.random(n) < 0.3, rng.normal(0, 0.5, n), 0.0)
        if cmse_objective(0.0, sigma, jumps, grid) >= 0:
            problems.append("F(0) >= 0 on a random instance")
            break
    # O(n) form vs brute force double loop
    from tests.test_kernels import brute_force_objective
    for _ in range(30):
        n = int(rng.integers(2, 65))
        grid = SamplingGrid(float(rng.uniform(0.2, 2.0)), n)
        sigma = float(rng.uniform(0.1, 1.2))
        jumps = np.where(rng.random(n) < 0.4, rng.normal(0, 0.4, n), 0.0)
        eps = float(rng.uniform(0.0, 1.5))
        fast = cmse_objective(eps, sigma, jumps, grid)
        brute = brute_force_objective(eps, sigma, jumps, grid)
        scale = sum(a_coef(eps, mj, sigma**2 * grid.h) for mj in jumps) * (
            eps * eps + 2 * sigma**2 * grid.t_horizon + 1.0)
        if abs(fast - brute) > 1e-12 * max(abs(brute), scale):
            problems.append(f"O(n) vs O(n^2) deviation {abs(fast - brute):.2e}")
            break
    report(capsys, 6, "kernel properties", not problems,
           problems[0] if problems else
           f"derivative identity worst rel err {worst:.1e}; bounds, F(0)<0 "
           "and O(n) equivalence hold")


def test_criterion_7_fa_asymptotic_ratio(capsys):
    # The table-1 process (month horizon, fixed jump law) on refined steps.
    law = FaJumpLaw(100.0, 0.0, 3 * math.sqrt(H_5MIN))
    devs = []
    ratios = []
    for h in (1e-3, 1e-4, 1e-5, 1e-6, 1e-7):
        n = round((1.0 / 12.0) / h)
        root = solve_levy_mse(0.4, SamplingGrid(n * h, n), law)
        ratio = root / math.sqrt(2 * 0.16 * h * math.log(1 / h))
        ratios.append(ratio)
        devs.append(abs(1.0 - ratio))
    monotone = all(b < a for a, b in zip(devs, devs[1:]))
    ok = monotone and devs[-1] <= 0.12
    report(capsys, 7, "FA asymptotic threshold", ok,
           "ratios " + ", ".join(f"{r:.4f}" for r in ratios)
           + f"; |1-r| monotone={monotone}, final dev {devs[-1]:.3f} (<= 0.12)")


def test_criterion_8_stable_asymptotic_ratio(capsys):
    # Monte Carlo solve with one million common-random-number samples; noisy
    # by construction, hence the wide band.  Levy constant 0.4 corresponds to
    # characteristic-exponent scale pi * 0.4 at activity index 1.
    y, scale = 1.0, math.pi * 0.4
    h = 1e-6
    grid = SamplingGrid(1.0, 10**6)
    root = solve_stable_mse(1.0, grid, y, scale, n_samples=10**6, seed=7)
    target = math.sqrt((2 - y) * 1.0 * h * math.log(1 / h))
    ratio = root / target
    ok = abs(ratio - 1.0) <= 0.20
    report(capsys, 8, "stable asymptotic threshold", ok,
           f"ratio {ratio:.4f} within 20% of 1 (noisy Monte Carlo check)")


def test_criterion_9_consistency_fractions(capsys):
    fractions = []
    for n in (1638, 16380, 163800):
        grid = SamplingGrid(1.0 / 12.0, n)
        spec = Merton(0.4, FaJumpLaw(100.0, 0.0, 3 * math.sqrt(grid.h)))
        vals = [consistency_indicator_check(simulate(spec, grid, 9000 + s),
                                            grid, eta=0.1)
                for s in range(100)]
        fractions.append(float(np.mean(vals)))
    ok = fractions[0] > fractions[1] > fractions[2] and fractions[-1] < 1e-3
    report(capsys, 9, "consistency indicator", ok,
           "fractions " + ", ".join(f"{f:.2e}" for f in fractions)
           + " decreasing, largest n below 0.1%")


def test_criterion_10_monotone_iteration(t1, capsys):
    summary, _ = t1
    cfg = load_config(TABLES_DIR / "table1.cfg")
    grid = cfg.grid
    problems = []
    rules = (ModulusRule(2), ModulusRule(3), RefinedModulusRule())
    for p in range(1000):
        path = simulate(cfg.model, grid, cfg.base_seed ^ p)
        rv_sigma2 = float(np.sum(path.dx**2)) / grid.t_horizon
        for rule in rules:
            chain = [rv_sigma2]
            kept_prev = None
            for rounds in range(1, 11):
                eps = threshold_from_rule(rule, math.sqrt(chain[-1]), grid)
                rep = trv(path.dx, eps)
                chain.append(rep.iv_hat / grid.t_horizon)
                if chain[-1] > chain[-2] + 1e-18:
                    problems.append(f"path {p}: chain increased")
                if kept_prev is not None and rep.kept == kept_prev \
                        and chain[-1] == chain[-2]:
                    break
                kept_prev = rep.kept
            else:
                problems.append(f"path {p}: no fixed point within 10 rounds")
        if problems:
            break
    n_row = summary.row("2mc_k")
    band = 3 * 0.52 * COMBINE_1000
    if abs(n_row.mean_iters - 2.30) > band:
        problems.append(f"mean N {n_row.mean_iters:.3f} vs 2.30 (band {band:.3f})")
    report(capsys, 10, "monotone iteration", not problems,
           problems[0] if problems else
           f"1000 paths x 3 chains nonincreasing, fixed point <= 10 rounds; "
           f"mean N(2mc_k) = {n_row.mean_iters:.3f} (benchmark 2.30)")


def test_criterion_11_determinism(capsys):
    problems = []
    for name in ("table1", "table2", "table3", "table4"):
        cfg = load_config(TABLES_DIR / f"{name}.cfg")
        texts = {emit_table(run_experiment(cfg, threads=threads, n_paths=10), "csv")
                 for threads in (1, 1, 3)}
        if len(texts) != 1:
            problems.append(f"{name}: output varies across runs/threads")
    report(capsys, 11, "determinism", not problems,
           problems[0] if problems else
           "all four configs byte-identical across re-runs and thread counts")
