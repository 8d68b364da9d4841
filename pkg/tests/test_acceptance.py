"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the summary lines are written
straight to the terminal so they appear without ``-s``.
"""

import itertools
import math
import time

import numpy as np
import pytest

from sparse_detect import bounds, cli
from sparse_detect.detect import AlternativeFamily, estimate_norm_mse, psi, risk_curve
from sparse_detect.estimator import estimate
from sparse_detect.model import (
    PriorSpec,
    ProblemConfig,
    SparseVector,
    derive_seed,
    random_support,
    rng_from,
    sample_regression,
)


@pytest.fixture
def report(capsys):
    def emit(number, name, ok, detail, elapsed, budget):
        within = elapsed < budget
        status = "PASS" if ok and within else "FAIL"
        with capsys.disabled():
            print(f"\n[acceptance {number}] {status} {name}: {detail} ({elapsed:.1f}s / {budget:.0f}s budget)")
        assert ok, detail
        assert within, f"runtime {elapsed:.1f}s exceeds {budget}s"

    return emit


def test_1_zero_noise_exactness(report):
    t0 = time.perf_counter()
    rng = rng_from(derive_seed(1, "acceptance1", 0))
    worst = 0.0
    regimes = set()
    for k in range(50):
        n = int(rng.integers(60, 501))
        p = int(rng.integers(10, min(100, n - 1) + 1))
        root = math.isqrt(p)
        # alternate sides of sqrt(p)
        s = int(rng.integers(1, root + (root * root < p))) if k % 2 else int(rng.integers(root + 1, p + 1))
        s = min(max(s, 1), p)
        cfg = ProblemConfig(n=n, p=p, s=s, sigma=0.0)
        supp = random_support(p, s, rng)
        theta = SparseVector(p, supp, rng.uniform(0.1, 2.0, s) * rng.choice([-1.0, 1.0], s))
        smp = sample_regression(cfg, theta, derive_seed(1, "acceptance1", k + 1))
        res = estimate(smp.x, smp.y, cfg)
        norm = theta.l2_norm()
        worst = max(worst, abs(res.q_hat - norm**2) / norm**2, abs(res.n_hat - norm) / norm)
        regimes.add(res.regime.value)
    report(1, "zero-noise exactness", worst <= 1e-8 and regimes == {"dense", "sparse"},
           f"max relative error {worst:.2e} over 50 instances, regimes {sorted(regimes)}",
           time.perf_counter() - t0, 5)


def test_2_mse_ratio_stability(report):
    t0 = time.perf_counter()
    ratios = []
    for s in (1, 2, 5, 10, 20):
        cfg = ProblemConfig(n=500, p=100, s=s, sigma=1.0)
        res = estimate_norm_mse(cfg, AlternativeFamily("equal_spread", 1.0), 2000, derive_seed(2, "s", s))
        ratios.append(res.mse / psi(s, 100, 500))
    spread = max(ratios) / min(ratios)
    report(2, "MSE / (sigma^2 psi) stability", spread <= 4.0,
           f"ratios {[round(r, 3) for r in ratios]}, max/min {spread:.2f} <= 4",
           time.perf_counter() - t0, 120)


def test_3_risk_curve(report):
    t0 = time.perf_counter()
    cfg = ProblemConfig(n=500, p=100, s=5, sigma=1.0)
    curve = risk_curve(cfg, "prior_draws", [0.25, 0.5, 1, 2, 4, 8], 500, seed=3)
    mono = all(
        hi.total <= lo.total + 2 * math.hypot(lo.half_width, hi.half_width)
        for lo, hi in itertools.pairwise(curve)
    )
    ok = mono and curve[-1].total <= 0.1 and curve[0].total >= 0.9
    report(3, "risk curve shape", ok,
           f"totals {[round(r.total, 3) for r in curve]}, nonincreasing within slack: {mono}",
           time.perf_counter() - t0, 120)


def test_4_gaussian_tail_sandwich(report):
    t0 = time.perf_counter()
    violations = {"tail_lower": 0, "tail_upper": 0, "second_moment": 0, "fourth_moment": 0}
    quad_err = 0.0
    first_fourth = None
    for k in range(1, 201):
        x = round(0.05 * k, 10)
        r = bounds.gaussian_tail_bounds(x)
        for name, ok in r.checks().items():
            if not ok:
                violations[name] += 1
                if name == "fourth_moment" and first_fourth is None:
                    first_fourth = x
        for kk, q in ((2, r.exact_second), (4, r.exact_fourth)):
            quad_err = max(quad_err, abs(q - bounds.tail_moment_closed(kk, x)) / q)
    total = sum(violations.values())
    report(4, "Gaussian tail and truncated-moment sandwich", total == 0 and quad_err <= 1e-9,
           f"violations {violations} (first fourth-moment violation at x={first_fourth}), "
           f"quadrature error {quad_err:.1e}",
           time.perf_counter() - t0, 5)


def test_5_inverse_chi2_moments(report):
    t0 = time.perf_counter()
    exact = bounds.chi2_inverse_moment_exact(9, 4)
    worst = 0.0
    for d, m in itertools.product((9, 12, 20, 50), (1, 2, 3, 4)):
        if d > 2 * m:
            ref = bounds.chi2_inverse_moment(d, m)
            worst = max(worst, abs(bounds.chi2_inverse_moment_quadrature(d, m) - ref) / ref)
    report(5, "inverse chi-square moments", exact == bounds.Fraction(1, 105) and worst <= 1e-9,
           f"E[chi2_9^-4] = {exact}, quadrature max relative error {worst:.1e}",
           time.perf_counter() - t0, 10)


def test_6_gram_diagonal_identity(report):
    t0 = time.perf_counter()
    rng = rng_from(derive_seed(6, "acceptance6", 0))
    worst = 0.0
    for k in range(20):
        n = int(rng.integers(30, 101))
        p = int(rng.integers(5, 21))
        worst = max(worst, bounds.gram_diag_distance_identity_check(n, p, derive_seed(6, "design", k)))
    report(6, "inverse-Gram diagonal vs projection distance", worst <= 1e-6,
           f"max relative discrepancy {worst:.1e} over 20 designs", time.perf_counter() - t0, 10)


def test_7_mixture_bound_chain(report):
    t0 = time.perf_counter()
    bad = checked = 0
    for a in np.round(np.arange(1, 10) * 0.1, 10):
        for p in (16, 256, 4096):
            for s in range(1, math.isqrt(p) + 1):
                for n in (10, 100, 1000, 10**4):
                    b, mid, top = bounds.mixture_bound_chain(float(a), s, p, n)
                    checked += 1
                    bad += not (b <= mid <= top)
    report(7, "mixture bound chain", bad == 0, f"{bad} violations in {checked} cells",
           time.perf_counter() - t0, 5)


def test_8_divergence_against_oracle(report):
    t0 = time.perf_counter()
    n, p, s = 20, 10, 2
    cfg = ProblemConfig(n=n, p=p, s=s)
    rng = rng_from(derive_seed(8, "pairs", 0))
    misses = 0
    for j in range(10):
        tau = bounds.tau_reduced(0.25 + 0.075 * j, s, p, n)
        t = np.zeros(p)
        tp = np.zeros(p)
        t[random_support(p, s, rng)] = tau / math.sqrt(s)
        tp[random_support(p, s, rng)] = tau / math.sqrt(s)
        mean, hw = bounds.pair_moment_mc(t, tp, cfg, 20000, derive_seed(8, "pair", j))
        misses += abs(mean - bounds.gaussian_pair_moment(t, tp, n)) > 3 * hw

    tau = bounds.tau_reduced(0.5, s, p, n)
    est = bounds.chi2_divergence_mc(PriorSpec(p, s, tau), cfg, 400, 400, seed=derive_seed(8, "chi2", 0))
    agree = abs(est.chi2_mc - est.chi2_exact_gaussian) <= 3 * est.mc_half_width
    below = est.status == "ok" and est.chi2_mc + est.mc_half_width < 1.0
    report(8, "chi-square divergence MC vs Gaussian oracle",
           misses == 0 and agree and below,
           f"pair misses {misses}/10; chi2(A=0.5) = {est.chi2_mc:.4f} +/- {est.mc_half_width:.4f} "
           f"(exact {est.chi2_exact_gaussian:.4f}), upper end below 1.0: {below}",
           time.perf_counter() - t0, 120)


def test_9_cli_determinism_across_threads(report, tmp_path):
    t0 = time.perf_counter()
    outs = []
    for k in (1, 8):
        d = tmp_path / f"t{k}"
        assert cli.main(["risk", "--seed", "9", "--threads", str(k), "--out", str(d)]) == 0
        outs.append((d / "risk.csv").read_bytes())
    report(9, "risk CSV byte-identical at 1 and 8 threads", outs[0] == outs[1],
           f"{len(outs[0])} bytes each", time.perf_counter() - t0, 240)
