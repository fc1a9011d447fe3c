"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The contraction and rate criteria (11 to 13) run full simulations and take a
few minutes together; they are marked ``slow`` but are part of the default run.
"""

import math
import time

import numpy as np
import pytest
from scipy.optimize import bisect, brentq

from sieveprior.basis import HaarBasis, SplineBasis, gram_matrix
from sieveprior.entropy import ball_inclusion_check, verify_assumption_1
from sieveprior.expfam import SplineFunction, make_density, psi
from sieveprior.harness import (
    ExperimentConfig,
    RadiusRule,
    TruthSpec,
    contraction_experiment,
    draw_data,
    evidence_lower_bound_mc,
    fit_slope,
    make_truth,
    rate_slope,
    sup_error_curve,
    tail_bound_mc,
)
from sieveprior.metrics import (
    barron_sheu_terms,
    divergences,
    gaussian_closed_forms,
    gaussian_hellinger_constant,
    l2_distance,
)
from sieveprior.posterior import model_evidence, posterior_tail_mass
from sieveprior.sieve import ModelIndex, build_sieve, enumerate_models, gamma_for, summability

LINE = ModelIndex("spline-density", L=1, k=1, q=1)
UNIFORM = make_truth(TruthSpec("uniform"))
XI_GRID = [25, 50, 75, 100, 150, 200, 300, 400, 600, 800]


def _random_density(rng, scale=2.0):
    q, k = int(rng.integers(1, 5)), int(rng.integers(0, 6))
    basis = SplineBasis.from_kq(k, q)
    return make_density(basis, rng.uniform(-scale, scale, basis.m))


def _strictly_decreasing(values):
    return all(b < a for a, b in zip(values[:-1], values[1:]))


def test_criterion_01_lattice_constant(report):
    start = time.perf_counter()
    models = enumerate_models("spline-density", kmax=29, qmax=30, Lmax=30)
    part, limit = summability("spline-density", models)
    exact = math.exp(-2) / (1 - math.exp(-1)) ** 3
    elapsed = time.perf_counter() - start
    ok = abs(part - exact) <= 1e-6 and abs(limit - exact) < 1e-15 and elapsed < 1
    report(1, ok, f"sum exp(-C) = {part:.9f}, closed form {exact:.9f}, {elapsed:.2f} s")


def test_criterion_02_gamma_root(report):
    g = gamma_for("spline-density", rho=0.056)
    g_small = gamma_for("spline-density", rho=0.0056)
    oracle = bisect(lambda x: 0.13 * x / math.sqrt(1 - 4 * x) - 0.0056, 1e-12, 0.25 - 1e-12, xtol=1e-15)
    ok = abs(g - 0.1975) <= 5e-4 and abs(g_small - oracle) <= 1e-6 and abs(g_small - 0.0396) < 5e-4
    report(2, ok, f"gamma(0.056) = {g:.6f}, gamma(0.0056) = {g_small:.7f} vs bisection {oracle:.7f}")


def test_criterion_03_basis_suite(report):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    # partition of unity over random (q, k, x)
    q = rng.integers(1, 5, 10 ** 5)
    k = rng.integers(0, 17, 10 ** 5)
    x = rng.random(10 ** 5)
    pou = 0.0
    for qq in range(1, 5):
        for kk in range(17):
            sel = (q == qq) & (k == kk)
            vals = SplineBasis.from_kq(kk, qq)(x[sel])
            pou = max(pou, float(np.max(np.abs(vals.sum(axis=1) - 1), initial=0.0)))
    # sup of a spline is at most the largest coefficient (T_1 = 1)
    eq8 = 0
    grid = np.linspace(0, 1, 4097)
    for _ in range(200):
        basis = SplineBasis.from_kq(int(rng.integers(0, 17)), int(rng.integers(1, 5)))
        thetas = rng.standard_normal((50, basis.m)) * rng.uniform(0.1, 10)
        sups = np.max(np.abs(thetas @ basis(grid).T), axis=1)
        eq8 += int(np.sum(sups > np.max(np.abs(thetas), axis=1) + 1e-12))
    # Gram minimum eigenvalue
    gram_ok = True
    for qq in (1, 2, 3):
        t2 = 1.0 / (math.sqrt(qq) * (2 * qq + 1) * 9 ** (qq - 1))
        for kk in range(9):
            basis = SplineBasis.from_kq(kk, qq)
            gram_ok &= bool(np.linalg.eigvalsh(gram_matrix(basis))[0] >= t2 ** 2 / basis.m)
    # Haar sup against l2
    haar = 0
    for level in range(7):
        b = HaarBasis(level)
        theta = rng.standard_normal((b.m - 1, 10 ** 4)) * rng.uniform(0.1, 5, 10 ** 4)
        sup = np.max(np.abs(b.cell_values(theta)), axis=0)
        haar += int(np.sum(sup > 2 ** ((level + 1) / 2) * np.linalg.norm(theta, axis=0) * (1 + 1e-12)))
    elapsed = time.perf_counter() - start
    ok = pou < 1e-12 and eq8 == 0 and gram_ok and haar == 0 and elapsed < 30
    report(3, ok, f"partition max dev {pou:.1e}, sup-bound violations {eq8}, gram ok {gram_ok}, "
                  f"haar violations {haar}, {elapsed:.1f} s")


def test_criterion_04_normalizer_and_divergences(report):
    rng = np.random.default_rng(4)
    zero = max(abs(psi(SplineBasis.from_kq(k, q), np.zeros(k + q))) for q in range(1, 5) for k in range(6))
    shift = 0.0
    for _ in range(100):
        basis = SplineBasis.from_kq(int(rng.integers(0, 6)), int(rng.integers(1, 5)))
        theta = rng.uniform(-3, 3, basis.m)
        c = rng.uniform(-5, 5)
        shift = max(shift, abs(psi(basis, theta + c) - psi(basis, theta) - c))
    rep = divergences(make_density(SplineBasis.from_kq(0, 1), [0.0]),
                      make_density(SplineBasis.from_kq(1, 1), [math.log(2), 0.0]))
    a, b = math.log(3 / 4), math.log(3 / 2)
    h = math.sqrt(0.5 * (1 - math.sqrt(4 / 3)) ** 2 + 0.5 * (1 - math.sqrt(2 / 3)) ** 2)
    d, v = 0.5 * (a + b), 0.5 * (a * a + b * b)
    ok = (zero <= 1e-12 and shift <= 1e-10 and abs(rep.hellinger - h) <= 1e-6
          and abs(rep.kl_D - d) <= 1e-6 and abs(rep.v - v) <= 1e-6
          and abs(rep.hellinger - 0.169714) <= 1e-6 and abs(rep.v - 0.123581) <= 1e-6
          and abs(rep.kl_D - 0.058891) <= 1e-6)
    report(4, ok, f"psi(0) {zero:.1e}, shift {shift:.1e}, d_H {rep.hellinger:.6f}, "
                  f"D {rep.kl_D:.7f}, V {rep.v:.6f}")


def test_criterion_05_gaussian_forms(report):
    pairs = [(lambda x: np.sin(2 * np.pi * x) / 2, lambda x: 0 * x, 0.5),
             (lambda x: x, lambda x: 1 - x, 1.0),
             (lambda x: np.abs(x - 0.5), lambda x: 0.2 + 0 * x, 0.3)]
    rng = np.random.default_rng(55)
    n = 10 ** 6
    worst = 0.0
    for fo, f, sigma in pairs:
        x = rng.random(n)
        y = fo(x) + sigma * rng.standard_normal(n)
        lr = ((y - f(x)) ** 2 - (y - fo(x)) ** 2) / (2 * sigma ** 2)
        D, V, hsq = gaussian_closed_forms(fo, f, sigma)
        for sample, exact in ((lr, D), (lr ** 2, V), (2 - 2 * np.exp(-0.5 * lr), hsq)):
            worst = max(worst, abs(sample.mean() - exact) / (sample.std() / math.sqrt(n)))
    D, V, hsq = gaussian_closed_forms(lambda x: 1 + 0 * x, lambda x: 0 * x, 1.0)
    ok = worst <= 4 and abs(D - 0.5) < 1e-12 and abs(V - 1.25) < 1e-12 and round(hsq, 6) == 0.235006
    report(5, ok, f"worst MC z-score {worst:.2f}; constant gap D={D:.6f}, V={V:.6f}, d_H^2={hsq:.6f}")


def test_criterion_06_inequality_suites(report):
    rng = np.random.default_rng(6)
    bs = kl = tri = gauss = 0
    for _ in range(1000):
        r = divergences(_random_density(rng), _random_density(rng))
        bs += r.kl_D > 0.5 * math.exp(r.sup_log_ratio) * r.v + 1e-12
        kl += r.kl_D > r.sup_log_ratio + 1e-12
    for _ in range(1000):
        f, g, h = (_random_density(rng) for _ in range(3))
        tri += (divergences(f, g).hellinger
                > divergences(f, h).hellinger + divergences(h, g).hellinger + 1e-12)
    for _ in range(1000):
        M, sigma = rng.uniform(0.2, 3), rng.uniform(0.1, 3)
        basis = SplineBasis.from_kq(int(rng.integers(0, 6)), int(rng.integers(1, 4)))
        f = SplineFunction(basis, rng.uniform(-M, M, basis.m))
        g = SplineFunction(basis, rng.uniform(-M, M, basis.m))
        hsq = gaussian_closed_forms(f, g, sigma)[2]
        gauss += hsq < gaussian_hellinger_constant(M, sigma) * l2_distance(f, g) ** 2 - 1e-12
    z = rng.uniform(-30, 30, 1000)
    lo, mid, hi = barron_sheu_terms(z)
    tol = 1e-12 * np.maximum(1, np.abs(mid))
    elem = int(np.sum((lo > mid + tol) | (mid > hi + tol)))
    total = bs + kl + tri + gauss + elem
    report(6, total == 0, f"violations: D vs V bound {bs}, Gaussian lower bound {gauss}, "
                          f"z-inequality {elem}, D vs sup-log-ratio {kl}, triangle {tri}")


def test_criterion_07_entropy(report):
    start = time.perf_counter()
    rows = verify_assumption_1(LINE, trials=20, seed=7)
    cover_ok = all(r.covering <= r.bound and r.delta <= 0.056 * r.r for r in rows)
    inc = ball_inclusion_check(LINE, radii=(0.05, 0.1, 0.2, 0.3), cloud_size=10 ** 5, seed=7)
    worst = max(w for _, _, w in inc)
    elapsed = time.perf_counter() - start
    ok = len(rows) == 20 and cover_ok and worst <= 1 and elapsed < 120
    report(7, ok, f"worst covering ratio {max(r.ratio for r in rows):.2e}, "
                  f"ball inclusion worst {worst:.3f}, {elapsed:.1f} s")


def test_criterion_08_tail_bounds(report):
    start = time.perf_counter()
    dens = tail_bound_mc(LINE, UNIFORM, XI_GRID, 200, 2000, seed=8)
    zero = make_truth(TruthSpec("regression", name="zero", M=1.0, sigma=1.0))
    reg_j = ModelIndex("spline-regression", L=1, k=0, q=1)
    reg = tail_bound_mc(reg_j, zero, [50 * i for i in range(1, 17)], 200, 2000, seed=9,
                        M=1.0, sigma=1.0, c0=2.0)
    checked = [r for r in dens + reg if r.envelope <= 0.5]
    bad = [r for r in checked if r.frequency > r.envelope]
    elapsed = time.perf_counter() - start
    ok = len(checked) > 0 and not bad and elapsed < 600
    report(8, ok, f"{len(checked)} informative rows, {len(bad)} exceed the envelope, {elapsed:.1f} s")


def test_criterion_09_evidence_lower_bound(report):
    freq, bound, pi_b, _ = evidence_lower_bound_mc(LINE, UNIFORM, 100, 0.25, 500, seed=9)
    ok = abs(bound - 0.08) < 1e-12 and freq <= bound
    report(9, ok, f"failure frequency {freq:.3f} <= {bound:.2f} (ball prior mass {pi_b:.3f})")


def _line_grid_tail(x, radius, size=400_001):
    t_star = brentq(lambda t: t + math.log(math.cosh(t)) - 1.0, 0, 1)
    t = np.linspace(-t_star, t_star, size)
    lc = np.logaddexp(t, -t) - math.log(2)
    left = np.sum(x < 0.5)
    ll = left * (t - lc) + (x.size - left) * (-t - lc)
    root = 0.5 * (np.exp(0.5 * (t - lc)) + np.exp(0.5 * (-t - lc)))
    dist = np.sqrt(np.maximum(2 - 2 * root, 0))
    w = np.exp(ll - ll.max())
    return np.trapezoid(w * (dist > radius), t) / np.trapezoid(w, t)


def test_criterion_10_posterior_oracle(report):
    spec = build_sieve("spline-density", models=[LINE])
    data = draw_data(UNIFORM, 2, 10)
    radii = [0.05, 0.15, 0.3]
    est = posterior_tail_mass(spec, data, UNIFORM, radii, mc=40_000, seed=10)
    z_tail = max(abs(m - _line_grid_tail(data.x, r)) / s
                 for m, s, r in zip(est.tail_mass, est.tail_se, radii))
    big = draw_data(UNIFORM, 500, 5)
    u = model_evidence(LINE, big, mc=20_000, seed=1, method="uniform")
    t = model_evidence(LINE, big, mc=20_000, seed=1, method="tempered")
    z_ev = abs(u.log_value - t.log_value) / math.hypot(u.se, t.se)
    report(10, z_tail <= 3 and z_ev <= 3,
           f"n=2 tail vs grid worst z {z_tail:.2f}; n=500 evidence estimators z {z_ev:.2f}")


@pytest.mark.slow
def test_criterion_11_density_contraction(report):
    start = time.perf_counter()
    config = ExperimentConfig(truth=TruthSpec("uniform"), radius=RadiusRule(c=(2.0,)),
                              n_grid=(100, 400, 1600), replicates=8, seed=11)
    res = contraction_experiment(config)
    med = [res.medians[(n, 0)] for n in config.n_grid]
    elapsed = time.perf_counter() - start
    ok = _strictly_decreasing(med) and elapsed < 600
    report(11, ok, "median log tail mass " + ", ".join(f"{m:.2f}" for m in med)
           + f" at n = 100, 400, 1600; {elapsed:.0f} s")


@pytest.mark.slow
def test_criterion_12_regression_contraction(report):
    start = time.perf_counter()
    truth = TruthSpec("regression", name="sin", scale=0.5, M=1.0, sigma=0.5)
    config = ExperimentConfig(truth=truth, family="spline-regression", radius=RadiusRule(c=(3.0,)),
                              n_grid=(100, 400, 1600), replicates=8, seed=11)
    res = contraction_experiment(config)
    med = [res.medians[(n, 0)] for n in config.n_grid]
    elapsed = time.perf_counter() - start
    ok = _strictly_decreasing(med) and elapsed < 600
    report(12, ok, "median log tail mass " + ", ".join(f"{m:.2f}" for m in med)
           + f" at n = 100, 400, 1600; {elapsed:.0f} s")


@pytest.mark.slow
def test_criterion_13_rate_slope(report):
    start = time.perf_counter()
    truth = TruthSpec("regression", name="sin", scale=0.5, M=1.0, sigma=0.5, s=1.0)
    config = ExperimentConfig(truth=truth, family="spline-regression", radius=RadiusRule(c=(3.0,)),
                              n_grid=(200, 800, 3200), replicates=8, seed=13)
    res = contraction_experiment(config)
    slope, ci, degenerate = rate_slope(res, "half_mass_radius")
    elapsed = time.perf_counter() - start
    target = -1 / 3
    ok = abs(slope - target) <= 0.2 and elapsed < 1200
    report(13, ok, f"half-mass radius slope {slope:.3f} (CI {ci[0]:.3f}, {ci[1]:.3f}, "
                   f"degenerate {degenerate}) vs {target:.3f}; {elapsed:.0f} s")


def test_criterion_14_approximation_rates(report):
    ks = np.array([4, 8, 16, 32])
    abs_err = sup_error_curve(make_truth(TruthSpec("smooth", name="abs")), 2, ks)
    kink_err = sup_error_curve(make_truth(TruthSpec("smooth", name="kink")), 3, ks)
    s_abs = fit_slope(ks + 1.0, abs_err)[0]
    s_kink = fit_slope(ks + 1.0, kink_err)[0]
    report(14, s_abs <= -0.8 and s_kink <= -1.8,
           f"|x-1/2| with q=2 slope {s_abs:.3f}; (x-1/2)|x-1/2| with q=3 slope {s_kink:.3f}")
