import math

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate as sint
from scipy import stats as sstats

from sieveprior.basis import HaarBasis, SplineBasis, sup_norm
from sieveprior.expfam import (
    ConstraintSpec,
    check_membership,
    log_density,
    make_density,
    membership_mask,
    psi,
    psi_batch,
    sample,
)

coef = st.floats(-3, 3, allow_nan=False)


def _quad_psi(basis, theta):
    val = sint.quad(lambda x: math.exp(basis.combine(theta, np.array([x]))[0]), 0, 1,
                    points=basis.breakpoints[1:-1], limit=200, epsabs=1e-14, epsrel=1e-13)[0]
    return math.log(val)


class TestPsi:
    @pytest.mark.parametrize("basis", [SplineBasis.from_kq(0, 1), SplineBasis.from_kq(3, 3),
                                       HaarBasis(2)])
    def test_zero(self, basis):
        dim = basis.m - 1 if isinstance(basis, HaarBasis) else basis.m
        assert abs(psi(basis, np.zeros(dim))) < 1e-12

    def test_two_cell_closed_form(self):
        assert psi(SplineBasis.from_kq(1, 1), [math.log(2), 0.0]) == pytest.approx(math.log(1.5), abs=1e-14)

    def test_linear_closed_form(self):
        # theta'B = 4x - 2
        expected = math.log((math.e ** 2 - math.e ** -2) / 4)
        assert psi(SplineBasis.from_kq(0, 2), [-2.0, 2.0]) == pytest.approx(expected, abs=1e-13)
        assert expected == pytest.approx(0.595220, abs=1e-6)

    @pytest.mark.parametrize("q, k", [(2, 3), (3, 2), (4, 5)])
    def test_scipy_quad_oracle(self, q, k):
        basis = SplineBasis.from_kq(k, q)
        theta = np.random.default_rng(q * 10 + k).uniform(-4, 4, basis.m)
        assert psi(basis, theta) == pytest.approx(_quad_psi(basis, theta), abs=1e-11)

    def test_large_coefficients_do_not_overflow(self):
        basis = SplineBasis.from_kq(2, 3)
        theta = np.full(basis.m, 800.0)
        assert psi(basis, theta) == pytest.approx(800.0, abs=1e-10)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            psi(SplineBasis.from_kq(0, 2), [np.nan, 0.0])

    def test_rejects_wrong_length(self):
        with pytest.raises(ValueError):
            psi(SplineBasis.from_kq(0, 2), [0.0])

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 4), st.integers(0, 6), st.integers(0, 10 ** 6), st.floats(-50, 50))
    def test_shift_identity(self, q, k, seed, c):
        basis = SplineBasis.from_kq(k, q)
        theta = np.random.default_rng(seed).uniform(-3, 3, basis.m)
        assert psi(basis, theta + c) == pytest.approx(psi(basis, theta) + c, abs=1e-10)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 4), st.integers(0, 6), st.integers(0, 10 ** 6))
    def test_lipschitz_in_sup_norm(self, q, k, seed):
        rng = np.random.default_rng(seed)
        basis = SplineBasis.from_kq(k, q)
        a, b = rng.uniform(-2, 2, (2, basis.m))
        gap = sup_norm(basis, a - b).coef_bound
        assert abs(psi(basis, a) - psi(basis, b)) <= gap + 1e-12

    def test_batch_matches_scalar(self):
        basis = SplineBasis.from_kq(4, 3)
        thetas = np.random.default_rng(2).uniform(-3, 3, (20, basis.m))
        npt.assert_allclose(psi_batch(basis, thetas), [psi(basis, t) for t in thetas], atol=1e-12)


class TestDensity:
    def test_two_cell_values(self):
        d = make_density(SplineBasis.from_kq(1, 1), [math.log(2), 0.0])
        npt.assert_allclose(d.pdf(np.array([0.1, 0.49, 0.5, 0.9])), [4 / 3, 4 / 3, 2 / 3, 2 / 3])

    def test_uniform(self):
        d = make_density(SplineBasis.from_kq(2, 2), np.zeros(4))
        assert log_density(d, 0.3) == 0.0

    def test_rejects_outside(self):
        d = make_density(SplineBasis.from_kq(2, 2), np.zeros(4))
        with pytest.raises(ValueError):
            log_density(d, -0.1)

    def test_normalized_random(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            q, k = int(rng.integers(1, 5)), int(rng.integers(0, 8))
            basis = SplineBasis.from_kq(k, q)
            d = make_density(basis, rng.uniform(-3, 3, basis.m))
            mass = sum(sint.quad(lambda x: d.pdf(np.array([x]))[0], lo, hi, epsabs=1e-13)[0]
                       for lo, hi in zip(basis.breakpoints[:-1], basis.breakpoints[1:]))
            assert mass == pytest.approx(1.0, abs=1e-10)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 4), st.integers(0, 6), st.integers(0, 10 ** 6), st.floats(-20, 20))
    def test_shift_invariance(self, q, k, seed, c):
        basis = SplineBasis.from_kq(k, q)
        theta = np.random.default_rng(seed).uniform(-3, 3, basis.m)
        x = np.linspace(0, 1, 17)
        npt.assert_allclose(make_density(basis, theta + c).log_pdf(x),
                            make_density(basis, theta).log_pdf(x), atol=1e-10)

    def test_haar_log_density_within_twice_sup(self):
        rng = np.random.default_rng(6)
        b = HaarBasis(3)
        for _ in range(100):
            theta = rng.standard_normal(b.m - 1)
            d = make_density(b, theta)
            sup_log = np.max(np.abs(b.cell_values(theta) - d.psi))
            assert sup_log <= 2 * np.max(np.abs(b.cell_values(theta))) + 1e-12


class TestSample:
    def test_uniform_ks(self):
        x = sample(make_density(SplineBasis.from_kq(0, 1), [0.0]), seed=1, n=10_000)
        # 1% critical value of the one-sample KS statistic
        assert sstats.kstest(x, "uniform").statistic < 1.63 / math.sqrt(10_000)

    def test_two_cell_mass(self):
        n = 20_000
        x = sample(make_density(SplineBasis.from_kq(1, 1), [math.log(2), 0.0]), seed=2, n=n)
        assert abs(np.mean(x < 0.5) - 2 / 3) <= 4 * math.sqrt(2 / 9 / n)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_mean_matches_quadrature(self, seed):
        rng = np.random.default_rng(seed)
        basis = SplineBasis.from_kq(3, 3)
        d = make_density(basis, rng.uniform(-2, 2, basis.m))
        mean = sint.quad(lambda t: t * d.pdf(np.array([t]))[0], 0, 1, points=basis.breakpoints[1:-1])[0]
        second = sint.quad(lambda t: t * t * d.pdf(np.array([t]))[0], 0, 1,
                           points=basis.breakpoints[1:-1])[0]
        n = 20_000
        x = sample(d, seed + 100, n)
        assert abs(x.mean() - mean) <= 4 * math.sqrt((second - mean ** 2) / n)

    def test_ks_convergence(self):
        basis = SplineBasis.from_kq(2, 2)
        d = make_density(basis, np.array([1.0, -0.5, 0.7, -1.2]))
        grid = np.linspace(0, 1, 2001)
        pdf = d.pdf(grid)
        cdf = np.concatenate([[0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(grid))])
        x = np.sort(sample(d, 9, 10 ** 5))
        emp = np.searchsorted(x, grid, side="right") / x.size
        assert np.max(np.abs(emp - cdf)) < 0.01

    def test_deterministic(self):
        d = make_density(SplineBasis.from_kq(1, 2), np.array([0.3, -0.2, -0.1]))
        npt.assert_array_equal(sample(d, 3, 50), sample(d, 3, 50))

    def test_haar_sampling(self):
        d = make_density(HaarBasis(0), np.array([math.log(2) / 2]))
        x = sample(d, 4, 20_000)
        assert abs(np.mean(x < 0.5) - 2 / 3) <= 4 * math.sqrt(2 / 9 / 20_000)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            sample(make_density(SplineBasis.from_kq(0, 1), [0.0]), 0, 0)


class TestMembership:
    @pytest.mark.parametrize("family, basis, M", [
        ("spline-density", SplineBasis.from_kq(2, 3), None),
        ("haar-density", HaarBasis(2), None),
        ("spline-regression", SplineBasis.from_kq(2, 3), 1.0),
    ])
    def test_zero_is_member(self, family, basis, M):
        spec = ConstraintSpec(family, basis, 1, M=M)
        res = check_membership(np.zeros(spec.dim), spec)
        assert res.accepted
        assert all(c.value == pytest.approx(0.0, abs=1e-12) for c in res.constraints.values())

    def test_linear_rejected(self):
        spec = ConstraintSpec("spline-density", SplineBasis.from_kq(0, 2), 1)
        res = check_membership(np.array([-2.0, 2.0]), spec)
        assert not res
        ps = math.log((math.e ** 2 - math.e ** -2) / 4)
        assert res.constraints["D0"].value == pytest.approx(2 + ps, abs=1e-12)
        assert res.constraints["zero_sum"].slack == pytest.approx(0.0)

    def test_zero_sum_violated(self):
        spec = ConstraintSpec("spline-density", SplineBasis.from_kq(1, 2), 5)
        res = check_membership(np.array([1.0, 0.0, 0.0]), spec)
        assert not res
        assert res.constraints["zero_sum"].slack < 0

    def test_dimension_mismatch(self):
        spec = ConstraintSpec("spline-density", SplineBasis.from_kq(1, 2), 1)
        with pytest.raises(ValueError):
            check_membership(np.zeros(2), spec)

    def test_regression_sup_bound(self):
        spec = ConstraintSpec("spline-regression", SplineBasis.from_kq(0, 1), 5, M=0.5)
        assert not check_membership(np.array([0.6]), spec)
        assert check_membership(np.array([0.4]), spec)

    def test_boundary_tolerance(self):
        spec = ConstraintSpec("haar-density", HaarBasis(0), 1)
        assert check_membership(np.array([1.0 + 5e-10]), spec)
        assert not check_membership(np.array([1.0 + 1e-8]), spec)

    @pytest.mark.parametrize("family, k, q, L, M", [
        ("spline-density", 2, 1, 1, None),
        ("spline-density", 1, 2, 1, None),
        ("spline-density", 2, 3, 2, None),
        ("spline-regression", 1, 2, 2, 1.0),
        ("spline-regression", 2, 3, 3, 1.0),
    ])
    def test_mask_agrees_with_check(self, family, k, q, L, M):
        basis = SplineBasis.from_kq(k, q)
        spec = ConstraintSpec(family, basis, L, M=M)
        rng = np.random.default_rng(k + 7 * q)
        thetas = rng.uniform(-1.5, 1.5, (200, basis.m)) * rng.uniform(0.02, 1, (200, 1))
        if family == "spline-density":
            thetas -= thetas.mean(axis=1, keepdims=True)
        mask = membership_mask(thetas, spec)
        exact = np.array([bool(check_membership(t, spec)) for t in thetas])
        # grid-based decisions may differ only within a whisker of the boundary
        assert np.mean(mask == exact) >= 0.98
        assert 0 < mask.sum() < mask.size

    def test_family_basis_consistency(self):
        with pytest.raises(ValueError):
            ConstraintSpec("haar-density", SplineBasis.from_kq(0, 1), 1)
        with pytest.raises(ValueError):
            ConstraintSpec("spline-regression", SplineBasis.from_kq(0, 1), 1)
