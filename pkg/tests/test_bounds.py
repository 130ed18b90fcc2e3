import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from conftest import random_rank_r
from poisson_lowrank.bounds import (DEFAULT_C, DEFAULT_C0, BoundConfig, bound_report,
                                    calibrate_C, class_sigma1, class_sigma2,
                                    delta_matrix_multinomial, delta_row_multinomial,
                                    lower_bound_squared_rate, lower_bound_variance_rate,
                                    matching_regime_check, opnorm_bound_A, poisson_kl,
                                    poisson_tail_bound, sigma_tilde, upper_bound,
                                    variance_matrix_sigma)
from poisson_lowrank.sampling import random_lowrank_rates


def A_reference(M, p, eps, C):
    """Loop-based re-implementation of the operator-norm radius."""
    m, n = len(M), len(M[0])
    w = [[M[i][j] + (1 - p) * M[i][j] ** 2 for j in range(n)] for i in range(m)]
    rows = max(math.sqrt(sum(w[i])) for i in range(m))
    cols = max(math.sqrt(sum(w[i][j] for i in range(m))) for j in range(n))
    lam_max = max(max(row) for row in M)
    k = max(lam_max, 4 * math.log(2 * m * n / eps))
    return (2 * math.sqrt(p) * (rows + cols) + 8 * eps / math.sqrt(m * n)
            + C * k * math.sqrt(math.log(max(m, n) / eps)))


def exact_poisson_tail(lam, t):
    """P(X - lam >= t) by summing the PMF below the threshold."""
    k0 = math.ceil(lam + t)
    # sum the upper tail directly; 1 - cdf cancels catastrophically
    return stats.poisson.pmf(np.arange(k0, k0 + 2000), lam).sum()


class TestSigma:
    def test_examples(self):
        ones = np.ones((4, 4))
        assert sigma_tilde(ones, 1.0) == pytest.approx(4.0)
        assert sigma_tilde(ones, 0.5) == pytest.approx(2 * math.sqrt(6))
        assert sigma_tilde(np.zeros((3, 3)), 0.3) == 0.0
        assert variance_matrix_sigma(np.zeros((3, 3)), 0.3) == 0.0
        assert variance_matrix_sigma(ones, 1.0) == pytest.approx(4.0)

    @settings(max_examples=80, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 7), st.integers(1, 7)),
                  elements=st.floats(0, 100)),
           st.floats(1e-3, 1.0))
    def test_variance_identity(self, M, p):
        lhs = variance_matrix_sigma(M, p)
        assert lhs == pytest.approx(math.sqrt(p) * sigma_tilde(M, p), rel=1e-12, abs=1e-12)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            sigma_tilde(-np.ones((2, 2)), 1.0)


class TestOpnormBound:
    def test_zero_matrix_value(self):
        cfg = BoundConfig(C=1.0, epsilon=0.1)
        expected = 0.8 / 10 + 4 * math.log(2000) * math.sqrt(math.log(100))
        assert opnorm_bound_A(np.zeros((10, 10)), 1.0, cfg) == pytest.approx(expected, rel=1e-14)

    def test_dual_implementation(self, rng):
        for _ in range(50):
            m, n = rng.integers(1, 30, size=2)
            M = rng.uniform(0, 60, size=(m, n))
            p, eps, C = rng.uniform(0.05, 1), rng.uniform(0.01, 0.49), rng.uniform(0.1, 10)
            got = opnorm_bound_A(M, p, BoundConfig(C=C, epsilon=eps))
            assert got == pytest.approx(A_reference(M.tolist(), p, eps, C), rel=1e-12)

    def test_monotone(self, rng):
        M = random_rank_r(rng, 20, 15, 2, 5.0)
        values = [opnorm_bound_A(M * s, 0.5) for s in (1, 2, 5, 20)]
        assert values == sorted(values)
        values = [opnorm_bound_A(M, 0.5, BoundConfig(epsilon=e)) for e in (0.4, 0.2, 0.1, 0.01)]
        assert values == sorted(values)

    def test_default_constants(self):
        assert DEFAULT_C0 == 8.0
        assert DEFAULT_C == pytest.approx(math.sqrt(32.0))

    @pytest.mark.parametrize("kwargs", [{"epsilon": 0.5}, {"epsilon": 0.0}, {"C": 0.0},
                                        {"C0": -1.0}])
    def test_config_validation(self, kwargs):
        with pytest.raises(ValueError):
            BoundConfig(**kwargs)


class TestUpperBounds:
    def test_examples(self):
        assert upper_bound("dantzig", 1, 1.0, 1.0) == pytest.approx(4 * math.sqrt(2))
        for r, p, d in [(1, 1.0, 1.0), (3, 0.4, 2.5)]:
            dz = upper_bound("dantzig", r, p, d)
            assert upper_bound("regls", r, p, 2 * p * d) == pytest.approx(dz)
            assert upper_bound("rank_trunc", r, p, d) == pytest.approx(dz / 2)

    def test_monotone(self):
        for kind in ("dantzig", "regls", "rank_trunc"):
            assert upper_bound(kind, 1, 0.5, 1) < upper_bound(kind, 2, 0.5, 1)
            assert upper_bound(kind, 2, 0.5, 1) < upper_bound(kind, 2, 0.5, 2)
            assert upper_bound(kind, 2, 0.9, 1) < upper_bound(kind, 2, 0.5, 1)

    def test_invalid(self):
        with pytest.raises(ValueError):
            upper_bound("lasso", 1, 1.0, 1.0)
        with pytest.raises(ValueError):
            upper_bound("dantzig", 0, 1.0, 1.0)


class TestPoissonTail:
    def test_boundary_coincidence(self):
        assert poisson_tail_bound(1.0, 1.0) == pytest.approx(math.exp(-3 / 8), rel=1e-15)

    def test_small_t_clamps_to_one(self):
        assert poisson_tail_bound(0.0, 1e-12) <= 1.0
        assert poisson_tail_bound(5.0, 1e-9) == pytest.approx(1.0)

    @pytest.mark.parametrize("lam", [0.5, 1.0, 5.0, 20.0, 100.0])
    def test_dominates_exact_tail(self, lam):
        for t in np.linspace(0.05, 60, 600):
            assert poisson_tail_bound(lam, t) >= exact_poisson_tail(lam, t)

    def test_dominates_empirical_tail(self):
        draws = np.random.default_rng(5).poisson(5.0, size=10 ** 6)
        for t in range(1, 31):
            assert poisson_tail_bound(5.0, t) >= np.mean(draws - 5.0 >= t)

    def test_invalid(self):
        with pytest.raises(ValueError):
            poisson_tail_bound(1.0, 0.0)


class TestPoissonKL:
    def test_conventions(self):
        assert poisson_kl(3.0, 3.0) == 0.0
        assert poisson_kl(0.0, 2.0) == 2.0
        assert poisson_kl(1.0, 0.0) == math.inf
        assert poisson_kl(0.0, 0.0) == 0.0

    def test_matches_series(self):
        # KL as an expectation of the log-likelihood ratio over a truncated support
        for lam, lp in [(2.0, 3.5), (7.0, 4.0), (0.3, 1.1)]:
            k = np.arange(200)
            w = stats.poisson.pmf(k, lam)
            series = np.sum(w * (stats.poisson.logpmf(k, lam) - stats.poisson.logpmf(k, lp)))
            assert poisson_kl(lam, lp) == pytest.approx(series, rel=1e-10)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(1e-6, 1e3), st.floats(1e-6, 1e3))
    def test_chi_square_domination(self, lam, lp):
        kl = poisson_kl(lam, lp)
        assert kl >= 0
        assert kl <= (lam - lp) ** 2 / lp * (1 + 1e-12) + 1e-15


class TestMultinomialRadii:
    def test_row_first_branch(self):
        got = delta_row_multinomial(0.5, 1e12, 10, 20, 0.1)
        assert got == pytest.approx(2 * math.sqrt(math.log(300)))

    def test_row_second_branch(self):
        m, n, eps = 2, 2, 1e-30
        got = delta_row_multinomial(1.0, 1.0, m, n, eps)
        assert got == pytest.approx(4 / 3 * math.log((m + n) / eps))
        assert got > 2 * math.sqrt(math.log((m + n) / eps))

    def test_matrix_radius_formula(self, rng):
        for _ in range(20):
            m, n = rng.integers(2, 20, size=2)
            P = rng.uniform(size=(m, n))
            P /= P.sum()
            N, eps, C = int(rng.integers(1, 10 ** 5)), rng.uniform(0.01, 0.9), rng.uniform(0.1, 6)
            a = max(1.0, m * P.sum(axis=1).max())
            b = max(1.0, n * P.sum(axis=0).max())
            e = math.e
            expected = (2 * math.sqrt(N * (a / m + b / n)) + 4 * eps / (e * math.sqrt(m * n * N))
                        + C * max(N * P.max(), 4 * math.log(4 * e * m * n * math.sqrt(N) / eps))
                        * math.sqrt(math.log(2 * e * math.sqrt(N) * max(m, n) / eps))) / N
            assert delta_matrix_multinomial(P, N, eps, C) == pytest.approx(expected, rel=1e-12)

    def test_matrix_variance_part_shrinks(self):
        # with the truncation constant tiny, the radius decays like 1/sqrt(N)
        P = np.full((5, 4), 1 / 20)
        values = [delta_matrix_multinomial(P, N, 0.1, C=1e-9) for N in (10, 1000, 10 ** 5)]
        assert values == sorted(values, reverse=True)


class TestLowerBounds:
    def test_variance_rate(self):
        lb = lower_bound_variance_rate(1, 1.0, 8 * math.sqrt(2), 1000, 1000)
        assert lb.radius == pytest.approx(1.0)
        assert lb.probability == pytest.approx(0.5 - 8 * math.log(2) / 1000)
        assert not lb.vacuous
        assert lower_bound_variance_rate(1, 1.0, 1.0, 10, 5).vacuous
        a = lower_bound_variance_rate(2, 0.25, 3.0, 100, 100).radius
        b = lower_bound_variance_rate(2, 1.0, 3.0, 100, 100).radius
        assert a == pytest.approx(2 * b)

    def test_squared_rate(self):
        assert lower_bound_squared_rate(3, 1.0, 2.0)["simple"] == 0.0
        assert lower_bound_squared_rate(2, 0.5, 4.0)["max_form"] == pytest.approx(2 * 16 / 16)
        for p in np.arange(1, 10) / 10:
            lbs = lower_bound_squared_rate(2, p, 3.0)
            assert lbs["max_form"] >= lbs["simple"]

    def test_squared_validity_flag(self):
        assert lower_bound_squared_rate(2, 0.01, 1.0, 50, 50)["valid"] is False
        assert lower_bound_squared_rate(2, 0.02, 1.0, 50, 50)["valid"] is True

    def test_class_sigmas(self):
        M = np.ones((4, 9))
        assert class_sigma1(M) == pytest.approx((3 + 2) / 2)
        assert class_sigma2(2 * M) == pytest.approx((6 + 4) / 2)


class TestMatchingRegime:
    def test_first_regime(self):
        out = matching_regime_check(1000, 1000, 2, 0.5, 20.0)
        assert out["regime"] == "lambda_max >= log m" and out["satisfied"]

    def test_flagged_unsatisfied(self):
        m, r = 1000, 2
        out = matching_regime_check(m, m, r, r * math.log(m) / (10 * m), 20.0)
        assert not out["satisfied"]
        assert out["slack"] == pytest.approx(0.1)

    def test_second_regime(self):
        out = matching_regime_check(100, 50, 1, 0.5, 1.0)
        assert out["regime"] == "lambda_max < log m"
        assert out["threshold"] == pytest.approx(math.log(100) ** 3 / 100)


class TestBoundReport:
    def test_consistency(self, rng):
        M = random_rank_r(rng, 12, 9, 2, 4.0)
        cfg = BoundConfig(C=1.5, epsilon=0.05)
        rep = bound_report(M, 0.4, cfg)
        assert rep.inputs["r"] == 2
        assert rep.A_value == pytest.approx(opnorm_bound_A(M, 0.4, cfg))
        assert rep.ub_dantzig == pytest.approx(2 * rep.ub_rank_trunc)
        assert rep.ub_regls == pytest.approx(rep.ub_dantzig)
        assert all(v >= 0 for v in (rep.ub_dantzig, rep.ub_regls, rep.lb_variance_radius,
                                    rep.lb_squared, rep.sigma_tilde))
        d = json.loads(rep.to_json())
        assert d["inputs"]["C"] == 1.5 and d["inputs"]["epsilon"] == 0.05


class TestCalibration:
    def test_floor_and_coverage(self):
        grid = [(random_lowrank_rates(20, 20, 2, 5.0, 1), 0.5)]
        res = calibrate_C(grid, epsilon=0.1, trials=30, seed=3)
        assert res.C >= 1e-3
        assert all(c >= 0.8 for c in res.coverage)
        assert res.to_dict()["trials"] == 30

    def test_needs_positive_constant_when_variance_term_is_removed(self):
        # with a tiny floor the fitted value is exactly the order statistic
        grid = [(random_lowrank_rates(10, 10, 1, 2.0, 2), 1.0)]
        res = calibrate_C(grid, epsilon=0.25, trials=20, seed=1, floor=1e-12)
        assert res.C == max(res.required) or res.floor_applied
