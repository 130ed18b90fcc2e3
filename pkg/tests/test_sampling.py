import numpy as np
import pytest
from scipy import stats

from poisson_lowrank import _random
from poisson_lowrank.linalg import Mask, mask_adjoint
from poisson_lowrank.sampling import (RowMultinomialModel, SamplingConfig, derive_seed,
                                      parse_seed, random_lowrank_rates, random_row_stochastic,
                                      sample_bernoulli_mask, sample_matrix_multinomial,
                                      sample_poisson, sample_row_multinomial)

MASK64 = (1 << 64) - 1


def splitmix_reference(z):
    """Scalar SplitMix64 finalizer on Python integers."""
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & MASK64
    return z ^ (z >> 31)


def chi_square_pvalue(draws, pmf, lo, hi):
    """Goodness of fit with tails pooled into the end bins."""
    support = np.arange(lo, hi + 1)
    observed = np.array([np.sum(draws <= lo)]
                        + [np.sum(draws == k) for k in support[1:-1]]
                        + [np.sum(draws >= hi)], dtype=float)
    probs = pmf(support)
    probs[0] = pmf(np.arange(lo + 1)).sum()
    probs[-1] = 1.0 - probs[:-1].sum()
    return stats.chisquare(observed, probs * draws.size).pvalue


class TestGenerator:
    def test_mixer_matches_integer_reference(self):
        values = [0, 1, 2, 12345, 2 ** 63 + 7, MASK64]
        got = _random._mix64(np.array(values, dtype=np.uint64))
        assert [int(g) for g in got] == [splitmix_reference(v) for v in values]

    def test_uniform_stream_is_addressable(self):
        states = _random.cell_states(99, np.arange(4))
        golden = 0x9E3779B97F4A7C15
        for t in (0, 5):
            u = _random.uniforms(states, t)
            bits = [splitmix_reference((int(s) + (t + 1) * golden) & MASK64) for s in states]
            expected = [((b >> 11) + 0.5) * 2.0 ** -53 for b in bits]
            assert u.tolist() == expected

    def test_uniforms_open_interval(self):
        u = _random.uniforms(_random.cell_states(1, np.arange(10 ** 5)), 0)
        assert u.min() > 0 and u.max() < 1
        assert stats.kstest(u, "uniform").pvalue > 1e-4

    def test_frozen_values(self):
        # regression pins for the documented generator; changing them breaks seed portability
        mask = sample_bernoulli_mask(3, 3, SamplingConfig(0.5, 7))
        obs = sample_poisson(np.full((3, 3), 4.0), Mask.full(3, 3), 7)
        assert mask.to_boolean().astype(int).tolist() == FROZEN_MASK
        assert obs.counts.tolist() == FROZEN_COUNTS


FROZEN_MASK = [[0, 0, 1], [0, 1, 1], [1, 0, 0]]
FROZEN_COUNTS = [4, 4, 5, 8, 2, 2, 5, 7, 6]


class TestSeeds:
    @pytest.mark.parametrize("text,value", [("42", 42), ("0x2A", 42), (" 0xff ", 255), (7, 7)])
    def test_parse(self, text, value):
        assert parse_seed(text) == value

    @pytest.mark.parametrize("bad", ["-1", "abc", 2 ** 64, 1.5, True])
    def test_parse_rejects(self, bad):
        with pytest.raises(ValueError):
            parse_seed(bad)

    def test_derived_seeds_differ(self):
        assert len({derive_seed(1, t) for t in range(1000)}) == 1000


class TestBernoulliMask:
    def test_full(self):
        assert sample_bernoulli_mask(4, 5, SamplingConfig(1.0, 3)) == Mask.full(4, 5)

    def test_fraction_concentrates(self):
        for seed in range(3):
            mask = sample_bernoulli_mask(200, 200, SamplingConfig(0.3, seed))
            assert 0.27 <= len(mask) / 40000 <= 0.33

    def test_deterministic(self):
        cfg = SamplingConfig(0.4, "0xdead")
        assert sample_bernoulli_mask(30, 20, cfg) == sample_bernoulli_mask(30, 20, cfg)
        assert sample_bernoulli_mask(30, 20, cfg) != sample_bernoulli_mask(30, 20, SamplingConfig(0.4, 1))

    @pytest.mark.parametrize("p", [0.0, -0.1, 1.5])
    def test_invalid_p(self, p):
        with pytest.raises(ValueError):
            SamplingConfig(p, 0)


class TestPoisson:
    def test_zero_rate(self):
        obs = sample_poisson(np.zeros((4, 4)), Mask.full(4, 4), 1)
        assert np.all(obs.counts == 0)

    def test_mean_of_constant_matrix(self):
        obs = sample_poisson(np.full((100, 100), 10.0), Mask.full(100, 100), 5)
        assert 9.9 <= obs.counts.mean() <= 10.1

    @pytest.mark.parametrize("lam", [4.0, 25.0])
    def test_variance(self, lam):
        obs = sample_poisson(np.full((1, 10 ** 5), lam), Mask.full(1, 10 ** 5), 11)
        assert obs.counts.var() == pytest.approx(lam, rel=0.05)

    @pytest.mark.parametrize("lam,lo,hi", [(3.0, 0, 12), (0.4, 0, 4), (9.9, 0, 24),
                                           (10.0, 0, 25), (57.5, 30, 90)])
    def test_chi_square(self, lam, lo, hi):
        draws = sample_poisson(np.full((1, 10 ** 5), lam), Mask.full(1, 10 ** 5), 123).counts
        assert chi_square_pvalue(draws, lambda k: stats.poisson.pmf(k, lam), lo, hi) > 1e-4

    def test_only_masked_cells_drawn(self):
        mask = Mask.from_pairs(3, 3, [(1, 2), (3, 3)])
        obs = sample_poisson(np.full((3, 3), 5.0), mask, 0)
        assert obs.counts.shape == (2,)
        assert np.count_nonzero(mask_adjoint(obs)[~mask.to_boolean()]) == 0

    def test_cell_draws_do_not_depend_on_mask(self):
        # per-cell streams: the count at a cell is the same whichever other cells are sampled
        M = np.arange(1.0, 13.0).reshape(3, 4)
        full = mask_adjoint(sample_poisson(M, Mask.full(3, 4), 9))
        part_mask = Mask.from_pairs(3, 4, [(1, 1), (2, 3), (3, 4)])
        part = mask_adjoint(sample_poisson(M, part_mask, 9))
        B = part_mask.to_boolean()
        np.testing.assert_array_equal(part[B], full[B])

    def test_rejects_negative_and_shape(self):
        with pytest.raises(ValueError):
            sample_poisson(-np.ones((2, 2)), Mask.full(2, 2), 0)
        with pytest.raises(ValueError):
            sample_poisson(np.ones((2, 3)), Mask.full(2, 2), 0)


class TestMultinomial:
    def test_degenerate_cell(self):
        P = np.zeros((3, 3))
        P[1, 2] = 1.0
        X = sample_matrix_multinomial(P, 500, 4)
        assert X[1, 2] == 500 and X.sum() == 500

    def test_uniform_cells(self):
        X = sample_matrix_multinomial(np.full((2, 2), 0.25), 4 * 10 ** 5, 8)
        assert np.all((X >= 0.97e5) & (X <= 1.03e5))

    def test_total_always_n(self):
        P = random_row_stochastic(6, 5, 2, 1) / 6
        for seed in range(20):
            assert sample_matrix_multinomial(P, 1234, seed).sum() == 1234

    def test_marginal_is_binomial(self):
        P = np.array([[0.1, 0.2], [0.3, 0.4]])
        draws = np.array([sample_matrix_multinomial(P, 40, s)[1, 0] for s in range(4000)])
        assert chi_square_pvalue(draws, lambda k: stats.binom.pmf(k, 40, 0.3), 4, 20) > 1e-4

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            sample_matrix_multinomial(np.full((2, 2), 0.3), 10, 0)

    def test_one_hot_rows(self):
        P = np.eye(3)[[2, 0, 1]]
        X = sample_row_multinomial(RowMultinomialModel(P, [5, 6, 7]), 3)
        np.testing.assert_array_equal(X, [[0, 0, 5], [6, 0, 0], [0, 7, 0]])

    def test_row_sums(self):
        P = random_row_stochastic(20, 8, 2, 3)
        N = np.arange(1, 21) * 17
        X = sample_row_multinomial(RowMultinomialModel(P, N), 2)
        np.testing.assert_array_equal(X.sum(axis=1), N)

    def test_two_cell_row(self):
        X = sample_row_multinomial(RowMultinomialModel([[0.2, 0.8]], [10 ** 5]), 6)
        assert 19000 <= X[0, 0] <= 21000

    @pytest.mark.parametrize("n_trials,q", [(30, 0.2), (500, 0.35), (1000, 0.9)])
    def test_binomial_chi_square(self, n_trials, q):
        states = _random.cell_states(77, np.arange(10 ** 5))
        draws = _random.binomial(np.full(10 ** 5, n_trials), np.full(10 ** 5, q), states)
        mean = n_trials * q
        sd = np.sqrt(mean * (1 - q))
        lo, hi = int(max(0, mean - 4 * sd)), int(min(n_trials, mean + 4 * sd))
        assert chi_square_pvalue(draws, lambda k: stats.binom.pmf(k, n_trials, q), lo, hi) > 1e-4

    def test_model_validation(self):
        with pytest.raises(ValueError):
            RowMultinomialModel([[0.5, 0.6]], [3])
        with pytest.raises(ValueError):
            RowMultinomialModel([[0.5, 0.5]], [0])
        with pytest.raises(ValueError):
            RowMultinomialModel([[0.5, 0.5], [1.0, 0.0]], [3])
        np.testing.assert_array_equal(RowMultinomialModel([[0.5, 0.5]], 4).D, [[4.0]])


class TestTruthGenerators:
    def test_lowrank_rates(self):
        M = random_lowrank_rates(30, 20, 2, 20.0, 5)
        assert M.max() == pytest.approx(20.0)
        assert M.min() >= 0
        assert np.linalg.matrix_rank(M) == 2

    def test_row_stochastic(self):
        P = random_row_stochastic(10, 6, 3, 5)
        np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
        assert np.linalg.matrix_rank(P) == 3
