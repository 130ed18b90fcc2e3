"""Seeded Bernoulli masks and Poisson / multinomial count observations.

All draws come from the counter-based generator in :mod:`._random`
(``splitmix64-cell/v1``).  Each matrix cell reads from its own stream keyed
on ``(seed, purpose, cell)``, so outputs do not depend on evaluation order
and are reproducible across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _random
from .linalg import Mask, MaskedObservations, as_matrix

__all__ = [
    "GENERATOR_NAME",
    "SamplingConfig",
    "RowMultinomialModel",
    "parse_seed",
    "derive_seed",
    "sample_bernoulli_mask",
    "sample_poisson",
    "sample_matrix_multinomial",
    "sample_row_multinomial",
    "random_uniforms",
    "random_lowrank_rates",
    "random_row_stochastic",
]

GENERATOR_NAME = _random.GENERATOR_NAME

# purpose tags keep streams for different draws disjoint under one seed
_MASK, _POISSON, _ROWS, _ROW_TOTALS, _DERIVE, _TRUTH = 1, 2, 3, 4, 5, 6

SIMPLEX_TOL = 1e-9


def parse_seed(seed) -> int:
    """Accept an int or a decimal / ``0x``-hex string; return a 64-bit seed."""
    if isinstance(seed, (bool, float)):
        raise ValueError(f"seed must be an integer, got {seed!r}")
    if isinstance(seed, str):
        text = seed.strip().lower()
        try:
            value = int(text, 16) if text.startswith("0x") else int(text, 10)
        except ValueError:
            raise ValueError(f"cannot parse seed {seed!r}") from None
    else:
        value = int(seed)
    if not 0 <= value < 2 ** 64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {value}")
    return value


def derive_seed(seed, *path) -> int:
    """Child seed for a sub-task, e.g. ``derive_seed(base, trial_index)``."""
    return _random.mix_words(parse_seed(seed), _DERIVE, *path)


@dataclass(frozen=True)
class SamplingConfig:
    p: float = 1.0
    seed: int = 0

    def __post_init__(self):
        p = float(self.p)
        if not 0.0 < p <= 1.0:
            raise ValueError(f"sampling probability must lie in (0, 1], got {p}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "seed", parse_seed(self.seed))


@dataclass(frozen=True)
class RowMultinomialModel:
    """Rows of `P` are probability vectors; row ``i`` receives ``trial_counts[i]`` draws."""

    P: np.ndarray
    trial_counts: np.ndarray

    def __post_init__(self):
        P = as_matrix(self.P, "P")
        N = np.asarray(self.trial_counts)
        if N.ndim == 0:
            N = np.full(P.shape[0], N)
        if N.shape != (P.shape[0],):
            raise ValueError(f"need one trial count per row ({P.shape[0]}), got {N.shape}")
        if np.any(N < 1) or np.any(N != np.round(N)):
            raise ValueError("trial counts must be positive integers")
        check_row_simplex(P)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "trial_counts", N.astype(np.int64))

    @property
    def D(self) -> np.ndarray:
        return np.diag(self.trial_counts.astype(np.float64))


def check_row_simplex(P, tol=SIMPLEX_TOL):
    if np.any(P < 0) or np.any(P > 1):
        raise ValueError("probabilities must lie in [0, 1]")
    bad = np.nonzero(np.abs(P.sum(axis=1) - 1.0) > tol)[0]
    if bad.size:
        raise ValueError(f"row {bad[0] + 1} of P sums to {P[bad[0]].sum()!r}, not 1")


def sample_bernoulli_mask(m: int, n: int, cfg: SamplingConfig) -> Mask:
    """Include each index independently with probability ``cfg.p``."""
    if m < 1 or n < 1:
        raise ValueError("dimensions must be positive")
    if cfg.p == 1.0:
        return Mask.full(m, n)
    states = _random.cell_states(_random.mix_words(cfg.seed, _MASK), np.arange(m * n))
    keep = _random.uniforms(states, 0) < cfg.p
    return Mask.from_boolean(keep.reshape(m, n))


def sample_poisson(M, mask: Mask, seed) -> MaskedObservations:
    """Independent ``Poisson(M[i, j])`` counts at the sampled indices of `mask`."""
    M = as_matrix(M, "rate matrix")
    if M.shape != mask.shape:
        raise ValueError(f"rate matrix shape {M.shape} does not match mask {mask.shape}")
    if np.any(M < 0):
        raise ValueError("rate matrix has negative entries")
    cells = mask.rows * M.shape[1] + mask.cols
    states = _random.cell_states(_random.mix_words(parse_seed(seed), _POISSON), cells)
    counts = _random.poisson(M[mask.rows, mask.cols], states)
    return MaskedObservations(mask, counts)


def _conditional_binomial_rows(P, totals, key):
    """Multinomial draw for each row of `P` by sequential conditional binomials."""
    m, n = P.shape
    X = np.zeros((m, n), dtype=np.int64)
    remaining = np.asarray(totals, dtype=np.int64).copy()
    # tail[:, j] = probability mass of columns j..n-1
    tail = np.cumsum(P[:, ::-1], axis=1)[:, ::-1]
    rows = np.arange(m, dtype=np.int64)
    for j in range(n - 1):
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(tail[:, j] > 0, P[:, j] / tail[:, j], 0.0)
        states = _random.cell_states(key, rows * n + j)
        X[:, j] = _random.binomial(remaining, np.clip(q, 0.0, 1.0), states)
        remaining -= X[:, j]
    X[:, n - 1] = remaining
    return X


def sample_matrix_multinomial(P, N: int, seed) -> np.ndarray:
    """Distribute `N` draws over the cells of `P` (entries summing to one).

    Row totals are drawn first, then each row's columns, both by the
    conditional-binomial method; the joint law is exactly Multinomial(P, N).
    """
    P = as_matrix(P, "P")
    if np.any(P < 0):
        raise ValueError("P has negative entries")
    total = P.sum()
    if abs(total - 1.0) > SIMPLEX_TOL:
        raise ValueError(f"entries of P sum to {total!r}, not 1")
    N = int(N)
    if N < 1:
        raise ValueError("N must be a positive integer")
    seed = parse_seed(seed)
    row_mass = P.sum(axis=1)
    row_totals = _conditional_binomial_rows(
        row_mass[None, :], [N], _random.mix_words(seed, _ROW_TOTALS))[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.where(row_mass[:, None] > 0, P / row_mass[:, None], 1.0 / P.shape[1])
    return _conditional_binomial_rows(cond, row_totals, _random.mix_words(seed, _ROWS))


def sample_row_multinomial(model: RowMultinomialModel, seed) -> np.ndarray:
    """Independent ``Multinomial(P[i], N_i)`` draw for every row."""
    return _conditional_binomial_rows(
        model.P, model.trial_counts, _random.mix_words(parse_seed(seed), _ROWS))


def random_uniforms(seed, shape, *tag) -> np.ndarray:
    """Array of (0, 1) uniforms from the portable generator."""
    size = int(np.prod(shape))
    key = _random.mix_words(parse_seed(seed), _TRUTH, *tag)
    return _random.uniforms(_random.cell_states(key, np.arange(size)), 0).reshape(shape)


def random_lowrank_rates(m: int, n: int, r: int, lambda_max: float, seed) -> np.ndarray:
    """Nonnegative rank-`r` rate matrix ``U V^T`` with uniform factors, scaled to max `lambda_max`."""
    if min(m, n, r) < 1 or lambda_max <= 0:
        raise ValueError("need positive dimensions, rank and lambda_max")
    U = random_uniforms(seed, (m, r), 0)
    V = random_uniforms(seed, (n, r), 1)
    M = U @ V.T
    return M * (lambda_max / M.max())


def random_row_stochastic(m: int, n: int, r: int, seed) -> np.ndarray:
    """Rank-`r` matrix whose rows are probability vectors.

    Product of an ``m x r`` and an ``r x n`` row-stochastic matrix, each with
    uniform entries normalized by row.
    """
    if min(m, n, r) < 1:
        raise ValueError("need positive dimensions and rank")
    A = random_uniforms(seed, (m, r), 2)
    B = random_uniforms(seed, (r, n), 3)
    A /= A.sum(axis=1, keepdims=True)
    B /= B.sum(axis=1, keepdims=True)
    P = A @ B
    return P / P.sum(axis=1, keepdims=True)
