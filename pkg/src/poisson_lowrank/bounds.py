"""Closed-form error bounds, concentration radii and minimax rates.

Every function here is a direct formula evaluation.  The only empirical
piece is :func:`calibrate_C`, which fits the otherwise unspecified universal
constant in the operator-norm bound by Monte Carlo.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .linalg import as_matrix, mask_adjoint, operator_norm, svd

__all__ = [
    "DEFAULT_C0",
    "DEFAULT_C",
    "BoundConfig",
    "BoundReport",
    "LowerBound",
    "CalibrationResult",
    "sigma_tilde",
    "variance_matrix_sigma",
    "opnorm_bound_A",
    "upper_bound",
    "poisson_tail_bound",
    "poisson_kl",
    "delta_row_multinomial",
    "delta_matrix_multinomial",
    "class_sigma1",
    "class_sigma2",
    "lower_bound_variance_rate",
    "lower_bound_squared_rate",
    "matching_regime_check",
    "bound_report",
    "calibrate_C",
    "standard_calibration_grid",
]

DEFAULT_C0 = 8.0
DEFAULT_C = math.sqrt(4.0 * DEFAULT_C0)


@dataclass(frozen=True)
class BoundConfig:
    """Universal constants and failure probability.

    `C` multiplies the truncation term of the operator-norm bound and `C0`
    is the sub-Gaussian constant of the bounded-entry operator-norm tail.
    Neither has a known numerical value; see :func:`calibrate_C`.
    """

    C: float = DEFAULT_C
    C0: float = DEFAULT_C0
    epsilon: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.epsilon < 0.5:
            raise ValueError(f"epsilon must lie in (0, 1/2), got {self.epsilon}")
        if self.C <= 0 or self.C0 <= 0:
            raise ValueError("C and C0 must be positive")


def _rates(M, p):
    M = as_matrix(M, "rate matrix")
    if np.any(M < 0):
        raise ValueError("rate matrix has negative entries")
    if not 0.0 < p <= 1.0:
        raise ValueError(f"sampling probability must lie in (0, 1], got {p}")
    return M


def _row_col_root_max(V):
    return float(np.sqrt(V.sum(axis=1).max()) + np.sqrt(V.sum(axis=0).max()))


def sigma_tilde(M, p: float) -> float:
    """Max row plus max column root-sum of ``M_ij + (1 - p) M_ij^2``."""
    M = _rates(M, p)
    return _row_col_root_max(M + (1.0 - p) * M * M)


def variance_matrix_sigma(M, p: float) -> float:
    """Same statistic built from the entry variances ``p M + p (1 - p) M^2``.

    Equals ``sqrt(p) * sigma_tilde(M, p)``.
    """
    M = _rates(M, p)
    return _row_col_root_max(p * M + p * (1.0 - p) * M * M)


def opnorm_bound_A(M, p: float, cfg: BoundConfig = BoundConfig()) -> float:
    """High-probability bound on ``||A_Omega^*(X) - p M||``.

    ``2 sqrt(p) sigma_tilde + 8 eps / sqrt(mn)
    + C max(lambda_max, 4 log(2mn/eps)) sqrt(log(max(m, n)/eps))``
    """
    M = _rates(M, p)
    m, n = M.shape
    eps = cfg.epsilon
    lam_max = float(M.max())
    trunc = max(lam_max, 4.0 * math.log(2.0 * m * n / eps)) * math.sqrt(math.log(max(m, n) / eps))
    return 2.0 * math.sqrt(p) * sigma_tilde(M, p) + 8.0 * eps / math.sqrt(m * n) + cfg.C * trunc


def upper_bound(kind: str, r: int, p: float, value: float) -> float:
    """Frobenius error bound for an estimator.

    `value` is delta for ``dantzig``, lambda for ``regls`` and the
    operator-norm bound A for ``rank_trunc``.
    """
    if r < 1 or not 0.0 < p <= 1.0 or value < 0:
        raise ValueError("need r >= 1, p in (0, 1] and a nonnegative parameter")
    c = math.sqrt(2.0 * r)
    if kind == "dantzig":
        return 4.0 * c * value / p
    if kind == "regls":
        return 2.0 * c * value / (p * p)
    if kind == "rank_trunc":
        return 2.0 * c * value / p
    raise ValueError(f"unknown estimator kind {kind!r}")


def poisson_tail_bound(lam: float, t: float) -> float:
    """Upper bound on ``P(X - lam >= t)`` for ``X ~ Poisson(lam)``.

    Bernstein form ``exp(-t^2 / (2 (lam + t/3)))``, tightened to
    ``exp(-3t/8)`` when ``t >= lam``, clamped at 1.
    """
    if lam < 0 or t <= 0:
        raise ValueError("need lam >= 0 and t > 0")
    bound = math.exp(-t * t / (2.0 * (lam + t / 3.0)))
    if t >= lam:
        bound = min(bound, math.exp(-3.0 * t / 8.0))
    return min(1.0, bound)


def poisson_kl(lam: float, lam_prime: float) -> float:
    """KL divergence between Poisson(`lam`) and Poisson(`lam_prime`).

    ``KL(0 || l') = l'`` and ``KL(l || 0) = inf`` for ``l > 0``.
    """
    if lam < 0 or lam_prime < 0:
        raise ValueError("Poisson rates must be nonnegative")
    if lam == 0:
        return float(lam_prime)
    if lam_prime == 0:
        return math.inf
    return max(0.0, lam_prime - lam + lam * math.log(lam / lam_prime))


def delta_row_multinomial(max_col_sum: float, D_min: float, m: int, n: int,
                          epsilon: float) -> float:
    """Radius such that ``||D^{-1/2}(X - DP)|| <= delta`` w.p. at least ``1 - epsilon``."""
    if max_col_sum < 0 or D_min <= 0 or m < 1 or n < 1 or not 0 < epsilon < 1:
        raise ValueError("invalid inputs to delta_row_multinomial")
    log_term = math.log((m + n) / epsilon)
    return max(2.0 * math.sqrt(max(1.0, max_col_sum) * log_term),
               4.0 / (3.0 * math.sqrt(D_min)) * log_term)


def delta_matrix_multinomial(P, N: int, epsilon: float, C: float = DEFAULT_C) -> float:
    """Smallest admissible delta for the single matrix-multinomial estimator.

    Uses ``a = max(1, m max_i row_sum)``, ``b = max(1, n max_j col_sum)``
    and ``c = max P_ij``.
    """
    P = as_matrix(P, "P")
    if not 0 < epsilon < 1 or N < 1:
        raise ValueError("need epsilon in (0, 1) and N >= 1")
    m, n = P.shape
    a = max(1.0, m * P.sum(axis=1).max())
    b = max(1.0, n * P.sum(axis=0).max())
    c = float(P.max())
    e = math.e
    rootN = math.sqrt(N)
    term = (2.0 * math.sqrt(N * (a / m + b / n))
            + 4.0 * epsilon / (e * math.sqrt(m * n * N))
            + C * max(N * c, 4.0 * math.log(4.0 * e * m * n * rootN / epsilon))
            * math.sqrt(math.log(2.0 * e * rootN * max(m, n) / epsilon)))
    return term / N


def class_sigma1(M) -> float:
    """Smallest sigma_1 with ``sqrt(max row sum) + sqrt(max col sum) <= 2 sigma_1``."""
    M = as_matrix(M)
    return _row_col_root_max(M) / 2.0


def class_sigma2(M) -> float:
    """Smallest sigma_2 with the same condition on squared entries."""
    M = as_matrix(M)
    return _row_col_root_max(M * M) / 2.0


@dataclass(frozen=True)
class LowerBound:
    radius: float
    probability: float
    vacuous: bool


def lower_bound_variance_rate(r: int, p: float, sigma1: float, m: int, n: int) -> LowerBound:
    """Error radius ``sqrt(r) sigma_1 / (8 sqrt(2p))`` exceeded with probability
    at least ``1/2 - 8 log 2 / max(m, n)`` by any estimator on the worst case.
    """
    if r < 1 or not 0 < p <= 1 or sigma1 < 0:
        raise ValueError("need r >= 1, p in (0, 1], sigma1 >= 0")
    radius = math.sqrt(r) * sigma1 / (8.0 * math.sqrt(2.0 * p))
    prob = 0.5 - 8.0 * math.log(2.0) / max(m, n)
    return LowerBound(radius, prob, prob <= 0.0)


def lower_bound_squared_rate(r: int, p: float, sigma2: float, m: int | None = None,
                             n: int | None = None) -> dict:
    """Minimax lower bound on expected squared Frobenius error from missingness.

    Returns the simple form ``(1/64) ((1-p)/p) r sigma_2^2`` and the tighter
    ``max(floor(1/2p) / 2, 1 - p) r sigma_2^2 / 8``.  ``valid`` reports whether
    ``p >= r / (2 min(m, n))`` when the dimensions are given.
    """
    if r < 1 or not 0 < p <= 1 or sigma2 < 0:
        raise ValueError("need r >= 1, p in (0, 1], sigma2 >= 0")
    simple = (1.0 - p) / p * r * sigma2 ** 2 / 64.0
    max_form = max(0.5 * math.floor(1.0 / (2.0 * p)), 1.0 - p) * r * sigma2 ** 2 / 8.0
    threshold = None if m is None or n is None else r / (2.0 * min(m, n))
    valid = True if threshold is None else p >= threshold
    return {"simple": simple, "max_form": max_form, "valid": valid,
            "p_threshold": threshold}


def matching_regime_check(m: int, n: int, r: int, p: float, lambda_max: float) -> dict:
    """Check the sampling rate at which upper and lower bounds match.

    With ``M = max(m, n)``: if ``lambda_max >= log M`` the condition is
    ``p >= r log M / M``, otherwise ``p >= r log^3 M / (M lambda_max^2)``.
    Constants are taken as one; ``slack`` is ``p / threshold``.
    """
    if lambda_max <= 0:
        raise ValueError("lambda_max must be positive")
    big = max(m, n)
    logm = math.log(big)
    if lambda_max >= logm:
        regime = "lambda_max >= log m"
        threshold = r * logm / big
    else:
        regime = "lambda_max < log m"
        threshold = r * logm ** 3 / (big * lambda_max ** 2)
    return {"regime": regime, "threshold": threshold, "p": p,
            "satisfied": p >= threshold, "slack": p / threshold,
            "m": m, "n": n, "r": r, "lambda_max": lambda_max}


@dataclass
class BoundReport:
    sigma_tilde: float
    A_value: float
    ub_dantzig: float
    ub_regls: float
    ub_rank_trunc: float
    lb_variance_radius: float
    lb_variance_prob: float
    lb_variance_vacuous: bool
    lb_squared: float
    lb_squared_simple: float
    lb_squared_valid: bool
    sigma1: float
    sigma2: float
    regime: dict
    inputs: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def bound_report(M, p: float, cfg: BoundConfig = BoundConfig(), r: int | None = None) -> BoundReport:
    """All bound quantities for rate matrix `M`, taking ``delta = A`` and ``lambda = 2pA``.

    `r` defaults to the numerical rank of `M` (at least 1).
    """
    M = _rates(M, p)
    m, n = M.shape
    if r is None:
        r = max(1, svd(M).rank(1e-10))
    lam_max = float(M.max())
    st = sigma_tilde(M, p)
    A = opnorm_bound_A(M, p, cfg)
    s1, s2 = class_sigma1(M), class_sigma2(M)
    lbv = lower_bound_variance_rate(r, p, s1, m, n)
    lbs = lower_bound_squared_rate(r, p, s2, m, n)
    regime = matching_regime_check(m, n, r, p, lam_max) if lam_max > 0 else {}
    return BoundReport(
        sigma_tilde=st,
        A_value=A,
        ub_dantzig=upper_bound("dantzig", r, p, A),
        ub_regls=upper_bound("regls", r, p, 2.0 * p * A),
        ub_rank_trunc=upper_bound("rank_trunc", r, p, A),
        lb_variance_radius=lbv.radius,
        lb_variance_prob=lbv.probability,
        lb_variance_vacuous=lbv.vacuous,
        lb_squared=lbs["max_form"],
        lb_squared_simple=lbs["simple"],
        lb_squared_valid=lbs["valid"],
        sigma1=s1,
        sigma2=s2,
        regime=regime,
        inputs={"m": m, "n": n, "r": int(r), "p": p, "lambda_max": lam_max,
                "epsilon": cfg.epsilon, "C": cfg.C, "C0": cfg.C0},
    )


@dataclass
class CalibrationResult:
    """Fitted constant and the evidence behind it.

    ``required`` holds, per scenario, the (1 - 2 eps) empirical quantile of
    the per-trial constant needed to cover ``||A_Omega^*(X) - pM||``.
    """

    C: float
    epsilon: float
    trials: int
    seed: int
    required: list
    coverage: list
    floor_applied: bool

    def to_dict(self) -> dict:
        return asdict(self)


def standard_calibration_grid(seed: int = 0) -> list:
    """Small grid of (rate matrix, p) scenarios for :func:`calibrate_C`."""
    from .sampling import derive_seed, random_lowrank_rates

    grid = []
    for i, (m, n, r, lam, p) in enumerate([
        (50, 50, 2, 1.0, 1.0), (50, 50, 2, 20.0, 0.5), (60, 40, 3, 5.0, 0.3),
        (100, 100, 2, 20.0, 0.5), (40, 80, 1, 50.0, 0.7),
    ]):
        grid.append((random_lowrank_rates(m, n, r, lam, derive_seed(seed, 7, i)), p))
    return grid


def calibrate_C(scenarios, epsilon: float = 0.1, trials: int = 200, seed: int = 0,
                floor: float = 1e-3) -> CalibrationResult:
    """Smallest `C` giving empirical coverage ``>= 1 - 2 epsilon`` on every scenario.

    For each trial the constant needed to make the bound hold is
    ``(||Z|| - 2 sqrt(p) sigma_tilde - 8 eps/sqrt(mn)) / (max(...) sqrt(log(...)))``;
    the fitted value is the largest per-scenario order statistic at rank
    ``ceil((1 - 2 eps) trials)``, never below `floor`.
    """
    from .sampling import (SamplingConfig, derive_seed, sample_bernoulli_mask,
                           sample_poisson)

    if not 0 < epsilon < 0.5 or trials < 1:
        raise ValueError("need epsilon in (0, 1/2) and trials >= 1")
    k = math.ceil((1.0 - 2.0 * epsilon) * trials)
    per_scenario = []
    needed_all = []
    for s, (M, p) in enumerate(scenarios):
        M = _rates(M, p)
        m, n = M.shape
        base = BoundConfig(C=1.0, epsilon=epsilon)
        fixed = 2.0 * math.sqrt(p) * sigma_tilde(M, p) + 8.0 * epsilon / math.sqrt(m * n)
        unit = opnorm_bound_A(M, p, base) - fixed
        needed = np.empty(trials)
        for t in range(trials):
            ts = derive_seed(seed, s, t)
            mask = sample_bernoulli_mask(m, n, SamplingConfig(p, ts))
            obs = sample_poisson(M, mask, ts)
            z = operator_norm(mask_adjoint(obs) - p * M)
            needed[t] = max(0.0, (z - fixed) / unit)
        needed_all.append(needed)
        per_scenario.append(float(np.sort(needed)[k - 1]))
    C = max(per_scenario)
    floor_applied = C < floor
    C = max(C, floor)
    coverage = [float(np.mean(nd <= C)) for nd in needed_all]
    return CalibrationResult(C, epsilon, trials, int(seed), per_scenario, coverage, floor_applied)
