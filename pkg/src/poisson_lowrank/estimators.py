"""SVD closed-form low-rank estimators for count matrices.

With the nonnegativity constraint dropped, every estimator is one SVD of the
zero-filled observation matrix ``Y = A_Omega^*(X)``:

* ``dantzig``  -- min ||W||_* s.t. ||Y - pW|| <= delta   ->  svt(Y, delta) / p
* ``regls``    -- min ||Y - pW||_F^2 + lam ||W||_*         ->  svt(Y / p, lam / (2 p^2))
* ``rank_trunc`` -- min ||Y - pW||_F s.t. rank(W) <= r     ->  best rank-r approx of Y / p

and the multinomial variants rescale before thresholding.  Feasibility
constraints (nonnegativity, simplex) are applied afterwards as Euclidean
projections, which can only move the estimate closer to a feasible truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import (MaskedObservations, NumericalError, as_matrix, mask_adjoint,
                     operator_norm, svd)

__all__ = [
    "KINDS",
    "PROJECTIONS",
    "EstimatorParams",
    "EstimateResult",
    "svt",
    "project_nonnegative",
    "project_global_simplex",
    "project_rows_simplex",
    "estimate_dantzig",
    "estimate_regls",
    "estimate_rank_truncated",
    "estimate_multinomial_matrix",
    "estimate_row_multinomial",
    "reference_solver_dantzig",
    "estimate",
]

KINDS = ("dantzig", "regls", "rank_trunc", "multinomial_matrix", "multinomial_rows")
PROJECTIONS = ("nonnegative", "global_simplex", "row_simplex")


@dataclass(frozen=True)
class EstimatorParams:
    kind: str
    delta: float | None = None
    lam: float | None = None
    rank_budget: int | None = None
    p: float = 1.0
    project: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown estimator kind {self.kind!r}; expected one of {KINDS}")
        needs = {"dantzig": "delta", "multinomial_matrix": "delta", "multinomial_rows": "delta",
                 "regls": "lam", "rank_trunc": "rank_budget"}[self.kind]
        value = getattr(self, needs)
        if value is None:
            raise ValueError(f"estimator {self.kind!r} requires {needs}")
        if needs == "rank_budget":
            if int(value) != value or value < 1:
                raise ValueError(f"rank_budget must be a positive integer, got {value!r}")
        elif value < 0:
            raise ValueError(f"{needs} must be nonnegative, got {value!r}")
        _check_p(self.p)
        object.__setattr__(self, "project", _check_projections(self.project))


@dataclass(frozen=True)
class EstimateResult:
    """Estimate plus diagnostics.

    ``threshold_used`` is the singular-value shrinkage level, or the rank
    budget for ``rank_trunc``.  ``residual_opnorm`` is the data-fit residual
    of the returned estimate in the estimator's own norm.
    """

    estimate: np.ndarray
    threshold_used: float
    output_rank: int
    residual_opnorm: float
    projected: tuple = ()

    def to_dict(self) -> dict:
        return {
            "threshold_used": float(self.threshold_used),
            "output_rank": int(self.output_rank),
            "residual_opnorm": float(self.residual_opnorm),
            "projected": list(self.projected),
            "shape": list(self.estimate.shape),
        }


def _check_p(p):
    if not 0.0 < p <= 1.0:
        raise ValueError(f"sampling probability must lie in (0, 1], got {p}")


def _check_projections(project):
    if isinstance(project, str):
        project = (project,)
    flags = frozenset(project or ())
    unknown = flags - set(PROJECTIONS)
    if unknown:
        raise ValueError(f"unknown projection(s) {sorted(unknown)}")
    if {"global_simplex", "row_simplex"} <= flags:
        raise ValueError("global_simplex and row_simplex cannot be combined")
    return flags


def _output_rank(A):
    return svd(A).rank(1e-10)


def svt(A, tau: float) -> np.ndarray:
    """Singular value soft thresholding: shrink every singular value by `tau`."""
    if tau < 0:
        raise ValueError(f"threshold must be nonnegative, got {tau}")
    if tau == 0:
        # exact identity; a factor-and-rebuild round trip would add rounding
        return as_matrix(A).copy()
    f = svd(A)
    return f.reconstruct(np.maximum(f.singular_values - tau, 0.0))


def project_nonnegative(A) -> np.ndarray:
    return np.maximum(as_matrix(A), 0.0)


def _simplex_rows(V):
    # sort-and-threshold projection of each row onto {x >= 0, sum x = 1}
    n = V.shape[1]
    u = -np.sort(-V, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    ind = np.arange(1, n + 1)
    cond = u - css / ind > 0
    rho = n - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(V.shape[0]), rho] / (rho + 1)
    return np.maximum(V - theta[:, None], 0.0)


def project_global_simplex(A) -> np.ndarray:
    """Projection onto matrices with nonnegative entries summing to one."""
    A = as_matrix(A)
    return _simplex_rows(A.reshape(1, -1)).reshape(A.shape)


def project_rows_simplex(A) -> np.ndarray:
    """Row-wise projection onto the probability simplex."""
    return _simplex_rows(as_matrix(A))


def _apply_projections(A, flags):
    flags = _check_projections(flags)
    if "global_simplex" in flags:
        A = project_global_simplex(A)
    elif "row_simplex" in flags:
        A = project_rows_simplex(A)
    elif "nonnegative" in flags:
        # the simplex sets already imply nonnegativity
        A = project_nonnegative(A)
    return A, tuple(f for f in PROJECTIONS if f in flags)


def _zero_filled(obs):
    if isinstance(obs, MaskedObservations):
        return mask_adjoint(obs)
    return as_matrix(obs, "observations")


def estimate_dantzig(obs, p: float, delta: float, project=()) -> EstimateResult:
    """Nuclear-norm minimization under an operator-norm residual constraint.

    Returns ``svt(Y, delta) / p`` for ``Y = A_Omega^*(X)``, then applies the
    requested projections.
    """
    _check_p(p)
    if delta < 0:
        raise ValueError(f"delta must be nonnegative, got {delta}")
    Y = _zero_filled(obs)
    est, done = _apply_projections(svt(Y, delta) / p, project)
    return EstimateResult(est, float(delta), _output_rank(est),
                          operator_norm(Y - p * est), done)


def estimate_regls(obs, p: float, lam: float, project=()) -> EstimateResult:
    """Nuclear-norm-regularized least squares, ``svt(Y / p, lam / (2 p^2))``."""
    _check_p(p)
    if lam < 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    Y = _zero_filled(obs)
    tau = lam / (2.0 * p * p)
    est, done = _apply_projections(svt(Y / p, tau), project)
    return EstimateResult(est, tau, _output_rank(est), operator_norm(Y - p * est), done)


def estimate_rank_truncated(obs, p: float, r: int, project=()) -> EstimateResult:
    """Best rank-`r` approximation of ``Y / p`` (Eckart--Young).

    Ties at the r-th singular value keep the first `r` in SVD output order.
    """
    _check_p(p)
    if int(r) != r or r < 1:
        raise ValueError(f"rank budget must be a positive integer, got {r!r}")
    Y = _zero_filled(obs)
    f = svd(Y / p)
    s = f.singular_values.copy()
    s[int(r):] = 0.0
    est, done = _apply_projections(f.reconstruct(s), project)
    return EstimateResult(est, float(r), _output_rank(est), operator_norm(Y - p * est), done)


def estimate_multinomial_matrix(X, N: int, delta: float, project=()) -> EstimateResult:
    """Low-rank estimate of a cell-probability matrix from one multinomial draw.

    `X` must sum to `N`.  The estimate is ``svt(X, N delta) / N``; the
    ``global_simplex`` projection restores nonnegativity and unit mass.
    """
    X = as_matrix(X, "count matrix")
    if delta < 0:
        raise ValueError(f"delta must be nonnegative, got {delta}")
    if N < 1 or abs(X.sum() - N) > 1e-9 * max(N, 1):
        raise ValueError(f"count matrix sums to {X.sum():g}, expected N = {N}")
    est, done = _apply_projections(svt(X, N * delta) / N, project)
    return EstimateResult(est, float(N * delta), _output_rank(est),
                          operator_norm(X - N * est), done)


def estimate_row_multinomial(X, trial_counts, delta: float, project=()) -> EstimateResult:
    """Low-rank estimate of row probabilities from independent row multinomials.

    With ``D = diag(N_i)``: ``W = svt(D^{-1/2} X, delta)`` and the estimate is
    ``D^{-1/2} W``.  ``residual_opnorm`` is ``||D^{-1/2}(X - D P_hat)||``.
    """
    X = as_matrix(X, "count matrix")
    N = np.asarray(trial_counts, dtype=np.float64).ravel()
    if N.shape != (X.shape[0],) or np.any(N < 1):
        raise ValueError("need one positive trial count per row")
    if delta < 0:
        raise ValueError(f"delta must be nonnegative, got {delta}")
    mismatch = np.nonzero(np.abs(X.sum(axis=1) - N) > 1e-9 * N)[0]
    if mismatch.size:
        i = mismatch[0]
        raise ValueError(f"row {i + 1} sums to {X[i].sum():g}, expected {N[i]:g}")
    root = np.sqrt(N)[:, None]
    est, done = _apply_projections(svt(X / root, delta) / root, project)
    return EstimateResult(est, float(delta), _output_rank(est),
                          operator_norm((X - N[:, None] * est) / root), done)


def reference_solver_dantzig(obs, p: float, delta: float, tol: float = 1e-8,
                             max_iter: int = 5000, seed: int = 0) -> np.ndarray:
    """Iterative solution of the Dantzig program, for checking the closed form.

    ADMM on the split ``p W + E = Y`` with ``||E|| <= delta``: a nuclear-norm
    proximal step in ``W``, a spectral-ball projection in ``E`` and a scaled
    dual update, with residual-balancing penalty adaptation.  The iterates
    start from a random point so they do not share singular vectors with
    ``Y``.  Raises :class:`NumericalError` if `max_iter` is reached first.
    """
    _check_p(p)
    if delta <= 0:
        raise ValueError("reference solver requires delta > 0")
    Y = _zero_filled(obs)
    scale = max(np.linalg.norm(Y), 1.0)
    rng = np.random.default_rng(seed)
    E = rng.standard_normal(Y.shape)
    E *= delta / max(operator_norm(E), 1e-300)
    U = 0.1 * rng.standard_normal(Y.shape)
    rho = 1.0 / max(p * delta, 1e-12)
    for _ in range(max_iter):
        W = svt((Y - E - U) / p, 1.0 / (rho * p * p))
        f = svd(Y - p * W - U)
        E_new = f.reconstruct(np.minimum(f.singular_values, delta))
        primal = p * W + E_new - Y
        dual = rho * p * np.linalg.norm(E_new - E)
        U = U + primal
        E = E_new
        rp = np.linalg.norm(primal)
        if rp <= tol * scale and dual <= tol * scale:
            return W
        if rp > 10 * dual:
            rho *= 2.0
            U /= 2.0
        elif dual > 10 * rp:
            rho /= 2.0
            U *= 2.0
    raise NumericalError(f"reference solver did not reach tol={tol} in {max_iter} iterations")


def estimate(obs, params: EstimatorParams, trial_counts=None, N=None) -> EstimateResult:
    """Dispatch on ``params.kind``.

    `obs` is a :class:`MaskedObservations` (Poisson kinds) or a dense count
    matrix (multinomial kinds, which also need `N` or `trial_counts`).
    """
    k = params.kind
    if k == "dantzig":
        return estimate_dantzig(obs, params.p, params.delta, params.project)
    if k == "regls":
        return estimate_regls(obs, params.p, params.lam, params.project)
    if k == "rank_trunc":
        return estimate_rank_truncated(obs, params.p, int(params.rank_budget), params.project)
    X = _zero_filled(obs)
    if k == "multinomial_matrix":
        if N is None:
            N = int(round(X.sum()))
        return estimate_multinomial_matrix(X, N, params.delta, params.project)
    if trial_counts is None:
        trial_counts = X.sum(axis=1)
    return estimate_row_multinomial(X, trial_counts, params.delta, params.project)
