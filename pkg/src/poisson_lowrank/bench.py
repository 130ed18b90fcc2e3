"""Monte Carlo harness: sample, estimate, score, aggregate.

A :class:`Scenario` fixes the observation model, the true matrix, the
estimator and its tuning rule.  Trial ``t`` of a campaign uses the seed
``derive_seed(base_seed, t)``, so a :class:`CampaignReport` is a pure
function of its scenario and serializes to byte-identical JSON/CSV on rerun.

Tuning rules for the shrinkage level ``delta``:

``fixed``
    use the configured value.
``oracle``
    the realized noise norm, computed from the truth (simulation only).
``theorem``
    the high-probability radius from :mod:`.bounds` evaluated at the truth
    (simulation only).
``plugin``
    the same radius evaluated at a data-driven stand-in for the truth.  This
    rule is an addition of this package and is labelled as such in reports.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import bounds as B
from .constructions import AssouadFamily, FanoFamily
from .estimators import EstimatorParams, estimate
from .linalg import as_matrix, mask_adjoint, operator_norm
from .sampling import (GENERATOR_NAME, RowMultinomialModel, SamplingConfig, derive_seed,
                       parse_seed, random_lowrank_rates, random_row_stochastic,
                       random_uniforms, sample_bernoulli_mask, sample_matrix_multinomial,
                       sample_poisson, sample_row_multinomial)

__all__ = [
    "MODELS",
    "TUNING_RULES",
    "CSV_HEADER",
    "Scenario",
    "TrialRecord",
    "CampaignReport",
    "BoundViolation",
    "resolve_truth",
    "run_trial",
    "run_campaign",
    "mle_risk_reference",
    "minimax_family_sweep",
]

MODELS = ("poisson_completion", "multinomial_matrix", "multinomial_rows")
TUNING_RULES = ("fixed", "oracle", "theorem", "plugin")
CSV_HEADER = ("scenario_id", "trial", "seed", "error", "weighted_error", "residual",
              "bound_violated", "wall_ms")
_BOUND_RTOL = 1e-9


class BoundViolation(AssertionError):
    """A deterministic error inequality failed on a trial where it must hold."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass
class Scenario:
    """One experiment configuration.

    `truth` is a dict with ``kind`` one of ``random_lowrank`` (m, n, r,
    lambda_max, seed), ``random_row_stochastic`` (m, n, r, seed),
    ``constant`` (m, n, value) or ``matrix`` (values).  `estimator` holds
    :class:`~.estimators.EstimatorParams` fields plus ``tuning``.
    """

    model: str
    truth: dict
    estimator: dict
    p: float = 1.0
    trials: int = 1
    base_seed: int = 0
    N: int | None = None
    trial_counts: object = None
    epsilon: float = 0.1
    C: float = B.DEFAULT_C
    rank: int | None = None
    scenario_id: str = "scenario"

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; expected one of {MODELS}")
        if int(self.trials) < 1:
            raise ValueError("trials must be >= 1")
        if self.model != "poisson_completion" and self.p != 1.0:
            raise ValueError("multinomial models observe every entry (p = 1)")
        if self.model == "multinomial_matrix" and not self.N:
            raise ValueError("multinomial_matrix needs N")
        if self.model == "multinomial_rows" and self.trial_counts is None:
            raise ValueError("multinomial_rows needs trial_counts")
        tuning = self.estimator.get("tuning", "fixed")
        if tuning not in TUNING_RULES:
            raise ValueError(f"unknown tuning rule {tuning!r}")
        self.base_seed = parse_seed(self.base_seed)
        self.trials = int(self.trials)
        B.BoundConfig(C=self.C, epsilon=self.epsilon)

    def to_dict(self) -> dict:
        d = asdict(self)
        if isinstance(d["trial_counts"], np.ndarray):
            d["trial_counts"] = d["trial_counts"].tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        return cls(**d)


@dataclass
class TrialRecord:
    """Outcome of one trial.

    ``residual`` is the realized noise norm: ``||A^*(X) - pM||`` (Poisson),
    ``||X - NP|| / N`` (matrix multinomial) or ``||D^{-1/2}(X - DP)||``
    (row multinomial).  ``weighted_error`` is ``||D^{1/2}(P_hat - P)||_F``
    for the row model and ``None`` otherwise.
    """

    scenario_id: str
    trial: int
    seed: int
    error: float
    weighted_error: float | None
    residual: float
    delta: float
    bound_checked: bool
    bound_violated: bool
    wall_ms: float | None = None


def resolve_truth(spec: dict) -> np.ndarray:
    kind = spec.get("kind")
    if kind == "random_lowrank":
        return random_lowrank_rates(spec["m"], spec["n"], spec["r"], spec["lambda_max"],
                                    spec.get("seed", 0))
    if kind == "random_row_stochastic":
        return random_row_stochastic(spec["m"], spec["n"], spec["r"], spec.get("seed", 0))
    if kind == "constant":
        return np.full((spec["m"], spec["n"]), float(spec["value"]))
    if kind == "matrix":
        return as_matrix(spec["values"], "truth")
    if kind == "uniform_simplex":
        m, n = spec["m"], spec["n"]
        return np.full((m, n), 1.0 / (m * n))
    if kind == "random_simplex":
        U = random_uniforms(spec.get("seed", 0), (spec["m"], spec["n"]), 9)
        return U / U.sum()
    raise ValueError(f"unknown truth kind {kind!r}")


def _truth_rank(M):
    from .linalg import svd
    return max(1, svd(M).rank(1e-10))


@dataclass
class _Prepared:
    scenario: Scenario
    M: np.ndarray
    r: int
    counts: np.ndarray | None
    radius: float


def _prepare(scenario: Scenario) -> _Prepared:
    M = resolve_truth(scenario.truth)
    if np.any(M < 0):
        raise ValueError("truth has negative entries")
    r = scenario.rank or _truth_rank(M)
    counts = None
    cfg = B.BoundConfig(C=scenario.C, epsilon=scenario.epsilon)
    if scenario.model == "poisson_completion":
        radius = B.opnorm_bound_A(M, scenario.p, cfg)
    elif scenario.model == "multinomial_matrix":
        radius = B.delta_matrix_multinomial(M, int(scenario.N), scenario.epsilon, scenario.C)
    else:
        counts = np.asarray(scenario.trial_counts)
        if counts.ndim == 0:
            counts = np.full(M.shape[0], int(counts))
        RowMultinomialModel(M, counts)  # validates
        radius = B.delta_row_multinomial(M.sum(axis=0).max(), counts.min(), *M.shape,
                                         scenario.epsilon)
    return _Prepared(scenario, M, int(r), counts, radius)


def _params(est: dict, p: float, delta: float | None) -> EstimatorParams:
    kind = est["kind"]
    fields = {k: est.get(k) for k in ("delta", "lam", "rank_budget")}
    if est.get("tuning", "fixed") != "fixed":
        if kind == "regls":
            fields["lam"] = 2.0 * p * delta
        else:
            fields["delta"] = delta
    return EstimatorParams(kind=kind, p=p, project=frozenset(est.get("project", ())), **fields)


def _plugin_poisson(Y, p, cfg):
    m, n = Y.shape
    lam_hat = float(Y.max())
    # unbiased: E[Y] = pM and E[Y^2 - Y] = pM^2 entrywise
    var = (Y + (1.0 - p) * (Y * Y - Y)) / p
    var = np.maximum(var, 0.0)
    st = float(np.sqrt(var.sum(axis=1).max()) + np.sqrt(var.sum(axis=0).max()))
    eps = cfg.epsilon
    trunc = max(lam_hat, 4.0 * math.log(2.0 * m * n / eps)) * math.sqrt(math.log(max(m, n) / eps))
    return 2.0 * math.sqrt(p) * st + 8.0 * eps / math.sqrt(m * n) + cfg.C * trunc


def _run(prep: _Prepared, index: int, timing: bool) -> TrialRecord:
    sc = prep.scenario
    M, r = prep.M, prep.r
    seed = derive_seed(sc.base_seed, index)
    start = time.perf_counter()
    est = sc.estimator
    tuning = est.get("tuning", "fixed")
    weighted = None
    cfg = B.BoundConfig(C=sc.C, epsilon=sc.epsilon)

    if sc.model == "poisson_completion":
        m, n = M.shape
        mask = sample_bernoulli_mask(m, n, SamplingConfig(sc.p, derive_seed(seed, 0)))
        obs = sample_poisson(M, mask, derive_seed(seed, 1))
        Y = mask_adjoint(obs)
        residual = operator_norm(Y - sc.p * M)
        delta = {"oracle": residual, "theorem": prep.radius,
                 "plugin": None, "fixed": None}[tuning]
        if tuning == "plugin":
            delta = _plugin_poisson(Y, sc.p, cfg)
        params = _params(est, sc.p, delta)
        res = estimate(obs, params)
        err = float(np.linalg.norm(res.estimate - M))
        checked, bound = _poisson_bound(params, residual, r, sc.p)
    elif sc.model == "multinomial_matrix":
        N = int(sc.N)
        X = sample_matrix_multinomial(M, N, seed)
        residual = operator_norm(X - N * M) / N
        delta = {"oracle": residual, "theorem": prep.radius, "fixed": None}.get(tuning)
        if tuning == "plugin":
            delta = B.delta_matrix_multinomial(X / N, N, sc.epsilon, sc.C)
        params = _params(est, 1.0, delta)
        res = estimate(X, params, N=N)
        err = float(np.linalg.norm(res.estimate - M))
        checked = params.kind == "multinomial_matrix" and residual <= params.delta
        bound = 4.0 * math.sqrt(2 * r) * params.delta if checked else math.inf
    else:
        counts = prep.counts
        X = sample_row_multinomial(RowMultinomialModel(M, counts), seed)
        root = np.sqrt(counts.astype(np.float64))[:, None]
        residual = operator_norm((X - counts[:, None] * M) / root)
        delta = {"oracle": residual, "theorem": prep.radius, "fixed": None}.get(tuning)
        if tuning == "plugin":
            delta = B.delta_row_multinomial((X / counts[:, None]).sum(axis=0).max(),
                                            counts.min(), *M.shape, sc.epsilon)
        params = _params(est, 1.0, delta)
        res = estimate(X, params, trial_counts=counts)
        err = float(np.linalg.norm(res.estimate - M))
        weighted = float(np.linalg.norm(root * (res.estimate - M)))
        checked = params.kind == "multinomial_rows" and residual <= params.delta
        bound = 4.0 * math.sqrt(2 * r) * params.delta if checked else math.inf

    scored = weighted if weighted is not None else err
    violated = bool(checked and scored > bound * (1 + _BOUND_RTOL) + 1e-12)
    wall = (time.perf_counter() - start) * 1e3 if timing else None
    used = params.delta if params.delta is not None else (
        params.lam if params.lam is not None else float(params.rank_budget))
    return TrialRecord(sc.scenario_id, index, seed, err, weighted, float(residual),
                       float(used), bool(checked), violated, wall)


def _poisson_bound(params: EstimatorParams, residual, r, p):
    """Whether the deterministic inequality applies, and its right-hand side."""
    c = math.sqrt(2 * r)
    if params.kind == "dantzig":
        ok = residual <= params.delta
        return ok, 4.0 * c * params.delta / p
    if params.kind == "regls":
        ok = residual <= params.lam / (2.0 * p)
        return ok, 2.0 * c * params.lam / (p * p)
    if params.kind == "rank_trunc":
        budget = int(params.rank_budget)
        ok = budget >= r
        return ok, 2.0 * math.sqrt(2 * budget) * residual / p
    return False, math.inf


def run_trial(scenario: Scenario, trial_index: int, timing: bool = False) -> TrialRecord:
    """Sample, estimate and score trial `trial_index`; deterministic given the scenario."""
    return _run(_prepare(scenario), int(trial_index), timing)


def _quantiles(x):
    # numpy's default "linear" method is Hyndman-Fan type 7
    qs = np.quantile(x, [0.05, 0.25, 0.5, 0.75, 0.95])
    return dict(zip(("q05", "q25", "median", "q75", "q95"), map(float, qs)))


def mle_risk_reference(model: str, truth, p: float = 1.0, N: int | None = None) -> float:
    """Exact expected squared error of the unstructured MLE.

    Poisson (``p = 1``): ``sum M_ij``.  Matrix multinomial:
    ``sum P_ij (1 - P_ij) / N``.  Row multinomial, in the ``D^{1/2}``-weighted
    norm: ``sum P_ij (1 - P_ij)``.
    """
    M = as_matrix(truth, "truth")
    if model == "poisson_completion":
        if p != 1.0:
            raise ValueError("MLE risk reference is only defined for full observation (p = 1)")
        return float(M.sum())
    if model == "multinomial_matrix":
        if not N:
            raise ValueError("multinomial_matrix needs N")
        return float((M * (1.0 - M)).sum() / N)
    if model == "multinomial_rows":
        return float((M * (1.0 - M)).sum())
    raise ValueError(f"unknown model {model!r}")


@dataclass
class CampaignReport:
    scenario: dict
    records: list
    aggregates: dict
    bounds: dict
    generator: str = GENERATOR_NAME
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "generator": self.generator,
            "aggregates": self.aggregates,
            "bounds": self.bounds,
            "notes": self.notes,
            "records": [asdict(r) for r in self.records],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False,
                          default=_json_default) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for rec in self.records:
            w.writerow([rec.scenario_id, rec.trial, rec.seed, repr(rec.error),
                        "" if rec.weighted_error is None else repr(rec.weighted_error),
                        repr(rec.residual), int(rec.bound_violated),
                        "" if rec.wall_ms is None else repr(rec.wall_ms)])
        return buf.getvalue()

    @classmethod
    def from_dict(cls, d: dict, check: bool = True) -> "CampaignReport":
        report = cls(d["scenario"], [TrialRecord(**r) for r in d["records"]], d["aggregates"],
                     d["bounds"], d.get("generator", GENERATOR_NAME), d.get("notes", []))
        if check:
            fresh = aggregate(report.records, report.aggregates.get("event_radius"),
                              report.aggregates.get("mle_risk"))
            for key, value in fresh.items():
                if report.aggregates.get(key) != value:
                    raise ValueError(f"aggregate {key!r} does not match the trial records")
        return report


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def aggregate(records, event_radius=None, mle_risk=None) -> dict:
    """Summary statistics, recomputable from the trial records alone."""
    err = np.array([r.error for r in records])
    agg = {"trials": len(records), "error_mean": float(err.mean()),
           "mse": float(np.mean(err ** 2))}
    agg.update({f"error_{k}": v for k, v in _quantiles(err).items()})
    if records and records[0].weighted_error is not None:
        w = np.array([r.weighted_error for r in records])
        agg["weighted_mse"] = float(np.mean(w ** 2))
        agg["weighted_error_mean"] = float(w.mean())
    res = np.array([r.residual for r in records])
    agg["residual_mean"] = float(res.mean())
    agg["residual_max"] = float(res.max())
    agg["event_radius"] = event_radius
    agg["coverage"] = None if event_radius is None else float(np.mean(res <= event_radius))
    agg["bound_checked"] = int(sum(r.bound_checked for r in records))
    agg["violations"] = int(sum(r.bound_violated for r in records))
    agg["mle_risk"] = mle_risk
    if mle_risk:
        risk = agg.get("weighted_mse", agg["mse"])
        agg["mle_risk_ratio"] = risk / mle_risk
    else:
        agg["mle_risk_ratio"] = None
    return agg


def run_campaign(scenario: Scenario, timing: bool = False, workers: int = 1,
                 strict: bool = True) -> CampaignReport:
    """Run every trial and attach aggregates and bound formulas.

    Timing is off by default so that reports are byte-reproducible.  With
    `strict`, a trial violating a deterministic error inequality raises
    :class:`BoundViolation` carrying the report of the completed trials.
    """
    prep = _prepare(scenario)
    indices = range(scenario.trials)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(lambda t: _run(prep, t, timing), indices))
    else:
        records = [_run(prep, t, timing) for t in indices]

    M = prep.M
    mle = None
    if scenario.model != "poisson_completion" or scenario.p == 1.0:
        mle = mle_risk_reference(scenario.model, M, scenario.p, scenario.N)
    cfg = B.BoundConfig(C=scenario.C, epsilon=scenario.epsilon)
    if scenario.model == "poisson_completion":
        bound_info = B.bound_report(M, scenario.p, cfg, r=prep.r).to_dict()
    elif scenario.model == "multinomial_matrix":
        bound_info = {"delta": prep.radius, "ub": 4.0 * math.sqrt(2 * prep.r) * prep.radius,
                      "r": prep.r, "N": int(scenario.N), "epsilon": scenario.epsilon,
                      "C": scenario.C}
    else:
        bound_info = {"delta": prep.radius,
                      "ub_weighted": 4.0 * math.sqrt(2 * prep.r) * prep.radius,
                      "r": prep.r, "D_min": int(prep.counts.min()), "epsilon": scenario.epsilon}
    notes = []
    if scenario.estimator.get("tuning") == "plugin":
        notes.append("plugin tuning: delta estimated from the data, not part of the theory")
    if scenario.estimator.get("tuning") in ("oracle", "theorem"):
        notes.append(f"{scenario.estimator['tuning']} tuning uses the true matrix (simulation only)")
    report = CampaignReport(scenario.to_dict(), records, aggregate(records, prep.radius, mle),
                            bound_info, notes=notes)
    bad = [r.trial for r in records if r.bound_violated]
    if strict and bad:
        raise BoundViolation(f"error bound violated on trials {bad}", report)
    return report


def minimax_family_sweep(family, estimator: dict, trials_per_member: int = 1, seed=0,
                         members: int | None = None, epsilon: float = 0.1) -> dict:
    """Run one estimator over members of a lower-bound family.

    Fano families: reports the largest observed error and the fraction of
    runs whose error reaches the lower-bound radius.  Assouad families:
    reports the average squared error over uniformly drawn members, an
    estimate of the Bayes risk, against the Assouad bound.  Either way this
    is a consistency check with a single concrete estimator, not a
    certificate of the minimax rate.
    """
    seed = parse_seed(seed)
    cfg = family.cfg
    m, n = cfg.shape
    if isinstance(family, FanoFamily):
        count = len(family) if members is None else min(members, len(family))
        mats = [family.matrix(i) for i in range(count)]
    elif isinstance(family, AssouadFamily):
        count = members or min(len(family), 64)
        if count >= len(family):
            thetas = list(family.thetas())
        else:
            U = random_uniforms(seed, (count, cfg.theta_length), 11)
            thetas = list((U < 0.5).astype(int))
        mats = [family.matrix(t) for t in thetas]
    else:
        raise TypeError("family must be a FanoFamily or AssouadFamily")

    errors = []
    for i, M in enumerate(mats):
        sc = Scenario("poisson_completion", {"kind": "matrix", "values": M}, estimator,
                      p=cfg.p, trials=trials_per_member, base_seed=derive_seed(seed, i),
                      epsilon=epsilon, rank=cfg.r)
        prep = _prepare(sc)
        errors.append([_run(prep, t, False).error for t in range(trials_per_member)])
    errors = np.array(errors)
    out = {"members": count, "trials_per_member": trials_per_member,
           "max_error": float(errors.max()), "mean_squared_error": float(np.mean(errors ** 2)),
           "label": "sanity check with one estimator; not a minimax certificate"}
    if isinstance(family, FanoFamily):
        lb = B.lower_bound_variance_rate(cfg.r, cfg.p, family.sigma1, m, n)
        out.update(kind="fano", lb_radius=lb.radius, lb_probability=lb.probability,
                   lb_vacuous=lb.vacuous, ratio=out["max_error"] / lb.radius,
                   fraction_at_least_radius=float(np.mean(errors >= lb.radius)))
    else:
        lbs = B.lower_bound_squared_rate(cfg.r, cfg.p, family.sigma2, m, n)
        out.update(kind="assouad", lb_squared=lbs["max_form"], lb_squared_simple=lbs["simple"],
                   lb_valid=lbs["valid"], bayes_risk_bound=family.bayes_risk_lower_bound(),
                   ratio=(out["mean_squared_error"] / lbs["max_form"]
                          if lbs["max_form"] > 0 else None))
    return out
