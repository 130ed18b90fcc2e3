"""Command-line interface.

Subcommands: ``simulate``, ``estimate``, ``bounds``, ``pack``, ``bench`` and
``calibrate``.  Every subcommand accepts ``--config FILE`` (a JSON object
keyed by option name); explicit flags override config values.  Randomized
subcommands require ``--seed``.

Exit status: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import bounds as B
from . import io
from .bench import BoundViolation, Scenario, run_campaign
from .constructions import PackingFailure, gv_packing
from .estimators import (KINDS, PROJECTIONS, estimate_dantzig, estimate_multinomial_matrix,
                         estimate_rank_truncated, estimate_regls, estimate_row_multinomial)
from .linalg import MaskedObservations, NumericalError, mask_adjoint
from .sampling import (RowMultinomialModel, SamplingConfig, parse_seed, sample_bernoulli_mask,
                       sample_matrix_multinomial, sample_poisson, sample_row_multinomial)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


# defaults applied after merging --config, so that unset flags can be told apart
DEFAULTS = {
    "p": 1.0, "epsilon": 0.1, "C": B.DEFAULT_C, "C0": B.DEFAULT_C0, "project": [],
    "budget": 10 ** 7, "model": "poisson", "floor": 1e-3,
}
REQUIRED = {
    "simulate": ["rates", "seed", "out"],
    "estimate": ["kind", "obs", "out"],
    "bounds": ["rates"],
    "pack": ["m", "min_dist", "target", "seed", "out"],
    "bench": ["config", "seed"],
    "calibrate": ["seed"],
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="poisson-lowrank", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, help):
        sp = sub.add_parser(name, help=help, argument_default=None)
        sp.add_argument("--config", help="JSON file of option values")
        return sp

    sp = add("simulate", "draw observations from a rate or probability matrix")
    sp.add_argument("--rates", help="dense CSV of the true matrix")
    sp.add_argument("--model", choices=["poisson", "multinomial_matrix", "multinomial_rows"])
    sp.add_argument("--p", type=float, help="Bernoulli sampling probability (poisson)")
    sp.add_argument("--N", type=int, help="total draws (multinomial_matrix)")
    sp.add_argument("--trial-counts", dest="trial_counts",
                    help="draws per row: one integer or comma-separated list")
    sp.add_argument("--seed", help="decimal or 0x-hex seed")
    sp.add_argument("--out", help="observation file (sparse triples or dense counts)")
    sp.add_argument("--mask-out", dest="mask_out", help="optional file of sampled indices")

    sp = add("estimate", "compute a low-rank estimate from observations")
    sp.add_argument("--kind", choices=KINDS)
    sp.add_argument("--obs", help="sparse triple CSV, MatrixMarket or dense count CSV")
    sp.add_argument("--p", type=float, help="sampling probability (default: file header or 1)")
    sp.add_argument("--delta", type=float)
    sp.add_argument("--lambda", dest="lam", type=float)
    sp.add_argument("--rank", dest="rank_budget", type=int)
    sp.add_argument("--trial-counts", dest="trial_counts")
    sp.add_argument("--project", action="append", choices=PROJECTIONS)
    sp.add_argument("--out", help="estimate CSV")
    sp.add_argument("--report", help="EstimateResult JSON")

    sp = add("bounds", "evaluate the error bounds for a rate matrix")
    sp.add_argument("--rates")
    sp.add_argument("--p", type=float)
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--C", type=float)
    sp.add_argument("--C0", type=float)
    sp.add_argument("--rank", type=int)
    sp.add_argument("--out", help="BoundReport JSON (default: stdout)")

    sp = add("pack", "build a binary packing set")
    sp.add_argument("--m", type=int)
    sp.add_argument("--min-dist", dest="min_dist", type=int)
    sp.add_argument("--target", type=int)
    sp.add_argument("--budget", type=int)
    sp.add_argument("--seed")
    sp.add_argument("--out")

    sp = add("bench", "run a Monte Carlo campaign described by a scenario JSON")
    sp.add_argument("--seed", help="overrides the scenario's base_seed")
    sp.add_argument("--trials", type=int)
    sp.add_argument("--out-json", dest="out_json")
    sp.add_argument("--out-csv", dest="out_csv")
    sp.add_argument("--timing", action="store_true", default=None)

    sp = add("calibrate", "fit the constant C of the operator-norm bound")
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--seed")
    sp.add_argument("--floor", type=float)
    sp.add_argument("--out", help="calibration JSON (default: stdout)")
    return parser


def _merge(args):
    values = {k: v for k, v in vars(args).items() if v is not None}
    if args.command != "bench" and args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise io.DataError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise io.DataError(f"{args.config}: config must be a JSON object")
        for k, v in cfg.items():
            values.setdefault(k.replace("-", "_"), v)
    for k, v in DEFAULTS.items():
        values.setdefault(k, v)
    missing = [k for k in REQUIRED[args.command] if values.get(k) is None]
    if missing:
        raise UsageError(f"{args.command}: missing required option(s): "
                         + ", ".join("--" + k.replace("_", "-") for k in missing))
    return argparse.Namespace(**values)


def _trial_counts(text, m):
    if isinstance(text, (list, tuple)):
        counts = [int(v) for v in text]
    else:
        counts = [int(v) for v in str(text).split(",")]
    if len(counts) == 1:
        counts = counts * m
    if len(counts) != m:
        raise io.DataError(f"need 1 or {m} trial counts, got {len(counts)}")
    return np.array(counts, dtype=np.int64)


def _emit(text, path):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_simulate(a):
    M = io.read_rate_matrix(a.rates)
    seed = parse_seed(a.seed)
    if a.model == "poisson":
        mask = sample_bernoulli_mask(*M.shape, SamplingConfig(a.p, seed))
        obs = sample_poisson(M, mask, seed)
        io.write_observations(a.out, obs, a.p, seed)
        if getattr(a, "mask_out", None):
            io.write_mask(a.mask_out, mask, a.p, seed)
    elif a.model == "multinomial_matrix":
        if not getattr(a, "N", None):
            raise UsageError("simulate --model multinomial_matrix requires --N")
        io.write_dense_csv(a.out, sample_matrix_multinomial(M, a.N, seed))
    else:
        if getattr(a, "trial_counts", None) is None:
            raise UsageError("simulate --model multinomial_rows requires --trial-counts")
        model = RowMultinomialModel(M, _trial_counts(a.trial_counts, M.shape[0]))
        io.write_dense_csv(a.out, sample_row_multinomial(model, seed))


def _load_obs(path):
    with open(path) as fh:
        first = fh.readline()
    if first.startswith("#"):
        return io.read_observations(path)
    X = io.read_count_matrix(path)
    return MaskedObservations.from_dense(X), {"m": X.shape[0], "n": X.shape[1]}


def cmd_estimate(a):
    obs, meta = _load_obs(a.obs)
    p = float(getattr(a, "p", None) or meta.get("p") or 1.0)
    project = a.project or []
    need = {"dantzig": "delta", "multinomial_matrix": "delta", "multinomial_rows": "delta",
            "regls": "lam", "rank_trunc": "rank_budget"}[a.kind]
    if getattr(a, need, None) is None:
        flag = {"lam": "--lambda", "rank_budget": "--rank"}.get(need, "--" + need)
        raise UsageError(f"estimate --kind {a.kind} requires {flag}")
    if a.kind == "dantzig":
        res = estimate_dantzig(obs, p, a.delta, project)
    elif a.kind == "regls":
        res = estimate_regls(obs, p, a.lam, project)
    elif a.kind == "rank_trunc":
        res = estimate_rank_truncated(obs, p, a.rank_budget, project)
    else:
        X = mask_adjoint(obs)
        if a.kind == "multinomial_matrix":
            res = estimate_multinomial_matrix(X, int(round(X.sum())), a.delta, project)
        else:
            counts = (X.sum(axis=1) if getattr(a, "trial_counts", None) is None
                      else _trial_counts(a.trial_counts, X.shape[0]))
            res = estimate_row_multinomial(X, counts, a.delta, project)
    io.write_dense_csv(a.out, res.estimate)
    if getattr(a, "report", None):
        d = res.to_dict()
        d.update(kind=a.kind, p=p)
        io.write_json(a.report, d)


def cmd_bounds(a):
    M = io.read_rate_matrix(a.rates)
    cfg = B.BoundConfig(C=a.C, C0=a.C0, epsilon=a.epsilon)
    rep = B.bound_report(M, a.p, cfg, r=getattr(a, "rank", None))
    _emit(rep.to_json() + "\n", getattr(a, "out", None))


def cmd_pack(a):
    packing = gv_packing(a.m, a.min_dist, a.target, parse_seed(a.seed), a.budget)
    if not packing.audit():  # pragma: no cover - construction guarantees this
        raise NumericalError("packing audit failed")
    io.write_packing(a.out, packing)


def cmd_bench(a):
    try:
        with open(a.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise io.DataError(f"cannot read scenario {a.config}: {exc}") from None
    cfg["base_seed"] = parse_seed(a.seed)
    if getattr(a, "trials", None) is not None:
        cfg["trials"] = a.trials
    try:
        scenario = Scenario.from_dict(cfg)
    except TypeError as exc:
        raise io.DataError(f"{a.config}: {exc}") from None
    report = run_campaign(scenario, timing=bool(getattr(a, "timing", False)))
    _emit(report.to_json(), getattr(a, "out_json", None))
    if getattr(a, "out_csv", None):
        _emit(report.to_csv(), a.out_csv)


def cmd_calibrate(a):
    seed = parse_seed(a.seed)
    result = B.calibrate_C(B.standard_calibration_grid(seed), a.epsilon,
                           getattr(a, "trials", None) or 200, seed, a.floor)
    _emit(json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n", getattr(a, "out", None))


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "bounds": cmd_bounds,
            "pack": cmd_pack, "bench": cmd_bench, "calibrate": cmd_calibrate}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        merged = _merge(args)
        COMMANDS[args.command](merged)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, PackingFailure, BoundViolation) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
