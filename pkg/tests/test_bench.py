import json

import numpy as np
import pytest

from poisson_lowrank.bench import (CSV_HEADER, BoundViolation, CampaignReport, Scenario,
                                   aggregate, minimax_family_sweep, mle_risk_reference,
                                   resolve_truth, run_campaign, run_trial)
from poisson_lowrank.constructions import BlockFamilyConfig, assouad_family, fano_family
from poisson_lowrank.linalg import Mask, frobenius_norm, mask_adjoint
from poisson_lowrank.sampling import derive_seed, sample_poisson


def poisson_scenario(**kw):
    base = dict(model="poisson_completion",
                truth={"kind": "random_lowrank", "m": 20, "n": 15, "r": 2,
                       "lambda_max": 10.0, "seed": 3},
                estimator={"kind": "dantzig", "tuning": "oracle"}, p=0.6, trials=6,
                base_seed=11, scenario_id="t")
    base.update(kw)
    return Scenario(**base)


class TestScenario:
    @pytest.mark.parametrize("kw", [
        {"model": "gaussian"}, {"trials": 0}, {"estimator": {"kind": "dantzig", "tuning": "x"}},
        {"model": "multinomial_matrix"}, {"model": "multinomial_rows", "p": 1.0},
        {"epsilon": 0.7},
    ])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            poisson_scenario(**kw)

    def test_dict_round_trip(self):
        sc = poisson_scenario(base_seed="0x10")
        assert sc.base_seed == 16
        assert Scenario.from_dict(sc.to_dict()) == sc

    def test_truth_kinds(self):
        assert resolve_truth({"kind": "constant", "m": 2, "n": 3, "value": 4}).sum() == 24
        assert resolve_truth({"kind": "uniform_simplex", "m": 2, "n": 5}).sum() == pytest.approx(1)
        assert resolve_truth({"kind": "random_simplex", "m": 3, "n": 3}).sum() == pytest.approx(1)
        with pytest.raises(ValueError):
            resolve_truth({"kind": "mystery"})


class TestRunTrial:
    def test_mle_error(self):
        M = np.full((6, 5), 3.0)
        sc = Scenario("poisson_completion", {"kind": "matrix", "values": M.tolist()},
                      {"kind": "dantzig", "delta": 0.0}, p=1.0, trials=1, base_seed=4)
        rec = run_trial(sc, 0)
        seed = derive_seed(4, 0)
        X = mask_adjoint(sample_poisson(M, Mask.full(6, 5), derive_seed(seed, 1)))
        assert rec.error == pytest.approx(frobenius_norm(X - M), rel=1e-14)

    def test_deterministic(self):
        sc = poisson_scenario()
        assert run_trial(sc, 3) == run_trial(sc, 3)
        assert run_trial(sc, 3) != run_trial(sc, 4)

    @pytest.mark.parametrize("estimator", [
        {"kind": "dantzig", "delta": 0.0}, {"kind": "dantzig", "delta": 5.0},
        {"kind": "regls", "lam": 2.0}, {"kind": "rank_trunc", "rank_budget": 1},
        {"kind": "dantzig", "tuning": "plugin"},
    ])
    def test_zero_truth(self, estimator):
        sc = Scenario("poisson_completion", {"kind": "constant", "m": 5, "n": 4, "value": 0},
                      estimator, p=0.5, trials=2)
        assert run_trial(sc, 0).error == 0.0

    @pytest.mark.parametrize("tuning", ["oracle", "theorem", "plugin"])
    def test_bound_never_violated(self, tuning):
        for kind in ("dantzig", "regls"):
            rep = run_campaign(poisson_scenario(estimator={"kind": kind, "tuning": tuning}))
            assert rep.aggregates["violations"] == 0

    def test_rank_trunc_bound_checked(self):
        sc = poisson_scenario(estimator={"kind": "rank_trunc", "rank_budget": 2})
        rep = run_campaign(sc)
        assert rep.aggregates["bound_checked"] == sc.trials
        assert rep.aggregates["violations"] == 0

    def test_multinomial_models(self):
        mm = Scenario("multinomial_matrix", {"kind": "random_simplex", "m": 6, "n": 5},
                      {"kind": "multinomial_matrix", "tuning": "oracle",
                       "project": ["global_simplex"]}, N=500, trials=3)
        rows = Scenario("multinomial_rows",
                        {"kind": "random_row_stochastic", "m": 8, "n": 6, "r": 2},
                        {"kind": "multinomial_rows", "tuning": "oracle"},
                        trial_counts=100, trials=3)
        a, b = run_campaign(mm), run_campaign(rows)
        assert a.records[0].weighted_error is None
        assert b.records[0].weighted_error is not None
        assert b.aggregates["violations"] == 0 and b.aggregates["bound_checked"] == 3


class TestCampaign:
    def test_single_trial_aggregates(self):
        rep = run_campaign(poisson_scenario(trials=1))
        rec = rep.records[0]
        agg = rep.aggregates
        for key in ("error_mean", "error_median", "error_q05", "error_q95"):
            assert agg[key] == rec.error
        assert agg["mse"] == pytest.approx(rec.error ** 2)

    def test_byte_identical(self):
        sc = poisson_scenario()
        a, b = run_campaign(sc), run_campaign(sc)
        assert a.to_json() == b.to_json()
        assert a.to_csv() == b.to_csv()

    def test_threads_do_not_change_results(self):
        sc = poisson_scenario()
        assert run_campaign(sc, workers=3).to_json() == run_campaign(sc).to_json()

    def test_csv_layout(self):
        rep = run_campaign(poisson_scenario(trials=2))
        lines = rep.to_csv().splitlines()
        assert lines[0] == ",".join(CSV_HEADER)
        assert len(lines) == 3
        assert lines[1].endswith(",")  # wall_ms blank unless timing is requested
        timed = run_campaign(poisson_scenario(trials=2), timing=True)
        assert not timed.to_csv().splitlines()[1].endswith(",")

    def test_reload_recomputes_aggregates(self):
        rep = run_campaign(poisson_scenario())
        d = json.loads(rep.to_json())
        assert CampaignReport.from_dict(d).to_json() == rep.to_json()
        d["aggregates"]["mse"] += 1.0
        with pytest.raises(ValueError):
            CampaignReport.from_dict(d)

    def test_coverage_in_unit_interval(self):
        agg = run_campaign(poisson_scenario()).aggregates
        assert 0.0 <= agg["coverage"] <= 1.0

    def test_type7_quantiles(self):
        recs = run_campaign(poisson_scenario(trials=5)).records
        errs = sorted(r.error for r in recs)
        agg = aggregate(recs)
        assert agg["error_q25"] == pytest.approx(errs[1])
        assert agg["error_median"] == pytest.approx(errs[2])

    def test_plugin_note(self):
        rep = run_campaign(poisson_scenario(estimator={"kind": "dantzig", "tuning": "plugin"}))
        assert any("plugin" in n for n in rep.notes)

    def test_strict_failure_keeps_completed_trials(self, monkeypatch):
        import poisson_lowrank.bench as bench
        # force every trial to report a zero right-hand side
        monkeypatch.setattr(bench, "_poisson_bound", lambda *a: (True, 0.0))
        with pytest.raises(BoundViolation) as info:
            run_campaign(poisson_scenario(trials=3))
        assert len(info.value.report.records) == 3
        rep = run_campaign(poisson_scenario(trials=3), strict=False)
        assert rep.aggregates["violations"] == 3


class TestMleReference:
    def test_examples(self):
        assert mle_risk_reference("poisson_completion", np.ones((10, 10))) == 100.0
        U = np.full((10, 10), 0.01)
        assert mle_risk_reference("multinomial_matrix", U, N=100) == pytest.approx(0.0099)
        P = np.full((3, 4), 0.25)
        assert mle_risk_reference("multinomial_rows", P) == pytest.approx(12 * 0.1875)

    def test_unsupported(self):
        with pytest.raises(ValueError):
            mle_risk_reference("poisson_completion", np.ones((2, 2)), p=0.5)
        with pytest.raises(ValueError):
            mle_risk_reference("multinomial_matrix", np.ones((2, 2)) / 4)


class TestMinimaxSweep:
    def test_single_member(self):
        cfg = BlockFamilyConfig(r=1, k=8, l=2, lambda_max=4.0, p=0.5)
        fam = fano_family(cfg, count=3)
        out = minimax_family_sweep(fam, {"kind": "rank_trunc", "rank_budget": 1},
                                   trials_per_member=1, seed=2, members=1)
        sc = Scenario("poisson_completion", {"kind": "matrix", "values": fam.matrix(0)},
                      {"kind": "rank_trunc", "rank_budget": 1}, p=0.5,
                      base_seed=derive_seed(2, 0), rank=1)
        assert out["max_error"] == run_trial(sc, 0).error
        assert "not a minimax certificate" in out["label"]

    def test_assouad_near_full_observation(self):
        cfg = BlockFamilyConfig(r=1, k=3, l=2, lambda_max=2.0, p=0.99, mode="assouad")
        out = minimax_family_sweep(assouad_family(cfg), {"kind": "dantzig", "delta": 0.0},
                                   members=8)
        assert out["lb_squared_simple"] < 1e-2
        assert out["ratio"] > 1
