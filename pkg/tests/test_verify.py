"""Calibration, verdict issuance, metadata binding, and the delta grid search."""

import math

import numpy as np
import pytest

from prvkit.conformal import CalibrationArtifact, RegionConstant
from prvkit.errors import CalibrationError, HorizonError, MetadataMismatch, NotInPositiveNormalForm
from prvkit.formulas import formula_hash, to_pnf
from prvkit.parsing import parse
from prvkit.predictors import ExternalPredictor, Trajectory, fit_ar
from prvkit.verify import (
    calibrate_direct,
    calibrate_indirect,
    min_delta_search,
    run_verification,
    verdict_record,
    verify_direct,
    verify_indirect,
    verify_observed,
)
from prvkit.semantics import eval_robust

INF = math.inf

# G[0,1] over a single component; enabled at tau0 = 0 with t = 0, so H = 1.
GUARD = parse("G[0,1](x1 >= 0)", ["x1"])
GUARD_PNF = to_pnf(GUARD)


def controlled_setup(true_values, predicted_values, test_prediction=1.0):
    """External predictor giving exact control over the robustness scores.

    Every trajectory starts at 100, so with G[0,1] the robustness equals the
    (smaller) second state: the score of trajectory i is exactly
    predicted_values[i] - true_values[i].
    """
    val = [
        Trajectory(f"v-{i}", np.array([[100.0], [a]]))
        for i, a in enumerate(true_values)
    ]
    table = {
        f"v-{i}": {1: np.array([b])} for i, b in enumerate(predicted_values)
    }
    table["probe"] = {1: np.array([test_prediction])}
    predictor = ExternalPredictor(t=0, horizon_max=1, dim=1, table=table)
    probe = Trajectory("probe", np.array([[100.0]]))
    return predictor, val, probe


class TestCalibrateDirect:
    def test_perfect_predictor_gives_zero_constant(self):
        values = [0.5, 1.5, -0.25, 2.0, 0.0]
        predictor, val, _ = controlled_setup(values, values)
        artifact = calibrate_direct(predictor, val, GUARD, tau0=0, t=0, delta=0.3)
        assert artifact.region.threshold == 0.0

    def test_rank_96_of_100(self):
        """k=100, delta=0.05: the 96th smallest score, verified by counting."""
        rng = np.random.default_rng(31)
        scores = rng.permutation(np.arange(1.0, 101.0))
        predictor, val, _ = controlled_setup(np.zeros(100), scores)
        artifact = calibrate_direct(predictor, val, GUARD, tau0=0, t=0, delta=0.05)
        assert artifact.region.rank == 96
        assert artifact.region.threshold == 96.0
        assert sum(s <= artifact.region.threshold for s in scores) == 96

    def test_single_validation_trajectory_is_uninformative(self):
        predictor, val, probe = controlled_setup([1.0], [1.0])
        artifact = calibrate_direct(predictor, val, GUARD, tau0=0, t=0, delta=0.05)
        assert artifact.region.rank == 2
        assert artifact.region.threshold == INF
        verdict = verify_direct(probe, predictor, GUARD, 0, artifact)
        assert not verdict.guaranteed

    def test_infinite_robustness_rejected(self):
        predictor, val, _ = controlled_setup([1.0, 2.0], [1.0, 2.0])
        top_true = parse("True")
        with pytest.raises(HorizonError):
            # True has length 0, so nothing to predict at t=0
            calibrate_direct(predictor, val, top_true, tau0=0, t=0, delta=0.1)
        unbounded_rho = parse("True || (x1 >= 0) U[0,1] (x1 >= 0)", ["x1"])
        with pytest.raises(CalibrationError, match="finite"):
            calibrate_direct(predictor, val, unbounded_rho, tau0=0, t=0, delta=0.1)

    def test_horizon_not_positive_raises(self):
        predictor, val, _ = controlled_setup([1.0], [1.0])
        with pytest.raises(HorizonError):
            calibrate_direct(predictor, val, GUARD, tau0=0, t=5, delta=0.1)


class TestVerifyDirect:
    def test_decision_rule(self):
        predictor, val, probe = controlled_setup(
            [0.0, 0.1, -0.1, 0.2, 0.05], [1.0, 1.2, 0.9, 1.3, 1.1],
            test_prediction=3.2,
        )
        artifact = calibrate_direct(predictor, val, GUARD, tau0=0, t=0, delta=0.4)
        # p = ceil(6 * 0.6) = 4 -> fourth smallest of the five scores
        assert artifact.region.rank == 4
        assert artifact.region.threshold == pytest.approx(1.1)
        verdict = verify_direct(probe, predictor, GUARD, 0, artifact)
        assert verdict.robustness == pytest.approx(3.2)
        assert verdict.guaranteed

    def test_boundary_is_not_guaranteed(self):
        """rho equal to C fails the strict comparison."""
        artifact = CalibrationArtifact(
            method="direct", delta=0.05, t=0, tau0=0, horizon=1,
            formula_hash=formula_hash(GUARD),
            region=RegionConstant(1.0, 1, 1, 0.05),
        )
        predictor, _, probe = controlled_setup([], [], test_prediction=1.0)
        verdict = verify_direct(probe, predictor, GUARD, 0, artifact)
        assert verdict.robustness == pytest.approx(1.0)
        assert not verdict.guaranteed

    def test_formula_hash_binding(self):
        predictor, val, probe = controlled_setup([0.1, 0.2], [0.1, 0.2])
        artifact = calibrate_direct(predictor, val, GUARD, tau0=0, t=0, delta=0.3)
        other = parse("G[0,1](x1 >= 5)", ["x1"])
        with pytest.raises(MetadataMismatch, match="different formula"):
            verify_direct(probe, predictor, other, 0, artifact)

    def test_current_time_binding(self):
        predictor, val, _ = controlled_setup([0.1, 0.2], [0.1, 0.2])
        artifact = calibrate_direct(predictor, val, GUARD, tau0=0, t=0, delta=0.3)
        longer_prefix = Trajectory("probe", np.array([[100.0], [100.0]]))
        with pytest.raises(MetadataMismatch, match="current time"):
            verify_direct(longer_prefix, predictor, GUARD, 1, artifact)

    def test_method_binding(self):
        predictor, val, probe = controlled_setup([0.1, 0.2], [0.1, 0.2])
        artifact = calibrate_indirect(predictor, val, t=0, horizon=1, delta=0.3,
                                      formula=GUARD_PNF, tau0=0)
        with pytest.raises(MetadataMismatch, match="method"):
            verify_direct(probe, predictor, GUARD, 0, artifact)


class TestIndirect:
    def test_zero_radii_reduce_to_predicted_robustness(self):
        values = [0.5, 1.5, 0.25, 2.0, 0.75, 1.0]
        predictor, val, probe = controlled_setup(values, values, test_prediction=0.8)
        artifact = calibrate_indirect(
            predictor, val, t=0, horizon=1, delta=0.4, formula=GUARD_PNF, tau0=0
        )
        assert all(r.threshold == 0.0 for r in artifact.regions.values())
        verdict = verify_indirect(probe, predictor, GUARD_PNF, 0, artifact)
        predicted = predictor.predicted_trajectory(probe, 1)
        assert verdict.robustness == eval_robust(GUARD_PNF, predicted, 0)
        assert verdict.guaranteed

    def test_infinite_region_never_certifies(self):
        predictor, val, probe = controlled_setup([1.0], [1.0], test_prediction=50.0)
        artifact = calibrate_indirect(
            predictor, val, t=0, horizon=1, delta=0.05, formula=GUARD_PNF, tau0=0
        )
        assert artifact.any_infinite
        verdict = verify_indirect(probe, predictor, GUARD_PNF, 0, artifact)
        assert verdict.robustness == -INF
        assert not verdict.guaranteed

    def test_rejects_formulas_with_negations(self):
        predictor, val, probe = controlled_setup([0.1, 0.2], [0.1, 0.2])
        negated = parse("!F[0,1](x1 < 0)", ["x1"])
        artifact = calibrate_indirect(predictor, val, t=0, horizon=1, delta=0.3)
        with pytest.raises(NotInPositiveNormalForm):
            verify_indirect(probe, predictor, negated, 0, artifact)

    def test_worst_case_never_exceeds_predicted(self):
        """Paired comparison on a noisy system: rho_bar <= rho_hat pointwise."""
        rng = np.random.default_rng(41)
        trajs = [
            Trajectory(f"n-{i}", 2.0 + 0.3 * rng.standard_normal((12, 1)))
            for i in range(120)
        ]
        train, val, test = trajs[:40], trajs[40:100], trajs[100:]
        f = parse("G[0,4](x1 >= 0.5)", ["x1"])
        f_pnf = to_pnf(f)
        t, tau0 = 6, 6  # H = 4
        predictor = fit_ar(train, order=1, t=t, horizon=4)
        direct = calibrate_direct(predictor, val, f, tau0, t, 0.1)
        indirect = calibrate_indirect(predictor, val, t, 4, 0.1, formula=f_pnf, tau0=tau0)
        for traj in test:
            prefix = traj.states[: t + 1]
            d = verify_direct(prefix, predictor, f, tau0, direct)
            i = verify_indirect(prefix, predictor, f_pnf, tau0, indirect)
            assert i.robustness <= d.robustness + 1e-12

    def test_predicate_bounds_exposed(self):
        predictor, val, probe = controlled_setup([0.5, 0.6, 0.7], [0.5, 0.6, 0.7])
        artifact = calibrate_indirect(
            predictor, val, t=0, horizon=1, delta=0.5, formula=GUARD_PNF, tau0=0
        )
        verdict = verify_indirect(probe, predictor, GUARD_PNF, 0, artifact)
        assert verdict.predicate_bounds is not None
        (per_step,) = verdict.predicate_bounds.values()
        assert set(per_step) == {1}


class TestObservedOnly:
    def test_guaranteed_iff_positive_with_zero_delta(self):
        f = parse("G[0,2](x1 >= 0)", ["x1"])
        prefix = np.array([[1.0], [2.0], [0.5], [9.0]])
        verdict = verify_observed(prefix, f, tau0=0)
        assert verdict.method == "observed"
        assert verdict.delta == 0.0
        assert verdict.robustness == 0.5
        assert verdict.guaranteed
        failing = np.array([[1.0], [-2.0], [0.5], [9.0]])
        assert not verify_observed(failing, f, tau0=0).guaranteed

    def test_rejects_positive_horizon(self):
        f = parse("G[0,9](x1 >= 0)", ["x1"])
        with pytest.raises(HorizonError):
            verify_observed(np.ones((3, 1)), f, tau0=0)

    def test_run_verification_bypasses_prediction(self):
        f = parse("G[0,2](x1 >= 0)", ["x1"])
        prefix = np.ones((5, 1))
        verdict, artifact = run_verification(
            "direct", None, [], f, tau0=0, t=4, delta=0.05, x_obs=prefix
        )
        assert artifact is None
        assert verdict.method == "observed"
        assert verdict.guaranteed


class TestMinDeltaSearch:
    def test_perfect_predictor_returns_grid_minimum(self):
        values = [0.5, 1.5, 0.25, 2.0, 0.75]
        predictor, val, probe = controlled_setup(values, values, test_prediction=2.0)
        result = min_delta_search(
            "direct", predictor, val, GUARD, 0, 0, [0.2, 0.3, 0.5], probe
        )
        assert result is not None
        assert result[0] == 0.2

    def test_no_certifying_delta(self):
        predictor, val, probe = controlled_setup(
            [0.0] * 5, [9.0] * 5, test_prediction=1.0
        )
        result = min_delta_search(
            "direct", predictor, val, GUARD, 0, 0, [0.05, 0.1, 0.2], probe
        )
        assert result is None

    def test_flip_point_matches_per_delta_sweep(self):
        """Guarantee flips between grid points exactly where C crosses rho."""
        scores = [0.0] * 18 + [5.0, 6.0]
        predictor, val, probe = controlled_setup(
            np.zeros(20), np.array(scores), test_prediction=1.0
        )
        grid = [0.05, 0.1, 0.2]
        # sweep oracle: calibrate and verify each grid value independently
        flags = []
        for delta in grid:
            artifact = calibrate_direct(predictor, val, GUARD, 0, 0, delta)
            flags.append(
                verify_direct(probe, predictor, GUARD, 0, artifact).guaranteed
            )
        assert flags == [False, False, True]  # monotone flip
        result = min_delta_search("direct", predictor, val, GUARD, 0, 0, grid, probe)
        assert result is not None
        assert result[0] == 0.2

    def test_empty_grid_rejected(self):
        predictor, val, probe = controlled_setup([0.1], [0.1])
        with pytest.raises(CalibrationError, match="empty"):
            min_delta_search("direct", predictor, val, GUARD, 0, 0, [], probe)

    def test_out_of_range_grid_value(self):
        predictor, val, probe = controlled_setup([0.1], [0.1])
        with pytest.raises(CalibrationError):
            min_delta_search("direct", predictor, val, GUARD, 0, 0, [0.0, 0.5], probe)


class TestStatisticalValidity:
    """Marginal guarantees checked by Monte-Carlo on the real pipeline."""

    def _score_pool(self):
        rng = np.random.default_rng(61)
        trajs = [
            Trajectory(f"p-{i}", 2.0 + 0.4 * rng.standard_normal((12, 1)))
            for i in range(1500)
        ]
        f = parse("G[0,4](x1 >= 0.5)", ["x1"])
        t = tau0 = 6
        predictor = fit_ar(trajs[:100], order=1, t=t, horizon=4)
        scores = []
        for traj in trajs[100:]:
            predicted = predictor.predicted_trajectory(traj, 4)
            scores.append(
                eval_robust(f, predicted, tau0) - eval_robust(f, traj.signal(), tau0)
            )
        return np.asarray(scores)

    def test_direct_coverage_over_resampled_calibrations(self):
        """Fraction of fresh scores below C stays within 0.03 of nominal."""
        pool = self._score_pool()
        rng = np.random.default_rng(62)
        k, delta, reps = 100, 0.1, 10_000
        p = 91  # ceil((k+1)(1-delta))
        hits = 0
        for _ in range(reps):
            idx = rng.choice(pool.shape[0], size=k + 1, replace=False)
            cal = np.sort(pool[idx[:k]])
            hits += pool[idx[k]] <= cal[p - 1]
        frequency = hits / reps
        assert frequency >= 1 - delta - 0.03

    def test_direct_soundness_on_large_test_set(self):
        """Among guaranteed verdicts, the violation fraction respects the bound."""
        rng = np.random.default_rng(63)
        trajs = [
            Trajectory(f"s-{i}", 2.0 + 0.4 * rng.standard_normal((12, 1)))
            for i in range(1900)
        ]
        f = parse("G[0,4](x1 >= 0.5)", ["x1"])
        t = tau0 = 6
        delta = 0.05
        predictor = fit_ar(trajs[:400], order=1, t=t, horizon=4)
        artifact = calibrate_direct(predictor, trajs[400:900], f, tau0, t, delta)
        guaranteed = violated = 0
        from prvkit.semantics import eval_bool

        for traj in trajs[900:]:
            verdict = verify_direct(traj.states[: t + 1], predictor, f, tau0, artifact)
            if verdict.guaranteed:
                guaranteed += 1
                if not eval_bool(f, traj.signal(), tau0):
                    violated += 1
        assert guaranteed > 0
        n = 1000
        assert violated / guaranteed <= delta + 3 * math.sqrt(delta / n)

    def test_indirect_guarantee_implies_positive_bound(self):
        """A guaranteed indirect verdict always rests on a positive worst case."""
        rng = np.random.default_rng(64)
        trajs = [
            Trajectory(f"i-{i}", 2.0 + 0.2 * rng.standard_normal((12, 1)))
            for i in range(800)
        ]
        f = parse("G[0,4](x1 >= 0.5)", ["x1"])
        f_pnf = to_pnf(f)
        t = tau0 = 6
        predictor = fit_ar(trajs[:150], order=1, t=t, horizon=4)
        artifact = calibrate_indirect(
            predictor, trajs[150:650], t, 4, 0.2, formula=f_pnf, tau0=tau0
        )
        from prvkit.semantics import eval_bool

        guaranteed = violated = 0
        for traj in trajs[650:]:
            verdict = verify_indirect(traj.states[: t + 1], predictor, f_pnf, tau0, artifact)
            assert verdict.guaranteed == (verdict.robustness > 0)
            if verdict.guaranteed:
                guaranteed += 1
                violated += not eval_bool(f, traj.signal(), tau0)
        if guaranteed:
            assert violated / guaranteed <= 0.2 + 3 * math.sqrt(0.2 / 150)


class TestEnableTimeAfterCurrent:
    def test_specification_enabled_in_the_future(self):
        """tau0 > t: the horizon stretches to tau0 + L - t."""
        rng = np.random.default_rng(65)
        trajs = [
            Trajectory(f"f-{i}", 1.0 + 0.1 * rng.standard_normal((10, 1)))
            for i in range(60)
        ]
        f = parse("G[0,2](x1 >= 0.2)", ["x1"])
        t, tau0 = 3, 5  # H = 5 + 2 - 3 = 4
        predictor = fit_ar(trajs[:20], order=1, t=t, horizon=4)
        artifact = calibrate_direct(predictor, trajs[20:50], f, tau0, t, 0.2)
        assert artifact.horizon == 4
        verdict = verify_direct(trajs[50].states[: t + 1], predictor, f, tau0, artifact)
        assert verdict.horizon == 4
        assert verdict.tau0 == 5


class TestVerdictRecord:
    def test_line_format(self):
        predictor, val, probe = controlled_setup([0.1, 0.2, 0.3], [0.1, 0.2, 0.3])
        artifact = calibrate_direct(predictor, val, GUARD, 0, 0, 0.4)
        verdict = verify_direct(probe, predictor, GUARD, 0, artifact)
        line = verdict_record(verdict)
        fields = dict(part.split("=", 1) for part in line.split(" "))
        assert fields["method"] == "direct"
        assert fields["guaranteed"] in ("true", "false")
        assert fields["t"] == "0"
        assert fields["H"] == "1"
        assert fields["formula_hash"] == formula_hash(GUARD)
        assert float(fields["delta"]) == 0.4
