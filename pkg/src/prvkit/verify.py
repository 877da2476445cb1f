"""Calibration and verdict issuance.

Two routes to a probabilistic verdict on a partially observed trajectory:

* direct -- calibrate a region constant C for the error of the predicted
  robustness; the verdict is guaranteed when the predicted robustness
  strictly exceeds C.
* indirect -- calibrate per-step regions for the state prediction error
  (failure probability split uniformly across the horizon), then lower-
  bound the robustness by evaluating the worst case over those balls; the
  verdict is guaranteed when that bound is strictly positive.

Both certify P(trajectory satisfies the formula) >= 1 - delta when
guaranteed.  A region is bound to the formula text hash, current time, and
horizon it was calibrated for; verifying against anything else is refused.
"""

import math
from dataclasses import dataclass, field

from .conformal import (
    CalibrationArtifact,
    RegionConstant,
    ScoreSet,
    direct_score,
    quantile_region,
    state_scores,
    timewise_regions,
)
from .errors import CalibrationError, HorizonError, MetadataMismatch
from .formulas import Formula, atoms, formula_hash, formula_length, to_pnf
from .predicates import L2
from .semantics import BallFamily, Signal, as_signal, eval_robust, eval_worst_case, inf_ball
from .predictors import Predictor, Trajectory


@dataclass(frozen=True)
class Verdict:
    """Outcome of one verification call.

    ``robustness`` is the predicted robustness (direct), the worst-case
    lower bound (indirect), or the exact observed robustness when no
    prediction was needed.  ``guaranteed`` certifies satisfaction with
    probability at least 1 - delta.
    """

    method: str  # "direct" | "indirect" | "observed"
    robustness: float
    guaranteed: bool
    delta: float
    t: int
    tau0: int
    horizon: int
    formula_hash: str
    region: RegionConstant | None = None
    regions: dict[int, RegionConstant] | None = None
    predicate_bounds: dict[str, dict[int, float]] | None = field(default=None, compare=False)


def _observed_prefix(x_obs) -> Signal:
    if isinstance(x_obs, Trajectory):
        return x_obs.signal()
    return as_signal(x_obs)


def _horizon_for(formula: Formula, tau0: int, t: int) -> int:
    return tau0 + formula_length(formula) - t


def _check_traj_lengths(trajectories, needed: int, what: str):
    for traj in trajectories:
        if len(traj) < needed:
            raise CalibrationError(
                f"{what} trajectory {traj.traj_id!r} has {len(traj)} steps, needs {needed}"
            )


def calibrate_direct(
    predictor: Predictor,
    val,
    formula: Formula,
    tau0: int,
    t: int,
    delta: float,
) -> CalibrationArtifact:
    """Region constant for the robustness prediction error on validation data."""
    horizon = _horizon_for(formula, tau0, t)
    if horizon <= 0:
        raise HorizonError(
            f"horizon {horizon} <= 0: the formula is decidable from observations alone"
        )
    val = list(val)
    _check_traj_lengths(val, tau0 + formula_length(formula) + 1, "validation")
    scores = []
    for traj in val:
        predicted = predictor.predicted_trajectory(traj, horizon)
        rho_pred = eval_robust(formula, predicted, tau0)
        rho_true = eval_robust(formula, traj.signal(), tau0)
        scores.append(direct_score(rho_pred, rho_true))
    region = quantile_region(ScoreSet(scores), delta)
    return CalibrationArtifact(
        method="direct",
        delta=delta,
        t=t,
        tau0=tau0,
        horizon=horizon,
        formula_hash=formula_hash(formula),
        region=region,
    )


def calibrate_indirect(
    predictor: Predictor,
    val,
    t: int,
    horizon: int,
    delta: float,
    norm: str = L2,
    formula: Formula | None = None,
    tau0: int | None = None,
) -> CalibrationArtifact:
    """Per-step region constants for the state prediction error.

    The regions do not depend on any formula; passing one stamps its hash
    into the artifact so later verdicts are checked against it.
    """
    if horizon <= 0:
        raise HorizonError(f"horizon must be >= 1, got {horizon}")
    val = list(val)
    _check_traj_lengths(val, t + horizon + 1, "validation")
    per_step_scores: list[list[float]] = [[] for _ in range(horizon)]
    for traj in val:
        predicted = predictor.predict(traj, horizon)
        for j, r in enumerate(state_scores(traj, predicted, t, horizon, norm)):
            per_step_scores[j].append(r)
    regions = timewise_regions([ScoreSet(s) for s in per_step_scores], delta, horizon)
    return CalibrationArtifact(
        method="indirect",
        delta=delta,
        t=t,
        tau0=t if tau0 is None else tau0,
        horizon=horizon,
        formula_hash=formula_hash(formula) if formula is not None else None,
        norm=norm,
        regions={t + 1 + j: region for j, region in enumerate(regions)},
    )


def _check_binding(artifact: CalibrationArtifact, formula: Formula, tau0: int, t: int,
                   method: str):
    if artifact.method != method:
        raise MetadataMismatch(
            f"calibration is for the {artifact.method} method, not {method}"
        )
    if artifact.formula_hash is not None and artifact.formula_hash != formula_hash(formula):
        raise MetadataMismatch(
            "calibration was produced for a different formula "
            f"(hash {artifact.formula_hash}, formula hashes to {formula_hash(formula)})"
        )
    if artifact.t != t:
        raise MetadataMismatch(
            f"calibration was produced for current time t={artifact.t}, prefix ends at t={t}"
        )
    needed = _horizon_for(formula, tau0, t)
    if needed > artifact.horizon:
        raise MetadataMismatch(
            f"calibration covers horizon {artifact.horizon}, formula needs {needed}"
        )


def verify_direct(
    x_obs,
    predictor: Predictor,
    formula: Formula,
    tau0: int,
    artifact: CalibrationArtifact,
) -> Verdict:
    """Verdict from the calibrated robustness-error region.

    Guaranteed iff the predicted robustness strictly exceeds the region
    constant; an infinite constant never certifies.
    """
    obs = _observed_prefix(x_obs)
    t = len(obs) - 1
    _check_binding(artifact, formula, tau0, t, "direct")
    horizon = artifact.horizon
    predicted = predictor.predicted_trajectory(x_obs, horizon)
    rho_pred = eval_robust(formula, predicted, tau0)
    c = artifact.region.threshold
    return Verdict(
        method="direct",
        robustness=rho_pred,
        guaranteed=bool(rho_pred > c),
        delta=artifact.delta,
        t=t,
        tau0=tau0,
        horizon=horizon,
        formula_hash=formula_hash(formula),
        region=artifact.region,
    )


def verify_indirect(
    x_obs,
    predictor: Predictor,
    formula_pnf: Formula,
    tau0: int,
    artifact: CalibrationArtifact,
) -> Verdict:
    """Verdict from the worst case over calibrated state-error balls.

    The formula must be negation-free.  The verdict also reports, for every
    atom, its worst-case value at each predicted step, which points at the
    parts of the formula that drive a failure to certify.
    """
    obs = _observed_prefix(x_obs)
    t = len(obs) - 1
    _check_binding(artifact, formula_pnf, tau0, t, "indirect")
    horizon = artifact.horizon
    predicted = predictor.predicted_trajectory(x_obs, horizon)
    radii = {tau: region.threshold for tau, region in artifact.regions.items()}
    missing = [tau for tau in range(t + 1, t + horizon + 1) if tau not in radii]
    if missing:
        raise MetadataMismatch(f"calibration lacks region constants for steps {missing}")
    balls = BallFamily(predicted, t, radii, artifact.norm or L2)
    rho_bar = eval_worst_case(formula_pnf, balls, tau0)
    bounds: dict[str, dict[int, float]] = {}
    for atom in atoms(formula_pnf):
        if atom.label in bounds:
            continue
        pred = atom.predicate()
        bounds[atom.label] = {
            tau: inf_ball(pred, predicted.state(tau), radii[tau], artifact.norm or L2)
            for tau in range(t + 1, t + horizon + 1)
        }
    return Verdict(
        method="indirect",
        robustness=rho_bar,
        guaranteed=bool(rho_bar > 0.0),
        delta=artifact.delta,
        t=t,
        tau0=tau0,
        horizon=horizon,
        formula_hash=formula_hash(formula_pnf),
        regions=dict(artifact.regions),
        predicate_bounds=bounds,
    )


def verify_observed(x_obs, formula: Formula, tau0: int) -> Verdict:
    """Exact verdict when the formula is decidable from observations alone.

    No prediction region is involved, so the reported failure probability
    is zero and the verdict is guaranteed iff the robustness is strictly
    positive.
    """
    obs = _observed_prefix(x_obs)
    t = len(obs) - 1
    horizon = _horizon_for(formula, tau0, t)
    if horizon > 0:
        raise HorizonError(
            f"horizon {horizon} > 0: the formula still depends on unobserved states"
        )
    rho = eval_robust(formula, obs, tau0)
    return Verdict(
        method="observed",
        robustness=rho,
        guaranteed=bool(rho > 0.0),
        delta=0.0,
        t=t,
        tau0=tau0,
        horizon=horizon,
        formula_hash=formula_hash(formula),
    )


def run_verification(
    method: str,
    predictor: Predictor,
    val,
    formula: Formula,
    tau0: int,
    t: int,
    delta: float,
    x_obs,
    norm: str = L2,
) -> tuple[Verdict, CalibrationArtifact | None]:
    """Calibrate on validation data and verify one observed prefix.

    Falls back to exact evaluation when the horizon is not positive.
    """
    if _horizon_for(formula, tau0, t) <= 0:
        return verify_observed(x_obs, formula, tau0), None
    if method == "direct":
        artifact = calibrate_direct(predictor, val, formula, tau0, t, delta)
        return verify_direct(x_obs, predictor, formula, tau0, artifact), artifact
    if method == "indirect":
        f_pnf = to_pnf(formula)
        artifact = calibrate_indirect(
            predictor, val, t, _horizon_for(formula, tau0, t), delta, norm, formula=f_pnf, tau0=tau0
        )
        return verify_indirect(x_obs, predictor, f_pnf, tau0, artifact), artifact
    raise ValueError(f"unknown method {method!r}")


def min_delta_search(
    method: str,
    predictor: Predictor,
    val,
    formula: Formula,
    tau0: int,
    t: int,
    grid,
    x_obs,
    norm: str = L2,
) -> tuple[float, Verdict] | None:
    """Smallest failure probability on the grid whose verdict is guaranteed.

    Recalibrates and verifies per candidate, smallest first; region
    constants shrink as delta grows, so the first guaranteed verdict is the
    tightest.  Returns None when no candidate certifies.
    """
    grid = sorted(grid)
    if not grid:
        raise CalibrationError("the failure-probability grid is empty")
    for delta in grid:
        if not 0.0 < delta < 1.0:
            raise CalibrationError(f"grid value {delta} outside (0, 1)")
    for delta in grid:
        verdict, _ = run_verification(
            method, predictor, val, formula, tau0, t, delta, x_obs, norm
        )
        if verdict.guaranteed:
            return delta, verdict
    return None


def _fmt_float(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def verdict_record(verdict: Verdict, extra: dict | None = None) -> str:
    """One-line machine-readable rendering of a verdict."""
    if verdict.method == "indirect" and verdict.regions is not None:
        finite = [r.threshold for r in verdict.regions.values() if r.finite]
        region_repr = "inf" if len(finite) < len(verdict.regions) else repr(max(finite))
    elif verdict.region is not None:
        region_repr = "inf" if not verdict.region.finite else repr(verdict.region.threshold)
    else:
        region_repr = "none"
    fields = {
        "method": verdict.method,
        "delta": repr(verdict.delta),
        "rho": _fmt_float(verdict.robustness),
        "region": region_repr,
        "guaranteed": "true" if verdict.guaranteed else "false",
        "t": verdict.t,
        "tau0": verdict.tau0,
        "H": verdict.horizon,
        "formula_hash": verdict.formula_hash,
    }
    if extra:
        fields.update(extra)
    return " ".join(f"{k}={v}" for k, v in fields.items())
