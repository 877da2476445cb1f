"""HTTP service wrapping the verification pipeline.

Long-running deployments fit predictors and calibrate regions once, then
serve verdicts for observed prefixes as they arrive.  Fitted predictors and
calibration artifacts live in an in-process registry keyed by short ids.

Run with ``uvicorn prvkit.service:app``.
"""

import itertools
import math

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__
from ..conformal import CalibrationArtifact, RegionConstant
from ..errors import MonitorError
from ..formulas import bind, formula_hash, formula_length, is_bounded, render, to_pnf, variable_names
from ..harness import evaluate as run_evaluate
from ..harness import make_system
from ..parsing import parse
from ..predictors import Trajectory, fit_ar, fit_hold_last
from ..verify import (
    Verdict,
    calibrate_direct,
    calibrate_indirect,
    min_delta_search,
    verdict_record,
    verify_direct,
    verify_indirect,
    verify_observed,
)
from . import schemas


def _trajectories(items) -> list[Trajectory]:
    return [Trajectory(item.id, np.asarray(item.states, dtype=float)) for item in items]


def _resolve_tau0(value, t: int) -> int:
    if value == "zero":
        return 0
    if value == "current":
        return t
    return int(value)


def _bind_formula(text: str, dim: int):
    f = parse(text)
    names = variable_names(f)
    default_names = [f"x{i + 1}" for i in range(dim)]
    if all(n in default_names for n in names):
        return bind(f, default_names)
    if len(names) == dim:
        return bind(f, names)
    raise MonitorError(
        f"cannot map formula components {names} onto a {dim}-dimensional state; "
        f"name them {default_names} or use one name per dimension"
    )


def _region_out(region: RegionConstant) -> schemas.RegionOut:
    return schemas.RegionOut(
        threshold=region.threshold if region.finite else None,
        rank=region.rank,
        sample_size=region.sample_size,
        delta=region.delta,
    )


def _verdict_out(verdict: Verdict) -> schemas.VerifyResponse:
    rho = verdict.robustness
    bounds = None
    if verdict.predicate_bounds is not None:
        bounds = {
            label: {
                tau: (None if math.isinf(v) else v) for tau, v in per_step.items()
            }
            for label, per_step in verdict.predicate_bounds.items()
        }
    return schemas.VerifyResponse(
        method=verdict.method,
        robustness=None if math.isinf(rho) else rho,
        robustness_infinite=0 if math.isfinite(rho) else (1 if rho > 0 else -1),
        guaranteed=verdict.guaranteed,
        delta=verdict.delta,
        t=verdict.t,
        tau0=verdict.tau0,
        horizon=verdict.horizon,
        formula_hash=verdict.formula_hash,
        predicate_bounds=bounds,
        record=verdict_record(verdict),
    )


def create_app() -> FastAPI:
    app = FastAPI(
        title="prvkit",
        version=__version__,
        description="Predictive runtime verification with conformal prediction regions",
    )
    predictors: dict[str, object] = {}
    calibrations: dict[str, tuple[CalibrationArtifact, object, object]] = {}
    counter = itertools.count(1)

    @app.exception_handler(MonitorError)
    async def monitor_error(request, exc: MonitorError):
        from fastapi.responses import JSONResponse

        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/formulas/check", response_model=schemas.CheckResponse)
    def check(req: schemas.CheckRequest):
        f = parse(req.formula)
        bounded = is_bounded(f)
        return schemas.CheckResponse(
            formula=render(f),
            bounded=bounded,
            length=formula_length(f) if bounded else None,
            pnf=render(to_pnf(f)),
            formula_hash=formula_hash(f),
            components=variable_names(f),
        )

    @app.post("/predictors/fit", response_model=schemas.FitResponse)
    def fit(req: schemas.FitRequest):
        trajs = _trajectories(req.trajectories)
        if not trajs:
            raise MonitorError("no training trajectories supplied")
        dim = trajs[0].dim
        horizon = req.horizon
        if horizon is None:
            if req.formula is None:
                raise MonitorError("supply either a horizon or a formula to derive it from")
            f = _bind_formula(req.formula, dim)
            tau0 = _resolve_tau0(req.tau0, req.t)
            horizon = tau0 + formula_length(f) - req.t
            if horizon <= 0:
                raise MonitorError(
                    f"derived horizon {horizon} <= 0: nothing to predict at t={req.t}"
                )
        if req.kind == "ar":
            predictor = fit_ar(trajs, req.order, req.t, horizon)
        elif req.kind == "hold-last":
            predictor = fit_hold_last(req.t, horizon, dim)
        else:
            raise MonitorError(f"unknown predictor kind {req.kind!r}")
        predictor_id = f"pred-{next(counter):04d}"
        predictors[predictor_id] = predictor
        return schemas.FitResponse(
            predictor_id=predictor_id,
            kind=predictor.kind,
            t=predictor.t,
            horizon=predictor.horizon_max,
            dim=predictor.dim,
        )

    @app.post("/calibrations", response_model=schemas.CalibrateResponse)
    def calibrate(req: schemas.CalibrateRequest):
        predictor = predictors.get(req.predictor_id)
        if predictor is None:
            raise HTTPException(404, f"unknown predictor id {req.predictor_id!r}")
        trajs = _trajectories(req.trajectories)
        if not trajs:
            raise MonitorError("no validation trajectories supplied")
        f = _bind_formula(req.formula, trajs[0].dim)
        t = predictor.t
        tau0 = _resolve_tau0(req.tau0, t)
        if req.method == "direct":
            artifact = calibrate_direct(predictor, trajs, f, tau0, t, req.delta)
            formula_for_verify = f
        elif req.method == "indirect":
            f_pnf = to_pnf(f)
            horizon = tau0 + formula_length(f) - t
            artifact = calibrate_indirect(
                predictor, trajs, t, horizon, req.delta, req.norm,
                formula=f_pnf, tau0=tau0,
            )
            formula_for_verify = f_pnf
        else:
            raise MonitorError(f"unknown method {req.method!r}")
        calibration_id = f"cal-{next(counter):04d}"
        calibrations[calibration_id] = (artifact, predictor, formula_for_verify)
        return schemas.CalibrateResponse(
            calibration_id=calibration_id,
            method=artifact.method,
            delta=artifact.delta,
            t=artifact.t,
            tau0=artifact.tau0,
            horizon=artifact.horizon,
            formula_hash=artifact.formula_hash,
            norm=artifact.norm,
            region=_region_out(artifact.region) if artifact.region else None,
            regions=(
                {tau: _region_out(r) for tau, r in artifact.regions.items()}
                if artifact.regions
                else None
            ),
            any_infinite=artifact.any_infinite,
        )

    @app.post("/verdicts", response_model=schemas.VerifyResponse)
    def verify(req: schemas.VerifyRequest):
        entry = calibrations.get(req.calibration_id)
        if entry is None:
            raise HTTPException(404, f"unknown calibration id {req.calibration_id!r}")
        artifact, predictor, formula = entry
        prefix = np.asarray(req.prefix, dtype=float)
        if artifact.method == "direct":
            verdict = verify_direct(prefix, predictor, formula, artifact.tau0, artifact)
        else:
            verdict = verify_indirect(prefix, predictor, formula, artifact.tau0, artifact)
        return _verdict_out(verdict)

    @app.post("/verdicts/observed", response_model=schemas.VerifyResponse)
    def verify_from_observations(req: schemas.ObservedVerifyRequest):
        prefix = np.asarray(req.prefix, dtype=float)
        if prefix.ndim == 1:
            prefix = prefix.reshape(-1, 1)
        f = _bind_formula(req.formula, prefix.shape[1])
        tau0 = _resolve_tau0(req.tau0, prefix.shape[0] - 1)
        verdict = verify_observed(prefix, f, tau0)
        return _verdict_out(verdict)

    @app.post("/evaluate", response_model=schemas.EvaluateResponse)
    def evaluate_endpoint(req: schemas.EvaluateRequest):
        overrides = {}
        if req.noise_scale is not None:
            overrides["noise_scale"] = req.noise_scale
        if req.length is not None:
            overrides["length"] = req.length
        system = make_system(req.system, **overrides)
        f = _bind_formula(req.formula, system.dim)
        tau0 = _resolve_tau0(req.tau0, req.t)
        predictor_kind, ar_order = "ar", 2
        if req.predictor.startswith("ar"):
            ar_order = int(req.predictor.split(":", 1)[1]) if ":" in req.predictor else 2
        elif req.predictor == "hold-last":
            predictor_kind = "hold-last"
        else:
            raise MonitorError(f"evaluate supports ar:<order> or hold-last, not {req.predictor!r}")
        report = run_evaluate(
            method=req.method,
            system=system,
            formula=f,
            tau0=tau0,
            t=req.t,
            delta=req.delta,
            split_sizes=tuple(req.split),
            seed=req.seed,
            predictor_kind=predictor_kind,
            ar_order=ar_order,
            norm=req.norm,
        )
        gs, gv, ns, nv = report.counts
        return schemas.EvaluateResponse(
            method=report.method,
            delta=report.delta,
            n_test=report.n_test,
            guaranteed_satisfied=gs,
            guaranteed_violated=gv,
            not_guaranteed_satisfied=ns,
            not_guaranteed_violated=nv,
            coverage_count=report.coverage_count,
            coverage_fraction=report.coverage_fraction,
            region_infinite=report.region_infinite,
            histograms=[
                schemas.HistogramOut(
                    label=h.label,
                    bin_edges=list(h.bin_edges),
                    counts=list(h.counts),
                    marker=None if math.isinf(h.marker) else h.marker,
                )
                for h in report.histograms
            ],
        )

    @app.post("/min-delta", response_model=schemas.MinDeltaResponse)
    def min_delta(req: schemas.MinDeltaRequest):
        predictor = predictors.get(req.predictor_id)
        if predictor is None:
            raise HTTPException(404, f"unknown predictor id {req.predictor_id!r}")
        trajs = _trajectories(req.trajectories)
        if not trajs:
            raise MonitorError("no validation trajectories supplied")
        f = _bind_formula(req.formula, trajs[0].dim)
        tau0 = _resolve_tau0(req.tau0, req.t)
        prefix = np.asarray(req.prefix, dtype=float)
        result = min_delta_search(
            req.method, predictor, trajs, f, tau0, req.t, req.grid, prefix, req.norm
        )
        if result is None:
            return schemas.MinDeltaResponse(certified=False)
        delta, verdict = result
        return schemas.MinDeltaResponse(
            certified=True, delta=delta, verdict=_verdict_out(verdict)
        )

    return app


app = create_app()
