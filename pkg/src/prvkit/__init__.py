"""Predictive runtime verification of discrete-time stochastic signals.

Monitor partially observed trajectories against bounded temporal
specifications: predict the unobserved suffix, calibrate the predictor's
error with split conformal prediction, and issue verdicts that certify
satisfaction with a user-chosen failure probability.
"""

__version__ = "0.1.0"

from .conformal import (
    CalibrationArtifact,
    RegionConstant,
    ScoreSet,
    conformal_rank,
    direct_score,
    quantile_region,
    read_calibration,
    state_scores,
    timewise_regions,
    write_calibration,
)
from .errors import MonitorError
from .formulas import (
    Formula,
    HorizonSpec,
    Interval,
    bind,
    formula_hash,
    formula_length,
    horizon,
    is_bounded,
    is_pnf,
    render,
    to_pnf,
    truncate,
    truncate_to_length,
)
from .harness import EvalReport, SyntheticSystem, evaluate, generate, histogram_export, make_system
from .parsing import parse
from .predicates import AffinePredicate, ConstantPredicate, LipschitzPredicate
from .predictors import (
    DatasetSplit,
    Predictor,
    Trajectory,
    fit_ar,
    fit_hold_last,
    load_external,
    predict,
    split_dataset,
)
from .semantics import (
    BallFamily,
    Signal,
    eval_bool,
    eval_robust,
    eval_worst_case,
    inf_ball,
)
from .verify import (
    Verdict,
    calibrate_direct,
    calibrate_indirect,
    min_delta_search,
    run_verification,
    verify_direct,
    verify_indirect,
    verify_observed,
)

__all__ = [
    "AffinePredicate",
    "BallFamily",
    "CalibrationArtifact",
    "ConstantPredicate",
    "DatasetSplit",
    "EvalReport",
    "Formula",
    "HorizonSpec",
    "Interval",
    "LipschitzPredicate",
    "MonitorError",
    "Predictor",
    "RegionConstant",
    "ScoreSet",
    "Signal",
    "SyntheticSystem",
    "Trajectory",
    "Verdict",
    "bind",
    "calibrate_direct",
    "calibrate_indirect",
    "conformal_rank",
    "direct_score",
    "eval_bool",
    "eval_robust",
    "eval_worst_case",
    "evaluate",
    "fit_ar",
    "fit_hold_last",
    "formula_hash",
    "formula_length",
    "generate",
    "histogram_export",
    "horizon",
    "inf_ball",
    "is_bounded",
    "is_pnf",
    "load_external",
    "make_system",
    "min_delta_search",
    "parse",
    "predict",
    "quantile_region",
    "read_calibration",
    "render",
    "run_verification",
    "split_dataset",
    "state_scores",
    "timewise_regions",
    "to_pnf",
    "truncate",
    "truncate_to_length",
    "verify_direct",
    "verify_indirect",
    "verify_observed",
    "write_calibration",
]
