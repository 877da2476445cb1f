"""Nonconformity scores and split-conformal prediction regions.

Given k calibration scores drawn exchangeably with a fresh test score, the
region constant C is the p-th smallest calibration score with
p = ceil((k+1)(1-delta)); an implicit +inf sentinel occupies rank k+1, so
p > k yields an infinite (uninformative) region.  A fresh score then falls
at or below C with probability at least 1-delta.
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import CalibrationError, DataFormatError
from .predicates import NORMS, vector_norm

INF = math.inf


class ScoreSet:
    """Immutable collection of finite nonconformity scores."""

    __slots__ = ("_scores",)

    def __init__(self, scores: Iterable[float]):
        values = []
        for s in scores:
            s = float(s)
            if math.isnan(s) or math.isinf(s):
                raise CalibrationError(
                    f"nonconformity scores must be finite, got {s}"
                )
            values.append(s)
        self._scores = tuple(values)

    @property
    def scores(self) -> tuple[float, ...]:
        return self._scores

    def __len__(self) -> int:
        return len(self._scores)

    def sorted(self) -> list[float]:
        return sorted(self._scores)


@dataclass(frozen=True)
class RegionConstant:
    """A calibrated prediction-region constant and the rank that produced it."""

    threshold: float  # C; inf when the rank exceeds the sample size
    rank: int  # p
    sample_size: int  # k
    delta: float

    @property
    def finite(self) -> bool:
        return math.isfinite(self.threshold)


def conformal_rank(sample_size: int, delta: float) -> int:
    """p = ceil((k+1)(1-delta)), computed exactly for the given float delta."""
    if not 0.0 < delta < 1.0:
        raise CalibrationError(f"failure probability must lie in (0, 1), got {delta}")
    if sample_size < 0:
        raise CalibrationError("sample size must be >= 0")
    return math.ceil((sample_size + 1) * (1 - Fraction(delta)))


def quantile_region(scores: ScoreSet, delta: float) -> RegionConstant:
    """Region constant from calibration scores at failure probability delta.

    Duplicated scores keep their own ranks; when p exceeds the sample size
    the implicit +inf sentinel is selected.
    """
    k = len(scores)
    p = conformal_rank(k, delta)
    if p > k:
        return RegionConstant(INF, p, k, delta)
    return RegionConstant(scores.sorted()[p - 1], p, k, delta)


def direct_score(rho_pred: float, rho_true: float) -> float:
    """Signed error of the predicted robustness; positive means over-optimistic."""
    if not (math.isfinite(rho_pred) and math.isfinite(rho_true)):
        raise CalibrationError(
            "robustness values must be finite to calibrate; formulas whose robust "
            f"value is infinite cannot be scored (got {rho_pred}, {rho_true})"
        )
    return rho_pred - rho_true


def state_scores(
    actual,
    predicted,
    t: int,
    horizon: int,
    norm: str = "L2",
) -> list[float]:
    """Per-step prediction-error norms ||x_tau - xhat_tau|| for tau in t+1..t+H."""
    if norm not in NORMS:
        raise ValueError(f"unknown norm tag {norm!r}")
    actual = np.asarray(getattr(actual, "states", actual), dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if predicted.ndim == 1:
        predicted = predicted.reshape(-1, 1)
    if actual.ndim == 1:
        actual = actual.reshape(-1, 1)
    if predicted.shape[0] != horizon:
        raise CalibrationError(
            f"expected {horizon} predicted states, got {predicted.shape[0]}"
        )
    if actual.shape[0] < t + horizon + 1:
        raise CalibrationError(
            f"trajectory too short: need {t + horizon + 1} steps, have {actual.shape[0]}"
        )
    if actual.shape[1] != predicted.shape[1]:
        raise CalibrationError(
            f"state dimension mismatch: trajectory has {actual.shape[1]}, "
            f"predictions have {predicted.shape[1]}"
        )
    return [
        vector_norm(actual[t + 1 + j] - predicted[j], norm) for j in range(horizon)
    ]


def timewise_regions(
    score_sets: Sequence[ScoreSet], delta: float, horizon: int
) -> list[RegionConstant]:
    """Per-step region constants at the union-bound share delta/H each."""
    if horizon < 1:
        raise CalibrationError(f"horizon must be >= 1, got {horizon}")
    if len(score_sets) != horizon:
        raise CalibrationError(
            f"need one score set per step: expected {horizon}, got {len(score_sets)}"
        )
    if not 0.0 < delta < 1.0:
        raise CalibrationError(f"failure probability must lie in (0, 1), got {delta}")
    delta_bar = delta / horizon
    return [quantile_region(s, delta_bar) for s in score_sets]


@dataclass(frozen=True)
class CalibrationArtifact:
    """Self-describing record of a calibration run.

    ``region`` is set for the direct method, ``regions`` (keyed by absolute
    step) for the indirect one.  ``delta`` is the overall failure
    probability; per-step regions internally carry their delta/H share.
    """

    method: str  # "direct" | "indirect"
    delta: float
    t: int
    tau0: int
    horizon: int
    formula_hash: str | None = None
    norm: str | None = None
    region: RegionConstant | None = None
    regions: Mapping[int, RegionConstant] | None = None

    def __post_init__(self):
        if self.method not in ("direct", "indirect"):
            raise ValueError(f"unknown calibration method {self.method!r}")
        if self.method == "direct" and self.region is None:
            raise ValueError("direct artifact needs a region constant")
        if self.method == "indirect" and not self.regions:
            raise ValueError("indirect artifact needs per-step region constants")

    @property
    def any_infinite(self) -> bool:
        if self.method == "direct":
            return not self.region.finite
        return any(not r.finite for r in self.regions.values())


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def write_calibration(artifact: CalibrationArtifact, path) -> None:
    """Serialize as line-oriented ``key: value`` text; decimal fields round-trip exactly."""
    lines = [
        f"method: {artifact.method}",
        f"delta: {_fmt(artifact.delta)}",
        f"t: {artifact.t}",
        f"tau0: {artifact.tau0}",
        f"H: {artifact.horizon}",
    ]
    if artifact.formula_hash is not None:
        lines.append(f"formula_hash: {artifact.formula_hash}")
    if artifact.norm is not None:
        lines.append(f"norm: {artifact.norm}")
    if artifact.method == "direct":
        r = artifact.region
        lines += [f"k: {r.sample_size}", f"p: {r.rank}", f"C: {_fmt(r.threshold)}"]
    else:
        first = next(iter(artifact.regions.values()))
        lines += [f"k: {first.sample_size}", f"p: {first.rank}"]
        for tau in sorted(artifact.regions):
            lines.append(f"C[{tau}]: {_fmt(artifact.regions[tau].threshold)}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_calibration(path) -> CalibrationArtifact:
    entries: dict[str, str] = {}
    per_step: dict[int, float] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if ":" not in line:
                raise DataFormatError(f"{path}:{lineno}: expected 'key: value'")
            key, _, value = line.partition(":")
            key, value = key.strip(), value.strip()
            if key.startswith("C[") and key.endswith("]"):
                per_step[int(key[2:-1])] = float(value)
            else:
                entries[key] = value
    try:
        method = entries["method"]
        delta = float(entries["delta"])
        t = int(entries["t"])
        tau0 = int(entries["tau0"])
        horizon = int(entries["H"])
        k = int(entries["k"])
        p = int(entries["p"])
    except KeyError as exc:
        raise DataFormatError(f"{path}: missing field {exc}") from None
    formula_hash = entries.get("formula_hash")
    norm = entries.get("norm")
    if method == "direct":
        region = RegionConstant(float(entries["C"]), p, k, delta)
        return CalibrationArtifact(
            method, delta, t, tau0, horizon, formula_hash, norm, region=region
        )
    if method == "indirect":
        if sorted(per_step) != list(range(t + 1, t + horizon + 1)):
            raise DataFormatError(
                f"{path}: per-step constants must cover steps {t + 1}..{t + horizon}"
            )
        delta_bar = delta / horizon
        regions = {
            tau: RegionConstant(c, p, k, delta_bar) for tau, c in per_step.items()
        }
        return CalibrationArtifact(
            method, delta, t, tau0, horizon, formula_hash, norm, regions=regions
        )
    raise DataFormatError(f"{path}: unknown method {method!r}")
