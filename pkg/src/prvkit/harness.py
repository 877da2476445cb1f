"""Synthetic stochastic systems and end-to-end empirical evaluation.

Three generators produce i.i.d. trajectories for exercising the full
pipeline at desk scale: a smooth sinusoid with linear drift, a bimodal
process whose branch splits over time, and an altitude-like dip-and-recover
profile.  Every source of per-trajectory randomness (initial-condition
offset, mode selection, process noise) scales with ``noise_scale``, so a
zero noise scale collapses each system to its deterministic profile.

Randomness is a single seeded stream per run, split hierarchically so each
trajectory draws from its own child stream and the output is independent of
generation order.
"""

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .conformal import CalibrationArtifact, state_scores, write_calibration
from .formulas import Formula, formula_length, to_pnf
from .predicates import L2
from .predictors import Trajectory, fit_ar, fit_hold_last, save_trajectories_csv, split_dataset
from .semantics import eval_bool, eval_robust
from .verify import (
    calibrate_direct,
    calibrate_indirect,
    verdict_record,
    verify_direct,
    verify_indirect,
    verify_observed,
)


@dataclass(frozen=True)
class SyntheticSystem:
    """A named trajectory distribution with analytic per-step moments."""

    name: str
    length: int = 60
    noise_scale: float = 1.0
    init_halfwidth: float = 0.3  # uniform initial-condition offset at noise scale 1
    step_sigma: float = 0.1  # per-step Gaussian noise at noise scale 1

    def __post_init__(self):
        if self.name not in _PROFILES:
            raise ValueError(
                f"unknown system {self.name!r}; available: {sorted(_PROFILES)}"
            )
        if self.length < 2:
            raise ValueError("system length must be >= 2")
        if self.noise_scale < 0:
            raise ValueError("noise scale must be >= 0")

    @property
    def dim(self) -> int:
        return 2 if self.name == "switching-noise" else 1

    def profile(self, tau: np.ndarray) -> np.ndarray:
        """Deterministic component, shape (len(tau), dim)."""
        return _PROFILES[self.name](np.asarray(tau, dtype=float))

    def mean_at(self, tau: int) -> np.ndarray:
        return self.profile(np.array([tau]))[0]

    def var_at(self, tau: int) -> np.ndarray:
        """Analytic per-component variance of the state at step tau."""
        base = self.noise_scale**2 * (self.init_halfwidth**2 / 3 + self.step_sigma**2)
        var = np.full(self.dim, base)
        if self.name == "switching-noise":
            # the mode channel adds (amplitude * ramp)^2 on the first component
            var[0] += (self.noise_scale * _MODE_LEVEL * tau / self.length) ** 2
        return var

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        taus = np.arange(self.length)
        states = self.profile(taus).copy()
        offset = rng.uniform(-1.0, 1.0) * self.init_halfwidth
        states += self.noise_scale * offset
        if self.name == "switching-noise":
            mode = 1.0 if rng.uniform() < 0.5 else -1.0
            ramp = _MODE_LEVEL * taus / self.length
            states[:, 0] += self.noise_scale * mode * ramp
        states += self.noise_scale * self.step_sigma * rng.standard_normal(states.shape)
        return states


_MODE_LEVEL = 1.5


def _drift_sine(tau: np.ndarray) -> np.ndarray:
    return (2.0 + 0.01 * tau + 0.5 * np.sin(2 * np.pi * tau / 40.0)).reshape(-1, 1)


def _switching_noise(tau: np.ndarray) -> np.ndarray:
    # channel 1 carries the (randomly signed) ramp; channel 2 a small wobble
    out = np.zeros((tau.shape[0], 2))
    out[:, 1] = 0.3 * np.sin(2 * np.pi * tau / 25.0)
    return out


def _falling_recovery(tau: np.ndarray) -> np.ndarray:
    dip = 100.0 * np.exp(-0.5 * ((tau - 35.0) / 8.0) ** 2)
    return (900.0 - dip).reshape(-1, 1)


_PROFILES = {
    "drift-sine": _drift_sine,
    "switching-noise": _switching_noise,
    "falling-recovery": _falling_recovery,
}

SYSTEM_NAMES = tuple(sorted(_PROFILES))


def make_system(name: str, **overrides) -> SyntheticSystem:
    return replace(SyntheticSystem(name), **overrides) if overrides else SyntheticSystem(name)


def generate(system: SyntheticSystem, count: int, seed: int) -> list[Trajectory]:
    """``count`` independent trajectories, reproducible per seed."""
    if count < 1:
        raise ValueError("count must be >= 1")
    children = np.random.SeedSequence(seed).spawn(count)
    return [
        Trajectory(f"{system.name}-{seed}-{i:05d}", system.sample(np.random.default_rng(child)))
        for i, child in enumerate(children)
    ]


@dataclass(frozen=True)
class HistogramTable:
    """Plot-ready binned counts of nonconformity scores with the region marker."""

    label: str
    bin_edges: tuple[float, ...]
    counts: tuple[int, ...]
    marker: float  # the calibrated constant C; inf when uninformative


def histogram_export(scores, marker: float, bins: int = 20, label: str = "scores") -> HistogramTable:
    if bins < 1:
        raise ValueError("bins must be >= 1")
    counts, edges = np.histogram(np.asarray(list(scores), dtype=float), bins=bins)
    return HistogramTable(label, tuple(float(e) for e in edges), tuple(int(c) for c in counts), marker)


def write_histogram_csv(table: HistogramTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lo", "bin_hi", "count"])
        for i, count in enumerate(table.counts):
            writer.writerow([repr(table.bin_edges[i]), repr(table.bin_edges[i + 1]), count])
        writer.writerow(["marker_C", "inf" if math.isinf(table.marker) else repr(table.marker), ""])


@dataclass
class EvalReport:
    """Tabulated outcome of verifying every test trajectory."""

    method: str
    delta: float
    n_test: int
    guaranteed_satisfied: int = 0
    guaranteed_violated: int = 0
    not_guaranteed_satisfied: int = 0
    not_guaranteed_violated: int = 0
    coverage_count: int = 0
    region_infinite: bool = False
    histograms: list[HistogramTable] = field(default_factory=list)
    artifact: CalibrationArtifact | None = None
    rho_pred: list[float] = field(default_factory=list)
    rho_true: list[float] = field(default_factory=list)
    guaranteed: list[bool] = field(default_factory=list)
    satisfied: list[bool] = field(default_factory=list)
    covered: list[bool] = field(default_factory=list)
    records: list[str] = field(default_factory=list)

    @property
    def counts(self) -> tuple[int, int, int, int]:
        return (
            self.guaranteed_satisfied,
            self.guaranteed_violated,
            self.not_guaranteed_satisfied,
            self.not_guaranteed_violated,
        )

    @property
    def coverage_fraction(self) -> float:
        return self.coverage_count / self.n_test if self.n_test else float("nan")

    def tally(self, guaranteed: bool, satisfied: bool, covered: bool):
        if guaranteed and satisfied:
            self.guaranteed_satisfied += 1
        elif guaranteed:
            self.guaranteed_violated += 1
        elif satisfied:
            self.not_guaranteed_satisfied += 1
        else:
            self.not_guaranteed_violated += 1
        if covered:
            self.coverage_count += 1
        self.guaranteed.append(guaranteed)
        self.satisfied.append(satisfied)
        self.covered.append(covered)


def evaluate(
    method: str,
    system: SyntheticSystem,
    formula: Formula,
    tau0: int,
    t: int,
    delta: float,
    split_sizes: tuple[int, int, int],
    seed: int,
    predictor_kind: str = "ar",
    ar_order: int = 2,
    norm: str = L2,
    bins: int = 20,
) -> EvalReport:
    """Full pipeline: generate, split, fit, calibrate, verify, tabulate.

    Coverage counts the region inequality on test data: for the direct
    method the robustness-error score falling at or below C, for the
    indirect one every per-step state error falling within its ball.
    Deterministic per seed, end to end.
    """
    if method not in ("direct", "indirect"):
        raise ValueError(f"unknown method {method!r}")
    total = sum(split_sizes)
    trajectories = generate(system, total, seed)
    split = split_dataset(trajectories, sizes=split_sizes)
    length = formula_length(formula)
    horizon = tau0 + length - t

    if horizon <= 0:
        report = EvalReport(method="observed", delta=0.0, n_test=len(split.test))
        for traj in split.test:
            verdict = verify_observed(traj.states[: t + 1], formula, tau0)
            satisfied = eval_bool(formula, traj.signal(), tau0)
            report.tally(verdict.guaranteed, satisfied, covered=True)
            report.rho_pred.append(verdict.robustness)
            report.rho_true.append(eval_robust(formula, traj.signal(), tau0))
            report.records.append(verdict_record(verdict, extra={"traj_id": traj.traj_id}))
        return report

    if predictor_kind == "ar":
        predictor = fit_ar(split.train, ar_order, t, horizon)
    elif predictor_kind == "hold-last":
        predictor = fit_hold_last(t, horizon, system.dim)
    else:
        raise ValueError(f"unknown predictor kind {predictor_kind!r}")

    report = EvalReport(method=method, delta=delta, n_test=len(split.test))

    if method == "direct":
        artifact = calibrate_direct(predictor, split.val, formula, tau0, t, delta)
        c = artifact.region.threshold
        cal_scores = _direct_scores(predictor, split.val, formula, tau0, artifact.horizon)
        report.histograms.append(histogram_export(cal_scores, c, bins, "direct-scores"))
        for traj in split.test:
            verdict = verify_direct(traj.states[: t + 1], predictor, formula, tau0, artifact)
            rho_true = eval_robust(formula, traj.signal(), tau0)
            satisfied = eval_bool(formula, traj.signal(), tau0)
            covered = bool(verdict.robustness - rho_true <= c)
            report.tally(verdict.guaranteed, satisfied, covered)
            report.rho_pred.append(verdict.robustness)
            report.rho_true.append(rho_true)
            report.records.append(verdict_record(verdict, extra={"traj_id": traj.traj_id}))
    else:
        f_pnf = to_pnf(formula)
        artifact = calibrate_indirect(
            predictor, split.val, t, horizon, delta, norm, formula=f_pnf, tau0=tau0
        )
        radii = {tau: r.threshold for tau, r in artifact.regions.items()}
        for tau in _histogram_steps(t, horizon):
            step_scores = [
                state_scores(traj, predictor.predict(traj, horizon), t, horizon, norm)[tau - t - 1]
                for traj in split.val
            ]
            report.histograms.append(
                histogram_export(step_scores, radii[tau], bins, f"state-scores-step-{tau}")
            )
        for traj in split.test:
            verdict = verify_indirect(traj.states[: t + 1], predictor, f_pnf, tau0, artifact)
            rho_true = eval_robust(formula, traj.signal(), tau0)
            satisfied = eval_bool(formula, traj.signal(), tau0)
            errors = state_scores(traj, predictor.predict(traj, horizon), t, horizon, norm)
            covered = all(e <= radii[t + 1 + j] for j, e in enumerate(errors))
            report.tally(verdict.guaranteed, satisfied, covered)
            report.rho_pred.append(verdict.robustness)
            report.rho_true.append(rho_true)
            report.records.append(verdict_record(verdict, extra={"traj_id": traj.traj_id}))

    report.artifact = artifact
    report.region_infinite = artifact.any_infinite
    return report


def _direct_scores(predictor, val, formula, tau0, horizon):
    scores = []
    for traj in val:
        predicted = predictor.predicted_trajectory(traj, horizon)
        scores.append(
            eval_robust(formula, predicted, tau0) - eval_robust(formula, traj.signal(), tau0)
        )
    return scores


def _histogram_steps(t: int, horizon: int) -> list[int]:
    steps = {t + 1, t + max(1, horizon // 2), t + horizon}
    return sorted(steps)


def write_eval_outputs(report: EvalReport, outdir, trajectories=None,
                       variables=None) -> None:
    """Write the full evaluation bundle: report, histograms, calibration
    artifact, per-trajectory verdict records, and (optionally) the generated
    trajectories."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_eval_report(report, outdir / "report.txt")
    for table in report.histograms:
        write_histogram_csv(table, outdir / f"histogram-{table.label}.csv")
    if report.artifact is not None:
        write_calibration(report.artifact, outdir / "calibration.txt")
    if report.records:
        (outdir / "verdicts.txt").write_text(
            "\n".join(report.records) + "\n", encoding="utf-8"
        )
    if trajectories is not None:
        save_trajectories_csv(trajectories, outdir / "trajectories.csv", variables)


def write_eval_report(report: EvalReport, path) -> None:
    """Key-value dump of the tabulated counts (no per-trajectory detail)."""
    gs, gv, ns, nv = report.counts
    lines = [
        f"method: {report.method}",
        f"delta: {report.delta!r}",
        f"n_test: {report.n_test}",
        f"guaranteed_satisfied: {gs}",
        f"guaranteed_violated: {gv}",
        f"not_guaranteed_satisfied: {ns}",
        f"not_guaranteed_violated: {nv}",
        f"coverage_count: {report.coverage_count}",
        f"coverage_fraction: {report.coverage_fraction!r}",
        f"region_infinite: {str(report.region_infinite).lower()}",
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
