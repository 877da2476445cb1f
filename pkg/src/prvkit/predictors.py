"""Trajectory predictors and trajectory/prediction file formats.

A predictor maps the observed prefix (x_0 .. x_t) of a trajectory to point
predictions of the next H states.  Every implementation slices the prefix
before doing anything else, so states after the current time can never leak
into a prediction.  Two trainable baselines are provided (hold-last and an
iterated least-squares autoregression) plus a loader for prediction tables
produced by external models.
"""

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, PredictionError
from .semantics import Signal


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One realization of the system: an id and a (steps, dim) state array."""

    traj_id: str
    states: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.states, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        object.__setattr__(self, "states", arr)

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def signal(self) -> Signal:
        return Signal(self.states)


@dataclass(frozen=True)
class DatasetSplit:
    train: list[Trajectory]
    val: list[Trajectory]
    test: list[Trajectory]

    def __post_init__(self):
        ids = [tr.traj_id for part in (self.train, self.val, self.test) for tr in part]
        if len(ids) != len(set(ids)):
            raise ValueError("split parts must have pairwise distinct trajectory ids")


def split_dataset(trajectories, sizes=None, fractions=(0.7, 0.2, 0.1)) -> DatasetSplit:
    """Deterministic order-preserving split into train/val/test.

    ``sizes`` gives absolute counts; otherwise ``fractions`` of the dataset
    (defaults 70/20/10).
    """
    trajs = list(trajectories)
    if sizes is None:
        n = len(trajs)
        n_train = int(round(fractions[0] * n))
        n_val = int(round(fractions[1] * n))
        sizes = (n_train, n_val, n - n_train - n_val)
    n_train, n_val, n_test = sizes
    if n_train + n_val + n_test > len(trajs):
        raise ValueError(
            f"split sizes {sizes} exceed the {len(trajs)} available trajectories"
        )
    return DatasetSplit(
        train=trajs[:n_train],
        val=trajs[n_train : n_train + n_val],
        test=trajs[n_train + n_val : n_train + n_val + n_test],
    )


class Predictor:
    """Base class: fixes the observed time t and the trained horizon."""

    kind = "base"

    def __init__(self, t: int, horizon_max: int, dim: int):
        self.t = int(t)
        self.horizon_max = int(horizon_max)
        self.dim = int(dim)

    def predict(self, prefix, horizon: int) -> np.ndarray:
        """Predicted states for steps t+1 .. t+horizon, shape (horizon, dim).

        ``prefix`` may be a Trajectory or a raw state array; only, and
        exactly, the first t+1 states are read.
        """
        if horizon > self.horizon_max:
            raise PredictionError(
                f"requested horizon {horizon} exceeds trained horizon {self.horizon_max}"
            )
        if horizon < 1:
            raise PredictionError(f"horizon must be >= 1, got {horizon}")
        states = np.asarray(getattr(prefix, "states", prefix), dtype=float)
        if states.ndim == 1:
            states = states.reshape(-1, 1)
        if states.shape[0] < self.t + 1:
            raise PredictionError(
                f"prefix has {states.shape[0]} states, need {self.t + 1} observations"
            )
        if states.shape[1] != self.dim:
            raise PredictionError(
                f"prefix dimension {states.shape[1]} does not match trained dimension {self.dim}"
            )
        observed = states[: self.t + 1]
        traj_id = prefix.traj_id if isinstance(prefix, Trajectory) else None
        return self._predict(observed, horizon, traj_id)

    def _predict(self, observed: np.ndarray, horizon: int, traj_id) -> np.ndarray:
        raise NotImplementedError

    def predicted_trajectory(self, prefix, horizon: int) -> Signal:
        """Observed prefix concatenated with the predictions, as one signal."""
        states = np.asarray(getattr(prefix, "states", prefix), dtype=float)
        if states.ndim == 1:
            states = states.reshape(-1, 1)
        predictions = self.predict(prefix, horizon)
        return Signal(np.vstack([states[: self.t + 1], predictions]))


class HoldLastPredictor(Predictor):
    """Repeats the last observed state for every future step."""

    kind = "hold-last"

    def _predict(self, observed, horizon, traj_id):
        return np.tile(observed[-1], (horizon, 1))


class AutoregressivePredictor(Predictor):
    """One-step least-squares autoregression, rolled out iteratively.

    The one-step model maps the last ``order`` states (flattened, plus an
    intercept) to the next state; multi-step predictions reapply it on its
    own outputs.
    """

    kind = "ar"

    def __init__(self, t, horizon_max, dim, order, weights, intercept):
        super().__init__(t, horizon_max, dim)
        self.order = int(order)
        self.weights = np.asarray(weights, dtype=float)  # (order*dim, dim)
        self.intercept = np.asarray(intercept, dtype=float)  # (dim,)
        if not np.all(np.isfinite(self.weights)) or not np.all(np.isfinite(self.intercept)):
            raise PredictionError("autoregressive coefficients must be finite")

    def _predict(self, observed, horizon, traj_id):
        window = [observed[i].copy() for i in range(-self.order, 0)]
        out = np.empty((horizon, self.dim))
        for j in range(horizon):
            features = np.concatenate(window)
            nxt = features @ self.weights + self.intercept
            out[j] = nxt
            window.pop(0)
            window.append(nxt)
        return out


def fit_ar(train, order: int, t: int, horizon: int) -> AutoregressivePredictor:
    """Fit the one-step autoregression on observed prefixes of the training set.

    Only states up to index t are used.  The least-squares solve always
    returns the minimum-norm solution, which covers rank-deficient designs.
    """
    trajs = list(train)
    if order < 1:
        raise PredictionError(f"autoregression order must be >= 1, got {order}")
    if not trajs:
        raise PredictionError("no training trajectories")
    if t < order:
        raise PredictionError(
            f"need at least order+1 = {order + 1} observed states, current time is {t}"
        )
    dim = trajs[0].dim
    rows, targets = [], []
    for traj in trajs:
        if len(traj) < t + horizon + 1:
            raise PredictionError(
                f"trajectory {traj.traj_id!r} has {len(traj)} steps, "
                f"need at least {t + horizon + 1}"
            )
        if traj.dim != dim:
            raise PredictionError("training trajectories must share one state dimension")
        obs = traj.states[: t + 1]
        for k in range(order - 1, t):
            rows.append(obs[k - order + 1 : k + 1].ravel())
            targets.append(obs[k + 1])
    phi = np.hstack([np.asarray(rows), np.ones((len(rows), 1))])
    y = np.asarray(targets)
    solution, *_ = np.linalg.lstsq(phi, y, rcond=None)
    return AutoregressivePredictor(
        t, horizon, dim, order, solution[:-1], solution[-1]
    )


def fit_hold_last(t: int, horizon: int, dim: int) -> HoldLastPredictor:
    return HoldLastPredictor(t, horizon, dim)


class ExternalPredictor(Predictor):
    """Serves predictions computed elsewhere, looked up by trajectory id."""

    kind = "external"

    def __init__(self, t, horizon_max, dim, table):
        super().__init__(t, horizon_max, dim)
        self.table = table  # {traj_id: {tau: ndarray}}

    def _predict(self, observed, horizon, traj_id):
        if traj_id is None:
            raise PredictionError(
                "external predictions are keyed by trajectory id; pass a Trajectory"
            )
        try:
            per_step = self.table[traj_id]
        except KeyError:
            raise PredictionError(f"no stored predictions for trajectory {traj_id!r}") from None
        out = np.empty((horizon, self.dim))
        for j in range(horizon):
            tau = self.t + 1 + j
            try:
                out[j] = per_step[tau]
            except KeyError:
                raise PredictionError(
                    f"trajectory {traj_id!r} has no stored prediction for step {tau}"
                ) from None
        return out

    def ensure_covers(self, trajectories, horizon: int) -> None:
        missing = []
        for traj in trajectories:
            per_step = self.table.get(traj.traj_id)
            if per_step is None:
                missing.append(traj.traj_id)
                continue
            if any(self.t + 1 + j not in per_step for j in range(horizon)):
                missing.append(traj.traj_id)
        if missing:
            raise PredictionError(
                f"prediction table does not cover trajectories {missing!r} "
                f"through step {self.t + horizon}"
            )


def predict(predictor: Predictor, prefix, horizon: int) -> np.ndarray:
    """Functional alias for :meth:`Predictor.predict`."""
    return predictor.predict(prefix, horizon)


def load_external(path, t: int, horizon: int | None = None) -> ExternalPredictor:
    """Load a prediction table (header ``traj_id,t,tau,<components>``).

    Every row stores one predicted state for step ``tau`` made at time
    ``t``; all rows must agree on ``t`` and on the state dimension.
    """
    table: dict[str, dict[int, np.ndarray]] = {}
    dim = None
    max_tau = t
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header[:3]] != ["traj_id", "t", "tau"]:
            raise DataFormatError(
                f"{path}: expected header 'traj_id,t,tau,<components>'"
            )
        n_cols = len(header)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != n_cols:
                raise DataFormatError(f"{path}:{lineno}: expected {n_cols} columns")
            try:
                row_t = int(row[1])
                tau = int(row[2])
                state = np.array([float(v) for v in row[3:]])
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
            if row_t != t:
                raise DataFormatError(
                    f"{path}:{lineno}: prediction made at t={row_t}, expected t={t}"
                )
            if tau <= t:
                raise DataFormatError(f"{path}:{lineno}: predicted step {tau} is not after t={t}")
            if dim is None:
                dim = state.shape[0]
            elif state.shape[0] != dim:
                raise DataFormatError(
                    f"{path}:{lineno}: state dimension {state.shape[0]} != {dim}"
                )
            table.setdefault(row[0], {})[tau] = state
            max_tau = max(max_tau, tau)
    if not table:
        raise DataFormatError(f"{path}: prediction table is empty")
    if horizon is None:
        horizon = max_tau - t
    return ExternalPredictor(t, horizon, dim, table)


def save_prediction_table(predictor: Predictor, trajectories, horizon: int, path,
                          variables=None) -> None:
    """Write a prediction table for the given trajectories (testing/interchange)."""
    first = trajectories[0]
    names = list(variables) if variables else [f"x{i + 1}" for i in range(first.dim)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["traj_id", "t", "tau"] + names)
        for traj in trajectories:
            preds = predictor.predict(traj, horizon)
            for j in range(horizon):
                writer.writerow(
                    [traj.traj_id, predictor.t, predictor.t + 1 + j]
                    + [repr(float(v)) for v in preds[j]]
                )


def save_predictor(predictor: Predictor, path) -> None:
    """Persist a fitted predictor as JSON (external tables are not persisted)."""
    record: dict = {
        "kind": predictor.kind,
        "t": predictor.t,
        "horizon": predictor.horizon_max,
        "dim": predictor.dim,
    }
    if isinstance(predictor, AutoregressivePredictor):
        record["order"] = predictor.order
        record["weights"] = predictor.weights.tolist()
        record["intercept"] = predictor.intercept.tolist()
    elif not isinstance(predictor, HoldLastPredictor):
        raise PredictionError(f"cannot persist predictor of kind {predictor.kind!r}")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=1)
        fh.write("\n")


def load_predictor(path) -> Predictor:
    with open(path, encoding="utf-8") as fh:
        record = json.load(fh)
    kind = record.get("kind")
    if kind == "hold-last":
        return HoldLastPredictor(record["t"], record["horizon"], record["dim"])
    if kind == "ar":
        return AutoregressivePredictor(
            record["t"],
            record["horizon"],
            record["dim"],
            record["order"],
            record["weights"],
            record["intercept"],
        )
    raise DataFormatError(f"{path}: unknown predictor kind {kind!r}")


def load_trajectories_csv(path) -> tuple[list[Trajectory], list[str]]:
    """Read trajectories from CSV (header ``traj_id,tau,<components>``).

    Rows must be sorted by (traj_id, tau) with steps contiguous from 0.
    Returns the trajectories and the component names from the header.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header[:2]] != ["traj_id", "tau"]:
            raise DataFormatError(f"{path}: expected header 'traj_id,tau,<components>'")
        names = [c.strip() for c in header[2:]]
        if not names:
            raise DataFormatError(f"{path}: no state components in header")
        trajs: list[Trajectory] = []
        current_id, rows, expected_tau = None, [], 0
        seen: set[str] = set()

        def flush():
            if current_id is not None:
                trajs.append(Trajectory(current_id, np.asarray(rows)))

        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(names) + 2:
                raise DataFormatError(f"{path}:{lineno}: expected {len(names) + 2} columns")
            traj_id = row[0]
            try:
                tau = int(row[1])
                state = [float(v) for v in row[2:]]
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
            if traj_id != current_id:
                flush()
                if traj_id in seen:
                    raise DataFormatError(
                        f"{path}:{lineno}: rows for {traj_id!r} are not contiguous"
                    )
                seen.add(traj_id)
                current_id, rows, expected_tau = traj_id, [], 0
            if tau != expected_tau:
                raise DataFormatError(
                    f"{path}:{lineno}: expected step {expected_tau} for {traj_id!r}, got {tau}"
                )
            rows.append(state)
            expected_tau += 1
        flush()
    if not trajs:
        raise DataFormatError(f"{path}: no trajectories found")
    return trajs, names


def save_trajectories_csv(trajectories, path, variables=None) -> None:
    trajs = list(trajectories)
    names = list(variables) if variables else [f"x{i + 1}" for i in range(trajs[0].dim)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["traj_id", "tau"] + names)
        for traj in trajs:
            for tau in range(len(traj)):
                writer.writerow(
                    [traj.traj_id, tau] + [repr(float(v)) for v in traj.states[tau]]
                )


def load_trajectories_jsonl(path) -> list[Trajectory]:
    """Read trajectories from JSON lines: ``{"id": ..., "states": [[...], ...]}``."""
    trajs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                trajs.append(Trajectory(str(record["id"]), np.asarray(record["states"], dtype=float)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
    if not trajs:
        raise DataFormatError(f"{path}: no trajectories found")
    return trajs


def save_trajectories_jsonl(trajectories, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for traj in trajectories:
            fh.write(json.dumps({"id": traj.traj_id, "states": traj.states.tolist()}))
            fh.write("\n")
