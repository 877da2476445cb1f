"""Evaluation of formulas over finite signals.

Three semantics share one recursion scheme:

* :func:`eval_bool` -- satisfaction at a time step,
* :func:`eval_robust` -- the real-valued satisfaction degree; positive
  implies satisfaction, negative implies violation,
* :func:`eval_worst_case` -- a lower bound on the robust value when states
  after the last observed step are only known to lie in norm balls around
  predictions.

Until quantifies candidate steps tau'' over [tau+lo, tau+hi] and the inner
steps tau' strictly between tau and tau''; since mirrors this into the
past.  Suprema over empty candidate sets are -inf (until/since over an
empty window are false) and infima over empty sets are +inf.  Every
evaluator memoizes per (node, step) within a single call, so shared
subtrees and nested windows do not blow up.
"""

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import NormMismatchError, NotInPositiveNormalForm, SignalError
from .formulas import (
    Always,
    And,
    Atom,
    Eventually,
    Formula,
    Historically,
    Not,
    Once,
    Or,
    Release,
    Since,
    Trigger,
    TrueFormula,
    Until,
    formula_length,
    is_pnf,
)
from .predicates import (
    AffinePredicate,
    ConstantPredicate,
    LipschitzPredicate,
    NORMS,
    PredicateFn,
)

INF = math.inf


class Signal:
    """Finite discrete-time signal: an ordered sequence of state vectors."""

    __slots__ = ("states",)

    def __init__(self, states):
        arr = np.asarray(states, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise SignalError(f"signal must be a (steps, dim) array, got shape {arr.shape}")
        self.states = arr

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def state(self, tau: int) -> np.ndarray:
        return self.states[tau]

    def prefix(self, length: int) -> "Signal":
        return Signal(self.states[:length])


def as_signal(x) -> Signal:
    if isinstance(x, Signal):
        return x
    return Signal(x)


@dataclass(frozen=True)
class BallFamily:
    """Predicted trajectory plus per-step uncertainty radii.

    ``center`` concatenates the observed prefix (steps 0..t) with predicted
    states; steps at or before ``t`` have an implicit radius of zero.
    """

    center: Signal
    t: int
    radii: Mapping[int, float]
    norm: str = "L2"

    def __post_init__(self):
        if self.norm not in NORMS:
            raise ValueError(f"unknown norm tag {self.norm!r}")
        for tau, r in self.radii.items():
            if math.isnan(r) or r < 0:
                raise ValueError(f"radius at step {tau} must be >= 0 or inf, got {r}")

    def radius(self, tau: int) -> float:
        if tau <= self.t:
            return 0.0
        try:
            return self.radii[tau]
        except KeyError:
            raise SignalError(f"no uncertainty radius provided for step {tau}") from None


def inf_ball(pred: PredicateFn, center, radius: float, norm: str = "L2") -> float:
    """Infimum of the predicate function over a norm ball around ``center``.

    Affine predicates are exact: a.c + b - ||a||* r, with the dual norm
    pairing L2 balls with the L2 norm of a and Linf balls with its L1 norm.
    Lipschitz predicates return the lower bound h(center) - L r, which
    requires the ball norm to match the declared one.
    """
    if math.isnan(radius) or radius < 0:
        raise ValueError(f"ball radius must be >= 0 or inf, got {radius}")
    if norm not in NORMS:
        raise ValueError(f"unknown norm tag {norm!r}")
    if isinstance(pred, ConstantPredicate):
        return pred.value(center)
    if isinstance(pred, AffinePredicate):
        slope = pred.coefficient_norm(norm)
        if math.isinf(radius):
            return pred.value(center) if slope == 0.0 else -INF
        return pred.value(center) - slope * radius
    if isinstance(pred, LipschitzPredicate):
        if pred.norm != norm:
            raise NormMismatchError(
                f"ball uses norm {norm}, predicate's Lipschitz constant is declared for {pred.norm}"
            )
        if math.isinf(radius):
            return pred.value(center) if pred.lipschitz == 0.0 else -INF
        return pred.value(center) - pred.lipschitz * radius
    raise TypeError(f"not a predicate function: {pred!r}")


def _check_window(f: Formula, length: int, tau: int, what: str):
    if tau < 0:
        raise SignalError(f"evaluation step must be >= 0, got {tau}")
    needed = tau + formula_length(f) + 1
    if length < needed:
        raise SignalError(
            f"{what} too short: need at least {needed} steps to decide the formula "
            f"at step {tau}, have {length}"
        )


def _future_steps(tau: int, interval) -> range:
    return range(tau + interval.lo, tau + interval.upper() + 1)


def _past_steps(tau: int, interval) -> range:
    start = 0 if interval.hi is None else max(0, tau - interval.hi)
    return range(start, tau - interval.lo + 1)


def eval_bool(f: Formula, signal, tau: int = 0) -> bool:
    """Satisfaction of the formula on the signal at step ``tau``."""
    sig = as_signal(signal)
    _check_window(f, len(sig), tau, "signal")
    memo: dict[tuple[int, int], bool] = {}

    def sat(node: Formula, k: int) -> bool:
        key = (id(node), k)
        if key in memo:
            return memo[key]
        memo[key] = value = _sat(node, k)
        return value

    def _sat(node: Formula, k: int) -> bool:
        if isinstance(node, TrueFormula):
            return True
        if isinstance(node, Atom):
            return node.predicate().value(sig.state(k)) >= 0
        if isinstance(node, Not):
            return not sat(node.child, k)
        if isinstance(node, And):
            return sat(node.left, k) and sat(node.right, k)
        if isinstance(node, Or):
            return sat(node.left, k) or sat(node.right, k)
        if isinstance(node, Until):
            return any(
                sat(node.right, k2) and all(sat(node.left, k1) for k1 in range(k + 1, k2))
                for k2 in _future_steps(k, node.interval)
            )
        if isinstance(node, Since):
            return any(
                sat(node.right, k2) and all(sat(node.left, k1) for k1 in range(k2 + 1, k))
                for k2 in _past_steps(k, node.interval)
            )
        if isinstance(node, Release):
            return all(
                sat(node.right, k2) or any(sat(node.left, k1) for k1 in range(k + 1, k2))
                for k2 in _future_steps(k, node.interval)
            )
        if isinstance(node, Trigger):
            return all(
                sat(node.right, k2) or any(sat(node.left, k1) for k1 in range(k2 + 1, k))
                for k2 in _past_steps(k, node.interval)
            )
        if isinstance(node, Eventually):
            return any(sat(node.child, k2) for k2 in _future_steps(k, node.interval))
        if isinstance(node, Always):
            return all(sat(node.child, k2) for k2 in _future_steps(k, node.interval))
        if isinstance(node, Once):
            return any(sat(node.child, k2) for k2 in _past_steps(k, node.interval))
        if isinstance(node, Historically):
            return all(sat(node.child, k2) for k2 in _past_steps(k, node.interval))
        raise TypeError(f"not a formula node: {node!r}")

    return sat(f, tau)


def eval_robust(f: Formula, signal, tau: int = 0) -> float:
    """Robust satisfaction degree of the formula on the signal at step ``tau``."""
    sig = as_signal(signal)
    _check_window(f, len(sig), tau, "signal")
    leaf = lambda atom, k: atom.predicate().value(sig.state(k))
    return _robust(f, tau, leaf)


def eval_worst_case(f: Formula, balls: BallFamily, tau: int = 0) -> float:
    """Lower bound of the robust value over all states inside the balls.

    Requires a negation-free formula: pushing bounds through a negation
    would flip them the wrong way.
    """
    if not is_pnf(f):
        raise NotInPositiveNormalForm(
            "worst-case evaluation needs a negation-free formula; call to_pnf() first"
        )
    _check_window(f, len(balls.center), tau, "predicted trajectory")

    def leaf(atom: Atom, k: int) -> float:
        pred = atom.predicate()
        if k <= balls.t:
            return pred.value(balls.center.state(k))
        return inf_ball(pred, balls.center.state(k), balls.radius(k), balls.norm)

    return _robust(f, tau, leaf)


def _robust(f: Formula, tau: int, leaf) -> float:
    memo: dict[tuple[int, int], float] = {}

    def rob(node: Formula, k: int) -> float:
        key = (id(node), k)
        if key in memo:
            return memo[key]
        memo[key] = value = _rob(node, k)
        return value

    def _rob(node: Formula, k: int) -> float:
        if isinstance(node, TrueFormula):
            return INF
        if isinstance(node, Atom):
            return leaf(node, k)
        if isinstance(node, Not):
            return -rob(node.child, k)
        if isinstance(node, And):
            return min(rob(node.left, k), rob(node.right, k))
        if isinstance(node, Or):
            return max(rob(node.left, k), rob(node.right, k))
        if isinstance(node, Until):
            best = -INF
            for k2 in _future_steps(k, node.interval):
                inner = INF
                for k1 in range(k + 1, k2):
                    inner = min(inner, rob(node.left, k1))
                best = max(best, min(rob(node.right, k2), inner))
            return best
        if isinstance(node, Since):
            best = -INF
            for k2 in _past_steps(k, node.interval):
                inner = INF
                for k1 in range(k2 + 1, k):
                    inner = min(inner, rob(node.left, k1))
                best = max(best, min(rob(node.right, k2), inner))
            return best
        if isinstance(node, Release):
            worst = INF
            for k2 in _future_steps(k, node.interval):
                inner = -INF
                for k1 in range(k + 1, k2):
                    inner = max(inner, rob(node.left, k1))
                worst = min(worst, max(rob(node.right, k2), inner))
            return worst
        if isinstance(node, Trigger):
            worst = INF
            for k2 in _past_steps(k, node.interval):
                inner = -INF
                for k1 in range(k2 + 1, k):
                    inner = max(inner, rob(node.left, k1))
                worst = min(worst, max(rob(node.right, k2), inner))
            return worst
        if isinstance(node, Eventually):
            return max(
                (rob(node.child, k2) for k2 in _future_steps(k, node.interval)),
                default=-INF,
            )
        if isinstance(node, Always):
            return min(
                (rob(node.child, k2) for k2 in _future_steps(k, node.interval)),
                default=INF,
            )
        if isinstance(node, Once):
            return max(
                (rob(node.child, k2) for k2 in _past_steps(k, node.interval)),
                default=-INF,
            )
        if isinstance(node, Historically):
            return min(
                (rob(node.child, k2) for k2 in _past_steps(k, node.interval)),
                default=INF,
            )
        raise TypeError(f"not a formula node: {node!r}")

    return rob(f, tau)
