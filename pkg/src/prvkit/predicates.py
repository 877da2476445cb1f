"""Predicate functions over real state vectors.

A predicate holds at a state ``s`` when ``h(s) >= 0``.  Three shapes of ``h``
are supported:

* ``ConstantPredicate`` -- ``h(s) = c`` regardless of the state,
* ``AffinePredicate``   -- ``h(s) = a . s + b``, which admits an exact
  infimum over norm balls via the dual norm,
* ``LipschitzPredicate`` -- an opaque callable with a declared Lipschitz
  constant, for which only the Lipschitz lower bound is available.

Coefficients are stored as plain tuples so predicates are hashable and
compare structurally.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import SignalError

L2 = "L2"
LINF = "Linf"
NORMS = (L2, LINF)


@dataclass(frozen=True)
class ConstantPredicate:
    """State-independent predicate value; used for vacuous truth/falsity."""

    value_const: float

    def value(self, state: Sequence[float]) -> float:
        return float(self.value_const)

    def negated(self) -> "ConstantPredicate":
        return ConstantPredicate(-self.value_const)


@dataclass(frozen=True)
class AffinePredicate:
    """h(s) = a . s + b with coefficients a and offset b."""

    a: tuple[float, ...]
    b: float

    def value(self, state: Sequence[float]) -> float:
        state = np.asarray(state, dtype=float)
        if state.shape != (len(self.a),):
            raise SignalError(
                f"predicate expects dimension {len(self.a)}, state has shape {state.shape}"
            )
        return float(np.dot(self.a, state) + self.b)

    def negated(self) -> "AffinePredicate":
        return AffinePredicate(tuple(-c for c in self.a), -self.b)

    def coefficient_norm(self, ball_norm: str) -> float:
        """Dual norm of the coefficient vector for a ball in ``ball_norm``.

        L2 balls pair with the L2 norm of ``a``; Linf balls pair with its L1
        norm (support-function identity).
        """
        arr = np.asarray(self.a, dtype=float)
        if ball_norm == L2:
            return float(np.linalg.norm(arr, 2))
        if ball_norm == LINF:
            return float(np.linalg.norm(arr, 1))
        raise ValueError(f"unknown norm tag {ball_norm!r}")


@dataclass(frozen=True, eq=False)
class LipschitzPredicate:
    """Black-box h with a declared Lipschitz constant valid for ``norm``."""

    fn: Callable[[np.ndarray], float] = field(repr=False)
    lipschitz: float
    norm: str = L2

    def __post_init__(self):
        if not self.lipschitz >= 0:
            raise ValueError("Lipschitz constant must be >= 0")
        if self.norm not in NORMS:
            raise ValueError(f"unknown norm tag {self.norm!r}")

    def value(self, state: Sequence[float]) -> float:
        return float(self.fn(np.asarray(state, dtype=float)))

    def negated(self) -> "LipschitzPredicate":
        inner = self.fn
        return LipschitzPredicate(lambda s: -inner(s), self.lipschitz, self.norm)


PredicateFn = ConstantPredicate | AffinePredicate | LipschitzPredicate


def component_predicate(index: int, dim: int, threshold: float, above: bool) -> AffinePredicate:
    """Affine predicate for ``s[index] >= threshold`` (above) or ``<= threshold``."""
    a = [0.0] * dim
    a[index] = 1.0 if above else -1.0
    b = -threshold if above else threshold
    return AffinePredicate(tuple(a), b)


def norm2_predicate(indices: Sequence[int], threshold: float, above: bool) -> LipschitzPredicate:
    """Predicate on the Euclidean norm of selected state components.

    ``above`` gives ``h(s) = ||s[indices]|| - threshold``, otherwise the
    negation.  The projection onto a coordinate subset is 1-Lipschitz in L2,
    so the declared constant is one.
    """
    idx = tuple(int(i) for i in indices)

    if above:
        fn = lambda s, _i=idx: float(np.linalg.norm(np.asarray(s, dtype=float)[list(_i)], 2)) - threshold
    else:
        fn = lambda s, _i=idx: threshold - float(np.linalg.norm(np.asarray(s, dtype=float)[list(_i)], 2))
    return LipschitzPredicate(fn, 1.0, L2)


def vector_norm(vec: np.ndarray, norm: str) -> float:
    """Norm of a state-error vector under a ball-norm tag."""
    if norm == L2:
        return float(np.linalg.norm(vec, 2))
    if norm == LINF:
        return float(np.linalg.norm(vec, math.inf))
    raise ValueError(f"unknown norm tag {norm!r}")
