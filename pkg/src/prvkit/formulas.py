"""Formula trees for discrete-time temporal specifications.

Formulas are immutable; every operation here returns a new tree.  Atoms are
comparisons over named signal components (``speed >= 0.5``) that stay
symbolic until :func:`bind` resolves the names against a concrete state
layout, or they carry an explicit predicate function supplied by the caller.

Future-time operators must have bounded intervals before a formula can be
evaluated; :func:`truncate` turns an open-ended interval into an explicit
bound.  Negations are eliminated by :func:`to_pnf`, which pushes them into
the atoms (the robust value is preserved exactly; the flipped comparison
differs from the original only on the measure-zero boundary h = 0).
"""

import hashlib
import math
from dataclasses import dataclass, field

from .errors import (
    IntervalError,
    UnboundedFormulaError,
    UnboundPredicateError,
)
from .predicates import (
    ConstantPredicate,
    PredicateFn,
    component_predicate,
    norm2_predicate,
)

GE, GT, LE, LT = ">=", ">", "<=", "<"
_FLIP = {GE: LT, GT: LE, LE: GT, LT: GE}
_UPPER_OPS = (GE, GT)  # normalized to h(s) = lhs - threshold


@dataclass(frozen=True)
class Interval:
    """Integer step interval [lo, hi]; ``hi=None`` means unbounded."""

    lo: int
    hi: int | None

    def __post_init__(self):
        if not isinstance(self.lo, int) or (self.hi is not None and not isinstance(self.hi, int)):
            raise IntervalError("interval endpoints must be integer step counts")
        if self.lo < 0:
            raise IntervalError(f"interval lower bound must be >= 0, got {self.lo}")
        if self.hi is not None and self.hi < self.lo:
            raise IntervalError(f"interval [{self.lo},{self.hi}] has lo > hi")

    @property
    def bounded(self) -> bool:
        return self.hi is not None

    def upper(self) -> int:
        if self.hi is None:
            raise UnboundedFormulaError(
                "unbounded future interval; truncate() the formula before use"
            )
        return self.hi

    def render(self) -> str:
        hi = "inf" if self.hi is None else str(self.hi)
        return f"[{self.lo},{hi}]"


class Formula:
    """Base class for all formula nodes."""

    __slots__ = ()


@dataclass(frozen=True)
class TrueFormula(Formula):
    pass


@dataclass(frozen=True)
class Comparison:
    """Symbolic atom: a comparison between a signal expression and a number."""

    names: tuple[str, ...]
    op: str
    threshold: float
    use_norm: bool = False  # True for norm2(...) atoms

    def flipped(self) -> "Comparison":
        return Comparison(self.names, _FLIP[self.op], self.threshold, self.use_norm)

    def render(self) -> str:
        lhs = f"norm2({', '.join(self.names)})" if self.use_norm else self.names[0]
        return f"{lhs} {self.op} {format_number(self.threshold)}"

    def bound_predicate(self, variables: tuple[str, ...]) -> PredicateFn:
        indices = []
        for name in self.names:
            if name not in variables:
                raise UnboundPredicateError(
                    f"signal has no component named {name!r}; available: {list(variables)}"
                )
            indices.append(variables.index(name))
        above = self.op in _UPPER_OPS
        if self.use_norm:
            return norm2_predicate(indices, self.threshold, above)
        return component_predicate(indices[0], len(variables), self.threshold, above)


@dataclass(frozen=True)
class Atom(Formula):
    """Predicate atom; holds when its predicate function is >= 0.

    Equality is structural on ``label`` and ``comparison`` so that parsed
    trees compare independently of binding.
    """

    label: str
    comparison: Comparison | None = None
    pred: PredicateFn | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.comparison is None and self.pred is None:
            raise ValueError("an atom needs a comparison or a predicate function")

    def predicate(self) -> PredicateFn:
        if self.pred is None:
            raise UnboundPredicateError(
                f"atom {self.label!r} is unbound; call bind() with the signal's variable names"
            )
        return self.pred


@dataclass(frozen=True)
class Not(Formula):
    child: Formula


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Until(Formula):
    interval: Interval
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Since(Formula):
    interval: Interval
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Release(Formula):
    """Dual of until; produced by negation pushing, not by user input."""

    interval: Interval
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Trigger(Formula):
    """Dual of since; produced by negation pushing, not by user input."""

    interval: Interval
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Eventually(Formula):
    interval: Interval
    child: Formula


@dataclass(frozen=True)
class Always(Formula):
    interval: Interval
    child: Formula


@dataclass(frozen=True)
class Once(Formula):
    interval: Interval
    child: Formula


@dataclass(frozen=True)
class Historically(Formula):
    interval: Interval
    child: Formula


_FUTURE = (Until, Release, Eventually, Always)
_PAST = (Since, Trigger, Once, Historically)
_BINARY_TEMPORAL = (Until, Since, Release, Trigger)
_UNARY_TEMPORAL = (Eventually, Always, Once, Historically)


def false_formula() -> Atom:
    """Atom that is always violated; the negation dual of True."""
    return Atom("False", pred=ConstantPredicate(-math.inf))


def negate_atom(atom: Atom) -> Formula:
    if atom.label == "False" and atom.comparison is None:
        return TrueFormula()
    if atom.comparison is not None:
        comp = atom.comparison.flipped()
        pred = atom.pred.negated() if atom.pred is not None else None
        return Atom(comp.render(), comp, pred)
    return Atom(f"not ({atom.label})", pred=atom.predicate().negated())


def children(f: Formula) -> tuple[Formula, ...]:
    if isinstance(f, (TrueFormula, Atom)):
        return ()
    if isinstance(f, Not):
        return (f.child,)
    if isinstance(f, (And, Or)):
        return (f.left, f.right)
    if isinstance(f, _BINARY_TEMPORAL):
        return (f.left, f.right)
    if isinstance(f, _UNARY_TEMPORAL):
        return (f.child,)
    raise TypeError(f"not a formula node: {f!r}")


def walk(f: Formula):
    yield f
    for child in children(f):
        yield from walk(child)


def atoms(f: Formula):
    for node in walk(f):
        if isinstance(node, Atom):
            yield node


def is_bounded(f: Formula) -> bool:
    """True when every future-time operator has a finite upper bound."""
    return all(
        node.interval.bounded for node in walk(f) if isinstance(node, _FUTURE)
    )


def is_pnf(f: Formula) -> bool:
    return not any(isinstance(node, Not) for node in walk(f))


def formula_length(f: Formula) -> int:
    """Steps past the enable time needed to decide the formula.

    Recursion: atoms contribute 0; negation is transparent; binary boolean
    nodes take the max; future operators add their interval's upper bound;
    past operators add nothing.
    """
    if isinstance(f, (TrueFormula, Atom)):
        return 0
    if isinstance(f, Not):
        return formula_length(f.child)
    if isinstance(f, (And, Or)):
        return max(formula_length(f.left), formula_length(f.right))
    if isinstance(f, (Until, Release)):
        return f.interval.upper() + max(formula_length(f.left), formula_length(f.right))
    if isinstance(f, (Eventually, Always)):
        return f.interval.upper() + formula_length(f.child)
    if isinstance(f, (Since, Trigger)):
        return max(formula_length(f.left), formula_length(f.right))
    if isinstance(f, (Once, Historically)):
        return formula_length(f.child)
    raise TypeError(f"not a formula node: {f!r}")


@dataclass(frozen=True)
class HorizonSpec:
    """Timing summary tying enable time, current time, and formula length."""

    tau0: int
    t: int
    length: int
    horizon: int

    @property
    def prediction_needed(self) -> bool:
        return self.horizon > 0


def horizon(tau0: int, t: int, length: int) -> HorizonSpec:
    """Prediction horizon H = tau0 + length - t (H <= 0: no prediction needed)."""
    if tau0 < 0 or t < 0:
        raise ValueError("tau0 and t must be >= 0")
    return HorizonSpec(tau0, t, length, tau0 + length - t)


def to_pnf(f: Formula) -> Formula:
    """Positive normal form: push negations into atoms via duality rewrites.

    The robust value of the result equals the input's exactly; Release and
    Trigger appear as the duals of until and since.
    """
    return _push(f, False)


def _push(f: Formula, negate: bool) -> Formula:
    if isinstance(f, TrueFormula):
        return false_formula() if negate else f
    if isinstance(f, Atom):
        return negate_atom(f) if negate else f
    if isinstance(f, Not):
        return _push(f.child, not negate)
    if isinstance(f, And):
        if negate:
            return Or(_push(f.left, True), _push(f.right, True))
        return And(_push(f.left, False), _push(f.right, False))
    if isinstance(f, Or):
        if negate:
            return And(_push(f.left, True), _push(f.right, True))
        return Or(_push(f.left, False), _push(f.right, False))
    if isinstance(f, Until):
        cls = Release if negate else Until
        return cls(f.interval, _push(f.left, negate), _push(f.right, negate))
    if isinstance(f, Release):
        cls = Until if negate else Release
        return cls(f.interval, _push(f.left, negate), _push(f.right, negate))
    if isinstance(f, Since):
        cls = Trigger if negate else Since
        return cls(f.interval, _push(f.left, negate), _push(f.right, negate))
    if isinstance(f, Trigger):
        cls = Since if negate else Trigger
        return cls(f.interval, _push(f.left, negate), _push(f.right, negate))
    if isinstance(f, Eventually):
        cls = Always if negate else Eventually
        return cls(f.interval, _push(f.child, negate))
    if isinstance(f, Always):
        cls = Eventually if negate else Always
        return cls(f.interval, _push(f.child, negate))
    if isinstance(f, Once):
        cls = Historically if negate else Once
        return cls(f.interval, _push(f.child, negate))
    if isinstance(f, Historically):
        cls = Once if negate else Historically
        return cls(f.interval, _push(f.child, negate))
    raise TypeError(f"not a formula node: {f!r}")


def truncate(f: Formula, hi: int) -> Formula:
    """Replace unbounded future intervals with the explicit upper bound ``hi``."""
    if hi < 0:
        raise IntervalError("truncation bound must be >= 0")

    def rebuild(node: Formula) -> Formula:
        if isinstance(node, (TrueFormula, Atom)):
            return node
        if isinstance(node, Not):
            return Not(rebuild(node.child))
        if isinstance(node, And):
            return And(rebuild(node.left), rebuild(node.right))
        if isinstance(node, Or):
            return Or(rebuild(node.left), rebuild(node.right))
        if isinstance(node, _BINARY_TEMPORAL):
            iv = _truncated(node.interval) if isinstance(node, _FUTURE) else node.interval
            return type(node)(iv, rebuild(node.left), rebuild(node.right))
        iv = _truncated(node.interval) if isinstance(node, _FUTURE) else node.interval
        return type(node)(iv, rebuild(node.child))

    def _truncated(iv: Interval) -> Interval:
        if iv.bounded:
            return iv
        if hi < iv.lo:
            raise IntervalError(
                f"truncation bound {hi} is below the interval's lower bound {iv.lo}"
            )
        return Interval(iv.lo, hi)

    return rebuild(f)


def truncate_to_length(f: Formula, length: int, tau0: int = 0) -> Formula:
    """Truncate unbounded future intervals to fit a trajectory of ``length`` steps."""
    return truncate(f, length - 1 - tau0)


def bind(f: Formula, variables) -> Formula:
    """Resolve symbolic atoms against the signal's component names, in order."""
    names = tuple(variables)

    def rebuild(node: Formula) -> Formula:
        if isinstance(node, Atom):
            if node.comparison is None:
                return node
            return Atom(node.label, node.comparison, node.comparison.bound_predicate(names))
        if isinstance(node, TrueFormula):
            return node
        if isinstance(node, Not):
            return Not(rebuild(node.child))
        if isinstance(node, (And, Or)):
            return type(node)(rebuild(node.left), rebuild(node.right))
        if isinstance(node, _BINARY_TEMPORAL):
            return type(node)(node.interval, rebuild(node.left), rebuild(node.right))
        return type(node)(node.interval, rebuild(node.child))

    return rebuild(f)


def variable_names(f: Formula) -> list[str]:
    """Component names referenced by the formula's atoms, in first-use order."""
    seen: list[str] = []
    for atom in atoms(f):
        if atom.comparison is None:
            continue
        for name in atom.comparison.names:
            if name not in seen:
                seen.append(name)
    return seen


def format_number(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


_PREFIX = {Eventually: "F", Always: "G", Once: "O", Historically: "H"}
_INFIX = {Until: "U", Since: "S", Release: "R", Trigger: "T"}


def render(f: Formula) -> str:
    """Canonical text form; ``parse(render(f))`` reproduces the tree."""
    if isinstance(f, TrueFormula):
        return "True"
    if isinstance(f, Atom):
        if f.comparison is not None:
            return f.comparison.render()
        if f.label == "False":
            return "False"
        raise ValueError(
            f"atom {f.label!r} has no textual form; it carries an opaque predicate"
        )
    if isinstance(f, Not):
        return f"!({render(f.child)})"
    if isinstance(f, And):
        return f"({render(f.left)} && {render(f.right)})"
    if isinstance(f, Or):
        return f"({render(f.left)} || {render(f.right)})"
    if isinstance(f, _UNARY_TEMPORAL):
        return f"{_PREFIX[type(f)]}{f.interval.render()} ({render(f.child)})"
    if isinstance(f, _BINARY_TEMPORAL):
        return f"(({render(f.left)}) {_INFIX[type(f)]}{f.interval.render()} ({render(f.right)}))"
    raise TypeError(f"not a formula node: {f!r}")


def formula_hash(f: Formula) -> str:
    """Stable short hash of the canonical text; binds calibrations to formulas."""
    return hashlib.sha256(render(f).encode("utf-8")).hexdigest()[:16]
