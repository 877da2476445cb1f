"""Formula construction, parsing, normal form, length, and horizon."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prvkit.errors import (
    FormulaSyntaxError,
    IntervalError,
    UnboundedFormulaError,
    UnboundPredicateError,
)
from prvkit.formulas import (
    Always,
    And,
    Atom,
    Comparison,
    Eventually,
    Historically,
    Interval,
    Not,
    Once,
    Or,
    Release,
    Since,
    Trigger,
    TrueFormula,
    Until,
    bind,
    formula_length,
    horizon,
    is_bounded,
    is_pnf,
    render,
    to_pnf,
    truncate,
    truncate_to_length,
    variable_names,
)
from prvkit.parsing import parse
from prvkit.semantics import eval_robust

from oracles import random_formula


class TestParse:
    def test_always_with_predicate(self):
        f = parse("G[0,200](h >= 750)")
        assert isinstance(f, Always)
        assert f.interval == Interval(0, 200)
        assert isinstance(f.child, Atom)
        assert f.child.comparison == Comparison(("h",), ">=", 750.0)

    def test_true_literal(self):
        assert parse("True") == TrueFormula()

    def test_infix_until(self):
        f = parse("(a >= 0) U[2,5] (b >= 1)")
        assert isinstance(f, Until)
        assert f.interval == Interval(2, 5)
        assert f.left.comparison.names == ("a",)
        assert f.right.comparison.names == ("b",)

    def test_precedence_not_temporal_and_or(self):
        f = parse("!a >= 0 && G[0,1] b >= 0 || c >= 0")
        assert isinstance(f, Or)
        assert isinstance(f.left, And)
        assert isinstance(f.left.left, Not)
        assert isinstance(f.left.right, Always)

    def test_temporal_binds_to_following_formula(self):
        f = parse("G[0,2] a >= 0 && b >= 0")
        assert isinstance(f, And)
        assert isinstance(f.left, Always)

    def test_norm2_atom(self):
        f = parse("norm2(x, y) <= 1.5")
        assert isinstance(f, Atom)
        assert f.comparison == Comparison(("x", "y"), "<=", 1.5, use_norm=True)

    def test_operator_letter_as_component_name(self):
        # an identifier is an operator only when an interval follows
        f = parse("G >= 5")
        assert isinstance(f, Atom)
        assert f.comparison.names == ("G",)

    def test_unbounded_interval_accepted(self):
        f = parse("G[10,inf](c <= 2.25)")
        assert isinstance(f, Always)
        assert f.interval.hi is None
        assert not is_bounded(f)

    def test_syntax_error_carries_position(self):
        with pytest.raises(FormulaSyntaxError) as err:
            parse("G[0,2](a >= )")
        assert err.value.position is not None

    def test_unknown_operator(self):
        with pytest.raises(FormulaSyntaxError, match="unknown temporal operator"):
            parse("X[0,2](a >= 0)")

    def test_malformed_interval_lo_greater_hi(self):
        with pytest.raises(FormulaSyntaxError, match="lo 5 exceeds hi 2"):
            parse("G[5,2](a >= 0)")

    def test_negative_interval_bound(self):
        with pytest.raises(FormulaSyntaxError):
            parse("G[-1,2](a >= 0)")

    def test_real_valued_interval_rejected(self):
        with pytest.raises(FormulaSyntaxError, match="integer step counts"):
            parse("G[0,2.5](a >= 0)")

    def test_trailing_garbage(self):
        with pytest.raises(FormulaSyntaxError):
            parse("True True")


class TestFormulaLength:
    def test_predicate_is_zero(self):
        assert formula_length(parse("a >= 0")) == 0
        assert formula_length(TrueFormula()) == 0

    def test_always_adds_upper_bound(self):
        assert formula_length(parse("G[0,200](h >= 750)")) == 200

    def test_conjunction_of_untils(self):
        f = parse("((a >= 0) U[2,5] (b >= 0)) && ((c >= 0) U[0,9] (d >= 0))")
        assert formula_length(f) == 9

    def test_nested_until_accumulates(self):
        f = parse("(a >= 0) U[2,5] ((b >= 0) U[0,3] (c >= 0))")
        assert formula_length(f) == 5 + 3

    def test_past_operators_add_nothing(self):
        assert formula_length(parse("(a >= 0) S[2,5] (b >= 0)")) == 0
        assert formula_length(parse("O[0,7](a >= 0)")) == 0
        assert formula_length(parse("G[0,4] O[0,9] (a >= 0)")) == 4

    def test_unbounded_future_interval_raises(self):
        with pytest.raises(UnboundedFormulaError):
            formula_length(parse("G[10,inf](c <= 2.25)"))

    def test_monotone_under_conjunction(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            f = random_formula(rng, ["a", "b"])
            g = random_formula(rng, ["a", "b"])
            for combined in (And(f, g), Or(f, g)):
                assert formula_length(combined) >= formula_length(f)
                assert formula_length(combined) >= formula_length(g)


class TestTruncate:
    def test_truncates_unbounded_future(self):
        f = truncate(parse("G[10,inf](c <= 2.25)"), 60)
        assert f.interval == Interval(10, 60)
        assert formula_length(f) == 60

    def test_bounded_intervals_untouched(self):
        f = parse("G[0,5](a >= 0)")
        assert truncate(f, 99) == f

    def test_to_trajectory_length(self):
        f = truncate_to_length(parse("G[10,inf](c <= 2.25)"), length=100, tau0=0)
        assert f.interval == Interval(10, 99)

    def test_bound_below_lower_endpoint(self):
        with pytest.raises(IntervalError):
            truncate(parse("G[10,inf](c <= 2.25)"), 4)


class TestHorizon:
    def test_online_monitoring_instance(self):
        spec = horizon(tau0=230, t=230, length=200)
        assert spec.horizon == 200
        assert spec.prediction_needed

    def test_degenerate(self):
        assert horizon(0, 0, 0).horizon == 0
        assert not horizon(0, 0, 0).prediction_needed

    def test_midway(self):
        assert horizon(tau0=0, t=100, length=250).horizon == 150

    def test_negative_horizon_means_decidable(self):
        assert horizon(tau0=0, t=10, length=3).horizon == -7


class TestPositiveNormalForm:
    def test_double_negation(self):
        f = parse("!!(a >= 0)")
        assert to_pnf(f) == parse("a >= 0")

    def test_de_morgan_into_atoms(self):
        f = to_pnf(parse("!((a >= 0) && (b >= 1))"))
        assert isinstance(f, Or)
        assert f.left.comparison == Comparison(("a",), "<", 0.0)
        assert f.right.comparison == Comparison(("b",), "<", 1.0)

    def test_negated_always_becomes_eventually(self):
        """Robust value is preserved exactly on random signals."""
        f = parse("!G[0,3](x1 >= 0)", ["x1"])
        g = to_pnf(f)
        assert isinstance(g, Eventually)
        rng = np.random.default_rng(5)
        for _ in range(20):
            signal = rng.normal(size=(6, 1))
            assert eval_robust(g, signal, 0) == eval_robust(f, signal, 0)

    def test_negated_until_becomes_release(self):
        f = to_pnf(parse("!((a >= 0) U[0,3] (b >= 0))"))
        assert isinstance(f, Release)
        assert f.interval == Interval(0, 3)

    def test_negated_since_becomes_trigger(self):
        f = to_pnf(parse("!((a >= 0) S[0,3] (b >= 0))"))
        assert isinstance(f, Trigger)

    def test_negated_true_is_false_atom(self):
        f = to_pnf(Not(TrueFormula()))
        assert isinstance(f, Atom)
        assert f.label == "False"
        assert f.pred.value([0.0]) == -math.inf

    def test_no_not_nodes_on_random_corpus(self):
        rng = np.random.default_rng(23)
        for _ in range(200):
            f = random_formula(rng, ["a", "b", "c"])
            assert is_pnf(to_pnf(f))

    def test_strict_comparisons_flip(self):
        assert to_pnf(parse("!(a > 1)")).comparison == Comparison(("a",), "<=", 1.0)
        assert to_pnf(parse("!(a < 1)")).comparison == Comparison(("a",), ">=", 1.0)


_names = st.sampled_from(["a", "b", "c_e", "theta_e"])
_thresholds = st.floats(allow_nan=False, allow_infinity=False, width=64)
_ops = st.sampled_from([">=", "<=", ">", "<"])
_atoms = st.builds(
    lambda comp: Atom(comp.render(), comp),
    st.one_of(
        st.builds(Comparison, st.tuples(_names), _ops, _thresholds),
        st.builds(
            Comparison,
            st.lists(_names, min_size=1, max_size=3, unique=True).map(tuple),
            _ops,
            _thresholds,
            st.just(True),
        ),
    ),
)
_intervals = st.builds(
    lambda lo, width: Interval(lo, None if width is None else lo + width),
    st.integers(0, 6),
    st.one_of(st.none(), st.integers(0, 6)),
)
_formulas = st.recursive(
    st.one_of(st.just(TrueFormula()), _atoms),
    lambda sub: st.one_of(
        st.builds(Not, sub),
        st.builds(And, sub, sub),
        st.builds(Or, sub, sub),
        st.builds(Until, _intervals, sub, sub),
        st.builds(Since, _intervals, sub, sub),
        st.builds(Release, _intervals, sub, sub),
        st.builds(Trigger, _intervals, sub, sub),
        st.builds(Eventually, _intervals, sub),
        st.builds(Always, _intervals, sub),
        st.builds(Once, _intervals, sub),
        st.builds(Historically, _intervals, sub),
    ),
    max_leaves=8,
)


class TestRenderRoundTrip:
    @given(_formulas)
    @settings(max_examples=300, deadline=None)
    def test_round_trip_is_structural_identity(self, f):
        assert parse(render(f)) == f

    def test_round_trip_on_random_corpus(self):
        rng = np.random.default_rng(77)
        for _ in range(300):
            f = random_formula(rng, ["a", "b", "c"])
            assert parse(render(f)) == f

    def test_round_trip_of_normal_forms(self):
        """Rendered normal forms (with Release/Trigger duals) read back."""
        rng = np.random.default_rng(78)
        for _ in range(100):
            g = to_pnf(random_formula(rng, ["a", "b"]))
            assert parse(render(g)) == g

    def test_altitude_guard_renders_cleanly(self):
        text = "G[0,200] (h >= 750)"
        assert render(parse(text)) == text


class TestBinding:
    def test_bind_resolves_components(self):
        f = parse("(a >= 0) && (b <= 2)")
        bound = bind(f, ["b", "a"])
        assert bound.left.pred.a == (0.0, 1.0)
        assert bound.right.pred.a == (-1.0, 0.0)
        assert bound.right.pred.b == 2.0

    def test_unbound_atom_cannot_evaluate(self):
        f = parse("a >= 0")
        with pytest.raises(UnboundPredicateError):
            eval_robust(f, [[1.0]], 0)

    def test_unknown_component_name(self):
        with pytest.raises(UnboundPredicateError, match="no component named"):
            bind(parse("q >= 0"), ["a", "b"])

    def test_variable_names_in_first_use_order(self):
        f = parse("(b >= 0) && ((a >= 0) || norm2(b, c) <= 1)")
        assert variable_names(f) == ["b", "a", "c"]


class TestImmutability:
    def test_nodes_are_frozen(self):
        f = parse("G[0,2](a >= 0)")
        with pytest.raises(AttributeError):
            f.interval = Interval(0, 3)

    def test_operations_do_not_mutate(self):
        f = parse("!G[0,3](a >= 0)")
        before = render(f)
        to_pnf(f)
        bind(f, ["a"])
        assert render(f) == before
