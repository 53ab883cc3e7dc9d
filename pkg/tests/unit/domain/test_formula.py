"""Unit tests for the STL formula tree."""

import pytest

from stlcluster.domain import InvalidIntervalError
from stlcluster.domain.formula import (
    Always,
    And,
    Eventually,
    Interval,
    Not,
    Or,
    Predicate,
    TrueFormula,
    Until,
    conjunction,
    disjunction,
    format_formula,
    horizon,
    negation_normal_form,
    predicates_of,
)
from stlcluster.domain.predicates import HalfPlane


@pytest.fixture
def mu():
    return Predicate("mu", HalfPlane((1.0,), 0.0))


@pytest.fixture
def nu():
    return Predicate("nu", HalfPlane((-1.0,), -2.0))


def test_should_reject_interval_with_start_after_end():
    """Test that [3,1] is rejected with its bounds attached."""
    with pytest.raises(InvalidIntervalError) as exc_info:
        Interval(3, 1)

    assert exc_info.value.start == 3
    assert exc_info.value.end == 1


def test_should_reject_negative_interval_bounds():
    with pytest.raises(InvalidIntervalError):
        Interval(-1, 2)


def test_should_compute_horizon_as_nested_sum_of_upper_bounds(mu):
    """Test that F[0,5] G[0,3] mu needs 8 future steps."""
    formula = Eventually(Always(mu, Interval(0, 3)), Interval(0, 5))

    assert horizon(formula) == 8


def test_should_compute_until_horizon_from_both_operands(mu, nu):
    formula = Until(Always(mu, Interval(0, 2)), nu, Interval(1, 4))

    assert horizon(formula) == 6
    assert horizon(mu) == 0
    assert horizon(And((mu, Eventually(nu, Interval(0, 7))))) == 7


def test_should_flatten_nested_conjunctions(mu, nu):
    """Test that conjunction(a, And(b, c)) becomes one three-way And."""
    inner = And((nu, TrueFormula()))

    formula = conjunction(mu, inner)

    assert isinstance(formula, And)
    assert formula.children == (mu, nu, TrueFormula())


def test_should_return_single_operand_unchanged(mu):
    assert conjunction(mu) is mu
    assert disjunction(mu) is mu


def test_should_push_negation_through_and_with_de_morgan(mu, nu):
    formula = negation_normal_form(Not(And((mu, nu))))

    assert formula == Or((Not(mu), Not(nu)))


def test_should_swap_eventually_and_always_under_negation(mu):
    interval = Interval(0, 4)

    assert negation_normal_form(Not(Eventually(mu, interval))) == Always(Not(mu), interval)
    assert negation_normal_form(Not(Always(mu, interval))) == Eventually(Not(mu), interval)


def test_should_cancel_double_negation(mu):
    assert negation_normal_form(Not(Not(mu))) == mu


def test_should_keep_negated_until(mu, nu):
    """Test that not(mu U nu) stays a negated Until node."""
    formula = Not(Until(mu, nu, Interval(0, 2)))

    assert negation_normal_form(formula) == formula


def test_should_format_formula_in_parser_syntax(mu, nu):
    formula = And((Eventually(mu, Interval(0, 5)), Until(mu, Not(nu), Interval(1, 2))))

    assert format_formula(formula) == "(F[0,5] mu and (mu until[1,2] not nu))"


def test_should_collect_predicates_by_name(mu, nu):
    formula = Or((Always(mu, Interval(0, 1)), Until(TrueFormula(), nu, Interval(0, 1))))

    found = predicates_of(formula)

    assert set(found) == {"mu", "nu"}
    assert found["mu"] is mu.function
