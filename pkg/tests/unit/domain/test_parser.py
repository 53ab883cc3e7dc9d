"""Unit tests for the STL text parser."""

import pytest

from stlcluster.domain import InvalidIntervalError, StlSyntaxError, UnknownPredicateError
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
    format_formula,
)
from stlcluster.domain.parser import parse, tokenize
from stlcluster.domain.predicates import Box, Circle, HalfPlane, PredicateRegistry


@pytest.fixture
def registry():
    return PredicateRegistry(
        {
            "goal": Box((6.0, 16.0), (10.0, 18.0)),
            "tr1": Box((1.0, 8.0), (4.0, 11.0)),
            "obs1": Circle((5.0, 5.0), 1.5),
            "mu": HalfPlane((1.0,), 0.5),
        }
    )


def test_should_parse_eventually_with_interval(registry):
    formula = parse("F[0,25] goal", registry)

    assert formula == Eventually(Predicate("goal", registry.get("goal")), Interval(0, 25))


def test_should_bind_and_tighter_than_or(registry):
    formula = parse("mu or goal and tr1", registry)

    assert isinstance(formula, Or)
    assert isinstance(formula.children[1], And)


def test_should_flatten_chained_conjunctions(registry):
    formula = parse("mu and goal and tr1", registry)

    assert isinstance(formula, And)
    assert len(formula.children) == 3


def test_should_accept_until_keyword_and_short_form(registry):
    long_form = parse("mu until[0,3] goal", registry)
    short_form = parse("mu U[0,3] goal", registry)

    assert long_form == short_form
    assert isinstance(long_form, Until)
    assert long_form.interval == Interval(0, 3)


def test_should_return_negation_normal_form(registry):
    """Test that negations are pushed to the predicates."""
    formula = parse("not F[0,4] (obs1 or mu)", registry)

    obs1 = Predicate("obs1", registry.get("obs1"))
    mu = Predicate("mu", registry.get("mu"))
    assert formula == Always(And((Not(obs1), Not(mu))), Interval(0, 4))


def test_should_parse_true_constant(registry):
    assert parse("true", registry) == TrueFormula()


def test_should_report_line_and_column_of_syntax_error(registry):
    with pytest.raises(StlSyntaxError) as exc_info:
        parse("F[0,5] goal\nand )", registry)

    assert exc_info.value.line == 2
    assert exc_info.value.column == 5


def test_should_reject_missing_interval(registry):
    with pytest.raises(StlSyntaxError):
        parse("G goal", registry)


def test_should_reject_unexpected_character(registry):
    with pytest.raises(StlSyntaxError) as exc_info:
        parse("goal & mu", registry)

    assert exc_info.value.column == 6


def test_should_reject_unknown_predicate(registry):
    with pytest.raises(UnknownPredicateError) as exc_info:
        parse("F[0,5] lake", registry)

    assert exc_info.value.name == "lake"


def test_should_reject_reversed_interval(registry):
    with pytest.raises(InvalidIntervalError) as exc_info:
        parse("G[5,2] goal", registry)

    assert (exc_info.value.start, exc_info.value.end) == (5, 2)


def test_should_reparse_formatted_formula_to_same_tree(registry):
    source = "(F[0,25] tr1 or G[2,4] not mu) and (mu until[1,3] goal) and not obs1"
    formula = parse(source, registry)

    assert parse(format_formula(formula), registry) == formula


def test_should_tokenize_keywords_with_positions():
    tokens = tokenize("G[0,3] not x")

    assert [t.kind for t in tokens] == [
        "G",
        "lbracket",
        "int",
        "comma",
        "int",
        "rbracket",
        "not",
        "ident",
        "eof",
    ]
    assert tokens[7].column == 12
