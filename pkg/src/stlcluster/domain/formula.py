"""STL formula abstract syntax tree.

Formulas are immutable, hashable dataclasses and can be shared freely across
threads. Intervals are closed ranges of integer time steps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Union

from stlcluster.domain import InvalidIntervalError

if TYPE_CHECKING:
    from stlcluster.domain.predicates import PredicateFunction


@dataclass(frozen=True)
class Interval:
    """Closed integer interval [start, end] of time offsets."""

    start: int
    end: int

    def __post_init__(self) -> None:
        if self.start < 0 or self.end < 0:
            raise InvalidIntervalError(
                f"Interval bounds must be non-negative, got [{self.start},{self.end}]",
                start=self.start,
                end=self.end,
            )
        if self.start > self.end:
            raise InvalidIntervalError(
                f"Interval start exceeds end: [{self.start},{self.end}]",
                start=self.start,
                end=self.end,
            )

    def __str__(self) -> str:
        return f"[{self.start},{self.end}]"


@dataclass(frozen=True)
class TrueFormula:
    """The constant true formula; robustness +inf."""


@dataclass(frozen=True)
class Predicate:
    """Atomic proposition h(x_t) > 0 bound to a predicate function."""

    name: str
    function: PredicateFunction


@dataclass(frozen=True)
class Not:
    child: Formula


@dataclass(frozen=True)
class And:
    children: tuple[Formula, ...]


@dataclass(frozen=True)
class Or:
    children: tuple[Formula, ...]


@dataclass(frozen=True)
class Until:
    left: Formula
    right: Formula
    interval: Interval


@dataclass(frozen=True)
class Eventually:
    child: Formula
    interval: Interval


@dataclass(frozen=True)
class Always:
    child: Formula
    interval: Interval


Formula = Union[TrueFormula, Predicate, Not, And, Or, Until, Eventually, Always]


def conjunction(*formulas: Formula) -> Formula:
    """Build a flattened n-ary conjunction; a single operand is returned as is."""
    children: list[Formula] = []
    for formula in formulas:
        if isinstance(formula, And):
            children.extend(formula.children)
        else:
            children.append(formula)
    return children[0] if len(children) == 1 else And(tuple(children))


def disjunction(*formulas: Formula) -> Formula:
    """Build a flattened n-ary disjunction; a single operand is returned as is."""
    children: list[Formula] = []
    for formula in formulas:
        if isinstance(formula, Or):
            children.extend(formula.children)
        else:
            children.append(formula)
    return children[0] if len(children) == 1 else Or(tuple(children))


def horizon(formula: Formula) -> int:
    """Number of future steps needed to evaluate ``formula`` at one time point.

    Nesting-sum of interval upper bounds: F[0,5] G[0,3] mu has horizon 8.
    """
    match formula:
        case TrueFormula() | Predicate():
            return 0
        case Not(child):
            return horizon(child)
        case And(children) | Or(children):
            return max(horizon(child) for child in children)
        case Until(left, right, interval):
            return interval.end + max(horizon(left), horizon(right))
        case Eventually(child, interval) | Always(child, interval):
            return interval.end + horizon(child)
    raise TypeError(f"Not an STL formula: {formula!r}")


def negation_normal_form(formula: Formula) -> Formula:
    """Push negations down to predicates.

    De Morgan rewriting handles conjunction and disjunction, and the duality
    F/G handles the temporal operators. A negated Until has no dual in this
    grammar and is kept as Not(Until(...)), evaluated as the negated robustness.
    """
    match formula:
        case TrueFormula() | Predicate():
            return formula
        case And(children):
            return conjunction(*(negation_normal_form(c) for c in children))
        case Or(children):
            return disjunction(*(negation_normal_form(c) for c in children))
        case Until(left, right, interval):
            return Until(negation_normal_form(left), negation_normal_form(right), interval)
        case Eventually(child, interval):
            return Eventually(negation_normal_form(child), interval)
        case Always(child, interval):
            return Always(negation_normal_form(child), interval)
        case Not(child):
            return _negate(child)
    raise TypeError(f"Not an STL formula: {formula!r}")


def _negate(formula: Formula) -> Formula:
    match formula:
        case TrueFormula() | Predicate():
            return Not(formula)
        case Not(child):
            return negation_normal_form(child)
        case And(children):
            return disjunction(*(_negate(c) for c in children))
        case Or(children):
            return conjunction(*(_negate(c) for c in children))
        case Eventually(child, interval):
            return Always(_negate(child), interval)
        case Always(child, interval):
            return Eventually(_negate(child), interval)
        case Until():
            return Not(negation_normal_form(formula))
    raise TypeError(f"Not an STL formula: {formula!r}")


def format_formula(formula: Formula) -> str:
    """Render ``formula`` in the text grammar accepted by the parser.

    Binary operators are fully parenthesized, so parsing the output gives back
    the same tree.
    """
    match formula:
        case TrueFormula():
            return "true"
        case Predicate(name):
            return name
        case Not(child):
            return f"not {format_formula(child)}"
        case And(children):
            return "(" + " and ".join(format_formula(c) for c in children) + ")"
        case Or(children):
            return "(" + " or ".join(format_formula(c) for c in children) + ")"
        case Until(left, right, interval):
            return f"({format_formula(left)} until{interval} {format_formula(right)})"
        case Eventually(child, interval):
            return f"F{interval} {format_formula(child)}"
        case Always(child, interval):
            return f"G{interval} {format_formula(child)}"
    raise TypeError(f"Not an STL formula: {formula!r}")


def predicates_of(formula: Formula) -> dict[str, PredicateFunction]:
    """All predicates referenced by ``formula``, keyed by name."""
    found: dict[str, PredicateFunction] = {}

    def visit(node: Formula) -> None:
        match node:
            case Predicate(name, function):
                found[name] = function
            case Not(child) | Eventually(child, _) | Always(child, _):
                visit(child)
            case And(children) | Or(children):
                for child in children:
                    visit(child)
            case Until(left, right, _):
                visit(left)
                visit(right)

    visit(formula)
    return found
