"""Parser for the STL text grammar.

Grammar (lowest to highest precedence)::

    formula  := or_expr
    or_expr  := and_expr ("or" and_expr)*
    and_expr := until_expr ("and" until_expr)*
    until    := unary (("until" | "U") interval unary)*
    unary    := "not" unary | ("F" | "G") interval unary | primary
    primary  := "true" | IDENT | "(" or_expr ")"
    interval := "[" INT "," INT "]"

``and``/``or``/``until`` are left-associative and chains of ``and`` (``or``) are
flattened into one n-ary node. Identifiers resolve against a PredicateRegistry.
The result is returned in negation normal form.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from stlcluster.domain import InvalidIntervalError, StlSyntaxError, UnknownPredicateError
from stlcluster.domain.formula import (
    Always,
    Eventually,
    Formula,
    Interval,
    Not,
    Predicate,
    TrueFormula,
    Until,
    conjunction,
    disjunction,
    negation_normal_form,
)
from stlcluster.domain.predicates import PredicateRegistry

_TOKEN_PATTERN = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
    |(?P<newline>\n)
    |(?P<int>\d+)
    |(?P<ident>[A-Za-z_][A-Za-z0-9_]*)
    |(?P<lparen>\()
    |(?P<rparen>\))
    |(?P<lbracket>\[)
    |(?P<rbracket>\])
    |(?P<comma>,)
    """,
    re.VERBOSE,
)

_KEYWORDS = {"true", "not", "and", "or", "until"}
_TEMPORAL = {"F", "G", "U"}


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    column: int


def tokenize(text: str) -> list[Token]:
    """Split STL source into tokens with 1-based positions.

    Raises:
        StlSyntaxError: On a character outside the grammar
    """
    tokens: list[Token] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        match = _TOKEN_PATTERN.match(text, pos)
        if match is None:
            raise StlSyntaxError(f"Unexpected character '{text[pos]}'", line, pos - line_start + 1)
        kind = match.lastgroup or ""
        value = match.group()
        if kind == "newline":
            line += 1
            line_start = match.end()
        elif kind != "ws":
            if kind == "ident" and (value in _KEYWORDS or value in _TEMPORAL):
                kind = value
            tokens.append(Token(kind, value, line, pos - line_start + 1))
        pos = match.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str, registry: PredicateRegistry):
        self.tokens = tokenize(text)
        self.registry = registry
        self.pos = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def expect(self, kind: str, what: str) -> Token:
        token = self.current
        if token.kind != kind:
            found = token.text or "end of input"
            raise StlSyntaxError(f"Expected {what}, found '{found}'", token.line, token.column)
        return self.advance()

    def parse(self) -> Formula:
        formula = self.or_expr()
        if self.current.kind != "eof":
            token = self.current
            raise StlSyntaxError(f"Unexpected '{token.text}'", token.line, token.column)
        return formula

    def or_expr(self) -> Formula:
        operands = [self.and_expr()]
        while self.current.kind == "or":
            self.advance()
            operands.append(self.and_expr())
        return disjunction(*operands) if len(operands) > 1 else operands[0]

    def and_expr(self) -> Formula:
        operands = [self.until_expr()]
        while self.current.kind == "and":
            self.advance()
            operands.append(self.until_expr())
        return conjunction(*operands) if len(operands) > 1 else operands[0]

    def until_expr(self) -> Formula:
        left = self.unary()
        while self.current.kind in ("until", "U"):
            self.advance()
            interval = self.interval()
            right = self.unary()
            left = Until(left, right, interval)
        return left

    def unary(self) -> Formula:
        token = self.current
        if token.kind == "not":
            self.advance()
            return Not(self.unary())
        if token.kind in ("F", "G"):
            self.advance()
            interval = self.interval()
            child = self.unary()
            return Eventually(child, interval) if token.kind == "F" else Always(child, interval)
        return self.primary()

    def primary(self) -> Formula:
        token = self.current
        if token.kind == "true":
            self.advance()
            return TrueFormula()
        if token.kind == "ident":
            self.advance()
            try:
                return Predicate(token.text, self.registry.get(token.text))
            except UnknownPredicateError as exc:
                raise UnknownPredicateError(
                    f"Unknown predicate id '{token.text}' (line {token.line}, "
                    f"column {token.column})",
                    name=exc.name,
                ) from None
        if token.kind == "lparen":
            self.advance()
            inner = self.or_expr()
            self.expect("rparen", "')'")
            return inner
        found = token.text or "end of input"
        raise StlSyntaxError(f"Expected a formula, found '{found}'", token.line, token.column)

    def interval(self) -> Interval:
        opening = self.expect("lbracket", "'['")
        start = int(self.expect("int", "interval start").text)
        self.expect("comma", "','")
        end = int(self.expect("int", "interval end").text)
        self.expect("rbracket", "']'")
        if start > end:
            raise InvalidIntervalError(
                f"Interval start exceeds end: [{start},{end}] "
                f"(line {opening.line}, column {opening.column})",
                start=start,
                end=end,
            )
        return Interval(start, end)


def parse(text: str, registry: PredicateRegistry) -> Formula:
    """Parse STL source text into a formula in negation normal form.

    Args:
        text: Formula source, e.g. ``"G[0,25] not obs1"``
        registry: Predicates that identifiers resolve to

    Returns:
        Parsed formula

    Raises:
        StlSyntaxError: If the text does not conform to the grammar
        UnknownPredicateError: If an identifier is not registered
        InvalidIntervalError: If an interval has start > end

    Example:
        >>> registry = PredicateRegistry({"goal": Box((0.0,), (1.0,), dims=(0,))})
        >>> parse("F[0,5] goal", registry)
        Eventually(child=Predicate(name='goal', ...), interval=Interval(start=0, end=5))
    """
    return negation_normal_form(_Parser(text, registry).parse())
