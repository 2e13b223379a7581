"""Tokenizer and recursive-descent parser for the transformation language.

The grammar (documented in docs/transform-language.md) admits arithmetic
over declared variables and local let-bindings, comparisons to 0/1
indicators, boolean connectives over indicators, and min/max. Everything
else, in particular loops, general calls, division, and assignment to new
names, is rejected at parse time with a position-carrying error.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable

from ..errors import TransformSyntaxError
from .ast import (
    And,
    BinOp,
    Cmp,
    Expr,
    Let,
    Max,
    Min,
    Neg,
    Not,
    Num,
    Or,
    Var,
)

KEYWORDS = {"let", "in", "and", "or", "not", "min", "max"}

_TOKEN_RE = re.compile(
    r"""
    (?P<number>(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|==|[<>=+\-*(),])
  | (?P<ws>[ \t]+)
  | (?P<newline>\n)
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # number | name | keyword | op | end
    text: str
    line: int
    column: int


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    line, col = 1, 1
    pos = 0
    while pos < len(source):
        match = _TOKEN_RE.match(source, pos)
        if match is None:
            ch = source[pos]
            hint = ""
            if ch == "/":
                hint = "; division is not part of the language"
            raise TransformSyntaxError(f"unexpected character {ch!r}{hint}", line, col)
        kind = match.lastgroup
        text = match.group()
        if kind == "newline":
            line += 1
            col = 1
        elif kind == "ws":
            col += len(text)
        else:
            if kind == "name" and text in KEYWORDS:
                kind = "keyword"
            if kind == "op" and text == "==":
                text = "="  # canonical equality spelling
            tokens.append(Token(kind, text, line, col))
            col += len(match.group())
        pos = match.end()
    tokens.append(Token("end", "", line, col))
    return tokens


class _Parser:
    def __init__(self, tokens: list[Token], declared: frozenset[str]) -> None:
        self.tokens = tokens
        self.pos = 0
        self.declared = declared
        self.locals: list[str] = []

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, message: str, tok: Token | None = None) -> TransformSyntaxError:
        tok = tok or self.peek()
        return TransformSyntaxError(message, tok.line, tok.column)

    def expect(self, text: str) -> Token:
        tok = self.peek()
        if tok.text != text:
            raise self.error(f"expected {text!r}, found {tok.text or 'end of input'!r}")
        return self.advance()

    def parse(self) -> Expr:
        expr = self.expression()
        tok = self.peek()
        if tok.kind != "end":
            raise self.error(f"unexpected trailing input {tok.text!r}")
        return expr

    def expression(self) -> Expr:
        if self.peek().text == "let":
            self.advance()
            name_tok = self.peek()
            if name_tok.kind != "name":
                raise self.error("expected a name after 'let'")
            self.advance()
            self.expect("=")
            bound = self.or_expr()
            self.expect("in")
            self.locals.append(name_tok.text)
            body = self.expression()
            self.locals.pop()
            return Let(name_tok.text, bound, body)
        return self.or_expr()

    def or_expr(self) -> Expr:
        expr = self.and_expr()
        while self.peek().text == "or":
            self.advance()
            expr = Or(expr, self.and_expr())
        return expr

    def and_expr(self) -> Expr:
        expr = self.not_expr()
        while self.peek().text == "and":
            self.advance()
            expr = And(expr, self.not_expr())
        return expr

    def not_expr(self) -> Expr:
        if self.peek().text == "not":
            self.advance()
            return Not(self.not_expr())
        return self.comparison()

    def comparison(self) -> Expr:
        expr = self.additive()
        tok = self.peek()
        if tok.text in ("<", "<=", "=", ">", ">="):
            self.advance()
            return Cmp(tok.text, expr, self.additive())
        return expr

    def additive(self) -> Expr:
        expr = self.multiplicative()
        while self.peek().text in ("+", "-"):
            op = self.advance().text
            expr = BinOp(op, expr, self.multiplicative())
        return expr

    def multiplicative(self) -> Expr:
        expr = self.unary()
        while self.peek().text == "*":
            self.advance()
            expr = BinOp("*", expr, self.unary())
        return expr

    def unary(self) -> Expr:
        if self.peek().text == "-":
            self.advance()
            return Neg(self.unary())
        return self.primary()

    def primary(self) -> Expr:
        tok = self.peek()
        if tok.kind == "number":
            self.advance()
            return Num(float(tok.text))
        if tok.text in ("min", "max"):
            self.advance()
            self.expect("(")
            left = self.expression()
            self.expect(",")
            right = self.expression()
            self.expect(")")
            return Min(left, right) if tok.text == "min" else Max(left, right)
        if tok.kind == "name":
            self.advance()
            if self.peek().text == "(":
                raise self.error(
                    f"calls are not allowed; only min(...) and max(...) exist", tok
                )
            if tok.text in self.declared or tok.text in self.locals:
                return Var(tok.text)
            hint = ""
            if self.peek().text == "=":
                hint = (
                    "; assignment to new names is not allowed, use "
                    "'let name = expr in body' for locals"
                )
            raise self.error(f"undeclared variable {tok.text!r}{hint}", tok)
        if tok.text == "(":
            self.advance()
            expr = self.expression()
            self.expect(")")
            return expr
        if tok.kind == "keyword":
            raise self.error(f"misplaced keyword {tok.text!r}")
        raise self.error(
            f"expected a value, found {tok.text or 'end of input'!r}"
        )


def parse(source: str, declared_variables: Iterable[str]) -> Expr:
    """Parse a transformation program against a set of declared variables.

    Raises TransformSyntaxError (with line and column) for anything outside
    the grammar, including references to undeclared names.
    """
    tokens = tokenize(source)
    return _Parser(tokens, frozenset(declared_variables)).parse()
