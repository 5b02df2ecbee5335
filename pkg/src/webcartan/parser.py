"""Recursive-descent parser for infix expressions.

Precedence, tightest first: ``^`` (right associative), unary minus,
``*`` and ``/``, ``+`` and ``-``.  Function calls are ``name(arg)`` for the
names in :data:`webcartan.expr.FUNCTIONS`.
"""

from __future__ import annotations

import re
from fractions import Fraction
from typing import Iterable

from . import expr as ex
from .errors import ExprSyntaxError, UnknownVariable

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z][A-Za-z0-9_]*)"
    r"|(?P<op>\*\*|[-+*/^(),])"
    r")"
)


class _Token:
    __slots__ = ("kind", "text", "offset")

    def __init__(self, kind, text, offset):
        self.kind, self.text, self.offset = kind, text, offset


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    end = len(text.rstrip())
    while pos < end:
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            start = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character {text[start]!r}", text, _bytes(text, start))
        kind = m.lastgroup
        tok = m.group(kind)
        tokens.append(_Token(kind, "^" if tok == "**" else tok, _bytes(text, m.start(kind))))
        pos = m.end()
    tokens.append(_Token("end", "", _bytes(text, len(text))))
    return tokens


def _bytes(text: str, index: int) -> int:
    return len(text[:index].encode("utf-8"))


class _Parser:
    def __init__(self, text: str, names: set[str]):
        self.text = text
        self.names = names
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def take(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, tok: _Token, what: str):
        found = "end of input" if tok.kind == "end" else repr(tok.text)
        raise ExprSyntaxError(f"expected {what}, found {found}", self.text, tok.offset)

    def expect(self, op: str) -> None:
        tok = self.take()
        if tok.kind != "op" or tok.text != op:
            self.fail(tok, repr(op))

    def parse(self) -> ex.Expr:
        e = self.sum()
        tok = self.peek()
        if tok.kind != "end":
            self.fail(tok, "operator or end of input")
        return e

    def sum(self) -> ex.Expr:
        terms = [self.product()]
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.take().text
            rhs = self.product()
            terms.append(rhs if op == "+" else ex.neg(rhs))
        return terms[0] if len(terms) == 1 else ex.add(*terms)

    def product(self) -> ex.Expr:
        lhs = self.unary()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.take().text
            rhs = self.unary()
            lhs = ex.mul(lhs, rhs) if op == "*" else ex.quotient(lhs, rhs)
        return lhs

    def unary(self) -> ex.Expr:
        tok = self.peek()
        if tok.kind == "op" and tok.text in "+-":
            self.take()
            operand = self.unary()
            return ex.neg(operand) if tok.text == "-" else operand
        return self.power()

    def power(self) -> ex.Expr:
        base = self.atom()
        if self.peek().kind == "op" and self.peek().text == "^":
            self.take()
            return ex.power(base, self.unary())
        return base

    def atom(self) -> ex.Expr:
        tok = self.take()
        if tok.kind == "num":
            return ex.Const(Fraction(tok.text))
        if tok.kind == "ident":
            nxt = self.peek()
            if nxt.kind == "op" and nxt.text == "(":
                if tok.text not in ex.FUNCTIONS:
                    raise ExprSyntaxError(f"unknown function {tok.text!r}", self.text, tok.offset)
                self.take()
                arg = self.sum()
                self.expect(")")
                return ex.func(tok.text, arg)
            if tok.text not in self.names:
                raise UnknownVariable(tok.text, tok.offset)
            return ex.Var(tok.text)
        if tok.kind == "op" and tok.text == "(":
            inner = self.sum()
            self.expect(")")
            return inner
        self.fail(tok, "number, name or '('")


def parse(text: str, vars: Iterable[str]) -> ex.Expr:
    """Parse ``text`` into a canonical expression over the names ``vars``.

    >>> str(parse("ln(x2^2)", ["x1", "x2"]))
    'ln(x2^2)'
    """
    names = list(vars)
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate variable names in {names}")
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", text, 0)
    return _Parser(text, set(names)).parse()
