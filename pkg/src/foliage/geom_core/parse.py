"""Infix expression grammar used by JSON payloads and the CLI.

    expr  := term (('+' | '-') term)*
    term  := unary (('*' | '/') unary)*
    unary := ('-' | '+') unary | power
    power := atom ('^' unary)?          # right-associative, integer exponents
    atom  := NUMBER | y1..y9 | FUNC '(' expr ')' | '(' expr ')'
"""
from __future__ import annotations

import re

from ..errors import ParseError
from .expr import FUNCTIONS, Const, Expression, add, div, func, mul, neg, power, sub, var

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<var>y[1-9])(?![0-9A-Za-z_])"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos:pos + 1]!r} at offset {pos} in {text!r}")
        kind = m.lastgroup
        tokens.append((kind, m.group(kind)))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str, q: int | None):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.q = q

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None)

    def take(self, value=None):
        tok = self.peek()
        if tok[0] is None:
            raise ParseError(f"unexpected end of input in {self.text!r}")
        if value is not None and tok[1] != value:
            raise ParseError(f"expected {value!r}, found {tok[1]!r} in {self.text!r}")
        self.i += 1
        return tok

    def parse(self) -> Expression:
        if not self.tokens:
            raise ParseError("empty expression")
        e = self.expr()
        if self.i != len(self.tokens):
            raise ParseError(f"trailing input {self.tokens[self.i][1]!r} in {self.text!r}")
        return e

    def expr(self) -> Expression:
        e = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            rhs = self.term()
            e = add(e, rhs) if op == "+" else sub(e, rhs)
        return e

    def term(self) -> Expression:
        e = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            rhs = self.unary()
            e = mul(e, rhs) if op == "*" else div(e, rhs)
        return e

    def unary(self) -> Expression:
        if self.peek()[1] == "-":
            self.take()
            return neg(self.unary())
        if self.peek()[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Expression:
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            exponent = self.unary()
            if not isinstance(exponent, Const) or exponent.value != int(exponent.value):
                raise ParseError(f"exponents must be integer literals in {self.text!r}")
            return power(base, int(exponent.value))
        return base

    def atom(self) -> Expression:
        kind, value = self.take()
        if kind == "num":
            return Const(float(value))
        if kind == "var":
            index = int(value[1:]) - 1
            if self.q is not None and index >= self.q:
                raise ParseError(f"{value} used in a {self.q}-dimensional expression")
            return var(index)
        if kind == "name":
            if value not in FUNCTIONS:
                raise ParseError(f"unknown function {value!r} in {self.text!r}")
            self.take("(")
            arg = self.expr()
            self.take(")")
            return func(value, arg)
        if value == "(":
            e = self.expr()
            self.take(")")
            return e
        raise ParseError(f"unexpected token {value!r} in {self.text!r}")


def parse_expr(text: str, q: int | None = None) -> Expression:
    """Parse an infix string; `q`, when given, bounds the admissible coordinates."""
    if not isinstance(text, str):
        raise ParseError(f"expression must be a string, got {type(text).__name__}")
    return _Parser(text, q).parse()
