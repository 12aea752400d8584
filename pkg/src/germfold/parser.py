"""Recursive-descent parser for polynomial text.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | '+' unary | power
    power  := atom ('^' INT)?
    atom   := NUMBER | NAME | '(' expr ')'

Division is only allowed by a nonzero constant.  Juxtaposition ("2x")
is rejected.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .poly import WPolynomial


class PolySyntaxError(ValueError):
    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        super().__init__(f"{message} at offset {position}")


class UnknownVariableError(PolySyntaxError):
    pass


class NegativeExponentError(PolySyntaxError):
    pass


_TOKEN = re.compile(r"\s*(?:(?P<num>\d+(?:\.\d+)?)|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/^()]))")


@dataclass
class _Tok:
    kind: str
    value: str
    pos: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            bad = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise PolySyntaxError(f"unexpected character {text[bad]!r}", bad, text)
        kind = m.lastgroup
        start = m.start(kind)
        toks.append(_Tok(kind, m.group(kind), start))
        pos = m.end()
    toks.append(_Tok("end", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str, var_names: Sequence[str]):
        self.text = text
        self.names = {n: i for i, n in enumerate(var_names)}
        self.n = len(var_names)
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def _fail(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.tok
        raise PolySyntaxError(msg, tok.pos, self.text)

    def _eat(self, value: str) -> bool:
        if self.tok.kind == "op" and self.tok.value == value:
            self.i += 1
            return True
        return False

    def parse(self) -> WPolynomial:
        if self.tok.kind == "end":
            self._fail("empty expression")
        p = self.expr()
        if self.tok.kind != "end":
            self._fail(f"unexpected token {self.tok.value!r}")
        return p

    def expr(self) -> WPolynomial:
        p = self.term()
        while self.tok.kind == "op" and self.tok.value in "+-":
            op = self.tok.value
            self.i += 1
            q = self.term()
            p = p + q if op == "+" else p - q
        return p

    def term(self) -> WPolynomial:
        p = self.unary()
        while self.tok.kind == "op" and self.tok.value in "*/":
            op_tok = self.tok
            self.i += 1
            q = self.unary()
            if op_tok.value == "*":
                p = p * q
            else:
                if q.is_zero():
                    self._fail("division by zero", op_tok)
                if q.total_degree() != 0:
                    self._fail("division only by constants", op_tok)
                p = p.scale(1 / q.terms[(0,) * self.n])
        return p

    def unary(self) -> WPolynomial:
        if self._eat("-"):
            return -self.unary()
        if self._eat("+"):
            return self.unary()
        return self.power()

    def power(self) -> WPolynomial:
        base = self.atom()
        if self.tok.kind == "op" and self.tok.value == "^":
            self.i += 1
            tok = self.tok
            if tok.kind == "op" and tok.value == "-":
                raise NegativeExponentError("negative exponent", tok.pos, self.text)
            if tok.kind != "num" or not tok.value.isdigit():
                self._fail("expected non-negative integer exponent")
            self.i += 1
            return base ** int(tok.value)
        return base

    def atom(self) -> WPolynomial:
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return WPolynomial.constant(self.n, Fraction(tok.value))
        if tok.kind == "name":
            if tok.value not in self.names:
                raise UnknownVariableError(f"unknown variable {tok.value!r}", tok.pos, self.text)
            self.i += 1
            return WPolynomial.variable(self.n, self.names[tok.value])
        if self._eat("("):
            p = self.expr()
            if not self._eat(")"):
                self._fail("expected ')'")
            return p
        if tok.kind == "end":
            self._fail("unexpected end of input")
        self._fail(f"unexpected token {tok.value!r}")


def parse_poly(text: str, var_names: Sequence[str]) -> WPolynomial:
    if len(set(var_names)) != len(var_names) or not var_names:
        raise ValueError("variable names must be non-empty and distinct")
    return _Parser(text, var_names).parse()


def pretty_print(p: WPolynomial, var_names: Sequence[str]) -> str:
    return p.to_str(var_names)
