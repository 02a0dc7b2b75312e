"""Recursive-descent parser for the canonical text forms.

Rational functions print as ``(P) / (Q)`` and profile functions as sums of
``(P) / (Q) * (1+s)^(E) [* log(1+s)]`` joined by ``" + "``. The parser accepts
exactly what the printers emit plus a little slack (omitted ``1*`` factors,
bare polynomials, integer exponents without parentheses).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from confbounds.exactfn import Poly, RationalFn


class ParseError(ValueError):
    def __init__(self, message: str, text: str, pos: int):
        self.message = message
        self.text = text
        self.pos = pos
        super().__init__(f"{message} at position {pos}: {text[:pos]}<<HERE>>{text[pos:]}")


_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<log>log\s*\(\s*1\s*\+\s*s\s*\))"
    r"|(?P<ops>\(\s*1\s*\+\s*s\s*\))"
    r"|(?P<int>\d+)"
    r"|(?P<var>n)"
    r"|(?P<sym>[-+*/^()])"
    r")"
)


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
        if not m or m.end() == pos:
            j = pos
            while j < len(text) and text[j].isspace():
                j += 1
            raise ParseError(f"unexpected character {text[j]!r}", text, j)
        kind = m.lastgroup
        start = m.start(kind)
        toks.append(_Tok(kind, m.group(kind), start))
        pos = m.end()
    toks.append(_Tok("end", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, msg: str):
        raise ParseError(msg, self.text, self.tok.pos)

    def accept(self, kind: str, value: str | None = None) -> _Tok | None:
        t = self.tok
        if t.kind == kind and (value is None or t.value == value):
            self.i += 1
            return t
        return None

    def expect(self, kind: str, value: str | None = None) -> _Tok:
        t = self.accept(kind, value)
        if t is None:
            want = value if value is not None else kind
            got = self.tok.value or "end of input"
            self.error(f"expected {want!r}, found {got!r}")
        return t

    def peek_is(self, kind: str, value: str | None = None, offset: int = 0) -> bool:
        t = self.toks[min(self.i + offset, len(self.toks) - 1)]
        return t.kind == kind and (value is None or t.value == value)

    # polynomials ---------------------------------------------------------
    def poly(self) -> Poly:
        sign = 1
        if self.accept("sym", "-"):
            sign = -1
        else:
            self.accept("sym", "+")
        out = self.mono() * sign
        while True:
            if self.accept("sym", "+"):
                out = out + self.mono()
            elif self.accept("sym", "-"):
                out = out - self.mono()
            else:
                return out

    def mono(self) -> Poly:
        c = 1
        t = self.accept("int")
        if t is not None:
            c = int(t.value)
            if not self.accept("sym", "*"):
                return Poly((c,))
        if self.accept("var") is None:
            self.error("expected 'n' or an integer")
        k = 1
        if self.accept("sym", "^"):
            k = int(self.expect("int").value)
        return Poly(tuple([0] * k + [c]))

    def rational(self) -> RationalFn:
        if self.accept("sym", "("):
            p = self.poly()
            self.expect("sym", ")")
            if self.accept("sym", "/"):
                self.expect("sym", "(")
                q = self.poly()
                self.expect("sym", ")")
                if q.is_zero():
                    self.error("zero denominator")
                return RationalFn(p, q)
            return RationalFn(p)
        return RationalFn(self.poly())

    def exponent(self) -> Poly:
        if self.accept("sym", "("):
            e = self.poly()
            self.expect("sym", ")")
        else:
            sign = -1 if self.accept("sym", "-") else 1
            e = Poly((sign * int(self.expect("int").value),))
        if e.degree > 1:
            self.error("exponent must be affine in n")
        return e

    # profile terms -------------------------------------------------------
    def profile_term(self):
        coeff = RationalFn(1)
        if not (self.peek_is("ops") or self.peek_is("log")):
            coeff = self.rational()
            if not self.accept("sym", "*"):
                return coeff, Poly(), False
        exp = Poly()
        has_log = False
        if self.accept("ops"):
            exp = Poly((1,))
            if self.accept("sym", "^"):
                exp = self.exponent()
            if self.accept("sym", "*"):
                self.expect("log")
                has_log = True
        elif self.accept("log"):
            has_log = True
        else:
            self.error("expected '(1+s)' or 'log(1+s)'")
        return coeff, exp, has_log

    def finish(self):
        if self.tok.kind != "end":
            self.error(f"unexpected {self.tok.value!r}")


def parse_rational(text: str) -> RationalFn:
    p = _Parser(text)
    if p.tok.kind == "end":
        p.error("empty expression")
    out = p.rational()
    p.finish()
    return out


def parse_profile_terms(text: str) -> list[tuple[RationalFn, Poly, bool]]:
    p = _Parser(text)
    if p.tok.kind == "end":
        p.error("empty expression")
    terms = [p.profile_term()]
    while p.accept("sym", "+"):
        terms.append(p.profile_term())
    p.finish()
    return terms
