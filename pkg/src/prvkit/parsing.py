"""Text syntax for formulas.

Grammar (prefix temporal operators bind to the immediately following
formula; precedence ! > temporal > && > ||; infix temporal operators are
left-associative)::

    formula  := or
    or       := and ("||" and)*
    and      := temporal ("&&" temporal)*
    temporal := unary (("U"|"S"|"R"|"T") interval unary)*
    unary    := "!" unary
              | ("G"|"F"|"O"|"H") interval unary
              | primary
    primary  := "True" | "False" | "(" formula ")" | atom
    atom     := ident cmp number
              | "norm2(" ident ("," ident)* ")" cmp number
    interval := "[" int "," (int | "inf") "]"
    cmp      := ">=" | "<=" | ">" | "<"

``G``/``F`` quantify over future steps, ``O``/``H`` over past steps; ``U``
and ``S`` are until and since, ``R`` and ``T`` their duals (the duals are
normally produced by negation pushing rather than written by hand, but the
parser accepts them so rendered normal forms read back).  An identifier is
treated as a temporal operator only when an interval bracket follows, so
``G >= 5`` is still an atom over a component named G.  Interval endpoints
are integer step counts; real-valued endpoints are rejected.
"""

import math
import re

from .errors import FormulaSyntaxError
from .formulas import (
    Always,
    And,
    Atom,
    Comparison,
    Eventually,
    Formula,
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
    false_formula,
)

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<and>&&)
  | (?P<or>\|\|)
  | (?P<cmp>>=|<=|>|<)
  | (?P<number>[+-]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[()\[\],!])
    """,
    re.VERBOSE,
)

_PREFIX_OPS = {"G": Always, "F": Eventually, "O": Once, "H": Historically}
_INFIX_OPS = {"U": Until, "S": Since, "R": Release, "T": Trigger}


class _Token:
    __slots__ = ("kind", "text", "pos")

    def __init__(self, kind, text, pos):
        self.kind = kind
        self.text = text
        self.pos = pos


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise FormulaSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(_Token(kind, m.group(), pos))
        pos = m.end()
    tokens.append(_Token("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self, offset: int = 0) -> _Token:
        return self.tokens[min(self.i + offset, len(self.tokens) - 1)]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        if tok.kind != "eof":
            self.i += 1
        return tok

    def expect(self, text: str) -> _Token:
        tok = self.advance()
        if tok.text != text:
            raise FormulaSyntaxError(f"expected {text!r}, found {tok.text or 'end of input'!r}", tok.pos)
        return tok

    def parse(self) -> Formula:
        f = self.parse_or()
        tok = self.peek()
        if tok.kind != "eof":
            raise FormulaSyntaxError(f"unexpected trailing input {tok.text!r}", tok.pos)
        return f

    def parse_or(self) -> Formula:
        f = self.parse_and()
        while self.peek().kind == "or":
            self.advance()
            f = Or(f, self.parse_and())
        return f

    def parse_and(self) -> Formula:
        f = self.parse_temporal()
        while self.peek().kind == "and":
            self.advance()
            f = And(f, self.parse_temporal())
        return f

    def parse_temporal(self) -> Formula:
        f = self.parse_unary()
        while self._at_operator(_INFIX_OPS):
            op = self.advance()
            interval = self.parse_interval()
            f = _INFIX_OPS[op.text](interval, f, self.parse_unary())
        return f

    def parse_unary(self) -> Formula:
        tok = self.peek()
        if tok.text == "!":
            self.advance()
            return Not(self.parse_unary())
        if self._at_operator(_PREFIX_OPS):
            op = self.advance()
            interval = self.parse_interval()
            return _PREFIX_OPS[op.text](interval, self.parse_unary())
        # an identifier followed by '[' that is not a known operator is a
        # user mistake, not an atom
        if tok.kind == "ident" and self.peek(1).text == "[" and tok.text not in ("norm2",):
            raise FormulaSyntaxError(f"unknown temporal operator {tok.text!r}", tok.pos)
        return self.parse_primary()

    def _at_operator(self, table) -> bool:
        tok = self.peek()
        return tok.kind == "ident" and tok.text in table and self.peek(1).text == "["

    def parse_interval(self) -> Interval:
        start = self.expect("[")
        lo = self._interval_endpoint(allow_inf=False)
        self.expect(",")
        hi = self._interval_endpoint(allow_inf=True)
        self.expect("]")
        if hi is not None and hi < lo:
            raise FormulaSyntaxError(f"malformed interval: lo {lo} exceeds hi {hi}", start.pos)
        return Interval(lo, hi)

    def _interval_endpoint(self, allow_inf: bool) -> int | None:
        tok = self.advance()
        if tok.kind == "ident" and tok.text == "inf":
            if not allow_inf:
                raise FormulaSyntaxError("interval lower bound cannot be inf", tok.pos)
            return None
        if tok.kind != "number":
            raise FormulaSyntaxError(f"expected interval endpoint, found {tok.text!r}", tok.pos)
        value = float(tok.text)
        if value != int(value):
            raise FormulaSyntaxError("interval endpoints must be integer step counts", tok.pos)
        if value < 0:
            raise FormulaSyntaxError("interval endpoints must be >= 0", tok.pos)
        return int(value)

    def parse_primary(self) -> Formula:
        tok = self.peek()
        if tok.text == "(":
            self.advance()
            f = self.parse_or()
            self.expect(")")
            return f
        if tok.kind == "ident" and tok.text == "True":
            self.advance()
            return TrueFormula()
        if tok.kind == "ident" and tok.text == "False":
            self.advance()
            return false_formula()
        if tok.kind == "ident":
            return self.parse_atom()
        raise FormulaSyntaxError(f"expected a formula, found {tok.text or 'end of input'!r}", tok.pos)

    def parse_atom(self) -> Formula:
        tok = self.advance()
        if tok.text == "norm2":
            self.expect("(")
            names = [self._ident()]
            while self.peek().text == ",":
                self.advance()
                names.append(self._ident())
            self.expect(")")
            use_norm = True
        else:
            names = [tok.text]
            use_norm = False
        cmp_tok = self.advance()
        if cmp_tok.kind != "cmp":
            raise FormulaSyntaxError(
                f"expected a comparison after {tok.text!r}, found {cmp_tok.text!r}", cmp_tok.pos
            )
        num_tok = self.advance()
        if num_tok.kind != "number":
            raise FormulaSyntaxError(f"expected a number, found {num_tok.text!r}", num_tok.pos)
        threshold = float(num_tok.text)
        if math.isnan(threshold):
            raise FormulaSyntaxError("atom threshold must be a finite number", num_tok.pos)
        comp = Comparison(tuple(names), cmp_tok.text, threshold, use_norm)
        return Atom(comp.render(), comp)

    def _ident(self) -> str:
        tok = self.advance()
        if tok.kind != "ident":
            raise FormulaSyntaxError(f"expected a component name, found {tok.text!r}", tok.pos)
        return tok.text


def parse(text: str, variables=None) -> Formula:
    """Parse formula text; atoms stay symbolic unless ``variables`` is given.

    ``variables`` lists the signal's component names in state-vector order
    and makes the result immediately evaluable.
    """
    f = _Parser(text).parse()
    if variables is not None:
        f = bind(f, variables)
    return f
