"""Condition-expression mini-language for Condition nodes.

Grammar, lowest to highest precedence::

    or_expr  := and_expr ("or" and_expr)*
    and_expr := not_expr ("and" not_expr)*
    not_expr := "not" not_expr | cmp
    cmp      := add (CMP add)?          # non-associative
    add      := mul (("+" | "-") mul)*
    mul      := unary (("*" | "/") unary)*
    unary    := "-" unary | atom
    atom     := NUMBER | STRING | "true" | "false" | IDENT | "(" or_expr ")"

Evaluation is strictly typed: no truthiness, no implicit coercion.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Any, Mapping, Union

from .values import number_text, tag_of

__all__ = [
    "Num", "Str", "Bool", "Ident", "Unary", "Binary", "Expr",
    "ExprError", "ExprSyntaxError", "EvalError", "UnboundIdentifier",
    "ExprTypeError", "DivisionByZero", "NanError",
    "parse", "evaluate", "to_source", "identifiers",
]


class ExprError(Exception):
    """Base class for every condition-expression failure."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, pos: int, source: str = ""):
        super().__init__(f"{message} at column {pos}")
        self.pos = pos
        self.source = source


class EvalError(ExprError):
    pass


class UnboundIdentifier(EvalError):
    def __init__(self, key: str):
        super().__init__(f"unbound identifier {key!r}")
        self.key = key


class ExprTypeError(EvalError):
    def __init__(self, op: str, tags: tuple[str, ...]):
        super().__init__(f"type error: {op} not defined for ({', '.join(tags)})")
        self.op = op
        self.tags = tags


class DivisionByZero(EvalError):
    def __init__(self):
        super().__init__("division by zero")


class NanError(EvalError):
    def __init__(self, op: str):
        super().__init__(f"NaN operand in {op}")
        self.op = op


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Str:
    value: str


@dataclass(frozen=True)
class Bool:
    value: bool


@dataclass(frozen=True)
class Ident:
    name: str
    # span is diagnostic only; structural equality ignores it
    span: tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Unary:
    op: str  # "not" | "-"
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Num, Str, Bool, Ident, Unary, Binary]

CMP_OPS = ("==", "!=", "<=", ">=", "<", ">")
_KEYWORDS = {"and", "or", "not", "true", "false", "True", "False"}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>==|!=|<=|>=|<|>|\+|-|\*|/|\(|\))
  | (?P<str>"(?:[^"\\]|\\.)*"|'(?:[^'\\]|\\.)*')
    """,
    re.VERBOSE,
)

_ESCAPES = {"n": "\n", "t": "\t", "\\": "\\", '"': '"', "'": "'"}


@dataclass(frozen=True)
class _Tok:
    kind: str  # num | ident | kw | op | str | eof
    text: str
    pos: int


def _unescape(body: str, pos: int, source: str) -> str:
    out = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\":
            nxt = body[i + 1]
            if nxt not in _ESCAPES:
                raise ExprSyntaxError(f"bad escape \\{nxt}", pos + i + 1, source)
            out.append(_ESCAPES[nxt])
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def _tokenize(source: str) -> list[_Tok]:
    toks: list[_Tok] = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", pos, source)
        kind = m.lastgroup
        text = m.group()
        if kind == "ident" and text in _KEYWORDS:
            kind = "kw"
        if kind != "ws":
            toks.append(_Tok(kind, text, pos))
        pos = m.end()
    toks.append(_Tok("eof", "", len(source)))
    return toks


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.toks = _tokenize(source)
        self.i = 0

    @property
    def cur(self) -> _Tok:
        return self.toks[self.i]

    def _advance(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def _is(self, kind: str, *texts: str) -> bool:
        tok = self.cur
        return tok.kind == kind and (not texts or tok.text in texts)

    def _fail(self, what: str):
        tok = self.cur
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        raise ExprSyntaxError(f"expected {what}, found {found}", tok.pos, self.source)

    def parse(self) -> Expr:
        expr = self._or()
        if self.cur.kind != "eof":
            self._fail("end of input")
        return expr

    def _or(self) -> Expr:
        left = self._and()
        while self._is("kw", "or"):
            self._advance()
            left = Binary("or", left, self._and())
        return left

    def _and(self) -> Expr:
        left = self._not()
        while self._is("kw", "and"):
            self._advance()
            left = Binary("and", left, self._not())
        return left

    def _not(self) -> Expr:
        if self._is("kw", "not"):
            self._advance()
            return Unary("not", self._not())
        return self._cmp()

    def _cmp(self) -> Expr:
        left = self._add()
        if self._is("op", *CMP_OPS):
            op = self._advance().text
            right = self._add()
            if self._is("op", *CMP_OPS):
                raise ExprSyntaxError(
                    "comparison operators do not chain", self.cur.pos, self.source
                )
            return Binary(op, left, right)
        return left

    def _add(self) -> Expr:
        left = self._mul()
        while self._is("op", "+", "-"):
            op = self._advance().text
            left = Binary(op, left, self._mul())
        return left

    def _mul(self) -> Expr:
        left = self._unary()
        while self._is("op", "*", "/"):
            op = self._advance().text
            left = Binary(op, left, self._unary())
        return left

    def _unary(self) -> Expr:
        if self._is("op", "-"):
            self._advance()
            return Unary("-", self._unary())
        return self._atom()

    def _atom(self) -> Expr:
        tok = self.cur
        if tok.kind == "num":
            self._advance()
            return Num(float(tok.text))
        if tok.kind == "str":
            self._advance()
            return Str(_unescape(tok.text[1:-1], tok.pos + 1, self.source))
        if tok.kind == "kw" and tok.text in ("true", "True", "false", "False"):
            self._advance()
            return Bool(tok.text.lower() == "true")
        if tok.kind == "ident":
            self._advance()
            return Ident(tok.text, (tok.pos, tok.pos + len(tok.text)))
        if self._is("op", "("):
            self._advance()
            inner = self._or()
            if not self._is("op", ")"):
                self._fail("')'")
            self._advance()
            return inner
        self._fail("an operand")
        raise AssertionError("unreachable")


def parse(source: str) -> Expr:
    """Parse condition source text into an expression tree."""
    return _Parser(source).parse()


def identifiers(expr: Expr) -> list[str]:
    """Identifier names in left-to-right order, duplicates kept."""
    if isinstance(expr, Ident):
        return [expr.name]
    if isinstance(expr, Unary):
        return identifiers(expr.operand)
    if isinstance(expr, Binary):
        return identifiers(expr.left) + identifiers(expr.right)
    return []


# --- printing -------------------------------------------------------------

_PREC = {"or": 1, "and": 2, "not": 3, "cmp": 4, "+": 5, "-": 5, "*": 6, "/": 6, "neg": 7}


def _prec(expr: Expr) -> int:
    if isinstance(expr, Binary):
        return _PREC["cmp"] if expr.op in CMP_OPS else _PREC[expr.op]
    if isinstance(expr, Unary):
        return _PREC["not"] if expr.op == "not" else _PREC["neg"]
    return 8


def _quote(s: str) -> str:
    body = s.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t")
    return f'"{body}"'


def to_source(expr: Expr) -> str:
    """Canonical source text with the minimum parentheses needed."""

    def wrap(sub: Expr, min_prec: int) -> str:
        text = to_source(sub)
        return f"({text})" if _prec(sub) < min_prec else text

    if isinstance(expr, Num):
        return number_text(expr.value)
    if isinstance(expr, Str):
        return _quote(expr.value)
    if isinstance(expr, Bool):
        return "true" if expr.value else "false"
    if isinstance(expr, Ident):
        return expr.name
    if isinstance(expr, Unary):
        if expr.op == "not":
            return "not " + wrap(expr.operand, _PREC["not"])
        return "-" + wrap(expr.operand, _PREC["neg"])
    p = _prec(expr)
    if expr.op in CMP_OPS:
        # non-associative: both sides must bind tighter
        return f"{wrap(expr.left, p + 1)} {expr.op} {wrap(expr.right, p + 1)}"
    return f"{wrap(expr.left, p)} {expr.op} {wrap(expr.right, p + 1)}"


# --- evaluation -----------------------------------------------------------

def _num(x: Any) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _check_nan(op: str, *xs: Any) -> None:
    for x in xs:
        if _num(x) and math.isnan(x):
            raise NanError(op)


def _eval(expr: Expr, store: Mapping[str, Any]) -> Any:
    if isinstance(expr, (Num, Str, Bool)):
        return expr.value
    if isinstance(expr, Ident):
        if expr.name not in store:
            raise UnboundIdentifier(expr.name)
        value = store[expr.name]
        if isinstance(value, tuple):
            value = list(value)
        return float(value) if _num(value) else value
    if isinstance(expr, Unary):
        v = _eval(expr.operand, store)
        if expr.op == "not":
            if not isinstance(v, bool):
                raise ExprTypeError("not", (tag_of(v),))
            return not v
        if not _num(v):
            raise ExprTypeError("-", (tag_of(v),))
        _check_nan("-", v)
        return -v
    op = expr.op
    if op in ("and", "or"):
        left = _eval(expr.left, store)
        if not isinstance(left, bool):
            raise ExprTypeError(op, (tag_of(left),))
        if op == "and" and not left:
            return False
        if op == "or" and left:
            return True
        right = _eval(expr.right, store)
        if not isinstance(right, bool):
            raise ExprTypeError(op, (tag_of(left), tag_of(right)))
        return right
    left = _eval(expr.left, store)
    right = _eval(expr.right, store)
    tags = (tag_of(left), tag_of(right))
    if op in CMP_OPS:
        if op in ("==", "!=") and tags == ("boolean", "boolean"):
            return (left == right) if op == "==" else (left != right)
        if tags not in (("number", "number"), ("text", "text")):
            raise ExprTypeError(op, tags)
        _check_nan(op, left, right)
        return {
            "==": left == right, "!=": left != right,
            "<": left < right, "<=": left <= right,
            ">": left > right, ">=": left >= right,
        }[op]
    if op == "+" and tags == ("text", "text"):
        return left + right
    if tags != ("number", "number"):
        raise ExprTypeError(op, tags)
    _check_nan(op, left, right)
    if op == "+":
        out = left + right
    elif op == "-":
        out = left - right
    elif op == "*":
        out = left * right
    else:
        if right == 0:
            raise DivisionByZero()
        out = left / right
    _check_nan(op, out)
    return out


def evaluate(expr: Expr | str, store: Mapping[str, Any]) -> bool:
    """Evaluate a condition against a data store; the result must be Boolean."""
    if isinstance(expr, str):
        expr = parse(expr)
    result = _eval(expr, store)
    if not isinstance(result, bool):
        raise ExprTypeError("condition", (tag_of(result),))
    return result
