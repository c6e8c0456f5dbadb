"""Tiny boolean condition language for workflow rules.

Deliberately small enough to audit mid-incident: comparisons, boolean
connectives, dotted field access and ``exists()``. No loops, no
arithmetic.

    expr    := or
    or      := and ('||' and)*
    and     := unary ('&&' unary)*
    unary   := '!' unary | atom
    atom    := comparison | 'exists' '(' path ')' | 'true' | 'false'
             | '(' expr ')'
    cmp-op  := '==' | '!=' | '<=' | '>=' | '<' | '>'
    operand := literal | path
    literal := number | single- or double-quoted string | true | false
    path    := ident ('.' ident)*

Expressions must type-check to boolean at registration time: a bare
path or non-boolean literal is rejected wherever a boolean is needed,
so ``ensemble.active == true`` is written out in full. At evaluation a
path that resolves to nothing makes the whole condition false and
raises a warning on the side, never a crash; ``exists(path)`` is the
way to probe optional fields silently.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import ConditionError, MissingField

_TOKEN = re.compile(r"""
    \s*(?:
      (?P<op>\|\||&&|==|!=|<=|>=|<|>|!|\(|\))
    | (?P<number>-?\d+(?:\.\d+)?)
    | (?P<string>'[^']*'|"[^"]*")
    | (?P<path>[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*)
    )""", re.VERBOSE)

_MISSING = object()


@dataclass(frozen=True)
class Lit:
    value: object


@dataclass(frozen=True)
class Path:
    parts: tuple[str, ...]


@dataclass(frozen=True)
class Cmp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Not:
    inner: object


@dataclass(frozen=True)
class BoolOp:
    op: str  # "and" | "or"
    items: tuple


@dataclass(frozen=True)
class Exists:
    path: Path


def _tokenize(text: str):
    pos = 0
    tokens = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            rest = text[pos:].strip()
            if not rest:
                break
            raise ConditionError(f"cannot tokenize {rest[:20]!r}")
        if m.lastgroup == "op":
            tokens.append(("op", m.group("op")))
        elif m.lastgroup == "number":
            raw = m.group("number")
            tokens.append(("lit", float(raw) if "." in raw else int(raw)))
        elif m.lastgroup == "string":
            tokens.append(("lit", m.group("string")[1:-1]))
        else:
            word = m.group("path")
            if word == "true":
                tokens.append(("lit", True))
            elif word == "false":
                tokens.append(("lit", False))
            elif word == "exists":
                tokens.append(("exists", word))
            else:
                tokens.append(("path", word))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else (None, None)

    def take(self, kind=None, value=None):
        tok = self.peek()
        if tok[0] is None:
            raise ConditionError("unexpected end of expression")
        if kind is not None and tok[0] != kind:
            raise ConditionError(f"expected {kind}, found {tok[1]!r}")
        if value is not None and tok[1] != value:
            raise ConditionError(f"expected {value!r}, found {tok[1]!r}")
        self.pos += 1
        return tok

    def parse(self):
        node = self.or_expr()
        if self.peek()[0] is not None:
            raise ConditionError(f"trailing input at {self.peek()[1]!r}")
        return node

    def or_expr(self):
        items = [self.and_expr()]
        while self.peek() == ("op", "||"):
            self.take()
            items.append(self.and_expr())
        return items[0] if len(items) == 1 else BoolOp("or", tuple(items))

    def and_expr(self):
        items = [self.unary()]
        while self.peek() == ("op", "&&"):
            self.take()
            items.append(self.unary())
        return items[0] if len(items) == 1 else BoolOp("and", tuple(items))

    def unary(self):
        if self.peek() == ("op", "!"):
            self.take()
            return Not(self.unary())
        return self.atom()

    def atom(self):
        kind, value = self.peek()
        if kind == "op" and value == "(":
            self.take()
            inner = self.or_expr()
            self.take("op", ")")
            return inner
        if kind == "exists":
            self.take()
            self.take("op", "(")
            path_tok = self.take("path")
            self.take("op", ")")
            return Exists(Path(tuple(path_tok[1].split("."))))
        operand = self.operand()
        nxt = self.peek()
        if nxt[0] == "op" and nxt[1] in ("==", "!=", "<", "<=", ">", ">="):
            op = self.take()[1]
            right = self.operand()
            return Cmp(op, operand, right)
        return operand

    def operand(self):
        kind, value = self.take()
        if kind == "lit":
            return Lit(value)
        if kind == "path":
            return Path(tuple(value.split(".")))
        raise ConditionError(f"expected a value, found {value!r}")


def _check_boolean(node) -> None:
    if isinstance(node, (Cmp, Exists)):
        return
    if isinstance(node, Lit):
        if isinstance(node.value, bool):
            return
        raise ConditionError(f"literal {node.value!r} is not boolean")
    if isinstance(node, Path):
        raise ConditionError(
            f"bare field {'.'.join(node.parts)!r} used as a condition; "
            "compare it explicitly (e.g. '== true')")
    if isinstance(node, Not):
        _check_boolean(node.inner)
        return
    if isinstance(node, BoolOp):
        for item in node.items:
            _check_boolean(item)
        return
    raise ConditionError(f"unexpected node {node!r}")


def parse_condition(text: str):
    """Parse and type-check; raises ConditionError on any problem."""
    node = _Parser(_tokenize(text)).parse()
    _check_boolean(node)
    return node


def _resolve(path: Path, scope: dict):
    value = scope
    for part in path.parts:
        if not isinstance(value, dict) or part not in value:
            return _MISSING
        value = value[part]
    return value


def evaluate(node, scope: dict) -> bool:
    """Evaluate a parsed condition against a nested-dict scope. Raises
    MissingField when a referenced field is absent (callers convert
    that to condition=false plus a warning event)."""
    if isinstance(node, Lit):
        return node.value
    if isinstance(node, BoolOp):
        if node.op == "and":
            return all(evaluate(item, scope) for item in node.items)
        return any(evaluate(item, scope) for item in node.items)
    if isinstance(node, Not):
        return not evaluate(node.inner, scope)
    if isinstance(node, Exists):
        return _resolve(node.path, scope) is not _MISSING
    if isinstance(node, Cmp):
        left = _value_of(node.left, scope)
        right = _value_of(node.right, scope)
        if node.op == "==":
            return left == right
        if node.op == "!=":
            return left != right
        if not (isinstance(left, (int, float)) and not isinstance(left, bool)
                and isinstance(right, (int, float)) and not isinstance(right, bool)):
            raise MissingField(
                f"ordering comparison needs numbers, got {left!r} {node.op} {right!r}")
        return {"<": left < right, "<=": left <= right,
                ">": left > right, ">=": left >= right}[node.op]
    raise ConditionError(f"unexpected node {node!r}")


def _value_of(operand, scope: dict):
    if isinstance(operand, Lit):
        return operand.value
    value = _resolve(operand, scope)
    if value is _MISSING:
        raise MissingField(".".join(operand.parts))
    return value
