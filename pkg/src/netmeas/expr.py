"""Small arithmetic expression language for measurement functions.

Grammar (lowest to highest precedence)::

    expr    := term (('+' | '-') term)*          left associative
    term    := unary (('*' | '/') unary)*        left associative
    unary   := '-' unary | '+' unary | power
    power   := atom ('^' unary)?                 right associative
    atom    := NUMBER | NAME | FUNC '(' expr ')' | '(' expr ')'
    FUNC    := exp | ln | sin | cos

So ``-x^2`` is ``-(x^2)`` and ``2^3^2`` is ``2^(3^2)``.  Error positions are
0-based character offsets into the source text.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import ExpressionError

FUNCTIONS = {"exp": np.exp, "ln": np.log, "sin": np.sin, "cos": np.cos}

_TOKEN = re.compile(r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))")


@dataclass(frozen=True)
class Token:
    kind: str  # num, name, op, end
    text: str
    pos: int


def tokenize(src: str) -> list:
    tokens = []
    i = 0
    while True:
        while i < len(src) and src[i].isspace():
            i += 1
        if i >= len(src):
            tokens.append(Token("end", "", len(src)))
            return tokens
        m = _TOKEN.match(src, i)
        if not m or m.end() == i:
            raise ExpressionError(f"unexpected character {src[i]!r}", i)
        kind = m.lastgroup
        tokens.append(Token(kind, m.group(kind), m.start(kind)))
        i = m.end()


class _Parser:
    def __init__(self, src, names):
        self.tokens = tokenize(src)
        self.i = 0
        self.names = names

    @property
    def tok(self):
        return self.tokens[self.i]

    def take(self):
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect(self, text):
        t = self.tok
        if t.kind != "op" or t.text != text:
            found = "end of input" if t.kind == "end" else repr(t.text)
            raise ExpressionError(f"expected {text!r}, found {found}", t.pos)
        return self.take()

    def parse(self):
        node = self.expr()
        if self.tok.kind != "end":
            raise ExpressionError(f"unexpected {self.tok.text!r}", self.tok.pos)
        return node

    def expr(self):
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.take().text
            node = (op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.take().text
            node = (op, node, self.unary())
        return node

    def unary(self):
        if self.tok.kind == "op" and self.tok.text in "+-":
            op = self.take().text
            operand = self.unary()
            return ("neg", operand) if op == "-" else operand
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.take()
            return ("^", base, self.unary())
        return base

    def atom(self):
        t = self.tok
        if t.kind == "num":
            self.take()
            return ("num", float(t.text))
        if t.kind == "name":
            self.take()
            if t.text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return ("call", t.text, arg)
            if self.names is not None and t.text not in self.names:
                raise ExpressionError(f"unknown name {t.text!r}", t.pos)
            return ("var", t.text)
        if t.kind == "op" and t.text == "(":
            self.take()
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if t.kind == "end" else repr(t.text)
        raise ExpressionError(f"expected a number, name or '(', found {found}", t.pos)


_BINARY = {"+": np.add, "-": np.subtract, "*": np.multiply, "/": np.divide, "^": np.power}


def _eval(node, env):
    kind = node[0]
    if kind == "num":
        return node[1]
    if kind == "var":
        return env[node[1]]
    if kind == "neg":
        return -_eval(node[1], env)
    if kind == "call":
        return FUNCTIONS[node[1]](_eval(node[2], env))
    return _BINARY[kind](_eval(node[1], env), _eval(node[2], env))


def _names(node, acc):
    if node[0] == "var":
        acc.append(node[1])
    for child in node[1:]:
        if isinstance(child, tuple):
            _names(child, acc)
    return acc


class Expression:
    """Parsed expression; evaluates element-wise on scalars or arrays.

    Parameters
    ----------
    source : str
    names : sequence of str, optional
        Allowed variable names.  When given, unknown names are parse errors.
    """

    def __init__(self, source: str, names=None):
        self.source = source
        self.allowed = None if names is None else tuple(names)
        self.tree = _Parser(source, None if names is None else set(names)).parse()
        self.names = tuple(dict.fromkeys(_names(self.tree, [])))

    def __call__(self, **env):
        with np.errstate(all="ignore"):
            return _eval(self.tree, env)

    def evaluate_rows(self, X, order=None):
        """Evaluate on an ``(n, len(order))`` matrix whose columns follow
        ``order`` (default: ``names`` given at construction)."""
        order = order or self.allowed or self.names
        X = np.asarray(X, dtype=float)
        env = {name: X[:, i] for i, name in enumerate(order)}
        out = self(**env)
        return np.broadcast_to(np.asarray(out, dtype=float), (X.shape[0],)).copy()

    def __repr__(self):
        return f"Expression({self.source!r})"


def evaluate(source: str, **env):
    return Expression(source)(**env)
