"""Small recursive-descent parser for scalar expressions in x, t or r.

Grammar (standard precedence, ^ right-associative and binding tighter than unary minus):

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom ('^' unary)?
    atom   := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'

Names: pi, e and the variables passed to parse(); functions ln (alias log),
exp, sin, cos, tanh, abs, sqrt, pow.  Evaluation is vectorized over numpy arrays.
"""
from __future__ import annotations

import re
from typing import Callable

import numpy as np


class ExprError(ValueError):
    pass


_FUNCS: dict[str, tuple[int, Callable]] = {
    "ln": (1, np.log),
    "log": (1, np.log),
    "exp": (1, np.exp),
    "sin": (1, np.sin),
    "cos": (1, np.cos),
    "tanh": (1, np.tanh),
    "abs": (1, np.abs),
    "sqrt": (1, np.sqrt),
    "pow": (2, np.power),
}
_CONSTS = {"pi": np.pi, "e": np.e}
_TOKEN = re.compile(r"\s*(?:(\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)|([A-Za-z_]\w*)|(\*\*|[-+*/^(),]))")


def _tokenize(src: str) -> list[tuple[str, str]]:
    pos, out = 0, []
    src = src.strip()
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if not m or m.end() == pos:
            raise ExprError(f"unexpected character at {pos} in {src!r}")
        num, name, op = m.groups()
        if num is not None:
            out.append(("num", num))
        elif name is not None:
            out.append(("name", name))
        else:
            out.append(("op", "^" if op == "**" else op))
        pos = m.end()
    out.append(("end", ""))
    return out


class _Parser:
    def __init__(self, src: str, variables: tuple[str, ...]):
        self.toks = _tokenize(src)
        self.i = 0
        self.vars = variables
        self.src = src

    def peek(self):
        return self.toks[self.i]

    def take(self, kind=None, val=None):
        k, v = self.toks[self.i]
        if (kind and k != kind) or (val and v != val):
            raise ExprError(f"expected {val or kind} but found {v or k!r} in {self.src!r}")
        self.i += 1
        return v

    def parse(self):
        node = self.expr()
        self.take("end")
        return node

    def expr(self):
        node = self.term()
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.take()
            rhs = self.term()
            node = (lambda a, b: lambda env: a(env) + b(env))(node, rhs) if op == "+" else \
                (lambda a, b: lambda env: a(env) - b(env))(node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek() in (("op", "*"), ("op", "/")):
            op = self.take()
            rhs = self.unary()
            node = (lambda a, b: lambda env: a(env) * b(env))(node, rhs) if op == "*" else \
                (lambda a, b: lambda env: a(env) / b(env))(node, rhs)
        return node

    def unary(self):
        if self.peek() == ("op", "-"):
            self.take()
            inner = self.unary()
            return lambda env: -inner(env)
        if self.peek() == ("op", "+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            ex = self.unary()
            return lambda env: np.power(base(env), ex(env))
        return base

    def atom(self):
        kind, val = self.peek()
        if kind == "num":
            self.take()
            c = float(val)
            return lambda env: c
        if kind == "op" and val == "(":
            self.take()
            node = self.expr()
            self.take("op", ")")
            return node
        if kind == "name":
            self.take()
            if self.peek() == ("op", "("):
                if val not in _FUNCS:
                    raise ExprError(f"unknown function {val!r}")
                arity, fn = _FUNCS[val]
                self.take()
                args = [self.expr()]
                while self.peek() == ("op", ","):
                    self.take()
                    args.append(self.expr())
                self.take("op", ")")
                if len(args) != arity:
                    raise ExprError(f"{val} takes {arity} argument(s)")
                return lambda env: fn(*(a(env) for a in args))
            if val in self.vars:
                return lambda env: env[val]
            if val in _CONSTS:
                c = _CONSTS[val]
                return lambda env: c
            raise ExprError(f"unknown name {val!r} (variables: {', '.join(self.vars)})")
        raise ExprError(f"unexpected token {val or kind!r} in {self.src!r}")


def parse(src: str, variables: tuple[str, ...] = ("x",)) -> Callable:
    """Compile src into f(*arrays) evaluated elementwise."""
    if not isinstance(src, str) or not src.strip():
        raise ExprError("empty expression")
    node = _Parser(src, tuple(variables)).parse()

    def f(*args):
        if len(args) != len(variables):
            raise ExprError(f"expected {len(variables)} argument(s)")
        env = {k: np.asarray(v, dtype=float) for k, v in zip(variables, args)}
        with np.errstate(all="ignore"):
            out = node(env)
        shape = np.broadcast_shapes(*(np.shape(v) for v in env.values())) if env else ()
        return np.broadcast_to(np.asarray(out, dtype=float), shape).copy() if shape else float(out)

    f.source = src
    return f
