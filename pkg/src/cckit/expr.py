"""A tiny arithmetic-expression language for pointwise maps.

Grammar (operators in increasing binding strength; ``^`` is
right-associative exponentiation):

    expr    := term  (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := ('+' | '-') unary | power
    power   := atom ('^' unary)?
    atom    := NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'

Known call names: exp, log, sqrt, abs, max, min (max/min take two or
more arguments, the rest exactly one). Any other NAME is a variable
resolved from the evaluation environment. Parse failures carry the byte
offset of the offending token; evaluation failures (log of a negative,
division by zero, overflow to non-finite) raise ``DomainError``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError, ParseError

_FUNCS_1 = {
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
    "abs": abs,
}
_FUNCS_N = {"max": max, "min": min}


@dataclass(frozen=True)
class Token:
    kind: str  # num | name | op | lparen | rparen | comma | end
    text: str
    offset: int


def _tokenize(src: str) -> list[Token]:
    toks: list[Token] = []
    i, n = 0, len(src)
    while i < n:
        ch = src[i]
        if ch.isspace():
            i += 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and src[i + 1].isdigit()):
            j = i
            seen_dot = seen_exp = False
            while j < n:
                c = src[j]
                if c.isdigit():
                    j += 1
                elif c == "." and not seen_dot and not seen_exp:
                    seen_dot = True
                    j += 1
                elif c in "eE" and not seen_exp and j > i:
                    if j + 1 < n and src[j + 1].isdigit():
                        seen_exp = True
                        j += 1
                    elif (
                        j + 2 < n
                        and src[j + 1] in "+-"
                        and src[j + 2].isdigit()
                    ):
                        seen_exp = True
                        j += 2
                    else:
                        break
                else:
                    break
            toks.append(Token("num", src[i:j], i))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            toks.append(Token("name", src[i:j], i))
            i = j
            continue
        if ch in "+-*/^":
            toks.append(Token("op", ch, i))
        elif ch == "(":
            toks.append(Token("lparen", ch, i))
        elif ch == ")":
            toks.append(Token("rparen", ch, i))
        elif ch == ",":
            toks.append(Token("comma", ch, i))
        else:
            raise ParseError(f"unexpected character {ch!r}", offset=i)
        i += 1
    toks.append(Token("end", "", n))
    return toks


# AST nodes are plain tuples: ("num", v) ("var", name) ("call", name, args)
# ("bin", op, lhs, rhs) ("neg", operand)


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.toks = _tokenize(src)
        self.pos = 0

    def peek(self) -> Token:
        return self.toks[self.pos]

    def take(self) -> Token:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def expect(self, kind: str) -> Token:
        t = self.peek()
        if t.kind != kind:
            raise ParseError(f"expected {kind}, got {t.text!r}", offset=t.offset)
        return self.take()

    def parse(self):
        node = self.expr()
        t = self.peek()
        if t.kind != "end":
            raise ParseError(f"trailing input {t.text!r}", offset=t.offset)
        return node

    def expr(self):
        node = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.take().text
            node = ("bin", op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.take().text
            node = ("bin", op, node, self.unary())
        return node

    def unary(self):
        t = self.peek()
        if t.kind == "op" and t.text in "+-":
            self.take()
            operand = self.unary()
            return operand if t.text == "+" else ("neg", operand)
        return self.power()

    def power(self):
        base = self.atom()
        t = self.peek()
        if t.kind == "op" and t.text == "^":
            self.take()
            return ("bin", "^", base, self.unary())
        return base

    def atom(self):
        t = self.take()
        if t.kind == "num":
            return ("num", float(t.text))
        if t.kind == "name":
            if self.peek().kind == "lparen":
                self.take()
                args = [self.expr()]
                while self.peek().kind == "comma":
                    self.take()
                    args.append(self.expr())
                self.expect("rparen")
                if t.text in _FUNCS_1:
                    if len(args) != 1:
                        raise ParseError(
                            f"{t.text} takes exactly one argument", offset=t.offset
                        )
                elif t.text in _FUNCS_N:
                    if len(args) < 2:
                        raise ParseError(
                            f"{t.text} takes at least two arguments", offset=t.offset
                        )
                else:
                    raise ParseError(f"unknown function {t.text!r}", offset=t.offset)
                return ("call", t.text, tuple(args))
            return ("var", t.text)
        if t.kind == "lparen":
            node = self.expr()
            self.expect("rparen")
            return node
        raise ParseError(f"unexpected token {t.text!r}", offset=t.offset)


class Expression:
    """A parsed expression; evaluate with a {name: value} environment."""

    def __init__(self, src: str):
        self.src = src
        self.ast = _Parser(src).parse()
        self.variables = sorted(_collect_vars(self.ast))

    def __call__(self, **env: float) -> float:
        return self.eval(env)

    def eval(self, env: dict) -> float:
        v = _eval(self.ast, env, self.src)
        if not math.isfinite(v):
            raise DomainError(f"expression {self.src!r} evaluated to {v!r}")
        return v

    def derivative(self, env: dict, wrt: str, h: float = 1e-6) -> float:
        """Central finite difference in the variable ``wrt``."""
        lo = dict(env)
        hi = dict(env)
        x = env[wrt]
        step = h * max(1.0, abs(x))
        lo[wrt] = x - step
        hi[wrt] = x + step
        return (self.eval(hi) - self.eval(lo)) / (2.0 * step)

    def __repr__(self):
        return f"Expression({self.src!r})"


def _collect_vars(node) -> set:
    tag = node[0]
    if tag == "num":
        return set()
    if tag == "var":
        return {node[1]}
    if tag == "neg":
        return _collect_vars(node[1])
    if tag == "call":
        out = set()
        for a in node[2]:
            out |= _collect_vars(a)
        return out
    return _collect_vars(node[2]) | _collect_vars(node[3])


def _eval(node, env: dict, src: str) -> float:
    tag = node[0]
    if tag == "num":
        return node[1]
    if tag == "var":
        name = node[1]
        if name not in env:
            raise DomainError(f"unbound variable {name!r} in {src!r}")
        return float(env[name])
    if tag == "neg":
        return -_eval(node[1], env, src)
    if tag == "call":
        name = node[1]
        args = [_eval(a, env, src) for a in node[2]]
        try:
            if name in _FUNCS_1:
                return _FUNCS_1[name](args[0])
            return _FUNCS_N[name](*args)
        except ValueError as exc:
            raise DomainError(f"{name}({args[0]!r}) is undefined") from exc
        except OverflowError as exc:
            raise DomainError(f"{name} overflowed") from exc
    _, op, lhs_n, rhs_n = node
    lhs = _eval(lhs_n, env, src)
    rhs = _eval(rhs_n, env, src)
    if op == "+":
        return lhs + rhs
    if op == "-":
        return lhs - rhs
    if op == "*":
        return lhs * rhs
    if op == "/":
        if rhs == 0.0:
            raise DomainError("division by zero")
        return lhs / rhs
    # power
    try:
        v = lhs ** rhs
    except (ValueError, OverflowError, ZeroDivisionError) as exc:
        raise DomainError(f"{lhs!r} ^ {rhs!r} is undefined") from exc
    if isinstance(v, complex):
        raise DomainError(f"{lhs!r} ^ {rhs!r} is not real")
    return v
