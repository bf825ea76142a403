"""
/*
 * This file is part of the pysubriemann distribution (https://github.com/pysubriemann/pysubriemann).
 * Copyright (c) 2025 The pysubriemann authors.
 *
 * This program is free software: you can redistribute it and/or modify
 * it under the terms of the GNU Affero General Public License as published by
 * the Free Software Foundation, version 3.
 *
 * This program is distributed in the hope that it will be useful, but
 * WITHOUT ANY WARRANTY; without even the implied warranty of
 * MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE. See the GNU
 * Affero General Public License for more details.
 *
 * You should have received a copy of the GNU Affero General Public License
 * along with this program. If not, see <https://www.gnu.org/licenses/>.
 */
"""

import math
import re
from dataclasses import dataclass
from typing import Callable, Dict, FrozenSet, Mapping, Sequence

import numpy as np

from .core.exceptions import ExprSyntaxError, ExprEvaluationError
from .core.log import get_logger

logger = get_logger("FieldExpr")

FUNCTIONS = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
}

CONSTANTS = {
    "pi": math.pi,
    "e": math.e,
}

class Expr:
    """Real-valued expression over chart coordinates."""

    def evaluate(self, env: Mapping[str, float]) -> float:
        try:
            return float(self._eval(env))
        except ZeroDivisionError:
            raise ExprEvaluationError(f'division by zero evaluating {self}')
        except OverflowError:
            raise ExprEvaluationError(f'overflow evaluating {self}')
        except ValueError:
            raise ExprEvaluationError(f'math domain error evaluating {self}')

    def diff(self, name: str) -> "Expr":
        raise NotImplementedError

    def symbols(self) -> FrozenSet[str]:
        raise NotImplementedError

    def to_source(self, index: Mapping[str, int]) -> str:
        raise NotImplementedError

    def _eval(self, env):
        raise NotImplementedError

    @property
    def is_zero(self) -> bool:
        return isinstance(self, Num) and self.value == 0.0

    def __add__(self, other): return add(self, _wrap(other))
    def __radd__(self, other): return add(_wrap(other), self)
    def __sub__(self, other): return sub(self, _wrap(other))
    def __rsub__(self, other): return sub(_wrap(other), self)
    def __mul__(self, other): return mul(self, _wrap(other))
    def __rmul__(self, other): return mul(_wrap(other), self)
    def __truediv__(self, other): return div(self, _wrap(other))
    def __neg__(self): return neg(self)

@dataclass(frozen=True, eq=True)
class Num(Expr):
    value: float

    def _eval(self, env):
        return self.value

    def diff(self, name):
        return ZERO

    def symbols(self):
        return frozenset()

    def to_source(self, index):
        return repr(self.value) if self.value >= 0 else f'(-{-self.value!r})'

    def __str__(self):
        return repr(self.value) if self.value >= 0 else f'(-{-self.value!r})'

@dataclass(frozen=True, eq=True)
class Var(Expr):
    name: str

    def _eval(self, env):
        try:
            return env[self.name]
        except KeyError:
            raise ExprEvaluationError(f'unknown identifier: {self.name}')

    def diff(self, name):
        return ONE if name == self.name else ZERO

    def symbols(self):
        return frozenset((self.name,))

    def to_source(self, index):
        if self.name not in index:
            raise ExprEvaluationError(f'unknown identifier: {self.name}')
        return f'p[{index[self.name]}]'

    def __str__(self):
        return self.name

@dataclass(frozen=True, eq=True)
class Neg(Expr):
    arg: Expr

    def _eval(self, env):
        return -self.arg._eval(env)

    def diff(self, name):
        return neg(self.arg.diff(name))

    def symbols(self):
        return self.arg.symbols()

    def to_source(self, index):
        return f'(-{self.arg.to_source(index)})'

    def __str__(self):
        return f'(-{self.arg})'

@dataclass(frozen=True, eq=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    def _eval(self, env):
        a = self.left._eval(env)
        b = self.right._eval(env)
        if self.op == '+':
            return a + b
        if self.op == '-':
            return a - b
        if self.op == '*':
            return a * b
        return a / b

    def diff(self, name):
        a, b = self.left, self.right
        da, db = a.diff(name), b.diff(name)
        if self.op == '+':
            return add(da, db)
        if self.op == '-':
            return sub(da, db)
        if self.op == '*':
            return add(mul(da, b), mul(a, db))
        return div(sub(mul(da, b), mul(a, db)), power(b, 2))

    def symbols(self):
        return self.left.symbols() | self.right.symbols()

    def to_source(self, index):
        return f'({self.left.to_source(index)} {self.op} {self.right.to_source(index)})'

    def __str__(self):
        return f'({self.left} {self.op} {self.right})'

@dataclass(frozen=True, eq=True)
class Pow(Expr):
    base: Expr
    exponent: int

    def _eval(self, env):
        b = self.base._eval(env)
        if self.exponent < 0:
            return 1.0 / (b ** -self.exponent)
        return b ** self.exponent

    def diff(self, name):
        if self.exponent == 0:
            return ZERO
        return mul(mul(Num(float(self.exponent)), power(self.base, self.exponent - 1)), self.base.diff(name))

    def symbols(self):
        return self.base.symbols()

    def to_source(self, index):
        if self.exponent < 0:
            return f'(1.0 / ({self.base.to_source(index)}) ** {-self.exponent})'
        return f'(({self.base.to_source(index)}) ** {self.exponent})'

    def __str__(self):
        return f'({self.base}^{self.exponent})'

@dataclass(frozen=True, eq=True)
class Call(Expr):
    func: str
    arg: Expr

    def _eval(self, env):
        return FUNCTIONS[self.func](self.arg._eval(env))

    def diff(self, name):
        da = self.arg.diff(name)
        if self.func == 'sin':
            outer = call('cos', self.arg)
        elif self.func == 'cos':
            outer = neg(call('sin', self.arg))
        else:
            outer = call('exp', self.arg)
        return mul(outer, da)

    def symbols(self):
        return self.arg.symbols()

    def to_source(self, index):
        return f'_{self.func}({self.arg.to_source(index)})'

    def __str__(self):
        return f'{self.func}({self.arg})'

ZERO = Num(0.0)
ONE = Num(1.0)

def _wrap(value) -> Expr:
    if isinstance(value, Expr):
        return value
    return Num(float(value))

# Folding constructors: local rewrites only (constants, 0 and 1 identities).

def neg(a: Expr) -> Expr:
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)

def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    if a.is_zero:
        return b
    if b.is_zero:
        return a
    if isinstance(b, Neg):
        return sub(a, b.arg)
    return BinOp('+', a, b)

def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    if b.is_zero:
        return a
    if a.is_zero:
        return neg(b)
    if a == b:
        return ZERO
    if isinstance(b, Neg):
        return add(a, b.arg)
    return BinOp('-', a, b)

def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    if a.is_zero or b.is_zero:
        return ZERO
    if a == ONE:
        return b
    if b == ONE:
        return a
    if isinstance(a, Num) and a.value == -1.0:
        return neg(b)
    if isinstance(b, Num) and b.value == -1.0:
        return neg(a)
    if isinstance(a, Neg) and isinstance(b, Neg):
        return mul(a.arg, b.arg)
    if isinstance(a, Neg):
        return neg(mul(a.arg, b))
    if isinstance(b, Neg):
        return neg(mul(a, b.arg))
    return BinOp('*', a, b)

def div(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num) and b.value != 0.0:
        return Num(a.value / b.value)
    if a.is_zero and not b.is_zero:
        return ZERO
    if b == ONE:
        return a
    return BinOp('/', a, b)

def power(a: Expr, n: int) -> Expr:
    if n == 0:
        return ONE
    if n == 1:
        return a
    if isinstance(a, Num) and (a.value != 0.0 or n > 0):
        try:
            return Num(a.value ** n if n > 0 else 1.0 / a.value ** -n)
        except (OverflowError, ZeroDivisionError):
            logger.debug(f"Leaving {a}^{n} unfolded: out of float range")
    return Pow(a, n)

def call(func: str, a: Expr) -> Expr:
    if isinstance(a, Num):
        try:
            return Num(FUNCTIONS[func](a.value))
        except (OverflowError, ValueError):
            # raised again, as ExprEvaluationError, when evaluated
            logger.debug(f"Leaving {func}({a}) unfolded: out of float range")
    return Call(func, a)

_TOKEN = re.compile(r'\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))')

class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.tokens = []
        self._tokenize()
        self.i = 0

    def _offset(self, char_pos: int) -> int:
        return len(self.text[:char_pos].encode('utf-8'))

    def _tokenize(self):
        pos = 0
        text = self.text
        while pos < len(text):
            if text[pos:].strip() == '':
                break
            m = _TOKEN.match(text, pos)
            if not m:
                start = pos + len(text[pos:]) - len(text[pos:].lstrip())
                raise ExprSyntaxError(self._offset(start), f'unexpected character {text[start]!r}')
            kind = m.lastgroup
            self.tokens.append((kind, m.group(kind), m.start(kind)))
            pos = m.end()
        self.end = len(text)

    def peek(self):
        if self.i < len(self.tokens):
            return self.tokens[self.i]
        return ('end', None, self.end)

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def fail(self, message, tok=None):
        tok = tok or self.peek()
        raise ExprSyntaxError(self._offset(tok[2]), message)

    def expect(self, value):
        tok = self.peek()
        if tok[0] != 'op' or tok[1] != value:
            self.fail(f'expected {value!r}')
        return self.take()

    def parse(self) -> Expr:
        if not self.tokens:
            raise ExprSyntaxError(0, 'empty expression')
        e = self.expr()
        if self.peek()[0] != 'end':
            self.fail('unexpected token')
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[0] == 'op' and self.peek()[1] in '+-':
            op = self.take()[1]
            e = BinOp(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek()[0] == 'op' and self.peek()[1] in '*/':
            op = self.take()[1]
            e = BinOp(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        tok = self.peek()
        if tok[0] == 'op' and tok[1] == '-':
            self.take()
            return Neg(self.unary())
        if tok[0] == 'op' and tok[1] == '+':
            self.take()
            return self.unary()
        return self.pow()

    def pow(self) -> Expr:
        base = self.atom()
        tok = self.peek()
        if tok[0] == 'op' and tok[1] == '^':
            self.take()
            return Pow(base, self.exponent())
        return base

    def exponent(self) -> int:
        paren = False
        tok = self.peek()
        if tok[0] == 'op' and tok[1] == '(':
            self.take()
            paren = True
        sign = 1
        tok = self.peek()
        if tok[0] == 'op' and tok[1] in '+-':
            sign = -1 if tok[1] == '-' else 1
            self.take()
        tok = self.peek()
        if tok[0] != 'num' or not tok[1].isdigit():
            self.fail('integer exponent expected')
        self.take()
        if paren:
            self.expect(')')
        return sign * int(tok[1])

    def atom(self) -> Expr:
        tok = self.take()
        kind, value, _ = tok
        if kind == 'num':
            return Num(float(value))
        if kind == 'ident':
            if value in FUNCTIONS:
                self.expect('(')
                arg = self.expr()
                self.expect(')')
                return Call(value, arg)
            if value in CONSTANTS:
                return Num(CONSTANTS[value])
            return Var(value)
        if kind == 'op' and value == '(':
            e = self.expr()
            self.expect(')')
            return e
        self.fail('unexpected token' if kind != 'end' else 'unexpected end of expression', tok)

def parse_expression(text: str) -> Expr:
    logger.trace(f"Parsing expression {text!r}")
    return _Parser(text).parse()

def differentiate(e: Expr, coordinate: str) -> Expr:
    return e.diff(coordinate)

def is_polynomial(e: Expr) -> bool:
    """Whether ``e`` is a polynomial in its variables (functions only of constants)."""
    if isinstance(e, (Num, Var)):
        return True
    if isinstance(e, Neg):
        return is_polynomial(e.arg)
    if isinstance(e, Pow):
        return e.exponent >= 0 and is_polynomial(e.base)
    if isinstance(e, Call):
        return not e.arg.symbols()
    if isinstance(e, BinOp):
        if e.op == '/':
            return not e.right.symbols() and is_polynomial(e.left)
        return is_polynomial(e.left) and is_polynomial(e.right)
    return False

_NAMESPACE = {"__builtins__": {}, "_sin": math.sin, "_cos": math.cos, "_exp": math.exp}

def compile_vector(exprs: Sequence[Expr], coords: Sequence[str]) -> Callable[[Sequence[float]], np.ndarray]:
    """Compile expressions into one callable ``f(p) -> ndarray`` over chart coordinates."""
    index: Dict[str, int] = {name: i for i, name in enumerate(coords)}
    body = ", ".join(e.to_source(index) for e in exprs)
    fn = eval(f'lambda p: ({body},)', dict(_NAMESPACE))

    def evaluate(p) -> np.ndarray:
        try:
            return np.array(fn(np.asarray(p, dtype=float).tolist()), dtype=float)
        except ZeroDivisionError:
            raise ExprEvaluationError(f'division by zero at {list(p)}')
        except OverflowError:
            raise ExprEvaluationError(f'overflow at {list(p)}')
        except ValueError:
            raise ExprEvaluationError(f'math domain error at {list(p)}')

    return evaluate

def compile_scalar(e: Expr, coords: Sequence[str]) -> Callable[[Sequence[float]], float]:
    vec = compile_vector([e], coords)
    return lambda p: float(vec(p)[0])

def gradient(e: Expr, coords: Sequence[str]):
    return [e.diff(x) for x in coords]

def hessian(e: Expr, coords: Sequence[str]):
    first = gradient(e, coords)
    return [[g.diff(x) for x in coords] for g in first]
