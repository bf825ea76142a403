import math

import numpy as np
import pytest

from subriemann.FieldExpr import parse_expression, differentiate, compile_vector, compile_scalar, FUNCTIONS
from subriemann.core.exceptions import ExprSyntaxError, ExprEvaluationError

ENV = {'x': 1.0, 'y': 3.0, 't': 0.0}

def test_evaluate_literal():
    assert parse_expression("0.5*y").evaluate(ENV) == pytest.approx(1.5)

def test_evaluate_mixed():
    e = parse_expression("x^2*y - sin(t)")
    assert e.evaluate({'x': 2.0, 'y': 1.0, 't': 0.0}) == pytest.approx(4.0)

@pytest.mark.parametrize("text,offset", [
    ("x*(y", 4),
    ("x +* y", 3),
    ("x $ y", 2),
    ("", 0),
])
def test_syntax_error_offset(text, offset):
    with pytest.raises(ExprSyntaxError) as e:
        parse_expression(text)
    assert e.value.offset == offset

def test_constants():
    assert parse_expression("2*pi").evaluate({}) == pytest.approx(2 * math.pi)
    assert parse_expression("e").evaluate({}) == pytest.approx(math.e)

def test_precedence():
    assert parse_expression("-x^2").evaluate({'x': 3.0}) == pytest.approx(-9.0)
    assert parse_expression("2^(-1)").evaluate({}) == pytest.approx(0.5)
    assert parse_expression("1-2-3").evaluate({}) == pytest.approx(-4.0)
    assert parse_expression("8/4/2").evaluate({}) == pytest.approx(1.0)

def test_unknown_identifier_deferred():
    e = parse_expression("z + 1")
    with pytest.raises(ExprEvaluationError):
        e.evaluate(ENV)

def test_division_by_zero():
    with pytest.raises(ExprEvaluationError):
        parse_expression("1/x").evaluate({'x': 0.0})

def test_differentiate():
    d = differentiate(parse_expression("x^2*y"), 'x')
    for p in [(1.0, 2.0), (-0.5, 3.0), (2.0, -1.0)]:
        assert d.evaluate({'x': p[0], 'y': p[1]}) == pytest.approx(2 * p[0] * p[1])
    assert differentiate(parse_expression("0.5*y"), 't').is_zero
    assert differentiate(parse_expression("sin(x)"), 'x').evaluate({'x': 0.0}) == pytest.approx(1.0)

def test_mixed_partials_commute():
    e = parse_expression("exp(x*y)*cos(x) + x^3*y^2/(1+y^2)")
    dxy = e.diff('x').diff('y')
    dyx = e.diff('y').diff('x')
    rng = np.random.default_rng(1)
    for _ in range(20):
        x, y = rng.uniform(-1, 1, size=2)
        env = {'x': x, 'y': y}
        assert dxy.evaluate(env) == pytest.approx(dyx.evaluate(env), rel=1e-12, abs=1e-12)

def test_compiled_matches_tree():
    exprs = [parse_expression(s) for s in ("x^2*y - sin(t)", "exp(y/4)", "-0.5*x", "2^(-2)*t")]
    f = compile_vector(exprs, ('x', 'y', 't'))
    p = [0.3, -1.2, 0.7]
    env = dict(zip(('x', 'y', 't'), p))
    assert np.allclose(f(p), [e.evaluate(env) for e in exprs], rtol=1e-14, atol=0.0)
    g = compile_scalar(exprs[0], ('x', 'y', 't'))
    assert g(p) == pytest.approx(exprs[0].evaluate(env))

def test_compiled_division_by_zero():
    f = compile_scalar(parse_expression("1/x"), ('x',))
    with pytest.raises(ExprEvaluationError):
        f([0.0])

def _random_expr(rng, depth):
    from subriemann.FieldExpr import Num, Var, Neg, BinOp, Pow, Call
    if depth == 0 or rng.uniform() < 0.2:
        if rng.uniform() < 0.5:
            return Var(str(rng.choice(['x', 'y', 't'])))
        return Num(float(np.round(rng.uniform(0.0, 3.0), 3)))
    kind = rng.integers(0, 4)
    if kind == 0:
        return Neg(_random_expr(rng, depth - 1))
    if kind == 1:
        return BinOp(str(rng.choice(['+', '-', '*', '/'])), _random_expr(rng, depth - 1), _random_expr(rng, depth - 1))
    if kind == 2:
        return Pow(_random_expr(rng, depth - 1), int(rng.integers(-2, 4)))
    return Call(str(rng.choice(['sin', 'cos', 'exp'])), _random_expr(rng, depth - 1))

def test_print_parse_roundtrip():
    rng = np.random.default_rng(5)
    for _ in range(200):
        e = _random_expr(rng, 4)
        assert parse_expression(str(e)) == e

def _smooth_expr(rng, depth):
    from subriemann.FieldExpr import Num, Var, BinOp, Call
    if depth == 0:
        if rng.uniform() < 0.6:
            return Var(str(rng.choice(['x', 'y', 't'])))
        return Num(float(np.round(rng.uniform(0.1, 2.0), 3)))
    op = str(rng.choice(['+', '-', '*', 'sin', 'cos', 'exp']))
    if op in FUNCTIONS:
        return Call(op, BinOp('*', Num(0.5), _smooth_expr(rng, depth - 1)))
    return BinOp(op, _smooth_expr(rng, depth - 1), _smooth_expr(rng, depth - 1))

def test_derivative_matches_central_difference():
    rng = np.random.default_rng(9)
    h = 1e-5
    for _ in range(50):
        e = _smooth_expr(rng, 3)
        env = dict(zip(('x', 'y', 't'), rng.uniform(-1, 1, size=3)))
        for name in ('x', 'y', 't'):
            up = dict(env, **{name: env[name] + h})
            down = dict(env, **{name: env[name] - h})
            fd = (e.evaluate(up) - e.evaluate(down)) / (2 * h)
            assert differentiate(e, name).evaluate(env) == pytest.approx(fd, rel=1e-6, abs=1e-6)

def test_overflowing_constant_is_not_folded():
    e = parse_expression("exp(1000)*x")
    assert differentiate(e, 'y').is_zero
    with pytest.raises(ExprEvaluationError):
        differentiate(e, 'x').evaluate({'x': 1.0})
    with pytest.raises(ExprEvaluationError):
        compile_scalar(e, ('x',))([1.0])
