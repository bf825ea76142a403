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

import io
import os
import tempfile
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from .FieldExpr import Expr, ZERO, add, mul, parse_expression, compile_scalar
from .StructureSpec import StructureSpec
from .Geometry import FrameField, growth_vector
from .Connection import horizontal_hessian
from .Geodesics import nonholonomic_geodesic, riemannian_geodesic, geodesic_from_constraints
from .Connectivity import (
    MultiIndex, adapted_frame, ballbox_probe, commutator_flow, commutator_remainder, dc_lower, dh_upper, steer,
)
from .Convexity import lipschitz_estimate, lower_bound_check, nconvexity_by_geodesics, nconvexity_by_hessian
from .Models import builtin, is_builtin, heisenberg_dc, heisenberg_plan
from .core.rng import stream
from .core.log import get_logger

logger = get_logger("Verify")

SUITE_STEP = 1e-2
EXACT_STEP = 1e-3
ROUNDOFF = 1e-12
STEER_ITERATIONS = 50

PASS = 'pass'
FAIL = 'fail'
SKIP = 'skip'

@dataclass
class Criterion:
    name: str
    status: str
    detail: Dict[str, object] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {'name': self.name, 'status': self.status, 'detail': self.detail}

@dataclass
class SuiteResult:
    model: str
    seed: int
    scale: float
    criteria: List[Criterion]

    @property
    def passed(self) -> bool:
        return all(c.status != FAIL for c in self.criteria)

    def to_dict(self) -> dict:
        return {
            'model': self.model,
            'seed': self.seed,
            'scale': self.scale,
            'passed': self.passed,
            'criteria': [c.to_dict() for c in self.criteria],
        }

    def table(self) -> str:
        width = max(len(c.name) for c in self.criteria)
        return '\n'.join(f'{c.name:<{width}}  {c.status}' for c in self.criteria)

class _Context:
    def __init__(self, spec: StructureSpec, seed: int, scale: float, step: float):
        self.spec = spec
        self.seed = seed
        self.scale = scale
        self.step = step

    def count(self, n: int) -> int:
        return max(1, int(round(n * self.scale)))

    @property
    def carnot(self) -> bool:
        return self.spec.weights is not None

    @property
    def heisenberg1(self) -> bool:
        return self.spec.name == 'heisenberg-1'

def _ok(flag: bool) -> str:
    return PASS if flag else FAIL

def carnot_flatness(ctx: _Context) -> Criterion:
    if not ctx.carnot:
        return Criterion('carnot-flatness', SKIP, {'reason': 'no dilation weights declared'})
    worst = 0.0
    for i in range(ctx.count(1000)):
        p = ctx.spec.sample_point(stream(ctx.seed, i))
        worst = max(worst, float(np.max(np.abs(ctx.spec.frame.horizontal_christoffel(p)))))
    return Criterion('carnot-flatness', _ok(worst <= 1e-12), {'max_abs_gamma': worst})

def geodesic_exactness(ctx: _Context) -> Criterion:
    if not ctx.heisenberg1:
        return Criterion('geodesic-exactness', SKIP, {'reason': 'closed forms known on heisenberg-1 only'})
    spec = ctx.spec
    cases = [
        ((0.0, 0.0, 0.0), (1.0, 0.0), 1.0, (1.0, 0.0, 0.0)),
        ((0.0, 1.0, 0.0), (1.0, 0.0), 1.0, (1.0, 1.0, 0.5)),
        ((0.0, 0.0, 0.0), (2 ** -0.5, 2 ** -0.5), 2 ** 0.5, (1.0, 1.0, 0.0)),
    ]
    endpoint_err = 0.0
    drift = 0.0
    for x0, v0, T, expected in cases:
        curve = nonholonomic_geodesic(spec, x0, v0, T, EXACT_STEP)
        endpoint_err = max(endpoint_err, float(np.max(np.abs(curve.endpoint - expected))))
        drift = max(drift, float(np.max(np.abs(curve.speeds() - np.linalg.norm(v0)))))
    v = np.array([0.6, -0.8])
    a = nonholonomic_geodesic(spec, (0.1, 0.2, 0.3), 2 * v, 0.5, EXACT_STEP).endpoint
    b = nonholonomic_geodesic(spec, (0.1, 0.2, 0.3), v, 1.0, EXACT_STEP).endpoint
    homogeneity = float(np.max(np.abs(a - b)))
    passed = endpoint_err <= 1e-8 and drift <= 1e-9 and homogeneity <= 1e-8
    return Criterion('geodesic-exactness', _ok(passed),
                     {'endpoint_error': endpoint_err, 'speed_drift': drift, 'homogeneity_error': homogeneity})

def _random_initial(ctx: _Context, i: int):
    rng = stream(ctx.seed, i)
    x0 = ctx.spec.sample_point(rng, shrink=0.5)
    v0 = rng.normal(size=ctx.spec.k)
    return x0, v0 / np.linalg.norm(v0)

def formulation_cross_check(ctx: _Context) -> Criterion:
    worst = 0.0
    for i in range(ctx.count(20)):
        x0, v0 = _random_initial(ctx, i)
        a = nonholonomic_geodesic(ctx.spec, x0, v0, 0.5, ctx.step)
        b = geodesic_from_constraints(ctx.spec, x0, v0, 0.5, ctx.step)
        n = min(len(a.t), len(b.t))
        worst = max(worst, float(np.max(np.abs(a.points[:n] - b.points[:n]))))
    return Criterion('formulation-cross-check', _ok(worst <= 1e-6), {'max_deviation': worst})

def riemannian_coincidence(ctx: _Context) -> Criterion:
    if not ctx.carnot:
        return Criterion('riemannian-coincidence', SKIP, {'reason': 'not a Carnot model'})
    spec = ctx.spec
    worst = 0.0
    for i in range(ctx.count(20)):
        x0, v0 = _random_initial(ctx, i)
        w0 = np.concatenate((v0, np.zeros(spec.m - spec.k)))
        a = nonholonomic_geodesic(spec, x0, v0, 1.0, ctx.step)
        b = riemannian_geodesic(spec, x0, w0, 1.0, ctx.step)
        n = min(len(a.t), len(b.t))
        worst = max(worst, float(np.max(np.abs(a.points[:n] - b.points[:n]))))
    return Criterion('riemannian-coincidence', _ok(worst <= 1e-8), {'max_deviation': worst})

def _remainder_slope(spec, I: MultiIndex, base, step) -> Dict[str, object]:
    ts = np.array([0.2, 0.1, 0.05, 0.025])
    errs = np.array([commutator_remainder(spec, I, t, base, step) for t in ts])
    detail = {'index': str(I), 'errors': errs.tolist()}
    if np.max(errs) <= ROUNDOFF:
        detail['slope'] = None
        detail['passed'] = True
        return detail
    slope = float(np.polyfit(np.log(ts), np.log(np.maximum(errs, 1e-300)), 1)[0])
    detail['slope'] = slope
    detail['passed'] = slope >= I.weight + 0.8
    return detail

def commutator_expansion(ctx: _Context) -> Criterion:
    if not ctx.carnot:
        return Criterion('commutator-flow', SKIP, {'reason': 'geodesic legs only realize brackets on Carnot models'})
    spec = ctx.spec
    detail: Dict[str, object] = {}
    passed = True
    if ctx.heisenberg1:
        end, _ = commutator_flow(spec, MultiIndex((1, 2)), 0.1, (0.0, 0.0, 0.0), EXACT_STEP)
        err = float(np.max(np.abs(end - np.array([0.0, 0.0, -0.01]))))
        detail['square_error'] = err
        passed = err <= 1e-9
    base = spec.center() + 0.25
    frame = adapted_frame(spec, base)
    for weight in (2, 3):
        picks = [I for I in frame.indices if I.weight == weight]
        if picks:
            d = _remainder_slope(spec, picks[0], base, ctx.step)
            detail[f'weight_{weight}'] = d
            passed = passed and d['passed']
    return Criterion('commutator-flow', _ok(passed), detail)

def steering(ctx: _Context) -> Criterion:
    spec = ctx.spec
    p = spec.center()
    n = ctx.count(100)
    ok = 0
    worst = 0.0
    iterations = 0
    for i in range(n):
        q = spec.sample_point(stream(ctx.seed, i), shrink=0.5)
        plan = steer(spec, p, q, tol=1e-6, maxiter=STEER_ITERATIONS, step=ctx.step)
        res = float(plan.notes['residual'])
        used = int(plan.notes['iterations'])
        worst = max(worst, res)
        iterations = max(iterations, used)
        ok += int(res <= 1e-6 and used <= STEER_ITERATIONS)
    return Criterion('steering', _ok(ok == n), {'converged': ok, 'targets': n, 'max_residual': worst,
                                                'max_iterations': iterations, 'iteration_limit': STEER_ITERATIONS})

def _ball_pair(ctx: _Context, i: int, radius: float):
    rng = stream(ctx.seed, i)
    out = []
    for _ in range(2):
        d = rng.normal(size=ctx.spec.m)
        out.append(ctx.spec.center() + d * radius * rng.uniform() ** (1.0 / ctx.spec.m) / np.linalg.norm(d))
    return out

def distance_sandwich(ctx: _Context) -> Criterion:
    if not ctx.heisenberg1:
        return Criterion('distance-sandwich', SKIP, {'reason': 'exact distance known on heisenberg-1 only'})
    ratios = []
    ordered = True
    for i in range(ctx.count(50)):
        p, q = _ball_pair(ctx, i, 0.2)
        upper, _ = dh_upper(ctx.spec, p, q, segments_budget=6, restarts=1, step=ctx.step, seed=ctx.seed)
        lower = dc_lower(ctx.spec, p, q)
        exact = heisenberg_dc(p, q)
        ordered = ordered and lower <= upper
        if exact > 0.0:
            ratios.append(upper / exact)
    ratios = np.array(ratios)
    passed = ordered and bool(np.all(ratios >= 1 - 1e-3)) and bool(np.all(ratios <= 3.0)) \
        and float(np.median(ratios)) <= 1.2
    return Criterion('distance-sandwich', _ok(passed), {
        'lower_below_upper': ordered,
        'min_ratio': float(ratios.min()),
        'median_ratio': float(np.median(ratios)),
        'max_ratio': float(ratios.max()),
    })

def dc_equals_dh(ctx: _Context) -> Criterion:
    if not ctx.heisenberg1:
        return Criterion('dc-equals-dh', SKIP, {'reason': 'planner defined on heisenberg-1'})
    p, q = np.zeros(3), np.array([0.0, 0.0, 1.0])
    oracle = heisenberg_dc(p, q)
    r16 = heisenberg_plan(p, q, 16).length / oracle
    r32 = heisenberg_plan(p, q, 32).length / oracle
    upper, _ = dh_upper(ctx.spec, p, q, segments_budget=4, restarts=1, step=ctx.step, seed=ctx.seed)
    # regular 32-gon perimeter over the circle's is sqrt(32 tan(pi/32)/pi) = 1.0016
    passed = r16 <= 1.007 and r32 <= 1.002 and upper <= 4.01
    return Criterion('dc-equals-dh', _ok(passed), {'ratio_16': r16, 'ratio_32': r32, 'dh_upper_budget_4': upper})

def ballbox_inclusion(ctx: _Context) -> Criterion:
    eps = 0.2 if ctx.heisenberg1 else 0.1
    report = ballbox_probe(ctx.spec, ctx.spec.center(), eps, samples=ctx.count(200), step=ctx.step,
                           seed=ctx.seed, reach_samples=0)
    return Criterion('ballbox-inclusion', _ok(report.inclusion_violations == 0), report.to_dict())

def _apply(X: FrameField, f: Expr) -> Expr:
    out = ZERO
    for c, x in zip(X.components, X.coords):
        out = add(out, mul(c, f.diff(x)))
    return out

def _convexity_functions(spec: StructureSpec) -> List[str]:
    if spec.name == 'heisenberg-1':
        return ['x^2', 'x^2+y^2', 't', 'x^4', 'x^2-y^2', 'x*y']
    if spec.name == 'engel':
        return ['x1^2+x2^2', 'x1^2-x2^2']
    if spec.weights is not None:
        a, b = spec.coords[0], spec.coords[spec.k // 2]
        return [f'{a}^2+{b}^2', f'{a}^2-{b}^2']
    return []

def convexity_equivalence(ctx: _Context) -> Criterion:
    spec = ctx.spec
    functions = _convexity_functions(spec)
    if not functions:
        return Criterion('convexity-equivalence', SKIP, {'reason': 'no reference functions for this model'})
    verdicts = {}
    agree = True
    identity = 0.0
    frame = spec.frame
    for text in functions:
        f = parse_expression(text)
        a = nconvexity_by_hessian(spec, f, samples=ctx.count(200), seed=ctx.seed)
        b = nconvexity_by_geodesics(spec, f, geodesics=ctx.count(200), seed=ctx.seed, step=ctx.step)
        verdicts[text] = [a.verdict.label, b.verdict.label]
        agree = agree and a.verdict == b.verdict
        sym = [[compile_scalar(mul(parse_expression('0.5'),
                                   add(_apply(frame.fields[i], _apply(frame.fields[j], f)),
                                       _apply(frame.fields[j], _apply(frame.fields[i], f)))), spec.coords)
                for j in range(spec.k)] for i in range(spec.k)]
        for s in range(ctx.count(20)):
            p = spec.sample_point(stream(ctx.seed, s))
            H = horizontal_hessian(spec, f, p).matrix
            S = np.array([[g(p) for g in row] for row in sym])
            identity = max(identity, float(np.max(np.abs(H - S))))
    return Criterion('convexity-equivalence', _ok(agree and identity <= 1e-10),
                     {'verdicts': verdicts, 'symmetrized_hessian_error': identity})

def _probe_functions(spec: StructureSpec) -> List[str]:
    square = '+'.join(f'{c}^2' for c in spec.coords[:spec.k])
    return [square, spec.coords[0], spec.coords[-1]]

def lower_bound(ctx: _Context) -> Criterion:
    detail = {}
    passed = True
    for text in _probe_functions(ctx.spec):
        report = lower_bound_check(ctx.spec, parse_expression(text), ctx.spec.center(), radius=0.2,
                                   samples=ctx.count(500), seed=ctx.seed, step=ctx.step)
        detail[text] = report.to_dict()
        passed = passed and report.violations == 0
    return Criterion('lower-bound', _ok(passed), detail)

def lipschitz(ctx: _Context) -> Criterion:
    region = (ctx.spec.center(), 0.3)
    detail = {}
    passed = True
    for n, text in enumerate(_probe_functions(ctx.spec)):
        est = lipschitz_estimate(ctx.spec, parse_expression(text), region, pairs=ctx.count(200),
                                 seed=ctx.seed, step=ctx.step)
        detail[text] = est.to_dict()
        passed = passed and bool(np.isfinite(est.sup_quotient))
        if n == 1 and ctx.carnot:
            # first-layer coordinates are 1-Lipschitz for d_c on Carnot models
            passed = passed and est.sup_quotient <= 1.01
    return Criterion('lipschitz', _ok(passed), detail)

def _vector_arg(name: str, v) -> str:
    return f'--{name}=' + ','.join(repr(float(x)) for x in v)

def determinism(ctx: _Context) -> Criterion:
    """Run CLI commands twice and compare their output bytes."""
    from .Cli import run
    p = ctx.spec.center()
    q = ctx.spec.sample_point(stream(ctx.seed, 0), shrink=0.25)
    common = ['--seed', str(ctx.seed), '--step', repr(ctx.step), '--quiet-timestamps']
    commands = [
        ['ballbox', _vector_arg('point', p), '--eps', '0.1', '--samples', str(ctx.count(10))],
        ['steer', _vector_arg('p', p), _vector_arg('q', q)],
        ['dist', _vector_arg('p', p), _vector_arg('q', q), '--budget', '2', '--restarts', '0'],
    ]
    with tempfile.TemporaryDirectory() as tmp:
        if is_builtin(ctx.spec.name) and builtin(ctx.spec.name).serialize() == ctx.spec.serialize():
            model = ctx.spec.name
        else:
            model = os.path.join(tmp, 'model.json')
            with open(model, 'wt', encoding='utf-8') as f:
                f.write(ctx.spec.serialize())

        def once(argv):
            out = io.StringIO()
            code = run([argv[0], '--model', model] + common + argv[1:], stdout=out)
            return code, out.getvalue().encode('utf-8')

        mismatched = []
        for argv in commands:
            if once(argv) != once(argv):
                mismatched.append(argv[0])
    return Criterion('determinism', _ok(not mismatched), {'commands': [c[0] for c in commands],
                                                          'mismatched': mismatched})

CRITERIA: Dict[str, Callable[[_Context], Criterion]] = {
    'carnot-flatness': carnot_flatness,
    'geodesic-exactness': geodesic_exactness,
    'formulation-cross-check': formulation_cross_check,
    'riemannian-coincidence': riemannian_coincidence,
    'commutator-flow': commutator_expansion,
    'steering': steering,
    'distance-sandwich': distance_sandwich,
    'dc-equals-dh': dc_equals_dh,
    'ballbox-inclusion': ballbox_inclusion,
    'convexity-equivalence': convexity_equivalence,
    'lower-bound': lower_bound,
    'lipschitz': lipschitz,
    'determinism': determinism,
}

def run_suite(spec_name: str, seed: int = 0, scale: float = 1.0, step: float = SUITE_STEP,
              spec: Optional[StructureSpec] = None, only: Optional[List[str]] = None) -> SuiteResult:
    """Run the invariant suite on a model; ``scale`` multiplies every sample count."""
    spec = builtin(spec_name) if spec is None else spec
    ctx = _Context(spec, seed, scale, step)
    results = []
    for name, criterion in CRITERIA.items():
        if only and name not in only:
            continue
        logger.debug(f"Running {name} on {spec.name}")
        result = criterion(ctx)
        if result.status == FAIL:
            logger.warning(f"{result.name} failed on {spec.name}: {result.detail}")
        results.append(result)
    return SuiteResult(spec.name, seed, scale, results)
