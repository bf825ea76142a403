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
import csv
import sys
import json
import argparse
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ._version import __version__
from .FieldExpr import parse_expression
from .StructureSpec import StructureSpec
from .Geometry import bracket_field, growth_vector
from .Connection import christoffels, horizontal_gradient, horizontal_hessian, sublaplacian
from .Geodesics import (
    DEFAULT_STEP, nonholonomic_geodesic, horizontal_exponential, riemannian_geodesic, geodesic_from_constraints,
)
from .Connectivity import MultiIndex, ballbox_probe, commutator_flow, dc_lower, dh_upper, steer
from .Convexity import lipschitz_estimate, lower_bound_check, nconvexity_by_geodesics, nconvexity_by_hessian
from .Models import export_builtin, heisenberg_dc, heisenberg_plan, resolve_model
from .Verify import SUITE_STEP, run_suite
from .core.enums import OutputFormat
from .core.exceptions import SubRiemannError, UsageError, ExprSyntaxError, UnknownModelError
from .core.log import get_logger

logger = get_logger("Cli")

class ExitCode:
    OK                                  = 0
    USAGE                               = 1
    NUMERICAL                           = 2
    VERIFY_FAILED                       = 3

@dataclass(frozen=True)
class RunConfig:
    command: str
    model: str
    seed: int
    step: float
    format: OutputFormat
    params: Tuple[Tuple[str, Any], ...]

    def to_dict(self) -> dict:
        return {
            'command': self.command,
            'model': self.model,
            'seed': self.seed,
            'step': self.step,
            'format': self.format.label,
            'params': {k: v for k, v in self.params},
        }

class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f'{self.prog}: {message}')

_COMMON = ('command', 'model', 'seed', 'step', 'format', 'quiet_timestamps', 'handler')

def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, tuple):
        return list(value)
    raise TypeError(f'cannot serialize {type(value).__name__}')

def _parse_reals(text: str, what: str) -> np.ndarray:
    text = text.strip()
    if text.startswith('['):
        try:
            values = json.loads(text)
        except json.JSONDecodeError as e:
            raise UsageError(f'{what}: {e}')
    else:
        values = [v for v in text.replace('\n', ',').split(',') if v.strip()]
    try:
        return np.array([float(v) for v in values], dtype=float)
    except (TypeError, ValueError):
        raise UsageError(f'{what}: expected comma-separated reals')

def _vector(args, name: str, size: Optional[int] = None, required: bool = True) -> Optional[np.ndarray]:
    inline = getattr(args, name, None)
    path = getattr(args, f'{name}_file', None)
    if inline is not None and path is not None:
        raise UsageError(f'--{name} and --{name}-file are mutually exclusive')
    if path is not None:
        try:
            with open(path, 'rt', encoding='utf-8') as f:
                v = _parse_reals(f.read(), f'--{name}-file')
        except OSError as e:
            raise UsageError(f'--{name}-file: {e}')
    elif inline is not None:
        v = _parse_reals(inline, f'--{name}')
    elif required:
        raise UsageError(f'--{name} is required')
    else:
        return None
    if size is not None and len(v) != size:
        raise UsageError(f'--{name} needs {size} components, got {len(v)}')
    return v

def _add_vector(parser, name: str, help: str):
    parser.add_argument(f'--{name}', help=f'{help} (comma-separated reals)')
    parser.add_argument(f'--{name}-file', dest=f'{name}_file', help=f'file holding {help}')

def _function(args):
    try:
        return parse_expression(args.f)
    except ExprSyntaxError as e:
        raise UsageError(f'--f: {e}')

def cmd_bracket(args, spec: StructureSpec):
    index = MultiIndex.parse(args.index)
    if any(i > spec.k for i in index.entries):
        raise UsageError(f'--index entries must be between 1 and {spec.k}')
    field = bracket_field(spec, index.entries)
    p = _vector(args, 'point', spec.m)
    return {'index': str(index), 'field': [str(c) for c in field.components], 'point': p,
            'value': field.evaluate(p)}

def cmd_growth(args, spec):
    return growth_vector(spec, _vector(args, 'point', spec.m)).to_dict()

def cmd_christoffel(args, spec):
    return christoffels(spec, _vector(args, 'point', spec.m)).to_dict()

def cmd_geodesic(args, spec):
    return nonholonomic_geodesic(spec, _vector(args, 'point', spec.m), _vector(args, 'velocity', spec.k),
                                 args.time, args.step)

def cmd_exp(args, spec):
    p = _vector(args, 'point', spec.m)
    v = _vector(args, 'velocity', spec.k)
    return {'point': p, 'velocity': v, 'endpoint': horizontal_exponential(spec, p, v)}

def cmd_riemannian(args, spec):
    return riemannian_geodesic(spec, _vector(args, 'point', spec.m), _vector(args, 'velocity', spec.m),
                               args.time, args.step)

def cmd_constraint_geodesic(args, spec):
    return geodesic_from_constraints(spec, _vector(args, 'point', spec.m), _vector(args, 'velocity', spec.k),
                                     args.time, args.step, cross_check=args.cross_check)

def cmd_flow(args, spec):
    index = MultiIndex.parse(args.index)
    end, plan = commutator_flow(spec, index, args.param, _vector(args, 'point', spec.m), args.step)
    return {'index': str(index), 'param': args.param, 'endpoint': end, 'plan': plan.to_dict()}

def _plan_dict(plan) -> dict:
    d = plan.to_dict()
    d['notes'] = {k: v for k, v in plan.notes.items()}
    return d

def cmd_steer(args, spec):
    plan = steer(spec, _vector(args, 'p', spec.m), _vector(args, 'q', spec.m), args.tol, args.maxiter, args.step)
    return _plan_dict(plan)

def cmd_dist(args, spec):
    p = _vector(args, 'p', spec.m)
    q = _vector(args, 'q', spec.m)
    result: Dict[str, Any] = {'p': p, 'q': q}
    upper, plan = dh_upper(spec, p, q, args.budget, args.restarts, args.step, seed=args.seed)
    result['upper_dh'] = upper
    result['upper'] = upper
    if spec.name == 'heisenberg-1':
        planned = heisenberg_plan(p, q, args.ngon)
        result['planner_length'] = planned.length
        result['upper'] = min(upper, planned.length)
        result['oracle_dc'] = heisenberg_dc(p, q)
    result['lower_dc'] = dc_lower(spec, p, q)
    result['plan'] = _plan_dict(plan)
    return result

def cmd_ballbox(args, spec):
    return ballbox_probe(spec, _vector(args, 'point', spec.m), args.eps, args.samples, args.step, args.seed)

def cmd_hess(args, spec):
    return horizontal_hessian(spec, _function(args), _vector(args, 'point', spec.m)).to_dict()

def cmd_grad(args, spec):
    p = _vector(args, 'point', spec.m)
    return {'point': p, 'gradient': horizontal_gradient(spec, _function(args), p)}

def cmd_sublap(args, spec):
    p = _vector(args, 'point', spec.m)
    return {'point': p, 'sublaplacian': sublaplacian(spec, _function(args), p)}

def cmd_convexity(args, spec):
    f = _function(args)
    a = nconvexity_by_hessian(spec, f, args.samples, args.tol, args.seed)
    b = nconvexity_by_geodesics(spec, f, args.geodesics, args.points, args.tol, args.seed, step=args.step)
    return {'hessian': a.to_dict(), 'geodesic': b.to_dict(), 'agree': a.verdict == b.verdict}

def cmd_lipschitz(args, spec):
    center = _vector(args, 'center', spec.m, required=False)
    center = spec.center() if center is None else center
    return lipschitz_estimate(spec, _function(args), (center, args.radius), args.pairs, args.seed,
                              args.budget, args.restarts, args.step).to_dict()

def cmd_lower_bound(args, spec):
    y0 = _vector(args, 'point', spec.m, required=False)
    y0 = spec.center() if y0 is None else y0
    return lower_bound_check(spec, _function(args), y0, args.radius, args.C, args.samples, args.seed,
                             args.step).to_dict()

def cmd_plan(args, spec):
    if not spec.name.startswith('heisenberg-'):
        raise UsageError('plan is defined on heisenberg-n models')
    return _plan_dict(heisenberg_plan(_vector(args, 'p', spec.m), _vector(args, 'q', spec.m), args.ngon))

def cmd_verify(args, spec):
    only = [s.strip() for s in args.only.split(',')] if args.only else None
    return run_suite(spec.name, args.seed, args.scale, args.step, spec=spec, only=only)

def cmd_export_model(args, spec):
    document = export_builtin(args.model, args.output)
    return json.loads(document)

def build_parser() -> argparse.ArgumentParser:
    common = _ArgumentParser(add_help=False)
    common.add_argument('--model', default='heisenberg-1', help='built-in model name or model file')
    common.add_argument('--seed', type=int, default=0)
    common.add_argument('--step', type=float, default=None, help='integration step (suite default for verify)')
    common.add_argument('--format', default='json', choices=['json', 'csv'])
    common.add_argument('--quiet-timestamps', action='store_true', help='omit the timestamp from the header')

    parser = _ArgumentParser(prog='subriemann', description='Sub-Riemannian geometry workbench')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    sub = parser.add_subparsers(dest='command', parser_class=_ArgumentParser)

    def command(name, handler, help):
        p = sub.add_parser(name, parents=[common], help=help)
        p.set_defaults(handler=handler)
        return p

    p = command('bracket', cmd_bracket, 'iterated bracket field E_I')
    p.add_argument('--index', required=True, help='multi-index, e.g. 1,2')
    _add_vector(p, 'point', 'evaluation point')

    p = command('growth', cmd_growth, 'growth vector at a point')
    _add_vector(p, 'point', 'point')

    p = command('christoffel', cmd_christoffel, 'connection coefficients at a point')
    _add_vector(p, 'point', 'point')

    for name, handler, help in (('geodesic', cmd_geodesic, 'nonholonomic geodesic'),
                                ('riemannian', cmd_riemannian, 'Riemannian geodesic of the extended metric'),
                                ('constraint-geodesic', cmd_constraint_geodesic,
                                 'nonholonomic geodesic from the constraint form')):
        p = command(name, handler, help)
        _add_vector(p, 'point', 'initial point')
        _add_vector(p, 'velocity', 'initial frame velocity')
        p.add_argument('--time', type=float, default=1.0)
        if name == 'constraint-geodesic':
            p.add_argument('--cross-check', type=float, default=1e-6,
                           help='largest allowed deviation from the frame integrator')

    p = command('exp', cmd_exp, 'horizontal exponential')
    _add_vector(p, 'point', 'base point')
    _add_vector(p, 'velocity', 'horizontal vector')

    p = command('flow', cmd_flow, 'commutator flow Psi_I(t)')
    p.add_argument('--index', required=True)
    p.add_argument('--param', type=float, required=True)
    _add_vector(p, 'point', 'start point')

    p = command('steer', cmd_steer, 'broken geodesic from p to q')
    _add_vector(p, 'p', 'start point')
    _add_vector(p, 'q', 'target point')
    p.add_argument('--tol', type=float, default=1e-6)
    p.add_argument('--maxiter', type=int, default=50)

    p = command('dist', cmd_dist, 'd_H upper bound, d_c lower bound and oracle when available')
    _add_vector(p, 'p', 'first point')
    _add_vector(p, 'q', 'second point')
    p.add_argument('--budget', type=int, default=6)
    p.add_argument('--restarts', type=int, default=3)
    p.add_argument('--ngon', type=int, default=16)

    p = command('ballbox', cmd_ballbox, 'empirical ball-box probe')
    _add_vector(p, 'point', 'base point')
    p.add_argument('--eps', type=float, required=True)
    p.add_argument('--samples', type=int, default=200)

    for name, handler, help in (('hess', cmd_hess, 'horizontal Hessian'),
                                ('grad', cmd_grad, 'horizontal gradient'),
                                ('sublap', cmd_sublap, 'sub-Laplacian')):
        p = command(name, handler, help)
        p.add_argument('--f', required=True, help='function expression')
        _add_vector(p, 'point', 'point')

    p = command('convexity', cmd_convexity, 'n-convexity by both routes')
    p.add_argument('--f', required=True)
    p.add_argument('--samples', type=int, default=200)
    p.add_argument('--geodesics', type=int, default=200)
    p.add_argument('--points', type=int, default=9)
    p.add_argument('--tol', type=float, default=None)

    p = command('lipschitz', cmd_lipschitz, 'empirical Lipschitz quotient')
    p.add_argument('--f', required=True)
    _add_vector(p, 'center', 'ball center')
    p.add_argument('--radius', type=float, default=0.3)
    p.add_argument('--pairs', type=int, default=200)
    p.add_argument('--budget', type=int, default=4)
    p.add_argument('--restarts', type=int, default=0)

    p = command('lower-bound', cmd_lower_bound, 'lower-bound inequality for n-convex functions')
    p.add_argument('--f', required=True)
    _add_vector(p, 'point', 'center y0')
    p.add_argument('--radius', type=float, default=0.2)
    p.add_argument('--C', type=float, default=None, help='upper bound of f (sampled when omitted)')
    p.add_argument('--samples', type=int, default=500)

    p = command('plan', cmd_plan, 'Heisenberg area-matching planner')
    _add_vector(p, 'p', 'start point')
    _add_vector(p, 'q', 'target point')
    p.add_argument('--ngon', type=int, default=16)

    p = command('verify', cmd_verify, 'run the invariant suite')
    p.add_argument('--scale', type=float, default=1.0, help='sample count multiplier')
    p.add_argument('--only', default=None, help='comma-separated criterion names')

    p = command('export-model', cmd_export_model, 'write a built-in model file')
    p.add_argument('--output', default=None, help='destination file (stdout document otherwise)')

    return parser

def _config(args) -> RunConfig:
    params = tuple(sorted((k, v) for k, v in vars(args).items() if k not in _COMMON))
    return RunConfig(args.command, args.model, args.seed, args.step, OutputFormat.from_string(args.format), params)

def _header(config: RunConfig, quiet: bool) -> dict:
    header = {'tool': 'subriemann', 'version': __version__, 'config': config.to_dict()}
    if not quiet:
        header['timestamp'] = datetime.now(timezone.utc).isoformat()
    return header

def _rows(value, prefix: str = '') -> List[Tuple[str, Any]]:
    if hasattr(value, 'to_dict'):
        value = value.to_dict()
    if isinstance(value, dict):
        out = []
        for k in sorted(value):
            out += _rows(value[k], f'{prefix}.{k}' if prefix else str(k))
        return out
    if isinstance(value, (list, tuple, np.ndarray)) and len(value) and not np.isscalar(value[0]):
        out = []
        for i, v in enumerate(value):
            out += _rows(v, f'{prefix}[{i}]')
        return out
    if isinstance(value, np.ndarray):
        value = value.tolist()
    return [(prefix, json.dumps(value, default=_jsonable))]

def render(result, config: RunConfig, quiet: bool) -> str:
    header = _header(config, quiet)
    if config.format == OutputFormat.CSV:
        lines = '# ' + json.dumps(header, sort_keys=True, default=_jsonable) + '\n'
        if hasattr(result, 'to_csv'):
            return lines + result.to_csv()
        if hasattr(result, 'criteria'):
            buf = io.StringIO()
            writer = csv.writer(buf, lineterminator='\n')
            writer.writerow(['criterion', 'status'])
            for c in result.criteria:
                writer.writerow([c.name, c.status])
            return lines + buf.getvalue()
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator='\n')
        writer.writerow(['key', 'value'])
        writer.writerows(_rows(result))
        return lines + buf.getvalue()
    body = result.to_dict() if hasattr(result, 'to_dict') else result
    return json.dumps({'header': header, 'result': body}, sort_keys=True, indent=2, default=_jsonable) + '\n'

def _fail(code: int, error: Exception, config: Optional[RunConfig]) -> int:
    document = {'error': type(error).__name__, 'message': str(error)}
    if config is not None:
        document['config'] = config.to_dict()
    sys.stderr.write(json.dumps(document, sort_keys=True, default=_jsonable) + '\n')
    return code

def run(argv: Optional[Sequence[str]] = None, stdout=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    parser = build_parser()
    config = None
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError('a subcommand is required')
        if args.step is None:
            args.step = SUITE_STEP if args.command == 'verify' else DEFAULT_STEP
        if args.step <= 0.0:
            raise UsageError('--step must be positive')
        config = _config(args)
        spec = resolve_model(args.model)
        logger.debug(f"Running {args.command} on {spec.name}")
        result = args.handler(args, spec)
        stdout.write(render(result, config, args.quiet_timestamps))
        if hasattr(result, 'criteria'):
            sys.stderr.write(result.table() + '\n')
            if not result.passed:
                return ExitCode.VERIFY_FAILED
        return ExitCode.OK
    except (UsageError, UnknownModelError, ValueError) as e:
        return _fail(ExitCode.USAGE, e, config)
    except SubRiemannError as e:
        logger.error(f"Numerical failure: {e}")
        return _fail(ExitCode.NUMERICAL, e, config)

def main():
    sys.exit(run())
