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

import itertools
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .FieldExpr import Expr, compile_scalar
from .StructureSpec import StructureSpec
from .Connection import horizontal_hessian
from .Geodesics import nonholonomic_geodesic, geodesic_point
from .Geometry import growth_vector
from .Connectivity import dh_upper, random_broken_geodesic, segment_count
from .core.enums import Verdict
from .core.exceptions import ExprEvaluationError, SubRiemannError
from .core.rng import stream
from .core.log import get_logger

logger = get_logger("Convexity")

CONVEXITY_STEP = 1e-2
GEODESIC_REACH = 1.0
EIGEN_TOL = 1e-8
MIDPOINT_TOL = 1e-7
STEER_TOL = 1e-6

Scalar = Union[Expr, Callable[[np.ndarray], float]]

def _scalar(spec: StructureSpec, f: Scalar) -> Callable[[np.ndarray], float]:
    if isinstance(f, Expr):
        return compile_scalar(f, spec.coords)
    return lambda p: float(f(p))

@dataclass(frozen=True)
class Witness:
    """Reproduction data for a convexity violation.

    ``kind`` is ``direction`` (Hessian route: point and unit horizontal
    direction) or ``triple`` (geodesic route: start point, initial frame
    velocity, the three signed times and the integration step).
    """
    kind: str
    point: Tuple[float, ...]
    direction: Tuple[float, ...]
    times: Tuple[float, ...] = ()
    step: float = 0.0
    violation: float = 0.0

    def to_dict(self) -> dict:
        d = {'kind': self.kind, 'point': list(self.point), 'direction': list(self.direction),
             'violation': self.violation}
        if self.kind == 'triple':
            d['times'] = list(self.times)
            d['step'] = self.step
        return d

@dataclass(frozen=True)
class ConvexityVerdict:
    verdict: Verdict
    route: str
    extremum: float
    samples: int
    tol: float
    scale: float
    witness: Optional[Witness] = None
    checks: int = 0

    @property
    def convex(self) -> bool:
        return self.verdict == Verdict.CONVEX

    def to_dict(self) -> dict:
        return {
            'verdict': self.verdict.label,
            'route': self.route,
            'extremum': self.extremum,
            'extremum_meaning': 'min eigenvalue of Hess^H f' if self.route == 'hessian'
                                else 'min midpoint slack (f(t1)+f(t3))/2 - f(t2)',
            'samples': self.samples,
            'checks': self.checks,
            'tol': self.tol,
            'scale': self.scale,
            'witness': self.witness.to_dict() if self.witness else None,
        }

def nconvexity_by_hessian(spec: StructureSpec, f: Expr, samples: int = 200, tol: Optional[float] = None,
                          seed: int = 0) -> ConvexityVerdict:
    """Convex iff the horizontal Hessian is PSD at every sampled point."""
    value = _scalar(spec, f)
    worst = np.inf
    worst_point = None
    worst_dir = None
    scale = 0.0
    valid = 0
    for i in range(samples):
        p = spec.sample_point(stream(seed, i))
        try:
            scale = max(scale, abs(value(p)))
            H = horizontal_hessian(spec, f, p).matrix
        except ExprEvaluationError as e:
            logger.debug(f"Skipping sample {i}: {e}")
            continue
        valid += 1
        w, V = np.linalg.eigh(H)
        if w[0] < worst:
            worst, worst_point, worst_dir = float(w[0]), p, V[:, 0]
    tol = EIGEN_TOL * (1.0 + scale) if tol is None else tol
    if not valid:
        return ConvexityVerdict(Verdict.INCONCLUSIVE, 'hessian', float('nan'), samples, tol, scale)
    logger.debug(f"Hessian route on {spec.name}: min eigenvalue {worst:.3e} over {valid} points (tol {tol:.1e})")
    if worst >= -tol:
        return ConvexityVerdict(Verdict.CONVEX, 'hessian', worst, samples, tol, scale, checks=valid)
    if worst_dir[np.argmax(np.abs(worst_dir))] < 0:
        worst_dir = -worst_dir
    witness = Witness('direction', tuple(worst_point.tolist()), tuple(worst_dir.tolist()), violation=-worst)
    return ConvexityVerdict(Verdict.NOT_CONVEX, 'hessian', worst, samples, tol, scale, witness, valid)

def _two_sided(spec: StructureSpec, x0, v0, reach: float, step: float):
    """Geodesic through x0 sampled on a uniform signed-time grid, clipped to the domain."""
    fwd = nonholonomic_geodesic(spec, x0, v0, reach, step)
    bwd = nonholonomic_geodesic(spec, x0, -v0, reach, step)
    h = fwd.step
    times = np.concatenate((-bwd.t[:0:-1], fwd.t))
    points = np.concatenate((bwd.points[:0:-1], fwd.points))
    return times, points, h

def nconvexity_by_geodesics(spec: StructureSpec, f: Scalar, geodesics: int = 200, pts_per_geodesic: int = 9,
                            tol: Optional[float] = None, seed: int = 0, reach: float = GEODESIC_REACH,
                            step: float = CONVEXITY_STEP) -> ConvexityVerdict:
    """Midpoint convexity of f along sampled nonholonomic geodesics.

    Every triple t1 < t2 < t3 with t2 = (t1 + t3)/2 on each sampled grid is
    tested: f(g(t2)) <= (f(g(t1)) + f(g(t3)))/2 + tol.
    """
    if pts_per_geodesic < 3:
        logger.error(f"pts_per_geodesic={pts_per_geodesic} leaves no midpoint triple")
        raise ValueError("at least 3 points per geodesic are required")
    value = _scalar(spec, f)
    worst = np.inf
    witness_data = None
    scale = 0.0
    checks = 0
    records = []
    for i in range(geodesics):
        rng = stream(seed, i)
        x0 = spec.sample_point(rng, shrink=0.5)
        v0 = rng.normal(size=spec.k)
        v0 /= np.linalg.norm(v0)
        times, points, h = _two_sided(spec, x0, v0, reach, step)
        if len(times) < 3:
            continue
        stride = max(1, (len(times) - 1) // (pts_per_geodesic - 1))
        idx = np.arange(0, len(times), stride)[:pts_per_geodesic]
        try:
            vals = np.array([value(points[j]) for j in idx])
        except ExprEvaluationError as e:
            logger.debug(f"Skipping geodesic {i}: {e}")
            continue
        scale = max(scale, float(np.max(np.abs(vals))))
        records.append((x0, v0, times[idx], vals, h))
    tol = MIDPOINT_TOL * (1.0 + scale) if tol is None else tol
    for x0, v0, t, vals, h in records:
        for a, c in itertools.combinations(range(len(t)), 2):
            if (c - a) % 2:
                continue
            b = (a + c) // 2
            slack = 0.5 * (vals[a] + vals[c]) - vals[b]
            checks += 1
            if slack < worst:
                worst = float(slack)
                witness_data = (x0, v0, (float(t[a]), float(t[b]), float(t[c])), h)
    if not checks:
        return ConvexityVerdict(Verdict.INCONCLUSIVE, 'geodesic', float('nan'), geodesics, tol, scale)
    logger.debug(f"Geodesic route on {spec.name}: min slack {worst:.3e} over {checks} triples (tol {tol:.1e})")
    if worst >= -tol:
        return ConvexityVerdict(Verdict.CONVEX, 'geodesic', worst, geodesics, tol, scale, checks=checks)
    x0, v0, times, h = witness_data
    witness = Witness('triple', tuple(x0.tolist()), tuple(v0.tolist()), times, h, -worst)
    return ConvexityVerdict(Verdict.NOT_CONVEX, 'geodesic', worst, geodesics, tol, scale, witness, checks)

def reproduce_witness(spec: StructureSpec, f: Scalar, verdict: ConvexityVerdict) -> float:
    """Recompute the violation a stored witness records (positive means violated)."""
    w = verdict.witness
    if w is None:
        return 0.0
    if w.kind == 'direction':
        H = horizontal_hessian(spec, f, np.array(w.point)).matrix
        d = np.array(w.direction)
        return float(-(d @ H @ d))
    value = _scalar(spec, f)
    vals = [value(geodesic_point(spec, w.point, w.direction, t, w.step)) for t in w.times]
    return float(vals[1] - 0.5 * (vals[0] + vals[2]))

@dataclass
class LowerBoundReport:
    N: int
    C: float
    f_center: float
    samples: int
    violations: int = 0
    min_margin: float = float('inf')
    chain_checks: int = 0
    chain_violations: int = 0
    rows: List[Tuple[int, float, float, bool]] = field(default_factory=list)

    @property
    def bound(self) -> float:
        return 2.0 ** self.N * self.f_center - (2.0 ** self.N - 1.0) * self.C

    def to_dict(self) -> dict:
        return {
            'N': self.N,
            'C': self.C,
            'f_center': self.f_center,
            'bound': self.bound,
            'samples': self.samples,
            'violations': self.violations,
            'min_margin': self.min_margin if np.isfinite(self.min_margin) else None,
            'chain_checks': self.chain_checks,
            'chain_violations': self.chain_violations,
        }

def lower_bound_check(spec: StructureSpec, f: Scalar, y0, radius: float = 0.2, C: Optional[float] = None,
                      samples: int = 500, seed: int = 0, step: float = CONVEXITY_STEP,
                      segments: int = 2) -> LowerBoundReport:
    """Check f(p) >= 2^N f(y0) - (2^N - 1) C at points p with d_H(y0, p) <= radius.

    Samples are endpoints of random broken geodesics of length <= radius. Along
    each, every break q_i is the midpoint of the geodesic piece from
    q~_i = g_i(-l_i) to q_{i+1} = g_i(l_i), and 2 f(q_i) <= f(q_{i+1}) + f(q~_i)
    is checked as well.
    """
    y0 = np.asarray(y0, dtype=float)
    value = _scalar(spec, f)
    formula_N, _ = segment_count(growth_vector(spec, y0))
    plans = []
    for i in range(samples):
        rng = stream(seed, i)
        plans.append(random_broken_geodesic(spec, y0, radius * rng.uniform(0.0, 1.0), segments, rng, step))
    f0 = value(y0)
    if C is None:
        C = max([f0] + [value(pl.endpoint) for pl in plans])
    report = LowerBoundReport(formula_N, float(C), float(f0), samples)
    bound = report.bound
    slack = 1e-12 * (1.0 + abs(bound))
    for i, plan in enumerate(plans):
        fp = value(plan.endpoint)
        margin = fp - bound
        violation = margin < -slack
        report.violations += int(violation)
        report.min_margin = min(report.min_margin, margin)
        report.rows.append((i, float(fp), float(margin), violation))
        for q_i, q_next, seg in zip(plan.breaks[:-1], plan.breaks[1:], plan.segments):
            back = geodesic_point(spec, q_i, np.asarray(seg.direction), -seg.length, step)
            report.chain_checks += 1
            chain_tol = MIDPOINT_TOL * (1.0 + abs(value(q_i)))
            if 2.0 * value(q_i) > value(q_next) + value(back) + chain_tol:
                report.chain_violations += 1
    logger.debug(f"Lower bound check: N={formula_N}, C={C:.4g}, {report.violations} violations, "
                 f"{report.chain_violations}/{report.chain_checks} chain violations")
    return report

@dataclass
class LipschitzEstimate:
    sup_quotient: float
    argmax: Optional[Tuple[Tuple[float, ...], Tuple[float, ...]]]
    pairs: int
    skipped: int = 0

    def to_dict(self) -> dict:
        return {
            'sup_quotient': self.sup_quotient,
            'quotient_meaning': '|f(p) - f(q)| / d_H upper bound',
            'argmax': None if self.argmax is None else [list(self.argmax[0]), list(self.argmax[1])],
            'pairs': self.pairs,
            'skipped': self.skipped,
        }

def _ball_point(spec: StructureSpec, center: np.ndarray, radius: float, rng) -> np.ndarray:
    d = rng.normal(size=spec.m)
    d *= radius * rng.uniform(0.0, 1.0) ** (1.0 / spec.m) / np.linalg.norm(d)
    return np.clip(center + d, spec.lower, spec.upper)

def lipschitz_estimate(spec: StructureSpec, f: Scalar, region: Tuple[Sequence[float], float], pairs: int = 200,
                       seed: int = 0, segments_budget: int = 4, restarts: int = 0,
                       step: float = CONVEXITY_STEP) -> LipschitzEstimate:
    """sup |f(p) - f(q)| / d^(p, q) over random pairs in a chart ball, d^ from dh_upper."""
    center, radius = np.asarray(region[0], dtype=float), float(region[1])
    value = _scalar(spec, f)
    best = 0.0
    argmax = None
    skipped = 0
    for i in range(pairs):
        rng = stream(seed, i)
        p = _ball_point(spec, center, radius, rng)
        q = _ball_point(spec, center, radius, rng)
        try:
            length, plan = dh_upper(spec, p, q, segments_budget=segments_budget, restarts=restarts,
                                    step=step, seed=seed)
        except SubRiemannError as e:
            logger.debug(f"Pair {i} skipped: {e}")
            skipped += 1
            continue
        if plan.truncated or np.linalg.norm(plan.endpoint - q) > STEER_TOL:
            skipped += 1
            continue
        if length <= 0.0:
            continue
        quotient = abs(value(p) - value(q)) / length
        if quotient > best:
            best, argmax = quotient, (tuple(p.tolist()), tuple(q.tolist()))
    logger.debug(f"Lipschitz estimate on {spec.name}: {best:.6f} ({skipped} pairs skipped)")
    return LipschitzEstimate(best, argmax, pairs, skipped)
