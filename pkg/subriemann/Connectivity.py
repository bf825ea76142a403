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
import itertools
import json
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .Geometry import GrowthVector, growth_vector, numeric_rank, project_horizontal, BRACKET_DEPTH_CAP
from .Geodesics import nonholonomic_geodesic, DEFAULT_STEP
from .StructureSpec import StructureSpec, RANK_TOL, box_points
from .core.exceptions import RankDeficitError
from .core.rng import stream
from .core.log import get_logger

logger = get_logger("Connectivity")

NEWTON_FD_STEP = 1e-5
NEWTON_HALVINGS = 8
CHAIN_DEPTH = 4
PENALTY_SCHEDULE = (1e2, 1e4, 1e6)
INFEASIBLE = 1e12
NM_ITERATIONS = 60
DC_GRID_AXIS = 9
ARC_GRID = 39
ARC_TURN_LIMIT = 1.9 * np.pi

@dataclass(frozen=True)
class MultiIndex:
    entries: Tuple[int, ...]

    def __post_init__(self):
        if len(self.entries) < 1:
            raise ValueError('a multi-index needs at least one entry')
        if any(i < 1 for i in self.entries):
            raise ValueError('multi-index entries are 1-based')

    @property
    def weight(self) -> int:
        return len(self.entries)

    def swapped(self) -> "MultiIndex":
        if len(self.entries) < 2:
            return self
        e = self.entries
        return MultiIndex((e[1], e[0]) + e[2:])

    def __str__(self):
        return '(' + ','.join(str(i) for i in self.entries) + ')'

    @classmethod
    def parse(cls, text: str) -> "MultiIndex":
        return cls(tuple(int(x) for x in text.strip().strip('()').split(',') if x.strip()))

@dataclass(frozen=True)
class Segment:
    direction: Tuple[float, ...]
    length: float

    def to_dict(self) -> dict:
        return {'dir': list(self.direction), 'len': self.length}

@dataclass
class BrokenGeodesic:
    """Concatenation of unit-speed nonholonomic geodesic segments."""
    start: np.ndarray
    segments: List[Segment]
    endpoint: np.ndarray
    breaks: List[np.ndarray] = field(default_factory=list)
    truncated: bool = False
    notes: Dict[str, object] = field(default_factory=dict)

    @property
    def length(self) -> float:
        return float(sum(s.length for s in self.segments))

    def __len__(self):
        return len(self.segments)

    @classmethod
    def empty(cls, start) -> "BrokenGeodesic":
        start = np.asarray(start, dtype=float)
        return cls(start.copy(), [], start.copy(), [start.copy()])

    @classmethod
    def build(cls, spec: StructureSpec, start, segments: Sequence[Segment], step: float = DEFAULT_STEP) -> "BrokenGeodesic":
        x = np.asarray(start, dtype=float).copy()
        breaks = [x.copy()]
        kept = []
        truncated = False
        for seg in segments:
            if seg.length <= 0.0:
                continue
            curve = nonholonomic_geodesic(spec, x, np.asarray(seg.direction), seg.length, step)
            kept.append(seg)
            x = curve.endpoint.copy()
            breaks.append(x.copy())
            if curve.truncated:
                truncated = True
                break
        return cls(np.asarray(start, dtype=float).copy(), kept, x, breaks, truncated)

    def then(self, other: "BrokenGeodesic") -> "BrokenGeodesic":
        return BrokenGeodesic(self.start.copy(), self.segments + other.segments, other.endpoint.copy(),
                              self.breaks + other.breaks[1:], self.truncated or other.truncated,
                              dict(self.notes))

    def compressed(self, atol: float = 1e-12) -> List[Segment]:
        out: List[Segment] = []
        for seg in self.segments:
            if seg.length <= atol:
                continue
            if out and np.allclose(out[-1].direction, seg.direction, atol=atol):
                out[-1] = Segment(out[-1].direction, out[-1].length + seg.length)
            else:
                out.append(seg)
        return out

    def curves(self, spec: StructureSpec, step: float = DEFAULT_STEP):
        x = self.start
        out = []
        for seg in self.segments:
            c = nonholonomic_geodesic(spec, x, np.asarray(seg.direction), seg.length, step)
            out.append(c)
            x = c.endpoint
        return out

    def to_dict(self) -> dict:
        return {
            'start': self.start.tolist(),
            'segments': [s.to_dict() for s in self.segments],
            'endpoint': self.endpoint.tolist(),
            'length': self.length,
            'truncated': self.truncated,
        }

    def to_json(self) -> str:
        return json.dumps({'start': self.start.tolist(), 'segments': [s.to_dict() for s in self.segments]})

    @classmethod
    def from_json(cls, spec: StructureSpec, document: str, step: float = DEFAULT_STEP) -> "BrokenGeodesic":
        data = json.loads(document)
        segments = [Segment(tuple(float(x) for x in s['dir']), float(s['len'])) for s in data['segments']]
        return cls.build(spec, data['start'], segments, step)

@dataclass(frozen=True)
class AdaptedFrame:
    indices: Tuple[MultiIndex, ...]
    base: Tuple[float, ...]
    layers: Tuple[int, ...]

    @property
    def weights(self) -> Tuple[int, ...]:
        return tuple(I.weight for I in self.indices)

    def to_dict(self) -> dict:
        return {
            'indices': [str(I) for I in self.indices],
            'weights': list(self.weights),
            'base': list(self.base),
            'layers': list(self.layers),
        }

def _unit(k: int, i: int, sign: int) -> Tuple[float, ...]:
    v = [0.0] * k
    v[i - 1] = float(sign)
    return tuple(v)

def _flow_legs(entries: Tuple[int, ...]) -> List[Tuple[int, int]]:
    # Psi_I(t) = Psi_J(-t) o Psi_i(-t) o Psi_J(t) o Psi_i(t), rightmost first
    if len(entries) == 1:
        return [(entries[0], 1)]
    inner = _flow_legs(entries[1:])
    return [(entries[0], 1)] + inner + [(entries[0], -1)] + _inverse_legs(inner)

def _inverse_legs(legs: List[Tuple[int, int]]) -> List[Tuple[int, int]]:
    return [(i, -s) for i, s in reversed(legs)]

def commutator_segments(k: int, I: MultiIndex, t: float) -> List[Segment]:
    """Legs of the commutator flow; t < 0 runs the inverse flow of Psi_I(|t|)."""
    if t == 0.0:
        return []
    legs = _flow_legs(I.entries)
    if t < 0:
        legs = _inverse_legs(legs)
    return [Segment(_unit(k, i, s), abs(t)) for i, s in legs]

def leg_count(weight: int) -> int:
    return 1 if weight == 1 else 2 * leg_count(weight - 1) + 2

def commutator_flow(spec: StructureSpec, I: MultiIndex, t: float, start, step: float = DEFAULT_STEP):
    if isinstance(I, (tuple, list)):
        I = MultiIndex(tuple(I))
    plan = BrokenGeodesic.build(spec, start, commutator_segments(spec.k, I, t), step)
    return plan.endpoint, plan

def commutator_remainder(spec: StructureSpec, I: MultiIndex, t: float, start, step: float = DEFAULT_STEP) -> float:
    """|Psi_I(t)(p) - p - t^r E_I(p)| for t > 0."""
    start = np.asarray(start, dtype=float)
    end, _ = commutator_flow(spec, I, t, start, step)
    E = spec.frame.bracket_field(I.entries).evaluate(start)
    return float(np.linalg.norm(end - start - t ** I.weight * E))

def adapted_frame(spec: StructureSpec, y, tol: float = RANK_TOL) -> AdaptedFrame:
    frame = spec.frame
    cap = min(spec.m, BRACKET_DEPTH_CAP)
    kept: List[MultiIndex] = []
    vectors: List[np.ndarray] = []
    layers: List[int] = []
    rank = 0
    for r in range(1, cap + 1):
        for entries in itertools.product(range(1, spec.k + 1), repeat=r):
            field_ = frame.bracket_field(entries)
            if field_.is_zero:
                continue
            v = field_.evaluate(y)
            new_rank = numeric_rank(vectors + [v], tol)
            if new_rank > rank:
                kept.append(MultiIndex(entries))
                vectors.append(v)
                rank = new_rank
                if rank == spec.m:
                    break
        layers.append(rank)
        if rank == spec.m:
            return AdaptedFrame(tuple(kept), tuple(float(x) for x in y), tuple(layers))
    logger.error(f"Rank {rank} < {spec.m} at bracket depth {cap}")
    raise RankDeficitError(f'brackets up to length {cap} span only rank {rank} at {list(y)}')

def scale_params(params, weights) -> np.ndarray:
    t = np.asarray(params, dtype=float)
    w = np.asarray(weights, dtype=float)
    return np.sign(t) * np.abs(t) ** w

def unscale_params(scaled, weights) -> np.ndarray:
    s = np.asarray(scaled, dtype=float)
    w = np.asarray(weights, dtype=float)
    return np.sign(s) * np.abs(s) ** (1.0 / w)

def F_segments(spec: StructureSpec, frame: AdaptedFrame, params) -> List[Segment]:
    segments: List[Segment] = []
    for I, t in zip(frame.indices, params):
        segments += commutator_segments(spec.k, I, float(t))
    return segments

def F_map(spec: StructureSpec, y, params, step: float = DEFAULT_STEP, frame: Optional[AdaptedFrame] = None):
    """F^y(t_1..t_m) = Psi_m(t_m) o ... o Psi_1(t_1)(y)."""
    if frame is None:
        frame = adapted_frame(spec, y)
    plan = BrokenGeodesic.build(spec, y, F_segments(spec, frame, params), step)
    return plan.endpoint, plan

def segment_count(gv: GrowthVector) -> Tuple[int, int]:
    formula_N = 0
    actual_N = 0
    prev = 0
    for r, n in enumerate(gv.dims, start=1):
        formula_N += (n - prev) * (3 * 2 ** (r - 1) - 1)
        actual_N += (n - prev) * leg_count(r)
        prev = n
    return formula_N, actual_N

class _Newton(NamedTuple):
    scaled: np.ndarray
    endpoint: np.ndarray
    residual: float
    iterations: int

def _invert_F(spec: StructureSpec, y, target, frame: AdaptedFrame, tol: float, maxiter: int, step: float) -> _Newton:
    w = frame.weights
    target = np.asarray(target, dtype=float)

    def F(s):
        plan = BrokenGeodesic.build(spec, y, F_segments(spec, frame, unscale_params(s, w)), step)
        return None if plan.truncated else plan.endpoint

    s = np.zeros(spec.m)
    x = F(s)
    res = float(np.linalg.norm(target - x))
    it = 0
    while it < maxiter and res > tol:
        it += 1
        J = np.empty((spec.m, spec.m))
        for i in range(spec.m):
            e = np.zeros(spec.m)
            e[i] = NEWTON_FD_STEP
            fp, fm = F(s + e), F(s - e)
            if fp is None or fm is None:
                logger.debug("Jacobian stencil left the domain")
                return _Newton(s, x, res, it)
            J[:, i] = (fp - fm) / (2.0 * NEWTON_FD_STEP)
        delta = np.linalg.lstsq(J, target - x, rcond=None)[0]
        lam = 1.0
        accepted = False
        for _ in range(NEWTON_HALVINGS + 1):
            x_try = F(s + lam * delta)
            if x_try is not None:
                res_try = float(np.linalg.norm(target - x_try))
                if res_try < res:
                    s, x, res = s + lam * delta, x_try, res_try
                    accepted = True
                    break
            lam *= 0.5
        logger.trace(f"Newton iteration {it}: residual {res:.3e} (damping {lam})")
        if not accepted:
            break
    return _Newton(s, x, res, it)

def _steer(spec, p, q, tol, maxiter, step, depth) -> BrokenGeodesic:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.array_equal(p, q) or maxiter <= 0:
        plan = BrokenGeodesic.empty(p)
        residual = float(np.linalg.norm(q - p))
        plan.notes.update(residual=residual, converged=residual <= tol, iterations=0, pieces=0)
        return plan
    frame = adapted_frame(spec, p)
    sol = _invert_F(spec, p, q, frame, tol, maxiter, step)
    params = unscale_params(sol.scaled, frame.weights)
    plan = BrokenGeodesic.build(spec, p, F_segments(spec, frame, params), step)
    plan.notes.update(residual=sol.residual, converged=sol.residual <= tol, iterations=sol.iterations,
                      pieces=1, params=params.tolist())
    left = maxiter - sol.iterations
    if sol.residual <= tol or depth >= CHAIN_DEPTH or left <= 0:
        return plan
    # chain two local inversions through the chart midpoint, sharing the iteration allowance
    logger.debug(f"Direct inversion stalled at residual {sol.residual:.3e}; chaining (depth {depth + 1})")
    first = _steer(spec, p, 0.5 * (p + q), tol, left, step, depth + 1)
    second = _steer(spec, first.endpoint, q, tol, left - first.notes['iterations'], step, depth + 1)
    chained = first.then(second)
    chained.notes.update(residual=second.notes['residual'], converged=second.notes['residual'] <= tol,
                         iterations=sol.iterations + first.notes['iterations'] + second.notes['iterations'],
                         pieces=first.notes['pieces'] + second.notes['pieces'])
    if chained.notes['residual'] < plan.notes['residual']:
        return chained
    return plan

def steer(spec: StructureSpec, p, q, tol: float = 1e-6, maxiter: int = 50, step: float = DEFAULT_STEP) -> BrokenGeodesic:
    """Broken geodesic from p ending within ``tol`` of q (damped Newton on F^p).

    ``maxiter`` bounds the Newton iterations of the whole plan, chained pieces included.
    """
    logger.debug(f"Steering on {spec.name} from {np.asarray(p).tolist()} to {np.asarray(q).tolist()}")
    plan = _steer(spec, p, q, tol, maxiter, step, 0)
    if not plan.notes['converged']:
        logger.warning(f"Steering did not converge: residual {plan.notes['residual']:.3e}")
    return plan

def _directions_from_angles(angles: np.ndarray, k: int) -> np.ndarray:
    d = np.ones(k)
    for i in range(k - 1):
        d[i] *= np.cos(angles[i])
        d[i + 1:] *= np.sin(angles[i])
    return d

def _angles_from_direction(v: np.ndarray) -> np.ndarray:
    k = len(v)
    angles = np.zeros(k - 1)
    for i in range(k - 2):
        angles[i] = np.arctan2(np.linalg.norm(v[i + 1:]), v[i])
    if k >= 2:
        angles[k - 2] = np.arctan2(v[k - 1], v[k - 2])
    return angles

class _PlanCodec:
    """Flat parameter vector <-> segment list (k-1 angles and one length per segment)."""

    def __init__(self, k: int, budget: int):
        self.k = k
        self.budget = budget
        self.width = k

    def encode(self, segments: Sequence[Segment]) -> np.ndarray:
        x = np.zeros(self.budget * self.width)
        for n in range(self.budget):
            if n < len(segments):
                d = np.asarray(segments[n].direction, dtype=float)
                length = segments[n].length
            else:
                d = np.eye(self.k)[0]
                length = 0.0
            x[n * self.width:n * self.width + self.k - 1] = _angles_from_direction(d)
            x[n * self.width + self.k - 1] = length
        return x

    def decode(self, x: np.ndarray) -> List[Segment]:
        out = []
        for n in range(self.budget):
            chunk = x[n * self.width:(n + 1) * self.width]
            d = _directions_from_angles(chunk[:self.k - 1], self.k)
            out.append(Segment(tuple(float(c) for c in d), float(abs(chunk[self.k - 1]))))
        return out

def _turning_polygon(k: int, theta0: float, turn: float, total: float, budget: int) -> List[Segment]:
    """``budget`` equal segments in the plane of the first two horizontal directions,
    turning by ``turn`` in total, symmetric about heading ``theta0``."""
    segments = []
    for n in range(budget):
        d = np.zeros(k)
        a = theta0 + (n - 0.5 * (budget - 1)) * turn / budget
        d[0], d[1] = np.cos(a), np.sin(a)
        segments.append(Segment(tuple(d), total / budget))
    return segments

def _fitted_polygon(spec: StructureSpec, p, q, budget: int, chord: float, theta0: float, scale: float,
                    step: float) -> List[Segment]:
    """Turning polygon whose endpoint best matches q, over a one-parameter family.

    With a horizontal chord the total turn varies and the length keeps the
    chord; without one the polygon is closed and its signed length varies.
    """
    q = np.asarray(q, dtype=float)

    def miss(turn, total):
        plan = BrokenGeodesic.build(spec, p, _turning_polygon(spec.k, theta0, turn, total, budget), step)
        return INFEASIBLE if plan.truncated else float(np.linalg.norm(plan.endpoint - q))

    if chord > 1e-9:
        def shape(turn):
            if abs(turn) < 1e-12:
                return turn, chord
            return turn, chord * budget * np.sin(turn / (2 * budget)) / np.sin(turn / 2)
        grid = np.linspace(-ARC_TURN_LIMIT, ARC_TURN_LIMIT, ARC_GRID)
    else:
        def shape(s):
            return float(np.copysign(2 * np.pi, s)), abs(s)
        grid = np.linspace(-scale, scale, ARC_GRID)

    def cost(x):
        return miss(*shape(x))

    values = [cost(x) for x in grid]
    i = int(np.argmin(values))
    best = grid[i]
    result = minimize_scalar(cost, bounds=(grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]),
                             method='bounded', options={'xatol': 1e-10})
    if result.fun < values[i]:
        best = float(result.x)
    logger.trace(f"Fitted polygon of {budget} segments: parameter {best:.6f}, miss {min(result.fun, values[i]):.3e}")
    return _turning_polygon(spec.k, theta0, *shape(best), budget)

def _seed_plans(spec: StructureSpec, p, q, budget: int, steer_plan: BrokenGeodesic,
                step: float) -> List[List[Segment]]:
    seeds: List[List[Segment]] = []
    compressed = steer_plan.compressed()
    if 0 < len(compressed) <= budget:
        seeds.append(compressed)
    proj = project_horizontal(spec, p, np.asarray(q) - np.asarray(p))
    norm = float(np.linalg.norm(proj))
    if norm > 0.0:
        direct = proj / norm
        seeds.append([Segment(tuple(direct), norm)])
    else:
        direct = np.eye(spec.k)[0]
    if spec.k >= 2 and budget >= 3:
        theta0 = float(np.arctan2(direct[1], direct[0]))
        scale = max(steer_plan.length, 1e-3)
        seeds.append(_fitted_polygon(spec, p, q, budget, norm, theta0, scale, step))
        if norm > 1e-9:
            seeds.append(_fitted_polygon(spec, p, q, budget, 0.0, theta0, scale, step))
    return seeds

def _refine(spec: StructureSpec, p, q, budget: int, restarts: int, step: float, tol: float,
            steer_plan: BrokenGeodesic, seed: int,
            warm: Sequence[BrokenGeodesic] = ()) -> Optional[BrokenGeodesic]:
    q = np.asarray(q, dtype=float)
    codec = _PlanCodec(spec.k, budget)
    rng = stream(seed, budget)
    seeds = [w.compressed() for w in warm if 0 < len(w.compressed()) <= budget]
    seeds += _seed_plans(spec, p, q, budget, steer_plan, step)

    def endpoint(x):
        plan = BrokenGeodesic.build(spec, p, codec.decode(x), step)
        return None if plan.truncated else plan.endpoint

    def objective(x, weight):
        end = endpoint(x)
        if end is None:
            return INFEASIBLE
        return float(np.sum(np.abs(x[codec.k - 1::codec.width]))) + weight * float(np.sum((end - q) ** 2))

    # most promising start first
    seeds.sort(key=lambda s: objective(codec.encode(s), PENALTY_SCHEDULE[1]))

    def feasible(x, polish: bool) -> Optional[BrokenGeodesic]:
        plan = BrokenGeodesic.build(spec, p, [s for s in codec.decode(x) if s.length > 1e-12], step)
        if plan.truncated:
            return None
        if np.linalg.norm(plan.endpoint - q) <= tol:
            return plan
        if not polish:
            return None
        tail = steer(spec, plan.endpoint, q, tol=tol, step=step)
        return plan.then(tail) if tail.notes['residual'] <= tol else None

    best: Optional[BrokenGeodesic] = None
    best_x: Optional[np.ndarray] = None
    for attempt in range(restarts):
        if attempt < len(seeds):
            x = codec.encode(seeds[attempt])
        elif best_x is not None:
            x = best_x.copy()
            x[codec.k - 1::codec.width] *= rng.uniform(0.7, 1.3, size=budget)
            mask = np.ones_like(x, dtype=bool)
            mask[codec.k - 1::codec.width] = False
            x[mask] += rng.normal(0.0, 0.3, size=int(mask.sum()))
        else:
            x = codec.encode(seeds[0]) if seeds else rng.uniform(-1.0, 1.0, size=budget * codec.width)
        start = x.copy()
        for weight in PENALTY_SCHEDULE:
            result = minimize(objective, x, args=(weight,), method='Nelder-Mead',
                              options={'maxiter': NM_ITERATIONS * len(x), 'xatol': 1e-10, 'fatol': 1e-13, 'adaptive': True})
            x = result.x
            logger.trace(f"budget {budget} attempt {attempt} penalty {weight:.0e}: objective {result.fun:.6f}")
        # a start that already meets q competes with its refinement
        for candidate, cx in ((feasible(x, True), x), (feasible(start, False), start)):
            if candidate is not None and (best is None or candidate.length < best.length):
                best = candidate
                best_x = cx
    return best

class DistanceBound(NamedTuple):
    length: float
    plan: BrokenGeodesic

def dh_upper(spec: StructureSpec, p, q, segments_budget: int = 6, restarts: int = 3,
             step: float = DEFAULT_STEP, tol: float = 1e-6, seed: int = 0,
             warm: Sequence[BrokenGeodesic] = ()) -> DistanceBound:
    """Upper bound on the broken-geodesic distance d_H(p, q).

    The result for a budget B is the best over the halving ladder B, B/2, ...,
    so it never grows with the budget, and it never exceeds the steered plan.
    ``warm`` plans from p that end within ``tol`` of q count as candidates
    and seed the refinement.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    logger.debug(f"d_H upper bound on {spec.name}: {p.tolist()} -> {q.tolist()}, budget {segments_budget}")
    steer_plan = steer(spec, p, q, tol=tol, step=step)
    if np.array_equal(p, q):
        return DistanceBound(0.0, steer_plan)
    best = steer_plan
    best.notes['infeasible_budget'] = len(steer_plan.compressed()) > segments_budget
    best.notes['steer_length'] = steer_plan.length
    warm = [w for w in warm if np.allclose(w.start, p) and np.linalg.norm(w.endpoint - q) <= tol]
    for w in warm:
        if w.length < best.length:
            best = BrokenGeodesic(w.start, list(w.segments), w.endpoint, list(w.breaks), w.truncated,
                                  dict(best.notes, warm=True))
    if restarts > 0:
        budget = segments_budget
        while budget >= 1:
            candidate = _refine(spec, p, q, budget, restarts, step, tol, steer_plan, seed, warm)
            if candidate is not None and candidate.length < best.length:
                candidate.notes.update(infeasible_budget=best.notes['infeasible_budget'],
                                       steer_length=steer_plan.length, budget=budget,
                                       residual=float(np.linalg.norm(candidate.endpoint - q)))
                best = candidate
            budget //= 2
    logger.debug(f"d_H upper bound {best.length:.6f} (steer plan {steer_plan.length:.6f})")
    return DistanceBound(best.length, best)

def dc_lower(spec: StructureSpec, p, q) -> float:
    """|p - q| / sigma_max, sigma_max bounding the chart speed of unit horizontal velocities."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    d = float(np.linalg.norm(p - q))
    if d == 0.0:
        return 0.0
    lo = np.minimum(p, q) - d
    hi = np.maximum(p, q) + d
    points = box_points(lo, hi, DC_GRID_AXIS, DC_GRID_AXIS ** 4)
    frame = spec.frame
    blocks = np.array([frame.matrix(x)[:, :spec.k] for x in points])
    sigma = float(np.max(np.linalg.svd(blocks, compute_uv=False)))
    return d / sigma

def random_broken_geodesic(spec: StructureSpec, y, total_length: float, segments: int, rng,
                           step: float = DEFAULT_STEP) -> BrokenGeodesic:
    cuts = np.sort(rng.uniform(0.0, 1.0, size=segments - 1))
    fractions = np.diff(np.concatenate(([0.0], cuts, [1.0])))
    segs = []
    for frac in fractions:
        d = rng.normal(size=spec.k)
        d /= np.linalg.norm(d)
        segs.append(Segment(tuple(float(c) for c in d), float(frac * total_length)))
    return BrokenGeodesic.build(spec, y, segs, step)

@dataclass
class BallBoxReport:
    point: Tuple[float, ...]
    eps: float
    formula_N: int
    actual_N: int
    samples: int
    inclusion_violations: int = 0
    reach_samples: int = 0
    reach_violations: int = 0
    outer_constant: float = 0.0
    inner_constant: float = float('inf')
    c_hat: float = 0.0
    rows: List[Tuple[str, int, float, float, bool]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            'point': list(self.point),
            'eps': self.eps,
            'formula_N': self.formula_N,
            'actual_N': self.actual_N,
            'samples': self.samples,
            'inclusion_violations': self.inclusion_violations,
            'reach_samples': self.reach_samples,
            'reach_violations': self.reach_violations,
            'outer_constant': self.outer_constant,
            'inner_constant': None if not np.isfinite(self.inner_constant) else self.inner_constant,
            'c_hat': self.c_hat,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator='\n')
        writer.writerow(['check', 'sample', 'dhat', 'max_param', 'violation'])
        for row in self.rows:
            writer.writerow([row[0], row[1], repr(row[2]), repr(row[3]), int(row[4])])
        return buf.getvalue()

def ballbox_probe(spec: StructureSpec, y, eps: float, samples: int = 200, step: float = DEFAULT_STEP,
                  seed: int = 0, c_hat: Optional[float] = None, reach_samples: Optional[int] = None,
                  eps0: float = 1.0) -> BallBoxReport:
    """Empirical ball-box check at y.

    (a) F^y maps the cube |t_i| <= eps/N into the d_H-ball of radius eps;
    (b) points within c_hat*eps of y are reached with parameters in that cube.
    """
    y = np.asarray(y, dtype=float)
    if eps <= 0.0 or samples <= 0:
        return BallBoxReport(tuple(y.tolist()), eps, 0, 0, 0)
    if eps > eps0:
        logger.warning(f"eps={eps} above eps0={eps0}; the probe is outside its validity range")
    frame = adapted_frame(spec, y)
    gv = growth_vector(spec, y)
    formula_N, actual_N = segment_count(gv)
    N = formula_N
    radius = eps / N
    report = BallBoxReport(tuple(y.tolist()), eps, formula_N, actual_N, samples)
    logger.debug(f"Ball-box probe at {y.tolist()}: eps={eps}, N={N}")

    for i in range(samples):
        rng = stream(seed, i)
        t = rng.uniform(-radius, radius, size=spec.m)
        end, plan = F_map(spec, y, t, step, frame)
        dhat = plan.length
        if dhat > eps + 1e-12:
            dhat = min(dhat, dh_upper(spec, y, end, segments_budget=4, restarts=1, step=step, seed=seed).length)
        violation = bool(plan.truncated or dhat > eps + 1e-12)
        report.inclusion_violations += int(violation)
        tmax = float(np.max(np.abs(t)))
        if tmax > 0.0:
            report.outer_constant = max(report.outer_constant, dhat / tmax)
        report.rows.append(('inclusion', i, float(dhat), tmax, violation))

    c_hat = 1.0 / N if c_hat is None else c_hat
    report.c_hat = c_hat
    n_reach = max(1, samples // 4) if reach_samples is None else reach_samples
    report.reach_samples = n_reach
    for i in range(n_reach):
        rng = stream(seed, samples + i)
        target_plan = random_broken_geodesic(spec, y, c_hat * eps * rng.uniform(0.05, 1.0), 2, rng, step)
        dhat = target_plan.length
        sol = _invert_F(spec, y, target_plan.endpoint, frame, 1e-9, 50, step)
        t = unscale_params(sol.scaled, frame.weights)
        tmax = float(np.max(np.abs(t)))
        violation = bool(sol.residual > 1e-6 or tmax > radius)
        report.reach_violations += int(violation)
        if tmax > 0.0:
            report.inner_constant = min(report.inner_constant, dhat / (N * tmax))
        report.rows.append(('reach', i, float(dhat), tmax, violation))
    logger.debug(f"Ball-box probe: {report.inclusion_violations} inclusion and {report.reach_violations} reach violations")
    return report
