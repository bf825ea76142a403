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

import os
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.optimize import brentq

from .StructureSpec import StructureSpec, parse_model, load_model
from .Connectivity import BrokenGeodesic, Segment
from .core.exceptions import (
    UnknownModelError, NotCarnotError, ToleranceNotReachedError, DimensionMismatchError, DegenerateSamplingError,
)
from .core.log import get_logger

logger = get_logger("Models")

DOMAIN_HALF_WIDTH = 2.0
AREA_TOL = 1e-15

BUILTIN_NAMES = ('heisenberg-1', 'heisenberg-2', 'engel', 'perturbed-heisenberg')

_HEISENBERG = re.compile(r'heisenberg-([1-9][0-9]*)$')

def _box(m: int) -> List[List[float]]:
    return [[-DOMAIN_HALF_WIDTH, DOMAIN_HALF_WIDTH] for _ in range(m)]

def _heisenberg_document(n: int) -> dict:
    if n == 1:
        xs, ys = ['x'], ['y']
    else:
        xs = [f'x{j}' for j in range(1, n + 1)]
        ys = [f'y{j}' for j in range(1, n + 1)]
    coords = xs + ys + ['t']
    m = 2 * n + 1
    horizontal = []
    for j in range(n):
        X = ['0'] * m
        X[j] = '1'
        X[-1] = f'0.5*{ys[j]}'
        horizontal.append(X)
    for j in range(n):
        Y = ['0'] * m
        Y[n + j] = '1'
        Y[-1] = f'-0.5*{xs[j]}'
        horizontal.append(Y)
    T = ['0'] * m
    T[-1] = '1'
    return {
        'name': f'heisenberg-{n}',
        'coords': coords,
        'horizontal': horizontal,
        'vertical': [T],
        'domain': _box(m),
        'weights': [1] * (2 * n) + [2],
    }

def _engel_document() -> dict:
    return {
        'name': 'engel',
        'coords': ['x1', 'x2', 'x3', 'x4'],
        'horizontal': [
            ['1', '0', '0', '0'],
            ['0', '1', 'x1', '0.5*x1^2'],
        ],
        'vertical': [
            ['0', '0', '1', 'x1'],
            ['0', '0', '0', '1'],
        ],
        'domain': _box(4),
        'weights': [1, 1, 2, 3],
    }

def _perturbed_heisenberg_document() -> dict:
    # E_1 = e^{y/4} X_1 declared orthonormal: not left-invariant, nonzero horizontal connection
    return {
        'name': 'perturbed-heisenberg',
        'coords': ['x', 'y', 't'],
        'horizontal': [
            ['exp(y/4)', '0', '0.5*y*exp(y/4)'],
            ['0', '1', '-0.5*x'],
        ],
        'vertical': [
            ['0', '0', '1'],
        ],
        'domain': _box(3),
    }

def builtin_document(name: str) -> dict:
    match = _HEISENBERG.match(name)
    if match:
        return _heisenberg_document(int(match.group(1)))
    if name == 'engel':
        return _engel_document()
    if name == 'perturbed-heisenberg':
        return _perturbed_heisenberg_document()
    logger.error(f"Unknown built-in model {name!r}")
    raise UnknownModelError(name)

@lru_cache(maxsize=None)
def builtin(name: str) -> StructureSpec:
    return parse_model(builtin_document(name))

def is_builtin(name: str) -> bool:
    return bool(_HEISENBERG.match(name)) or name in BUILTIN_NAMES

def resolve_model(name_or_path: str) -> StructureSpec:
    """Built-in by name, otherwise a model file path."""
    if is_builtin(name_or_path):
        return builtin(name_or_path)
    if os.path.isfile(name_or_path):
        return load_model(name_or_path)
    logger.error(f"{name_or_path!r} is neither a built-in model nor a model file")
    raise UnknownModelError(name_or_path)

def export_builtin(name: str, path: Optional[str] = None) -> str:
    document = builtin(name).serialize()
    if path is not None:
        with open(path, 'wt', encoding='utf-8') as f:
            f.write(document + '\n')
    return document

@dataclass(frozen=True)
class PlanarPolyline:
    """Vertices in the projection coordinates (x_1..x_n, y_1..y_n)."""
    vertices: np.ndarray

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        if len(v) < 2:
            raise DegenerateSamplingError('a polyline needs at least two vertices')
        if v.shape[1] % 2:
            raise DimensionMismatchError('polyline vertices need an even number of coordinates')
        if np.any(np.all(np.diff(v, axis=0) == 0.0, axis=1)):
            raise DegenerateSamplingError('consecutive polyline vertices coincide')
        object.__setattr__(self, 'vertices', v)

    @property
    def n(self) -> int:
        return self.vertices.shape[1] // 2

    @property
    def length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.vertices, axis=0), axis=1)))

    def reversed(self) -> "PlanarPolyline":
        return PlanarPolyline(self.vertices[::-1].copy())

def _segment_area(a: np.ndarray, b: np.ndarray, n: int) -> float:
    # closed form of sum_j int (y_j dx_j - x_j dy_j) along the chord a -> b
    return float(np.sum(a[n:] * b[:n] - a[:n] * b[n:]))

def heisenberg_area(poly: PlanarPolyline) -> float:
    v = poly.vertices
    return float(sum(_segment_area(v[s], v[s + 1], poly.n) for s in range(len(v) - 1)))

def heisenberg_project(p) -> np.ndarray:
    return np.asarray(p, dtype=float)[:-1]

def heisenberg_lift(poly: PlanarPolyline, start) -> BrokenGeodesic:
    """Horizontal lift through ``start``; each chord is one unit-speed geodesic leg."""
    start = np.asarray(start, dtype=float)
    v = poly.vertices
    n = poly.n
    if len(start) != 2 * n + 1:
        raise DimensionMismatchError(f'start must have {2 * n + 1} coordinates')
    if not np.allclose(start[:-1], v[0], rtol=0.0, atol=1e-12):
        logger.error(f"Lift start {start.tolist()} does not project to {v[0].tolist()}")
        raise ValueError('start point must project to the first vertex')
    x = start.copy()
    breaks = [x.copy()]
    segments = []
    for s in range(len(v) - 1):
        chord = v[s + 1] - v[s]
        length = float(np.linalg.norm(chord))
        segments.append(Segment(tuple(float(c) for c in chord / length), length))
        x = np.concatenate((v[s + 1], [x[-1] + 0.5 * _segment_area(v[s], v[s + 1], n)]))
        breaks.append(x.copy())
    return BrokenGeodesic(start.copy(), segments, x, breaks)

def heisenberg_left_translate(p, q) -> np.ndarray:
    """Coordinates of p^{-1} q for the group law matching X_j = d_xj + y_j/2 d_t."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    n = (len(p) - 1) // 2
    d = q - p
    d[-1] += 0.5 * float(np.sum(p[:n] * q[n:2 * n] - p[n:2 * n] * q[:n]))
    return d

def _ngon_loop(anchor: np.ndarray, n: int, area: float, ngon: int) -> np.ndarray:
    """Vertices of a closed regular ngon from ``anchor`` in the (x_1, y_1) plane with signed area ``area``."""
    side = np.sqrt(4.0 * abs(area) * np.tan(np.pi / ngon) / ngon)
    turn = 2.0 * np.pi / ngon * (1.0 if area > 0 else -1.0)
    vertices = [anchor.copy()]
    for s in range(ngon - 1):
        step = np.zeros_like(anchor)
        step[0] = side * np.cos(s * turn)
        step[n] = side * np.sin(s * turn)
        vertices.append(vertices[-1] + step)
    vertices.append(anchor.copy())
    return np.array(vertices)

def heisenberg_plan(p, q, ngon: int = 16) -> BrokenGeodesic:
    """Straight chord to q's projection, then an ngon loop whose lift closes the vertical gap."""
    if ngon < 3:
        raise ValueError('ngon must be at least 3')
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    n = (len(p) - 1) // 2
    pbar, qbar = p[:-1], q[:-1]
    plan = BrokenGeodesic.empty(p)
    if not np.array_equal(pbar, qbar):
        plan = heisenberg_lift(PlanarPolyline(np.array([pbar, qbar])), p)
    residual = q[-1] - plan.endpoint[-1]
    if abs(residual) > AREA_TOL:
        # a closed loop lifts to a vertical gain of minus its signed area
        loop = heisenberg_lift(PlanarPolyline(_ngon_loop(qbar, n, -residual, ngon)), plan.endpoint)
        plan = plan.then(loop)
        # the loop closes only up to roundoff in the projection
        plan.endpoint = np.concatenate((qbar, [plan.endpoint[-1]]))
    logger.debug(f"Heisenberg plan: length {plan.length:.6f}, vertical residual {residual:.3e}, ngon {ngon}")
    return plan

def _arc_area_ratio(phi: float) -> float:
    # (2 phi - sin 2 phi) / (8 sin^2 phi): area between chord and arc over chord^2
    if phi < 1e-3:
        u = 2.0 * phi
        num = u ** 3 / 6.0 - u ** 5 / 120.0 + u ** 7 / 5040.0
    else:
        num = 2.0 * phi - np.sin(2.0 * phi)
    return num / (8.0 * np.sin(phi) ** 2)

def heisenberg_dc(p, q, tol: float = 1e-14) -> float:
    """Exact Carnot-Caratheodory distance on heisenberg-1 via lifted circular arcs."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if len(p) != 3 or len(q) != 3:
        raise DimensionMismatchError('the exact distance is available on heisenberg-1 only')
    dx, dy, dt = heisenberg_left_translate(p, q)
    r = float(np.hypot(dx, dy))
    area = abs(float(dt))
    if area == 0.0:
        return r
    if r == 0.0:
        return 2.0 * np.sqrt(np.pi * area)
    ratio = area / r ** 2
    delta = min(0.5 * np.pi, 0.5 * np.sqrt(np.pi / (4.0 * ratio)))
    while _arc_area_ratio(np.pi - delta) <= ratio:
        delta *= 0.5
        if delta < 1e-300:
            raise ToleranceNotReachedError('arc parameter bracket collapsed')
    try:
        phi = brentq(lambda a: (_arc_area_ratio(a) if a > 0.0 else 0.0) - ratio, 0.0, np.pi - delta,
                     xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=200)
    except (RuntimeError, ValueError) as e:
        logger.error(f"Arc parameter solve failed for ratio {ratio}: {e}")
        raise ToleranceNotReachedError(str(e))
    return r * phi / np.sin(phi)

def carnot_dilate(spec: Union[str, StructureSpec], lam: float, p) -> np.ndarray:
    if isinstance(spec, str):
        spec = builtin(spec)
    if spec.weights is None:
        logger.error(f"{spec.name} declares no dilation weights")
        raise NotCarnotError(f'{spec.name} is not a Carnot model')
    p = np.asarray(p, dtype=float)
    return p * float(lam) ** np.asarray(spec.weights, dtype=float)
