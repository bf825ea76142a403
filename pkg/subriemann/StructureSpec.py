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
import json
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .FieldExpr import Expr, parse_expression
from .core.exceptions import (
    ModelSchemaError, DimensionMismatchError, FrameDegeneracyError, ExprSyntaxError,
)
from .core.log import get_logger
from .core.rng import stream

logger = get_logger("StructureSpec")

RANK_TOL = 1e-9
MAX_GRID_POINTS = 100_000

def box_points(lower, upper, per_axis: int, cap: int) -> np.ndarray:
    """Tensor grid with ``per_axis`` nodes per axis, or ``cap`` seeded points once the grid exceeds ``cap``.

    The sampled set always contains both corners and the center.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    m = len(lower)
    if per_axis ** m <= cap:
        axes = [np.linspace(lo, hi, per_axis) for lo, hi in zip(lower, upper)]
        return np.array(list(itertools.product(*axes)), dtype=float).reshape(-1, m)
    rng = stream(per_axis, m)
    inner = lower + (upper - lower) * rng.uniform(size=(cap - 3, m))
    return np.vstack((lower, upper, 0.5 * (lower + upper), inner))

@dataclass(frozen=True)
class StructureSpec:
    """Chart, horizontal and vertical frame of a sub-Riemannian structure.

    The m frame fields are declared g-orthonormal: this fixes the
    sub-Riemannian metric on the horizontal span, the complement spanned by
    the vertical fields, and the orthogonal extension g at once.
    """
    name: str
    coords: Tuple[str, ...]
    horizontal: Tuple[Tuple[Expr, ...], ...]
    vertical: Tuple[Tuple[Expr, ...], ...]
    domain: Tuple[Tuple[float, float], ...]
    weights: Optional[Tuple[int, ...]] = None

    @property
    def m(self) -> int:
        return len(self.coords)

    @property
    def k(self) -> int:
        return len(self.horizontal)

    @property
    def fields(self) -> Tuple[Tuple[Expr, ...], ...]:
        return self.horizontal + self.vertical

    @property
    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.domain])

    @property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.domain])

    @cached_property
    def frame(self):
        from .Geometry import Frame
        return Frame(self)

    def contains(self, p: Sequence[float], slack: float = 1e-12) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= self.lower - slack) and np.all(p <= self.upper + slack))

    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def sample_point(self, rng: np.random.Generator, shrink: float = 1.0) -> np.ndarray:
        c = self.center()
        half = 0.5 * (self.upper - self.lower) * shrink
        return c + rng.uniform(-1.0, 1.0, size=self.m) * half

    def grid(self, per_axis: int, cap: int = MAX_GRID_POINTS) -> np.ndarray:
        return box_points(self.lower, self.upper, per_axis, cap)

    def validate(self, rank_tol: float = RANK_TOL) -> "StructureSpec":
        per_axis = 5
        while per_axis > 2 and per_axis ** self.m > MAX_GRID_POINTS:
            per_axis -= 1
        points = self.grid(per_axis)
        logger.debug(f"Validating frame of {self.name} on {len(points)} points")
        frame = self.frame
        for p in points:
            s = np.linalg.svd(frame.matrix(p), compute_uv=False)
            if s[0] == 0.0 or s[-1] <= rank_tol * s[0]:
                logger.error(f"Frame of {self.name} degenerate at {p.tolist()}")
                raise FrameDegeneracyError(p)
        return self

    @classmethod
    def parse(cls, document: Union[str, bytes, Mapping[str, Any]]) -> "StructureSpec":
        if isinstance(document, (str, bytes)):
            try:
                data = json.loads(document)
            except json.JSONDecodeError as e:
                raise ModelSchemaError(f'model file is not valid JSON: {e}')
        else:
            data = document
        if not isinstance(data, Mapping):
            raise ModelSchemaError('model document must be a JSON object')
        for key in ('name', 'coords', 'horizontal', 'vertical', 'domain'):
            if key not in data:
                raise ModelSchemaError(f'missing field: {key}')

        name = data['name']
        coords = data['coords']
        if not isinstance(name, str) or not name:
            raise ModelSchemaError('name must be a non-empty string')
        if not isinstance(coords, list) or not coords or not all(isinstance(c, str) for c in coords):
            raise ModelSchemaError('coords must be a non-empty array of strings')
        if len(set(coords)) != len(coords):
            raise ModelSchemaError('coords must be distinct')
        m = len(coords)

        def fields(key):
            raw = data[key]
            if not isinstance(raw, list):
                raise ModelSchemaError(f'{key} must be an array of fields')
            out = []
            for n, field in enumerate(raw):
                if not isinstance(field, list) or len(field) != m:
                    raise DimensionMismatchError(f'{key}[{n}] must have {m} components')
                comps = []
                for c, text in enumerate(field):
                    if not isinstance(text, str):
                        text = repr(float(text))
                    try:
                        comps.append(parse_expression(text))
                    except ExprSyntaxError as e:
                        raise ModelSchemaError(f'{key}[{n}][{c}]: {e}')
                unknown = set().union(*(e.symbols() for e in comps)) - set(coords)
                if unknown:
                    raise ModelSchemaError(f'{key}[{n}] uses unknown identifiers {sorted(unknown)}')
                out.append(tuple(comps))
            return tuple(out)

        horizontal = fields('horizontal')
        vertical = fields('vertical')
        k = len(horizontal)
        if k == 0:
            raise ModelSchemaError('at least one horizontal field is required')
        if k >= m:
            raise ModelSchemaError(f'horizontal rank {k} must be below dimension {m}')
        if k + len(vertical) != m:
            raise DimensionMismatchError(f'{k} horizontal + {len(vertical)} vertical fields for dimension {m}')

        domain = data['domain']
        if not isinstance(domain, list) or len(domain) != m:
            raise DimensionMismatchError(f'domain must have {m} [lo, hi] pairs')
        box = []
        for pair in domain:
            if not isinstance(pair, list) or len(pair) != 2:
                raise ModelSchemaError('domain entries must be [lo, hi] pairs')
            lo, hi = float(pair[0]), float(pair[1])
            if not lo < hi:
                raise ModelSchemaError(f'empty domain interval [{lo}, {hi}]')
            box.append((lo, hi))

        weights = data.get('weights')
        if weights is not None:
            if not isinstance(weights, list) or len(weights) != m:
                raise DimensionMismatchError(f'weights must have {m} entries')
            weights = tuple(int(w) for w in weights)

        spec = cls(name=name, coords=tuple(coords), horizontal=horizontal, vertical=vertical,
                   domain=tuple(box), weights=weights)
        return spec.validate()

    def to_dict(self) -> dict:
        d = {
            'name': self.name,
            'coords': list(self.coords),
            'horizontal': [[str(e) for e in f] for f in self.horizontal],
            'vertical': [[str(e) for e in f] for f in self.vertical],
            'domain': [[lo, hi] for lo, hi in self.domain],
        }
        if self.weights is not None:
            d['weights'] = list(self.weights)
        return d

    def serialize(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def __repr__(self):
        return f"StructureSpec(name={self.name!r}, m={self.m}, k={self.k})"

def parse_model(document: Union[str, bytes, Mapping[str, Any]]) -> StructureSpec:
    return StructureSpec.parse(document)

def load_model(path: str) -> StructureSpec:
    with open(path, 'rt', encoding='utf-8') as f:
        return parse_model(f.read())
