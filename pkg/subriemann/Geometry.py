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

from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .FieldExpr import Expr, ZERO, add, sub, mul, compile_vector, is_polynomial
from .StructureSpec import StructureSpec, RANK_TOL
from .core.exceptions import SingularFrameError, DegenerateSamplingError
from .core.rng import stream
from .core.log import get_logger

logger = get_logger("Geometry")

BRACKET_DEPTH_CAP = 6

class FrameField:
    """Vector field given by its chart components."""

    def __init__(self, components: Sequence[Expr], coords: Sequence[str]):
        self.components = tuple(components)
        self.coords = tuple(coords)

    @cached_property
    def jacobian(self) -> Tuple[Tuple[Expr, ...], ...]:
        return tuple(tuple(c.diff(x) for x in self.coords) for c in self.components)

    @cached_property
    def _compiled(self):
        return compile_vector(self.components, self.coords)

    def evaluate(self, p: Sequence[float]) -> np.ndarray:
        return self._compiled(p)

    @property
    def is_zero(self) -> bool:
        return all(c.is_zero for c in self.components)

    def __str__(self):
        return '(' + ', '.join(str(c) for c in self.components) + ')'

def lie_bracket(U: FrameField, V: FrameField) -> FrameField:
    """[U, V] = J_V U - J_U V, computed symbolically."""
    m = len(U.components)
    JU, JV = U.jacobian, V.jacobian
    comps = []
    for i in range(m):
        e = ZERO
        for j in range(m):
            e = add(e, sub(mul(JV[i][j], U.components[j]), mul(JU[i][j], V.components[j])))
        comps.append(e)
    return FrameField(comps, U.coords)

@dataclass(frozen=True)
class GrowthVector:
    dims: Tuple[int, ...]
    tol: float
    bracket_generating: bool
    depth_cap: int

    @property
    def step(self) -> int:
        return len(self.dims)

    def verdict(self) -> str:
        return "bracket-generating" if self.bracket_generating else "degree exceeds bound"

    def to_dict(self) -> dict:
        return {
            'dims': list(self.dims),
            'tol': self.tol,
            'bracket_generating': self.bracket_generating,
            'verdict': self.verdict(),
            'depth_cap': self.depth_cap,
        }

class Frame:
    """Compiled frame of a structure: matrix, Jacobians, brackets and connection.

    Index conventions: ``matrix(p)[:, a]`` is the a-th field;
    ``jacobians(p)[a, i, j]`` is d_j E_a^i; ``structure(p)[a, b, d]`` is
    c_ab^d with [E_a, E_b] = c_ab^d E_d; ``christoffel(p)[a, b, c]`` is
    Gamma^c_ab with nabla_{E_a} E_b = Gamma^c_ab E_c.
    """

    def __init__(self, spec: StructureSpec):
        self.spec = spec
        self.m = spec.m
        self.k = spec.k
        self.fields: List[FrameField] = [FrameField(f, spec.coords) for f in spec.fields]
        m = self.m
        self._matrix = compile_vector([self.fields[a].components[i] for i in range(m) for a in range(m)], spec.coords)
        self._jac = compile_vector([self.fields[a].jacobian[i][j]
                                    for a in range(m) for i in range(m) for j in range(m)], spec.coords)
        self._brackets: Dict[Tuple[int, ...], FrameField] = {}

    def matrix(self, p) -> np.ndarray:
        return self._matrix(p).reshape(self.m, self.m)

    def jacobians(self, p) -> np.ndarray:
        return self._jac(p).reshape(self.m, self.m, self.m)

    def brackets(self, p) -> np.ndarray:
        A = self.matrix(p)
        J = self.jacobians(p)
        # t[a, b, i] = (J_b E_a)^i, so [E_a, E_b] = t[a, b] - t[b, a]
        t = np.einsum('bij,ja->abi', J, A)
        return t - t.transpose(1, 0, 2)

    def structure(self, p) -> np.ndarray:
        m = self.m
        A = self.matrix(p)
        B = self.brackets(p)
        try:
            c = np.linalg.solve(A, B.reshape(m * m, m).T).T
        except np.linalg.LinAlgError:
            logger.error(f"Singular frame at {np.asarray(p).tolist()}")
            raise SingularFrameError(p)
        return c.reshape(m, m, m)

    def christoffel(self, p) -> np.ndarray:
        c = self.structure(p)
        # Koszul formula in an orthonormal frame
        return 0.5 * (c - c.transpose(2, 0, 1) + c.transpose(1, 2, 0))

    def horizontal_christoffel(self, p) -> np.ndarray:
        k = self.k
        return self.christoffel(p)[:k, :k, :k]

    def coefficients(self, p, v) -> np.ndarray:
        try:
            return np.linalg.solve(self.matrix(p), np.asarray(v, dtype=float))
        except np.linalg.LinAlgError:
            logger.error(f"Singular frame at {np.asarray(p).tolist()}")
            raise SingularFrameError(p)

    def horizontal_velocity(self, p, u) -> np.ndarray:
        return self.matrix(p)[:, :self.k] @ u

    @cached_property
    def horizontally_flat(self) -> bool:
        """Whether the horizontal connection coefficients vanish identically.

        Only Carnot models (declared weights) with polynomial frame fields
        qualify. Their coefficients are rational in the chart coordinates,
        and a nonzero rational function vanishes only on a null set, so
        random points decide.
        """
        if self.spec.weights is None:
            return False
        if not all(is_polynomial(c) for f in self.fields for c in f.components):
            logger.debug(f"{self.spec.name}: frame is not polynomial, using the full connection")
            return False
        worst = 0.0
        scale = 1.0
        for i in range(32):
            p = self.spec.sample_point(stream(0x5EED, i))
            worst = max(worst, float(np.max(np.abs(self.horizontal_christoffel(p)))))
            scale = max(scale, float(np.max(np.abs(self.structure(p)))))
        flat = worst <= 1e-13 * scale
        logger.debug(f"{self.spec.name}: horizontal connection flat={flat} (max |Gamma|={worst:.3e})")
        return flat

    def bracket_field(self, index: Sequence[int]) -> FrameField:
        """Right-normed bracket E_I = [E_i1, [E_i2, ...]] for a 1-based multi-index."""
        key = tuple(index)
        if key in self._brackets:
            return self._brackets[key]
        if len(key) == 1:
            field = self.fields[key[0] - 1]
        else:
            field = lie_bracket(self.fields[key[0] - 1], self.bracket_field(key[1:]))
        self._brackets[key] = field
        return field

def frame_matrix(spec: StructureSpec, p) -> np.ndarray:
    return spec.frame.matrix(p)

def structure_functions(spec: StructureSpec, p) -> np.ndarray:
    return spec.frame.structure(p)

def project_horizontal(spec: StructureSpec, p, v) -> np.ndarray:
    return spec.frame.coefficients(p, v)[:spec.k]

def bracket_field(spec: StructureSpec, index: Sequence[int]) -> FrameField:
    return spec.frame.bracket_field(index)

def numeric_rank(vectors: Sequence[np.ndarray], tol: float = RANK_TOL) -> int:
    if not len(vectors):
        return 0
    s = np.linalg.svd(np.array(vectors), compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))

def growth_vector(spec: StructureSpec, p, tol: float = RANK_TOL) -> GrowthVector:
    frame = spec.frame
    cap = min(spec.m, BRACKET_DEPTH_CAP)
    layer = [(i,) for i in range(1, spec.k + 1)]
    vectors = [frame.bracket_field(I).evaluate(p) for I in layer]
    dims = [numeric_rank(vectors, tol)]
    depth = 1
    while dims[-1] < spec.m and depth < cap:
        depth += 1
        next_layer = []
        for J in layer:
            for i in range(1, spec.k + 1):
                I = (i,) + J
                field = frame.bracket_field(I)
                if field.is_zero:
                    continue
                next_layer.append(I)
                vectors.append(field.evaluate(p))
        rank = numeric_rank(vectors, tol)
        if rank == dims[-1]:
            logger.debug(f"Growth stalls at depth {depth} with rank {rank}")
            return GrowthVector(tuple(dims), tol, False, cap)
        dims.append(rank)
        layer = next_layer
    return GrowthVector(tuple(dims), tol, dims[-1] == spec.m, cap)

def horizontality_defect(spec: StructureSpec, curve, times: Optional[Sequence[float]] = None) -> float:
    """Largest g-norm of the vertical part of the finite-difference velocity."""
    untimed = False
    if hasattr(curve, 'points'):
        points = np.asarray(curve.points, dtype=float)
        times = np.asarray(curve.t, dtype=float)
    else:
        points = np.asarray(curve, dtype=float)
        if times is None:
            untimed = True
            times = np.linspace(0.0, 1.0, len(points))
        times = np.asarray(times, dtype=float)
    if len(points) < 2:
        raise DegenerateSamplingError('a curve needs at least two samples')
    if len(times) != len(points):
        raise DegenerateSamplingError('times and points differ in length')
    dt = np.diff(times)
    if np.any(dt <= 0.0):
        raise DegenerateSamplingError('sample times must increase strictly')
    if untimed and np.any(np.all(np.diff(points, axis=0) == 0.0, axis=1)):
        raise DegenerateSamplingError('repeated points in an untimed sample')
    k = spec.k
    worst = 0.0
    for s in range(len(points) - 1):
        mid = 0.5 * (points[s] + points[s + 1])
        w = spec.frame.coefficients(mid, (points[s + 1] - points[s]) / dt[s])
        worst = max(worst, float(np.linalg.norm(w[k:])))
    return worst
