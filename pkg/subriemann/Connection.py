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
from functools import lru_cache
from typing import Sequence, Tuple

import numpy as np

from .FieldExpr import Expr, compile_vector, gradient, hessian
from .StructureSpec import StructureSpec
from .core.exceptions import SamplingMismatchError, TransportError
from .core.log import get_logger

logger = get_logger("Connection")

@dataclass(frozen=True)
class ChristoffelTable:
    """Connection coefficients at a point.

    ``full[a, b, c]`` is Gamma^c_ab (nabla_{E_a} E_b = Gamma^c_ab E_c);
    ``horizontal[i, j, r]`` is the horizontal block (D_{X_i} X_j = Gamma^r_ij X_r).
    """
    point: Tuple[float, ...]
    horizontal: np.ndarray
    full: np.ndarray

    def to_dict(self) -> dict:
        return {
            'point': list(self.point),
            'horizontal': self.horizontal.tolist(),
            'full': self.full.tolist(),
            'index_order': 'gamma[a][b][c] = component c of nabla_{E_a} E_b',
        }

@dataclass(frozen=True)
class HorizontalHessian:
    point: Tuple[float, ...]
    matrix: np.ndarray

    def to_dict(self) -> dict:
        return {'point': list(self.point), 'matrix': self.matrix.tolist()}

def christoffels(spec: StructureSpec, p) -> ChristoffelTable:
    full = spec.frame.christoffel(p)
    k = spec.k
    return ChristoffelTable(tuple(float(x) for x in p), full[:k, :k, :k].copy(), full)

@lru_cache(maxsize=256)
def _compiled_derivatives(f: Expr, coords: Tuple[str, ...]):
    value = compile_vector([f], coords)
    first = compile_vector(gradient(f, coords), coords)
    second = compile_vector([h for row in hessian(f, coords) for h in row], coords)
    return value, first, second

def frame_derivatives(spec: StructureSpec, f: Expr, p) -> Tuple[np.ndarray, np.ndarray]:
    """First and second frame derivatives: (E_a f, E_a E_b f) at p."""
    m = spec.m
    _, first, second = _compiled_derivatives(f, spec.coords)
    g = first(p)
    H = second(p).reshape(m, m)
    A = spec.frame.matrix(p)
    J = spec.frame.jacobians(p)
    df = A.T @ g
    ddf = np.einsum('ja,bij,i->ab', A, J, g) + A.T @ H @ A
    return df, ddf

def horizontal_gradient(spec: StructureSpec, f: Expr, p) -> np.ndarray:
    df, _ = frame_derivatives(spec, f, p)
    return df[:spec.k]

def horizontal_divergence(spec: StructureSpec, X: Sequence[Expr], p) -> float:
    k = spec.k
    if len(X) != k:
        raise SamplingMismatchError(f'expected {k} horizontal coefficients, got {len(X)}')
    A = spec.frame.matrix(p)
    coeffs = np.array([compile_vector([c], spec.coords)(p)[0] for c in X])
    total = 0.0
    for i in range(k):
        grad = compile_vector(gradient(X[i], spec.coords), spec.coords)(p)
        total += float(A[:, i] @ grad)
    G = spec.frame.horizontal_christoffel(p)
    # X^j Gamma^i_ij
    total += float(np.einsum('j,iji->', coeffs, G))
    return total

def horizontal_hessian(spec: StructureSpec, f: Expr, p) -> HorizontalHessian:
    k = spec.k
    df, ddf = frame_derivatives(spec, f, p)
    G = spec.frame.horizontal_christoffel(p)
    sym = 0.5 * (ddf[:k, :k] + ddf[:k, :k].T)
    # f_r Gamma^j_ir, symmetrized
    corr = np.einsum('irj,r->ij', G, df[:k])
    H = sym + 0.5 * (corr + corr.T)
    return HorizontalHessian(tuple(float(x) for x in p), H)

def sublaplacian(spec: StructureSpec, f: Expr, p) -> float:
    return float(np.trace(horizontal_hessian(spec, f, p).matrix))

def riemannian_hessian(spec: StructureSpec, f: Expr, p) -> np.ndarray:
    df, ddf = frame_derivatives(spec, f, p)
    gamma = spec.frame.christoffel(p)
    return ddf - np.einsum('abc,c->ab', gamma, df)

def second_fundamental_form(spec: StructureSpec, p) -> np.ndarray:
    """B(X_i, X_j) = nabla_{X_i} X_j - D_{X_i} X_j as vertical frame coefficients."""
    k = spec.k
    return spec.frame.christoffel(p)[:k, :k, k:]

def hessian_representation_defect(spec: StructureSpec, f: Expr, p) -> float:
    """|Hess^H f - (Hess f + sym B f)| on the horizontal block."""
    k = spec.k
    df, _ = frame_derivatives(spec, f, p)
    B = second_fundamental_form(spec, p)
    Bf = np.einsum('ijc,c->ij', B, df[k:])
    expected = riemannian_hessian(spec, f, p)[:k, :k] + 0.5 * (Bf + Bf.T)
    return float(np.max(np.abs(horizontal_hessian(spec, f, p).matrix - expected)))

def covariant_derivative_along(spec: StructureSpec, curve, Y) -> np.ndarray:
    """D/dt Y along a sampled horizontal curve, in frame coordinates."""
    Y = np.asarray(Y, dtype=float)
    t = np.asarray(curve.t, dtype=float)
    if Y.shape != (len(t), spec.k):
        raise SamplingMismatchError(f'Y must have shape {(len(t), spec.k)}, got {Y.shape}')
    if len(t) < 2:
        raise SamplingMismatchError('need at least two samples')
    out = np.gradient(Y, t, axis=0)
    if spec.frame.horizontally_flat:
        return out
    for s in range(len(t)):
        G = spec.frame.horizontal_christoffel(curve.points[s])
        out[s] += np.einsum('i,j,ijr->r', curve.u[s], Y[s], G)
    return out

def parallel_transport(spec: StructureSpec, curve, Y0) -> np.ndarray:
    """Transport Y0 along the curve: dY^r/dt = -Y^j u^i Gamma^r_ij (RK4)."""
    Y = np.asarray(Y0, dtype=float).copy()
    if Y.shape != (spec.k,):
        raise SamplingMismatchError(f'Y0 must have {spec.k} components')
    t = np.asarray(curve.t, dtype=float)
    x = np.asarray(curve.points, dtype=float)
    u = np.asarray(curve.u, dtype=float)
    if len(t) < 2 or spec.frame.horizontally_flat:
        return Y
    frame = spec.frame
    v = np.array([frame.horizontal_velocity(x[s], u[s]) for s in range(len(t))])
    du = np.gradient(u, t, axis=0)

    def rhs(p, w, y):
        return -np.einsum('i,j,ijr->r', w, y, frame.horizontal_christoffel(p))

    for s in range(len(t) - 1):
        h = t[s + 1] - t[s]
        # cubic Hermite midpoints of the sampled state
        xm = 0.5 * (x[s] + x[s + 1]) + h / 8.0 * (v[s] - v[s + 1])
        um = 0.5 * (u[s] + u[s + 1]) + h / 8.0 * (du[s] - du[s + 1])
        k1 = rhs(x[s], u[s], Y)
        k2 = rhs(xm, um, Y + 0.5 * h * k1)
        k3 = rhs(xm, um, Y + 0.5 * h * k2)
        k4 = rhs(x[s + 1], u[s + 1], Y + h * k3)
        Y = Y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(Y)):
            logger.error(f"Parallel transport diverged at t={t[s + 1]}")
            raise TransportError(f'transport step failed at t={t[s + 1]}')
    logger.trace(f"Transported {np.asarray(Y0).tolist()} -> {Y.tolist()}")
    return Y
