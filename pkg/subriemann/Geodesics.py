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
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .StructureSpec import StructureSpec
from .core.exceptions import GeodesicBlowupError, SingularFrameError, FormulationMismatchError
from .core.log import get_logger

logger = get_logger("Geodesics")

DEFAULT_STEP = 1e-3
METRIC_FD_STEP = 1e-6

@dataclass(frozen=True)
class FrameCurve:
    """Sampled trajectory with frame-coordinate velocities."""
    t: np.ndarray
    points: np.ndarray
    u: np.ndarray
    step: float
    truncated: bool = False
    deviation: Optional[float] = None

    @property
    def endpoint(self) -> np.ndarray:
        return self.points[-1]

    @property
    def final_velocity(self) -> np.ndarray:
        return self.u[-1]

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    def speeds(self) -> np.ndarray:
        return np.linalg.norm(self.u, axis=1)

    def to_csv(self) -> str:
        m = self.points.shape[1]
        d = self.u.shape[1]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator='\n')
        writer.writerow(['t'] + [f'x{i + 1}' for i in range(m)] + [f'u{i + 1}' for i in range(d)])
        for s in range(len(self.t)):
            writer.writerow([repr(float(self.t[s]))] + [repr(float(x)) for x in self.points[s]]
                            + [repr(float(w)) for w in self.u[s]])
        return buf.getvalue()

    def to_dict(self) -> dict:
        d = {
            'samples': int(len(self.t)),
            'duration': self.duration,
            'step': self.step,
            'truncated': self.truncated,
            'endpoint': self.endpoint.tolist(),
            'final_velocity': self.final_velocity.tolist(),
        }
        if self.deviation is not None:
            d['formulation_deviation'] = self.deviation
        return d

@dataclass(frozen=True)
class HorizontalCurve(FrameCurve):
    pass

def _rk4(spec: StructureSpec, rhs: Callable[[np.ndarray], np.ndarray], y0: np.ndarray, T: float, step: float):
    if step <= 0.0:
        raise ValueError('step must be positive')
    m = spec.m
    n = max(1, int(np.ceil(abs(T) / step - 1e-9))) if T != 0.0 else 0
    h = T / n if n else 0.0
    ts = [0.0]
    ys = [y0]
    y = y0
    truncated = False
    for s in range(n):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y_new = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y_new)):
            logger.error(f"Integration blew up at t={(s + 1) * h}")
            raise GeodesicBlowupError(f'non-finite state at t={(s + 1) * h}')
        if not spec.contains(y_new[:m]):
            logger.debug(f"Trajectory left the domain at t={(s + 1) * h}; truncating")
            truncated = True
            break
        y = y_new
        ys.append(y)
        ts.append((s + 1) * h)
    return np.array(ts), np.array(ys), truncated, abs(h) if n else step

def nonholonomic_geodesic(spec: StructureSpec, x0, v0, T: float, step: float = DEFAULT_STEP) -> HorizontalCurve:
    """Integrate D_{q'} q' = 0: x' = u^i X_i(x), u'^r = -Gamma^r_ij u^i u^j."""
    frame = spec.frame
    m, k = spec.m, spec.k
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    logger.debug(f"Nonholonomic geodesic on {spec.name} from {x0.tolist()} along {v0.tolist()} for T={T}")
    if frame.horizontally_flat:
        ts, xs, truncated, h = _rk4(spec, lambda x: frame.horizontal_velocity(x, v0), x0, T, step)
        return HorizontalCurve(ts, xs, np.tile(v0, (len(ts), 1)), h, truncated)

    def rhs(y):
        x, u = y[:m], y[m:]
        G = frame.horizontal_christoffel(x)
        return np.concatenate((frame.horizontal_velocity(x, u), -np.einsum('ijr,i,j->r', G, u, u)))

    ts, ys, truncated, h = _rk4(spec, rhs, np.concatenate((x0, v0)), T, step)
    return HorizontalCurve(ts, ys[:, :m], ys[:, m:], h, truncated)

def geodesic_point(spec: StructureSpec, x0, v, t: float, step: float = DEFAULT_STEP) -> np.ndarray:
    """gamma_v(t) for signed t, via gamma_v(-t) = gamma_{-v}(t)."""
    v = np.asarray(v, dtype=float)
    if t < 0:
        return nonholonomic_geodesic(spec, x0, -v, -t, step).endpoint
    return nonholonomic_geodesic(spec, x0, v, t, step).endpoint

def horizontal_exponential(spec: StructureSpec, x0, v, step: Optional[float] = None) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if step is None:
        step = DEFAULT_STEP / max(1.0, float(np.linalg.norm(v)))
    curve = nonholonomic_geodesic(spec, x0, v, 1.0, step)
    if curve.truncated:
        logger.warning(f"Horizontal exponential of {v.tolist()} left the domain; returning last inside point")
    return curve.endpoint

def riemannian_geodesic(spec: StructureSpec, x0, w0, T: float, step: float = DEFAULT_STEP) -> FrameCurve:
    """Geodesic of the frame-orthonormal metric g: u'^c = -Gamma^c_ab u^a u^b."""
    frame = spec.frame
    m = spec.m
    x0 = np.asarray(x0, dtype=float)
    w0 = np.asarray(w0, dtype=float)
    logger.debug(f"Riemannian geodesic on {spec.name} from {x0.tolist()} along {w0.tolist()}")

    def rhs(y):
        x, w = y[:m], y[m:]
        return np.concatenate((frame.matrix(x) @ w, -np.einsum('abc,a,b->c', frame.christoffel(x), w, w)))

    ts, ys, truncated, h = _rk4(spec, rhs, np.concatenate((x0, w0)), T, step)
    return FrameCurve(ts, ys[:, :m], ys[:, m:], h, truncated)

class ConstraintForm:
    """Coordinate form of the nonholonomic geodesic equation.

    q''^c = -(Gamma^c_ab + (mu_i)_{a;b} mu_i^c) q'^a q'^b with the constraint
    one-forms mu_i taken as the g-orthonormal coframe dual to the vertical
    fields, so that mu_i^c (index raised) is the vertical field itself.
    """

    def __init__(self, spec: StructureSpec, h: float = METRIC_FD_STEP):
        self.spec = spec
        self.frame = spec.frame
        self.h = h

    def inverse_frame(self, q) -> np.ndarray:
        try:
            return np.linalg.inv(self.frame.matrix(q))
        except np.linalg.LinAlgError:
            logger.error(f"Singular coordinate metric at {np.asarray(q).tolist()}")
            raise SingularFrameError(q)

    def metric(self, q) -> np.ndarray:
        Ainv = self.inverse_frame(q)
        return Ainv.T @ Ainv

    def coordinate_christoffel(self, q) -> np.ndarray:
        m = self.spec.m
        dG = np.empty((m, m, m))
        for d in range(m):
            e = np.zeros(m)
            e[d] = self.h
            dG[d] = (self.metric(q + e) - self.metric(q - e)) / (2.0 * self.h)
        A = self.frame.matrix(q)
        lower = 0.5 * (dG.transpose(1, 0, 2) + dG.transpose(1, 2, 0) - dG)
        # lower[d, a, b] = Gamma_{d, ab}; raise with G^{-1} = A A^T
        return np.einsum('cd,dab->cab', A @ A.T, lower)

    def modified_christoffel(self, q) -> np.ndarray:
        k = self.spec.k
        A = self.frame.matrix(q)
        Ainv = self.inverse_frame(q)
        J = self.frame.jacobians(q)
        dA = J.transpose(2, 1, 0)
        dAinv = -np.einsum('ij,bjk,kl->bil', Ainv, dA, Ainv)
        gamma = self.coordinate_christoffel(q)
        mu = Ainv[k:]
        # (mu_i)_{a;b} = d_b mu_{i,a} - Gamma^c_ab mu_{i,c}
        cov = dAinv[:, k:, :].transpose(1, 2, 0) - np.einsum('cab,ic->iab', gamma, mu)
        return gamma + np.einsum('iab,ci->cab', cov, A[:, k:])

    def acceleration(self, q, qdot) -> np.ndarray:
        return -np.einsum('cab,a,b->c', self.modified_christoffel(q), qdot, qdot)

def geodesic_from_constraints(spec: StructureSpec, x0, v0, T: float, step: float = DEFAULT_STEP,
                              cross_check: Optional[float] = None) -> HorizontalCurve:
    """Integrate the coordinate form with constraint one-forms.

    With ``cross_check`` set, the frame integrator is run from the same data
    and a deviation above ``cross_check`` raises FormulationMismatchError.
    """
    form = ConstraintForm(spec)
    m, k = spec.m, spec.k
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    logger.debug(f"Constraint-form geodesic on {spec.name} from {x0.tolist()} along {v0.tolist()}")

    def rhs(y):
        q, qdot = y[:m], y[m:]
        return np.concatenate((qdot, form.acceleration(q, qdot)))

    qdot0 = spec.frame.horizontal_velocity(x0, v0)
    ts, ys, truncated, h = _rk4(spec, rhs, np.concatenate((x0, qdot0)), T, step)
    u = np.array([form.inverse_frame(ys[s, :m]) @ ys[s, m:] for s in range(len(ts))])[:, :k]
    if cross_check is None:
        return HorizontalCurve(ts, ys[:, :m], u, h, truncated)
    reference = nonholonomic_geodesic(spec, x0, v0, T, step)
    n = min(len(ts), len(reference.t))
    deviation = float(np.max(np.abs(ys[:n, :m] - reference.points[:n])))
    logger.debug(f"Constraint form vs frame integrator: max deviation {deviation:.3e}")
    if deviation > cross_check:
        logger.error(f"Formulations disagree on {spec.name}: {deviation:.3e} > {cross_check:.1e}")
        raise FormulationMismatchError(deviation, cross_check)
    return HorizontalCurve(ts, ys[:, :m], u, h, truncated, deviation)
