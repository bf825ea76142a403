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

from typing import Optional, Sequence

class SubRiemannError(Exception):
    pass

class ExprSyntaxError(SubRiemannError):
    def __init__(self, offset: int, message: str):
        self.offset = offset
        self.message = message
        super().__init__(f'{message} at offset {offset}')

class ExprEvaluationError(SubRiemannError):
    pass

class ModelSchemaError(SubRiemannError):
    pass

class DimensionMismatchError(ModelSchemaError):
    pass

class UnknownModelError(SubRiemannError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f'unknown model: {name}')

class FrameDegeneracyError(SubRiemannError):
    def __init__(self, point: Sequence[float], message: Optional[str] = None):
        self.point = tuple(float(x) for x in point)
        super().__init__(message or f'frame degenerate at {list(self.point)}')

class SingularFrameError(FrameDegeneracyError):
    pass

class GeodesicBlowupError(SubRiemannError):
    pass

class SamplingMismatchError(SubRiemannError):
    pass

class DegenerateSamplingError(SubRiemannError):
    pass

class TransportError(SubRiemannError):
    pass

class RankDeficitError(SubRiemannError):
    pass

class NotCarnotError(SubRiemannError):
    pass

class ToleranceNotReachedError(SubRiemannError):
    pass

class FormulationMismatchError(ToleranceNotReachedError):
    def __init__(self, deviation: float, tol: float):
        self.deviation = deviation
        self.tol = tol
        super().__init__(f'constraint-form and frame geodesics differ by {deviation:.3e} (tolerance {tol:.1e})')

class UsageError(SubRiemannError):
    pass
