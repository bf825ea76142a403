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

import numpy as np

_MASK = (1 << 64) - 1

def stream(seed: int, index: int = 0) -> np.random.Generator:
    """Counter-based stream for sample ``index`` of a run seeded with ``seed``."""
    key = ((int(seed) & _MASK) << 64) | (int(index) & _MASK)
    return np.random.Generator(np.random.Philox(key=key))
