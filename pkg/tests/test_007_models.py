import json

import numpy as np
import pytest

from subriemann.Models import (
    builtin, builtin_document, is_builtin, export_builtin, PlanarPolyline, heisenberg_area, heisenberg_lift,
    heisenberg_project, heisenberg_left_translate, heisenberg_plan, heisenberg_dc, carnot_dilate,
)
from subriemann.Connectivity import BrokenGeodesic
from subriemann.Geometry import growth_vector
from subriemann.core.exceptions import UnknownModelError, NotCarnotError, DegenerateSamplingError

SQUARE = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]], dtype=float)

def test_builtin_names():
    assert is_builtin("heisenberg-1")
    assert is_builtin("heisenberg-7")
    assert is_builtin("engel")
    assert not is_builtin("heisenberg-0")
    engel = builtin("engel")
    assert (engel.m, engel.k) == (4, 2)
    assert growth_vector(engel, [0.1, 0.2, 0.3, 0.4]).dims == (2, 3, 4)
    with pytest.raises(UnknownModelError):
        builtin_document("nope")

def test_export_builtin():
    doc = json.loads(export_builtin("heisenberg-1"))
    assert doc['coords'] == ['x', 'y', 't']
    assert doc['weights'] == [1, 1, 2]
    assert len(doc['horizontal']) == 2

def test_heisenberg_area():
    square = PlanarPolyline(SQUARE)
    assert heisenberg_area(square) == pytest.approx(-2.0)
    assert heisenberg_area(square.reversed()) == pytest.approx(2.0)
    assert heisenberg_area(PlanarPolyline(np.array([[-1.0, -2.0], [0.5, 1.0]]))) == pytest.approx(0.0, abs=1e-15)
    assert square.length == pytest.approx(4.0)

def test_polyline_validation():
    with pytest.raises(DegenerateSamplingError):
        PlanarPolyline(np.array([[0.0, 0.0]]))
    with pytest.raises(DegenerateSamplingError):
        PlanarPolyline(np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]]))

def test_heisenberg_lift(heisenberg1):
    lift = heisenberg_lift(PlanarPolyline(np.array([[0.0, 0.0], [1.0, 0.0]])), [0, 0, 0])
    assert np.allclose(lift.endpoint, [1, 0, 0])
    lift = heisenberg_lift(PlanarPolyline(SQUARE), [0, 0, 0])
    assert np.allclose(lift.endpoint, [0, 0, -1])
    assert lift.length == pytest.approx(4.0)
    # closed form agrees with integrating the legs
    rebuilt = lift.from_json(heisenberg1, lift.to_json(), step=5e-2)
    assert np.allclose(rebuilt.endpoint, lift.endpoint, atol=1e-12)
    with pytest.raises(ValueError):
        heisenberg_lift(PlanarPolyline(SQUARE), [0.5, 0, 0])

@pytest.mark.parametrize("name", ["heisenberg-1", "heisenberg-2"])
def test_lift_matches_integrated_legs(name):
    spec = builtin(name)
    n = spec.k // 2
    rng = np.random.default_rng(12)
    for _ in range(4):
        vertices = rng.uniform(-0.5, 0.5, size=(5, 2 * n))
        start = np.concatenate((vertices[0], rng.uniform(-0.2, 0.2, size=1)))
        lift = heisenberg_lift(PlanarPolyline(vertices), start)
        integrated = BrokenGeodesic.build(spec, start, lift.segments, step=1e-3)
        assert np.linalg.norm(integrated.endpoint - lift.endpoint) <= 1e-7
        assert np.allclose(integrated.breaks, lift.breaks, rtol=0, atol=1e-7)

def test_projection_and_translation():
    assert np.allclose(heisenberg_project([1, 2, 3]), [1, 2])
    p = np.array([0.3, -0.2, 0.7])
    assert np.allclose(heisenberg_left_translate(p, p), [0, 0, 0])

@pytest.mark.parametrize("q,ngon,length", [
    ([1, 0, 0], 16, 1.0),
    ([0, 0, 1], 4, 4.0),
    ([0, 0, 1], 16, 2 * np.sqrt(16 * np.tan(np.pi / 16))),
])
def test_heisenberg_plan(q, ngon, length):
    plan = heisenberg_plan([0, 0, 0], q, ngon)
    assert plan.length == pytest.approx(length, rel=1e-12)
    assert np.allclose(plan.endpoint, q, atol=1e-12)

def test_heisenberg_plan_reaches_generic_target(heisenberg1):
    p, q = np.array([0.1, -0.2, 0.05]), np.array([-0.3, 0.4, -0.2])
    plan = heisenberg_plan(p, q)
    rebuilt = plan.from_json(heisenberg1, plan.to_json(), step=5e-2)
    assert np.allclose(rebuilt.endpoint, q, atol=1e-9)
    with pytest.raises(ValueError):
        heisenberg_plan(p, q, ngon=2)

def test_heisenberg_dc():
    assert heisenberg_dc([0, 0, 0], [1, 0, 0]) == pytest.approx(1.0)
    assert heisenberg_dc([0, 0, 0], [0, 0, 1]) == pytest.approx(2 * np.sqrt(np.pi))
    assert heisenberg_dc([0, 0, 0], [1, 1, 0]) == pytest.approx(np.sqrt(2))
    assert heisenberg_dc([0.2, 0.1, 0.3], [0.2, 0.1, 0.3]) == 0.0

def test_heisenberg_dc_is_symmetric_and_left_invariant():
    p, q, g = np.array([0.1, 0.2, 0.3]), np.array([-0.4, 0.5, -0.1]), np.array([1.0, -0.5, 0.25])
    d = heisenberg_dc(p, q)
    assert heisenberg_dc(q, p) == pytest.approx(d, rel=1e-10)

    def mul(a, b):
        return np.array([a[0] + b[0], a[1] + b[1], a[2] + b[2] + 0.5 * (a[1] * b[0] - a[0] * b[1])])
    assert heisenberg_dc(mul(g, p), mul(g, q)) == pytest.approx(d, rel=1e-10)

def test_plan_oracle_ratio():
    oracle = heisenberg_dc([0, 0, 0], [0, 0, 1])
    assert heisenberg_plan([0, 0, 0], [0, 0, 1], 16).length / oracle <= 1.007
    assert heisenberg_plan([0, 0, 0], [0, 0, 1], 32).length / oracle <= 1.002

def test_dilation_homogeneity():
    p, q = np.array([0.1, 0.2, 0.3]), np.array([-0.2, 0.1, 0.05])
    d = heisenberg_dc(p, q)
    lam = 2.5
    scaled = heisenberg_dc(carnot_dilate("heisenberg-1", lam, p), carnot_dilate("heisenberg-1", lam, q))
    assert scaled == pytest.approx(lam * d, rel=1e-9)

def test_carnot_dilate(perturbed):
    assert np.allclose(carnot_dilate("heisenberg-1", 2, [1, 1, 1]), [2, 2, 4])
    assert np.allclose(carnot_dilate("heisenberg-1", 1, [0.3, -0.2, 0.7]), [0.3, -0.2, 0.7])
    assert np.allclose(carnot_dilate("engel", 3, [1, 0, 0, 1]), [3, 0, 0, 27])
    with pytest.raises(NotCarnotError):
        carnot_dilate(perturbed, 2, [1, 1, 1])
