import numpy as np
import pytest

from subriemann.Geometry import (
    lie_bracket, frame_matrix, structure_functions, growth_vector, project_horizontal,
    horizontality_defect,
)
from subriemann.Geodesics import nonholonomic_geodesic
from subriemann.Models import builtin, heisenberg_lift, PlanarPolyline
from subriemann.StructureSpec import parse_model
from subriemann.core.exceptions import DegenerateSamplingError

def test_frame_matrix(heisenberg1, engel):
    assert np.allclose(frame_matrix(heisenberg1, [0, 0, 0]), np.eye(3))
    A = frame_matrix(heisenberg1, [0, 1, 0])
    assert np.allclose(A[:, 0], [1, 0, 0.5])
    assert np.allclose(A[:, 1], [0, 1, 0])
    assert np.allclose(A[:, 2], [0, 0, 1])
    assert np.allclose(frame_matrix(engel, [0, 0, 0, 0]), np.eye(4))

def test_lie_bracket(heisenberg1, engel):
    X1, X2 = heisenberg1.frame.fields[0], heisenberg1.frame.fields[1]
    b = lie_bracket(X1, X2)
    assert np.allclose(b.evaluate([0.3, -0.7, 1.1]), [0, 0, -1])
    assert lie_bracket(X1, X1).is_zero
    E1, E2 = engel.frame.fields[0], engel.frame.fields[1]
    assert np.allclose(lie_bracket(E1, lie_bracket(E1, E2)).evaluate([0.5, 0.1, -0.3, 0.2]), [0, 0, 0, 1])

@pytest.mark.parametrize("name", ["perturbed-heisenberg", "engel", "heisenberg-2"])
def test_jacobi_identity(name):
    spec = builtin(name)
    fields = spec.frame.fields
    rng = np.random.default_rng(8)
    for a in range(spec.m):
        for b in range(a + 1, spec.m):
            for c in range(b + 1, spec.m):
                X, Y, Z = fields[a], fields[b], fields[c]
                J = [lie_bracket(X, lie_bracket(Y, Z)), lie_bracket(Y, lie_bracket(Z, X)),
                     lie_bracket(Z, lie_bracket(X, Y))]
                for _ in range(5):
                    p = spec.sample_point(rng)
                    assert np.allclose(sum(j.evaluate(p) for j in J), 0.0, atol=1e-10)

def test_structure_functions(heisenberg1, engel):
    c = structure_functions(heisenberg1, [0.4, -0.2, 0.9])
    assert c[0, 1, 2] == pytest.approx(-1.0)
    assert c[1, 0, 2] == pytest.approx(1.0)
    assert np.allclose(c[0, 1, :2], 0.0)
    for a in range(3):
        assert np.allclose(c[a, a], 0.0)
    assert structure_functions(engel, [0, 0, 0, 0])[0, 1, 2] == pytest.approx(1.0)

@pytest.mark.parametrize("name,point,dims", [
    ("heisenberg-1", [0, 0, 0], (2, 3)),
    ("engel", [0, 0, 0, 0], (2, 3, 4)),
    ("heisenberg-5", [0.3] * 11, (10, 11)),
])
def test_growth_vector(name, point, dims):
    gv = growth_vector(builtin(name), point)
    assert gv.dims == dims
    assert gv.bracket_generating

def test_growth_vector_not_bracket_generating():
    flat = parse_model({
        'name': 'flat', 'coords': ['x', 'y', 't'],
        'horizontal': [['1', '0', '0'], ['0', '1', '0']],
        'vertical': [['0', '0', '1']],
        'domain': [[-1, 1], [-1, 1], [-1, 1]],
    })
    gv = growth_vector(flat, [0, 0, 0])
    assert gv.dims == (2,)
    assert not gv.bracket_generating
    assert gv.verdict() == "degree exceeds bound"

def test_project_horizontal(heisenberg1):
    assert np.allclose(project_horizontal(heisenberg1, [0, 1, 0], [1, 0, 0.5]), [1, 0])
    assert np.allclose(project_horizontal(heisenberg1, [0, 0, 0], [0, 0, 1]), [0, 0])
    assert np.allclose(project_horizontal(heisenberg1, [0, 1, 0], [1, 0, 0]), [1, 0])

def test_horizontality_defect(heisenberg1):
    lift = heisenberg_lift(PlanarPolyline(np.array([[0.0, 0.0], [1.0, 0.0]])), [0, 0, 0])
    curve = lift.curves(heisenberg1, step=1e-2)[0]
    assert horizontality_defect(heisenberg1, curve) <= 1e-8
    s = np.linspace(0.0, 1.0, 11)
    vertical = np.stack([np.zeros_like(s), np.zeros_like(s), s], axis=1)
    assert horizontality_defect(heisenberg1, vertical, s) == pytest.approx(1.0)
    geo = nonholonomic_geodesic(heisenberg1, [0.2, -0.1, 0.0], [0.6, 0.8], 1.0, 1e-3)
    assert horizontality_defect(heisenberg1, geo) <= 10 * 1e-3

def test_horizontality_defect_degenerate(heisenberg1):
    pts = np.array([[0, 0, 0], [0, 0, 0], [1, 0, 0]], dtype=float)
    with pytest.raises(DegenerateSamplingError):
        horizontality_defect(heisenberg1, pts)
    with pytest.raises(DegenerateSamplingError):
        horizontality_defect(heisenberg1, pts[:1])
