import numpy as np
import pytest

from subriemann.Connection import (
    christoffels, horizontal_gradient, horizontal_divergence, horizontal_hessian, sublaplacian,
    hessian_representation_defect, covariant_derivative_along, parallel_transport,
)
from subriemann.FieldExpr import parse_expression
from subriemann.Geodesics import nonholonomic_geodesic
from subriemann.core.exceptions import SamplingMismatchError

P = parse_expression

def test_carnot_horizontal_christoffels_vanish(heisenberg1, heisenberg2, engel):
    rng = np.random.default_rng(3)
    for spec in (heisenberg1, heisenberg2, engel):
        for _ in range(20):
            table = christoffels(spec, spec.sample_point(rng))
            assert np.max(np.abs(table.horizontal)) <= 1e-12

def test_perturbed_christoffels(perturbed):
    table = christoffels(perturbed, [0.0, 1.0, 0.0])
    assert np.max(np.abs(table.horizontal)) > 0.1
    assert table.full.shape == (3, 3, 3)
    # metric compatibility: Gamma^c_ab = -Gamma^b_ac
    assert np.allclose(table.full, -table.full.transpose(0, 2, 1), atol=1e-12)

def test_connection_torsion_and_compatibility(perturbed, engel):
    rng = np.random.default_rng(6)
    for spec in (perturbed, engel):
        for _ in range(10):
            p = spec.sample_point(rng)
            G = spec.frame.christoffel(p)
            c = spec.frame.structure(p)
            assert np.allclose(G - G.transpose(1, 0, 2), c, atol=1e-12)
            assert np.allclose(G, -G.transpose(0, 2, 1), atol=1e-12)

def test_horizontal_gradient(heisenberg1):
    assert np.allclose(horizontal_gradient(heisenberg1, P("x"), [0.3, -1.2, 0.7]), [1, 0])
    assert np.allclose(horizontal_gradient(heisenberg1, P("t"), [0, 1, 0]), [0.5, 0])
    assert np.allclose(horizontal_gradient(heisenberg1, P("3"), [0.1, 0.2, 0.3]), [0, 0])

def test_horizontal_divergence(heisenberg1, engel):
    p = [0.4, -0.3, 0.2]
    assert horizontal_divergence(heisenberg1, [P("x"), P("y")], p) == pytest.approx(2.0)
    assert horizontal_divergence(heisenberg1, [P("y"), P("0")], p) == pytest.approx(0.0, abs=1e-14)
    assert horizontal_divergence(engel, [P("1"), P("-2")], [0.1, 0.2, 0.3, 0.4]) == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(SamplingMismatchError):
        horizontal_divergence(heisenberg1, [P("x")], p)

def test_sublaplacian(heisenberg1):
    f = P("x^2 + y^2")
    for p in ([0, 0, 0], [1.0, -0.5, 1.5]):
        assert sublaplacian(heisenberg1, f, p) == pytest.approx(4.0)
    assert sublaplacian(heisenberg1, P("x^2 + y^2 + t^2"), [1, 1, 0]) == pytest.approx(5.0)
    assert sublaplacian(heisenberg1, P("t"), [0.7, 0.2, -0.4]) == pytest.approx(0.0, abs=1e-14)

def test_horizontal_hessian(heisenberg1):
    p = [0.5, -0.25, 0.1]
    assert np.allclose(horizontal_hessian(heisenberg1, P("t"), p).matrix, np.zeros((2, 2)), atol=1e-14)
    assert np.allclose(horizontal_hessian(heisenberg1, P("x^2 + y^2"), p).matrix, 2 * np.eye(2))
    assert np.allclose(horizontal_hessian(heisenberg1, P("x^2 - y^2"), p).matrix, np.diag([2.0, -2.0]))

@pytest.mark.parametrize("text", ["x^2 + y^2 + t^2", "x*t - sin(y)", "exp(t/3)*x"])
def test_hessian_representation(heisenberg1, perturbed, text):
    p = [0.3, 0.4, -0.2]
    assert hessian_representation_defect(heisenberg1, P(text), p) <= 1e-10
    assert hessian_representation_defect(perturbed, P(text), p) <= 1e-10

def test_covariant_derivative_flat(heisenberg1):
    curve = nonholonomic_geodesic(heisenberg1, [0, 0, 0], [1, 0], 1.0, 1e-2)
    const = np.tile([0.3, -0.7], (len(curve.t), 1))
    assert np.allclose(covariant_derivative_along(heisenberg1, curve, const), 0.0)
    ramp = np.stack([curve.t, np.zeros_like(curve.t)], axis=1)
    assert np.allclose(covariant_derivative_along(heisenberg1, curve, ramp), [1.0, 0.0])
    with pytest.raises(SamplingMismatchError):
        covariant_derivative_along(heisenberg1, curve, const[:-1])

def test_covariant_derivative_of_velocity(perturbed):
    step = 1e-3
    curve = nonholonomic_geodesic(perturbed, [0.1, 0.5, 0.0], [0.6, 0.8], 1.0, step)
    D = covariant_derivative_along(perturbed, curve, curve.u)
    assert np.max(np.linalg.norm(D, axis=1)) <= 10 * step

def test_parallel_transport(heisenberg1, perturbed):
    curve = nonholonomic_geodesic(heisenberg1, [0, 0, 0], [0.6, 0.8], 1.0, 1e-2)
    assert np.allclose(parallel_transport(heisenberg1, curve, [0.2, 0.9]), [0.2, 0.9])

    curve = nonholonomic_geodesic(perturbed, [0.1, 0.5, 0.0], [0.6, 0.8], 1.0, 1e-3)
    Y = parallel_transport(perturbed, curve, [1.0, 0.0])
    assert np.linalg.norm(Y) == pytest.approx(1.0, abs=1e-8)
    assert np.allclose(parallel_transport(perturbed, curve, curve.u[0]), curve.u[-1], atol=1e-7)
    with pytest.raises(SamplingMismatchError):
        parallel_transport(perturbed, curve, [1.0, 0.0, 0.0])
