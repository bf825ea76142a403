import numpy as np
import pytest

from subriemann.Connectivity import (
    MultiIndex, Segment, BrokenGeodesic, commutator_flow, commutator_remainder, leg_count, adapted_frame,
    F_map, steer, dh_upper, dc_lower, segment_count, ballbox_probe, scale_params, unscale_params,
)
from subriemann.Geometry import growth_vector, GrowthVector
from subriemann.StructureSpec import parse_model
from subriemann.Models import builtin, heisenberg_dc, carnot_dilate
from subriemann.core.exceptions import RankDeficitError

COARSE = 5e-2

def test_multi_index():
    I = MultiIndex.parse("(1,2)")
    assert I.entries == (1, 2)
    assert I.weight == 2
    assert str(I) == "(1,2)"
    assert I.swapped() == MultiIndex((2, 1))
    assert MultiIndex((1,)).swapped() == MultiIndex((1,))
    with pytest.raises(ValueError):
        MultiIndex(())
    with pytest.raises(ValueError):
        MultiIndex((0, 1))

def test_leg_count():
    assert [leg_count(r) for r in (1, 2, 3, 4)] == [1, 4, 10, 22]

def test_commutator_flow_heisenberg(heisenberg1):
    end, plan = commutator_flow(heisenberg1, MultiIndex((1, 2)), 0.1, [0, 0, 0], COARSE)
    assert np.allclose(end, [0, 0, -0.01], rtol=0, atol=1e-9)
    assert len(plan) == 4
    assert plan.length == pytest.approx(0.4)
    end, plan = commutator_flow(heisenberg1, (1,), 0.3, [0, 0, 0], COARSE)
    assert np.allclose(end, [0.3, 0, 0])
    assert len(plan) == 1
    end, _ = commutator_flow(heisenberg1, MultiIndex((1, 2)), -0.1, [0, 0, 0], COARSE)
    assert np.allclose(end, [0, 0, 0.01], rtol=0, atol=1e-9)

def test_commutator_remainder(heisenberg1, engel):
    assert commutator_remainder(heisenberg1, MultiIndex((1, 2)), 0.2, [0.3, -0.1, 0.5], COARSE) <= 1e-12
    assert commutator_remainder(engel, MultiIndex((1, 1, 2)), 0.2, [0, 0, 0, 0], COARSE) <= 1e-12
    r1 = commutator_remainder(engel, MultiIndex((1, 2)), 0.1, [0, 0, 0, 0], 1e-2)
    r2 = commutator_remainder(engel, MultiIndex((1, 2)), 0.05, [0, 0, 0, 0], 1e-2)
    assert np.log2(r1 / r2) >= 2.8

def test_adapted_frame(heisenberg1, heisenberg2, engel):
    f = adapted_frame(heisenberg1, [0, 0, 0])
    assert [str(I) for I in f.indices] == ["(1)", "(2)", "(1,2)"]
    assert f.weights == (1, 1, 2)
    f = adapted_frame(engel, [0, 0, 0, 0])
    assert [str(I) for I in f.indices] == ["(1)", "(2)", "(1,2)", "(1,1,2)"]
    assert f.weights == (1, 1, 2, 3)
    f = adapted_frame(heisenberg2, [0] * 5)
    assert [str(I) for I in f.indices] == ["(1)", "(2)", "(3)", "(4)", "(1,3)"]

def test_adapted_frame_rank_deficit():
    flat = parse_model({
        'name': 'flat', 'coords': ['x', 'y', 't'],
        'horizontal': [['1', '0', '0'], ['0', '1', '0']],
        'vertical': [['0', '0', '1']],
        'domain': [[-1, 1], [-1, 1], [-1, 1]],
    })
    with pytest.raises(RankDeficitError):
        adapted_frame(flat, [0, 0, 0])

def test_F_map(heisenberg1):
    assert np.allclose(F_map(heisenberg1, [0, 0, 0], [1, 0, 0], COARSE)[0], [1, 0, 0])
    assert np.allclose(F_map(heisenberg1, [0, 0, 0], [0, 0, 0.2], COARSE)[0], [0, 0, -0.04], atol=1e-12)
    assert np.allclose(F_map(heisenberg1, [0, 0, 0], [0, 0, -0.2], COARSE)[0], [0, 0, 0.04], atol=1e-12)

def test_scaled_params():
    w = (1, 1, 2)
    s = scale_params([0.5, -0.5, -0.2], w)
    assert np.allclose(s, [0.5, -0.5, -0.04])
    assert np.allclose(unscale_params(s, w), [0.5, -0.5, -0.2])

def test_steer(heisenberg1, engel):
    plan = steer(heisenberg1, [0, 0, 0], [0, 0, -0.04], step=COARSE)
    assert plan.notes['residual'] <= 1e-6
    assert plan.notes['converged']
    assert np.allclose(plan.notes['params'], [0, 0, 0.2], atol=1e-6)

    plan = steer(heisenberg1, [0.1, 0.2, 0.3], [0.1, 0.2, 0.3], step=COARSE)
    assert plan.length == 0.0
    assert len(plan) == 0

    rng = np.random.default_rng(5)
    for _ in range(3):
        q = engel.sample_point(rng, shrink=0.25)
        plan = steer(engel, [0, 0, 0, 0], q, step=COARSE)
        assert plan.notes['residual'] <= 1e-6
        assert np.linalg.norm(plan.endpoint - q) <= 1e-6

def test_steer_iteration_allowance(heisenberg1):
    plan = steer(heisenberg1, [0, 0, 0], [0.5, 0.3, 0], step=1e-2)
    assert plan.notes["residual"] <= 1e-6
    assert plan.notes["iterations"] <= 50
    rng = np.random.default_rng(9)
    for _ in range(10):
        q = heisenberg1.sample_point(rng, shrink=0.5)
        plan = steer(heisenberg1, [0, 0, 0], q, step=COARSE)
        assert plan.notes["converged"]
        assert plan.notes["iterations"] <= 50
    for maxiter in (1, 2, 3):
        plan = steer(heisenberg1, [0, 0, 0], [0.9, -0.8, 0.7], maxiter=maxiter, step=COARSE)
        assert plan.notes["iterations"] <= maxiter
    assert steer(heisenberg1, [0, 0, 0], [0.1, 0, 0], maxiter=0, step=COARSE).notes["iterations"] == 0

def test_dh_upper(heisenberg1):
    assert dh_upper(heisenberg1, [0, 0, 0], [1, 0, 0], restarts=0, step=COARSE).length <= 1.0 + 1e-3
    bound = dh_upper(heisenberg1, [0, 0, 0], [1, 1, 0], segments_budget=4, restarts=1, step=COARSE)
    assert bound.length <= 2 ** 0.5 + 1e-3
    assert np.linalg.norm(bound.plan.endpoint - [1, 1, 0]) <= 1e-6
    assert dh_upper(heisenberg1, [0, 0, 0], [0, 0, 1], segments_budget=4, restarts=0, step=COARSE).length <= 4.01
    assert dh_upper(heisenberg1, [0.2, 0.1, 0], [0.2, 0.1, 0]).length == 0.0

def test_dh_upper_budget_monotone(heisenberg1):
    p, q = [0, 0, 0], [0.3, 0.2, 0.1]
    small = dh_upper(heisenberg1, p, q, segments_budget=4, restarts=1, step=COARSE)
    large = dh_upper(heisenberg1, p, q, segments_budget=8, restarts=1, step=COARSE)
    assert large.length <= small.length + 1e-12

def test_dh_upper_infeasible_budget(heisenberg1):
    bound = dh_upper(heisenberg1, [0, 0, 0], [0.5, 0.5, 0.3], segments_budget=1, restarts=0, step=COARSE)
    assert bound.plan.notes['infeasible_budget']
    assert bound.length == pytest.approx(bound.plan.notes['steer_length'])

def test_dc_lower(heisenberg1):
    assert 0.0 < dc_lower(heisenberg1, [0, 0, 0], [1, 0, 0]) <= 1.0
    assert dc_lower(heisenberg1, [0.1, 0.1, 0.1], [0.1, 0.1, 0.1]) == 0.0
    assert 0.0 < dc_lower(heisenberg1, [0, 0, 0], [0, 0, 1]) <= 2 * np.sqrt(np.pi)

def test_segment_count():
    assert segment_count(GrowthVector((2, 3), 1e-9, True, 3)) == (9, 6)
    assert segment_count(GrowthVector((2, 3, 4), 1e-9, True, 4)) == (20, 16)
    assert segment_count(GrowthVector((10, 11), 1e-9, True, 6))[0] == 2 * 10 + 5

def test_ballbox_heisenberg(heisenberg1):
    report = ballbox_probe(heisenberg1, [0, 0, 0], 0.2, samples=30, step=COARSE, reach_samples=8)
    assert (report.formula_N, report.actual_N) == (9, 6)
    assert report.samples == 30
    assert report.inclusion_violations == 0
    assert report.reach_violations == 0
    assert report.outer_constant <= report.actual_N
    lines = report.to_csv().splitlines()
    assert lines[0] == "check,sample,dhat,max_param,violation"
    assert len(lines) == 1 + 30 + 8

def test_ballbox_engel(engel):
    gv = growth_vector(engel, [0, 0, 0, 0])
    report = ballbox_probe(engel, [0, 0, 0, 0], 0.1, samples=20, step=COARSE, reach_samples=0)
    assert report.formula_N == segment_count(gv)[0] == 20
    assert report.inclusion_violations == 0

def test_ballbox_degenerate(heisenberg1):
    report = ballbox_probe(heisenberg1, [0, 0, 0], 0.0)
    assert report.samples == 0
    assert report.rows == []
    assert report.to_dict()['inner_constant'] is None

def test_broken_geodesic_json(heisenberg1):
    plan = BrokenGeodesic.build(heisenberg1, [0, 0, 0], [Segment((1.0, 0.0), 0.5), Segment((0.0, 1.0), 0.5)], COARSE)
    assert np.allclose(plan.endpoint, [0.5, 0.5, -0.125])
    again = BrokenGeodesic.from_json(heisenberg1, plan.to_json(), COARSE)
    assert np.allclose(again.endpoint, plan.endpoint)
    assert again.length == plan.length
    assert len(plan.breaks) == 3

def test_compressed_merges_collinear_legs():
    plan = BrokenGeodesic(np.zeros(3), [Segment((1.0, 0.0), 0.2), Segment((1.0, 0.0), 0.3),
                                        Segment((0.0, 1.0), 0.0), Segment((0.0, 1.0), 0.1)], np.zeros(3))
    merged = plan.compressed()
    assert [s.length for s in merged] == pytest.approx([0.5, 0.1])

def test_dc_lower_high_dimension():
    spec = builtin("heisenberg-5")
    p = np.zeros(spec.m)
    q = np.zeros(spec.m)
    q[0] = 0.5
    assert 0.0 < dc_lower(spec, p, q) <= 0.5

def test_dh_upper_close_to_exact_distance(heisenberg1):
    rng = np.random.default_rng(3)
    ratios = []
    for _ in range(6):
        p, q = rng.uniform(-0.2, 0.2, size=(2, 3))
        bound = dh_upper(heisenberg1, p, q, segments_budget=6, restarts=1, step=COARSE)
        exact = heisenberg_dc(p, q)
        assert bound.length >= exact - 1e-4
        assert np.linalg.norm(bound.plan.endpoint - q) <= 1e-6
        ratios.append(bound.length / exact)
    assert np.median(ratios) <= 1.2

def test_dh_upper_under_dilation(heisenberg1):
    p, q = np.array([0.1, -0.1, 0.02]), np.array([-0.1, 0.15, -0.03])
    lam = 0.5
    base = dh_upper(heisenberg1, p, q, segments_budget=4, restarts=1, step=COARSE)
    # Carnot dilations map unit-speed legs to legs of the same direction and scaled length
    legs = [Segment(s.direction, lam * s.length) for s in base.plan.segments]
    dp, dq = carnot_dilate(heisenberg1, lam, p), carnot_dilate(heisenberg1, lam, q)
    dilated = BrokenGeodesic.build(heisenberg1, dp, legs, COARSE)
    assert np.linalg.norm(dilated.endpoint - dq) <= 1e-6
    assert dilated.length == pytest.approx(lam * base.length)
    scaled = dh_upper(heisenberg1, dp, dq, segments_budget=4, restarts=1, step=COARSE, warm=[dilated])
    assert scaled.length <= lam * base.length * (1 + 1e-2)
    assert scaled.length >= heisenberg_dc(dp, dq) - 1e-4
