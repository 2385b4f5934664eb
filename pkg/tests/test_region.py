import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from macopt.battery import DischargeModel, UserParams
from macopt.region import (RatePoint, RegionBoundary, boundary_arc, containment_gap, corner_peer_max,
                           hybrid_region, noma_region, single_user_caps, sum_segment_point,
                           tdma_region, trace_region, upper_envelope)
from macopt.two_user import TwoUserInstance, hybrid_sum_rate

from .conftest import LN2, ref_user


@pytest.fixture(scope="module")
def region_r03():
    inst = TwoUserInstance.symmetric(ref_user(0.3))
    return inst, hybrid_region(inst, n_arc_points=8)


def test_corner_points(region_r03):
    inst, reg = region_r03
    pts = reg.to_bits().points
    A, B = pts[reg.labels["A"]], pts[reg.labels["B"]]
    C, D = pts[reg.labels["C"]], pts[reg.labels["D"]]
    assert B == pytest.approx([0.521305, 0.606618], abs=1e-5)
    assert A == pytest.approx([0.467418, 0.637947], abs=1e-5)
    # identical users: the boundary is its own mirror image
    assert C == pytest.approx(B[::-1], abs=1e-9)
    assert D == pytest.approx(A[::-1], abs=1e-9)


def test_boundary_shape(region_r03):
    _, reg = region_r03
    assert reg.is_monotone()
    assert reg.concavity_defect() <= 1e-9
    assert reg.max_sum() / LN2 == pytest.approx(1.127923, abs=1e-5)


def test_symmetric_polyline(region_r03):
    _, reg = region_r03
    p = reg.points
    # mirroring swaps the ends, so the reversed mirror must match vertex for vertex
    assert p[::-1, ::-1] == pytest.approx(p, abs=1e-9)


def test_segment_sum_constant():
    inst = TwoUserInstance.symmetric(ref_user(0.3))
    h, alloc, _ = hybrid_sum_rate(inst)
    sums = [sum_segment_point(inst, alloc, a).total for a in np.linspace(0, 1, 9)]
    assert np.ptp(sums) < 1e-12
    assert sums[0] == pytest.approx(h)
    with pytest.raises(ValueError):
        sum_segment_point(inst, alloc, 1.5)


def test_noma_corner_r05():
    inst = TwoUserInstance.symmetric(ref_user(0.5))
    reg = noma_region(inst).to_bits()
    assert reg.points[reg.labels["corner2"]] == pytest.approx([0.364156, 0.488286], abs=1e-6)


def test_arc_weighted_sums_decrease():
    inst = TwoUserInstance.symmetric(ref_user(0.3))
    _, alloc, _ = hybrid_sum_rate(inst)
    B = sum_segment_point(inst, alloc, 1.0)
    A = corner_peer_max(inst, 1)
    targets = np.linspace(B.r2, A.r2, 6)[1:-1]
    arc = boundary_arc(inst, 1, targets, start=B, end=A)
    assert [p.r2 for p in arc] == pytest.approx(list(targets), abs=1e-7)
    totals = [B.total] + [p.total for p in sorted(arc, key=lambda p: p.r2)] + [A.total]
    assert all(b <= a + 1e-9 for a, b in zip(totals, totals[1:]))


@pytest.mark.parametrize("r", [0.3, 0.5])
def test_containment(r):
    inst = TwoUserInstance.symmetric(ref_user(r))
    hyb = hybrid_region(inst, n_arc_points=6)
    for inner in (noma_region(inst), tdma_region(inst)):
        assert containment_gap(hyb, inner) <= 1e-9


def test_caps_are_axis_intercepts(region_r03):
    inst, reg = region_r03
    c1, c2 = single_user_caps(inst)
    assert reg.points[0] == pytest.approx([0.0, c2])
    assert reg.points[-1] == pytest.approx([c1, 0.0])


def test_asymmetric_region():
    u2 = UserParams(0.8, 0.3, DischargeModel.quadratic(0.6))
    inst = TwoUserInstance((ref_user(0.2), u2), 1.0)
    reg = trace_region(inst, 5)
    assert reg.is_monotone() and reg.concavity_defect() <= 1e-9
    assert reg.max_sum() == pytest.approx(hybrid_sum_rate(inst)[0], abs=1e-7)
    assert containment_gap(reg, tdma_region(inst)) <= 1e-9


pts2 = st.lists(st.tuples(st.floats(0, 5), st.floats(0, 5)), min_size=1, max_size=30)


@given(pts2)
def test_envelope_dominates_cloud(cloud):
    arr = np.array(cloud)
    verts, nearest = upper_envelope(arr)
    assert nearest.shape == (arr.shape[0],)
    assert np.all(np.diff(verts[:, 0]) >= -1e-12)
    assert np.all(np.diff(verts[:, 1]) <= 1e-12)
    env = RegionBoundary(verts)
    for x, y in arr:
        assert x <= verts[-1, 0] + 1e-12
        if x < verts[0, 0]:
            assert y <= verts[0, 1] + 1e-12
        else:
            assert env.r2_at(x) >= y - 1e-9


def test_rate_point_validation():
    with pytest.raises(ValueError):
        RatePoint(-1.0, 0.0)
    assert RatePoint(1.0, 2.0).swapped() == RatePoint(2.0, 1.0)
