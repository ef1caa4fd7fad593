import math

import mpmath
import pytest
from hypothesis import given
from hypothesis import strategies as st

from grasplab.catalog import GelSpec, RigidObject2D
from grasplab.gelcontact import (
    NoContactError,
    Pose2D,
    PoseInput,
    bulge_alpha,
    contact_angle,
    gel_pose_for_depth,
    hertz_stiffness,
    normal_force_from_indentation,
    normal_force_gradient,
)
from grasplab.nailgrasp import ContactForces

GEL = GelSpec()
BLOCK = RigidObject2D("block", 10e-3, 10e-3, 10e-3, 1e-3)
OBJ_POSE = Pose2D(0.0, 5e-3, 0.0)


def _state(depth, lateral, obj=BLOCK, gel=GEL, pose=OBJ_POSE):
    return contact_angle(PoseInput(pose, gel_pose_for_depth(pose, obj, gel, depth, lateral)), gel, obj)


def test_tangent_contact_has_zero_angle_and_force():
    st_ = _state(0.0, 0.0)
    assert st_.contact_angle_theta == 0.0 and st_.normal_force == 0.0 and st_.indentation_depth == 0.0


def test_head_on_press_is_symmetric():
    st_ = _state(0.3e-3, 0.0)
    assert st_.contact_angle_theta == pytest.approx(0.0, abs=1e-12)
    # A sits on the gel-object symmetry axis (the face centre height)
    assert st_.contact_point_A[1] == pytest.approx(OBJ_POSE.y, abs=1e-12)
    assert st_.contact_point_A[0] == pytest.approx(-BLOCK.length_l / 2, abs=1e-12)


def _theta_oracle(depth, lateral, R=GEL.curvature_radius, half=BLOCK.height_h / 2, alpha=None):
    """Bisection on the resultant-direction equation, moments integrated in 40-digit arithmetic."""
    alpha = bulge_alpha(GEL) if alpha is None else alpha
    mp = mpmath.mp.clone()
    mp.dps = 40
    R_, d_ = mp.mpf(R), mp.mpf(depth)
    c = mp.sqrt(R_ * R_ - (R_ - d_) ** 2)
    lo = max(-mp.mpf(half) + mp.mpf(lateral), -c)
    hi = min(mp.mpf(half) + mp.mpf(lateral), c)
    pressure = lambda u: mp.sqrt(R_ * R_ - u * u) - (R_ - d_)
    mu = mp.quad(lambda u: pressure(u) * u, [lo, hi])
    mn = mp.quad(lambda u: pressure(u) * mp.sqrt(R_ * R_ - u * u), [lo, hi])
    f = lambda t: mp.sin(t) * mn - mp.cos(t) * abs(mu)
    a, b = mp.mpf(0), mp.pi / 2
    for _ in range(120):
        m = (a + b) / 2
        if f(m) > 0:
            b = m
        else:
            a = m
    return float((a + b) / 2 * (1 + mp.mpf(alpha) * d_ / R_))


def test_offset_press_matches_bisection_oracle():
    got = _state(0.5e-3, 3e-3).contact_angle_theta
    assert got > 0
    assert got == pytest.approx(_theta_oracle(0.5e-3, 3e-3), rel=1e-9)


@given(st.floats(1e-5, 2e-3), st.floats(-4.5e-3, 4.5e-3))
def test_theta_oracle_sweep(depth, lateral):
    got = _state(depth, lateral).contact_angle_theta
    assert got == pytest.approx(_theta_oracle(depth, lateral), rel=1e-8, abs=1e-12)


def test_force_law_examples():
    assert normal_force_from_indentation(0.0, GEL) == 0.0
    d = 0.4e-3
    assert normal_force_from_indentation(2 * d, GEL) > 2 * normal_force_from_indentation(d, GEL)
    k1 = mpmath.mpf(32) / 3 * mpmath.mpf(GEL.yeoh_coefficients_Cfem[0]) * mpmath.sqrt(mpmath.mpf(GEL.curvature_radius))
    want = k1 * mpmath.mpf(1e-3) ** mpmath.mpf(1.5)
    assert normal_force_from_indentation(1e-3, GEL) == pytest.approx(float(want), rel=1e-14)
    assert hertz_stiffness(GEL) == pytest.approx(float(k1), rel=1e-15)


def test_negative_depth_rejected():
    with pytest.raises(ValueError):
        normal_force_from_indentation(-1e-6, GEL)
    with pytest.raises(ValueError):
        normal_force_gradient(-1e-6, GEL)


def test_gradient_matches_central_differences():
    for i in range(200):
        d = 1e-5 * (2e-3 / 1e-5) ** (i / 199)
        h = 1e-4 * d
        fd = (normal_force_from_indentation(d + h, GEL) - normal_force_from_indentation(d - h, GEL)) / (2 * h)
        assert normal_force_gradient(d, GEL) == pytest.approx(fd, rel=1e-6)


def _theta_sweep(depth, n=801, span=4.5e-3):
    xs = [-span + 2 * span * i / (n - 1) for i in range(n)]
    return xs, [_state(depth, x).contact_angle_theta for x in xs]


@pytest.mark.parametrize("depth", [0.1e-3, 0.5e-3, 1.5e-3])
def test_theta_continuous_and_monotone_in_offset(depth):
    xs, th = _theta_sweep(depth)
    jumps = [abs(b - a) for a, b in zip(th, th[1:])]
    for i in range(1, len(jumps) - 1):
        local = max(jumps[i - 1], jumps[i + 1], 1e-9)
        assert jumps[i] <= 10 * local
    # magnitude grows with distance from the symmetric pose
    right = [t for x, t in zip(xs, th) if x >= 0]
    left = [t for x, t in zip(xs, th) if x <= 0][::-1]
    for side in (right, left):
        assert all(b >= a - 1e-15 for a, b in zip(side, side[1:]))


def test_no_contact_errors():
    pose = OBJ_POSE
    far = gel_pose_for_depth(pose, BLOCK, GEL, -1e-4, 0.0)
    with pytest.raises(NoContactError):
        contact_angle(PoseInput(pose, far), GEL, BLOCK)
    miss = gel_pose_for_depth(pose, BLOCK, GEL, 0.1e-3, 12e-3)
    with pytest.raises(NoContactError):
        contact_angle(PoseInput(pose, miss), GEL, BLOCK)


@given(st.floats(1e-6, 2e-3), st.floats(-4e-3, 4e-3), st.floats(-math.pi, math.pi))
def test_state_invariants_and_rotation_invariance(depth, lateral, phi):
    base = _state(depth, lateral)
    rotated_pose = Pose2D(1e-3, 2e-3, phi)
    rot = _state(depth, lateral, pose=rotated_pose)
    assert 0 <= base.contact_angle_theta < math.pi / 2
    assert base.normal_force >= 0 and base.indentation_depth >= 0
    assert rot.contact_angle_theta == pytest.approx(base.contact_angle_theta, rel=1e-9, abs=1e-12)
    assert rot.normal_force == pytest.approx(base.normal_force, rel=1e-9)


@given(st.floats(1e-6, 2e-3), st.floats(-4e-3, 4e-3))
def test_point_a_migration_is_bounded(depth, lateral):
    s = _state(depth, lateral)
    # A stays on the face, inside the clipped contact patch
    c = math.sqrt(GEL.curvature_radius**2 - (GEL.curvature_radius - depth) ** 2)
    y = s.contact_point_A[1] - OBJ_POSE.y
    lo, hi = max(-BLOCK.height_h / 2, lateral - c), min(BLOCK.height_h / 2, lateral + c)
    assert lo - 1e-15 <= y <= hi + 1e-15
    assert s.contact_point_A[0] == pytest.approx(-BLOCK.length_l / 2, abs=1e-15)


def test_stiffer_gel_bulges_less():
    soft = GelSpec(yeoh_coefficients_Cfem=(0.05e6, 0.02e6, 0.001e6))
    hard = GelSpec(yeoh_coefficients_Cfem=(0.3e6, 0.02e6, 0.001e6))
    a = _state(0.5e-3, 3e-3, gel=soft).contact_angle_theta
    b = _state(0.5e-3, 3e-3, gel=hard).contact_angle_theta
    assert a > b


@given(st.floats(1e-6, 2e-3), st.floats(-4e-3, 4e-3))
def test_emitted_force_sets_satisfy_tangent_identity(depth, lateral):
    s = _state(depth, lateral)
    F_sx = s.normal_force * math.cos(s.contact_angle_theta)
    f = ContactForces.from_gel(F_sx, s.contact_angle_theta, 0.01, 0.005, 0.3e-3)
    assert abs(f.F_sy - f.F_sx * math.tan(s.contact_angle_theta)) <= 1e-12 * max(abs(f.F_sy), 1e-300)
