import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slameval.errors import ArgumentError, FormatError, OutOfRangeError
from slameval.geometry import (AssociationPolicy, PoseSE3, Trajectory, associate, compose,
                               interpolate_pose, inverse, quat_from_axis_angle, slerp,
                               trajectory_length)

IDENTITY = PoseSE3.identity()
finite = st.floats(-100, 100, allow_nan=False)
quat_comp = st.floats(-1, 1, allow_nan=False)


@st.composite
def poses(draw):
    q = [draw(quat_comp) for _ in range(4)]
    if np.linalg.norm(q) < 1e-3:
        q = [0.0, 0.0, 0.0, 1.0]
    return PoseSE3(q, [draw(finite) for _ in range(3)])


def test_compose_identity():
    assert compose(IDENTITY, IDENTITY).isclose(IDENTITY, 0.0)


def test_compose_pure_translations():
    p = compose(PoseSE3.from_translation(1, 0, 0), PoseSE3.from_translation(0, 2, 0))
    assert p.isclose(PoseSE3.from_translation(1, 2, 0), 0.0)


def test_compose_order():
    rz = PoseSE3(quat_from_axis_angle([0, 0, 1], math.pi / 2))
    tx = PoseSE3.from_translation(1, 0, 0)
    # rotate after translating: (1,0,0) -> (0,1,0)
    assert np.allclose(compose(rz, tx).translation, [0, 1, 0], atol=1e-15)
    assert np.allclose(compose(tx, rz).translation, [1, 0, 0], atol=1e-15)


def test_inverse_examples():
    assert inverse(IDENTITY).isclose(IDENTITY, 0.0)
    assert inverse(PoseSE3.from_translation(1, -2, 3)).isclose(PoseSE3.from_translation(-1, 2, -3), 0.0)
    rz = PoseSE3(quat_from_axis_angle([0, 0, 1], math.pi / 2))
    assert inverse(rz).isclose(PoseSE3(quat_from_axis_angle([0, 0, 1], -math.pi / 2)), 1e-15)


@given(poses())
def test_compose_with_inverse_is_identity(p):
    assert compose(p, inverse(p)).isclose(IDENTITY, 1e-12 * max(1.0, np.abs(p.translation).max()))
    assert compose(inverse(p), p).isclose(IDENTITY, 1e-12 * max(1.0, np.abs(p.translation).max()))


@given(poses(), poses(), poses())
def test_compose_associative(a, b, c):
    left = compose(compose(a, b), c)
    right = compose(a, compose(b, c))
    assert left.isclose(right, 1e-9)


def test_pose_rejects_bad_input():
    with pytest.raises(ArgumentError):
        PoseSE3([0, 0, 0, 0])
    with pytest.raises(ArgumentError):
        PoseSE3([0, 0, 0, 1], [np.nan, 0, 0])


def test_pose_is_normalized_and_immutable():
    p = PoseSE3([0, 0, 0, 2.0], [1, 2, 3])
    assert abs(np.linalg.norm(p.rotation) - 1) < 1e-15
    with pytest.raises(ValueError):
        p.translation[0] = 5


def test_trajectory_requires_increasing_timestamps():
    with pytest.raises(FormatError):
        Trajectory([0.0, 1.0, 1.0])
    with pytest.raises(FormatError):
        Trajectory([0.0, 2.0, 1.0])
    assert len(Trajectory()) == 0


# association -------------------------------------------------------------

def stamps(ts):
    return Trajectory(ts, np.zeros((len(ts), 3)))


def test_associate_drops_pairs_beyond_tolerance():
    m = associate(stamps([0.0, 1.0, 2.0]), stamps([0.01, 1.05, 1.98]), AssociationPolicy(0.02))
    assert m.timestamps.tolist() == [0.0, 2.0]
    assert m.unmatched_est == 1
    assert m.unmatched_gt == 1


def test_associate_identical_timestamps():
    ts = np.arange(20) * 0.033
    m = associate(stamps(ts), stamps(ts))
    assert len(m) == 20 and m.unmatched_est == 0 and m.unmatched_gt == 0


def test_associate_nothing_in_range():
    m = associate(stamps([0.0]), stamps([5.0]), AssociationPolicy(0.02))
    assert len(m) == 0 and m.unmatched_est == 1


def test_associate_one_to_one_and_tie_to_earlier_gt():
    est = Trajectory([1.0], [[0, 0, 0]])
    gt = Trajectory([0.99, 1.01], [[1, 0, 0], [2, 0, 0]])
    m = associate(est, gt, AssociationPolicy(0.02))
    assert len(m) == 1
    assert m.gt_positions[0].tolist() == [1, 0, 0]
    # two estimates competing for one gt sample: the closer one wins
    est = Trajectory([0.99, 1.005], np.zeros((2, 3)))
    gt = Trajectory([1.0], [[0, 0, 0]])
    m = associate(est, gt, AssociationPolicy(0.02))
    assert m.timestamps.tolist() == [1.005]


def test_associate_pairs_ordered_and_within_tolerance(rng):
    e = np.sort(rng.uniform(0, 10, 200))
    g = np.sort(rng.uniform(0, 10, 300))
    # encode each gt timestamp in its x coordinate to recover the partner
    m = associate(stamps(e), Trajectory(g, np.c_[g, np.zeros((300, 2))]), AssociationPolicy(0.05))
    assert np.all(np.diff(m.timestamps) > 0)
    assert np.all(np.abs(m.timestamps - m.gt_positions[:, 0]) <= 0.05 + 1e-9)
    assert len(set(m.gt_positions[:, 0].tolist())) == len(m)


@settings(max_examples=60)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=40, unique=True),
       st.lists(st.floats(0, 10), min_size=1, max_size=40, unique=True),
       st.floats(0.01, 0.5))
def test_associate_count_symmetric(a, b, tol):
    a, b = sorted(a), sorted(b)
    pol = AssociationPolicy(tol)
    m1 = associate(stamps(a), stamps(b), pol)
    m2 = associate(stamps(b), stamps(a), pol)
    assert len(m1) == len(m2)
    assert m1.unmatched_est == len(a) - len(m1)


def test_associate_interpolate():
    gt = Trajectory([0.0, 1.0], [[0, 0, 0], [2, 0, 0]])
    est = Trajectory([0.0, 0.01, 0.5, 2.0], np.zeros((4, 3)))
    m = associate(est, gt, AssociationPolicy(0.02, "interpolate"))
    # 0.5 is 0.5 s from either sample: too far; 2.0 is outside the span
    assert m.timestamps.tolist() == [0.0, 0.01]
    assert np.allclose(m.gt_positions[1], [0.02, 0, 0])
    m = associate(est, gt, AssociationPolicy(0.6, "interpolate"))
    assert np.allclose(m.gt_positions[2], [1.0, 0, 0])


# interpolation -----------------------------------------------------------

def test_interpolate_at_sample_is_exact(rng):
    q = [quat_from_axis_angle(rng.normal(size=3), rng.uniform(0, 3)) for _ in range(5)]
    tr = Trajectory(np.arange(5.0), rng.normal(size=(5, 3)), q)
    for i in range(5):
        p = interpolate_pose(tr, float(i))
        assert np.array_equal(p.translation, tr.positions[i])
        assert np.array_equal(p.rotation, tr.quaternions[i])


def test_interpolate_midpoint_translation():
    tr = Trajectory([0.0, 1.0], [[0, 0, 0], [2, 0, 0]])
    assert np.allclose(interpolate_pose(tr, 0.5).translation, [1, 0, 0], atol=0)


def test_interpolate_midpoint_rotation_matches_axis_angle():
    qz90 = quat_from_axis_angle([0, 0, 1], math.pi / 2)
    tr = Trajectory([0.0, 1.0], np.zeros((2, 3)), [[0, 0, 0, 1], qz90])
    q = interpolate_pose(tr, 0.5).rotation
    # closed form for 45 degrees about z: (0, 0, sin(pi/8), cos(pi/8))
    expected = np.array([0, 0, math.sin(math.pi / 8), math.cos(math.pi / 8)])
    assert np.max(np.abs(q - expected)) < 1e-9


def test_interpolate_out_of_range():
    tr = Trajectory([0.0, 1.0])
    with pytest.raises(OutOfRangeError):
        interpolate_pose(tr, 1.5)
    with pytest.raises(OutOfRangeError):
        interpolate_pose(tr, -0.1)


@given(st.floats(0, 1))
def test_interpolated_translation_on_segment(u):
    a, b = np.array([1.0, -2.0, 0.5]), np.array([4.0, 2.0, -1.5])
    tr = Trajectory([10.0, 11.0], [a, b])
    p = interpolate_pose(tr, 10.0 + u).translation
    d = b - a
    s = np.dot(p - a, d) / np.dot(d, d)
    assert -1e-12 <= s <= 1 + 1e-12
    assert np.linalg.norm(p - (a + s * d)) < 1e-12


def test_slerp_takes_short_path():
    q0 = np.array([0, 0, 0, 1.0])
    q1 = -quat_from_axis_angle([0, 0, 1], 0.2)
    q = slerp(q0, q1, 0.5)
    assert abs(2 * math.acos(min(1, abs(q[3]))) - 0.1) < 1e-12


# length ------------------------------------------------------------------

def test_trajectory_length_examples():
    assert trajectory_length(Trajectory([0.0], [[3, 4, 5]])) == 0.0
    assert trajectory_length(Trajectory(np.arange(4.0), [[x, 0, 0] for x in range(4)])) == 3.0
    sq = [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [0, 0, 0]]
    assert trajectory_length(Trajectory(np.arange(5.0), sq)) == 4.0
    with pytest.raises(ArgumentError):
        trajectory_length(Trajectory())


def test_trajectory_length_rigid_invariance(rng):
    from oracles import random_quat
    for _ in range(25):
        tr = Trajectory(np.arange(50.0), np.cumsum(rng.normal(size=(50, 3)), axis=0))
        g = PoseSE3(random_quat(rng), rng.normal(size=3) * 100)
        assert abs(trajectory_length(tr.transformed(g)) - trajectory_length(tr)) < 1e-9
