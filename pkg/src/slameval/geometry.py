"""Rigid-body poses, trajectories, timestamp association and interpolation.

Quaternions are stored scalar-last, ``(qx, qy, qz, qw)``, the same order as the
TUM trajectory format, so nothing needs reordering at the file boundary.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ArgumentError, FormatError, OutOfRangeError

log = logging.getLogger(__name__)

NORM_DRIFT_LIMIT = 1e-6
DEFAULT_MAX_TIME_DIFF = 0.02
TIME_EPS = 1e-9


# --------------------------------------------------------------------------
# quaternion helpers (scalar-last)

def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if not np.isfinite(n) or n == 0.0:
        raise ArgumentError(f"cannot normalize quaternion {q!r}")
    return q / n


def quat_multiply(a, b):
    ax, ay, az, aw = a
    bx, by, bz, bw = b
    return np.array([
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
        aw * bw - ax * bx - ay * by - az * bz,
    ])


def quat_conjugate(q):
    return np.array([-q[0], -q[1], -q[2], q[3]])


def quat_to_matrix(q):
    x, y, z, w = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def quats_to_matrices(q):
    """Vectorized :func:`quat_to_matrix` for an ``(n, 4)`` array."""
    q = np.asarray(q, dtype=float)
    x, y, z, w = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    out = np.empty((q.shape[0], 3, 3))
    out[:, 0, 0] = 1 - 2 * (y * y + z * z)
    out[:, 0, 1] = 2 * (x * y - z * w)
    out[:, 0, 2] = 2 * (x * z + y * w)
    out[:, 1, 0] = 2 * (x * y + z * w)
    out[:, 1, 1] = 1 - 2 * (x * x + z * z)
    out[:, 1, 2] = 2 * (y * z - x * w)
    out[:, 2, 0] = 2 * (x * z - y * w)
    out[:, 2, 1] = 2 * (y * z + x * w)
    out[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return out


def matrix_to_quat(R):
    """Rotation matrix to unit quaternion (Shepperd's branch selection)."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = math.sqrt(tr + 1.0) * 2
        q = [(R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s,
             (R[1, 0] - R[0, 1]) / s, 0.25 * s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2
        q = [0.25 * s, (R[0, 1] + R[1, 0]) / s,
             (R[0, 2] + R[2, 0]) / s, (R[2, 1] - R[1, 2]) / s]
    elif R[1, 1] > R[2, 2]:
        s = math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2
        q = [(R[0, 1] + R[1, 0]) / s, 0.25 * s,
             (R[1, 2] + R[2, 1]) / s, (R[0, 2] - R[2, 0]) / s]
    else:
        s = math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2
        q = [(R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s,
             0.25 * s, (R[1, 0] - R[0, 1]) / s]
    return quat_normalize(q)


def quat_from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    h = 0.5 * angle
    return np.array([*(axis * math.sin(h)), math.cos(h)])


def quat_angle(q):
    """Rotation angle in ``[0, pi]``; atan2 form stays accurate near zero."""
    v = math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2])
    return 2.0 * math.atan2(v, abs(q[3]))


def slerp(q0, q1, u):
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    d = float(np.dot(q0, q1))
    if d < 0.0:
        q1 = -q1
        d = -d
    if d > 1.0 - 1e-12:
        q = q0 + u * (q1 - q0)
        return q / np.linalg.norm(q)
    theta = math.acos(min(d, 1.0))
    sin_theta = math.sin(theta)
    w0 = math.sin((1.0 - u) * theta) / sin_theta
    w1 = math.sin(u * theta) / sin_theta
    q = w0 * q0 + w1 * q1
    return q / np.linalg.norm(q)


# --------------------------------------------------------------------------
# poses

def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PoseSE3:
    """Rigid transform: unit quaternion ``(qx, qy, qz, qw)`` plus translation in meters."""

    rotation: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.0, 1.0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        q = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float)
        if q.shape != (4,) or t.shape != (3,):
            raise ArgumentError("pose needs a 4-quaternion and a 3-translation")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(t))):
            raise ArgumentError("pose components must be finite")
        object.__setattr__(self, "rotation", _frozen(quat_normalize(q)))
        object.__setattr__(self, "translation", _frozen(t))

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_translation(cls, x, y, z):
        return cls(translation=np.array([x, y, z], dtype=float))

    @classmethod
    def from_matrix(cls, T):
        T = np.asarray(T, dtype=float)
        return cls(matrix_to_quat(T[:3, :3]), T[:3, 3])

    @property
    def rotation_matrix(self):
        return quat_to_matrix(self.rotation)

    def matrix(self):
        T = np.eye(4)
        T[:3, :3] = self.rotation_matrix
        T[:3, 3] = self.translation
        return T

    def angle(self):
        return quat_angle(self.rotation)

    def isclose(self, other, atol=1e-12):
        """Equality up to ``atol``, treating ``q`` and ``-q`` as the same rotation."""
        dq = min(np.max(np.abs(self.rotation - other.rotation)),
                 np.max(np.abs(self.rotation + other.rotation)))
        return dq <= atol and np.max(np.abs(self.translation - other.translation)) <= atol

    def __repr__(self):
        q = ", ".join(f"{v:.6g}" for v in self.rotation)
        t = ", ".join(f"{v:.6g}" for v in self.translation)
        return f"PoseSE3(q=({q}), t=({t}))"


def compose(a: PoseSE3, b: PoseSE3) -> PoseSE3:
    """Return ``a * b`` (apply ``b`` first, then ``a``)."""
    q = quat_multiply(a.rotation, b.rotation)
    n = float(np.linalg.norm(q))
    if abs(n - 1.0) > NORM_DRIFT_LIMIT:
        log.warning("quaternion norm drifted to %.12g during composition", n)
    t = a.translation + a.rotation_matrix @ b.translation
    return PoseSE3(q / n, t)


def inverse(p: PoseSE3) -> PoseSE3:
    qi = quat_conjugate(p.rotation)
    return PoseSE3(qi, -(quat_to_matrix(qi) @ p.translation))


# --------------------------------------------------------------------------
# trajectories

class Trajectory:
    """Time-ordered stamped poses, stored column-wise.

    ``timestamps`` is ``(n,)``, ``positions`` ``(n, 3)`` and ``quaternions``
    ``(n, 4)`` scalar-last. Arrays are read-only; timestamps must be strictly
    increasing.

    ``stamps_ns`` optionally keeps the integer nanosecond stamps a file was
    read with; float seconds cannot hold them exactly at epoch magnitudes.
    """

    __slots__ = ("timestamps", "positions", "quaternions", "frame_id", "stamps_ns", "_rotmats")

    def __init__(self, timestamps=(), positions=None, quaternions=None, frame_id="",
                 stamps_ns=None):
        t = np.asarray(timestamps, dtype=float).reshape(-1)
        n = t.shape[0]
        p = np.zeros((n, 3)) if positions is None else np.asarray(positions, dtype=float).reshape(n, 3)
        if quaternions is None:
            q = np.tile([0.0, 0.0, 0.0, 1.0], (n, 1))
        else:
            q = np.asarray(quaternions, dtype=float).reshape(n, 4)
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
            raise FormatError("trajectory contains non-finite values")
        if n > 1 and not np.all(np.diff(t) > 0):
            bad = int(np.argmax(np.diff(t) <= 0)) + 1
            raise FormatError(f"timestamps not strictly increasing at sample {bad} (t={t[bad]!r})")
        norms = np.linalg.norm(q, axis=1)
        if n and np.any(norms == 0):
            raise FormatError("zero-norm quaternion in trajectory")
        q = q / norms[:, None] if n else q
        self.timestamps = _frozen(t)
        self.positions = _frozen(p)
        self.quaternions = _frozen(q)
        self.frame_id = frame_id
        if stamps_ns is not None:
            stamps_ns = np.asarray(stamps_ns, dtype=np.int64).reshape(-1)
            if stamps_ns.shape[0] != n:
                raise ArgumentError("stamps_ns length differs from timestamps")
            stamps_ns.setflags(write=False)
        self.stamps_ns = stamps_ns
        self._rotmats = None

    @classmethod
    def from_poses(cls, stamped: Iterable[tuple[float, PoseSE3]], frame_id=""):
        stamped = list(stamped)
        if not stamped:
            return cls(frame_id=frame_id)
        ts = [s[0] for s in stamped]
        ps = [s[1].translation for s in stamped]
        qs = [s[1].rotation for s in stamped]
        return cls(ts, ps, qs, frame_id=frame_id)

    def __len__(self):
        return self.timestamps.shape[0]

    def pose(self, i) -> PoseSE3:
        return PoseSE3(self.quaternions[i], self.positions[i])

    def __getitem__(self, i):
        if isinstance(i, slice):
            ns = None if self.stamps_ns is None else self.stamps_ns[i]
            return Trajectory(self.timestamps[i], self.positions[i], self.quaternions[i],
                              frame_id=self.frame_id, stamps_ns=ns)
        return float(self.timestamps[i]), self.pose(i)

    def __iter__(self) -> Iterator[tuple[float, PoseSE3]]:
        for i in range(len(self)):
            yield self[i]

    @property
    def samples(self):
        return list(self)

    @property
    def rotation_matrices(self):
        if self._rotmats is None:
            m = quats_to_matrices(self.quaternions) if len(self) else np.zeros((0, 3, 3))
            m.setflags(write=False)
            self._rotmats = m
        return self._rotmats

    def transformed(self, pose: PoseSE3, scale=1.0):
        """Left-multiply every sample by ``pose``; positions also scaled by ``scale``."""
        R = pose.rotation_matrix
        p = scale * self.positions @ R.T + pose.translation
        q = np.array([quat_multiply(pose.rotation, qi) for qi in self.quaternions]).reshape(-1, 4)
        return Trajectory(self.timestamps, p, q, frame_id=self.frame_id, stamps_ns=self.stamps_ns)

    def __repr__(self):
        span = ""
        if len(self):
            span = f", t=[{self.timestamps[0]:.6f}, {self.timestamps[-1]:.6f}]"
        return f"Trajectory(n={len(self)}{span}, frame_id={self.frame_id!r})"


# --------------------------------------------------------------------------
# association

class AssociationMethod(str, Enum):
    NEAREST = "nearest"
    INTERPOLATE = "interpolate"


@dataclass(frozen=True)
class AssociationPolicy:
    max_time_diff: float = DEFAULT_MAX_TIME_DIFF
    method: AssociationMethod = AssociationMethod.NEAREST

    def __post_init__(self):
        if not self.max_time_diff > 0:
            raise ArgumentError("max_time_diff must be positive")
        object.__setattr__(self, "method", AssociationMethod(self.method))


@dataclass(frozen=True, eq=False)
class MatchedPairs:
    """Estimate/ground-truth pose pairs, ordered by estimate timestamp.

    Stored as arrays: ``timestamps`` (estimate stamps), ``est`` and ``gt`` as
    :class:`Trajectory`-like column blocks.
    """

    timestamps: np.ndarray
    est_positions: np.ndarray
    est_quaternions: np.ndarray
    gt_positions: np.ndarray
    gt_quaternions: np.ndarray
    unmatched_est: int = 0
    unmatched_gt: int = 0

    @classmethod
    def from_trajectories(cls, est: Trajectory, gt: Trajectory, unmatched_est=0, unmatched_gt=0):
        """Pair two equal-length trajectories sample by sample (estimate stamps kept)."""
        if len(est) != len(gt):
            raise ArgumentError("trajectories differ in length")
        return cls(est.timestamps, est.positions, est.quaternions,
                   gt.positions, gt.quaternions, unmatched_est, unmatched_gt)

    def __len__(self):
        return self.timestamps.shape[0]

    @property
    def pairs(self):
        return [(float(self.timestamps[i]),
                 PoseSE3(self.est_quaternions[i], self.est_positions[i]),
                 PoseSE3(self.gt_quaternions[i], self.gt_positions[i]))
                for i in range(len(self))]

    def head(self, n):
        return MatchedPairs(self.timestamps[:n], self.est_positions[:n], self.est_quaternions[:n],
                            self.gt_positions[:n], self.gt_quaternions[:n])

    def est_trajectory(self):
        return Trajectory(self.timestamps, self.est_positions, self.est_quaternions)

    def gt_trajectory(self):
        return Trajectory(self.timestamps, self.gt_positions, self.gt_quaternions)


def nearest_pair_indices(est_t, gt_t, max_diff):
    """Greedy one-to-one matching; returns ``(est_index, gt_index)`` sorted by estimate."""
    # 1 ns slack so decimal stamps like 2.0 vs 1.98 at 0.02 s still match
    max_diff = max_diff + TIME_EPS
    lo = np.searchsorted(gt_t, est_t - max_diff, side="left")
    hi = np.searchsorted(gt_t, est_t + max_diff, side="right")
    cands = []
    for i in range(est_t.shape[0]):
        for j in range(lo[i], hi[i]):
            d = abs(est_t[i] - gt_t[j])
            if d <= max_diff:
                cands.append((d, gt_t[j], i, j))
    # ties on distance go to the earlier ground-truth sample
    cands.sort()
    used_e, used_g, out = set(), set(), []
    for _, _, i, j in cands:
        if i in used_e or j in used_g:
            continue
        used_e.add(i)
        used_g.add(j)
        out.append((i, j))
    out.sort()
    return out


def associate(est: Trajectory, gt: Trajectory, policy: AssociationPolicy | None = None) -> MatchedPairs:
    """Match estimate samples to ground truth in time.

    ``nearest``: greedy one-to-one matching by time distance. ``interpolate``:
    ground truth interpolated at each estimate stamp inside the ground-truth
    span, provided the closer bracketing sample lies within ``max_time_diff``.
    """
    policy = policy or AssociationPolicy()
    est_t, gt_t = est.timestamps, gt.timestamps
    if policy.method is AssociationMethod.NEAREST:
        idx = nearest_pair_indices(est_t, gt_t, policy.max_time_diff)
        ei = np.array([i for i, _ in idx], dtype=int)
        gi = np.array([j for _, j in idx], dtype=int)
        return MatchedPairs(
            est_t[ei], est.positions[ei], est.quaternions[ei],
            gt.positions[gi], gt.quaternions[gi],
            unmatched_est=len(est) - len(idx), unmatched_gt=len(gt) - len(idx),
        )

    keep, gpos, gquat, touched = [], [], [], set()
    for i, t in enumerate(est_t):
        if len(gt) == 0 or t < gt_t[0] or t > gt_t[-1]:
            continue
        k = int(np.searchsorted(gt_t, t, side="left"))
        if gt_t[k] == t:
            keep.append(i)
            gpos.append(gt.positions[k])
            gquat.append(gt.quaternions[k])
            touched.add(k)
            continue
        if min(t - gt_t[k - 1], gt_t[k] - t) > policy.max_time_diff + TIME_EPS:
            continue
        pose = _interp_between(gt, k - 1, k, t)
        keep.append(i)
        gpos.append(pose.translation)
        gquat.append(pose.rotation)
        touched.update((k - 1, k))
    keep = np.array(keep, dtype=int)
    return MatchedPairs(
        est_t[keep], est.positions[keep], est.quaternions[keep],
        np.array(gpos).reshape(-1, 3), np.array(gquat).reshape(-1, 4),
        unmatched_est=len(est) - len(keep), unmatched_gt=len(gt) - len(touched),
    )


def _interp_between(traj, i, j, t):
    t0, t1 = traj.timestamps[i], traj.timestamps[j]
    u = (t - t0) / (t1 - t0)
    p = (1.0 - u) * traj.positions[i] + u * traj.positions[j]
    q = slerp(traj.quaternions[i], traj.quaternions[j], u)
    return PoseSE3(q, p)


def interpolate_pose(traj: Trajectory, t: float) -> PoseSE3:
    if len(traj) == 0 or not traj.timestamps[0] <= t <= traj.timestamps[-1]:
        raise OutOfRangeError(f"t={t!r} outside trajectory span")
    k = int(np.searchsorted(traj.timestamps, t, side="left"))
    if traj.timestamps[k] == t:
        return traj.pose(k)
    return _interp_between(traj, k - 1, k, t)


def trajectory_length(traj: Trajectory) -> float:
    if len(traj) == 0:
        raise ArgumentError("trajectory_length of an empty trajectory")
    if len(traj) == 1:
        return 0.0
    return float(np.sum(np.linalg.norm(np.diff(traj.positions, axis=0), axis=1)))


def stack_poses(poses: Sequence[PoseSE3]):
    """Split poses into ``(positions, quaternions)`` arrays."""
    if not poses:
        return np.zeros((0, 3)), np.zeros((0, 4))
    return (np.array([p.translation for p in poses]),
            np.array([p.rotation for p in poses]))
