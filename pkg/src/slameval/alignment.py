"""Least-squares registration of matched point sets (Umeyama 1991).

Solves ``min sum ||y_i - (s R x_i + t)||^2`` in closed form from the SVD of
the 3x3 cross-covariance. Only positions are used; orientations play no
part in the fit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ArgumentError, DegenerateGeometryError
from .geometry import Trajectory, matrix_to_quat, quat_multiply

ORTHO_TOL = 1e-9
# singular values below this fraction of the largest count as zero
RANK_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class Alignment:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    scale: float = 1.0
    # sum of squared residuals at the optimum; None when not produced by a fit
    residual: float | None = None

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float)
        t = np.array(self.translation, dtype=float).reshape(3)
        if R.shape != (3, 3):
            raise ArgumentError("rotation must be 3x3")
        if np.max(np.abs(R.T @ R - np.eye(3))) > ORTHO_TOL or abs(np.linalg.det(R) - 1.0) > ORTHO_TOL:
            raise ArgumentError("rotation is not a proper orthonormal matrix")
        if not self.scale > 0:
            raise ArgumentError("scale must be positive")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "scale", float(self.scale))

    def apply_points(self, points):
        return self.scale * (np.asarray(points, dtype=float) @ self.rotation.T) + self.translation

    def to_dict(self):
        return {
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
            "scale": self.scale,
        }


def umeyama_align(source, target, with_scale=False) -> Alignment:
    """Find ``(s, R, t)`` mapping ``source`` points onto ``target`` points.

    Raises :class:`ArgumentError` for fewer than three pairs and
    :class:`DegenerateGeometryError` when the centered cross-covariance has
    rank below two (collinear or coincident points), where the rotation is
    not unique.
    """
    src = np.asarray(source, dtype=float)
    dst = np.asarray(target, dtype=float)
    if src.ndim != 2 or src.shape[1] != 3 or src.shape != dst.shape:
        raise ArgumentError(f"expected two (n, 3) arrays, got {src.shape} and {dst.shape}")
    n = src.shape[0]
    if n < 3:
        raise ArgumentError(f"need at least 3 point pairs, got {n}")

    mu_s, mu_d, cov, var_s = kernels.cross_covariance(src, dst)
    U, d, Vt = np.linalg.svd(cov)
    if d[0] == 0.0 or d[1] <= RANK_RTOL * d[0]:
        raise DegenerateGeometryError(
            f"cross-covariance rank < 2 (singular values {d[0]:.3g}, {d[1]:.3g}, {d[2]:.3g})")

    S = np.ones(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2] = -1.0
    R = (U * S) @ Vt
    s = float(np.dot(d, S) / var_s) if with_scale else 1.0
    t = mu_d - s * (R @ mu_s)

    res = kernels.residual_norms(src, dst, R, t, s)
    return Alignment(R, t, s, residual=float(np.dot(res, res)))


def apply_alignment(a: Alignment, traj: Trajectory) -> Trajectory:
    """Map positions to ``s R x + t`` and left-multiply orientations by ``R``."""
    if len(traj) == 0:
        return traj
    p = a.apply_points(traj.positions)
    qa = matrix_to_quat(a.rotation)
    q = np.array([quat_multiply(qa, qi) for qi in traj.quaternions])
    return Trajectory(traj.timestamps, p, q, frame_id=traj.frame_id)
