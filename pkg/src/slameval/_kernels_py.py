"""Pure numpy implementations of the hot kernels.

Semantics must match ``_kernels.pyx`` exactly; both are exercised by the test
suite and compared in ``benchmarks/bench_kernels.py``.
"""

import numpy as np


def cross_covariance(src, dst):
    """Means, cross-covariance ``(1/n) sum (dst_i - mu_d)(src_i - mu_s)^T`` and
    the mean squared deviation of ``src``."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    n = src.shape[0]
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    cs = src - mu_s
    cd = dst - mu_d
    cov = cd.T @ cs / n
    var_s = float(np.sum(cs * cs)) / n
    return mu_s, mu_d, cov, var_s


def residual_norms(src, dst, R, t, s):
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    mapped = s * (src @ np.asarray(R).T) + np.asarray(t)
    return np.sqrt(np.sum((dst - mapped) ** 2, axis=1))


def relative_errors(est_R, est_t, gt_R, gt_t, i_idx, j_idx):
    """Translational and rotational error of ``(Q_i^-1 Q_j)^-1 (P_i^-1 P_j)``
    for each index pair, with ``P`` the estimate and ``Q`` ground truth."""
    i_idx = np.asarray(i_idx, dtype=np.intp)
    j_idx = np.asarray(j_idx, dtype=np.intp)
    Pi, Pj = est_R[i_idx], est_R[j_idx]
    Qi, Qj = gt_R[i_idx], gt_R[j_idx]
    RB = np.einsum("nki,nkj->nij", Pi, Pj)
    RA = np.einsum("nki,nkj->nij", Qi, Qj)
    tB = np.einsum("nki,nk->ni", Pi, est_t[j_idx] - est_t[i_idx])
    tA = np.einsum("nki,nk->ni", Qi, gt_t[j_idx] - gt_t[i_idx])
    RE = np.einsum("nki,nkj->nij", RA, RB)
    tE = np.einsum("nki,nk->ni", RA, tB - tA)
    trans = np.sqrt(np.sum(tE * tE, axis=1))
    c = 0.5 * (RE[:, 0, 0] + RE[:, 1, 1] + RE[:, 2, 2] - 1.0)
    vx = RE[:, 2, 1] - RE[:, 1, 2]
    vy = RE[:, 0, 2] - RE[:, 2, 0]
    vz = RE[:, 1, 0] - RE[:, 0, 1]
    sn = 0.5 * np.sqrt(vx * vx + vy * vy + vz * vz)
    rot = np.arctan2(sn, c)
    return trans, rot
