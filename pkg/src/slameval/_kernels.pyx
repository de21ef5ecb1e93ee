# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Same contracts as ``_kernels_py``."""

import numpy as np
from libc.math cimport sqrt, atan2


def cross_covariance(src, dst):
    cdef const double[:, ::1] s = np.ascontiguousarray(src, dtype=np.float64)
    cdef const double[:, ::1] d = np.ascontiguousarray(dst, dtype=np.float64)
    cdef Py_ssize_t n = s.shape[0], i, a, b
    cdef double ms[3]
    cdef double md[3]
    cdef double cs[3]
    cdef double cd[3]
    cdef double var = 0.0
    cov_arr = np.zeros((3, 3))
    cdef double[:, ::1] cov = cov_arr
    for a in range(3):
        ms[a] = 0.0
        md[a] = 0.0
    for i in range(n):
        for a in range(3):
            ms[a] += s[i, a]
            md[a] += d[i, a]
    for a in range(3):
        ms[a] /= n
        md[a] /= n
    for i in range(n):
        for a in range(3):
            cs[a] = s[i, a] - ms[a]
            cd[a] = d[i, a] - md[a]
            var += cs[a] * cs[a]
        for a in range(3):
            for b in range(3):
                cov[a, b] += cd[a] * cs[b]
    for a in range(3):
        for b in range(3):
            cov[a, b] /= n
    return (np.array([ms[0], ms[1], ms[2]]), np.array([md[0], md[1], md[2]]),
            cov_arr, var / n)


def residual_norms(src, dst, R, t, double s):
    cdef const double[:, ::1] x = np.ascontiguousarray(src, dtype=np.float64)
    cdef const double[:, ::1] y = np.ascontiguousarray(dst, dtype=np.float64)
    cdef const double[:, ::1] r = np.ascontiguousarray(R, dtype=np.float64)
    cdef const double[::1] tt = np.ascontiguousarray(t, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], i, a
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef double e, acc
    for i in range(n):
        acc = 0.0
        for a in range(3):
            e = y[i, a] - (s * (r[a, 0] * x[i, 0] + r[a, 1] * x[i, 1] + r[a, 2] * x[i, 2]) + tt[a])
            acc += e * e
        out[i] = sqrt(acc)
    return out_arr


cdef inline void _rel(const double[:, :, ::1] R, const double[:, ::1] t, Py_ssize_t i, Py_ssize_t j,
                      double* Rout, double* tout) noexcept nogil:
    # Rout = R_i^T R_j ; tout = R_i^T (t_j - t_i)
    cdef int a, b, k
    cdef double dt[3]
    for a in range(3):
        dt[a] = t[j, a] - t[i, a]
    for a in range(3):
        tout[a] = R[i, 0, a] * dt[0] + R[i, 1, a] * dt[1] + R[i, 2, a] * dt[2]
        for b in range(3):
            Rout[3 * a + b] = R[i, 0, a] * R[j, 0, b] + R[i, 1, a] * R[j, 1, b] + R[i, 2, a] * R[j, 2, b]


def relative_errors(est_R, est_t, gt_R, gt_t, i_idx, j_idx):
    cdef const double[:, :, ::1] PR = np.ascontiguousarray(est_R, dtype=np.float64)
    cdef const double[:, ::1] Pt = np.ascontiguousarray(est_t, dtype=np.float64)
    cdef const double[:, :, ::1] QR = np.ascontiguousarray(gt_R, dtype=np.float64)
    cdef const double[:, ::1] Qt = np.ascontiguousarray(gt_t, dtype=np.float64)
    cdef const Py_ssize_t[::1] ii = np.ascontiguousarray(i_idx, dtype=np.intp)
    cdef const Py_ssize_t[::1] jj = np.ascontiguousarray(j_idx, dtype=np.intp)
    cdef Py_ssize_t m = ii.shape[0], k
    trans_arr = np.empty(m)
    rot_arr = np.empty(m)
    cdef double[::1] trans = trans_arr
    cdef double[::1] rot = rot_arr
    cdef double RA[9]
    cdef double RB[9]
    cdef double RE[9]
    cdef double tA[3]
    cdef double tB[3]
    cdef double d[3]
    cdef double e, acc, c, vx, vy, vz
    cdef int a, b
    with nogil:
        for k in range(m):
            _rel(QR, Qt, ii[k], jj[k], RA, tA)
            _rel(PR, Pt, ii[k], jj[k], RB, tB)
            for a in range(3):
                d[a] = tB[a] - tA[a]
            acc = 0.0
            for a in range(3):
                e = RA[a] * d[0] + RA[3 + a] * d[1] + RA[6 + a] * d[2]
                acc += e * e
            trans[k] = sqrt(acc)
            for a in range(3):
                for b in range(3):
                    RE[3 * a + b] = RA[a] * RB[b] + RA[3 + a] * RB[3 + b] + RA[6 + a] * RB[6 + b]
            c = 0.5 * (RE[0] + RE[4] + RE[8] - 1.0)
            vx = RE[7] - RE[5]
            vy = RE[2] - RE[6]
            vz = RE[3] - RE[1]
            rot[k] = atan2(0.5 * sqrt(vx * vx + vy * vy + vz * vz), c)
    return trans_arr, rot_arr
