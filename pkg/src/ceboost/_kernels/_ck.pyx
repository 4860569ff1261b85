# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: Euler-Maruyama stepping and the conditional-Gaussian
filter/smoother/sampler recursions.  Signatures mirror ``pure.py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

BACKEND = "compiled"


def em_l63(cnp.ndarray[double, ndim=1] x0, double dt, params,
           cnp.ndarray[double, ndim=2] add, cnp.ndarray[double, ndim=2] out):
    cdef double sig = params[0], rho = params[1], beta = params[2]
    cdef Py_ssize_t n = add.shape[0], m
    cdef double x, y, z
    cdef double[:, ::1] a = np.ascontiguousarray(add)
    cdef double[:, ::1] o = out
    o[0, 0] = x0[0]; o[0, 1] = x0[1]; o[0, 2] = x0[2]
    for m in range(n):
        x = o[m, 0]; y = o[m, 1]; z = o[m, 2]
        o[m + 1, 0] = x + sig * (y - x) * dt + a[m, 0]
        o[m + 1, 1] = y + (x * (rho - z) - y) * dt + a[m, 1]
        o[m + 1, 2] = z + (x * y - beta * z) * dt + a[m, 2]
    return out


def em_l96(cnp.ndarray[double, ndim=1] x0, double dt, params,
           cnp.ndarray[double, ndim=2] add, cnp.ndarray[double, ndim=2] out):
    cdef double forcing = params[0], damping = params[1]
    cdef Py_ssize_t n = add.shape[0], j_dim = x0.shape[0], m, j, jp1, jm1, jm2
    cdef double[:, ::1] a = np.ascontiguousarray(add)
    cdef double[:, ::1] o = out
    cdef double xj
    for j in range(j_dim):
        o[0, j] = x0[j]
    for m in range(n):
        for j in range(j_dim):
            jp1 = j + 1 if j + 1 < j_dim else j + 1 - j_dim
            jm1 = j - 1 if j - 1 >= 0 else j - 1 + j_dim
            jm2 = j - 2 if j - 2 >= 0 else j - 2 + j_dim
            xj = o[m, j]
            o[m + 1, j] = xj + ((o[m, jp1] - o[m, jm2]) * o[m, jm1]
                                + damping * xj + forcing) * dt + a[m, j]
    return out


def em_topo(cnp.ndarray[double, ndim=1] x0, double dt, params,
            cnp.ndarray[double, ndim=2] add, cnp.ndarray[double, ndim=2] out):
    cdef double d1 = params[0], d2 = params[1], d3 = params[2], d4 = params[3]
    cdef double du = params[4], beta = params[5], om1 = params[6], om3 = params[7]
    cdef double rot = params[8]
    cdef Py_ssize_t n = add.shape[0], m, j
    cdef double[:, ::1] a = np.ascontiguousarray(add)
    cdef double[:, ::1] o = out
    cdef double v1, v2, v3, v4, u
    for j in range(5):
        o[0, j] = x0[j]
    for m in range(n):
        v1 = o[m, 0]; v2 = o[m, 1]; v3 = o[m, 2]; v4 = o[m, 3]; u = o[m, 4]
        o[m + 1, 0] = v1 + (-d1 * v1 - beta * v2 + v2 * u - 2.0 * om1 * u) * dt + a[m, 0]
        o[m + 1, 1] = v2 + (-d2 * v2 + rot * beta * v1 - v1 * u) * dt + a[m, 1]
        o[m + 1, 2] = v3 + (-d3 * v3 - om3 * u - 0.5 * beta * v4 + 2.0 * v4 * u) * dt + a[m, 2]
        o[m + 1, 3] = v4 + (-d4 * v4 + rot * 0.5 * beta * v3 - 2.0 * v3 * u) * dt + a[m, 3]
        o[m + 1, 4] = u + (-du * u + om1 * v1 + 2.0 * om3 * v3) * dt + a[m, 4]
    return out


def em_spekf(cnp.ndarray[double, ndim=1] x0, double dt, params,
             cnp.ndarray[double, ndim=2] add, cnp.ndarray[double, ndim=2] out):
    cdef double ghat = params[0], what = params[1]
    cdef double bhat_re = params[2], bhat_im = params[3]
    cdef double dg = params[4], dw = params[5], db = params[6]
    cdef double gact = params[7], wact = params[8]
    cdef Py_ssize_t n = add.shape[0], m, j
    cdef double[:, ::1] a = np.ascontiguousarray(add)
    cdef double[:, ::1] o = out
    cdef double ur, ui, g, w, br, bi, geff, weff
    for j in range(6):
        o[0, j] = x0[j]
    for m in range(n):
        ur = o[m, 0]; ui = o[m, 1]; g = o[m, 2]; w = o[m, 3]; br = o[m, 4]; bi = o[m, 5]
        geff = ghat + gact * g
        weff = what + wact * w
        o[m + 1, 0] = ur + (-geff * ur - weff * ui + br + bhat_re) * dt + a[m, 0]
        o[m + 1, 1] = ui + (-geff * ui + weff * ur + bi + bhat_im) * dt + a[m, 1]
        o[m + 1, 2] = g + (-dg * g) * dt + a[m, 2]
        o[m + 1, 3] = w + (-dw * w) * dt + a[m, 3]
        o[m + 1, 4] = br + (-db * br) * dt + a[m, 4]
        o[m + 1, 5] = bi + (-db * bi) * dt + a[m, 5]
    return out


# ---------------------------------------------------------------------------
# Small dense helpers for the conditional-Gaussian recursions (d, o <= ~8).
# ---------------------------------------------------------------------------

cdef void _matmul(double* A, double* B, double* C, int n, int k, int m) noexcept nogil:
    # C (n x m) = A (n x k) B (k x m)
    cdef int i, j, l
    cdef double s
    for i in range(n):
        for j in range(m):
            s = 0.0
            for l in range(k):
                s += A[i * k + l] * B[l * m + j]
            C[i * m + j] = s


cdef void _matmul_tn(double* A, double* B, double* C, int n, int k, int m) noexcept nogil:
    # C (n x m) = A^T (n x k, stored k x n) B (k x m)
    cdef int i, j, l
    cdef double s
    for i in range(n):
        for j in range(m):
            s = 0.0
            for l in range(k):
                s += A[l * n + i] * B[l * m + j]
            C[i * m + j] = s


cdef void _matmul_nt(double* A, double* B, double* C, int n, int k, int m) noexcept nogil:
    # C (n x m) = A (n x k) B^T (k x m, stored m x k)
    cdef int i, j, l
    cdef double s
    for i in range(n):
        for j in range(m):
            s = 0.0
            for l in range(k):
                s += A[i * k + l] * B[j * k + l]
            C[i * m + j] = s


cdef int _inv_small(double* A, double* Ainv, int n) noexcept nogil:
    # Gauss-Jordan with partial pivoting on a copy; returns 0 on success.
    cdef double work[64]
    cdef int i, j, k, piv
    cdef double maxv, tmp, factor
    for i in range(n):
        for j in range(n):
            work[i * n + j] = A[i * n + j]
            Ainv[i * n + j] = 1.0 if i == j else 0.0
    for k in range(n):
        piv = k
        maxv = work[k * n + k] if work[k * n + k] >= 0 else -work[k * n + k]
        for i in range(k + 1, n):
            tmp = work[i * n + k] if work[i * n + k] >= 0 else -work[i * n + k]
            if tmp > maxv:
                maxv = tmp
                piv = i
        if maxv == 0.0:
            return -1
        if piv != k:
            for j in range(n):
                tmp = work[k * n + j]; work[k * n + j] = work[piv * n + j]; work[piv * n + j] = tmp
                tmp = Ainv[k * n + j]; Ainv[k * n + j] = Ainv[piv * n + j]; Ainv[piv * n + j] = tmp
        factor = work[k * n + k]
        for j in range(n):
            work[k * n + j] /= factor
            Ainv[k * n + j] /= factor
        for i in range(n):
            if i == k:
                continue
            factor = work[i * n + k]
            if factor != 0.0:
                for j in range(n):
                    work[i * n + j] -= factor * work[k * n + j]
                    Ainv[i * n + j] -= factor * Ainv[k * n + j]
    return 0


cdef void _psd_chol_small(double* A, double* L, int n) noexcept nogil:
    # Zero-pivot-tolerant Cholesky; must match pure._psd_chol exactly.
    cdef int i, j, k
    cdef double s
    for i in range(n * n):
        L[i] = 0.0
    for i in range(n):
        s = A[i * n + i]
        for k in range(i):
            s -= L[i * n + k] * L[i * n + k]
        L[i * n + i] = sqrt(s) if s > 0.0 else 0.0
        for j in range(i + 1, n):
            if L[i * n + i] > 0.0:
                s = A[j * n + i]
                for k in range(i):
                    s -= L[j * n + k] * L[i * n + k]
                L[j * n + i] = s / L[i * n + i]


def cg_filter(cnp.ndarray[double, ndim=2] y, cnp.ndarray[double, ndim=3] h,
              cnp.ndarray[double, ndim=2] f, cnp.ndarray[double, ndim=2] q,
              cnp.ndarray[double, ndim=2] r, cnp.ndarray[double, ndim=1] mu0,
              cnp.ndarray[double, ndim=2] p0):
    cdef Py_ssize_t t_obs = y.shape[0]
    cdef int o = <int> y.shape[1]
    cdef int d = <int> mu0.shape[0]
    if d > 8 or o > 8:
        raise ValueError("compiled kernel supports dimensions up to 8")
    mu_f_arr = np.zeros((t_obs + 1, d))
    p_f_arr = np.zeros((t_obs + 1, d, d))
    mu_p_arr = np.zeros((t_obs + 1, d))
    p_p_arr = np.zeros((t_obs + 1, d, d))
    cdef double[:, ::1] mu_f = mu_f_arr
    cdef double[:, :, ::1] p_f = p_f_arr
    cdef double[:, ::1] mu_p = mu_p_arr
    cdef double[:, :, ::1] p_p = p_p_arr
    cdef double[:, ::1] yv = np.ascontiguousarray(y)
    cdef double[:, :, ::1] hv = np.ascontiguousarray(h)
    cdef double[:, ::1] fv = np.ascontiguousarray(f)
    cdef double[:, ::1] qv = np.ascontiguousarray(q)
    cdef double[:, ::1] rv = np.ascontiguousarray(r)
    cdef double mu[8]
    cdef double p[64]
    cdef double hm[64]
    cdef double ph[64]      # P H^T (d x o)
    cdef double s[64]       # innovation covariance (o x o)
    cdef double sinv[64]
    cdef double gain[64]    # d x o
    cdef double innov[8]
    cdef double tmp_do[64]
    cdef double tmp_dd[64]
    cdef double tmp_dd2[64]
    cdef int i, j, k
    cdef Py_ssize_t m
    for i in range(d):
        mu[i] = mu0[i]
        for j in range(d):
            p[i * d + j] = p0[i, j]
    for m in range(t_obs):
        for i in range(d):
            mu_p[m, i] = mu[i]
            for j in range(d):
                p_p[m, i, j] = p[i * d + j]
        for i in range(o):
            for j in range(d):
                hm[i * d + j] = hv[m, i, j]
        # S = H P H^T + R ; PH = P H^T
        _matmul_nt(p, hm, ph, d, d, o)
        _matmul(hm, ph, s, o, d, o)
        for i in range(o):
            for j in range(o):
                s[i * o + j] += rv[i, j]
        if _inv_small(s, sinv, o) != 0:
            raise np.linalg.LinAlgError("singular innovation covariance")
        _matmul(ph, sinv, gain, d, o, o)
        for i in range(o):
            innov[i] = yv[m, i]
            for j in range(d):
                innov[i] -= hm[i * d + j] * mu[j]
        for i in range(d):
            for j in range(o):
                mu[i] += gain[i * o + j] * innov[j]
        # P <- P - G S G^T, symmetrized
        _matmul(gain, s, tmp_do, d, o, o)
        _matmul_nt(tmp_do, gain, tmp_dd, d, o, d)
        for i in range(d):
            for j in range(d):
                p[i * d + j] -= tmp_dd[i * d + j]
        for i in range(d):
            for j in range(i + 1, d):
                p[i * d + j] = 0.5 * (p[i * d + j] + p[j * d + i])
                p[j * d + i] = p[i * d + j]
        for i in range(d):
            mu_f[m, i] = mu[i]
            for j in range(d):
                p_f[m, i, j] = p[i * d + j]
        # predict: mu <- F mu ; P <- F P F^T + Q, symmetrized
        for i in range(d):
            innov[i] = 0.0
            for j in range(d):
                innov[i] += fv[i, j] * mu[j]
        for i in range(d):
            mu[i] = innov[i]
        for i in range(d):
            for j in range(d):
                tmp_dd[i * d + j] = fv[i, j]
        _matmul(tmp_dd, p, tmp_dd2, d, d, d)
        _matmul_nt(tmp_dd2, tmp_dd, p, d, d, d)
        for i in range(d):
            for j in range(d):
                p[i * d + j] += qv[i, j]
        for i in range(d):
            for j in range(i + 1, d):
                p[i * d + j] = 0.5 * (p[i * d + j] + p[j * d + i])
                p[j * d + i] = p[i * d + j]
    for i in range(d):
        mu_p[t_obs, i] = mu[i]
        mu_f[t_obs, i] = mu[i]
        for j in range(d):
            p_p[t_obs, i, j] = p[i * d + j]
            p_f[t_obs, i, j] = p[i * d + j]
    return mu_f_arr, p_f_arr, mu_p_arr, p_p_arr


cdef void _rts_gain(double[:, :, ::1] p_f, double[:, :, ::1] p_p,
                    double[:, ::1] fv, Py_ssize_t m, int d, double* gain) noexcept nogil:
    # gain = P_f[m] F^T (P_p[m+1])^-1
    cdef double fp[64]
    cdef double pf[64]
    cdef double pred[64]
    cdef double predinv[64]
    cdef int i, j
    for i in range(d):
        for j in range(d):
            pf[i * d + j] = p_f[m, i, j]
            pred[i * d + j] = p_p[m + 1, i, j]
            fp[i * d + j] = fv[i, j]
    if _inv_small(pred, predinv, d) != 0:
        for i in range(d * d):
            gain[i] = 0.0
        return
    cdef double pft[64]
    _matmul_nt(pf, fp, pft, d, d, d)     # P_f F^T
    _matmul(pft, predinv, gain, d, d, d)


def cg_smoother(cnp.ndarray[double, ndim=2] mu_f_a, cnp.ndarray[double, ndim=3] p_f_a,
                cnp.ndarray[double, ndim=2] mu_p_a, cnp.ndarray[double, ndim=3] p_p_a,
                cnp.ndarray[double, ndim=2] f):
    cdef Py_ssize_t t = mu_f_a.shape[0]
    cdef int d = <int> mu_f_a.shape[1]
    if d > 8:
        raise ValueError("compiled kernel supports dimensions up to 8")
    mu_s_arr = np.array(mu_f_a, copy=True)
    p_s_arr = np.array(p_f_a, copy=True)
    cdef double[:, ::1] mu_s = mu_s_arr
    cdef double[:, :, ::1] p_s = p_s_arr
    cdef double[:, ::1] mu_f = np.ascontiguousarray(mu_f_a)
    cdef double[:, :, ::1] p_f = np.ascontiguousarray(p_f_a)
    cdef double[:, ::1] mu_p = np.ascontiguousarray(mu_p_a)
    cdef double[:, :, ::1] p_p = np.ascontiguousarray(p_p_a)
    cdef double[:, ::1] fv = np.ascontiguousarray(f)
    cdef double gain[64]
    cdef double diff[64]
    cdef double tmp[64]
    cdef double tmp2[64]
    cdef double vec[8]
    cdef int i, j
    cdef Py_ssize_t m
    for m in range(t - 2, -1, -1):
        _rts_gain(p_f, p_p, fv, m, d, gain)
        for i in range(d):
            vec[i] = mu_s[m + 1, i] - mu_p[m + 1, i]
        for i in range(d):
            mu_s[m, i] = mu_f[m, i]
            for j in range(d):
                mu_s[m, i] += gain[i * d + j] * vec[j]
        for i in range(d):
            for j in range(d):
                diff[i * d + j] = p_s[m + 1, i, j] - p_p[m + 1, i, j]
        _matmul(gain, diff, tmp, d, d, d)
        _matmul_nt(tmp, gain, tmp2, d, d, d)
        for i in range(d):
            for j in range(d):
                p_s[m, i, j] = p_f[m, i, j] + tmp2[i * d + j]
        for i in range(d):
            for j in range(i + 1, d):
                p_s[m, i, j] = 0.5 * (p_s[m, i, j] + p_s[m, j, i])
                p_s[m, j, i] = p_s[m, i, j]
    return mu_s_arr, p_s_arr


def cg_sample(cnp.ndarray[double, ndim=2] mu_f_a, cnp.ndarray[double, ndim=3] p_f_a,
              cnp.ndarray[double, ndim=2] mu_p_a, cnp.ndarray[double, ndim=3] p_p_a,
              cnp.ndarray[double, ndim=2] f, cnp.ndarray[double, ndim=2] normals):
    cdef Py_ssize_t t = mu_f_a.shape[0]
    cdef int d = <int> mu_f_a.shape[1]
    if d > 8:
        raise ValueError("compiled kernel supports dimensions up to 8")
    path_arr = np.zeros((t, d))
    cdef double[:, ::1] path = path_arr
    cdef double[:, ::1] mu_f = np.ascontiguousarray(mu_f_a)
    cdef double[:, :, ::1] p_f = np.ascontiguousarray(p_f_a)
    cdef double[:, ::1] mu_p = np.ascontiguousarray(mu_p_a)
    cdef double[:, :, ::1] p_p = np.ascontiguousarray(p_p_a)
    cdef double[:, ::1] fv = np.ascontiguousarray(f)
    cdef double[:, ::1] z = np.ascontiguousarray(normals)
    cdef double gain[64]
    cdef double cov[64]
    cdef double chol[64]
    cdef double pred[64]
    cdef double tmp[64]
    cdef double mean[8]
    cdef int i, j
    cdef Py_ssize_t m
    for i in range(d):
        for j in range(d):
            cov[i * d + j] = p_f[t - 1, i, j]
    _psd_chol_small(cov, chol, d)
    for i in range(d):
        path[t - 1, i] = mu_f[t - 1, i]
        for j in range(d):
            path[t - 1, i] += chol[i * d + j] * z[t - 1, j]
    for m in range(t - 2, -1, -1):
        _rts_gain(p_f, p_p, fv, m, d, gain)
        for i in range(d):
            mean[i] = mu_f[m, i]
            for j in range(d):
                mean[i] += gain[i * d + j] * (path[m + 1, j] - mu_p[m + 1, j])
        for i in range(d):
            for j in range(d):
                pred[i * d + j] = p_p[m + 1, i, j]
        _matmul(gain, pred, tmp, d, d, d)
        _matmul_nt(tmp, gain, cov, d, d, d)
        for i in range(d):
            for j in range(d):
                cov[i * d + j] = p_f[m, i, j] - cov[i * d + j]
        for i in range(d):
            for j in range(i + 1, d):
                cov[i * d + j] = 0.5 * (cov[i * d + j] + cov[j * d + i])
                cov[j * d + i] = cov[i * d + j]
        _psd_chol_small(cov, chol, d)
        for i in range(d):
            path[m, i] = mean[i]
            for j in range(d):
                path[m, i] += chol[i * d + j] * z[m, j]
    return path_arr
