# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled droop dispatch kernel (same contract as ``_pykernel``)."""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef double ZERO_TOL = 1e-12


cdef inline double _clip(double v, double lo, double hi) noexcept nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


cdef double _balance(double rho, const double* lo, const double* hi, const double* c,
                     const double* chi,
                     int n, double const, double rho_min, double rho_max) noexcept nogil:
    cdef double total = const
    cdef int i
    if rho < rho_min:
        total += rho - rho_min
    elif rho > rho_max:
        total += rho - rho_max
    for i in range(n):
        total += _clip(c[i] + chi[i] * rho, lo[i], hi[i])
    return total


cdef double _max_root(const double* lo, const double* hi, const double* c, const double* chi,
                      int n,
                      double const, double rho_min, double rho_max,
                      double* pts, double* vals) noexcept nogil:
    cdef int m = 2, i, j, k
    cdef double key, f0, f1
    pts[0] = rho_min
    pts[1] = rho_max
    for i in range(n):
        if chi[i] > 0.0 and hi[i] > lo[i]:
            pts[m] = (lo[i] - c[i]) / chi[i]
            pts[m + 1] = (hi[i] - c[i]) / chi[i]
            m += 2
    # insertion sort: m <= 2 * n + 2 is small
    for i in range(1, m):
        key = pts[i]
        j = i - 1
        while j >= 0 and pts[j] > key:
            pts[j + 1] = pts[j]
            j -= 1
        pts[j + 1] = key
    k = 1
    for i in range(1, m):
        if pts[i] - pts[k - 1] > ZERO_TOL:
            pts[k] = pts[i]
            k += 1
    m = k
    for i in range(m):
        vals[i] = _balance(pts[i], lo, hi, c, chi, n, const, rho_min, rho_max)
    k = -1
    for i in range(m - 1, -1, -1):
        if vals[i] <= ZERO_TOL:
            k = i
            break
    if k == -1:
        return pts[0] - vals[0]
    if k == m - 1:
        return pts[k] - vals[k]
    f0 = vals[k]
    f1 = vals[k + 1]
    if f0 >= 0.0:
        return pts[k]
    return pts[k] + (-f0) * (pts[k + 1] - pts[k]) / (f1 - f0)


def max_root(lo, hi, c, chi, double const, double rho_min, double rho_max):
    cdef const double[::1] lo_v = np.ascontiguousarray(lo, dtype=np.float64)
    cdef const double[::1] hi_v = np.ascontiguousarray(hi, dtype=np.float64)
    cdef const double[::1] c_v = np.ascontiguousarray(c, dtype=np.float64)
    cdef const double[::1] chi_v = np.ascontiguousarray(chi, dtype=np.float64)
    cdef int n = lo_v.shape[0]
    cdef double[::1] pts = np.empty(2 * n + 2)
    cdef double[::1] vals = np.empty(2 * n + 2)
    if n == 0:
        return _max_root(NULL, NULL, NULL, NULL, 0, const, rho_min, rho_max, &pts[0], &vals[0])
    return _max_root(&lo_v[0], &hi_v[0], &c_v[0], &chi_v[0], n, const, rho_min, rho_max,
                     &pts[0], &vals[0])


def simulate_batch(U, DELTA, W, X0, int n_conv, int n_stor, int n_ren, p_min, p_max,
                   x_min, x_max, chi, double ts, double rho_min, double rho_max,
                   double rho_tol):
    cdef const double[:, :, ::1] u = np.ascontiguousarray(U, dtype=np.float64)
    cdef const double[:, :, ::1] d = np.ascontiguousarray(DELTA, dtype=np.float64)
    cdef const double[:, :, ::1] w = np.ascontiguousarray(W, dtype=np.float64)
    cdef const double[:, ::1] x0 = np.ascontiguousarray(X0, dtype=np.float64)
    cdef const double[::1] pmin = np.ascontiguousarray(p_min, dtype=np.float64)
    cdef const double[::1] pmax = np.ascontiguousarray(p_max, dtype=np.float64)
    cdef const double[::1] xmin = np.ascontiguousarray(x_min, dtype=np.float64)
    cdef const double[::1] xmax = np.ascontiguousarray(x_max, dtype=np.float64)
    cdef const double[::1] chiv = np.ascontiguousarray(chi, dtype=np.float64)
    cdef Py_ssize_t B = u.shape[0], N = u.shape[1], nu = u.shape[2], nd = w.shape[2]
    rho_arr = np.empty((B, N))
    P_arr = np.empty((B, N, nu))
    X_arr = np.empty((B, N, n_stor))
    F_arr = np.empty((B, N), dtype=np.uint8)
    R_arr = np.empty((B, N))
    cdef double[:, ::1] rho_o = rho_arr
    cdef double[:, :, ::1] P = P_arr
    cdef double[:, :, ::1] X = X_arr
    cdef unsigned char[:, ::1] F = F_arr
    cdef double[:, ::1] RES = R_arr
    cdef int T = n_conv, S = n_stor, R = n_ren
    cdef double* lo = <double*> malloc((nu + 1) * sizeof(double))
    cdef double* hi = <double*> malloc((nu + 1) * sizeof(double))
    cdef double* cc = <double*> malloc((nu + 1) * sizeof(double))
    cdef double* ch = <double*> malloc((nu + 1) * sizeof(double))
    cdef double* pts = <double*> malloc((2 * nu + 2) * sizeof(double))
    cdef double* vals = <double*> malloc((2 * nu + 2) * sizeof(double))
    cdef double* x = <double*> malloc((S + 1) * sizeof(double))
    cdef Py_ssize_t b, j, i, s, r, q
    cdef double a, z, wr, const, rho, v
    try:
        with nogil:
            for b in range(B):
                for s in range(S):
                    x[s] = x0[b, s]
                for j in range(N):
                    for i in range(T):
                        if d[b, j, i] > 0.5:
                            lo[i] = pmin[i]
                            hi[i] = pmax[i]
                            cc[i] = u[b, j, i]
                            ch[i] = chiv[i]
                        else:
                            lo[i] = 0.0
                            hi[i] = 0.0
                            cc[i] = 0.0
                            ch[i] = 0.0
                    for s in range(S):
                        i = T + s
                        a = (x[s] - xmax[s]) / ts
                        if pmin[i] > a:
                            a = pmin[i]
                        z = (x[s] - xmin[s]) / ts
                        if pmax[i] < z:
                            z = pmax[i]
                        if a > z:
                            a = z
                        lo[i] = a
                        hi[i] = z
                        cc[i] = u[b, j, i]
                        ch[i] = chiv[i]
                    for r in range(R):
                        i = T + S + r
                        wr = w[b, j, r]
                        lo[i] = pmin[i] if pmin[i] < wr else wr
                        hi[i] = wr
                        cc[i] = u[b, j, i]
                        ch[i] = chiv[i]
                    const = 0.0
                    for q in range(R, nd):
                        const += w[b, j, q]
                    rho = _max_root(lo, hi, cc, ch, <int> nu, const, rho_min, rho_max, pts, vals)
                    rho_o[b, j] = rho
                    for i in range(nu):
                        P[b, j, i] = _clip(cc[i] + ch[i] * rho, lo[i], hi[i])
                    for s in range(S):
                        x[s] = x[s] - ts * P[b, j, T + s]
                        X[b, j, s] = x[s]
                    F[b, j] = (rho >= rho_min - rho_tol) and (rho <= rho_max + rho_tol)
                    RES[b, j] = _balance(rho, lo, hi, cc, ch, <int> nu, const, rho_min, rho_max)
    finally:
        free(lo)
        free(hi)
        free(cc)
        free(ch)
        free(pts)
        free(vals)
        free(x)
    return rho_arr, P_arr, X_arr, F_arr.astype(bool), R_arr
