# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Mirrors the API of ``_pykernels``.

Convolution taps go straight to BLAS sgemm (via scipy's cython_blas) with
beta=1, accumulating in place on the padded grid instead of allocating a
temporary per tap.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY
from scipy.linalg.cython_blas cimport sgemm

cnp.import_array()


def pad_replicate(x, pads):
    cdef const float[:, :, :, ::1] src = np.ascontiguousarray(x, dtype=np.float32)
    cdef int pt = pads[0], py = pads[1], px = pads[2]
    cdef Py_ssize_t c = src.shape[0], t = src.shape[1], y = src.shape[2], xx = src.shape[3]
    out = np.empty((c, t + 2 * pt, y + 2 * py, xx + 2 * px), dtype=np.float32)
    cdef float[:, :, :, ::1] dst = out
    cdef Py_ssize_t ci, ti, yi, xi, st, sy, sx
    for ci in range(c):
        for ti in range(t + 2 * pt):
            st = min(max(ti - pt, 0), t - 1)
            for yi in range(y + 2 * py):
                sy = min(max(yi - py, 0), y - 1)
                for xi in range(xx + 2 * px):
                    sx = min(max(xi - px, 0), xx - 1)
                    dst[ci, ti, yi, xi] = src[ci, st, sy, sx]
    return out


def unpad_replicate_adjoint(g, pads):
    cdef const float[:, :, :, ::1] src = np.ascontiguousarray(g, dtype=np.float32)
    cdef int pt = pads[0], py = pads[1], px = pads[2]
    cdef Py_ssize_t c = src.shape[0]
    cdef Py_ssize_t t = src.shape[1] - 2 * pt, y = src.shape[2] - 2 * py, xx = src.shape[3] - 2 * px
    out = np.zeros((c, t, y, xx), dtype=np.float32)
    cdef float[:, :, :, ::1] dst = out
    cdef Py_ssize_t ci, ti, yi, xi, st, sy, sx
    # same traversal order as the forward gather, so sums are deterministic
    for ci in range(c):
        for ti in range(t + 2 * pt):
            st = min(max(ti - pt, 0), t - 1)
            for yi in range(y + 2 * py):
                sy = min(max(yi - py, 0), y - 1)
                for xi in range(xx + 2 * px):
                    sx = min(max(xi - px, 0), xx - 1)
                    dst[ci, st, sy, sx] += src[ci, ti, yi, xi]
    return out


cdef inline void _gemm_rm(char *ta, char *tb, int m, int n, int k,
                          float *a, int lda, float *b, int ldb,
                          float beta, float *c, int ldc) nogil:
    # column-major sgemm: C(m x n) = op(A) op(B) + beta C
    cdef float alpha = 1.0
    sgemm(ta, tb, &m, &n, &k, &alpha, a, &lda, b, &ldb, &beta, c, &ldc)


def _taps(kt, ky, kx, yp, xp):
    return [dt * yp * xp + dy * xp + dx
            for dt in range(kt) for dy in range(ky) for dx in range(kx)]


def conv3d_forward(xpad, w, b):
    cdef const float[:, :, :, ::1] xv = np.ascontiguousarray(xpad, dtype=np.float32)
    cout, cin, kt, ky, kx = w.shape
    _, tp, yp, xp = xpad.shape
    t, y, x = tp - 2 * (kt // 2), yp - 2 * (ky // 2), xp - 2 * (kx // 2)
    cdef int grid = tp * yp * xp
    cdef int span = (t - 1) * yp * xp + (y - 1) * xp + x
    cdef int icout = cout, icin = cin
    wk_arr = np.ascontiguousarray(
        np.asarray(w, dtype=np.float32).transpose(2, 3, 4, 0, 1).reshape(-1, cout, cin))
    cdef float[:, :, ::1] wk = wk_arr
    out = np.zeros((cout, tp, yp, xp), dtype=np.float32)
    cdef float[:, :, :, ::1] ov = out
    cdef float *xptr = <float *> &xv[0, 0, 0, 0]
    cdef float *optr = &ov[0, 0, 0, 0]
    cdef int k, off
    offsets = _taps(kt, ky, kx, yp, xp)
    for k in range(len(offsets)):
        off = offsets[k]
        # out^T (span x cout) += X_shift^T (span x cin) @ W_k^T (cin x cout)
        _gemm_rm(b"N", b"N", span, icout, icin, xptr + off, grid,
                 &wk[k, 0, 0], icin, 1.0, optr, grid)
    cdef const float[::1] bv = np.ascontiguousarray(b, dtype=np.float32)
    z = np.empty((cout, t, y, x), dtype=np.float32)
    cdef float[:, :, :, ::1] zv = z
    cdef Py_ssize_t co, ti, yi, xi
    cdef Py_ssize_t T = t, Y = y, X = x
    for co in range(icout):
        for ti in range(T):
            for yi in range(Y):
                for xi in range(X):
                    zv[co, ti, yi, xi] = ov[co, ti, yi, xi] + bv[co]
    return z


def conv3d_backward(xpad, w, dz, need_dx=True):
    cdef const float[:, :, :, ::1] xv = np.ascontiguousarray(xpad, dtype=np.float32)
    cout, cin, kt, ky, kx = w.shape
    _, tp, yp, xp = xpad.shape
    t, y, x = tp - 2 * (kt // 2), yp - 2 * (ky // 2), xp - 2 * (kx // 2)
    cdef int grid = tp * yp * xp
    cdef int span = (t - 1) * yp * xp + (y - 1) * xp + x
    cdef int icout = cout, icin = cin
    dgrid = np.zeros((cout, tp, yp, xp), dtype=np.float32)
    dgrid[:, :t, :y, :x] = dz
    cdef float[:, :, :, ::1] dv = dgrid
    wk_arr = np.ascontiguousarray(
        np.asarray(w, dtype=np.float32).transpose(2, 3, 4, 0, 1).reshape(-1, cout, cin))
    cdef float[:, :, ::1] wk = wk_arr
    ntap = kt * ky * kx
    dwk_arr = np.zeros((ntap, cout, cin), dtype=np.float32)
    cdef float[:, :, ::1] dwk = dwk_arr
    cdef float *xptr = <float *> &xv[0, 0, 0, 0]
    cdef float *dptr = &dv[0, 0, 0, 0]
    cdef float *dxptr = NULL
    cdef bint want_dx = need_dx
    dxpad = None
    cdef float[:, :, :, ::1] dxv
    if want_dx:
        dxpad = np.zeros((cin, tp, yp, xp), dtype=np.float32)
        dxv = dxpad
        dxptr = &dxv[0, 0, 0, 0]
    cdef int k, off
    offsets = _taps(kt, ky, kx, yp, xp)
    for k in range(ntap):
        off = offsets[k]
        # dW_k^T (cin x cout) = X_shift (cin x span) @ dZ^T (span x cout)
        _gemm_rm(b"T", b"N", icin, icout, span, xptr + off, grid,
                 dptr, grid, 0.0, &dwk[k, 0, 0], icin)
        if want_dx:
            # dX_shift^T (span x cin) += dZ^T (span x cout) @ W_k (cout x cin)
            _gemm_rm(b"N", b"T", span, icin, icout, dptr, grid,
                     &wk[k, 0, 0], icin, 1.0, dxptr + off, grid)
    dw = dwk_arr.reshape(kt, ky, kx, cout, cin).transpose(3, 4, 0, 1, 2)
    db = np.asarray(dz).reshape(cout, -1).sum(axis=1, dtype=np.float64).astype(np.float32)
    return np.ascontiguousarray(dw), db, dxpad


def resample_axis(a, int axis, idx, wts):
    arr = np.ascontiguousarray(a, dtype=np.float32)
    shape = arr.shape
    cdef Py_ssize_t outer = 1, inner = 1, i
    for i in range(axis):
        outer *= shape[i]
    for i in range(axis + 1, arr.ndim):
        inner *= shape[i]
    cdef Py_ssize_t n_in = shape[axis]
    cdef Py_ssize_t n_out = idx.shape[0]
    cdef Py_ssize_t taps = idx.shape[1]
    cdef const float[:, :, ::1] src = arr.reshape(outer, n_in, inner)
    cdef const long long[:, ::1] iv = np.ascontiguousarray(idx, dtype=np.int64)
    cdef const double[:, ::1] wv = np.ascontiguousarray(wts, dtype=np.float64)
    out = np.empty((outer, n_out, inner), dtype=np.float32)
    cdef float[:, :, ::1] dst = out
    acc_arr = np.empty(inner, dtype=np.float64)
    cdef double[::1] acc = acc_arr
    cdef Py_ssize_t o, j, m, q, s
    cdef double wm
    for o in range(outer):
        for j in range(n_out):
            for q in range(inner):
                acc[q] = 0.0
            for m in range(taps):
                s = iv[j, m]
                wm = wv[j, m]
                for q in range(inner):
                    acc[q] += wm * src[o, s, q]
            for q in range(inner):
                dst[o, j, q] = <float>acc[q]
    new_shape = shape[:axis] + (n_out,) + shape[axis + 1:]
    return out.reshape(new_shape)


def ssd_topk(queries, cands, int k, qpos, cpos, cpool, int excl_pool, int radius):
    cdef const float[:, ::1] qv = np.ascontiguousarray(queries, dtype=np.float32)
    cdef const float[:, ::1] cv = np.ascontiguousarray(cands, dtype=np.float32)
    cdef const long long[:, ::1] qp = np.ascontiguousarray(qpos, dtype=np.int64)
    cdef const long long[:, ::1] cp = np.ascontiguousarray(cpos, dtype=np.int64)
    cdef const int[::1] pool = np.ascontiguousarray(cpool, dtype=np.int32)
    cdef Py_ssize_t nq = qv.shape[0], nc = cv.shape[0], nd = qv.shape[1]
    idx_arr = np.full((nq, k), -1, dtype=np.int64)
    dist_arr = np.full((nq, k), np.inf, dtype=np.float64)
    cdef long long[:, ::1] best_i = idx_arr
    cdef double[:, ::1] best_d = dist_arr
    cdef Py_ssize_t q, c, j, slot
    cdef double acc, diff, worst
    cdef long long dt, dy, dx, cheb
    for q in range(nq):
        worst = INFINITY
        for c in range(nc):
            if pool[c] == excl_pool:
                dt = cp[c, 0] - qp[q, 0]
                dy = cp[c, 1] - qp[q, 1]
                dx = cp[c, 2] - qp[q, 2]
                cheb = dt if dt >= 0 else -dt
                if dy > cheb or -dy > cheb:
                    cheb = dy if dy >= 0 else -dy
                if dx > cheb or -dx > cheb:
                    cheb = dx if dx >= 0 else -dx
                if cheb <= radius:
                    continue
            acc = 0.0
            for j in range(nd):
                diff = <double>cv[c, j] - <double>qv[q, j]
                acc += diff * diff
                if acc > worst:
                    break
            if acc >= worst and best_i[q, k - 1] >= 0:
                continue
            if acc == INFINITY:
                continue
            # insert after any equal distances: earlier candidates win ties
            slot = k - 1
            while slot > 0 and (best_i[q, slot - 1] < 0 or best_d[q, slot - 1] > acc):
                best_d[q, slot] = best_d[q, slot - 1]
                best_i[q, slot] = best_i[q, slot - 1]
                slot -= 1
            best_d[q, slot] = acc
            best_i[q, slot] = c
            if best_i[q, k - 1] >= 0:
                worst = best_d[q, k - 1]
    return idx_arr, dist_arr
