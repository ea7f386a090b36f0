# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; see ``_pykernels`` for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()

NAME = "cython"


def label_components(mask, int connectivity=4):
    if connectivity != 4 and connectivity != 8:
        raise ValueError("connectivity must be 4 or 8")
    cdef const unsigned char[:, ::1] fg = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef Py_ssize_t h = fg.shape[0], w = fg.shape[1]
    labels_arr = np.zeros((h, w), dtype=np.int32)
    cdef int[:, ::1] lab = labels_arr
    queue_arr = np.empty(max(h * w, 1), dtype=np.intp)
    cdef Py_ssize_t[::1] queue = queue_arr
    cdef int dys[8]
    cdef int dxs[8]
    cdef int n_off
    if connectivity == 4:
        dys[:4] = [-1, 1, 0, 0]
        dxs[:4] = [0, 0, -1, 1]
        n_off = 4
    else:
        dys[:8] = [-1, -1, -1, 0, 0, 1, 1, 1]
        dxs[:8] = [-1, 0, 1, -1, 1, -1, 0, 1]
        n_off = 8
    cdef int n = 0
    cdef Py_ssize_t y0, x0, y, x, yy, xx, head, tail, p
    cdef int k
    for y0 in range(h):
        for x0 in range(w):
            if fg[y0, x0] == 0 or lab[y0, x0] != 0:
                continue
            n += 1
            lab[y0, x0] = n
            head = 0
            tail = 0
            queue[tail] = y0 * w + x0
            tail += 1
            while head < tail:
                p = queue[head]
                head += 1
                y = p // w
                x = p - y * w
                for k in range(n_off):
                    yy = y + dys[k]
                    xx = x + dxs[k]
                    if 0 <= yy < h and 0 <= xx < w and fg[yy, xx] != 0 and lab[yy, xx] == 0:
                        lab[yy, xx] = n
                        queue[tail] = yy * w + xx
                        tail += 1
    return labels_arr, n


def fused_step(x, eps_subs, masks, gammas, eps_surr, eps_uc,
               double s, double sa, double sb, double sap, double sbp, bint final):
    cdef const double[:, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, :, :, ::1] es = np.ascontiguousarray(eps_subs, dtype=np.float64)
    cdef const double[:, :, ::1] ms = np.ascontiguousarray(masks, dtype=np.float64)
    cdef const double[::1] gs = np.ascontiguousarray(gammas, dtype=np.float64)
    cdef const double[:, :, ::1] er = np.ascontiguousarray(eps_surr, dtype=np.float64)
    cdef const double[:, :, ::1] eu = np.ascontiguousarray(eps_uc, dtype=np.float64)
    cdef Py_ssize_t h = xv.shape[0], w = xv.shape[1], c = xv.shape[2], n = gs.shape[0]
    if es.shape[0] != n or ms.shape[0] != n:
        raise ValueError("branch count mismatch")
    out_arr = np.empty((h, w, c), dtype=np.float64)
    eh_arr = np.empty((h, w, c), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef double[:, :, ::1] eh = eh_arr
    cdef Py_ssize_t i, j, ch, b
    cdef double msum, acc, e, x0
    for i in range(h):
        for j in range(w):
            msum = ms[0, i, j]
            for b in range(1, n):
                msum = msum + ms[b, i, j]
            for ch in range(c):
                acc = (gs[0] * ms[0, i, j]) * es[0, i, j, ch]
                for b in range(1, n):
                    acc = acc + (gs[b] * ms[b, i, j]) * es[b, i, j, ch]
                acc = acc + (1.0 - msum) * er[i, j, ch]
                e = acc + (s - 1.0) * (acc - eu[i, j, ch])
                eh[i, j, ch] = e
                x0 = (xv[i, j, ch] - sb * e) / sa
                if final:
                    out[i, j, ch] = x0
                else:
                    out[i, j, ch] = sap * x0 + sbp * e
    return out_arr, eh_arr


def blur_separable(img, kernel):
    cdef const double[:, ::1] src = np.ascontiguousarray(img, dtype=np.float64)
    cdef const double[::1] kv = np.ascontiguousarray(kernel, dtype=np.float64)
    cdef Py_ssize_t h = src.shape[0], w = src.shape[1], klen = kv.shape[0]
    cdef Py_ssize_t r = klen // 2
    tmp_arr = np.zeros((h, w), dtype=np.float64)
    out_arr = np.zeros((h, w), dtype=np.float64)
    cdef double[:, ::1] tmp = tmp_arr
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, k, jj, ii
    cdef double acc
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for k in range(klen):
                jj = j + k - r
                if 0 <= jj < w:
                    acc += kv[k] * src[i, jj]
            tmp[i, j] = acc
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for k in range(klen):
                ii = i + k - r
                if 0 <= ii < h:
                    acc += kv[k] * tmp[ii, j]
            out[i, j] = acc
    return out_arr


def attention_received(scores):
    cdef const double[:, :, ::1] sv = np.ascontiguousarray(scores, dtype=np.float64)
    cdef Py_ssize_t nh = sv.shape[0], nq = sv.shape[1], nk = sv.shape[2]
    col_arr = np.zeros(nk, dtype=np.float64)
    row_arr = np.empty(nk, dtype=np.float64)
    cdef double[::1] col = col_arr
    cdef double[::1] row = row_arr
    cdef Py_ssize_t hh, i, j
    cdef double m, tot
    for hh in range(nh):
        for i in range(nq):
            m = sv[hh, i, 0]
            for j in range(1, nk):
                if sv[hh, i, j] > m:
                    m = sv[hh, i, j]
            tot = 0.0
            for j in range(nk):
                row[j] = exp(sv[hh, i, j] - m)
                tot += row[j]
            for j in range(nk):
                col[j] += row[j] / tot
    for j in range(nk):
        col[j] /= nh
    return col_arr
