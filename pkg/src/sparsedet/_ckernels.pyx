# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled grid kernels. Same contract as ``_pykernels``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef void _row_pass(const unsigned char[:, ::1] src, unsigned char[:, ::1] dst, int r, bint erode) noexcept nogil:
    cdef Py_ssize_t rows = src.shape[0], cols = src.shape[1]
    cdef Py_ssize_t i, j
    cdef int count, full = 2 * r + 1
    for i in range(rows):
        count = 0
        for j in range(min(r, cols)):
            count += src[i, j]
        for j in range(cols):
            if j + r < cols:
                count += src[i, j + r]
            if j - r - 1 >= 0:
                count -= src[i, j - r - 1]
            if erode:
                dst[i, j] = 1 if count == full else 0
            else:
                dst[i, j] = 1 if count > 0 else 0


cdef void _col_pass(const unsigned char[:, ::1] src, unsigned char[:, ::1] dst, int r, bint erode, int[::1] count) noexcept nogil:
    cdef Py_ssize_t rows = src.shape[0], cols = src.shape[1]
    cdef Py_ssize_t i, j
    cdef int full = 2 * r + 1
    for j in range(cols):
        count[j] = 0
    for i in range(min(r, rows)):
        for j in range(cols):
            count[j] += src[i, j]
    for i in range(rows):
        if i + r < rows:
            for j in range(cols):
                count[j] += src[i + r, j]
        if i - r - 1 >= 0:
            for j in range(cols):
                count[j] -= src[i - r - 1, j]
        if erode:
            for j in range(cols):
                dst[i, j] = 1 if count[j] == full else 0
        else:
            for j in range(cols):
                dst[i, j] = 1 if count[j] > 0 else 0


def _square(grid, int r, bint erode):
    cdef const unsigned char[:, ::1] src = np.ascontiguousarray(grid, dtype=np.uint8)
    tmp = np.empty_like(np.asarray(src))
    out = np.empty_like(tmp)
    cdef unsigned char[:, ::1] tv = tmp
    cdef unsigned char[:, ::1] ov = out
    cdef int[::1] count = np.zeros(src.shape[1], dtype=np.intc)
    with nogil:
        _row_pass(src, tv, r, erode)
        _col_pass(tv, ov, r, erode, count)
    return out


def dilate_square(grid, int r):
    return _square(grid, r, False)


def erode_square(grid, int r):
    return _square(grid, r, True)


def label_components(grid, int connectivity):
    """Label occupied cells; labels start at 1 in raster order of each component's first cell."""
    cdef const unsigned char[:, ::1] g = np.ascontiguousarray(grid, dtype=np.uint8)
    cdef Py_ssize_t rows = g.shape[0], cols = g.shape[1]
    labels_arr = np.zeros((rows, cols), dtype=np.int32)
    cdef int[:, ::1] labels = labels_arr
    queue_arr = np.empty(max(rows * cols, 1), dtype=np.intp)
    cdef Py_ssize_t[::1] queue = queue_arr
    cdef int di[8]
    cdef int dj[8]
    cdef int nn, k, current = 0
    cdef Py_ssize_t i, j, head, tail, idx, ci, cj, ni, nj
    di[0] = -1; dj[0] = 0
    di[1] = 1; dj[1] = 0
    di[2] = 0; dj[2] = -1
    di[3] = 0; dj[3] = 1
    di[4] = -1; dj[4] = -1
    di[5] = -1; dj[5] = 1
    di[6] = 1; dj[6] = -1
    di[7] = 1; dj[7] = 1
    nn = 8 if connectivity == 8 else 4
    with nogil:
        for i in range(rows):
            for j in range(cols):
                if g[i, j] == 0 or labels[i, j] != 0:
                    continue
                current += 1
                labels[i, j] = current
                head = 0
                tail = 0
                queue[tail] = i * cols + j
                tail += 1
                while head < tail:
                    idx = queue[head]
                    head += 1
                    ci = idx // cols
                    cj = idx - ci * cols
                    for k in range(nn):
                        ni = ci + di[k]
                        nj = cj + dj[k]
                        if ni < 0 or ni >= rows or nj < 0 or nj >= cols:
                            continue
                        if g[ni, nj] != 0 and labels[ni, nj] == 0:
                            labels[ni, nj] = current
                            queue[tail] = ni * cols + nj
                            tail += 1
    return labels_arr, current
