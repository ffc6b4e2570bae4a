# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled shortest augmenting path solver (see ``_assignment_py``)."""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def lsap_duals(cost_in):
    cdef double[:, ::1] cost = np.ascontiguousarray(cost_in, dtype=np.float64)
    cdef Py_ssize_t n = cost.shape[0]
    u_arr = np.zeros(n)
    v_arr = np.zeros(n)
    col4row_arr = np.full(n, -1, dtype=np.intp)
    row4col_arr = np.full(n, -1, dtype=np.intp)
    path_arr = np.full(n, -1, dtype=np.intp)
    spc_arr = np.empty(n)
    sr_arr = np.empty(n, dtype=np.uint8)
    sc_arr = np.empty(n, dtype=np.uint8)

    cdef double[::1] u = u_arr
    cdef double[::1] v = v_arr
    cdef Py_ssize_t[::1] col4row = col4row_arr
    cdef Py_ssize_t[::1] row4col = row4col_arr
    cdef Py_ssize_t[::1] path = path_arr
    cdef double[::1] spc = spc_arr
    cdef unsigned char[::1] sr = sr_arr
    cdef unsigned char[::1] sc = sc_arr

    cdef Py_ssize_t cur_row, i, j, k, sink, best, tmp
    cdef double min_val, lowest, r

    if n == 0:
        return col4row_arr, u_arr, v_arr

    # warm start: column then row reduction, greedy matching on tight edges
    for j in range(n):
        best = 0
        lowest = cost[0, j]
        for i in range(1, n):
            if cost[i, j] < lowest:
                lowest = cost[i, j]
                best = i
        v[j] = lowest
        if col4row[best] == -1:
            col4row[best] = j
            row4col[j] = best
    for i in range(n):
        best = 0
        lowest = cost[i, 0] - v[0]
        for j in range(1, n):
            r = cost[i, j] - v[j]
            if r < lowest:
                lowest = r
                best = j
        u[i] = lowest
        if col4row[i] == -1 and row4col[best] == -1:
            col4row[i] = best
            row4col[best] = i

    for cur_row in range(n):
        if col4row[cur_row] != -1:
            continue
        for k in range(n):
            spc[k] = INFINITY
            sr[k] = 0
            sc[k] = 0
        min_val = 0.0
        i = cur_row
        sink = -1
        while sink == -1:
            sr[i] = 1
            best = -1
            lowest = INFINITY
            for j in range(n):
                if sc[j]:
                    continue
                r = min_val + cost[i, j] - u[i] - v[j]
                if r < spc[j]:
                    path[j] = i
                    spc[j] = r
                if best == -1 or spc[j] < lowest or (
                    spc[j] == lowest and row4col[j] == -1 and row4col[best] != -1
                ):
                    if spc[j] < INFINITY or best == -1:
                        lowest = spc[j]
                        best = j
            if best == -1 or lowest == INFINITY:
                raise ValueError("cost matrix is infeasible")
            min_val = lowest
            j = best
            sc[j] = 1
            if row4col[j] == -1:
                sink = j
            else:
                i = row4col[j]

        u[cur_row] += min_val
        for i in range(n):
            if sr[i] and i != cur_row:
                u[i] += min_val - spc[col4row[i]]
        for j in range(n):
            if sc[j]:
                v[j] -= min_val - spc[j]

        j = sink
        while True:
            i = path[j]
            row4col[j] = i
            tmp = col4row[i]
            col4row[i] = j
            j = tmp
            if i == cur_row:
                break

    return col4row_arr, u_arr, v_arr
