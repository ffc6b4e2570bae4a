"""Pure-numpy shortest augmenting path solver.

Mirrors ``_assignment_ext.pyx`` operation for operation so that both backends
return identical assignments and duals on the same input.
"""
import numpy as np


def lsap_duals(cost):
    """Solve a square linear sum assignment problem.

    Returns ``(col4row, u, v)`` where ``col4row[i]`` is the column assigned to
    row ``i`` and ``(u, v)`` are optimal row/column duals, so that
    ``cost[i, j] - u[i] - v[j] >= 0`` with equality on the assignment.
    """
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    n = cost.shape[0]
    u = np.zeros(n)
    v = np.zeros(n)
    col4row = np.full(n, -1, dtype=np.intp)
    row4col = np.full(n, -1, dtype=np.intp)
    path = np.full(n, -1, dtype=np.intp)
    if n == 0:
        return col4row, u, v

    # warm start: column then row reduction, greedy matching on tight edges
    v[:] = cost.min(0)
    for j in range(n):
        i = int(np.argmin(cost[:, j]))
        if col4row[i] == -1:
            col4row[i] = j
            row4col[j] = i
    for i in range(n):
        reduced = cost[i] - v
        j = int(np.argmin(reduced))
        u[i] = reduced[j]
        if col4row[i] == -1 and row4col[j] == -1:
            col4row[i] = j
            row4col[j] = i

    for cur_row in range(n):
        if col4row[cur_row] != -1:
            continue
        spc = np.full(n, np.inf)
        scanned_rows = np.zeros(n, dtype=bool)
        scanned_cols = np.zeros(n, dtype=bool)
        min_val = 0.0
        i = cur_row
        sink = -1
        while sink == -1:
            scanned_rows[i] = True
            remaining = ~scanned_cols
            r = min_val + cost[i] - u[i] - v
            better = remaining & (r < spc)
            path[better] = i
            spc[better] = r[better]

            masked = np.where(remaining, spc, np.inf)
            lowest = masked.min()
            if not np.isfinite(lowest):
                raise ValueError("cost matrix is infeasible")
            ties = remaining & (spc == lowest)
            free_ties = ties & (row4col == -1)
            j = int(np.argmax(free_ties)) if free_ties.any() else int(np.argmax(ties))

            min_val = lowest
            scanned_cols[j] = True
            if row4col[j] == -1:
                sink = j
            else:
                i = row4col[j]

        u[cur_row] += min_val
        rows = np.flatnonzero(scanned_rows)
        rows = rows[rows != cur_row]
        u[rows] += min_val - spc[col4row[rows]]
        v[scanned_cols] -= min_val - spc[scanned_cols]

        j = sink
        while True:
            i = path[j]
            row4col[j] = i
            col4row[i], j = j, col4row[i]
            if i == cur_row:
                break

    return col4row, u, v
