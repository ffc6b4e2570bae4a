"""Exact linear sum assignment with a deterministic tie-break.

The O(B^3) shortest augmenting path core comes from a compiled extension when
it is available and from a numpy implementation otherwise. Set
``COUNTFLOW_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

from . import _assignment_py

try:
    if os.environ.get("COUNTFLOW_PURE_PYTHON"):
        raise ImportError("compiled backend disabled by environment")
    from . import _assignment_ext as _backend

    BACKEND = "compiled"
except ImportError:
    _backend = _assignment_py
    BACKEND = "python"

__all__ = ["BACKEND", "solve_assignment", "assignment_cost", "lsap_duals"]


def lsap_duals(cost, backend=None):
    """Run the raw solver; ``backend`` is ``"compiled"``, ``"python"`` or None."""
    if backend is None:
        impl = _backend
    elif backend == "python":
        impl = _assignment_py
    elif backend == "compiled":
        from . import _assignment_ext as impl
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return impl.lsap_duals(cost)


def _validate(cost):
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"cost matrix must be square, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix contains non-finite entries")
    return cost


def _canonicalize(perm, tight):
    """Rewrite ``perm`` into the lexicographically smallest perfect matching of
    the tight-edge graph ``tight`` (rows fixed greedily in index order)."""
    n = len(perm)
    perm = perm.copy()
    owner = np.empty(n, dtype=np.intp)
    owner[perm] = np.arange(n)
    fixed_cols = np.zeros(n, dtype=bool)

    for i in range(n):
        target = perm[i]
        for j in np.flatnonzero(tight[i, :target]):
            k = owner[j]
            if k < i:
                continue
            # alternating search: free column j from row k, ending at column target
            visited = fixed_cols.copy()
            visited[j] = True
            parent_col = {}
            frontier = [k]
            found = None
            while frontier and found is None:
                nxt = []
                for r in frontier:
                    cols = np.flatnonzero(tight[r] & ~visited)
                    for c in cols:
                        visited[c] = True
                        parent_col[c] = r
                        if c == target:
                            found = c
                            break
                        nxt.append(owner[c])
                    if found is not None:
                        break
                frontier = nxt
            if found is None:
                continue
            c = found
            while True:
                r = parent_col[c]
                prev = perm[r]
                perm[r] = c
                owner[c] = r
                if r == k:
                    break
                c = prev
            perm[i] = j
            owner[j] = i
            break
        fixed_cols[perm[i]] = True
    return perm


def solve_assignment(cost, backend=None):
    """Minimum-cost permutation for a square cost matrix.

    Among all optimal permutations the lexicographically smallest one is
    returned, so results do not depend on the backend or on solver order.

    Args:
        cost: (B, B) array of finite reals.
        backend: force ``"compiled"`` or ``"python"``; default is the
            import-time selection.

    Returns:
        Integer array ``perm`` with row ``i`` assigned to column ``perm[i]``.
    """
    cost = _validate(cost)
    n = cost.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.intp)
    perm, u, v = lsap_duals(cost, backend=backend)
    reduced = cost - u[:, None] - v[None, :]
    tol = 1e-9 * (1.0 + np.abs(cost).max())
    tight = reduced <= tol
    return _canonicalize(np.asarray(perm, dtype=np.intp), tight)


def assignment_cost(cost, perm):
    cost = np.asarray(cost, dtype=np.float64)
    return float(cost[np.arange(len(perm)), perm].sum())
