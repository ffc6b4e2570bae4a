"""Pairing source and target minibatches: independent or exact minibatch OT."""
from dataclasses import dataclass

import numpy as np

from .assignment import solve_assignment
from .bridge import as_counts

__all__ = [
    "EndpointBatch",
    "symmetric_poisson_cost",
    "cost_matrix",
    "independent_pairs",
    "ot_pairs",
]


@dataclass
class EndpointBatch:
    x0: np.ndarray
    x1: np.ndarray
    condition: np.ndarray = None
    coupling_kind: str = "independent"
    perm: np.ndarray = None

    def __len__(self):
        return len(self.x0)

    def mean_cost(self, eps_c=1e-8):
        return float(np.mean(symmetric_poisson_cost(self.x0, self.x1, eps_c)))


def symmetric_poisson_cost(x, y, eps_c=1e-8):
    """Symmetrized generalized KL between count vectors (last axis summed).

    Written as ``sum (x - y) * (log(x + eps_c) - log(y + eps_c))``, which is
    algebraically the two-sided form and exactly symmetric in floating point.
    """
    if not eps_c > 0:
        raise ValueError("eps_c must be positive")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[-1] != y.shape[-1]:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return ((x - y) * (np.log(x + eps_c) - np.log(y + eps_c))).sum(-1)


def cost_matrix(source, target, eps_c=1e-8):
    """(B, B') matrix of symmetric Poisson costs."""
    return symmetric_poisson_cost(np.asarray(source)[:, None, :], np.asarray(target)[None, :, :], eps_c)


def _check_batches(source, target):
    source = as_counts(source, "source")
    target = as_counts(target, "target")
    if source.ndim != 2 or target.ndim != 2:
        raise ValueError("batches must be 2-D (B, d) arrays")
    if source.shape[0] != target.shape[0]:
        raise ValueError(f"batch size mismatch: {source.shape[0]} vs {target.shape[0]}")
    if source.shape[1] != target.shape[1]:
        raise ValueError(f"dimension mismatch: {source.shape[1]} vs {target.shape[1]}")
    return source, target


def _take(condition, perm):
    return None if condition is None else np.asarray(condition)[perm]


def independent_pairs(source, target, rng, condition=None):
    """Pair ``source[i]`` with ``target[perm[i]]`` for a uniform random perm.

    ``condition`` holds per-target labels and travels with the target rows.
    """
    source, target = _check_batches(source, target)
    perm = rng.permutation(len(target))
    return EndpointBatch(source, target[perm], _take(condition, perm), "independent", perm)


def ot_pairs(source, target, eps_c=1e-8, condition=None, source_groups=None, target_groups=None):
    """Exact OT pairing under the symmetric Poisson cost.

    With group labels, matching is solved separately inside each group and
    every group must hold the same number of source and target rows.
    """
    source, target = _check_batches(source, target)
    n = len(source)
    if source_groups is None and target_groups is None:
        perm = solve_assignment(cost_matrix(source, target, eps_c))
    else:
        if source_groups is None or target_groups is None:
            raise ValueError("both source_groups and target_groups are required")
        source_groups = np.asarray(source_groups)
        target_groups = np.asarray(target_groups)
        perm = np.full(n, -1, dtype=np.intp)
        for g in np.unique(np.concatenate([source_groups, target_groups])):
            rows = np.flatnonzero(source_groups == g)
            cols = np.flatnonzero(target_groups == g)
            if len(rows) != len(cols):
                raise ValueError(
                    f"group {g!r} has {len(rows)} source and {len(cols)} target rows"
                )
            if len(rows):
                sub = solve_assignment(cost_matrix(source[rows], target[cols], eps_c))
                perm[rows] = cols[sub]
    return EndpointBatch(source, target[perm], _take(condition, perm), "ot", perm)
