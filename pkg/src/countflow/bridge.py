"""Conditional binomial bridge between two count vectors.

Each coordinate moves from ``x0`` to ``x1`` through a Binomial(|x1 - x0|, t)
number of unit steps. The closed-form birth/death rates that generate this
path, the exact marginal pmf, and a forward-simulation oracle live here.
"""
from dataclasses import dataclass
from math import comb
from typing import NamedTuple

import numpy as np

__all__ = [
    "EpsilonConfig",
    "ConditionalRates",
    "as_counts",
    "sample_bridge",
    "bridge_pmf",
    "conditional_rates",
    "kfe_residual",
    "simulate_conditional_ctmc",
]


@dataclass(frozen=True)
class EpsilonConfig:
    """Numerical stabilizers.

    eps_t clamps ``1 - t``, eps_l floors the log in the loss, eps_r guards the
    jump split when the total rate is 0, eps_c smooths the transport cost.
    """

    eps_t: float = 1e-3
    eps_l: float = 1e-8
    eps_r: float = 1e-12
    eps_c: float = 1e-8

    def __post_init__(self):
        for name in ("eps_t", "eps_l", "eps_r", "eps_c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if not self.eps_t < 0.5:
            raise ValueError("eps_t must be below 0.5")


class ConditionalRates(NamedTuple):
    birth: np.ndarray
    death: np.ndarray


def as_counts(x, name="x"):
    """Validate and convert to an int64 count array."""
    arr = np.asarray(x)
    if arr.dtype.kind == "f":
        if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
            raise ValueError(f"{name} must contain integer counts")
    elif arr.dtype.kind not in "iub":
        raise TypeError(f"{name} must be numeric, got dtype {arr.dtype}")
    arr = arr.astype(np.int64)
    if np.any(arr < 0):
        raise ValueError(f"{name} contains negative counts")
    return arr


def _check_pair(x0, x1):
    x0 = as_counts(x0, "x0")
    x1 = as_counts(x1, "x1")
    if x0.shape[-1:] != x1.shape[-1:]:
        raise ValueError(f"dimension mismatch: {x0.shape} vs {x1.shape}")
    return x0, x1


def sample_bridge(x0, x1, t, rng):
    """Draw ``X_t`` from the binomial bridge pinned at ``x0`` and ``x1``.

    ``x0`` and ``x1`` may be single vectors of shape (d,) or batches of shape
    (B, d); ``t`` is a scalar or an array of per-row times of shape (B,).
    """
    x0, x1 = _check_pair(x0, x1)
    t = np.asarray(t, dtype=np.float64)
    if np.any((t < 0) | (t > 1)) or not np.all(np.isfinite(t)):
        raise ValueError("t must lie in [0, 1]")
    gap = x1 - x0
    if t.ndim == 1:
        t = t[:, None]
    steps = rng.binomial(np.abs(gap), np.broadcast_to(t, gap.shape))
    return x0 + np.sign(gap) * steps


def bridge_pmf(x0, x1, t, x):
    """P(X_t = x) for the one-dimensional bridge from ``x0`` to ``x1``."""
    n = abs(x1 - x0)
    k = (x - x0) if x1 >= x0 else (x0 - x)
    if k < 0 or k > n:
        return 0.0
    return comb(n, k) * t**k * (1.0 - t) ** (n - k)


def conditional_rates(x, x1, t, eps=None):
    """Birth and death rates of the bridge toward ``x1`` at state ``x``.

    With ``eps=None`` the denominator is the exact ``1 - t``; otherwise it is
    ``1 - t + eps.eps_t``. ``t`` may be a per-row array for batched ``x``.
    """
    x = as_counts(x, "x")
    x1 = as_counts(x1, "x1")
    if x.shape[-1:] != x1.shape[-1:]:
        raise ValueError(f"dimension mismatch: {x.shape} vs {x1.shape}")
    t = np.asarray(t, dtype=np.float64)
    denom = 1.0 - t + (eps.eps_t if eps is not None else 0.0)
    if np.any(denom <= 0):
        raise ValueError("t too close to 1 for the rate denominator")
    if denom.ndim == 1:
        denom = denom[:, None]
    birth = np.maximum(x1 - x, 0) / denom
    death = np.maximum(x - x1, 0) / denom
    return ConditionalRates(birth, death)


def _exact_rates_1d(x1, t, y):
    return max(x1 - y, 0) / (1.0 - t), max(y - x1, 0) / (1.0 - t)


def kfe_residual(x0, x1, t, x, dt=1e-4):
    """Absolute mismatch in the forward equation at state ``x`` and time ``t``.

    The time derivative of the pmf is a central difference with step ``dt``;
    the influx/outflux side uses the exact rates.
    """
    if not (0.0 < t - dt and t + dt < 1.0):
        raise ValueError("t +/- dt must stay inside (0, 1)")
    dp = (bridge_pmf(x0, x1, t + dt, x) - bridge_pmf(x0, x1, t - dt, x)) / (2 * dt)
    lam_below, _ = _exact_rates_1d(x1, t, x - 1)
    _, mu_above = _exact_rates_1d(x1, t, x + 1)
    lam, mu = _exact_rates_1d(x1, t, x)
    rhs = (
        lam_below * bridge_pmf(x0, x1, t, x - 1)
        + mu_above * bridge_pmf(x0, x1, t, x + 1)
        - (lam + mu) * bridge_pmf(x0, x1, t, x)
    )
    return abs(dp - rhs)


def simulate_conditional_ctmc(
    x0, x1, n_steps, eps=None, rng=None, record_steps=None, stabilized=False
):
    """Run the local-jump scheme with the exact bridge rates toward ``x1``.

    Integrates from t=0 to t=1-eps_t in ``n_steps`` equal steps, evaluating
    rates at the left end of each step. ``x0``/``x1`` may be batches of shape
    (R, d) to simulate R replicates at once.

    The rates use the exact ``1 - t`` denominator; eps_t only sets the horizon,
    which keeps them finite. ``stabilized=True`` switches to ``1 - t + eps_t``,
    the form used for training targets. That version is slower to finish: each
    remaining unit step is still pending at the horizon with probability
    about ``2 eps_t``, against ``eps_t`` for the exact rates.

    Args:
        record_steps: step indices (0..n_steps) to store; all steps if None.

    Returns:
        Trajectory with ``states`` of shape (len(times),) + x0.shape.
    """
    from .sampler import Trajectory, jump_step

    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    eps = eps or EpsilonConfig()
    rng = rng if rng is not None else np.random.default_rng()
    x0, x1 = _check_pair(x0, x1)
    x1 = np.broadcast_to(x1, x0.shape)
    delta = (1.0 - eps.eps_t) / n_steps
    keep = set(range(n_steps + 1)) if record_steps is None else set(record_steps)

    x = x0.copy()
    times, states = [], []
    if 0 in keep:
        times.append(0.0)
        states.append(x.copy())
    for k in range(n_steps):
        t = k * delta
        birth, death = conditional_rates(x, x1, t, eps if stabilized else None)
        x = jump_step(x, birth, death, delta, eps.eps_r, rng)
        if k + 1 in keep:
            times.append((k + 1) * delta)
            states.append(x.copy())
    return Trajectory(np.asarray(times), np.asarray(states))
