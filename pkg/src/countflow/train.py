"""Rate-matching training on bridge samples."""
import logging
from dataclasses import dataclass, field

import numpy as np

from .bridge import EpsilonConfig, as_counts, conditional_rates, sample_bridge
from .coupling import independent_pairs, ot_pairs, symmetric_poisson_cost
from .net import NULL_CONDITION, adam_step, loss_and_grad

__all__ = [
    "BridgeBatch",
    "TrainConfig",
    "TrainResult",
    "NonFiniteLossError",
    "pointwise_loss",
    "gkl",
    "make_training_batch",
    "train",
]

log = logging.getLogger(__name__)

COUPLINGS = ("independent", "ot")
SCHEDULES = ("constant", "cosine")


class NonFiniteLossError(FloatingPointError):
    """Raised when a training step produces a NaN/Inf loss or gradient."""

    def __init__(self, step, message):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass
class BridgeBatch:
    """Struct-of-arrays batch of bridge samples with their target rates."""

    t: np.ndarray
    x: np.ndarray
    target_birth: np.ndarray
    target_death: np.ndarray
    condition: np.ndarray
    x0: np.ndarray = None
    x1: np.ndarray = None

    def __len__(self):
        return len(self.t)


@dataclass
class TrainConfig:
    batch_size: int = 256
    n_steps: int = 10000
    lr: float = 1e-3
    lr_schedule: str = "constant"
    betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    coupling_kind: str = "independent"
    cfg_dropout: float = 0.1
    eps: EpsilonConfig = field(default_factory=EpsilonConfig)
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.cfg_dropout <= 1.0:
            raise ValueError("cfg_dropout must lie in [0, 1]")
        if self.lr_schedule not in SCHEDULES:
            raise ValueError(f"lr_schedule must be one of {SCHEDULES}")
        if self.coupling_kind not in COUPLINGS:
            raise ValueError(f"coupling_kind must be one of {COUPLINGS}")


@dataclass
class TrainResult:
    net: object
    losses: np.ndarray
    pair_costs: np.ndarray


def pointwise_loss(u, v, eps_l=1e-8):
    """``v - u log(v + eps_l)``; minimized over v at ``v = u`` when eps_l = 0."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    return v - u * np.log(v + eps_l)


def gkl(u, v):
    """Generalized KL divergence ``u log(u/v) - u + v`` (0 log 0 = 0)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if np.any(v <= 0):
        raise ValueError("gkl requires v > 0")
    if np.any(u < 0):
        raise ValueError("gkl requires u >= 0")
    safe_u = np.where(u > 0, u, 1.0)
    return np.where(u > 0, u * np.log(safe_u / v), 0.0) - u + v


def make_training_batch(
    source,
    target,
    coupling_kind="independent",
    eps=None,
    rng=None,
    condition=None,
    cfg_dropout=0.0,
):
    """Pair endpoints, draw bridge states and compute their target rates.

    ``condition`` gives per-target labels (indices); each is replaced by the
    null label with probability ``cfg_dropout``. Without labels every sample
    carries the null label.
    """
    eps = eps or EpsilonConfig()
    if coupling_kind == "independent":
        pairs = independent_pairs(source, target, rng, condition)
    elif coupling_kind == "ot":
        pairs = ot_pairs(source, target, eps.eps_c, condition)
    else:
        raise ValueError(f"unknown coupling kind {coupling_kind!r}")
    n = len(pairs)
    t = rng.uniform(0.0, 1.0 - eps.eps_t, size=n)
    x = sample_bridge(pairs.x0, pairs.x1, t, rng)
    birth, death = conditional_rates(x, pairs.x1, t, eps)
    if pairs.condition is None:
        cond = np.full(n, NULL_CONDITION, dtype=np.int64)
    else:
        cond = np.asarray(pairs.condition, dtype=np.int64).copy()
        drop = rng.random(n) < cfg_dropout
        cond[drop] = NULL_CONDITION
    return BridgeBatch(t, x, birth, death, cond, pairs.x0, pairs.x1)


def step_rng(seed, step):
    return np.random.default_rng([int(seed), int(step)])


def train(net, source_data, target_data, config, target_condition=None, progress=None):
    """Optimize ``net`` in place for ``config.n_steps`` Adam steps.

    Every step draws fresh source/target minibatches (with replacement) and a
    fresh coupling. Step ``k`` uses a generator seeded with ``(seed, k)``
    where k continues from ``net.step_count``, so with a constant learning
    rate resuming from a checkpoint reproduces an uninterrupted run. The
    cosine schedule runs over the ``n_steps`` of this call only.

    Returns:
        TrainResult with the per-step loss trace and mean pair cost.
    """
    source_data = as_counts(source_data, "source_data")
    target_data = as_counts(target_data, "target_data")
    if source_data.shape[1] != net.dim or target_data.shape[1] != net.dim:
        raise ValueError(
            f"data dimension {source_data.shape[1]}/{target_data.shape[1]} "
            f"does not match network dimension {net.dim}"
        )
    if target_condition is not None:
        target_condition = np.asarray(target_condition, dtype=np.int64)
        if len(target_condition) != len(target_data):
            raise ValueError("target_condition must have one label per target row")
        if not net.conditional:
            raise ValueError("labels given but the network has no condition table")

    B = config.batch_size
    eps = config.eps
    losses = np.empty(config.n_steps)
    costs = np.empty(config.n_steps)
    start = net.step_count
    for k in range(config.n_steps):
        rng = step_rng(config.seed, start + k)
        src = source_data[rng.integers(0, len(source_data), B)]
        idx = rng.integers(0, len(target_data), B)
        cond = None if target_condition is None else target_condition[idx]
        batch = make_training_batch(
            src, target_data[idx], config.coupling_kind, eps, rng, cond, config.cfg_dropout
        )
        loss, grad = loss_and_grad(net, batch, eps.eps_l)
        if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grad.values()):
            raise NonFiniteLossError(
                start + k,
                f"non-finite loss {loss}; batch x range [{batch.x.min()}, {batch.x.max()}], "
                f"max target rate {max(batch.target_birth.max(), batch.target_death.max()):.3g}, "
                f"t range [{batch.t.min():.4f}, {batch.t.max():.4f}]",
            )
        lr = config.lr
        if config.lr_schedule == "cosine":
            lr = 0.5 * config.lr * (1.0 + np.cos(np.pi * k / config.n_steps))
        adam_step(net, grad, lr, config.betas, config.adam_eps)
        losses[k] = loss
        costs[k] = float(np.mean(symmetric_poisson_cost(batch.x0, batch.x1, eps.eps_c)))
        if progress is not None:
            progress(start + k, loss, costs[k])
        if log.isEnabledFor(logging.DEBUG) and (k % 500 == 0 or k + 1 == config.n_steps):
            log.debug("step %d loss %.5f pair cost %.4f", start + k, loss, costs[k])
    return TrainResult(net, losses, costs)
