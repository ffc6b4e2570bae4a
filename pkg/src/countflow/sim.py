"""Synthetic count data: the 2-D Gamma-Poisson mixture benchmark, a
discrete-uniform source, and a labeled task with known correlation."""
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GammaPoissonComponent",
    "GammaPoissonMixtureSpec",
    "DEFAULT_MIXTURE",
    "DEFAULT_SOURCE_LO",
    "DEFAULT_SOURCE_HI",
    "sample_gamma_poisson_mixture",
    "sample_discrete_uniform_source",
    "ConditionalTaskSpec",
    "ConditionalTask",
    "make_conditional_task",
]


@dataclass(frozen=True)
class GammaPoissonComponent:
    weight: float
    mean: tuple
    dispersion: tuple


@dataclass(frozen=True)
class GammaPoissonMixtureSpec:
    components: tuple

    def __post_init__(self):
        if not self.components:
            raise ValueError("mixture needs at least one component")
        weights = np.array([c.weight for c in self.components], dtype=float)
        if np.any(weights < 0) or not np.isclose(weights.sum(), 1.0):
            raise ValueError("component weights must be nonnegative and sum to 1")
        dims = {len(c.mean) for c in self.components} | {len(c.dispersion) for c in self.components}
        if len(dims) != 1:
            raise ValueError("all means and dispersions must share one dimension")
        for c in self.components:
            if np.any(np.asarray(c.mean) <= 0) or np.any(np.asarray(c.dispersion) <= 0):
                raise ValueError("means and dispersions must be positive")

    @property
    def dim(self):
        return len(self.components[0].mean)

    @classmethod
    def from_dict(cls, doc):
        return cls(tuple(
            GammaPoissonComponent(float(c["weight"]), tuple(c["mean"]), tuple(c["dispersion"]))
            for c in doc["components"]
        ))

    def to_dict(self):
        return {"components": [
            {"weight": c.weight, "mean": list(c.mean), "dispersion": list(c.dispersion)}
            for c in self.components
        ]}


DEFAULT_MIXTURE = GammaPoissonMixtureSpec((
    GammaPoissonComponent(0.5, (60.0, 5.0), (20.0, 20.0)),
    GammaPoissonComponent(0.5, (60.0, 40.0), (20.0, 20.0)),
))
DEFAULT_SOURCE_LO = (0, 0)
DEFAULT_SOURCE_HI = (100, 60)


def sample_gamma_poisson_mixture(spec, n, rng, return_components=False):
    """Draw ``n`` rows; rate ~ Gamma(dispersion, mean/dispersion), count ~ Poisson(rate)."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    weights = np.array([c.weight for c in spec.components])
    comp = rng.choice(len(weights), size=n, p=weights)
    means = np.array([c.mean for c in spec.components], dtype=float)[comp]
    shape = np.array([c.dispersion for c in spec.components], dtype=float)[comp]
    rates = rng.gamma(shape, means / shape)
    counts = rng.poisson(rates).astype(np.int64)
    return (counts, comp) if return_components else counts


def sample_discrete_uniform_source(n, lo, hi, rng):
    lo = np.asarray(lo, dtype=np.int64)
    hi = np.asarray(hi, dtype=np.int64)
    if lo.shape != hi.shape:
        raise ValueError("lo and hi must have the same length")
    if np.any(lo > hi):
        raise ValueError("lo must not exceed hi")
    if np.any(lo < 0):
        raise ValueError("lo must be nonnegative")
    return rng.integers(lo, hi + 1, size=(n, len(lo)), dtype=np.int64)


@dataclass(frozen=True)
class ConditionalTaskSpec:
    """Class-dependent Gamma-Poisson populations with a shared latent factor.

    Given class ``k``, coordinate ``j`` has rate ``means[k][j] * g_j * s`` where
    ``g_j ~ Gamma(dispersion, 1/dispersion)`` is private noise and
    ``s ~ Gamma(1/shared_var, shared_var)`` (mean 1, variance shared_var) is
    one draw per row, multiplied in only on ``shared_coords``. With
    ``shared_var = 0`` the factor is exactly 1.
    """

    means: tuple = (
        (12.0, 2.0, 2.0, 1.0, 6.0),
        (2.0, 12.0, 2.0, 1.0, 6.0),
        (2.0, 2.0, 12.0, 1.0, 6.0),
        (4.0, 4.0, 4.0, 10.0, 6.0),
    )
    dispersion: float = 10.0
    shared_var: float = 0.3
    shared_coords: tuple = (0, 1, 2, 3)
    priors: tuple = None

    @property
    def n_classes(self):
        return len(self.means)

    @property
    def dim(self):
        return len(self.means[0])

    def class_moments(self, k):
        """Exact per-class mean vector and covariance matrix."""
        m = np.asarray(self.means[k], dtype=float)
        a = 1.0 / self.dispersion
        s = self.shared_var
        shared = np.zeros(self.dim, dtype=bool)
        shared[list(self.shared_coords)] = True
        # E[rate^2] = m^2 (1 + a)(1 + s) on shared coords, m^2 (1 + a) otherwise
        var = m + m**2 * ((1 + a) * np.where(shared, 1 + s, 1.0) - 1)
        cov = np.where(np.outer(shared, shared), s * np.outer(m, m), 0.0)
        np.fill_diagonal(cov, var)
        return m, cov


@dataclass
class ConditionalTask:
    counts: np.ndarray
    labels: np.ndarray
    spec: ConditionalTaskSpec = field(default_factory=ConditionalTaskSpec)


def make_conditional_task(n_per_class, rng, spec=None):
    """Labeled counts: ``n_per_class`` rows per class, or a multinomial split
    of ``n_per_class * n_classes`` rows when ``spec.priors`` is set."""
    spec = spec or ConditionalTaskSpec()
    K = spec.n_classes
    if K < 2:
        raise ValueError("need at least 2 classes")
    if spec.priors is None:
        labels = np.repeat(np.arange(K), n_per_class)
    else:
        labels = rng.choice(K, size=n_per_class * K, p=np.asarray(spec.priors, dtype=float))
    n = len(labels)
    means = np.asarray(spec.means, dtype=float)[labels]
    noise = rng.gamma(spec.dispersion, 1.0 / spec.dispersion, size=means.shape)
    if spec.shared_var > 0:
        shared = rng.gamma(1.0 / spec.shared_var, spec.shared_var, size=n)
    else:
        shared = np.ones(n)
    factor = np.ones(means.shape)
    factor[:, list(spec.shared_coords)] = shared[:, None]
    counts = rng.poisson(means * noise * factor).astype(np.int64)
    return ConditionalTask(counts, labels.astype(np.int64), spec)
