"""Sample-quality metrics: exact W2, MMD^2 with an RBF kernel, binned
conditional-fidelity scores, and bridge-marginal heatmaps."""
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .assignment import solve_assignment
from .bridge import as_counts, sample_bridge
from .coupling import cost_matrix

__all__ = [
    "MetricReport",
    "ConditionalReport",
    "HeatmapResult",
    "w2",
    "w2_subsampled",
    "median_bandwidth",
    "mmd2_rbf",
    "evaluate_samples",
    "active_set",
    "conditional_metrics",
    "bridge_heatmap",
]


@dataclass
class MetricReport:
    w2: float
    mmd2_rbf: float
    bandwidth: float
    n_source: int
    n_target: int
    seed: int

    def to_dict(self):
        return asdict(self)


@dataclass
class ConditionalReport:
    rmse_mu: float
    rmse_var: float
    rmse_zero: float
    cov_f: float
    contrast: float
    contrast_true: float
    bins: list
    n_b: list
    active: list

    def to_dict(self):
        return asdict(self)


def _as_matrix(a, name):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or len(a) == 0:
        raise ValueError(f"{name} must be a nonempty (n, d) array")
    return a


def _sq_dists(a, b):
    # direct differences keep identical points at exactly 0
    return ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1)


def w2(samples_a, samples_b, seed=0):
    """Exact 2-Wasserstein distance between two equal-size empirical sets.

    If the sizes differ the larger set is subsampled without replacement
    using ``seed``.
    """
    a = _as_matrix(samples_a, "samples_a")
    b = _as_matrix(samples_b, "samples_b")
    if a.shape[1] != b.shape[1]:
        raise ValueError("dimension mismatch")
    if len(a) != len(b):
        rng = np.random.default_rng(seed)
        n = min(len(a), len(b))
        if len(a) > n:
            a = a[np.sort(rng.choice(len(a), n, replace=False))]
        else:
            b = b[np.sort(rng.choice(len(b), n, replace=False))]
    cost = _sq_dists(a, b)
    perm = solve_assignment(cost)
    return float(np.sqrt(cost[np.arange(len(a)), perm].mean()))


def w2_subsampled(samples_a, samples_b, n_sub=500, n_repeats=1, seed=0):
    """Mean of exact W2 over ``n_repeats`` disjoint size-``n_sub`` subsamples."""
    a = _as_matrix(samples_a, "samples_a")
    b = _as_matrix(samples_b, "samples_b")
    rng = np.random.default_rng(seed)
    n_sub = min(n_sub, len(a), len(b))
    n_repeats = max(1, min(n_repeats, len(a) // n_sub, len(b) // n_sub))
    ia = rng.permutation(len(a))
    # rows are exchangeable, so equal-size sets can share the index draw;
    # this keeps w2(A, A) exactly 0
    ib = ia if len(b) == len(a) else rng.permutation(len(b))
    vals = [
        w2(a[ia[r * n_sub:(r + 1) * n_sub]], b[ib[r * n_sub:(r + 1) * n_sub]])
        for r in range(n_repeats)
    ]
    return float(np.mean(vals))


def median_bandwidth(samples_a, samples_b):
    """Median pairwise Euclidean distance over the pooled set (distinct pairs)."""
    pooled = np.concatenate([_as_matrix(samples_a, "samples_a"), _as_matrix(samples_b, "samples_b")])
    n = len(pooled)
    iu, ju = np.triu_indices(n, k=1)
    dists = np.empty(len(iu))
    chunk = 1 << 22
    for s in range(0, len(iu), chunk):
        diff = pooled[iu[s:s + chunk]] - pooled[ju[s:s + chunk]]
        dists[s:s + chunk] = np.sqrt((diff**2).sum(1))
    return float(np.median(dists)) if len(dists) else 0.0


def _kernel_mean(a, b, sigma, block=1024):
    total = 0.0
    for s in range(0, len(a), block):
        total += np.exp(-_sq_dists(a[s:s + block], b) / (2 * sigma**2)).sum()
    return total / (len(a) * len(b))


def mmd2_rbf(samples_a, samples_b, bandwidth=None):
    """Biased (V-statistic) MMD^2 with a Gaussian kernel.

    Returns ``(mmd2, bandwidth_used)``; the median heuristic supplies the
    bandwidth when none is given.
    """
    a = _as_matrix(samples_a, "samples_a")
    b = _as_matrix(samples_b, "samples_b")
    if bandwidth is None:
        bandwidth = median_bandwidth(a, b)
        if bandwidth == 0:
            raise ValueError(
                "median pairwise distance is 0 (all points identical); pass an explicit bandwidth"
            )
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    val = _kernel_mean(a, a, bandwidth) + _kernel_mean(b, b, bandwidth) - 2 * _kernel_mean(a, b, bandwidth)
    return max(float(val), 0.0), float(bandwidth)


def evaluate_samples(generated, reference, n_sub=500, n_repeats=1, bandwidth=None, seed=0):
    """W2 on size-``n_sub`` subsamples plus MMD^2 on the full sets."""
    generated = _as_matrix(generated, "generated")
    reference = _as_matrix(reference, "reference")
    mmd, bw = mmd2_rbf(generated, reference, bandwidth)
    return MetricReport(
        w2=w2_subsampled(generated, reference, n_sub, n_repeats, seed),
        mmd2_rbf=mmd,
        bandwidth=bw,
        n_source=len(generated),
        n_target=len(reference),
        seed=seed,
    )


def active_set(counts, threshold=0.01):
    """Indices of coordinates whose overall mean count exceeds ``threshold``."""
    return np.flatnonzero(np.asarray(counts, dtype=float).mean(0) > threshold)


def _offdiag_cov(x):
    c = np.cov(x, rowvar=False, ddof=1)
    c = np.atleast_2d(c)
    np.fill_diagonal(c, 0.0)
    return c


def _contrast(means, active):
    m = means[:, active]
    avg = m.mean(0)
    raw = m.max(0) - np.median(m, axis=0)
    per = np.divide(raw, avg, out=np.zeros_like(raw), where=avg > 0)
    return float(per.mean())


def conditional_metrics(true_binned, gen_binned, active):
    """Bin-weighted fidelity of generated samples against held-out data.

    Args:
        true_binned: mapping bin -> (n_b, d) held-out counts.
        gen_binned: mapping bin -> (m_b, d) generated counts for that bin.
        active: coordinate indices used for covariance and contrast.

    Weights are the held-out bin sizes ``n_b``. Bins with fewer than 2
    samples on either side are dropped from the variance and covariance terms.
    """
    active = np.asarray(active, dtype=np.intp)
    if active.size == 0:
        raise ValueError("active set is empty")
    bins = [b for b in true_binned if len(true_binned[b]) > 0]
    missing = [b for b in bins if b not in gen_binned or len(gen_binned[b]) == 0]
    if missing:
        raise ValueError(f"no generated samples for bins {missing}")
    true = {b: np.asarray(true_binned[b], dtype=float) for b in bins}
    gen = {b: np.asarray(gen_binned[b], dtype=float) for b in bins}
    d = next(iter(true.values())).shape[1]
    n_b = np.array([len(true[b]) for b in bins], dtype=float)

    mu = np.stack([true[b].mean(0) for b in bins])
    mu_hat = np.stack([gen[b].mean(0) for b in bins])
    z = np.stack([(true[b] == 0).mean(0) for b in bins])
    z_hat = np.stack([(gen[b] == 0).mean(0) for b in bins])

    def rmse(a, b, w):
        return float(np.sqrt((w[:, None] * (a - b) ** 2).sum() / (w.sum() * d)))

    ok = np.array([len(true[b]) >= 2 and len(gen[b]) >= 2 for b in bins])
    if not ok.all():
        warnings.warn(
            f"bins {[b for b, k in zip(bins, ok) if not k]} have < 2 samples; "
            "excluded from variance and covariance terms",
            stacklevel=2,
        )
    if not ok.any():
        raise ValueError("no bin has at least 2 samples on both sides")
    kept = [b for b, k in zip(bins, ok) if k]
    var = np.stack([true[b].var(0, ddof=1) for b in kept])
    var_hat = np.stack([gen[b].var(0, ddof=1) for b in kept])
    w_kept = n_b[ok]
    frob = np.array([
        np.linalg.norm(_offdiag_cov(gen[b][:, active]) - _offdiag_cov(true[b][:, active]))
        for b in kept
    ])

    return ConditionalReport(
        rmse_mu=rmse(mu_hat, mu, n_b),
        rmse_var=rmse(var_hat, var, w_kept),
        rmse_zero=rmse(z_hat, z, n_b),
        cov_f=float((w_kept * frob).sum() / w_kept.sum()),
        contrast=_contrast(mu_hat, active),
        contrast_true=_contrast(mu, active),
        bins=[b.item() if hasattr(b, "item") else b for b in bins],
        n_b=[int(v) for v in n_b],
        active=[int(j) for j in active],
    )


@dataclass
class HeatmapResult:
    probs: np.ndarray
    count_values: np.ndarray
    progress: np.ndarray
    truncated_mass: np.ndarray

    @property
    def column_sums(self):
        return self.probs.sum(0)


def _draw_pairs(x0_samples, x1_samples, coupling_kind, M, rng, batch_size, eps_c):
    from .coupling import ot_pairs

    if coupling_kind == "independent":
        i0 = rng.integers(0, len(x0_samples), M)
        i1 = rng.integers(0, len(x1_samples), M)
        return x0_samples[i0], x1_samples[i1]
    if coupling_kind != "ot":
        raise ValueError(f"unknown coupling kind {coupling_kind!r}")
    a, b = [], []
    while sum(len(p) for p in a) < M:
        src = x0_samples[rng.integers(0, len(x0_samples), batch_size)]
        tgt = x1_samples[rng.integers(0, len(x1_samples), batch_size)]
        pairs = ot_pairs(src, tgt, eps_c)
        a.append(pairs.x0)
        b.append(pairs.x1)
    return np.concatenate(a)[:M], np.concatenate(b)[:M]


def bridge_heatmap(
    x0_samples,
    x1_samples,
    coupling_kind,
    coord,
    z_max,
    progress,
    M,
    rng,
    batch_size=256,
    eps_c=1e-8,
):
    """Monte Carlo estimate of the bridge marginal of one coordinate.

    Column ``k`` is the empirical pmf over ``z = 0..z_max`` of ``X_s[coord]``
    at progress ``s = progress[k]``, built from ``M`` fresh endpoint pairs per
    column. Mass above ``z_max`` is reported in ``truncated_mass``.
    """
    x0_samples = as_counts(x0_samples, "x0_samples")
    x1_samples = as_counts(x1_samples, "x1_samples")
    if x0_samples.ndim != 2 or x1_samples.ndim != 2:
        raise ValueError("endpoint samples must be (n, d) arrays")
    d = x0_samples.shape[1]
    if not 0 <= coord < d:
        raise IndexError(f"coordinate {coord} out of range for dimension {d}")
    if M < 1:
        raise ValueError("M must be >= 1")
    progress = np.asarray(progress, dtype=float)
    probs = np.zeros((z_max + 1, len(progress)))
    trunc = np.zeros(len(progress))
    for k, s in enumerate(progress):
        x0, x1 = _draw_pairs(x0_samples, x1_samples, coupling_kind, M, rng, batch_size, eps_c)
        xs = sample_bridge(x0[:, coord], x1[:, coord], s, rng)
        hist = np.bincount(xs, minlength=z_max + 1)
        probs[:, k] = hist[: z_max + 1] / M
        trunc[k] = hist[z_max + 1:].sum() / M
    return HeatmapResult(probs, np.arange(z_max + 1), progress, trunc)
