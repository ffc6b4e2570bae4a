import itertools
import warnings

import numpy as np
import pytest

from countflow.metrics import (
    active_set,
    bridge_heatmap,
    conditional_metrics,
    evaluate_samples,
    median_bandwidth,
    mmd2_rbf,
    w2,
    w2_subsampled,
)
from countflow.bridge import bridge_pmf


def test_w2_examples():
    rng = np.random.default_rng(0)
    a = rng.integers(0, 20, (40, 3))
    assert w2(a, a) == 0.0
    assert w2(a, a[rng.permutation(40)]) == 0.0
    assert w2([[0, 0]], [[3, 4]]) == 5.0
    with pytest.raises(ValueError):
        w2(np.zeros((0, 2)), [[1, 1]])
    with pytest.raises(ValueError):
        w2([[1, 1]], [[1, 1, 1]])


def test_w2_enumeration_oracle():
    rng = np.random.default_rng(1)
    for _ in range(40):
        n = int(rng.integers(1, 7))
        a = rng.integers(0, 12, (n, 2))
        b = rng.integers(0, 12, (n, 2))
        c = ((a[:, None] - b[None]) ** 2).sum(-1)
        best = min(c[np.arange(n), p].mean() for p in itertools.permutations(range(n)))
        assert w2(a, b) == pytest.approx(np.sqrt(best), abs=1e-12)


def test_w2_subsampling():
    rng = np.random.default_rng(2)
    a = rng.integers(0, 20, (1000, 2))
    assert w2_subsampled(a, a.copy(), n_sub=200, n_repeats=3) >= 0
    assert w2_subsampled(a[:50], a[:50], n_sub=500) == 0.0
    # unequal sizes subsample the larger side
    assert w2(np.zeros((5, 1)), np.zeros((9, 1))) == 0.0


def test_mmd_examples():
    rng = np.random.default_rng(3)
    a = rng.integers(0, 20, (60, 2))
    for bw in (None, 0.5, 7.0):
        val, _ = mmd2_rbf(a, a, bw)
        assert val <= 1e-12
    val, bw = mmd2_rbf([[0]], [[1]], 1.0)
    assert val == pytest.approx(2 - 2 * np.exp(-0.5), abs=1e-12)
    assert val == pytest.approx(0.78694, abs=1e-5)
    with pytest.raises(ValueError, match="bandwidth"):
        mmd2_rbf([[1, 1], [1, 1]], [[1, 1]])


def test_mmd_brute_force():
    rng = np.random.default_rng(4)
    a = rng.normal(size=(7, 2))
    b = rng.normal(1, size=(5, 2))
    s = 1.3
    k = lambda x, y: np.exp(-np.sum((x - y) ** 2) / (2 * s * s))
    ref = (
        np.mean([k(x, y) for x in a for y in a])
        + np.mean([k(x, y) for x in b for y in b])
        - 2 * np.mean([k(x, y) for x in a for y in b])
    )
    assert mmd2_rbf(a, b, s)[0] == pytest.approx(ref, rel=1e-12)
    pooled = np.concatenate([a, b])
    dists = [np.linalg.norm(x - y) for x, y in itertools.combinations(pooled, 2)]
    assert median_bandwidth(a, b) == pytest.approx(np.median(dists), rel=1e-12)


def test_mmd_consistency_trend():
    rng = np.random.default_rng(5)
    vals = [np.mean([mmd2_rbf(rng.poisson(8, (n, 2)), rng.poisson(8, (n, 2)), 3.0)[0] for _ in range(5)])
            for n in (50, 200, 800)]
    assert vals[0] > vals[1] > vals[2]


def test_evaluate_samples_self():
    a = np.random.default_rng(6).integers(0, 9, (300, 2))
    rep = evaluate_samples(a, a, n_sub=100, n_repeats=3)
    assert rep.w2 == 0.0 and rep.mmd2_rbf <= 1e-12
    assert set(rep.to_dict()) >= {"w2", "mmd2_rbf", "bandwidth"}


def _hand_case():
    true = {"A": np.array([[1, 0, 2], [3, 0, 4]]), "B": np.array([[0, 5, 1], [0, 3, 1], [0, 4, 4]])}
    gen = {"A": np.array([[2, 0, 2], [2, 1, 4], [2, 0, 0]]), "B": np.array([[1, 4, 1], [0, 4, 3]])}
    return true, gen


def test_conditional_metrics_hand_oracle():
    # worked out on paper: bin sizes n_A=2, n_B=3, d=3, weights sum 5
    true, gen = _hand_case()
    r = conditional_metrics(true, gen, [0, 1, 2])
    assert r.rmse_mu == pytest.approx(np.sqrt(107 / 540), abs=1e-12)
    assert r.rmse_var == pytest.approx(np.sqrt(827 / 540), abs=1e-12)
    assert r.rmse_zero == pytest.approx(np.sqrt(43 / 540), abs=1e-12)
    assert r.cov_f == pytest.approx((2 * np.sqrt(10) + 3 * np.sqrt(2)) / 5, abs=1e-12)
    assert r.contrast == pytest.approx((0.6 + 11 / 13) / 3, abs=1e-12)
    assert r.contrast_true == pytest.approx(2.2 / 3, abs=1e-12)
    assert r.n_b == [2, 3] and r.bins == ["A", "B"]


def test_conditional_metrics_identities():
    true, _ = _hand_case()
    r = conditional_metrics(true, true, [0, 1, 2])
    assert r.rmse_mu == r.rmse_var == r.rmse_zero == r.cov_f == 0.0
    const = {b: np.full((4, 3), 5) for b in true}
    assert conditional_metrics(true, const, [0, 1, 2]).contrast == 0.0
    with pytest.raises(ValueError):
        conditional_metrics(true, true, [])
    with pytest.raises(ValueError):
        conditional_metrics(true, {"A": true["A"]}, [0])


def test_conditional_metrics_small_bin_warns():
    true, gen = _hand_case()
    gen = dict(gen, B=gen["B"][:1])
    with pytest.warns(UserWarning, match="< 2 samples"):
        r = conditional_metrics(true, gen, [0, 1, 2])
    # variance terms now come from bin A alone
    assert r.rmse_var == pytest.approx(np.sqrt(73 / 27), abs=1e-12)


def test_active_set():
    x = np.array([[0, 1, 0], [0, 0, 0], [0, 0, 1]])
    assert active_set(x).tolist() == [1, 2]
    assert active_set(x, threshold=0.5).tolist() == []


def test_heatmap_point_mass_and_binomial():
    rng = np.random.default_rng(7)
    h = bridge_heatmap([[2]], [[2]], "independent", 0, 5, [0, 0.5, 1], 1000, rng)
    np.testing.assert_array_equal(h.probs[2], 1.0)
    np.testing.assert_allclose(h.column_sums, 1.0)
    h = bridge_heatmap([[0]], [[4]], "ot", 0, 4, [0.5], 100_000, rng, batch_size=64)
    pmf = np.array([bridge_pmf(0, 4, 0.5, z) for z in range(5)])
    assert 0.5 * np.abs(h.probs[:, 0] - pmf).sum() <= 0.02


def test_heatmap_source_column_and_truncation():
    rng = np.random.default_rng(8)
    src = rng.integers(0, 10, (500, 2))
    tgt = rng.integers(20, 30, (500, 2))
    h = bridge_heatmap(src, tgt, "independent", 1, 15, [0.0, 1.0], 50_000, rng)
    emp = np.bincount(src[:, 1], minlength=16)[:16] / 500
    assert 0.5 * np.abs(h.probs[:, 0] - emp).sum() <= 0.02
    assert h.truncated_mass[1] == 1.0 and h.column_sums[1] == 0.0
    with pytest.raises(IndexError):
        bridge_heatmap(src, tgt, "independent", 2, 15, [0.5], 10, rng)


def test_heatmap_ot_differs_on_bimodal():
    rng = np.random.default_rng(9)
    src = np.concatenate([np.full((100, 1), 0), np.full((100, 1), 40)])
    tgt = np.concatenate([np.full((100, 1), 5), np.full((100, 1), 35)])
    hi = bridge_heatmap(src, tgt, "independent", 0, 40, [0.5], 20_000, rng)
    ho = bridge_heatmap(src, tgt, "ot", 0, 40, [0.5], 20_000, rng)
    assert 0.5 * np.abs(hi.probs[:, 0] - ho.probs[:, 0]).sum() > 0.2
