import numpy as np
import pytest

from countflow.bridge import EpsilonConfig
from countflow.net import (
    NULL_CONDITION,
    RateNetwork,
    adam_step,
    count_params,
    forward,
    load_checkpoint,
    loss_and_grad,
    save_checkpoint,
)
from countflow.train import BridgeBatch, make_training_batch


def _randomize_head(net, rng, scale=0.5):
    for name in ("W_out", "b_out"):
        net.params[name] = rng.normal(0, scale, net.params[name].shape)


def _batch(rng, d=3, n=12, n_cond=0):
    src = rng.integers(0, 15, (n, d))
    tgt = rng.integers(0, 15, (n, d))
    cond = rng.integers(0, n_cond, n) if n_cond else None
    return make_training_batch(src, tgt, "independent", EpsilonConfig(), rng, cond, 0.3)


def test_zero_head_gives_log2_birth():
    net = RateNetwork(4, seed=1)
    f = forward(net, [3, 0, 5, 1], 0.3)
    np.testing.assert_allclose(f.birth, np.log(2.0))
    np.testing.assert_allclose(f.death, np.array([3, 0, 5, 1]) * np.log(2.0))


def test_zero_state_has_zero_death():
    rng = np.random.default_rng(0)
    net = RateNetwork(3, seed=2)
    _randomize_head(net, rng)
    f = forward(net, np.zeros((5, 3)), rng.uniform(size=5))
    assert np.all(f.death == 0) and np.all(f.birth > 0)
    assert f.birth.shape == (5, 3)


def test_forward_condition_errors():
    net = RateNetwork(2)
    with pytest.raises(KeyError):
        forward(net, [1, 1], 0.5, condition=0)
    forward(net, [1, 1], 0.5, condition=NULL_CONDITION)
    cnet = RateNetwork(2, n_conditions=3)
    with pytest.raises(KeyError):
        forward(cnet, [1, 1], 0.5, condition=3)
    with pytest.raises(KeyError):
        cnet.condition_index("nope")
    assert cnet.condition_index("2") == 2 and cnet.condition_index(None) == NULL_CONDITION
    with pytest.raises(ValueError):
        forward(net, [1, 1, 1], 0.5)


def test_count_params_examples():
    net = RateNetwork(2, hidden_widths=[], n_time_freqs=0)
    # input = 2 counts + raw t = 3 -> 4 outputs
    assert count_params(net) == 3 * 4 + 4
    net = RateNetwork(2, hidden_widths=[], n_time_freqs=1)
    assert count_params(net) == 5 * 4 + 4
    net = RateNetwork(2, hidden_widths=[32, 32], n_time_freqs=8)
    assert count_params(net) == 19 * 32 + 32 + 32 * 32 + 32 + 32 * 4 + 4


def test_loss_zero_targets_is_rate_sum():
    rng = np.random.default_rng(1)
    net = RateNetwork(3, hidden_widths=[8], seed=0)
    _randomize_head(net, rng)
    x = rng.integers(0, 10, (6, 3))
    t = rng.uniform(size=6)
    batch = BridgeBatch(t, x, np.zeros((6, 3)), np.zeros((6, 3)), np.full(6, NULL_CONDITION))
    loss, _ = loss_and_grad(net, batch)
    f = forward(net, x, t)
    assert loss == pytest.approx((f.birth.sum(1) + f.death.sum(1)).mean(), rel=1e-12)


def test_gradient_vanishes_at_matched_targets():
    net = RateNetwork(2, hidden_widths=[8], seed=0)
    x = np.array([[3, 2]])
    t = np.array([0.4])
    f = forward(net, x, t)
    batch = BridgeBatch(t, x, f.birth, f.death, np.array([NULL_CONDITION]))
    _, grads = loss_and_grad(net, batch, eps_l=0.0)
    for g in grads.values():
        np.testing.assert_allclose(g, 0.0, atol=1e-12)


@pytest.mark.parametrize("n_cond,rte", [(0, None), (3, None), (2, 1e-2)])
def test_gradient_matches_finite_differences(n_cond, rte):
    rng = np.random.default_rng(7 + n_cond)
    net = RateNetwork(
        3, hidden_widths=[8, 8], n_time_freqs=2, n_conditions=n_cond, cond_width=3,
        input_scale=0.1, rate_time_eps=rte, seed=1,
    )
    _randomize_head(net, rng)
    batch = _batch(rng, n_cond=n_cond)
    _, grads = loss_and_grad(net, batch)
    h = 1e-5
    for name, p in net.params.items():
        for _ in range(4):
            idx = tuple(rng.integers(s) for s in p.shape)
            old = p[idx]
            p[idx] = old + h
            lp, _ = loss_and_grad(net, batch)
            p[idx] = old - h
            lm, _ = loss_and_grad(net, batch)
            p[idx] = old
            fd = (lp - lm) / (2 * h)
            an = grads[name][idx]
            assert abs(fd - an) <= 1e-4 * max(abs(fd), abs(an), 1e-6), (name, idx, fd, an)


def test_adam_zero_gradient_and_first_step():
    net = RateNetwork(2, hidden_widths=[4], seed=0)
    before = {k: v.copy() for k, v in net.params.items()}
    adam_step(net, {k: np.zeros_like(v) for k, v in net.params.items()}, lr=0.1)
    assert net.step_count == 1
    for k in before:
        np.testing.assert_array_equal(net.params[k], before[k])

    net = RateNetwork(2, hidden_widths=[4], seed=0)
    rng = np.random.default_rng(0)
    g = {k: rng.normal(size=v.shape) for k, v in net.params.items()}
    before = {k: v.copy() for k, v in net.params.items()}
    adam_step(net, g, lr=0.01)
    for k in before:
        np.testing.assert_allclose(net.params[k] - before[k], -0.01 * np.sign(g[k]), rtol=1e-5)


def test_adam_constant_gradient_step_size():
    net = RateNetwork(1, hidden_widths=[], n_time_freqs=0)
    g = {k: np.full_like(v, 0.3) for k, v in net.params.items()}
    for _ in range(200):
        before = net.params["W_out"].copy()
        adam_step(net, g, lr=1e-3)
    np.testing.assert_allclose(before - net.params["W_out"], 1e-3, rtol=1e-4)


@pytest.mark.parametrize("suffix", [".bin", ".json"])
def test_checkpoint_round_trip(tmp_path, suffix):
    rng = np.random.default_rng(2)
    net = RateNetwork(3, hidden_widths=[8, 4], n_conditions=2, condition_labels=["a", "b"], seed=3)
    batch = _batch(rng, n_cond=2)
    for _ in range(3):
        _, g = loss_and_grad(net, batch)
        adam_step(net, g)
    path = tmp_path / f"net{suffix}"
    save_checkpoint(net, path)
    back = load_checkpoint(path)
    assert back.metadata() == net.metadata()
    for store in ("params", "adam_m", "adam_v"):
        for k, v in getattr(net, store).items():
            np.testing.assert_array_equal(getattr(back, store)[k], v)
    path2 = tmp_path / f"again{suffix}"
    save_checkpoint(back, path2)
    assert path2.read_bytes() == path.read_bytes()


def test_checkpoint_rejects_garbage(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"not a checkpoint")
    with pytest.raises(ValueError):
        load_checkpoint(p)
    net = RateNetwork(2, hidden_widths=[4])
    save_checkpoint(net, p)
    p.write_bytes(p.read_bytes() + b"\x00")
    with pytest.raises(ValueError):
        load_checkpoint(p)


def test_copy_is_independent():
    net = RateNetwork(2, hidden_widths=[4])
    other = net.copy()
    other.params["W0"] += 1.0
    other.adam_m["W0"] += 1.0
    assert not np.allclose(net.params["W0"], other.params["W0"])
    assert np.all(net.adam_m["W0"] == 0)
