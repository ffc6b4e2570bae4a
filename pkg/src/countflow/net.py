"""Small numpy MLP that maps (state, time, condition) to birth/death rates.

Gradients are computed by hand-written reverse-mode accumulation; the Adam
moments live on the network object so a checkpoint captures the full
optimizer state.
"""
import json
import struct
from pathlib import Path
from typing import NamedTuple

import numpy as np

__all__ = [
    "NULL_CONDITION",
    "RateField",
    "RateNetwork",
    "forward",
    "loss_and_grad",
    "adam_step",
    "count_params",
    "save_checkpoint",
    "load_checkpoint",
]

NULL_CONDITION = -1

_SELU_SCALE = 1.0507009873554805
_SELU_ALPHA = 1.6732632423543772

_MAGIC = b"CFNET\x00"
FORMAT_VERSION = 1


class RateField(NamedTuple):
    birth: np.ndarray
    death_coeff: np.ndarray
    death: np.ndarray


def _selu(a):
    return _SELU_SCALE * np.where(a > 0, a, _SELU_ALPHA * np.expm1(np.minimum(a, 0)))


def _selu_grad(a):
    return _SELU_SCALE * np.where(a > 0, 1.0, _SELU_ALPHA * np.exp(np.minimum(a, 0)))


def _softplus(z):
    return np.logaddexp(0.0, z)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class RateNetwork:
    """MLP with a 2d-wide nonnegative output head.

    Inputs are the scaled counts, a time embedding (raw t plus sin/cos at
    ``n_time_freqs`` angular frequencies spaced geometrically over [1, 1000])
    and, for conditional models, a learned label embedding. Row
    ``n_conditions`` of the embedding table is the null label.
    """

    def __init__(
        self,
        dim,
        hidden_widths=(32, 32),
        n_time_freqs=8,
        n_conditions=0,
        cond_width=8,
        input_scale=1.0,
        condition_labels=None,
        rate_time_eps=None,
        seed=0,
    ):
        self.dim = int(dim)
        self.hidden_widths = [int(w) for w in hidden_widths]
        self.n_time_freqs = int(n_time_freqs)
        self.n_conditions = int(n_conditions)
        self.cond_width = int(cond_width) if self.n_conditions > 0 else 0
        self.input_scale = float(input_scale)
        if condition_labels is None:
            condition_labels = [str(k) for k in range(self.n_conditions)]
        if len(condition_labels) != self.n_conditions:
            raise ValueError("condition_labels must have n_conditions entries")
        self.condition_labels = [str(c) for c in condition_labels]
        # when set, both heads are divided by (1 - t + rate_time_eps)
        self.rate_time_eps = None if rate_time_eps is None else float(rate_time_eps)

        rng = np.random.default_rng(seed)
        self.params = {}
        widths = [self.input_dim] + self.hidden_widths
        for k, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            bound = np.sqrt(3.0 / fan_in)
            self.params[f"W{k}"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            self.params[f"b{k}"] = np.zeros(fan_out)
        self.params["W_out"] = np.zeros((widths[-1], 2 * self.dim))
        self.params["b_out"] = np.zeros(2 * self.dim)
        if self.n_conditions > 0:
            self.params["cond_table"] = rng.normal(
                0.0, 1.0, size=(self.n_conditions + 1, self.cond_width)
            )
        self.reset_optimizer()

    @property
    def time_width(self):
        return 1 + 2 * self.n_time_freqs

    @property
    def input_dim(self):
        return self.dim + self.time_width + self.cond_width

    @property
    def conditional(self):
        return self.n_conditions > 0

    @property
    def frequencies(self):
        if self.n_time_freqs == 0:
            return np.zeros(0)
        if self.n_time_freqs == 1:
            return np.ones(1)
        return np.geomspace(1.0, 1000.0, self.n_time_freqs)

    def reset_optimizer(self):
        self.adam_m = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.adam_v = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.step_count = 0

    def metadata(self):
        return {
            "format_version": FORMAT_VERSION,
            "dim": self.dim,
            "hidden_widths": self.hidden_widths,
            "n_time_freqs": self.n_time_freqs,
            "n_conditions": self.n_conditions,
            "cond_width": self.cond_width,
            "input_scale": self.input_scale,
            "condition_labels": self.condition_labels,
            "rate_time_eps": self.rate_time_eps,
            "step_count": self.step_count,
            "param_names": list(self.params),
            "param_shapes": [list(v.shape) for v in self.params.values()],
        }

    def copy(self):
        other = object.__new__(RateNetwork)
        other.__dict__.update(self.__dict__)
        other.hidden_widths = list(self.hidden_widths)
        other.condition_labels = list(self.condition_labels)
        other.params = {k: v.copy() for k, v in self.params.items()}
        other.adam_m = {k: v.copy() for k, v in self.adam_m.items()}
        other.adam_v = {k: v.copy() for k, v in self.adam_v.items()}
        return other

    def condition_index(self, label):
        """Map a label (or None for the null label) to its table row."""
        if label is None:
            return NULL_CONDITION
        try:
            return self.condition_labels.index(str(label))
        except ValueError:
            raise KeyError(f"unknown condition label {label!r}") from None


def _time_features(net, t):
    freqs = net.frequencies
    angles = t[:, None] * freqs[None, :]
    return np.concatenate([t[:, None], np.sin(angles), np.cos(angles)], axis=1)


def _prepare(net, x, t, condition):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != net.dim:
        raise ValueError(f"expected state dimension {net.dim}, got {x.shape[1]}")
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],))
    if np.any((t < 0) | (t > 1)):
        raise ValueError("t must lie in [0, 1]")
    parts = [x * net.input_scale, _time_features(net, t)]
    rows = None
    if net.conditional:
        if condition is None:
            condition = NULL_CONDITION
        cond = np.broadcast_to(np.asarray(condition, dtype=np.int64), (x.shape[0],))
        if np.any((cond < NULL_CONDITION) | (cond >= net.n_conditions)):
            raise KeyError(f"unknown condition index in {np.unique(cond)}")
        rows = np.where(cond == NULL_CONDITION, net.n_conditions, cond)
        parts.append(net.params["cond_table"][rows])
    elif condition is not None and np.any(np.asarray(condition) != NULL_CONDITION):
        raise KeyError("network was built without condition support")
    return x, single, np.concatenate(parts, axis=1), rows


def _time_factor(net, t, n):
    if net.rate_time_eps is None:
        return np.ones((n, 1))
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (n,))
    return (1.0 / (1.0 - t + net.rate_time_eps))[:, None]


def _forward_cache(net, x, t, condition):
    x, single, h, rows = _prepare(net, x, t, condition)
    pre, acts = [], [h]
    for k in range(len(net.hidden_widths)):
        a = h @ net.params[f"W{k}"] + net.params[f"b{k}"]
        h = _selu(a)
        pre.append(a)
        acts.append(h)
    z = h @ net.params["W_out"] + net.params["b_out"]
    return x, single, z, pre, acts, rows


def forward(net, x, t, condition=None):
    """Evaluate the rate field.

    Args:
        net: RateNetwork.
        x: counts, shape (d,) or (B, d).
        t: scalar time or per-row times of shape (B,).
        condition: condition index (or per-row indices); ``NULL_CONDITION``
            or None selects the null embedding.

    Returns:
        RateField with birth rates, death coefficients and death rates
        ``x * death_coeff``.
    """
    x, single, z, _, _, _ = _forward_cache(net, x, t, condition)
    d = net.dim
    scale = _time_factor(net, t, len(x))
    birth = scale * _softplus(z[:, :d])
    beta = scale * _softplus(z[:, d:])
    field = RateField(birth, beta, x * beta)
    if single:
        field = RateField(*(a[0] for a in field))
    return field


def loss_and_grad(net, batch, eps_l=1e-8):
    """Rate-matching loss on a batch and its gradient w.r.t. every parameter.

    ``batch`` needs array attributes ``x``, ``t``, ``target_birth``,
    ``target_death`` and ``condition``. The loss is the batch mean of
    ``sum_i l(u_i, v_i)`` over birth and death channels with
    ``l(u, v) = v - u log(v + eps_l)``.
    """
    x, _, z, pre, acts, rows = _forward_cache(net, batch.x, batch.t, batch.condition)
    n, d = x.shape
    zb, zd = z[:, :d], z[:, d:]
    scale = _time_factor(net, batch.t, n)
    lam = scale * _softplus(zb)
    mu = x * scale * _softplus(zd)
    u_lam = np.asarray(batch.target_birth, dtype=np.float64)
    u_mu = np.asarray(batch.target_death, dtype=np.float64)

    per_sample = (lam - u_lam * np.log(lam + eps_l)).sum(1) + (
        mu - u_mu * np.log(mu + eps_l)
    ).sum(1)
    loss = float(per_sample.mean())

    dz = np.empty_like(z)
    dz[:, :d] = (1.0 - u_lam / (lam + eps_l)) * scale * _sigmoid(zb) / n
    dz[:, d:] = (1.0 - u_mu / (mu + eps_l)) * x * scale * _sigmoid(zd) / n

    grads = {}
    grads["W_out"] = acts[-1].T @ dz
    grads["b_out"] = dz.sum(0)
    dh = dz @ net.params["W_out"].T
    for k in reversed(range(len(net.hidden_widths))):
        da = dh * _selu_grad(pre[k])
        grads[f"W{k}"] = acts[k].T @ da
        grads[f"b{k}"] = da.sum(0)
        dh = da @ net.params[f"W{k}"].T
    if net.conditional:
        d_emb = dh[:, net.input_dim - net.cond_width :]
        table = np.zeros_like(net.params["cond_table"])
        np.add.at(table, rows, d_emb)
        grads["cond_table"] = table
    return loss, {k: grads[k] for k in net.params}


def adam_step(net, grad, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
    """Bias-corrected Adam update, applied in place; returns ``net``."""
    if not lr > 0:
        raise ValueError("lr must be positive")
    b1, b2 = betas
    net.step_count += 1
    c1 = 1.0 - b1**net.step_count
    c2 = 1.0 - b2**net.step_count
    for name, p in net.params.items():
        g = grad[name]
        m = net.adam_m[name]
        v = net.adam_v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return net


def count_params(net):
    return int(sum(p.size for p in net.params.values()))


def _arrays(net):
    names = list(net.params)
    return (
        [net.params[k] for k in names]
        + [net.adam_m[k] for k in names]
        + [net.adam_v[k] for k in names]
    )


def _from_metadata(meta):
    net = RateNetwork(
        meta["dim"],
        hidden_widths=meta["hidden_widths"],
        n_time_freqs=meta["n_time_freqs"],
        n_conditions=meta["n_conditions"],
        cond_width=meta["cond_width"] or 8,
        input_scale=meta["input_scale"],
        condition_labels=meta["condition_labels"],
        rate_time_eps=meta.get("rate_time_eps"),
    )
    if list(net.params) != meta["param_names"]:
        raise ValueError("checkpoint parameter layout does not match architecture")
    net.step_count = int(meta["step_count"])
    return net


def save_checkpoint(net, path):
    """Write ``net`` (weights plus optimizer state).

    A ``.json`` suffix selects the JSON variant; anything else gets the binary
    layout: magic, little-endian uint32 version, uint64 metadata length,
    UTF-8 JSON metadata, then every array as little-endian float64 in
    declaration order (weights, first moments, second moments).
    """
    path = Path(path)
    meta = net.metadata()
    if path.suffix == ".json":
        doc = dict(meta)
        doc["params"] = {k: v.ravel().tolist() for k, v in net.params.items()}
        doc["adam_m"] = {k: v.ravel().tolist() for k, v in net.adam_m.items()}
        doc["adam_v"] = {k: v.ravel().tolist() for k, v in net.adam_v.items()}
        path.write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")
        return
    header = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(header)))
        fh.write(header)
        for arr in _arrays(net):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path):
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text(encoding="utf-8"))
        net = _from_metadata(doc)
        for store, key in ((net.params, "params"), (net.adam_m, "adam_m"), (net.adam_v, "adam_v")):
            for name in store:
                store[name] = np.asarray(doc[key][name], dtype=np.float64).reshape(
                    store[name].shape
                )
        return net
    raw = path.read_bytes()
    if not raw.startswith(_MAGIC):
        raise ValueError(f"{path} is not a countflow checkpoint")
    off = len(_MAGIC)
    version, hlen = struct.unpack_from("<IQ", raw, off)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off += struct.calcsize("<IQ")
    meta = json.loads(raw[off : off + hlen].decode("utf-8"))
    off += hlen
    net = _from_metadata(meta)
    for store in (net.params, net.adam_m, net.adam_v):
        for name in store:
            shape = store[name].shape
            size = int(np.prod(shape))
            store[name] = (
                np.frombuffer(raw, dtype="<f8", count=size, offset=off)
                .astype(np.float64)
                .reshape(shape)
            )
            off += 8 * size
    if off != len(raw):
        raise ValueError("trailing bytes in checkpoint")
    return net
