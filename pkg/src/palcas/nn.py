"""Minimal dense-network core: forward, reverse-mode gradients, AdamW.

Float64 throughout so that checkpoints are exact and finite-difference
gradient checks are tight. Hidden layers run dense -> batch-norm -> relu ->
dropout; the output layer is linear. Training mode uses batch statistics and
dropout; evaluation mode uses running statistics and no dropout.
"""

import math
from typing import Optional

import numpy as np

BN_EPS = 1e-5
BN_MOMENTUM = 0.9


def he_init(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    return rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_in, fan_out))


def huber(residual: np.ndarray, delta: float = 1.0) -> np.ndarray:
    a = np.abs(residual)
    return np.where(a <= delta, 0.5 * residual * residual, delta * (a - 0.5 * delta))


def huber_grad(residual: np.ndarray, delta: float = 1.0) -> np.ndarray:
    return np.clip(residual, -delta, delta)


class MLP:
    """Fully connected network with named tensors.

    Trainable tensors live in ``params``; batch-norm running statistics live
    in ``buffers``. Both travel together through export/import so federated
    aggregation covers them uniformly.
    """

    def __init__(self, sizes, dropout: float = 0.1, batch_norm: bool = True,
                 rng: Optional[np.random.Generator] = None):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.sizes = tuple(int(s) for s in sizes)
        self.dropout = float(dropout)
        self.batch_norm = bool(batch_norm)
        self.params: dict = {}
        self.buffers: dict = {}
        n_hidden = len(sizes) - 2
        for i in range(n_hidden):
            self.params[f"l{i}.W"] = he_init(rng, sizes[i], sizes[i + 1])
            self.params[f"l{i}.b"] = np.zeros(sizes[i + 1])
            if batch_norm:
                self.params[f"bn{i}.gamma"] = np.ones(sizes[i + 1])
                self.params[f"bn{i}.beta"] = np.zeros(sizes[i + 1])
                self.buffers[f"bn{i}.mean"] = np.zeros(sizes[i + 1])
                self.buffers[f"bn{i}.var"] = np.ones(sizes[i + 1])
        self.params["out.W"] = rng.normal(0.0, math.sqrt(1.0 / sizes[-2]),
                                          size=(sizes[-2], sizes[-1]))
        self.params["out.b"] = np.zeros(sizes[-1])

    @property
    def n_hidden(self) -> int:
        return len(self.sizes) - 2

    def forward(self, x: np.ndarray, training: bool = False,
                rng: Optional[np.random.Generator] = None):
        """Returns (output, cache); pass the cache to ``backward``."""
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        cache = {"training": training, "layers": [], "squeeze": squeeze}
        h = x
        for i in range(self.n_hidden):
            entry = {"x": h}
            z = h @ self.params[f"l{i}.W"] + self.params[f"l{i}.b"]
            if self.batch_norm:
                z, bn_cache = self._bn_forward(i, z, training)
                entry["bn"] = bn_cache
            entry["z"] = z
            h = np.maximum(z, 0.0)
            if training and self.dropout > 0.0:
                if rng is None:
                    raise ValueError("training-mode dropout needs an rng")
                mask = rng.random(h.shape) >= self.dropout
                h = h * mask / (1.0 - self.dropout)
                entry["mask"] = mask
            cache["layers"].append(entry)
        cache["x_out"] = h
        y = h @ self.params["out.W"] + self.params["out.b"]
        if squeeze:
            return y[0], cache
        return y, cache

    def _bn_forward(self, i: int, z: np.ndarray, training: bool):
        gamma = self.params[f"bn{i}.gamma"]
        beta = self.params[f"bn{i}.beta"]
        if training:
            mu = z.mean(axis=0)
            var = z.var(axis=0)
            inv_std = 1.0 / np.sqrt(var + BN_EPS)
            zhat = (z - mu) * inv_std
            self.buffers[f"bn{i}.mean"] = (BN_MOMENTUM * self.buffers[f"bn{i}.mean"]
                                           + (1.0 - BN_MOMENTUM) * mu)
            self.buffers[f"bn{i}.var"] = (BN_MOMENTUM * self.buffers[f"bn{i}.var"]
                                          + (1.0 - BN_MOMENTUM) * var)
            return gamma * zhat + beta, {"zhat": zhat, "inv_std": inv_std, "batch": True}
        inv_std = 1.0 / np.sqrt(self.buffers[f"bn{i}.var"] + BN_EPS)
        zhat = (z - self.buffers[f"bn{i}.mean"]) * inv_std
        return gamma * zhat + beta, {"zhat": zhat, "inv_std": inv_std, "batch": False}

    def backward(self, d_out: np.ndarray, cache: dict):
        """Gradients of a scalar loss given d(loss)/d(output).

        Returns (grads keyed like params, d(loss)/d(input)).
        """
        d_out = np.asarray(d_out, dtype=np.float64)
        if cache["squeeze"] and d_out.ndim == 1:
            d_out = d_out[None, :]
        grads: dict = {}
        h = cache["x_out"]
        grads["out.W"] = h.T @ d_out
        grads["out.b"] = d_out.sum(axis=0)
        dh = d_out @ self.params["out.W"].T
        for i in range(self.n_hidden - 1, -1, -1):
            entry = cache["layers"][i]
            if "mask" in entry:
                dh = dh * entry["mask"] / (1.0 - self.dropout)
            dz = dh * (entry["z"] > 0.0)
            if self.batch_norm:
                dz = self._bn_backward(i, dz, entry["bn"], grads)
            grads[f"l{i}.W"] = entry["x"].T @ dz
            grads[f"l{i}.b"] = dz.sum(axis=0)
            dh = dz @ self.params[f"l{i}.W"].T
        if cache["squeeze"]:
            return grads, dh[0]
        return grads, dh

    def _bn_backward(self, i: int, dy: np.ndarray, bn_cache: dict, grads: dict):
        zhat, inv_std = bn_cache["zhat"], bn_cache["inv_std"]
        grads[f"bn{i}.gamma"] = (dy * zhat).sum(axis=0)
        grads[f"bn{i}.beta"] = dy.sum(axis=0)
        dzhat = dy * self.params[f"bn{i}.gamma"]
        if not bn_cache["batch"]:
            return dzhat * inv_std
        n = dy.shape[0]
        return (inv_std / n) * (n * dzhat - dzhat.sum(axis=0)
                                - zhat * (dzhat * zhat).sum(axis=0))

    # -- weight transport ----------------------------------------------------

    def named_tensors(self) -> dict:
        out = {name: arr.copy() for name, arr in self.params.items()}
        out.update({name: arr.copy() for name, arr in self.buffers.items()})
        return out

    def load_tensors(self, tensors: dict):
        for name in self.params:
            self.params[name] = np.array(tensors[name], dtype=np.float64)
        for name in self.buffers:
            self.buffers[name] = np.array(tensors[name], dtype=np.float64)

    def clone(self) -> "MLP":
        twin = MLP(self.sizes, dropout=self.dropout, batch_norm=self.batch_norm,
                   rng=np.random.default_rng(0))
        twin.load_tensors(self.named_tensors())
        return twin


class AdamW:
    """Decoupled-weight-decay Adam over a named parameter dict."""

    def __init__(self, params: dict, lr: float = 1e-3, weight_decay: float = 1e-2,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            p = self.params[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * self.weight_decay * p
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)

    def state_tensors(self) -> dict:
        out = {f"adamw.m.{k}": v.copy() for k, v in self.m.items()}
        out.update({f"adamw.v.{k}": v.copy() for k, v in self.v.items()})
        return out
