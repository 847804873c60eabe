# src/cul/neural.py
"""Fully connected ReLU networks over one flat parameter vector, plus the training primitives."""

import math
import logging
from dataclasses import dataclass

import numpy as np

from cul.errors import NonFiniteError

logger = logging.getLogger(__name__)

HIDDEN_WIDTH = 128
OUTPUT_HEADS = ("linear", "tanh")
CHECKPOINT_MAGIC = "cul-densenet"
CHECKPOINT_VERSION = 1


class DenseNet:
    """
    Layer i maps fan_in -> fan_out with W_i (fan_out x fan_in) and b_i (fan_out).
    Parameters are stored layer by layer as [W_0.ravel(), b_0, W_1.ravel(), b_1, ...].
    Hidden layers use ReLU; the output head is 'linear' or 'tanh'.
    """

    def __init__(self, sizes, output="linear", params=None):
        self.sizes = tuple(int(s) for s in sizes)
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ValueError(f"invalid layer sizes {sizes}")
        if output not in OUTPUT_HEADS:
            raise ValueError(f"output head must be one of {OUTPUT_HEADS}, got {output!r}")
        self.output = output
        self._slices = []
        offset = 0
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            w = slice(offset, offset + fan_in * fan_out)
            offset += fan_in * fan_out
            b = slice(offset, offset + fan_out)
            offset += fan_out
            self._slices.append((w, b))
        self.n_params = offset
        if params is None:
            self.params = np.zeros(self.n_params)
        else:
            params = np.asarray(params, dtype=float)
            if params.shape != (self.n_params,):
                raise ValueError(f"expected {self.n_params} parameters, got {params.shape}")
            self.params = params.copy()

    @property
    def n_layers(self):
        return len(self._slices)

    @property
    def activations(self):
        return ("relu",) * (self.n_layers - 1) + (self.output,)

    def layer(self, i):
        """(W, b) views into params."""
        w, b = self._slices[i]
        fan_in, fan_out = self.sizes[i], self.sizes[i + 1]
        return self.params[w].reshape(fan_out, fan_in), self.params[b]

    def copy(self):
        return DenseNet(self.sizes, self.output, self.params)

    def __repr__(self):
        return f"DenseNet(sizes={self.sizes}, output={self.output!r})"


def init_net(sizes, output, rng, final_scale=1.0):
    """Uniform(+-1/sqrt(fan_in)) per layer; the last layer is further scaled by final_scale."""
    net = DenseNet(sizes, output)
    for i in range(net.n_layers):
        w, b = net.layer(i)
        bound = 1.0 / math.sqrt(net.sizes[i])
        if i == net.n_layers - 1:
            bound *= final_scale
        w[...] = rng.uniform(-bound, bound, size=w.shape)
        b[...] = rng.uniform(-bound, bound, size=b.shape)
    return net


@dataclass
class ForwardCache:
    inputs: list      # activation entering each layer, (batch, fan_in)
    pre: list         # pre-activations, (batch, fan_out)
    output: np.ndarray
    squeeze: bool
    n_params: int


def forward(net, x):
    """Returns (output, cache). A 1-D input is treated as a batch of one."""
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    a = x[None, :] if squeeze else x
    if a.ndim != 2 or a.shape[1] != net.sizes[0]:
        raise ValueError(f"input shape {x.shape} does not match net input size {net.sizes[0]}")
    inputs, pres = [], []
    last = net.n_layers - 1
    for i in range(net.n_layers):
        w, b = net.layer(i)
        inputs.append(a)
        z = a @ w.T + b
        pres.append(z)
        if i < last:
            a = np.maximum(z, 0.0)
        elif net.output == "tanh":
            a = np.tanh(z)
        else:
            a = z
    cache = ForwardCache(inputs, pres, a, squeeze, net.n_params)
    return (a[0] if squeeze else a), cache


def _output_deltas(net, cache, upstream):
    g = np.asarray(upstream, dtype=float)
    if cache.squeeze:
        g = g[None, :] if g.ndim == 1 else g
    if cache.n_params != net.n_params or g.shape != cache.output.shape:
        raise ValueError(
            f"stale cache: upstream {g.shape} vs output {cache.output.shape}, "
            f"{cache.n_params} vs {net.n_params} parameters"
        )
    if net.output == "tanh":
        return g * (1.0 - cache.output ** 2)
    return g


def _backprop(net, cache, upstream, squared):
    """Walks the layers backwards; `squared` sums per-sample squared gradients instead."""
    delta = _output_deltas(net, cache, upstream)
    grad = np.zeros(net.n_params)
    for i in reversed(range(net.n_layers)):
        w_slice, b_slice = net._slices[i]
        a_in = cache.inputs[i]
        if squared:
            grad[w_slice] = ((delta ** 2).T @ (a_in ** 2)).ravel()
            grad[b_slice] = (delta ** 2).sum(axis=0)
        else:
            grad[w_slice] = (delta.T @ a_in).ravel()
            grad[b_slice] = delta.sum(axis=0)
        w, _ = net.layer(i)
        delta_in = delta @ w
        if i > 0:
            delta_in = delta_in * (cache.pre[i - 1] > 0.0)
        delta = delta_in
    return grad, delta


def backward(net, cache, upstream):
    """
    Reverse-mode gradients of sum(upstream * output), summed over the batch.
    Returns (parameter gradient, input gradient).
    """
    grad, dx = _backprop(net, cache, upstream, squared=False)
    return grad, (dx[0] if cache.squeeze else dx)


def squared_param_grads(net, cache, upstream=None):
    """Sum over samples of the squared per-sample parameter gradient of the output."""
    if upstream is None:
        upstream = np.ones_like(cache.output)
    grad, _ = _backprop(net, cache, upstream, squared=True)
    return grad


@dataclass
class OptState:
    """Adaptive moment estimation state."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, n, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        return cls(np.zeros(n), np.zeros(n), 0, lr, beta1, beta2, eps)


def opt_step(opt, theta, g):
    """One bias-corrected Adam step; returns the new parameter vector."""
    g = np.asarray(g, dtype=float)
    if g.shape != theta.shape or opt.m.shape != theta.shape:
        raise ValueError(f"length mismatch: theta {theta.shape}, grad {g.shape}, moments {opt.m.shape}")
    if not np.all(np.isfinite(g)):
        raise NonFiniteError("non-finite gradient rejected by optimizer")
    opt.t += 1
    opt.m = opt.beta1 * opt.m + (1.0 - opt.beta1) * g
    opt.v = opt.beta2 * opt.v + (1.0 - opt.beta2) * g * g
    m_hat = opt.m / (1.0 - opt.beta1 ** opt.t)
    v_hat = opt.v / (1.0 - opt.beta2 ** opt.t)
    out = theta - opt.lr * m_hat / (np.sqrt(v_hat) + opt.eps)
    if not np.all(np.isfinite(out)):
        raise NonFiniteError("parameters became non-finite")
    return out


@dataclass
class OuNoise:
    value: float = 0.0
    theta: float = 0.15
    sigma: float = 0.2
    mean: float = 0.0
    dt: float = 1.0

    def reset(self):
        self.value = self.mean


def ou_sample(n, rng):
    """Euler step of dx = theta (mean - x) dt + sigma dW; returns the new value."""
    n.value = n.value + n.theta * (n.mean - n.value) * n.dt + n.sigma * math.sqrt(n.dt) * rng.standard_normal()
    return n.value


def soft_update(target, source, eta):
    """eta * source + (1 - eta) * target."""
    target = np.asarray(target, dtype=float)
    source = np.asarray(source, dtype=float)
    if target.shape != source.shape:
        raise ValueError(f"length mismatch: {target.shape} vs {source.shape}")
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"eta must lie in (0, 1], got {eta}")
    return eta * source + (1.0 - eta) * target


def save_net_text(net, path):
    with open(path, "w") as fh:
        fh.write(f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n")
        fh.write("sizes " + " ".join(str(s) for s in net.sizes) + "\n")
        fh.write(f"output {net.output}\n")
        fh.write(f"params {net.n_params}\n")
        for v in net.params:
            fh.write("%.17g\n" % v)
    logger.debug(f"Saved {net!r} to {path}")


def load_net_text(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    magic, version = lines[0].split()
    if magic != CHECKPOINT_MAGIC or int(version) != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: not a {CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION} file")
    sizes = [int(s) for s in lines[1].split()[1:]]
    output = lines[2].split()[1]
    n = int(lines[3].split()[1])
    params = np.array([float(v) for v in lines[4:4 + n]])
    return DenseNet(sizes, output, params)
