"""MLPs, GraphNorm and Gaussian latent utilities built on the autodiff ops."""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import Segments, Tensor


class ParamStore(dict):
    """Ordered ``name -> Tensor`` map of trainable parameters."""

    def new(self, name: str, data) -> Tensor:
        if name in self:
            raise KeyError(f"duplicate parameter {name!r}")
        t = Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)
        self[name] = t
        return t

    def zero_grad(self):
        for t in self.values():
            t.grad = None

    def arrays(self) -> dict:
        return {k: t.data for k, t in self.items()}

    def load_arrays(self, arrays: dict):
        missing = set(self) ^ set(arrays)
        if missing:
            raise KeyError(f"parameter name mismatch: {sorted(missing)}")
        for k, t in self.items():
            a = np.asarray(arrays[k], dtype=np.float64)
            if a.shape != t.data.shape:
                raise ValueError(f"shape mismatch for {k}: {a.shape} vs {t.data.shape}")
            t.data = a.copy()


class MlpParams:
    """Affine layers with ReLU between them; one hidden layer by default."""

    def __init__(self, store: ParamStore, prefix: str, dims, rng, activation="relu"):
        if len(dims) < 2:
            raise ValueError("an MLP needs at least input and output dims")
        self.dims = tuple(int(d) for d in dims)
        self.activation = activation
        self.layers = []
        for i, (fi, fo) in enumerate(zip(self.dims[:-1], self.dims[1:])):
            bound = 1.0 / np.sqrt(fi)
            W = store.new(f"{prefix}.W{i}", rng.uniform(-bound, bound, size=(fi, fo)))
            b = store.new(f"{prefix}.b{i}", rng.uniform(-bound, bound, size=(fo,)))
            self.layers.append((W, b))

    @property
    def in_dim(self):
        return self.dims[0]


def mlp_apply(params: MlpParams, x):
    x = ag.as_tensor(x)
    if x.data.ndim != 2 or x.shape[1] != params.in_dim:
        raise ValueError(f"MLP expects (*, {params.in_dim}) input, got {x.shape}")
    last = len(params.layers) - 1
    for i, (W, b) in enumerate(params.layers):
        x = ag.add(ag.matmul(x, W), b)
        if i < last:
            x = ag.relu(x)
    return x


class GraphNormParams:
    def __init__(self, store: ParamStore, prefix: str, dim: int):
        self.alpha = store.new(f"{prefix}.alpha", np.ones(dim))
        self.gamma = store.new(f"{prefix}.gamma", np.ones(dim))
        self.beta = store.new(f"{prefix}.beta", np.zeros(dim))


GRAPH_NORM_EPS = 1e-5


def graph_norm(x, seg: Segments, params: GraphNormParams, eps=GRAPH_NORM_EPS):
    """gamma * (x - alpha * mean_g) / sqrt(var_g + eps) + beta, per graph g."""
    mu = ag.gather(ag.segment_mean(x, seg), seg.ids)
    centered = ag.sub(x, ag.mul(mu, params.alpha))
    var = ag.segment_mean(ag.square(centered), seg)
    std = ag.gather(ag.sqrt(ag.add(var, eps)), seg.ids)
    return ag.add(ag.mul(ag.div(centered, std), params.gamma), params.beta)


def kl_std_normal(mu, logvar):
    """KL(N(mu, exp(logvar)) || N(0, I)) summed over all entries."""
    mu, logvar = ag.as_tensor(mu), ag.as_tensor(logvar)
    if mu.shape != logvar.shape:
        raise ValueError("mu and logvar shapes differ")
    inner = ag.sub(ag.sub(ag.add(ag.square(mu), ag.exp(logvar)), 1.0), logvar)
    return ag.mul(ag.sum(inner), 0.5)


def reparameterize(mu, logvar, rng):
    mu, logvar = ag.as_tensor(mu), ag.as_tensor(logvar)
    if mu.shape != logvar.shape:
        raise ValueError("mu and logvar shapes differ")
    eps = rng.standard_normal(mu.shape)
    return ag.add(mu, ag.mul(ag.exp(ag.mul(logvar, 0.5)), eps))


PROB_CLAMP = 1e-7


def bce(prob, target, weights=None):
    """Binary cross-entropy on probabilities clamped to [1e-7, 1 - 1e-7]."""
    p = ag.clip(prob, PROB_CLAMP, 1.0 - PROB_CLAMP)
    t = np.asarray(target, dtype=np.float64)
    terms = ag.add(ag.mul(ag.log(p), -t), ag.mul(ag.log(ag.sub(1.0, p)), -(1.0 - t)))
    if weights is None:
        return ag.mean(terms)
    return ag.sum(ag.mul(terms, np.asarray(weights, dtype=np.float64)))


def mse(pred, target, weights=None):
    diff = ag.sub(pred, np.asarray(target, dtype=np.float64))
    if weights is None:
        return ag.mean(ag.square(diff))
    return ag.sum(ag.mul(ag.square(diff), np.asarray(weights, dtype=np.float64)))


def mlp_apply_split(params: MlpParams, parts):
    """``mlp_apply(params, concat(X_k[idx_k]))`` without materializing the concat.

    ``parts`` is a list of ``(X_k, idx_k)`` with ``idx_k`` an index array or
    None (rows used as is). The first affine layer is applied to each ``X_k``
    before the gather, which is cheaper when ``X_k`` has fewer rows than the
    output.
    """
    W, b = params.layers[0]
    widths = [p[0].shape[1] for p in parts]
    if sum(widths) != params.in_dim:
        raise ValueError(f"MLP expects total width {params.in_dim}, got {sum(widths)}")
    acc, start = None, 0
    for (X, idx), w in zip(parts, widths):
        y = ag.matmul(X, ag.slice_rows(W, start, start + w))
        if idx is not None:
            y = ag.gather(y, idx)
        acc = y if acc is None else ag.add(acc, y)
        start += w
    x = ag.add(acc, b)
    for W, b in params.layers[1:]:
        x = ag.add(ag.matmul(ag.relu(x), W), b)
    return x
