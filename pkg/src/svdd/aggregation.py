"""Layer aggregation: maps an [N, F, T] representation stack to one
[F, T] feature map, differentiably.

Three strategies: a softmax-normalized weighted sum, attentive merging
(per-layer sigmoid weights from time-averaged embeddings followed by a
linear merge projection), and squeeze-and-excitation aggregation (global
average pooling to a layer descriptor, bottleneck excitation network,
per-layer sigmoid recalibration, summation with no final projection).
"""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import DimensionError, Parameter, Tensor


def _param(shape, rng, scale, dtype):
    if rng is None:
        return Parameter(Tensor.zeros(shape, dtype=dtype))
    return Parameter(Tensor(rng.normal(0.0, scale, size=shape), dtype=dtype))


def _check_stack(stack: Tensor, n_layers: int):
    if stack.ndim != 3:
        raise DimensionError(f"stack must be [N, F, T], got {stack.shape}")
    if stack.shape[0] != n_layers:
        raise DimensionError(
            f"stack has {stack.shape[0]} layers, aggregator expects {n_layers}")


class WeightedSum:
    """One trainable logit per layer; softmax-normalized combination."""

    def __init__(self, n_layers: int, dtype=np.float32):
        self.n_layers = n_layers
        self.logits = Parameter(Tensor.zeros((n_layers,), dtype=dtype))

    def parameters(self):
        return {"agg.logits": self.logits}

    def param_count(self):
        return self.n_layers

    def forward(self, stack: Tensor) -> Tensor:
        _check_stack(stack, self.n_layers)
        weights = ad.softmax(self.logits.value, axis=0)
        return ad.reduce_sum(ad.mul_along_axis0(stack, weights), axes=(0,))


class AttM:
    """Attentive merging: sigmoid layer weights from time-averaged
    embeddings, then a linear projection merging the re-weighted layers."""

    def __init__(self, n_layers: int, feat_dim: int, rng=None, dtype=np.float32):
        self.n_layers = n_layers
        self.feat_dim = feat_dim
        sq_scale = 1.0 / math.sqrt(feat_dim)
        mg_scale = 1.0 / math.sqrt(n_layers * feat_dim)
        self.squeeze_w = _param((feat_dim, 1), rng, sq_scale, dtype)
        self.squeeze_b = _param((1,), None, 0.0, dtype)
        self.merge_w = _param((n_layers * feat_dim, feat_dim), rng, mg_scale,
                              dtype)
        self.merge_b = _param((feat_dim,), None, 0.0, dtype)

    def parameters(self):
        return {"agg.squeeze_w": self.squeeze_w, "agg.squeeze_b": self.squeeze_b,
                "agg.merge_w": self.merge_w, "agg.merge_b": self.merge_b}

    def param_count(self):
        return sum(int(np.prod(p.shape)) for p in self.parameters().values())

    def layer_weights(self, stack: Tensor) -> Tensor:
        mean_embed = ad.reduce_mean(stack, axes=(2,))          # [N, F]
        pre = ad.add_rowwise(ad.matmul(mean_embed, self.squeeze_w.value),
                             self.squeeze_b.value)             # [N, 1]
        return ad.reshape(ad.sigmoid(pre), (self.n_layers,))

    def forward(self, stack: Tensor) -> Tensor:
        _check_stack(stack, self.n_layers)
        if stack.shape[1] != self.feat_dim:
            raise DimensionError(
                f"stack feat dim {stack.shape[1]} != {self.feat_dim}")
        weights = self.layer_weights(stack)
        reweighted = ad.mul_along_axis0(stack, weights)        # [N, F, T]
        frames = ad.reshape(ad.transpose(reweighted, (2, 0, 1)),
                            (stack.shape[2], self.n_layers * self.feat_dim))
        merged = ad.add_rowwise(ad.matmul(frames, self.merge_w.value),
                                self.merge_b.value)            # [T, F]
        return ad.transpose(merged, (1, 0))


class SEA:
    """Squeeze-and-excitation aggregation: GAP over features and time to a
    layer descriptor, bottleneck excitation, per-layer sigmoid scaling,
    sum over layers.  No final linear projection."""

    def __init__(self, n_layers: int, reduction_ratio: int = 2, rng=None,
                 dtype=np.float32):
        if reduction_ratio < 1:
            raise ValueError(f"reduction ratio must be >= 1, got {reduction_ratio}")
        self.n_layers = n_layers
        self.reduction_ratio = reduction_ratio
        self.hidden = max(1, math.ceil(n_layers / reduction_ratio))
        scale = 1.0 / math.sqrt(n_layers)
        self.w1 = _param((n_layers, self.hidden), rng, scale, dtype)
        self.b1 = _param((self.hidden,), None, 0.0, dtype)
        self.w2 = _param((self.hidden, n_layers), rng,
                         1.0 / math.sqrt(self.hidden), dtype)
        self.b2 = _param((n_layers,), None, 0.0, dtype)

    def parameters(self):
        return {"agg.w1": self.w1, "agg.b1": self.b1,
                "agg.w2": self.w2, "agg.b2": self.b2}

    def param_count(self):
        return 2 * self.n_layers * self.hidden + self.hidden + self.n_layers

    def excitation(self, stack: Tensor) -> Tensor:
        descriptor = ad.reduce_mean(stack, axes=(1, 2))        # [N]
        z = ad.relu(ad.add_rowwise(
            ad.matmul(ad.reshape(descriptor, (1, self.n_layers)),
                      self.w1.value), self.b1.value))          # [1, hidden]
        excite = ad.sigmoid(ad.add_rowwise(ad.matmul(z, self.w2.value),
                                           self.b2.value))     # [1, N]
        return ad.reshape(excite, (self.n_layers,))

    def forward(self, stack: Tensor) -> Tensor:
        _check_stack(stack, self.n_layers)
        excite = self.excitation(stack)
        return ad.reduce_sum(ad.mul_along_axis0(stack, excite), axes=(0,))


AGGREGATORS = ("weighted_sum", "attm", "sea")


def make_aggregator(kind: str, n_layers: int, feat_dim: int, rng=None,
                    reduction_ratio: int = 2, dtype=np.float32):
    if kind == "weighted_sum":
        return WeightedSum(n_layers, dtype=dtype)
    if kind == "attm":
        return AttM(n_layers, feat_dim, rng=rng, dtype=dtype)
    if kind == "sea":
        return SEA(n_layers, reduction_ratio=reduction_ratio, rng=rng,
                   dtype=dtype)
    raise ValueError(f"unknown aggregator {kind!r}; choose from {AGGREGATORS}")
