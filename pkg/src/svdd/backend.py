"""Graph-attention classifier backend: residual conv encoder, spectral and
temporal node sets derived by max pooling, graph attention layers, a
heterogeneous stage with a master node, top-k graph pooling, and a
single-logit readout head.

Batch normalization is deliberately replaced by per-feature layer
normalization throughout (documented deviation; see README).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import DimensionError, Parameter, Tensor


def _rand(shape, rng, scale, dtype):
    return Parameter(Tensor(rng.normal(0.0, scale, size=shape), dtype=dtype))


def _ones(shape, dtype):
    return Parameter(Tensor(np.ones(shape), dtype=dtype))


def _zeros(shape, dtype):
    return Parameter(Tensor.zeros(shape, dtype=dtype))


@dataclass(frozen=True)
class BlockSpec:
    channels: int
    kernel: int = 3
    stride: tuple = (1, 1)


@dataclass(frozen=True)
class BackendConfig:
    encoder: tuple = (BlockSpec(8, 3, (1, 1)), BlockSpec(8, 3, (2, 2)),
                      BlockSpec(8, 3, (2, 2)))
    node_dim: int = 16
    pool_ratio_spectral: float = 0.5
    pool_ratio_temporal: float = 0.5
    dropout: float = 0.2
    seed: int = 0

    def __post_init__(self):
        for r in (self.pool_ratio_spectral, self.pool_ratio_temporal):
            if not 0.0 < r <= 1.0:
                raise ValueError(f"pool ratio must be in (0, 1], got {r}")
        if self.node_dim < 1:
            raise ValueError("node_dim must be >= 1")


@dataclass(frozen=True)
class NodeSet:
    nodes: Tensor  # [n, D]
    kind: str      # spectral | temporal

    def __post_init__(self):
        if self.nodes.ndim != 2 or self.nodes.shape[0] < 1:
            raise DimensionError(
                f"node set must be [n >= 1, D], got {self.nodes.shape}")


class ResidualBlock:
    """conv -> layer norm (channel axis) -> SELU -> conv, plus a skip path
    (identity, or a strided 1x1 projection when shape changes)."""

    def __init__(self, name, in_channels, spec: BlockSpec, rng, dtype):
        self.name = name
        self.spec = spec
        self.in_channels = in_channels
        c, k = spec.channels, spec.kernel
        s1 = 1.0 / math.sqrt(in_channels * k * k)
        s2 = 1.0 / math.sqrt(c * k * k)
        self.conv1 = _rand((c, in_channels, k, k), rng, s1, dtype)
        self.conv2 = _rand((c, c, k, k), rng, s2, dtype)
        self.ln_gain = _ones((c,), dtype)
        self.ln_bias = _zeros((c,), dtype)
        self.project = None
        if in_channels != c or spec.stride != (1, 1):
            self.project = _rand((c, in_channels, 1, 1), rng,
                                 1.0 / math.sqrt(in_channels), dtype)

    def parameters(self):
        out = {f"{self.name}.conv1": self.conv1,
               f"{self.name}.conv2": self.conv2,
               f"{self.name}.ln_gain": self.ln_gain,
               f"{self.name}.ln_bias": self.ln_bias}
        if self.project is not None:
            out[f"{self.name}.project"] = self.project
        return out

    def forward(self, x: Tensor) -> Tensor:
        branch = ad.conv2d(x, self.conv1.value, self.spec.stride)
        branch = ad.selu(ad.layer_norm(branch, self.ln_gain.value,
                                       self.ln_bias.value, axis=0))
        branch = ad.conv2d(branch, self.conv2.value, (1, 1))
        if self.project is None:
            skip = x
        else:
            skip = ad.conv2d(x, self.project.value, self.spec.stride)
        return ad.add(skip, branch)


class Encoder:
    def __init__(self, cfg: BackendConfig, rng, dtype):
        self.blocks = []
        cin = 1
        for i, spec in enumerate(cfg.encoder):
            self.blocks.append(ResidualBlock(f"backend.block{i}", cin, spec,
                                             rng, dtype))
            cin = spec.channels
        self.out_channels = cin

    def parameters(self):
        out = {}
        for b in self.blocks:
            out.update(b.parameters())
        return out

    def forward(self, agg_map: Tensor) -> Tensor:
        if agg_map.ndim != 2:
            raise DimensionError(f"expected [F, T] map, got {agg_map.shape}")
        min_f = max(b.spec.kernel for b in self.blocks)
        if agg_map.shape[0] < min_f or agg_map.shape[1] < min_f:
            raise DimensionError(
                f"map {agg_map.shape} smaller than encoder receptive field "
                f"(needs at least {min_f} in each dimension)")
        x = ad.reshape(agg_map, (1,) + agg_map.shape)
        for block in self.blocks:
            x = block.forward(x)
        return x


def derive_nodes(feature_map: Tensor):
    """Split a [C, F', T'] map into spectral [F', C] and temporal [T', C]
    node sets by max pooling over the complementary axis."""
    if feature_map.ndim != 3:
        raise DimensionError(f"expected [C, F, T] map, got {feature_map.shape}")
    spectral = ad.transpose(ad.reduce_max(feature_map, axes=(2,)), (1, 0))
    temporal = ad.transpose(ad.reduce_max(feature_map, axes=(1,)), (1, 0))
    return NodeSet(spectral, "spectral"), NodeSet(temporal, "temporal")


class GraphAttention:
    """Fully-connected self-attention over one node set, then a linear
    projection with layer norm, dropout and SELU."""

    def __init__(self, name, in_dim, out_dim, rng, dtype):
        self.name = name
        self.out_dim = out_dim
        s_in = 1.0 / math.sqrt(in_dim)
        self.wq = _rand((in_dim, out_dim), rng, s_in, dtype)
        self.wk = _rand((in_dim, out_dim), rng, s_in, dtype)
        self.wo = _rand((in_dim, out_dim), rng, s_in, dtype)
        self.bo = _zeros((out_dim,), dtype)
        self.ln_gain = _ones((out_dim,), dtype)
        self.ln_bias = _zeros((out_dim,), dtype)

    def parameters(self):
        return {f"{self.name}.{k}": v for k, v in
                [("wq", self.wq), ("wk", self.wk), ("wo", self.wo),
                 ("bo", self.bo), ("ln_gain", self.ln_gain),
                 ("ln_bias", self.ln_bias)]}

    def attention(self, nodes: Tensor) -> Tensor:
        q = ad.matmul(nodes, self.wq.value)
        k = ad.matmul(nodes, self.wk.value)
        scores = ad.mul(ad.matmul(q, ad.transpose(k, (1, 0))),
                        1.0 / math.sqrt(self.out_dim))
        return ad.softmax(scores, axis=1)  # rows sum to 1

    def forward(self, ns: NodeSet, mode="eval", rng=None,
                dropout_rate=0.0) -> NodeSet:
        att = self.attention(ns.nodes)
        agg = ad.matmul(att, ns.nodes)
        out = ad.add_rowwise(ad.matmul(agg, self.wo.value), self.bo.value)
        out = ad.layer_norm(out, self.ln_gain.value, self.ln_bias.value, axis=1)
        out = ad.dropout(out, dropout_rate, mode,
                         rng if rng is not None else np.random.default_rng(0))
        return NodeSet(ad.selu(out), ns.kind)


class HeterogeneousStage:
    """Cross-type attention over projected spectral+temporal nodes with a
    master-node update; residual connections on all three outputs."""

    def __init__(self, name, dim, rng, dtype):
        self.name = name
        self.dim = dim
        s = 1.0 / math.sqrt(dim)
        self.proj_spec = _rand((dim, dim), rng, s, dtype)
        self.proj_temp = _rand((dim, dim), rng, s, dtype)
        self.wq = _rand((dim, dim), rng, s, dtype)
        self.wk = _rand((dim, dim), rng, s, dtype)
        self.wo = _rand((dim, dim), rng, s, dtype)
        self.bo = _zeros((dim,), dtype)
        self.master_w = _zeros((dim, 1), dtype)  # zero => uniform attention
        self.master_b = _zeros((1,), dtype)

    def parameters(self):
        return {f"{self.name}.{k}": v for k, v in
                [("proj_spec", self.proj_spec), ("proj_temp", self.proj_temp),
                 ("wq", self.wq), ("wk", self.wk), ("wo", self.wo),
                 ("bo", self.bo), ("master_w", self.master_w),
                 ("master_b", self.master_b)]}

    def forward(self, spec: NodeSet, temp: NodeSet, master: Tensor):
        ns = spec.nodes.shape[0]
        proj_s = ad.matmul(spec.nodes, self.proj_spec.value)
        proj_t = ad.matmul(temp.nodes, self.proj_temp.value)
        combined = ad.concat([proj_s, proj_t], axis=0)  # [ns+nt, D]

        q = ad.matmul(combined, self.wq.value)
        k = ad.matmul(combined, self.wk.value)
        att = ad.softmax(ad.mul(ad.matmul(q, ad.transpose(k, (1, 0))),
                                1.0 / math.sqrt(self.dim)), axis=1)
        update = ad.selu(ad.add_rowwise(
            ad.matmul(ad.matmul(att, combined), self.wo.value), self.bo.value))
        spec_out = NodeSet(ad.add(spec.nodes,
                                  ad.take_rows(update, range(ns))), "spectral")
        temp_out = NodeSet(
            ad.add(temp.nodes,
                   ad.take_rows(update, range(ns, combined.shape[0]))),
            "temporal")

        # master: attention weights over all projected nodes
        logits = ad.add_rowwise(ad.matmul(combined, self.master_w.value),
                                self.master_b.value)  # [n, 1]
        weights = ad.softmax(ad.transpose(logits, (1, 0)), axis=1)  # [1, n]
        master_update = ad.matmul(weights, combined)  # [1, D]
        return spec_out, temp_out, ad.add(master, master_update)


class GraphPool:
    """Keep the ceil(k*n) highest-scoring nodes (sigmoid-gated), in their
    original order, each multiplied by its score."""

    def __init__(self, name, dim, ratio, rng, dtype):
        self.name = name
        self.ratio = ratio
        self.score_w = _rand((dim, 1), rng, 1.0 / math.sqrt(dim), dtype)
        self.score_b = _zeros((1,), dtype)

    def parameters(self):
        return {f"{self.name}.score_w": self.score_w,
                f"{self.name}.score_b": self.score_b}

    def forward(self, ns: NodeSet) -> NodeSet:
        n = ns.nodes.shape[0]
        keep = math.ceil(self.ratio * n)
        raw = ad.add_rowwise(ad.matmul(ns.nodes, self.score_w.value),
                             self.score_b.value)
        scores = ad.sigmoid(ad.reshape(raw, (n,)))
        order = np.argsort(-scores.numpy(), kind="stable")  # ties: lower index
        idx = np.sort(order[:keep])
        kept = ad.take_rows(ns.nodes, idx)
        kept_scores = ad.reshape(
            ad.take_rows(ad.reshape(scores, (n, 1)), idx), (keep,))
        return NodeSet(ad.mul_along_axis0(kept, kept_scores), ns.kind)


class Readout:
    """concat(max_t, mean_t, max_s, mean_s, master) -> dropout -> linear."""

    def __init__(self, name, dim, rng, dtype):
        self.name = name
        self.dim = dim
        self.w = _rand((5 * dim, 1), rng, 1.0 / math.sqrt(5 * dim), dtype)
        self.b = _zeros((1,), dtype)

    def parameters(self):
        return {f"{self.name}.w": self.w, f"{self.name}.b": self.b}

    def features(self, spec: NodeSet, temp: NodeSet, master: Tensor) -> Tensor:
        parts = [ad.reduce_max(temp.nodes, axes=(0,)),
                 ad.reduce_mean(temp.nodes, axes=(0,)),
                 ad.reduce_max(spec.nodes, axes=(0,)),
                 ad.reduce_mean(spec.nodes, axes=(0,)),
                 ad.reshape(master, (self.dim,))]
        return ad.concat(parts, axis=0)  # [5 * D]

    def forward(self, spec, temp, master, dropout_rate=0.0, mode="eval",
                rng=None) -> Tensor:
        feats = ad.reshape(self.features(spec, temp, master), (1, 5 * self.dim))
        feats = ad.dropout(feats, dropout_rate, mode,
                           rng if rng is not None else np.random.default_rng(0))
        logit = ad.add_rowwise(ad.matmul(feats, self.w.value), self.b.value)
        return ad.reshape(logit, ())


class Backend:
    """Full stack from an aggregated [F, T] map to a single raw score.

    Higher logit means more bonafide.
    """

    def __init__(self, cfg: BackendConfig = BackendConfig(), dtype=np.float32):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        d = cfg.node_dim
        self.encoder = Encoder(cfg, rng, dtype)
        c = self.encoder.out_channels
        self.gat_spec = GraphAttention("backend.gat_spec", c, d, rng, dtype)
        self.gat_temp = GraphAttention("backend.gat_temp", c, d, rng, dtype)
        self.pool_spec = GraphPool("backend.pool_spec", d,
                                   cfg.pool_ratio_spectral, rng, dtype)
        self.pool_temp = GraphPool("backend.pool_temp", d,
                                   cfg.pool_ratio_temporal, rng, dtype)
        self.htrg = HeterogeneousStage("backend.htrg", d, rng, dtype)
        self.readout = Readout("backend.readout", d, rng, dtype)
        self.master = _rand((1, d), rng, 1.0 / math.sqrt(d), dtype)

    def parameters(self):
        out = {}
        for part in (self.encoder, self.gat_spec, self.gat_temp,
                     self.pool_spec, self.pool_temp, self.htrg, self.readout):
            out.update(part.parameters())
        out["backend.master"] = self.master
        return out

    def forward(self, agg_map: Tensor, mode="eval", rng=None) -> Tensor:
        rate = self.cfg.dropout
        fm = self.encoder.forward(agg_map)
        spec, temp = derive_nodes(fm)
        spec = self.gat_spec.forward(spec, mode, rng, rate)
        temp = self.gat_temp.forward(temp, mode, rng, rate)
        spec = self.pool_spec.forward(spec)
        temp = self.pool_temp.forward(temp)
        spec, temp, master = self.htrg.forward(spec, temp, self.master.value)
        return self.readout.forward(spec, temp, master, rate, mode, rng)


class DetectionModel:
    """Aggregator + backend; the unit that is trained and checkpointed."""

    def __init__(self, aggregator, backend: Backend):
        self.aggregator = aggregator
        self.backend = backend

    def parameters(self):
        out = dict(self.aggregator.parameters())
        out.update(self.backend.parameters())
        return out

    def forward(self, stack: Tensor, mode="eval", rng=None) -> Tensor:
        return self.backend.forward(self.aggregator.forward(stack), mode, rng)
