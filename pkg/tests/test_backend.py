import math

import numpy as np
import pytest

from svdd import autodiff as ad
from svdd.aggregation import SEA
from svdd.autodiff import DimensionError, Tape, Tensor, finite_difference_grad
from svdd.backend import (
    Backend,
    BackendConfig,
    BlockSpec,
    DetectionModel,
    Encoder,
    GraphAttention,
    GraphPool,
    HeterogeneousStage,
    NodeSet,
    Readout,
    ResidualBlock,
    derive_nodes,
)

from test_autodiff import rel_err

F64 = np.float64


def rand_nodes(rng, n, d, kind="spectral"):
    return NodeSet(Tensor(rng.uniform(-1, 1, size=(n, d)), dtype=F64), kind)


def param_fd_check(params, build, h=1e-6, tol=1e-3, skip=()):
    """FD-check the scalar build() against analytic grads for every param."""
    with Tape() as tape:
        loss = build()
    grads = tape.gradients(loss)
    worst = 0.0
    for name, p in params.items():
        if name in skip:
            continue
        analytic = grads.wrt(p.value)

        def value(t, p=p):
            saved = p.value
            p.assign(t.numpy())
            try:
                return build().item()
            finally:
                p.value = saved
        fd = finite_difference_grad(value, p.value, h=h)
        err = rel_err(analytic, fd.numpy())
        worst = max(worst, err)
        assert err < tol, f"{name}: rel err {err:.2e}"
    return worst


class TestResidualBlock:
    def test_zero_weights_identity_skip(self):
        rng = np.random.default_rng(0)
        block = ResidualBlock("b", 4, BlockSpec(4, 3, (1, 1)), rng, F64)
        block.conv1.assign(np.zeros(block.conv1.shape))
        block.conv2.assign(np.zeros(block.conv2.shape))
        x = Tensor(rng.uniform(-1, 1, size=(4, 6, 7)), dtype=F64)
        out = block.forward(x)
        np.testing.assert_allclose(out.numpy(), x.numpy(), atol=1e-12)

    def test_stride_arithmetic(self):
        cfg = BackendConfig(encoder=(BlockSpec(8, 3, (2, 2)),
                                     BlockSpec(8, 3, (2, 2))))
        enc = Encoder(cfg, np.random.default_rng(1), F64)
        x = Tensor(np.random.default_rng(2).uniform(-1, 1, (16, 200)),
                   dtype=F64)
        assert enc.forward(x).shape == (8, 4, 50)

    def test_too_small_input_rejected(self):
        cfg = BackendConfig()
        enc = Encoder(cfg, np.random.default_rng(0), F64)
        with pytest.raises(DimensionError, match="at least"):
            enc.forward(Tensor(np.zeros((2, 2)), dtype=F64))

    def test_gradient_through_block(self):
        rng = np.random.default_rng(3)
        block = ResidualBlock("b", 2, BlockSpec(3, 3, (2, 1)), rng, F64)
        x = Tensor(rng.uniform(-1, 1, size=(2, 5, 6)), dtype=F64)
        param_fd_check(block.parameters(),
                       lambda: ad.reduce_sum(block.forward(x)))


class TestDeriveNodes:
    def test_constant_map(self):
        fm = Tensor(np.full((3, 4, 5), 1.5), dtype=F64)
        spec, temp = derive_nodes(fm)
        assert spec.nodes.shape == (4, 3) and temp.nodes.shape == (5, 3)
        assert np.all(spec.nodes.numpy() == 1.5)
        assert np.all(temp.nodes.numpy() == 1.5)

    def test_single_spike_routing(self):
        fm = np.zeros((3, 4, 5))
        fm[1, 2, 3] = 7.0
        spec, temp = derive_nodes(Tensor(fm, dtype=F64))
        assert np.count_nonzero(spec.nodes.numpy()) == 1
        assert np.count_nonzero(temp.nodes.numpy()) == 1
        assert spec.nodes.numpy()[2, 1] == 7.0
        assert temp.nodes.numpy()[3, 1] == 7.0

    def test_shapes_contract(self):
        fm = Tensor(np.zeros((8, 4, 50)), dtype=F64)
        spec, temp = derive_nodes(fm)
        assert spec.nodes.shape == (4, 8)
        assert temp.nodes.shape == (50, 8)
        assert spec.kind == "spectral" and temp.kind == "temporal"


class TestGraphAttention:
    def test_single_node(self):
        rng = np.random.default_rng(4)
        gat = GraphAttention("g", 3, 4, rng, F64)
        ns = rand_nodes(rng, 1, 3)
        att = gat.attention(ns.nodes).numpy()
        np.testing.assert_allclose(att, [[1.0]], atol=1e-12)
        out = gat.forward(ns)
        lin = ns.nodes.numpy() @ gat.wo.value.numpy() + gat.bo.value.numpy()
        normed = ad.layer_norm(Tensor(lin, dtype=F64), gat.ln_gain.value,
                               gat.ln_bias.value, axis=1)
        np.testing.assert_allclose(out.nodes.numpy(),
                                   ad.selu(normed).numpy(), atol=1e-12)

    def test_identical_nodes_identical_outputs(self):
        rng = np.random.default_rng(5)
        gat = GraphAttention("g", 3, 4, rng, F64)
        row = rng.uniform(-1, 1, size=3)
        ns = NodeSet(Tensor(np.tile(row, (5, 1)), dtype=F64), "temporal")
        out = gat.forward(ns).nodes.numpy()
        for i in range(1, 5):
            np.testing.assert_allclose(out[i], out[0], atol=1e-12)

    def test_attention_rows_sum_to_one(self):
        rng = np.random.default_rng(6)
        gat = GraphAttention("g", 4, 4, rng, F64)
        ns = rand_nodes(rng, 7, 4)
        rows = gat.attention(ns.nodes).numpy().sum(axis=1)
        np.testing.assert_allclose(rows, 1.0, atol=1e-6)

    def test_gradient(self):
        rng = np.random.default_rng(7)
        gat = GraphAttention("g", 3, 3, rng, F64)
        ns = rand_nodes(rng, 4, 3)
        param_fd_check(gat.parameters(),
                       lambda: ad.reduce_sum(gat.forward(ns).nodes))


class TestHeterogeneousStage:
    def test_zero_logits_master_update_is_mean(self):
        rng = np.random.default_rng(8)
        htrg = HeterogeneousStage("h", 4, rng, F64)
        spec = rand_nodes(rng, 3, 4, "spectral")
        temp = rand_nodes(rng, 5, 4, "temporal")
        master = Tensor(rng.uniform(-1, 1, size=(1, 4)), dtype=F64)
        _, _, master_out = htrg.forward(spec, temp, master)
        proj = np.vstack([spec.nodes.numpy() @ htrg.proj_spec.value.numpy(),
                          temp.nodes.numpy() @ htrg.proj_temp.value.numpy()])
        expected = master.numpy() + proj.mean(axis=0, keepdims=True)
        np.testing.assert_allclose(master_out.numpy(), expected, atol=1e-9)

    def test_temporal_permutation_equivariance(self):
        rng = np.random.default_rng(9)
        htrg = HeterogeneousStage("h", 4, rng, F64)
        spec = rand_nodes(rng, 3, 4, "spectral")
        temp = rand_nodes(rng, 6, 4, "temporal")
        master = Tensor(rng.uniform(-1, 1, size=(1, 4)), dtype=F64)
        s1, t1, m1 = htrg.forward(spec, temp, master)
        perm = np.random.default_rng(10).permutation(6)
        temp_p = NodeSet(Tensor(temp.nodes.numpy()[perm], dtype=F64),
                         "temporal")
        s2, t2, m2 = htrg.forward(spec, temp_p, master)
        np.testing.assert_allclose(t2.nodes.numpy(), t1.nodes.numpy()[perm],
                                   atol=1e-10)
        np.testing.assert_allclose(s2.nodes.numpy(), s1.nodes.numpy(),
                                   atol=1e-10)
        np.testing.assert_allclose(m2.numpy(), m1.numpy(), atol=1e-10)

    def test_gradient_end_to_end(self):
        rng = np.random.default_rng(11)
        htrg = HeterogeneousStage("h", 3, rng, F64)
        # nonzero master attention so its gradient path is exercised
        htrg.master_w.assign(rng.normal(size=(3, 1)))
        spec = rand_nodes(rng, 2, 3, "spectral")
        temp = rand_nodes(rng, 3, 3, "temporal")
        master = Tensor(rng.uniform(-1, 1, size=(1, 3)), dtype=F64)

        def build():
            s, t, m = htrg.forward(spec, temp, master)
            return ad.reduce_sum(ad.concat(
                [s.nodes, t.nodes, m], axis=0))
        param_fd_check(htrg.parameters(), build)


class TestGraphPool:
    def make_pool(self, ratio):
        pool = GraphPool("p", 1, ratio, np.random.default_rng(0), F64)
        pool.score_w.assign(np.array([[1.0]]))
        pool.score_b.assign(np.array([0.0]))
        return pool

    def test_keep_all_scales_by_score(self):
        pool = self.make_pool(1.0)
        nodes = NodeSet(Tensor([[2.0], [-1.0], [0.5]], dtype=F64), "spectral")
        out = pool.forward(nodes).nodes.numpy()
        scores = 1 / (1 + np.exp(-nodes.nodes.numpy()[:, 0]))
        np.testing.assert_allclose(out[:, 0],
                                   nodes.nodes.numpy()[:, 0] * scores,
                                   atol=1e-12)

    def test_top_k_order_preserved(self):
        pool = self.make_pool(0.5)
        nodes = NodeSet(Tensor([[2.0], [-2.0], [1.0], [-1.0]], dtype=F64),
                        "temporal")
        out = pool.forward(nodes).nodes.numpy()
        # scores ~ (0.88, 0.12, 0.73, 0.27): keep nodes 0 and 2, in order
        s = 1 / (1 + np.exp(-np.array([2.0, 1.0])))
        np.testing.assert_allclose(out[:, 0], np.array([2.0, 1.0]) * s,
                                   atol=1e-12)

    def test_output_count_exact(self):
        rng = np.random.default_rng(12)
        for n in (1, 3, 4, 7, 10):
            for ratio in (0.3, 0.5, 1.0):
                pool = GraphPool("p", 4, ratio, rng, F64)
                out = pool.forward(rand_nodes(rng, n, 4))
                assert out.nodes.shape[0] == math.ceil(ratio * n)

    def test_gradient_zero_for_dropped_node(self):
        rng = np.random.default_rng(13)
        pool = GraphPool("p", 2, 0.5, rng, F64)
        ns = rand_nodes(rng, 4, 2)

        def value(t):
            return ad.reduce_sum(
                pool.forward(NodeSet(t, "spectral")).nodes).item()
        with Tape() as tape:
            loss = ad.reduce_sum(pool.forward(ns).nodes)
        analytic = tape.gradients(loss).wrt(ns.nodes)
        fd = finite_difference_grad(value, ns.nodes, h=1e-7)
        dropped = np.all(analytic == 0, axis=1)
        assert dropped.sum() == 2
        np.testing.assert_allclose(fd.numpy()[dropped], 0.0, atol=1e-6)
        assert rel_err(analytic, fd.numpy()) < 1e-3


class TestReadout:
    def test_zero_weights_zero_logit(self):
        rng = np.random.default_rng(14)
        ro = Readout("r", 4, rng, F64)
        ro.w.assign(np.zeros((20, 1)))
        spec = rand_nodes(rng, 3, 4, "spectral")
        temp = rand_nodes(rng, 5, 4, "temporal")
        master = Tensor(rng.uniform(-1, 1, size=(1, 4)), dtype=F64)
        assert ro.forward(spec, temp, master).item() == 0.0

    def test_concat_length_is_5d(self):
        rng = np.random.default_rng(15)
        ro = Readout("r", 4, rng, F64)
        feats = ro.features(rand_nodes(rng, 3, 4), rand_nodes(rng, 5, 4),
                            Tensor(np.zeros((1, 4)), dtype=F64))
        assert feats.shape == (20,)

    def test_gradient(self):
        rng = np.random.default_rng(16)
        ro = Readout("r", 3, rng, F64)
        spec = rand_nodes(rng, 2, 3, "spectral")
        temp = rand_nodes(rng, 4, 3, "temporal")
        master = Tensor(rng.uniform(-1, 1, size=(1, 3)), dtype=F64)
        param_fd_check(ro.parameters(),
                       lambda: ro.forward(spec, temp, master))


class TestFullBackend:
    CFG = BackendConfig(encoder=(BlockSpec(4, 3, (2, 2)),
                                 BlockSpec(4, 3, (2, 2))),
                        node_dim=6, dropout=0.0, seed=21)

    def test_end_to_end_determinism(self):
        backend = Backend(self.CFG)
        agg = Tensor(np.random.default_rng(17).uniform(-1, 1, (16, 48))
                     .astype(np.float32))
        a = backend.forward(agg).item()
        b = backend.forward(agg).item()
        assert a == b

    def test_full_gradient_check(self):
        backend = Backend(self.CFG, dtype=F64)
        rng = np.random.default_rng(18)
        agg = Tensor(rng.uniform(-1, 1, size=(16, 48)), dtype=F64)
        param_fd_check(backend.parameters(),
                       lambda: backend.forward(agg), h=1e-6)

    def test_model_combines_aggregator_and_backend(self):
        rng = np.random.default_rng(19)
        agg = SEA(3, rng=rng, dtype=F64)
        model = DetectionModel(agg, Backend(self.CFG, dtype=F64))
        stack = Tensor(rng.uniform(-1, 1, size=(3, 16, 48)), dtype=F64)
        logit = model.forward(stack)
        assert logit.shape == ()
        names = model.parameters()
        assert any(k.startswith("agg.") for k in names)
        assert any(k.startswith("backend.") for k in names)
