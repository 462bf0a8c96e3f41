import struct

import numpy as np
import pytest

from milpgen.nn import (Adam, AdamState, CheckpointFormatError, GraphNormParams, MlpParams,
                        NonFiniteGradientError, ParamStore, Segments, Tensor, adam_step, bce,
                        dump_tensors, graph_norm, kl_std_normal, load_tensors, mlp_apply, mse,
                        no_grad, reparameterize)
from milpgen.nn import autograd as ag
from milpgen.nn.layers import mlp_apply_split

from gradcheck import TOL, gradcheck, projector


def leaf(a):
    return Tensor(np.array(a, dtype=float), requires_grad=True)


class TestOps:
    """Every primitive against finite differences."""

    @pytest.mark.parametrize("op", ["add", "sub", "mul", "div"])
    def test_binary_broadcast(self, op, rng):
        a = leaf(rng.standard_normal((4, 3)))
        b = leaf(rng.uniform(0.5, 2.0, (1, 3)))
        proj = projector((4, 3), rng)
        assert gradcheck(lambda: proj(getattr(ag, op)(a, b)), [a, b]) < TOL

    @pytest.mark.parametrize("op", ["square", "relu", "sigmoid", "exp", "log", "sqrt"])
    def test_unary(self, op, rng):
        a = leaf(rng.uniform(0.2, 2.0, (3, 4)) * rng.choice([-1, 1], (3, 4))
                 if op in ("square", "relu", "sigmoid", "exp") else rng.uniform(0.2, 2.0, (3, 4)))
        proj = projector((3, 4), rng)
        assert gradcheck(lambda: proj(getattr(ag, op)(a)), [a]) < TOL

    def test_clip(self, rng):
        a = leaf(np.array([[-2.0, -0.3, 0.4, 3.0]]))
        proj = projector((1, 4), rng)
        assert gradcheck(lambda: proj(ag.clip(a, -1.0, 1.0)), [a]) < TOL

    @pytest.mark.parametrize("axis", [None, 0, 1])
    def test_reductions(self, axis, rng):
        a = leaf(rng.standard_normal((3, 5)))
        shape = np.sum(a.data, axis=axis, keepdims=True).shape
        proj = projector(shape, rng)
        assert gradcheck(lambda: proj(ag.sum(a, axis=axis, keepdims=True)), [a]) < TOL
        assert gradcheck(lambda: proj(ag.mean(a, axis=axis, keepdims=True)), [a]) < TOL

    def test_matmul_concat_reshape(self, rng):
        a, b = leaf(rng.standard_normal((3, 4))), leaf(rng.standard_normal((4, 2)))
        c = leaf(rng.standard_normal((3, 1)))
        proj = projector((2, 9), rng)
        build = lambda: proj(ag.reshape(ag.concat([ag.matmul(a, b), c, c, c, c]), (2, 9)))  # noqa: E731
        assert gradcheck(build, [a, b, c]) < TOL

    def test_gather_repeated_indices(self, rng):
        a = leaf(rng.standard_normal((4, 3)))
        idx = np.array([0, 2, 2, 3, 0, 0])
        proj = projector((6, 3), rng)
        assert gradcheck(lambda: proj(ag.gather(a, idx)), [a]) < TOL
        a.grad = None
        ag.backward(ag.sum(ag.gather(a, idx)))
        np.testing.assert_array_equal(a.grad[:, 0], [3, 0, 2, 1])

    def test_segment_ops_match_loops(self, rng):
        x = rng.standard_normal((7, 2))
        ids = np.array([0, 2, 2, 0, 2, 3, 0])
        seg = Segments(ids, 4)
        s, m = ag.segment_sum(x, seg).data, ag.segment_mean(x, seg).data
        for k in range(4):
            rows = x[ids == k]
            np.testing.assert_allclose(s[k], rows.sum(0) if len(rows) else 0.0, atol=1e-14)
            np.testing.assert_allclose(m[k], rows.mean(0) if len(rows) else 0.0, atol=1e-14)
        a = leaf(x)
        proj = projector((4, 2), rng)
        assert gradcheck(lambda: proj(ag.segment_sum(a, seg)), [a]) < TOL
        assert gradcheck(lambda: proj(ag.segment_mean(a, seg)), [a]) < TOL

    def test_replace_and_slice_rows(self, rng):
        a, r = leaf(rng.standard_normal((5, 2))), leaf(rng.standard_normal((2, 2)))
        proj = projector((3, 2), rng)
        build = lambda: proj(ag.slice_rows(ag.replace_rows(a, [1, 3], r), 1, 4))  # noqa: E731
        assert gradcheck(build, [a, r]) < TOL

    def test_sigmoid_is_stable(self):
        out = ag.sigmoid(np.array([-1000.0, 0.0, 1000.0])).data
        np.testing.assert_array_equal(out, [0.0, 0.5, 1.0])


class TestBackward:
    def test_linear_gradient_is_input(self, rng):
        x = rng.standard_normal(5)
        w = leaf(rng.standard_normal(5))
        ag.backward(ag.sum(ag.mul(w, x)))
        np.testing.assert_array_equal(w.grad, x)

    def test_non_scalar_rejected(self):
        with pytest.raises(ValueError):
            ag.backward(leaf(np.ones(3)) * 2.0)

    def test_disconnected_parameter_gets_no_gradient(self):
        a, b = leaf([1.0, 2.0]), leaf([3.0])
        ag.backward(ag.sum(ag.square(a)))
        assert b.grad is None or not np.any(b.grad)

    def test_shared_subexpression_accumulates(self):
        a = leaf([3.0])
        y = ag.mul(a, a)
        ag.backward(ag.sum(ag.add(y, y)))
        assert a.grad.tolist() == [12.0]

    def test_no_grad_records_nothing(self):
        a = leaf([1.0])
        with no_grad():
            y = ag.mul(a, 2.0)
        assert not y.requires_grad and y._parents == ()


class TestMlp:
    def test_identity_net(self, rng):
        store = ParamStore()
        p = MlpParams(store, "m", (2, 2, 2), rng)
        for (W, b) in p.layers:
            W.data[:] = np.eye(2)
            b.data[:] = 0.0
        assert mlp_apply(p, np.array([[1.0, -1.0]])).data.tolist() == [[1.0, 0.0]]

    def test_zero_weights_emit_bias(self, rng):
        store = ParamStore()
        p = MlpParams(store, "m", (3, 4, 2), rng)
        for W, b in p.layers:
            W.data[:] = 0.0
        p.layers[-1][1].data[:] = [0.7, -1.5]
        out = mlp_apply(p, rng.standard_normal((5, 3))).data
        np.testing.assert_array_equal(out, np.tile([0.7, -1.5], (5, 1)))

    def test_shape_mismatch(self, rng):
        p = MlpParams(ParamStore(), "m", (3, 4, 2), rng)
        with pytest.raises(ValueError):
            mlp_apply(p, np.ones((2, 4)))

    def test_six_chained_mlps_gradcheck(self, rng):
        store = ParamStore()
        nets = [MlpParams(store, f"m{i}", (3, 5, 3), rng) for i in range(6)]
        x = rng.standard_normal((4, 3))
        proj = projector((4, 3), rng)

        def build():
            h = x
            for net in nets:
                h = mlp_apply(net, h)
            return proj(h)
        assert gradcheck(build, list(store.values())) < TOL

    def test_split_apply_matches_concat(self, rng):
        p = MlpParams(ParamStore(), "m", (5, 4, 3), rng)
        A, B = rng.standard_normal((3, 2)), rng.standard_normal((6, 3))
        idx = np.array([0, 2, 2, 1, 0, 1])
        full = mlp_apply(p, np.concatenate([A[idx], B], axis=1)).data
        split = mlp_apply_split(p, [(A, idx), (B, None)]).data
        np.testing.assert_allclose(split, full, atol=1e-13)

    def test_duplicate_parameter_name(self, rng):
        store = ParamStore()
        MlpParams(store, "m", (2, 2), rng)
        with pytest.raises(KeyError):
            MlpParams(store, "m", (2, 2), rng)


class TestGraphNorm:
    def test_two_nodes(self):
        p = GraphNormParams(ParamStore(), "g", 1)
        out = graph_norm(np.array([[1.0], [3.0]]), Segments([0, 0], 1), p).data[:, 0]
        np.testing.assert_allclose(out, [-1.0, 1.0], atol=1e-5)

    def test_identical_features_are_zero(self):
        p = GraphNormParams(ParamStore(), "g", 2)
        out = graph_norm(np.full((3, 2), 4.2), Segments([0, 0, 0], 1), p).data
        assert np.all(np.isfinite(out)) and np.allclose(out, 0.0)

    def test_single_node_guarded(self):
        p = GraphNormParams(ParamStore(), "g", 1)
        out = graph_norm(np.array([[5.0]]), Segments([0], 1), p).data
        assert out.tolist() == [[0.0]]

    def test_batched_matches_per_graph_loop(self, rng):
        store = ParamStore()
        p = GraphNormParams(store, "g", 3)
        p.alpha.data[:] = rng.uniform(0, 1, 3)
        p.gamma.data[:] = rng.uniform(0.5, 2, 3)
        p.beta.data[:] = rng.standard_normal(3)
        x = rng.standard_normal((9, 3))
        ids = np.array([1, 0, 1, 2, 2, 0, 1, 2, 1])
        out = graph_norm(x, Segments(ids, 3), p).data
        for g in range(3):
            rows = x[ids == g]
            c = rows - p.alpha.data * rows.mean(0)
            ref = p.gamma.data * c / np.sqrt((c ** 2).mean(0) + 1e-5) + p.beta.data
            np.testing.assert_allclose(out[ids == g], ref, atol=1e-12)

    def test_gradcheck(self, rng):
        store = ParamStore()
        p = GraphNormParams(store, "g", 2)
        p.alpha.data[:] = [0.3, 0.8]
        x = leaf(rng.standard_normal((6, 2)))
        seg = Segments([0, 0, 1, 1, 1, 0], 2)
        proj = projector((6, 2), rng)
        assert gradcheck(lambda: proj(graph_norm(x, seg, p)), [x] + list(store.values())) < TOL


class TestGaussian:
    def test_kl_zero(self):
        assert kl_std_normal(np.zeros((2, 3)), np.zeros((2, 3))).data == 0.0

    def test_kl_unit_mean(self):
        assert kl_std_normal(np.ones((1, 1)), np.zeros((1, 1))).data == 0.5

    def test_kl_monte_carlo(self, rng):
        mu, lv = rng.standard_normal(3), rng.uniform(-1, 1, 3)
        kl = float(kl_std_normal(mu.reshape(1, 3), lv.reshape(1, 3)).data)
        sd = np.exp(lv / 2)
        z = mu + sd * rng.standard_normal((10 ** 6, 3))
        # log q(z) - log p(z), summed over the independent dimensions
        terms = (-0.5 * ((z - mu) / sd) ** 2 - np.log(sd) + 0.5 * z ** 2).sum(axis=1)
        est, se = terms.mean(), terms.std() / np.sqrt(terms.size)
        assert abs(est - kl) < 3 * se

    def test_kl_gradcheck(self, rng):
        mu, lv = leaf(rng.standard_normal((3, 2))), leaf(rng.uniform(-1, 1, (3, 2)))
        assert gradcheck(lambda: kl_std_normal(mu, lv), [mu, lv]) < TOL

    def test_reparameterize_collapses_to_mean(self, rng):
        mu = rng.standard_normal((4, 2))
        z = reparameterize(mu, np.full((4, 2), -60.0), rng).data
        np.testing.assert_allclose(z, mu, atol=1e-12)

    def test_reparameterize_reproducible_and_distributed(self):
        mu, lv = np.full((20000, 1), 1.5), np.full((20000, 1), np.log(4.0))
        z1 = reparameterize(mu, lv, np.random.default_rng(3)).data
        z2 = reparameterize(mu, lv, np.random.default_rng(3)).data
        np.testing.assert_array_equal(z1, z2)
        assert abs(z1.mean() - 1.5) < 4 * 2 / np.sqrt(z1.size)
        assert abs(z1.std() - 2.0) < 0.05


class TestLosses:
    def test_bce_perfect_classifier(self):
        loss = float(bce(np.array([1.0, 0.0, 1.0]), [1, 0, 1]).data)
        assert 0 <= loss < 1e-6

    def test_bce_gradcheck(self, rng):
        p = leaf(rng.uniform(0.1, 0.9, (5, 1)))
        t = rng.integers(0, 2, (5, 1))
        assert gradcheck(lambda: bce(p, t, np.full((5, 1), 0.2)), [p]) < TOL

    def test_mse(self):
        assert float(mse(np.array([1.0, 3.0]), [1.0, 1.0]).data) == 2.0
        assert float(mse(np.array([1.0, 3.0]), [1.0, 1.0], [0.5, 0.5]).data) == 2.0


def reference_adam(p, grad_fn, lr, steps, b1=0.9, b2=0.999, eps=1e-8):
    """Scalar Adam recursion written out independently."""
    m = v = 0.0
    out = []
    for t in range(1, steps + 1):
        g = grad_fn(p)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p = p - lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
        out.append(p)
    return out


class TestAdam:
    def test_zero_gradient(self):
        p = {"w": np.array([1.0, -2.0])}
        st = adam_step(AdamState(), p, {"w": np.zeros(2)}, 0.01)
        assert p["w"].tolist() == [1.0, -2.0] and st.step == 1

    def test_first_step_magnitude(self):
        p = {"w": np.array([0.0, 0.0])}
        adam_step(AdamState(), p, {"w": np.array([3.0, -0.2])}, 0.01)
        np.testing.assert_allclose(np.abs(p["w"]), 0.01, rtol=1e-6)

    def test_quadratic_bowl_matches_reference(self):
        store = ParamStore()
        w = store.new("w", [4.0])
        opt = Adam(store)
        losses = []
        for _ in range(100):
            store.zero_grad()
            loss = ag.sum(ag.mul(ag.square(w), 0.5))
            losses.append(float(loss.data))
            ag.backward(loss)
            opt.step(0.1)
        ref = reference_adam(4.0, lambda x: x, 0.1, 100)
        assert w.data[0] == pytest.approx(ref[-1], abs=1e-12)
        assert all(b < a for a, b in zip(losses[5:40], losses[6:41]))
        assert losses[-1] < losses[0] / 10

    def test_non_finite_gradient_names_parameter(self):
        with pytest.raises(NonFiniteGradientError) as err:
            adam_step(AdamState(), {"enc.W0": np.zeros(1)}, {"enc.W0": np.array([np.nan])}, 0.1)
        assert err.value.param_name == "enc.W0"


class TestSerialize:
    def test_roundtrip(self, rng):
        t = {"a.W0": rng.standard_normal((3, 4)), "b": rng.standard_normal(5), "s": np.array(2.5)}
        blob = dump_tensors(t, {"step": 3})
        back, meta = load_tensors(blob)
        assert meta == {"step": 3} and list(back) == list(t)
        for k in t:
            np.testing.assert_array_equal(back[k], t[k])
        assert dump_tensors(back, meta) == blob

    def test_bad_magic(self):
        with pytest.raises(CheckpointFormatError):
            load_tensors(b"XXXX" + bytes(12))

    def test_truncated(self, rng):
        blob = dump_tensors({"a": rng.standard_normal(10)})
        with pytest.raises(CheckpointFormatError):
            load_tensors(blob[:-5])

    def test_version_checked(self):
        blob = b"MGNN" + struct.pack("<III", 99, 0, 2) + b"{}"
        with pytest.raises(CheckpointFormatError):
            load_tensors(blob)

    def test_store_load_checks_names_and_shapes(self, rng):
        store = ParamStore()
        MlpParams(store, "m", (2, 3), rng)
        with pytest.raises(KeyError):
            store.load_arrays({"m.W0": np.zeros((2, 3))})
        with pytest.raises(ValueError):
            store.load_arrays({"m.W0": np.zeros((3, 3)), "m.b0": np.zeros(3)})
