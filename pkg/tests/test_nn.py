import math

import numpy as np
import pytest

from oracles import brute_maxpool, numeric_gradient, relative_error
from tactile_explore.discriminator import Discriminator, discriminator_specs
from tactile_explore.errors import NumericError, ShapeError, StaleCacheError
from tactile_explore.explorer import ActorCritic
from tactile_explore.nn import (
    Adam,
    Network,
    conv2d,
    dense,
    dropout,
    entropy,
    flatten,
    load_checkpoint,
    log_softmax,
    maxpool,
    relu,
    save_checkpoint,
    softmax,
    softmax_cross_entropy,
)

RTOL, FLOOR, H = 1e-4, 1e-7, 1e-5


def gradient_errors(nets, forward, seed=0):
    """Worst relative error between backprop and central differences for every parameter.

    ``forward()`` returns (outputs, backward(douts)) for a fixed dropout mask;
    the scalar checked is sum(w * output) with random weights w.
    """
    rng = np.random.default_rng(seed)
    outs, _ = forward()
    weights = [rng.standard_normal(o.shape) for o in outs]

    def loss():
        return sum(float((w * o).sum()) for w, o in zip(weights, forward()[0]))

    for n in nets:
        n.zero_grad()
    _, back = forward()
    back(weights)
    worst = {}
    for n in nets:
        for name, p, g in n.parameters():
            analytic = g.copy()
            numeric = numeric_gradient(lambda: (n.mark_updated(), loss())[1], p, H)
            worst[f"{id(n)}:{name}"] = float(relative_error(analytic, numeric, FLOOR).max())
    return worst


def net_forward(net, x, train=False, mask_seed=7):
    def f():
        out, cache = net.forward(x, train=train, rng=np.random.default_rng(mask_seed))
        return [out], lambda ws: net.backward(cache, ws[0])
    return f


LAYER_CASES = {
    "conv2d": ([conv2d(3, 3, 2)], (7, 7, 2)),
    "conv2d_k1": ([conv2d(2, 1, 1)], (4, 5, 1)),
    "maxpool": ([conv2d(2, 3, 1), maxpool(2)], (6, 6, 1)),
    "relu": ([dense(6), relu()], (5,)),
    "dropout": ([dense(6), dropout(0.5)], (5,)),
    "flatten": ([conv2d(2, 3, 1), flatten(), dense(3)], (4, 4, 1)),
    "dense": ([dense(4)], (6,)),
}


class TestGradients:
    @pytest.mark.parametrize("case", sorted(LAYER_CASES))
    def test_layer_kind(self, case):
        specs, shape = LAYER_CASES[case]
        net = Network(specs, shape, seed=1, dtype=np.float64)
        x = np.random.default_rng(2).standard_normal((3,) + shape)
        worst = gradient_errors([net], net_forward(net, x, train=True))
        assert max(worst.values()) < RTOL

    def test_input_gradient_of_maxpool(self):
        net = Network([maxpool(2)], (4, 4, 1), dtype=np.float64)
        x = np.random.default_rng(0).permutation(16).reshape(1, 4, 4, 1).astype(float)
        out, cache = net.forward(x)
        dx = net.backward(cache, np.ones_like(out), need_input_grad=True)
        expect = np.zeros(16)
        for i in range(2):
            for j in range(2):
                block = x[0, 2 * i:2 * i + 2, 2 * j:2 * j + 2, 0]
                a, b = np.unravel_index(np.argmax(block), (2, 2))
                expect[(2 * i + a) * 4 + 2 * j + b] = 1.0
        np.testing.assert_array_equal(dx.ravel(), expect)

    def test_full_discriminator_12x12(self):
        net = Network(discriminator_specs(10), (12, 12), seed=3, dtype=np.float64)
        x = np.random.default_rng(4).choice([0.0, 0.5, 1.0], size=(2, 12, 12)) - 0.5
        worst = gradient_errors([net], net_forward(net, x, train=True))
        assert max(worst.values()) < RTOL

    def test_full_actor_critic_12x12(self):
        ac = ActorCritic((12, 12), num_actions=4, seed=5, dtype=np.float64)
        x = np.random.default_rng(6).choice([0.0, 0.5, 0.75, 1.0], size=(2, 12, 12))

        def f():
            logits, values, caches = ac.forward(x)
            return [logits, values], lambda ws: ac.backward(caches, ws[0], ws[1])

        worst = gradient_errors(ac.networks, f)
        assert max(worst.values()) < RTOL


class TestForward:
    def test_identity_convolution(self):
        net = Network([conv2d(1, 1, 1)], (5, 5), dtype=np.float64)
        net.layers[0].params["W"][...] = 1.0
        x = np.random.default_rng(0).standard_normal((2, 5, 5))
        np.testing.assert_array_equal(net.predict(x)[..., 0], x)

    def test_dropout_eval_is_identity(self):
        net = Network([dropout(0.7)], (9,))
        x = np.random.default_rng(0).standard_normal((4, 9))
        assert np.array_equal(net.predict(x), x)

    def test_dropout_train_scaling(self):
        net = Network([dropout(0.5)], (10_000,), dtype=np.float64)
        out, _ = net.forward(np.ones((1, 10_000)), train=True, rng=np.random.default_rng(0))
        assert set(np.unique(out)) <= {0.0, 2.0}
        assert out.mean() == pytest.approx(1.0, abs=0.05)

    def test_maxpool_brute_force(self):
        img = np.random.default_rng(1).permutation(16).reshape(4, 4).astype(float)
        net = Network([maxpool(2)], (4, 4), dtype=np.float64)
        np.testing.assert_array_equal(net.predict(img[None])[0, ..., 0], brute_maxpool(img, 2))

    def test_shape_mismatch(self):
        net = Network([dense(3)], (4,))
        with pytest.raises(ShapeError):
            net.forward(np.zeros((2, 5)))

    def test_eval_forward_deterministic(self):
        net = Network(discriminator_specs(4), (12, 12), seed=0)
        x = np.random.default_rng(0).random((3, 12, 12))
        state = net.rng.bit_generator.state
        a, b = net.predict(x), net.predict(x)
        assert a.tobytes() == b.tobytes()
        assert net.rng.bit_generator.state == state

    def test_stale_cache(self):
        net = Network([dense(2)], (3,))
        _, cache = net.forward(np.ones((1, 3)))
        net.mark_updated()
        with pytest.raises(StaleCacheError):
            net.backward(cache, np.ones((1, 2)))

    def test_zero_output_gradient(self):
        net = Network(discriminator_specs(3), (12, 12), seed=0, dtype=np.float64)
        out, cache = net.forward(np.random.default_rng(0).random((2, 12, 12)), train=True)
        net.backward(cache, np.zeros_like(out))
        assert all(not g.any() for _, _, g in net.parameters())

    def test_dense_weight_gradient_is_outer_product(self):
        net = Network([dense(3)], (4,), dtype=np.float64)
        x = np.random.default_rng(0).standard_normal((1, 4))
        dy = np.random.default_rng(1).standard_normal((1, 3))
        _, cache = net.forward(x)
        net.backward(cache, dy)
        np.testing.assert_allclose(net.layers[0].grads["W"], np.outer(x[0], dy[0]), rtol=1e-15)


class TestSoftmaxCrossEntropy:
    def test_uniform(self):
        loss, p, _ = softmax_cross_entropy(np.zeros(10), 3)
        np.testing.assert_allclose(p, 0.1)
        assert loss == pytest.approx(math.log(10), abs=1e-12)

    def test_shift_invariance(self):
        z = np.random.default_rng(0).standard_normal(10)
        np.testing.assert_allclose(softmax(z), softmax(z + 123.4), atol=1e-12)

    def test_gradient_is_p_minus_onehot(self):
        z = np.random.default_rng(1).standard_normal(6)
        _, p, g = softmax_cross_entropy(z, 2)
        onehot = np.eye(6)[2]
        np.testing.assert_allclose(g, p - onehot, atol=1e-15)

    def test_gradient_matches_finite_differences(self):
        z = np.random.default_rng(2).standard_normal(7)
        _, _, g = softmax_cross_entropy(z, 4)
        num = numeric_gradient(lambda: softmax_cross_entropy(z, 4)[0], z, H)
        assert relative_error(g, num, FLOOR).max() < RTOL

    def test_non_finite(self):
        with pytest.raises(NumericError):
            softmax_cross_entropy(np.array([0.0, np.inf]), 0)

    def test_simplex(self):
        z = np.random.default_rng(3).standard_normal((500, 10)) * 30
        p = softmax(z)
        assert np.all(p >= 0)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)
        np.testing.assert_allclose(np.exp(log_softmax(z)), p, atol=1e-12)

    def test_entropy_of_uniform(self):
        assert entropy(np.full(10, 0.1)) == pytest.approx(math.log(10))
        assert entropy(np.eye(3)[0]) == 0.0


class TestAdam:
    def _scalar_net(self, w0):
        net = Network([dense(1)], (1,), dtype=np.float64)
        net.layers[0].params["W"][...] = w0
        return net

    def test_zero_gradient_leaves_parameters(self):
        net = Network(discriminator_specs(3), (12, 12), seed=0)
        before = net.get_flat().copy()
        opt = Adam(net)
        opt.step()
        assert np.array_equal(before, net.get_flat())
        assert opt.t == 1

    def test_one_step_on_square(self):
        net = self._scalar_net(1.0)
        opt = Adam(net, lr=0.1)
        w = net.layers[0].params["W"]
        w_grad = net.layers[0].grads["W"]
        w_grad[...] = 2 * w  # d/dw w^2
        opt.step()
        assert abs(w[0, 0]) < 1.0
        assert not w_grad.any()

    def test_converges_on_quadratic(self):
        net = Network([dense(2)], (1,), dtype=np.float64)
        W, b = net.layers[0].params["W"], net.layers[0].params["b"]
        target = np.array([0.7, -1.3])
        opt = Adam(net, lr=0.05)
        for _ in range(200):
            net.layers[0].grads["b"][...] = 2 * (b - target)
            opt.step()
        np.testing.assert_allclose(b, target, atol=1e-3)
        assert W.shape == (1, 2)

    def test_gradient_clipping(self):
        net = self._scalar_net(0.0)
        opt = Adam(net, lr=0.1, max_grad_norm=0.5)
        net.layers[0].grads["W"][...] = 10.0
        assert opt.step() == pytest.approx(10.0)

    def test_parameter_count_invariant_under_training(self):
        d = Discriminator((12, 12), 3)
        n = d.net.num_parameters()
        x = np.random.default_rng(0).choice([0.0, 0.5, 1.0], size=(20, 12, 12))
        d.train_epochs(x, np.arange(20) % 3, epochs=2)
        assert d.net.num_parameters() == n


class TestCheckpoint:
    def test_round_trip_bitwise(self, tmp_path):
        net = Network(discriminator_specs(5), (12, 12), seed=9)
        path = tmp_path / "net.npz"
        save_checkpoint(path, {"d": net}, {"note": "x"})
        nets, meta = load_checkpoint(path)
        assert meta["note"] == "x"
        back = nets["d"]
        assert back.get_flat().tobytes() == net.get_flat().tobytes()
        assert back.describe() == net.describe()
