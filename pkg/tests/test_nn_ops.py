import numpy as np
import pytest

from layercodec.errors import TrainingError
from layercodec.nn import ops
from layercodec.nn.adam import Adam
from layercodec.nn.layers import (Conv2d, ConvTranspose2d, Norm, Parameter,
                                  ReLU, ResBlock, Tanh)

from gradcheck import assert_grad_close, away_from_kinks, numeric_grad

N_INSTANCES = 20


def rand_shape(rng, cin_max=4):
    return (int(rng.integers(1, 3)), int(rng.integers(1, cin_max + 1)),
            int(rng.integers(3, 7)), int(rng.integers(3, 7)))


class TestConv2dForward:
    def test_identity_kernel_passthrough(self):
        x = np.random.default_rng(0).normal(size=(1, 1, 5, 5))
        w = np.ones((1, 1, 1, 1))
        b = np.zeros(1)
        y, _ = ops.conv2d_forward(x, w, b, stride=1)
        assert np.allclose(y, x)

    def test_all_ones_3x3_on_constant_input(self):
        c = 2.5
        x = np.full((1, 1, 6, 6), c)
        w = np.ones((1, 1, 3, 3))
        y, _ = ops.conv2d_forward(x, w, np.zeros(1), stride=1)
        assert np.allclose(y[0, 0, 1:-1, 1:-1], 9 * c)  # interior: 9 taps
        assert np.allclose(y[0, 0, 0, 0], 4 * c)        # corner: 4 taps

    @pytest.mark.parametrize("stride,size", [(1, 7), (2, 7), (2, 8)])
    def test_output_shape_is_ceil(self, stride, size):
        x = np.zeros((1, 2, size, size))
        w = np.zeros((3, 2, 3, 3))
        y, _ = ops.conv2d_forward(x, w, np.zeros(3), stride)
        want = -(-size // stride)
        assert y.shape == (1, 3, want, want)

    def test_channel_mismatch_raises(self):
        with pytest.raises(ValueError):
            ops.conv2d_forward(np.zeros((1, 2, 4, 4)), np.zeros((1, 3, 3, 3)),
                               np.zeros(1), 1)


def _check_layer_gradients(make_layer, make_input, n=N_INSTANCES, seed=0,
                           h=None):
    """Layer backward vs central finite differences, inputs and parameters."""
    rng = np.random.default_rng(seed)
    kwargs = {} if h is None else {"h": h}
    for _ in range(n):
        layer = make_layer(rng)
        x = make_input(rng)
        dy_shape = layer.forward(x.copy()).shape
        dy = rng.normal(size=dy_shape)

        for p in layer.params():
            p.grad[...] = 0
        layer.forward(x)

        def loss():
            return float((layer.forward(x) * dy).sum())

        dx = layer.backward(dy)
        assert_grad_close(dx, numeric_grad(loss, x, **kwargs), what="input")
        for p in layer.params():
            value64 = p.value.astype(np.float64)
            p.value = value64  # perturb in float64 for clean differences

            def ploss():
                return float((layer.forward(x) * dy).sum())

            assert_grad_close(p.grad, numeric_grad(ploss, value64, **kwargs),
                              what=p.name)


class TestGradients:
    def test_conv2d(self):
        def make(rng):
            cin, cout = int(rng.integers(1, 4)), int(rng.integers(1, 4))
            k = int(rng.choice([1, 3]))
            stride = int(rng.choice([1, 2]))
            layer = Conv2d(cin, cout, k, stride, rng, "t")
            layer.cin = cin
            return layer

        state = {}

        def make_layer(rng):
            layer = make(rng)
            state["cin"] = layer.cin
            return layer

        def make_input(rng):
            return rng.normal(size=(int(rng.integers(1, 3)), state["cin"],
                                    int(rng.integers(3, 7)),
                                    int(rng.integers(3, 7))))

        _check_layer_gradients(make_layer, make_input)

    def test_conv_transpose2d(self):
        state = {}

        def make_layer(rng):
            cin, cout = int(rng.integers(1, 4)), int(rng.integers(1, 4))
            state["cin"] = cin
            return ConvTranspose2d(cin, cout, 3, 2, rng, "t")

        def make_input(rng):
            return rng.normal(size=(int(rng.integers(1, 3)), state["cin"],
                                    int(rng.integers(2, 6)),
                                    int(rng.integers(2, 6))))

        _check_layer_gradients(make_layer, make_input)

    @pytest.mark.parametrize("kind", ["channel", "batch", "instance"])
    def test_norms(self, kind):
        state = {}

        def make_layer(rng):
            c = int(rng.integers(2, 5))
            state["c"] = c
            layer = Norm(kind, c, "t")
            layer.gain.value = rng.uniform(0.5, 1.5, c).astype(np.float64)
            layer.offset.value = rng.uniform(-0.3, 0.3, c).astype(np.float64)
            return layer

        def make_input(rng):
            return rng.normal(size=(2, state["c"], int(rng.integers(2, 6)),
                                    int(rng.integers(2, 6))))

        # normalization curvature blows up where the reduced variance is
        # small; a finer step keeps the numeric reference meaningful
        _check_layer_gradients(make_layer, make_input, h=1e-4)

    def test_relu(self):
        def make_input(rng):
            return away_from_kinks(rng, rand_shape(rng))

        _check_layer_gradients(lambda rng: ReLU(), make_input)

    def test_tanh(self):
        def make_input(rng):
            return rng.normal(size=rand_shape(rng))

        _check_layer_gradients(lambda rng: Tanh(), make_input)

    def test_resblock(self):
        state = {}

        def make_layer(rng):
            c = int(rng.integers(2, 4))
            state["c"] = c
            return ResBlock(c, "channel", rng, "t")

        def make_input(rng):
            # keep relu inputs off their kink
            return away_from_kinks(rng, (1, state["c"], 5, 5)) * 2.0

        _check_layer_gradients(make_layer, make_input, n=8, h=1e-4)

    def test_upsample_nearest(self):
        rng = np.random.default_rng(1)
        for _ in range(N_INSTANCES):
            factor = int(rng.choice([1, 2, 4]))
            x = rng.normal(size=(1, 2, 3, 4))
            y, cache = ops.upsample_nearest_forward(x, factor)
            dy = rng.normal(size=y.shape)
            dx = ops.upsample_nearest_backward(dy, cache)

            def loss():
                out, _ = ops.upsample_nearest_forward(x, factor)
                return float((out * dy).sum())

            assert_grad_close(dx, numeric_grad(loss, x))


class TestNormForward:
    def test_channel_norm_zero_variance_position(self):
        x = np.ones((1, 3, 2, 2))
        y, _ = ops.norm_forward(x, np.ones(3), np.zeros(3), "channel")
        assert np.allclose(y, 0.0)

    def test_channel_norm_hand_case(self):
        # channels (1, 3): mean 2, biased variance 1 -> standardized (-1, 1)
        x = np.zeros((1, 2, 1, 1))
        x[0, 0] = 1.0
        x[0, 1] = 3.0
        y, _ = ops.norm_forward(x, np.ones(2), np.zeros(2), "channel", eps=1e-5)
        assert y[0, 0, 0, 0] == pytest.approx(-1.0, abs=1e-4)
        assert y[0, 1, 0, 0] == pytest.approx(1.0, abs=1e-4)

    def test_channel_norm_unit_stats(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(2, 6, 4, 4))
        y, _ = ops.norm_forward(x, np.ones(6), np.zeros(6), "channel")
        assert np.abs(y.mean(axis=1)).max() < 1e-4
        assert np.abs(y.var(axis=1) - 1.0).max() < 1e-3

    def test_instance_norm_hand_case(self):
        x = np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 1, 2, 2)
        y, _ = ops.norm_forward(x, np.ones(1), np.zeros(1), "instance", eps=0.0)
        std = np.sqrt(1.25)  # biased variance of 1..4
        assert np.allclose(y.ravel(), (x.ravel() - 2.5) / std)

    def test_batch_norm_constant_is_zero(self):
        x = np.full((3, 2, 4, 4), 7.0)
        y, _ = ops.norm_forward(x, np.ones(2), np.zeros(2), "batch")
        assert np.allclose(y, 0.0)

    def test_batch_norm_batch1_equals_instance_stats(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(1, 3, 5, 5))
        yb, _ = ops.norm_forward(x, np.ones(3), np.zeros(3), "batch")
        yi, _ = ops.norm_forward(x, np.ones(3), np.zeros(3), "instance")
        assert np.allclose(yb, yi)


class TestActivationsAndUpsample:
    def test_relu_nonnegative_tanh_open_interval(self):
        rng = np.random.default_rng(4)
        x = rng.normal(scale=4, size=(2, 3, 5, 5))
        r, _ = ops.relu_forward(x)
        t, _ = ops.tanh_forward(x)
        assert (r >= 0).all()
        assert (np.abs(t) < 1).all()

    def test_upsample_factor1_identity(self):
        x = np.arange(8.0).reshape(1, 2, 2, 2)
        y, _ = ops.upsample_nearest_forward(x, 1)
        assert y is x

    def test_upsample_block_constant_and_stride_recovery(self):
        x = np.arange(4.0).reshape(1, 1, 2, 2)
        y, _ = ops.upsample_nearest_forward(x, 8)
        assert y.shape == (1, 1, 16, 16)
        for by in range(2):
            for bx in range(2):
                block = y[0, 0, by * 8:(by + 1) * 8, bx * 8:(bx + 1) * 8]
                assert (block == x[0, 0, by, bx]).all()
        assert np.array_equal(y[:, :, ::8, ::8], x)

    def test_tconv_shape_doubles(self):
        rng = np.random.default_rng(5)
        layer = ConvTranspose2d(1, 2, 3, 2, rng, "t")
        y = layer.forward(np.zeros((1, 1, 4, 4)))
        assert y.shape == (1, 2, 8, 8)

    def test_tconv_delta_kernel_spreading(self):
        # kernel = delta at center: output places each input sample at even
        # coordinates, zeros elsewhere (hand-computed for 2x2)
        layer = ConvTranspose2d.__new__(ConvTranspose2d)
        layer.stride = 2
        w = np.zeros((1, 1, 3, 3))
        w[0, 0, 1, 1] = 1.0
        layer.weight = Parameter("w", w)
        layer.bias = Parameter("b", np.zeros(1))
        x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2)
        y = layer.forward(x)
        want = np.zeros((4, 4))
        want[0, 0], want[0, 2], want[2, 0], want[2, 2] = 1, 2, 3, 4
        assert np.array_equal(y[0, 0], want)


class TestAdam:
    def _param(self, value):
        return Parameter("p", np.array(value, dtype=np.float64))

    def test_zero_gradient_keeps_parameters(self):
        p = self._param([1.0, -2.0])
        opt = Adam([p], lr=0.1)
        opt.step()
        assert np.array_equal(p.value, [1.0, -2.0])

    def test_first_step_magnitude_is_lr(self):
        p = self._param([0.0])
        opt = Adam([p], lr=0.1)
        p.grad[...] = 1.0
        opt.step()
        assert p.value[0] == pytest.approx(-0.1, rel=1e-6)

    def test_identical_state_identical_trajectory(self):
        rng = np.random.default_rng(6)
        grads = [rng.normal(size=3) for _ in range(20)]
        trajectories = []
        for _ in range(2):
            p = self._param([0.5, -0.5, 0.1])
            opt = Adam([p], lr=0.05)
            values = []
            for g in grads:
                p.grad[...] = g
                opt.step()
                values.append(p.value.copy())
            trajectories.append(values)
        for a, b in zip(*trajectories):
            assert np.array_equal(a, b)

    def test_non_finite_gradient_raises(self):
        p = self._param([0.0])
        opt = Adam([p], lr=0.1)
        p.grad[...] = np.nan
        with pytest.raises(TrainingError):
            opt.step()
