import numpy as np
import pytest
from hypothesis import given, strategies as st

from latentlab import nn
from latentlab.errors import (
    NumericalError,
    ParseError,
    ShapeError,
    StateError,
    ValidationError,
)


class TestForward:
    def test_identity_layer(self):
        layer = nn.DenseLayer(np.eye(3), np.zeros(3), "linear")
        out = nn.forward(layer, [1.0, 2.0, 3.0])
        assert np.array_equal(out, [1.0, 2.0, 3.0])

    def test_zero_input_relu(self):
        rng = np.random.default_rng(1)
        layer = nn.DenseLayer.create(5, 4, "relu", rng)
        out = nn.forward(layer, np.zeros(5))
        assert np.array_equal(out, np.zeros(4))

    def test_matches_hand_multiplied_product(self):
        # oracle: explicit triple loop, independent of the forward code path
        rng = np.random.default_rng(7)
        layer = nn.DenseLayer.create(3, 4, "linear", rng)
        x = rng.normal(size=3)
        expected = np.zeros(4)
        for i in range(4):
            acc = layer.bias[i]
            for j in range(3):
                acc += layer.weights[i, j] * x[j]
            expected[i] = acc
        assert np.allclose(nn.forward(layer, x), expected, rtol=0, atol=1e-15)

    def test_shape_mismatch_names_both_shapes(self):
        layer = nn.DenseLayer(np.zeros((4, 3)), np.zeros(4))
        with pytest.raises(ShapeError, match="2.*3|3.*2"):
            nn.forward(layer, np.zeros(2))

    def test_deterministic_bit_identical(self):
        rng = np.random.default_rng(3)
        layer = nn.DenseLayer.create(6, 5, "sigmoid", rng)
        x = rng.normal(size=6)
        a = nn.forward(layer, x)
        b = nn.forward(layer, x)
        assert np.array_equal(a, b)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(4)
        layer = nn.DenseLayer.create(5, 3, "relu", rng)
        xs = rng.normal(size=(7, 5))
        batched = nn.forward(layer, xs)
        for i in range(7):
            assert np.allclose(batched[i], nn.forward(layer, xs[i]), atol=1e-14)


class TestActivations:
    @given(st.floats(min_value=-50, max_value=50, allow_nan=False))
    def test_relu_nonnegative(self, x):
        assert nn.relu(np.array(x)) >= 0

    @given(st.floats(min_value=-700, max_value=700, allow_nan=False))
    def test_sigmoid_in_open_unit_interval(self, x):
        y = float(nn.sigmoid(np.array(x)))
        assert 0.0 <= y <= 1.0
        if abs(x) < 30:
            assert 0.0 < y < 1.0

    def test_sigmoid_stable_at_extremes(self):
        assert float(nn.sigmoid(np.array(-1e4))) == 0.0
        assert float(nn.sigmoid(np.array(1e4))) == 1.0


class TestBackward:
    def test_single_linear_neuron(self):
        # y = w * x with x=2, loss = y: dloss/dw = x = 2
        layer = nn.DenseLayer(np.array([[1.0]]), np.zeros(1), "linear")
        stack = nn.LayerStack("s", [layer])
        stack.forward(np.array([2.0]), record=True)
        tape = nn.backward(stack, np.array([1.0]))
        assert tape.grads["s.0.w"][0, 0] == 2.0
        assert tape.grads["s.0.b"][0] == 1.0

    def test_sigmoid_local_gradient_quarter(self):
        layer = nn.DenseLayer(np.array([[1.0]]), np.zeros(1), "sigmoid")
        stack = nn.LayerStack("s", [layer])
        stack.forward(np.array([0.0]), record=True)
        tape = nn.GradientTape(stack.parameters())
        grad_in = stack.backward(np.array([1.0]), tape)
        assert grad_in[0] == pytest.approx(0.25, abs=1e-15)

    def test_backward_without_forward_raises(self):
        stack = nn.LayerStack("s", [nn.DenseLayer(np.eye(2), np.zeros(2))])
        with pytest.raises(StateError):
            nn.backward(stack, np.zeros(2))

    def test_two_layer_network_matches_finite_differences(self):
        # oracle: central differences computed here, not via the library checker
        rng = np.random.default_rng(11)
        stack = nn.LayerStack(
            "net",
            [
                nn.DenseLayer.create(4, 6, "relu", rng),
                nn.DenseLayer.create(6, 3, "sigmoid", rng),
            ],
        )
        x = rng.normal(size=4)
        target = rng.uniform(0.2, 0.8, size=3)

        def loss_value():
            y = stack.forward(x)
            return float(((y - target) ** 2).sum())

        stack.forward(x, record=True)
        y = stack.forward(x)
        tape = nn.GradientTape(stack.parameters())
        stack.backward(2.0 * (y - target), tape)

        step = 1e-6
        for name, p in stack.parameters().items():
            flat = p.reshape(-1)
            got = tape.grads[name].reshape(-1)
            for i in range(flat.size):
                saved = flat[i]
                flat[i] = saved + step
                hi = loss_value()
                flat[i] = saved - step
                lo = loss_value()
                flat[i] = saved
                numeric = (hi - lo) / (2 * step)
                denom = max(abs(got[i]), abs(numeric), 1e-12)
                assert abs(got[i] - numeric) / denom < 1e-4, name


class TestFiniteDifferenceCheck:
    def test_quadratic_is_essentially_exact(self):
        theta = np.array([3.0])
        params = {"theta": theta}

        def loss_fn():
            return 0.5 * float(theta[0] ** 2)

        def grad_fn():
            tape = nn.GradientTape(params)
            tape.accumulate("theta", theta.copy())
            return tape

        err = nn.finite_difference_check(loss_fn, grad_fn, params, step=1e-5)
        assert err < 1e-9

    def test_constant_loss_zero_error(self):
        params = {"theta": np.array([1.0, -2.0])}

        def grad_fn():
            return nn.GradientTape(params)

        err = nn.finite_difference_check(lambda: 7.0, grad_fn, params, step=1e-4)
        assert err == 0.0

    def test_nonpositive_step_rejected(self):
        params = {"t": np.zeros(1)}
        with pytest.raises(ValidationError):
            nn.finite_difference_check(
                lambda: 0.0, lambda: nn.GradientTape(params), params, step=0.0
            )

    def test_nonfinite_loss_raises(self):
        theta = np.array([0.0])
        params = {"theta": theta}

        def loss_fn():
            return float("nan")

        def grad_fn():
            return nn.GradientTape(params)

        with pytest.raises(NumericalError):
            nn.finite_difference_check(loss_fn, grad_fn, params, step=1e-5)


class TestAdam:
    def test_zero_gradients_leave_parameters_unchanged(self):
        params = {"w": np.array([1.5, -2.5])}
        opt = nn.Adam(params)
        tape = nn.GradientTape(params)
        nn.optimizer_step(params, tape, opt)
        assert np.array_equal(params["w"], [1.5, -2.5])

    def test_first_step_magnitude_is_learning_rate(self):
        # with bias correction, the first Adam step is ~lr for any constant g
        for g in (0.1, 3.0, 250.0):
            theta = np.array([0.0])
            params = {"t": theta}
            opt = nn.Adam(params, nn.AdamConfig(learning_rate=1e-3))
            tape = nn.GradientTape(params)
            tape.accumulate("t", np.array([g]))
            opt.step(params, tape)
            assert theta[0] == pytest.approx(-1e-3, rel=1e-6)

    def test_converges_on_quadratic(self):
        theta = np.array([1.0])
        params = {"t": theta}
        opt = nn.Adam(params, nn.AdamConfig(learning_rate=0.05))
        for _ in range(100):
            tape = nn.GradientTape(params)
            tape.accumulate("t", theta.copy())
            opt.step(params, tape)
        assert abs(theta[0]) < 0.1

    def test_nan_gradient_aborts_naming_parameter(self):
        params = {"w_bad": np.zeros(2)}
        opt = nn.Adam(params)
        tape = nn.GradientTape(params)
        tape.grads["w_bad"][0] = np.nan
        with pytest.raises(NumericalError, match="w_bad"):
            opt.step(params, tape)


class TestTapeAndLayers:
    def test_tape_shape_mismatch_rejected(self):
        params = {"w": np.zeros((2, 3))}
        tape = nn.GradientTape(params)
        with pytest.raises(ShapeError):
            tape.accumulate("w", np.zeros((3, 2)))

    def test_tape_zeroed_between_steps(self):
        params = {"w": np.zeros(2)}
        tape = nn.GradientTape(params)
        tape.accumulate("w", np.ones(2))
        tape.zero()
        assert np.array_equal(tape.grads["w"], np.zeros(2))

    def test_layer_shape_invariants(self):
        with pytest.raises(ShapeError):
            nn.DenseLayer(np.zeros((2, 3)), np.zeros(3))
        with pytest.raises(ValidationError):
            nn.DenseLayer(np.zeros((2, 3)), np.zeros(2), "softmax")

    def test_glorot_init_within_limit(self):
        rng = np.random.default_rng(2)
        layer = nn.DenseLayer.create(30, 20, "relu", rng)
        limit = np.sqrt(6.0 / 50)
        assert np.abs(layer.weights).max() <= limit
        assert np.array_equal(layer.bias, np.zeros(20))


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        named = [
            ("encoder", nn.DenseLayer.create(6, 4, "relu", rng)),
            ("mu_head", nn.DenseLayer.create(4, 2, "linear", rng)),
            ("decoder", nn.DenseLayer.create(2, 6, "sigmoid", rng)),
        ]
        path = tmp_path / "m.llnn"
        nn.write_checkpoint(path, 2, (1, 2, 3), named)
        d_z, dims, loaded = nn.read_checkpoint(path)
        assert d_z == 2 and dims == (1, 2, 3)
        assert [r for r, _ in loaded] == [r for r, _ in named]
        for (_, a), (_, b) in zip(named, loaded):
            # blob is float32: loaded values are the f32-cast originals
            assert np.array_equal(b.weights, a.weights.astype("<f4").astype(float))
            assert np.array_equal(b.bias, a.bias.astype("<f4").astype(float))
            assert b.activation == a.activation

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.llnn"
        path.write_bytes(b"NOPE!whatever")
        with pytest.raises(ParseError, match="magic"):
            nn.read_checkpoint(path)

    def test_truncated_blob(self, tmp_path):
        rng = np.random.default_rng(6)
        named = [("encoder", nn.DenseLayer.create(8, 8, "relu", rng))]
        path = tmp_path / "m.llnn"
        nn.write_checkpoint(path, 1, (2, 2, 2), named)
        data = path.read_bytes()
        path.write_bytes(data[:-10])
        with pytest.raises(ParseError, match="truncated"):
            nn.read_checkpoint(path)
