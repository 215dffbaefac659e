import numpy as np
import pytest

from points2pix.exceptions import NonFiniteGradientError, ParameterError, ShapeError
from points2pix.tensor import AdamState, Tensor, adam_step, finite_difference_check, grad, no_grad
from points2pix.tensor import functional as F
from points2pix.tensor.nn import BatchNorm, InstanceNorm2d, Linear


def check(fn, blocks, tolerance=1e-5, probes=5):
    report = finite_difference_check(fn, blocks, tolerance=tolerance, probes=probes)
    assert report.passed, report.max_relative_error
    return report


# =============================================================================
# Forward primitives
# =============================================================================

class TestForward:
    def test_conv2d_output_shape(self, rng):
        x = Tensor(rng.normal(size=(1, 3, 64, 64)))
        w = Tensor(rng.normal(size=(8, 3, 4, 4)))
        out = F.conv2d(x, w, Tensor(np.zeros(8)), stride=2, padding=1)
        assert out.shape == (1, 8, 32, 32)

    def test_conv_transpose_doubles_resolution(self, rng):
        x = Tensor(rng.normal(size=(2, 4, 8, 8)))
        w = Tensor(rng.normal(size=(4, 5, 4, 4)))
        out = F.conv_transpose2d(x, w, Tensor(np.zeros(5)), stride=2, padding=1)
        assert out.shape == (2, 5, 16, 16)

    def test_conv2d_matches_direct_sum(self, float64, rng):
        x = rng.normal(size=(1, 2, 5, 5))
        w = rng.normal(size=(3, 2, 3, 3))
        b = rng.normal(size=3)
        out = F.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=2, padding=1).data
        padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        expected = np.zeros((1, 3, 3, 3))
        for o in range(3):
            for i in range(3):
                for j in range(3):
                    window = padded[0, :, 2 * i:2 * i + 3, 2 * j:2 * j + 3]
                    expected[0, o, i, j] = np.sum(window * w[o]) + b[o]
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_tanh_of_zero_is_zero(self):
        assert np.array_equal(F.tanh(Tensor(np.zeros((2, 3)))).data, np.zeros((2, 3)))

    def test_max_reduce(self):
        out = F.max(Tensor(np.array([[1.0, 5.0], [3.0, 2.0]])), axis=0)
        assert out.data.tolist() == [3.0, 5.0]

    def test_concat_then_slice_recovers_inputs(self, rng):
        a = Tensor(rng.normal(size=(1, 2, 3, 3)))
        b = Tensor(rng.normal(size=(1, 4, 3, 3)))
        joined = F.concat([a, b], axis=1)
        assert np.array_equal(joined[:, :2].data, a.data)
        assert np.array_equal(joined[:, 2:].data, b.data)

    def test_channel_mismatch_names_the_primitive(self, rng):
        x = Tensor(rng.normal(size=(1, 3, 8, 8)))
        w = Tensor(rng.normal(size=(4, 2, 3, 3)))
        with pytest.raises(ShapeError) as info:
            F.conv2d(x, w, Tensor(np.zeros(4)))
        assert info.value.primitive == "conv2d"

    def test_dropout_reproducible_per_seed(self, rng):
        x = Tensor(rng.normal(size=(4, 16)))
        first = F.dropout(x, 0.5, np.random.default_rng(5)).data
        second = F.dropout(x, 0.5, np.random.default_rng(5)).data
        assert np.array_equal(first, second)
        kept = first != 0.0
        np.testing.assert_allclose(first[kept], x.data[kept] * 2.0, rtol=1e-6)

    def test_dropout_with_zero_rate_is_identity(self, rng):
        x = Tensor(rng.normal(size=(4, 16)))
        assert F.dropout(x, 0.0, np.random.default_rng(5)) is x

    def test_instance_norm_statistics(self, float64, rng):
        x = Tensor(rng.normal(3.0, 2.0, size=(2, 3, 8, 8)))
        out = InstanceNorm2d(3)(x).data
        np.testing.assert_allclose(out.mean(axis=(2, 3)), 0.0, atol=1e-6)
        np.testing.assert_allclose(out.var(axis=(2, 3)), 1.0, atol=1e-4)

    def test_batch_norm_eval_uses_running_statistics(self, float64, rng):
        norm = BatchNorm(4)
        x = Tensor(rng.normal(2.0, 1.0, size=(8, 4, 3, 3)))
        norm(x)
        assert not np.allclose(norm._buffers["running_mean"], 0.0)
        norm.eval()
        mean = norm._buffers["running_mean"].reshape(1, 4, 1, 1)
        var = norm._buffers["running_var"].reshape(1, 4, 1, 1)
        expected = (x.data - mean) / np.sqrt(var + norm.eps)
        np.testing.assert_allclose(norm(x).data, expected, atol=1e-12)


# =============================================================================
# Backward
# =============================================================================

class TestBackward:
    def test_gradient_of_weighted_sum_is_input(self, rng):
        x = Tensor(rng.normal(size=5))
        w = Tensor(rng.normal(size=5), requires_grad=True)
        (w * x).sum().backward()
        np.testing.assert_allclose(w.grad, x.data)

    def test_unreachable_parameter_gets_zero(self, rng):
        w = Tensor(rng.normal(size=3), requires_grad=True)
        v = Tensor(rng.normal(size=3), requires_grad=True)
        grads = grad((v * v).sum(), [w, v])
        assert np.array_equal(grads[0], np.zeros(3))

    def test_non_scalar_loss_rejected(self, rng):
        w = Tensor(rng.normal(size=3), requires_grad=True)
        with pytest.raises(ShapeError):
            (w * 2.0).backward()

    def test_no_grad_records_nothing(self, rng):
        w = Tensor(rng.normal(size=3), requires_grad=True)
        with no_grad():
            out = w * 2.0
        assert not out.requires_grad


class TestGradientChecks:
    def test_fully_connected(self, float64, rng):
        layer = Linear(4, 3, rng)
        x = Tensor(rng.normal(size=(2, 4)))
        r = rng.normal(size=(2, 3))
        report = check(lambda: (layer(x) * r).sum(), {"weight": layer.weight, "bias": layer.bias},
                       tolerance=1e-6, probes=None)
        assert report.worst < 1e-6

    def test_instance_norm(self, float64, rng):
        x = Tensor(rng.normal(size=(1, 2, 4, 4)))
        r = rng.normal(size=(1, 2, 4, 4))
        check(lambda: (F.instance_norm(x) * r).sum(), {"x": x})

    def test_batch_norm(self, float64, rng):
        norm = BatchNorm(3)
        x = Tensor(rng.normal(size=(4, 3, 2, 2)))
        r = rng.normal(size=(4, 3, 2, 2))
        check(lambda: (norm(x) * r).sum(), {"x": x, "gamma": norm.gamma, "beta": norm.beta})

    def test_conv2d(self, float64, rng):
        x = Tensor(rng.normal(size=(1, 2, 6, 6)))
        w = Tensor(rng.normal(size=(3, 2, 4, 4)))
        b = Tensor(rng.normal(size=3))
        r = rng.normal(size=(1, 3, 3, 3))
        check(lambda: (F.conv2d(x, w, b, stride=2, padding=1) * r).sum(), {"x": x, "w": w, "b": b})

    def test_conv_transpose2d(self, float64, rng):
        x = Tensor(rng.normal(size=(1, 2, 3, 3)))
        w = Tensor(rng.normal(size=(2, 3, 4, 4)))
        b = Tensor(rng.normal(size=3))
        r = rng.normal(size=(1, 3, 6, 6))
        check(lambda: (F.conv_transpose2d(x, w, b) * r).sum(), {"x": x, "w": w, "b": b})

    def test_smooth_activations(self, float64, rng):
        x = Tensor(rng.normal(size=(3, 4)))
        r = rng.normal(size=(3, 4))
        check(lambda: (F.tanh(x) * r).sum(), {"x": x})
        check(lambda: (F.sigmoid(x) * r).sum(), {"x": x})
        check(lambda: F.log(F.sigmoid(x)).mean(), {"x": x})

    def test_relu_away_from_kink(self, float64, rng):
        values = rng.uniform(0.2, 1.0, size=(3, 4)) * rng.choice([-1.0, 1.0], size=(3, 4))
        x = Tensor(values)
        r = rng.normal(size=(3, 4))
        check(lambda: (F.relu(x) * r).sum(), {"x": x}, tolerance=1e-7, probes=None)
        check(lambda: (F.leaky_relu(x, 0.2) * r).sum(), {"x": x}, probes=None)

    def test_max_and_concat(self, float64, rng):
        x = Tensor(rng.permutation(24).reshape(2, 3, 4).astype(np.float64))
        y = Tensor(rng.normal(size=(2, 3, 2)))
        r = rng.normal(size=(2, 6))
        check(lambda: (F.concat([x, y], axis=2).max(axis=2).reshape(2, 3) * r[:, :3]).sum(), {"x": x, "y": y})

    def test_dropout_with_fixed_mask(self, float64, rng):
        x = Tensor(rng.normal(size=(4, 4)))
        check(lambda: (F.dropout(x, 0.3, np.random.default_rng(9)) * x).sum(), {"x": x})

    def test_rejects_32_bit_blocks(self, rng):
        x = Tensor(rng.normal(size=3).astype(np.float32))
        with pytest.raises(ParameterError):
            finite_difference_check(lambda: x.sum(), {"x": x})


# =============================================================================
# ADAM
# =============================================================================

class TestAdam:
    def test_zero_gradient_leaves_parameters(self):
        params = [np.array([1.0, -2.0]), np.array([[0.5]])]
        state = AdamState.fresh(params)
        updated = adam_step(params, [np.zeros(2), np.zeros((1, 1))], state)
        for before, after in zip(params, updated):
            assert np.array_equal(before, after)

    def test_first_step_moves_by_learning_rate(self):
        state = AdamState.fresh([np.array([0.0])], lr=0.0002)
        (updated,) = adam_step([np.array([0.0])], [np.array([3.0])], state)
        expected = 0.0002 * 3.0 / (3.0 + state.epsilon)
        assert abs(abs(updated[0]) - expected) < 1e-15
        assert state.step_count == 1

    def test_quadratic_decreases(self):
        w = np.array([1.0])
        state = AdamState.fresh([w], lr=0.1)
        for _ in range(3):
            (new_w,) = adam_step([w], [2.0 * w], state)
            assert new_w[0] < w[0]
            w = new_w

    def test_non_finite_gradient_aborts_update(self):
        params = [np.array([1.0]), np.array([2.0])]
        state = AdamState.fresh(params)
        with pytest.raises(NonFiniteGradientError) as info:
            adam_step(params, [np.array([0.1]), np.array([np.nan])], state)
        assert info.value.index == 1
        assert state.step_count == 0
        assert np.array_equal(state.first_moment[0], np.zeros(1))

    def test_state_round_trips_through_arrays(self):
        params = [np.array([1.0, 2.0])]
        state = AdamState.fresh(params)
        adam_step(params, [np.array([0.5, -0.5])], state)
        restored = AdamState.fresh(params)
        restored.load_state_dict(state.state_dict(prefix="optim/"), prefix="optim/")
        assert restored.step_count == 1
        assert np.array_equal(restored.first_moment[0], state.first_moment[0])
