import math

import numpy as np
import pytest
from scipy.special import logsumexp

from hpunet.backend import functional as F
from hpunet.backend.gradcheck import check_gradients, relative_error
from hpunet.backend.init import init_orthogonal, init_truncnormal
from hpunet.backend.ops import (
    avg_pool2x2, concat_channels, conv2d, reparam_sample, softmax_ce_map, upsample_nn2x2,
)
from hpunet.backend.rng import RngState
from hpunet.backend.tensor import Tape, Tensor
from hpunet.errors import TapeError


class TestTensor:
    def test_bool_and_int64_are_normalized(self):
        assert Tensor(np.array([True, False])).kind == "uint8"
        assert Tensor(np.arange(3, dtype=np.int64)).kind == "int32"

    def test_integer_tensor_cannot_require_grad(self):
        with pytest.raises(ValueError):
            Tensor(np.arange(3), requires_grad=True)

    def test_backward_needs_scalar(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with Tape() as tape:
            y = F.mul(x, 2.0)
        with pytest.raises(TapeError):
            tape.backward(y)

    def test_loss_from_another_tape_is_rejected(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with Tape():
            loss = F.tsum(x)
        with pytest.raises(TapeError):
            Tape().backward(loss)

    def test_unused_parameter_gets_zero_gradient(self):
        x = Tensor(np.ones(3), requires_grad=True)
        unused = Tensor(np.ones(2), requires_grad=True)
        with Tape() as tape:
            loss = F.tsum(F.square(x))
        tape.backward(loss, [x, unused])
        np.testing.assert_allclose(x.grad, 2.0)
        np.testing.assert_array_equal(unused.grad, 0.0)

    def test_gradient_accumulates_over_fanout(self):
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        with Tape() as tape:
            loss = F.tsum(F.add(F.mul(x, x), x))
        tape.backward(loss, [x])
        np.testing.assert_allclose(x.grad, 2 * x.data + 1)

    def test_no_recording_without_tape(self):
        x = Tensor(np.ones(2), requires_grad=True)
        y = F.exp(x)
        assert not y.requires_grad


class TestRng:
    def test_same_seed_same_stream(self):
        a, b = RngState(5), RngState(5)
        np.testing.assert_array_equal(a.normal((4,)), b.normal((4,)))
        assert a.integers(100) == b.integers(100)

    def test_derive_is_independent_of_parent_consumption(self):
        a, b = RngState(5), RngState(5)
        a.normal((10,))
        np.testing.assert_array_equal(a.derive("step", 3).normal((3,)), b.derive("step", 3).normal((3,)))

    def test_derive_keys_differ(self):
        root = RngState(0)
        assert root.derive("x").seed != root.derive("y").seed
        assert root.derive("step", 1).seed != root.derive("step", 2).seed

    def test_state_roundtrip_continues_stream(self):
        a = RngState(9)
        a.uniform((3,))
        b = RngState.from_state(a.get_state())
        np.testing.assert_array_equal(a.gumbel((5,)), b.gumbel((5,)))


class TestInit:
    def test_orthogonal_wide_rows_are_orthonormal(self):
        w = init_orthogonal((4, 2, 3, 3), 1.0, RngState(0), dtype=np.float64).data.reshape(4, -1)
        np.testing.assert_allclose(w @ w.T, np.eye(4), atol=1e-10)

    def test_orthogonal_tall_columns_are_orthonormal(self):
        w = init_orthogonal((8, 2, 1, 1), 2.0, RngState(0), dtype=np.float64).data.reshape(8, -1)
        np.testing.assert_allclose(w.T @ w, 4.0 * np.eye(2), atol=1e-10)

    def test_truncnormal_bounds(self):
        b = init_truncnormal((5000,), 0.001, RngState(1), dtype=np.float64).data
        assert np.abs(b).max() <= 0.002
        assert b.std() > 0


class TestOps:
    def test_conv_scalar(self):
        out = conv2d(Tensor(np.full((1, 1, 1, 1), 2.0)), Tensor(np.full((1, 1, 1, 1), 3.0)), Tensor(np.zeros(1)))
        assert out.item() == 6.0

    @pytest.mark.parametrize("seed", range(10))
    def test_conv_matches_loop(self, seed):
        rng = RngState(seed)
        k = 1 + 2 * rng.integers(2)
        n, cin, cout = rng.integers(3, low=1), rng.integers(4, low=1), rng.integers(4, low=1)
        h, w = rng.integers(7, low=1), rng.integers(7, low=1)
        x = rng.normal((n, cin, h, w), dtype=np.float64)
        kernel = rng.normal((cout, cin, k, k), dtype=np.float64)
        bias = rng.normal((cout,), dtype=np.float64)
        p = k // 2
        padded = np.zeros((n, cin, h + 2 * p, w + 2 * p))
        padded[:, :, p:p + h, p:p + w] = x
        expected = np.zeros((n, cout, h, w))
        for b in range(n):
            for o in range(cout):
                for i in range(h):
                    for j in range(w):
                        expected[b, o, i, j] = bias[o] + np.sum(padded[b, :, i:i + k, j:j + k] * kernel[o])
        out = conv2d(Tensor(x), Tensor(kernel), Tensor(bias))
        np.testing.assert_allclose(out.data, expected, rtol=1e-10, atol=1e-10)

    def test_conv_identity_kernel(self):
        x = Tensor(np.arange(16, dtype=np.float64).reshape(1, 1, 4, 4))
        k = np.zeros((1, 1, 3, 3))
        k[0, 0, 1, 1] = 1.0
        out = conv2d(x, Tensor(k), Tensor(np.zeros(1)))
        np.testing.assert_array_equal(out.data, x.data)

    def test_conv_zero_padding(self):
        x = Tensor(np.ones((1, 1, 3, 3)))
        out = conv2d(x, Tensor(np.ones((1, 1, 3, 3))), Tensor(np.zeros(1)))
        np.testing.assert_array_equal(out.data[0, 0], [[4, 6, 4], [6, 9, 6], [4, 6, 4]])

    def test_conv_rejects_channel_mismatch(self):
        with pytest.raises(ValueError):
            conv2d(Tensor(np.ones((1, 2, 4, 4))), Tensor(np.ones((1, 3, 3, 3))), Tensor(np.zeros(1)))

    def test_conv_rejects_even_kernel(self):
        with pytest.raises(ValueError):
            conv2d(Tensor(np.ones((1, 1, 4, 4))), Tensor(np.ones((1, 1, 2, 2))), Tensor(np.zeros(1)))

    def test_pool_block_mean(self):
        x = Tensor(np.array([[[[1.0, 3.0], [5.0, 7.0]]]]))
        assert avg_pool2x2(x).item() == 4.0
        const = avg_pool2x2(Tensor(np.full((2, 3, 8, 8), 2.5)))
        assert const.shape == (2, 3, 4, 4)
        np.testing.assert_array_equal(const.data, 2.5)

    def test_upsample_replicates(self):
        x = Tensor(RngState(1).normal((1, 1, 3, 5)))
        out = upsample_nn2x2(x).data
        assert out.shape == (1, 1, 6, 10)
        for di in (0, 1):
            for dj in (0, 1):
                np.testing.assert_array_equal(out[:, :, di::2, dj::2], x.data)

    def test_pool_of_upsample_is_identity(self):
        x = Tensor(RngState(3).normal((2, 3, 4, 4)))
        np.testing.assert_array_equal(avg_pool2x2(upsample_nn2x2(x)).data, x.data)

    def test_pool_rejects_odd_extent(self):
        with pytest.raises(ValueError):
            avg_pool2x2(Tensor(np.ones((1, 1, 3, 4))))

    def test_concat_rejects_spatial_mismatch(self):
        with pytest.raises(ValueError):
            concat_channels(Tensor(np.ones((1, 1, 4, 4))), Tensor(np.ones((1, 1, 2, 2))))

    def test_concat_order(self):
        a, b = Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.ones((1, 1, 4, 4)))
        out = concat_channels(a, b)
        assert out.shape == (1, 3, 4, 4)
        np.testing.assert_array_equal(out.data[:, :2], a.data)
        np.testing.assert_array_equal(out.data[:, 2:], b.data)

    def test_reparam_pinned_noise(self):
        out = reparam_sample(Tensor(np.array([0.5])), Tensor(np.array([2.0])), None, noise=1.0)
        assert out.item() == 2.5

    def test_reparam_moments(self):
        n, mu, sigma = 100_000, 0.5, 2.0
        out = reparam_sample(Tensor(np.full(n, mu)), Tensor(np.full(n, sigma)), RngState(21)).data
        assert abs(out.mean() - mu) <= 3 * sigma / math.sqrt(n)
        assert abs(out.var(ddof=1) - sigma ** 2) <= 3 * sigma ** 2 * math.sqrt(2 / (n - 1))

    def test_reparam_zero_noise_returns_mu(self):
        mu = Tensor(np.array([[1.0, -2.0]]))
        sigma = Tensor(np.array([[0.5, 3.0]]))
        np.testing.assert_array_equal(reparam_sample(mu, sigma, None, noise=0.0).data, mu.data)

    def test_reparam_rejects_nonpositive_sigma(self):
        with pytest.raises(ValueError):
            reparam_sample(Tensor(np.zeros(2)), Tensor(np.array([1.0, 0.0])), RngState(0))

    def test_softmax_ce_uniform_logits(self):
        logits = Tensor(np.zeros((1, 4, 2, 2)))
        ce = softmax_ce_map(logits, np.zeros((1, 2, 2), dtype=np.int32))
        np.testing.assert_allclose(ce.data, np.log(4.0))

    def test_softmax_ce_saturated(self):
        logits = np.zeros((1, 2, 1, 1))
        logits[0, 1] = 20.0
        ce = softmax_ce_map(Tensor(logits), np.ones((1, 1, 1), dtype=np.int32))
        assert ce.item() == pytest.approx(0.0, abs=1e-8)

    def test_softmax_ce_matches_logsumexp(self):
        rng = RngState(4)
        logits = 3.0 * rng.normal((2, 5, 3, 3), dtype=np.float64)
        target = rng.integers(5, size=(2, 3, 3))
        ce = softmax_ce_map(Tensor(logits), target).data
        picked = np.take_along_axis(logits, target[:, None], axis=1)[:, 0]
        np.testing.assert_allclose(ce, logsumexp(logits, axis=1) - picked, atol=1e-6)

    def test_softmax_ce_ignored_pixels_are_zero(self):
        logits = Tensor(RngState(0).normal((1, 3, 2, 2), dtype=np.float64))
        ignore = np.array([[[True, False], [False, True]]])
        # Out-of-range targets are tolerated where ignored.
        ce = softmax_ce_map(logits, np.where(ignore, 9, 1), ignore=ignore)
        assert ce.data[0, 0, 0] == 0 and ce.data[0, 1, 1] == 0
        assert np.all(ce.data[0, 0, 1] > 0)

    def test_softmax_ce_rejects_out_of_range_target(self):
        with pytest.raises(ValueError):
            softmax_ce_map(Tensor(np.zeros((1, 2, 2, 2))), np.full((1, 2, 2), 2))

    def test_one_hot_ignore_is_all_zero(self):
        labels = np.array([[[0, 1], [2, 1]]])
        out = F.one_hot(labels, 3, ignore=np.array([[[False, True], [False, False]]]))
        assert out.shape == (1, 3, 2, 2)
        np.testing.assert_array_equal(out[0, :, 0, 1], 0)
        np.testing.assert_array_equal(out.sum(axis=1)[0], [[1, 0], [1, 1]])


def _projected(out, rng):
    """Scalar loss sum(w * out) with a fixed random weight map."""
    w = Tensor(rng.normal(out.shape, dtype=out.data.dtype))
    return F.tsum(F.mul(out, w))


def _away_from(values, points, margin=0.05):
    """Push entries at least `margin` away from each kink in `points`."""
    for p in points:
        near = np.abs(values - p) < margin
        values = np.where(near, p + margin * np.where(values >= p, 1.0, -1.0), values)
    return values


def _tensor(values, dtype):
    return Tensor(np.asarray(values, dtype=dtype), requires_grad=True)


def _conv_case(rng, dtype):
    k = 1 + 2 * rng.integers(2)
    n, cin, cout = rng.integers(3, low=1), rng.integers(4, low=1), rng.integers(4, low=1)
    h, w = rng.integers(5, low=1), rng.integers(5, low=1)
    x = _tensor(rng.normal((n, cin, h, w)), dtype)
    kernel = _tensor(0.5 * rng.normal((cout, cin, k, k)), dtype)
    bias = _tensor(rng.normal((cout,)), dtype)
    return lambda: _projected(conv2d(x, kernel, bias), rng.derive("w")), [x, kernel, bias]


def _pool_case(rng, dtype):
    x = _tensor(rng.normal((rng.integers(3, low=1), rng.integers(3, low=1),
                            2 * rng.integers(3, low=1), 2 * rng.integers(3, low=1))), dtype)
    return lambda: _projected(avg_pool2x2(x), rng.derive("w")), [x]


def _upsample_case(rng, dtype):
    x = _tensor(rng.normal((1, rng.integers(3, low=1), rng.integers(4, low=1), rng.integers(4, low=1))), dtype)
    return lambda: _projected(upsample_nn2x2(x), rng.derive("w")), [x]


def _concat_case(rng, dtype):
    n, h, w = rng.integers(3, low=1), rng.integers(4, low=1), rng.integers(4, low=1)
    a = _tensor(rng.normal((n, rng.integers(3, low=1), h, w)), dtype)
    b = _tensor(rng.normal((n, rng.integers(3, low=1), h, w)), dtype)
    return lambda: _projected(concat_channels(a, b), rng.derive("w")), [a, b]


def _slice_case(rng, dtype):
    c = rng.integers(5, low=2)
    start = rng.integers(c - 1)
    stop = rng.integers(c + 1, low=start + 1)
    x = _tensor(rng.normal((2, c, 2, 2)), dtype)
    return lambda: _projected(F.slice_channels(x, start, stop), rng.derive("w")), [x]


def _arithmetic_case(rng, dtype):
    x, y = _tensor(rng.normal((3, 4)), dtype), _tensor(rng.normal((3, 4)), dtype)
    return lambda: _projected(F.sub(F.mul(F.add(x, y), y), F.mul(F.neg(x), 2.5)), rng.derive("w")), [x, y]


def _exp_square_case(rng, dtype):
    x = _tensor(0.5 * rng.normal((3, 4)), dtype)
    return lambda: _projected(F.add(F.exp(x), F.square(x)), rng.derive("w")), [x]


def _relu_clip_case(rng, dtype):
    x = _tensor(_away_from(rng.normal((3, 4)), [0.0]), dtype)
    y = _tensor(_away_from(rng.normal((3, 4)), [-0.5, 0.5]), dtype)
    return lambda: _projected(F.add(F.relu(x), F.clip(y, -0.5, 0.5)), rng.derive("w")), [x, y]


def _sum_case(rng, dtype):
    x = _tensor(rng.normal((2, 3, 2, 2)), dtype)
    return lambda: _projected(F.tsum(x, axis=(1,)), rng.derive("w")), [x]


def _reparam_case(rng, dtype):
    mu = _tensor(rng.normal((2, 1, 2, 2)), dtype)
    log_sigma = _tensor(0.3 * rng.normal((2, 1, 2, 2)), dtype)
    noise = rng.normal((2, 1, 2, 2), dtype=dtype)
    return (lambda: _projected(reparam_sample(mu, F.exp(log_sigma), None, noise=noise), rng.derive("w")),
            [mu, log_sigma])


def _softmax_ce_case(rng, dtype):
    c, h, w = rng.integers(4, low=2), rng.integers(3, low=1), rng.integers(3, low=1)
    logits = _tensor(rng.normal((1, c, h, w)), dtype)
    target = rng.integers(c, size=(1, h, w))
    ignore = rng.uniform((1, h, w)) < 0.2
    return lambda: _projected(softmax_ce_map(logits, target, ignore=ignore), rng.derive("w")), [logits]


GRADIENT_CASES = {
    "conv2d": _conv_case,
    "avg_pool2x2": _pool_case,
    "upsample_nn2x2": _upsample_case,
    "concat_channels": _concat_case,
    "slice_channels": _slice_case,
    "arithmetic": _arithmetic_case,
    "exp_square": _exp_square_case,
    "relu_clip": _relu_clip_case,
    "tsum_axis": _sum_case,
    "reparam_sample": _reparam_case,
    "softmax_ce_map": _softmax_ce_case,
}


class TestGradients:
    """Tape gradients against central differences over random instances."""

    TOL = {"float32": 1e-3, "float64": 1e-5}
    INSTANCES = 20

    @pytest.mark.parametrize("dtype", ["float32", "float64"])
    @pytest.mark.parametrize("op", sorted(GRADIENT_CASES))
    def test_random_instances(self, op, dtype):
        errors = []
        for seed in range(self.INSTANCES):
            fn, inputs = GRADIENT_CASES[op](RngState(seed).derive(op), dtype)
            errors.append(check_gradients(fn, inputs))
        assert max(errors) <= self.TOL[dtype], errors

    def test_conv_pool_ce_chain_float32(self):
        rng = RngState(12)
        x = _tensor(rng.normal((2, 2, 4, 4)), np.float32)
        kernel = _tensor(0.5 * rng.normal((3, 2, 3, 3)), np.float32)
        bias = _tensor(0.1 * rng.normal((3,)), np.float32)
        target = rng.integers(3, size=(2, 2, 2))

        def fn():
            return F.tsum(softmax_ce_map(avg_pool2x2(conv2d(x, kernel, bias)), target))

        assert check_gradients(fn, [x, kernel, bias]) <= 1e-3

    def test_relative_error_both_zero(self):
        assert relative_error(np.zeros(3), np.zeros(3)) == 0.0
