"""Tensor primitive tests: hand-computed examples plus finite-difference
gradient oracles for every backward pass."""

import numpy as np
import pytest

from brainalign import ops
from brainalign.errors import ConfigurationError
from brainalign.ops import ConvSpec, RunningStats

from helpers import numeric_grad, relerr


@pytest.fixture
def rng():
    return np.random.default_rng(42)


# ---------------------------------------------------------------------------
# conv2d
# ---------------------------------------------------------------------------

class TestConvForward:
    def test_one_by_one_kernel_scales(self):
        out = ops.conv2d_forward(np.ones((1, 1, 3, 3)), np.full((1, 1, 1, 1), 2.0),
                                 np.zeros(1), ConvSpec(1, 1, 1))
        assert out.shape == (1, 1, 3, 3)
        assert np.array_equal(out, np.full((1, 1, 3, 3), 2.0))

    def test_hand_multiply_accumulate(self):
        x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
        w = np.array([[[[1.0, 0.0], [0.0, 1.0]]]])
        out = ops.conv2d_forward(x, w, np.zeros(1), ConvSpec(1, 1, 2))
        assert out.shape == (1, 1, 1, 1)
        assert out[0, 0, 0, 0] == 5.0

    def test_zero_input_gives_bias(self, rng):
        w = rng.normal(size=(4, 2, 3, 3))
        b = np.array([0.5, -1.0, 2.0, 0.0])
        out = ops.conv2d_forward(np.zeros((2, 2, 6, 6)), w, b,
                                 ConvSpec(2, 4, 3, padding=1))
        for o in range(4):
            assert np.allclose(out[:, o], b[o])

    def test_linearity(self, rng):
        spec = ConvSpec(3, 2, 3, padding=1)
        w = rng.normal(size=(2, 3, 3, 3))
        b = np.zeros(2)
        x, y = rng.normal(size=(2, 2, 3, 5, 5))
        lhs = ops.conv2d_forward(1.7 * x - 0.3 * y, w, b, spec)
        rhs = 1.7 * ops.conv2d_forward(x, w, b, spec) - 0.3 * ops.conv2d_forward(y, w, b, spec)
        assert np.abs(lhs - rhs).max() < 1e-10

    def test_output_shape_formula(self):
        spec = ConvSpec(1, 1, 3, stride=2, padding=1)
        out = ops.conv2d_forward(np.zeros((1, 1, 7, 7)), np.zeros((1, 1, 3, 3)),
                                 np.zeros(1), spec)
        assert out.shape[2] == (7 + 2 - 3) // 2 + 1

    def test_shape_mismatch_names_both_shapes(self, rng):
        spec = ConvSpec(3, 2, 3)
        with pytest.raises(ConfigurationError) as e:
            ops.conv2d_forward(np.zeros((1, 4, 5, 5)), rng.normal(size=(2, 3, 3, 3)),
                               np.zeros(2), spec)
        assert "(1, 4, 5, 5)" in str(e.value)


class TestConvBackward:
    def test_zero_grad_out(self, rng):
        spec = ConvSpec(2, 3, 3, padding=1)
        x = rng.normal(size=(2, 2, 4, 4))
        w = rng.normal(size=(3, 2, 3, 3))
        gx, gw, gb = ops.conv2d_backward(np.zeros((2, 3, 4, 4)), x, w, spec)
        assert not gx.any() and not gw.any() and not gb.any()

    def test_scalar_case_product_rule(self):
        # 1x1 kernel on a 1x1 image: grad_w = grad_out * input
        spec = ConvSpec(1, 1, 1)
        x = np.full((1, 1, 1, 1), 3.0)
        w = np.full((1, 1, 1, 1), -2.0)
        g = np.full((1, 1, 1, 1), 5.0)
        gx, gw, gb = ops.conv2d_backward(g, x, w, spec)
        assert gw[0, 0, 0, 0] == 15.0
        assert gx[0, 0, 0, 0] == -10.0
        assert gb[0] == 5.0

    @pytest.mark.parametrize("spec,in_hw", [
        (ConvSpec(4, 3, 3, stride=1, padding=0), (5, 5)),
        (ConvSpec(4, 3, 3, stride=1, padding=1), (5, 5)),
        (ConvSpec(2, 2, 3, stride=2, padding=1), (7, 7)),
        (ConvSpec(1, 2, 2, stride=2, padding=0), (6, 6)),
    ])
    def test_matches_finite_differences(self, rng, spec, in_hw):
        x = rng.normal(size=(2, spec.in_channels) + in_hw)
        w = rng.normal(size=spec.weight_shape)
        b = rng.normal(size=spec.out_channels)
        proj = rng.normal(size=ops.conv2d_forward(x, w, b, spec).shape)
        gx, gw, gb = ops.conv2d_backward(proj, x, w, spec)
        assert relerr(gx, numeric_grad(
            lambda v: float(np.sum(ops.conv2d_forward(v, w, b, spec) * proj)), x)) < 1e-4
        assert relerr(gw, numeric_grad(
            lambda v: float(np.sum(ops.conv2d_forward(x, v, b, spec) * proj)), w)) < 1e-4
        assert relerr(gb, numeric_grad(
            lambda v: float(np.sum(ops.conv2d_forward(x, w, v, spec) * proj)), b)) < 1e-4


# ---------------------------------------------------------------------------
# maxpool 2x2
# ---------------------------------------------------------------------------

class TestMaxPool:
    def test_unique_max_routes_gradient(self):
        x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
        out, idx = ops.maxpool2x2_forward(x)
        assert out[0, 0, 0, 0] == 4.0
        g = ops.maxpool2x2_backward(np.full((1, 1, 1, 1), 7.0), idx)
        assert g[0, 0, 1, 1] == 7.0
        assert np.sum(g != 0) == 1

    def test_tie_break_first_in_scan_order(self):
        out, idx = ops.maxpool2x2_forward(np.full((1, 1, 4, 4), 3.3))
        assert np.all(idx.argmax == 0)
        g = ops.maxpool2x2_backward(np.ones((1, 1, 2, 2)), idx)
        # gradient lands on the top-left corner of every window
        assert np.array_equal(g[0, 0], np.array([[1, 0, 1, 0], [0, 0, 0, 0],
                                                 [1, 0, 1, 0], [0, 0, 0, 0]], dtype=float))

    def test_gradient_sum_conserved_exactly(self, rng):
        x = rng.normal(size=(3, 4, 8, 6))
        out, idx = ops.maxpool2x2_forward(x)
        g_out = rng.normal(size=out.shape)
        g_in = ops.maxpool2x2_backward(g_out, idx)
        assert np.sum(g_in) == np.sum(g_out)

    def test_odd_dims_truncated(self, rng):
        x = rng.normal(size=(1, 2, 5, 7))
        out, idx = ops.maxpool2x2_forward(x)
        assert out.shape == (1, 2, 2, 3)
        g = ops.maxpool2x2_backward(np.ones_like(out), idx)
        assert g.shape == x.shape
        assert not g[:, :, 4, :].any() and not g[:, :, :, 6].any()

    def test_finite_differences_no_ties(self, rng):
        x = rng.permutation(2 * 3 * 6 * 6).reshape(2, 3, 6, 6).astype(float)
        out, idx = ops.maxpool2x2_forward(x)
        proj = rng.normal(size=out.shape)
        g = ops.maxpool2x2_backward(proj, idx)
        num = numeric_grad(lambda v: float(np.sum(ops.maxpool2x2_forward(v)[0] * proj)), x)
        assert relerr(g, num) < 1e-4


# ---------------------------------------------------------------------------
# batchnorm
# ---------------------------------------------------------------------------

class TestBatchNorm:
    def test_train_mode_normalizes(self, rng):
        x = rng.normal(2.0, 3.0, size=(8, 3, 6, 6))
        out, _ = ops.batchnorm_forward(x, np.ones(3), np.zeros(3),
                                       RunningStats.fresh(3), "train")
        assert np.abs(out.mean(axis=(0, 2, 3))).max() < 1e-6
        assert np.abs(out.var(axis=(0, 2, 3)) - 1).max() < 1e-4

    def test_gamma_zero_gives_beta(self, rng):
        x = rng.normal(size=(4, 2, 5, 5))
        beta = np.array([0.7, -0.2])
        out, _ = ops.batchnorm_forward(x, np.zeros(2), beta, RunningStats.fresh(2), "train")
        assert np.allclose(out[:, 0], 0.7) and np.allclose(out[:, 1], -0.2)

    def test_running_stats_update_and_eval(self, rng):
        stats = RunningStats.fresh(2)
        x = rng.normal(1.0, 2.0, size=(16, 2, 4, 4))
        ops.batchnorm_forward(x, np.ones(2), np.zeros(2), stats, "train")
        assert stats.batches_seen == 1
        # momentum 0.1 from (0, 1) init
        mu = x.mean(axis=(0, 2, 3))
        assert np.allclose(stats.mean, 0.1 * mu)
        out, cache = ops.batchnorm_forward(x, np.ones(2), np.zeros(2), stats, "eval")
        assert cache is None

    def test_eval_before_train_uses_init_stats_and_logs(self, rng, caplog):
        x = rng.normal(size=(4, 2, 3, 3))
        with caplog.at_level("WARNING"):
            out, _ = ops.batchnorm_forward(x, np.ones(2), np.zeros(2),
                                           RunningStats.fresh(2), "eval")
        assert "init stats" in caplog.text
        assert np.allclose(out, x / np.sqrt(1 + ops.BN_EPS))

    def test_backward_matches_finite_differences(self, rng):
        x = rng.normal(size=(5, 3, 4, 4))
        gamma = rng.normal(1.0, 0.3, size=3)
        beta = rng.normal(size=3)
        proj = rng.normal(size=x.shape)

        def fwd(v, g=gamma, b=beta):
            out, _ = ops.batchnorm_forward(v, g, b, RunningStats.fresh(3), "train")
            return float(np.sum(out * proj))

        out, cache = ops.batchnorm_forward(x, gamma, beta, RunningStats.fresh(3), "train")
        gx, gg, gb = ops.batchnorm_backward(proj, cache)
        assert relerr(gx, numeric_grad(fwd, x)) < 1e-4
        assert relerr(gg, numeric_grad(lambda v: fwd(x, g=v), gamma)) < 1e-4
        assert relerr(gb, numeric_grad(lambda v: fwd(x, b=v), beta)) < 1e-4


# ---------------------------------------------------------------------------
# relu / affine / gap / softmax cross-entropy
# ---------------------------------------------------------------------------

class TestSmallOps:
    def test_relu(self, rng):
        x = rng.normal(size=(4, 7))
        out = ops.relu_forward(x)
        assert np.array_equal(out, np.maximum(x, 0))
        g = ops.relu_backward(np.ones_like(x), x)
        assert np.array_equal(g, (x > 0).astype(float))

    def test_affine_finite_differences(self, rng):
        x = rng.normal(size=(4, 6))
        w = rng.normal(size=(6, 3))
        b = rng.normal(size=3)
        proj = rng.normal(size=(4, 3))
        gx, gw, gb = ops.affine_backward(proj, x, w)
        assert relerr(gx, numeric_grad(
            lambda v: float(np.sum(ops.affine_forward(v, w, b) * proj)), x)) < 1e-4
        assert relerr(gw, numeric_grad(
            lambda v: float(np.sum(ops.affine_forward(x, v, b) * proj)), w)) < 1e-4
        assert relerr(gb, numeric_grad(
            lambda v: float(np.sum(ops.affine_forward(x, w, v) * proj)), b)) < 1e-4

    def test_gap_is_spatial_mean(self, rng):
        x = rng.normal(size=(3, 5, 4, 6))
        feat = ops.global_avg_pool(x)
        oracle = np.array([[x[b, c].mean() for c in range(5)] for b in range(3)])
        assert np.abs(feat - oracle).max() < 1e-12
        g = ops.global_avg_pool_backward(np.ones((3, 5)), x.shape)
        assert np.allclose(g, 1.0 / 24)

    def test_uniform_logits_loss_is_log_k(self):
        loss, grad = ops.softmax_xent(np.zeros((6, 10)), np.arange(6))
        assert loss == pytest.approx(np.log(10), abs=1e-12)

    def test_confident_logits_drive_loss_to_zero(self):
        losses = []
        for margin in (5.0, 20.0, 50.0):
            logits = np.zeros((1, 4))
            logits[0, 2] = margin
            losses.append(ops.softmax_xent(logits, np.array([2]))[0])
        assert losses[0] > losses[1] > losses[2]
        assert losses[2] < 1e-10

    def test_xent_grad_matches_finite_differences(self, rng):
        logits = rng.normal(size=(5, 7))
        labels = rng.integers(0, 7, size=5)
        loss, grad = ops.softmax_xent(logits, labels)
        num = numeric_grad(lambda v: ops.softmax_xent(v, labels)[0], logits)
        assert relerr(grad, num) < 1e-4

    def test_out_of_range_label_rejected(self):
        with pytest.raises(ConfigurationError, match="out of range"):
            ops.softmax_xent(np.zeros((2, 3)), np.array([0, 3]))

    def test_grad_is_softmax_minus_onehot_over_batch(self, rng):
        logits = rng.normal(size=(4, 5))
        labels = np.array([1, 0, 4, 2])
        _, grad = ops.softmax_xent(logits, labels)
        sm = ops.softmax(logits)
        onehot = np.zeros_like(sm)
        onehot[np.arange(4), labels] = 1
        assert np.abs(grad - (sm - onehot) / 4).max() < 1e-12
