from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from obbkit.errors import ConfigError
from obbkit.losses import (
    EPS,
    AnchorTargets,
    LossParams,
    bce_soft,
    cls_loss,
    focal_loss,
    gradient_grid_max_error,
    run_loss_checks,
    total_loss,
    vfl,
    vfl_grad,
)

LN2 = math.log(2.0)
probs = st.floats(1e-6, 1.0 - 1e-6)


class TestBceSoft:
    def test_symmetric_half(self):
        assert bce_soft(0.5, 0.5) == pytest.approx(LN2, abs=1e-12)

    def test_perfect_positive(self):
        assert bce_soft(1.0, 1.0) == pytest.approx(0.0, abs=1e-6)

    def test_hard_negative_at_half(self):
        assert bce_soft(0.5, 0.0) == pytest.approx(LN2, abs=1e-12)

    def test_minimized_at_p_equal_q(self):
        for q in (0.2, 0.5, 0.8):
            at_q = bce_soft(q, q)
            grid = [bce_soft(p, q) for p in np.linspace(0.01, 0.99, 99)]
            assert at_q <= min(grid) + 1e-12

    def test_q_validated(self):
        with pytest.raises(ConfigError):
            bce_soft(0.5, 1.5)

    @given(probs, st.floats(0.0, 1.0))
    @settings(max_examples=200)
    def test_non_negative(self, p, q):
        assert bce_soft(p, q) >= 0.0


class TestFocal:
    def test_gamma_zero_is_bce(self):
        for p in (0.05, 0.1, 0.3, 0.5, 0.7, 0.9, 0.95):
            for y in (0.0, 1.0):
                assert focal_loss(p, y, gamma=0.0) == pytest.approx(bce_soft(p, y), abs=1e-12)

    def test_easy_positive_suppressed(self):
        assert focal_loss(0.9, 1.0, gamma=2.0) == pytest.approx(0.01 * -math.log(0.9), abs=1e-12)
        assert focal_loss(0.9, 1.0, gamma=2.0) == pytest.approx(0.001054, abs=1e-4)

    def test_perfect_positive(self):
        assert focal_loss(1.0, 1.0, gamma=2.0) == pytest.approx(0.0, abs=1e-8)

    def test_label_validated(self):
        with pytest.raises(ConfigError):
            focal_loss(0.5, 0.5)

    @given(probs, st.integers(0, 1), st.floats(0.0, 5.0))
    @settings(max_examples=200)
    def test_non_negative(self, p, y, gamma):
        assert focal_loss(p, float(y), gamma=gamma) >= 0.0


class TestVfl:
    def test_negative_fixture(self):
        assert vfl(0.5, 0.0, 0.0) == pytest.approx(0.75 * 0.25 * LN2, abs=1e-12)
        assert vfl(0.5, 0.0, 0.0) == pytest.approx(0.1300, abs=1e-4)

    def test_quality_weighted_fixture(self):
        expected = 0.8 * -(0.8 * math.log(0.8) + 0.2 * math.log(0.2))
        assert vfl(0.8, 1.0, 0.8) == pytest.approx(expected, abs=1e-12)
        assert vfl(0.8, 1.0, 0.8) == pytest.approx(0.4003, abs=1e-4)

    def test_perfect_positive(self):
        assert vfl(1.0, 1.0, 1.0) == pytest.approx(0.0, abs=1e-6)

    def test_positive_reduction(self):
        for p in (0.05, 0.2, 0.5, 0.8, 0.95):
            assert vfl(p, 1.0, 1.0) == pytest.approx(-math.log(p), abs=1e-12)

    def test_contract_violation(self):
        with pytest.raises(ConfigError, match="must be 0 wherever y = 0"):
            vfl(0.5, 0.0, 0.3)

    def test_negative_strictly_increasing(self):
        grid = np.linspace(0.01, 0.99, 99)
        vals = [vfl(float(p), 0.0, 0.0) for p in grid]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_easy_negatives_vanish_relative_to_bce(self):
        ratios = [vfl(p, 0.0, 0.0) / bce_soft(p, 0.0) for p in (0.2, 0.05, 0.01, 0.001)]
        assert all(b < a for a, b in zip(ratios, ratios[1:]))
        assert ratios[-1] < 1e-5

    def test_quality_linearity(self):
        for p in (0.2, 0.6, 0.9):
            for q in (0.0, 0.3, 0.7, 1.0):
                assert vfl(p, 1.0, q) == pytest.approx(q * bce_soft(p, q), abs=1e-15)

    def test_bce_reduction_with_unit_weights(self):
        # gamma=0, alpha=1 and one-hot quality makes the weight exactly 1
        for p in (0.1, 0.4, 0.8):
            assert vfl(p, 1.0, 1.0, gamma=0.0, alpha=1.0) == pytest.approx(bce_soft(p, 1.0), abs=1e-15)
            assert vfl(p, 0.0, 0.0, gamma=0.0, alpha=1.0) == pytest.approx(bce_soft(p, 0.0), abs=1e-15)

    @given(probs, st.integers(0, 1), st.floats(0.0, 1.0))
    @settings(max_examples=200)
    def test_non_negative(self, p, y, q):
        q = q if y == 1 else 0.0
        assert vfl(p, float(y), q) >= 0.0

    def test_elementwise_arrays(self):
        p = np.array([[0.5, 0.8]])
        y = np.array([[0.0, 1.0]])
        q = np.array([[0.0, 0.8]])
        out = vfl(p, y, q)
        assert out.shape == (1, 2)
        assert out[0, 0] == pytest.approx(vfl(0.5, 0.0, 0.0))
        assert out[0, 1] == pytest.approx(vfl(0.8, 1.0, 0.8))


class TestVflGrad:
    def test_hand_value(self):
        assert vfl_grad(0.5, 1.0, 1.0) == pytest.approx(-2.0, abs=1e-12)

    def test_finite_difference_grid(self):
        assert gradient_grid_max_error() < 1e-6

    def test_easy_negative_gradient_vanishes(self):
        assert abs(vfl_grad(1e-5, 0.0, 0.0)) < 1e-8

    def test_matches_fd_at_random_points(self):
        rng = np.random.default_rng(15)
        h = 1e-6
        for _ in range(100):
            p = float(rng.uniform(0.05, 0.95))
            y = float(rng.integers(0, 2))
            q = float(rng.uniform(0, 1)) if y == 1 else 0.0
            fd = (vfl(p + h, y, q) - vfl(p - h, y, q)) / (2 * h)
            ga = vfl_grad(p, y, q)
            assert ga == pytest.approx(fd, rel=1e-6, abs=1e-9)


class TestClsLoss:
    def test_single_anchor_single_class(self):
        targets = AnchorTargets(p=np.array([[0.5]]), y=np.array([[0.0]]), q=np.array([[0.0]]))
        assert cls_loss(targets) == pytest.approx(0.75 * 0.25 * LN2, abs=1e-12)

    def test_mean_over_anchors(self):
        one = AnchorTargets(p=np.array([[0.5]]), y=np.array([[0.0]]), q=np.array([[0.0]]))
        two = AnchorTargets(p=np.array([[0.5], [0.5]]), y=np.zeros((2, 1)), q=np.zeros((2, 1)))
        assert cls_loss(two) == cls_loss(one)

    def test_reduces_to_mean_soft_bce(self):
        rng = np.random.default_rng(19)
        p = rng.uniform(0.05, 0.95, (6, 4))
        y = rng.integers(0, 2, (6, 4)).astype(float)
        q = y.copy()  # one-hot quality
        targets = AnchorTargets(p=p, y=y, q=q)
        params = LossParams(gamma=0.0, alpha=1.0)
        expected = float(np.mean(np.sum(bce_soft(p, y), axis=1)))
        assert cls_loss(targets, params) == pytest.approx(expected, rel=1e-12)

    def test_anchor_order_invariant(self):
        rng = np.random.default_rng(20)
        p = rng.uniform(0.05, 0.95, (8, 3))
        y = rng.integers(0, 2, (8, 3)).astype(float)
        q = y * rng.uniform(0, 1, (8, 3))
        perm = rng.permutation(8)
        a = cls_loss(AnchorTargets(p=p, y=y, q=q))
        b = cls_loss(AnchorTargets(p=p[perm], y=y[perm], q=q[perm]))
        assert a == b

    def test_shape_validation(self):
        with pytest.raises(ConfigError):
            AnchorTargets(p=np.array([0.5]), y=np.array([0.0]), q=np.array([0.0]))
        with pytest.raises(ConfigError):
            AnchorTargets(p=np.ones((1, 2)) * 0.5, y=np.zeros((2, 1)), q=np.zeros((2, 1)))

    def test_empty_anchor_set(self):
        targets = AnchorTargets(p=np.zeros((0, 2)), y=np.zeros((0, 2)), q=np.zeros((0, 2)))
        with pytest.raises(ConfigError):
            cls_loss(targets)


class TestTotalLoss:
    def test_weighted_sum(self):
        assert total_loss(1.0, 2.0, 3.0) == 6.0

    def test_cls_weight_zero(self):
        params = LossParams(lambda_cls=0.0)
        assert total_loss(1.0, 99.0, 3.0, params) == 4.0

    def test_zero(self):
        assert total_loss(0.0, 0.0, 0.0) == 0.0

    def test_negative_component_rejected(self):
        with pytest.raises(ConfigError):
            total_loss(-1.0, 0.0, 0.0)

    def test_params_validated(self):
        with pytest.raises(ConfigError):
            LossParams(alpha=1.5)
        with pytest.raises(ConfigError):
            LossParams(gamma=-1.0)
        with pytest.raises(ConfigError):
            LossParams(lambda_dfl=-0.1)


class TestCheckSuite:
    def test_defaults_all_pass(self):
        checks = run_loss_checks()
        failed = [c.name for c in checks if not c.passed]
        assert failed == []

    def test_injected_alpha_fails_named_fixtures(self):
        checks = run_loss_checks(LossParams(alpha=0.9))
        failed = {c.name for c in checks if not c.passed}
        assert "vfl(p=0.5, y=0)" in failed
        assert "cls_loss single anchor == vfl(p=0.5, y=0)" in failed
        # parameter-independent reductions still pass
        assert "reduction: focal(gamma=0) == one-hot bce" not in failed
        assert "reduction: vfl(y=1, q=1) == -log p" not in failed

    def test_gamma_zero_reduction_included(self):
        names = [c.name for c in run_loss_checks()]
        assert "reduction: focal(gamma=0) == one-hot bce" in names

    def test_clamp_keeps_logs_finite(self):
        assert math.isfinite(bce_soft(0.0, 0.0))
        assert math.isfinite(bce_soft(1.0, 1.0))
        assert math.isfinite(vfl(0.0, 0.0, 0.0))
        assert bce_soft(0.0, 1.0) == pytest.approx(-math.log(EPS), rel=1e-6)
