import math

import numpy as np
import pytest

from swdrso.head import (ClassifierHead, RankingHead, classify_loss,
                         init_classifier, softmax, triplet_loss)
from swdrso.oracle import finite_diff_grad


class TestClassifyLoss:
    def test_zero_head_uniform_softmax(self, rng):
        head = ClassifierHead(weight=np.zeros((4, 2)), bias=np.zeros(2))
        loss, grad_v, _ = classify_loss(rng.standard_normal(4), 0, head)
        assert loss == pytest.approx(math.log(2), abs=1e-12)
        assert np.allclose(grad_v, 0.0, atol=1e-12)

    def test_saturated_correct_class(self):
        head = ClassifierHead(weight=np.eye(2), bias=np.zeros(2))
        loss, _, _ = classify_loss(np.array([1000.0, 0.0]), 0, head)
        assert 0.0 <= loss <= 1e-6

    def test_saturated_wrong_class_is_finite(self):
        head = ClassifierHead(weight=np.eye(2), bias=np.zeros(2))
        loss, _, _ = classify_loss(np.array([1000.0, 0.0]), 1, head)
        assert np.isfinite(loss) and loss == pytest.approx(1000.0, rel=1e-9)

    def test_class_out_of_range(self, rng):
        head = init_classifier(4, 3, seed=0)
        with pytest.raises(ValueError):
            classify_loss(rng.standard_normal(4), 3, head)

    def test_gradients_match_finite_differences(self, rng):
        head = init_classifier(5, 3, seed=1)
        for _ in range(10):
            v = rng.standard_normal(5)
            y = int(rng.integers(3))
            _, grad_v, grad_p = classify_loss(v, y, head)
            fd_v = finite_diff_grad(lambda x: classify_loss(x, y, head)[0], v)
            assert np.linalg.norm(grad_v - fd_v) / max(np.linalg.norm(fd_v), 1e-12) < 1e-5

            w = head.weight

            def f(flat):
                w[...] = flat.reshape(w.shape)
                return classify_loss(v, y, head)[0]

            base = w.copy()
            fd_w = finite_diff_grad(f, base.reshape(-1)).reshape(w.shape)
            w[...] = base
            assert np.linalg.norm(grad_p["weight"] - fd_w) / max(np.linalg.norm(fd_w), 1e-12) < 1e-5

    def test_convexity_in_embedding(self, rng):
        head = init_classifier(4, 3, seed=2)
        for _ in range(50):
            v1, v2 = rng.standard_normal(4), rng.standard_normal(4)
            t = float(rng.uniform())
            y = int(rng.integers(3))
            lhs = classify_loss(t * v1 + (1 - t) * v2, y, head)[0]
            rhs = t * classify_loss(v1, y, head)[0] + (1 - t) * classify_loss(v2, y, head)[0]
            assert lhs <= rhs + 1e-9

    def test_softmax_sums_to_one(self, rng):
        for _ in range(20):
            probs = softmax(rng.standard_normal(5) * 10)
            assert abs(probs.sum() - 1.0) <= 1e-12


class TestTripletLoss:
    def test_positive_equals_negative(self, rng):
        head = RankingHead(margin=1.0)
        a, p = rng.standard_normal(3), rng.standard_normal(3)
        loss, _, _, _ = triplet_loss(a, p, p.copy(), head)
        assert loss == pytest.approx(1.0, abs=1e-12)

    def test_inactive_hinge(self):
        head = RankingHead(margin=0.5)
        a = np.array([0.0])
        loss, ga, gp, gn = triplet_loss(a, np.array([0.1]), np.array([10.0]), head)
        assert loss == 0.0
        assert np.all(ga == 0.0) and np.all(gp == 0.0) and np.all(gn == 0.0)

    def test_hand_example(self):
        head = RankingHead(margin=0.5)
        loss, _, _, _ = triplet_loss(np.array([0.0]), np.array([1.0]), np.array([0.0]), head)
        assert loss == pytest.approx(1.5, abs=1e-12)

    def test_gradients_match_finite_differences(self, rng):
        head = RankingHead(margin=1.0)
        for _ in range(10):
            a, p, n = rng.standard_normal(4), rng.standard_normal(4), rng.standard_normal(4)
            loss, ga, gp, gn = triplet_loss(a, p, n, head)
            if loss <= 1e-6:  # keep away from the hinge kink
                continue
            fd_a = finite_diff_grad(lambda x: triplet_loss(x, p, n, head)[0], a)
            fd_p = finite_diff_grad(lambda x: triplet_loss(a, x, n, head)[0], p)
            fd_n = finite_diff_grad(lambda x: triplet_loss(a, p, x, head)[0], n)
            for got, ref in ((ga, fd_a), (gp, fd_p), (gn, fd_n)):
                assert np.linalg.norm(got - ref) / max(np.linalg.norm(ref), 1e-12) < 1e-4

    def test_margin_must_be_positive(self):
        with pytest.raises(ValueError):
            RankingHead(margin=0.0)
