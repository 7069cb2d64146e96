import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from swdrso.adversary import (AdversaryConfig, NeighborPool, SimplexWeights,
                              adversary_ablation, build_pool, inner_maximize,
                              mix, project_simplex)
from swdrso.encoder import SetEmbedding
from swdrso.head import init_classifier
from swdrso.oracle import grid_simplex_max


def emb(values, sid="e"):
    return SetEmbedding(values=np.asarray(values, dtype=np.float64), source_id=sid)


def small_pool(rng, m=4, k=3, rho=0.5):
    anchor = emb(rng.standard_normal(m), sid="anchor")
    nbs = []
    for i in range(k):
        offset = rng.standard_normal(m)
        offset *= rng.uniform(0, rho) / np.linalg.norm(offset)
        nbs.append(emb(anchor.values + offset, sid=f"n{i}"))
    return NeighborPool(anchor=anchor, neighbors=nbs, radius=rho)


class TestSimplexWeights:
    def test_valid(self):
        w = SimplexWeights(lam=np.array([0.25, 0.75]))
        assert w.size == 2

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            SimplexWeights(lam=np.array([1.1, -0.1]))

    def test_sum_enforced(self):
        with pytest.raises(ValueError):
            SimplexWeights(lam=np.array([0.5, 0.4]))

    def test_tiny_negative_clamped(self):
        w = SimplexWeights(lam=np.array([1.0, -1e-13]))
        assert w.lam[1] == 0.0


class TestBuildPool:
    def test_radius_filter(self):
        cfg = AdversaryConfig(K=4, rho=0.5)
        anchor = emb([0.0, 0.0], sid="a")
        cands = [anchor,
                 emb([0.05, 0.0], sid="b"),
                 emb([0.2, 0.0], sid="c"),
                 emb([3.0, 0.0], sid="d")]
        pool = build_pool(anchor, cands, cfg)
        assert sorted(nb.source_id for nb in pool.neighbors) == ["b", "c"]

    def test_fallback_to_anchor(self):
        cfg = AdversaryConfig(K=4, rho=0.5)
        anchor = emb([0.0], sid="a")
        pool = build_pool(anchor, [anchor, emb([9.0], sid="b")], cfg)
        assert pool.size == 1 and pool.neighbors[0] is anchor

    def test_k_cap_keeps_nearest(self):
        cfg = AdversaryConfig(K=1, rho=0.5)
        anchor = emb([0.0], sid="a")
        pool = build_pool(anchor, [anchor, emb([0.2], sid="far"), emb([0.1], sid="near")], cfg)
        assert [nb.source_id for nb in pool.neighbors] == ["near"]

    def test_pool_respects_radius_invariant(self):
        anchor = emb([0.0], sid="a")
        with pytest.raises(ValueError):
            NeighborPool(anchor=anchor, neighbors=[emb([2.0], sid="b")], radius=0.5)


class TestMix:
    def test_basis_vector_selects_vertex(self, rng):
        pool = small_pool(rng)
        w = SimplexWeights(lam=np.array([0.0, 1.0, 0.0]))
        assert np.array_equal(mix(pool, w).values, pool.neighbors[1].values)

    def test_uniform_mix(self):
        anchor = emb([0.5, 0.5], sid="a")
        pool = NeighborPool(anchor=anchor,
                            neighbors=[emb([1.0, 0.0]), emb([0.0, 1.0])], radius=1.0)
        out = mix(pool, SimplexWeights(lam=np.array([0.5, 0.5])))
        assert np.allclose(out.values, [0.5, 0.5], atol=1e-15)

    def test_length_mismatch(self, rng):
        pool = small_pool(rng)
        with pytest.raises(ValueError):
            mix(pool, SimplexWeights(lam=np.array([0.5, 0.5])))

    def test_locality(self, rng):
        for _ in range(100):
            pool = small_pool(rng, rho=0.7)
            lam = rng.dirichlet(np.ones(pool.size))
            out = mix(pool, SimplexWeights(lam=lam))
            assert np.linalg.norm(out.values - pool.anchor.values) <= 0.7 + 1e-9


class TestProjectSimplex:
    def test_already_feasible(self):
        assert np.allclose(project_simplex(np.array([0.5, 0.5])).lam, [0.5, 0.5], atol=1e-15)

    def test_threshold_example(self):
        assert np.allclose(project_simplex(np.array([1.2, -0.2])).lam, [1.0, 0.0], atol=1e-12)

    def test_symmetric_input(self):
        assert np.allclose(project_simplex(np.array([2.0, 2.0])).lam, [0.5, 0.5], atol=1e-15)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            project_simplex(np.array([np.inf, 0.0]))

    def test_nearest_point_vs_grid(self, rng):
        from swdrso.oracle import simplex_grid
        for _ in range(30):
            k = int(rng.integers(2, 4))
            v = rng.standard_normal(k) * 2
            lam = project_simplex(v).lam
            grid = simplex_grid(k, 0.01)
            assert np.sum((lam - v) ** 2) <= np.min(np.sum((grid - v) ** 2, axis=1)) + 1e-12

    @settings(max_examples=100, deadline=None)
    @given(arrays(np.float64, st.integers(1, 8),
                  elements=st.floats(-50, 50, allow_nan=False)))
    def test_output_always_feasible(self, v):
        lam = project_simplex(v).lam
        assert abs(lam.sum() - 1.0) <= 1e-9
        assert np.all(lam >= 0.0)


class TestInnerMaximize:
    def test_singleton_pool(self, rng):
        pool = small_pool(rng, k=1)
        head = init_classifier(4, 2, seed=0)
        w, adv, _ = inner_maximize(pool, head, 0, AdversaryConfig())
        assert np.array_equal(w.lam, [1.0])
        assert np.array_equal(adv.values, pool.neighbors[0].values)

    def test_linear_loss_hand_pga_step(self):
        # neighbors are basis vectors, so grad wrt lambda equals c=(1,2)
        anchor = emb([0.5, 0.5], sid="a")
        pool = NeighborPool(anchor=anchor,
                            neighbors=[emb([1.0, 0.0]), emb([0.0, 1.0])], radius=1.0)
        c = np.array([1.0, 2.0])
        cfg = AdversaryConfig(K=2, rho=1.0, T=1, eta=1.0)
        w, adv, loss = inner_maximize(pool, None, None, cfg,
                                      loss_fn=lambda v: (float(c @ v), c))
        assert np.allclose(w.lam, [0.0, 1.0], atol=1e-12)
        assert loss == pytest.approx(2.0, abs=1e-12)

    def test_convex_loss_grid_max_at_vertex(self, rng):
        head = init_classifier(4, 3, seed=1)
        for _ in range(20):
            pool = small_pool(rng, k=3, rho=0.8)
            y = int(rng.integers(3))
            V = pool.matrix()

            def loss(lam):
                from swdrso.head import classify_loss
                return classify_loss(V @ lam, y, head)[0]

            _, grid_best = grid_simplex_max(loss, 3, step=0.01)
            vertex_best = max(loss(np.eye(3)[i]) for i in range(3))
            assert abs(grid_best - vertex_best) <= 1e-6

    def test_weights_always_feasible(self, rng):
        head = init_classifier(4, 2, seed=2)
        for _ in range(50):
            pool = small_pool(rng)
            w, _, _ = inner_maximize(pool, head, 0, AdversaryConfig(T=3, eta=0.5))
            assert abs(w.lam.sum() - 1.0) <= 1e-9 and np.all(w.lam >= 0.0)

    def test_rejects_other_modes(self, rng):
        pool = small_pool(rng)
        with pytest.raises(ValueError):
            inner_maximize(pool, None, 0, AdversaryConfig(mode="discrete"))


class TestAdversaryAblation:
    def test_discrete_argmax(self, rng):
        pool = small_pool(rng, k=3)
        fixed = {"n0": 0.3, "n1": 0.9, "n2": 0.1}

        def loss_fn(v):
            for nb in pool.neighbors:
                if np.array_equal(nb.values, v):
                    return fixed[nb.source_id], np.zeros_like(v)
            raise AssertionError("unknown embedding")

        adv, loss = adversary_ablation(pool, None, None,
                                       AdversaryConfig(mode="discrete"), loss_fn=loss_fn)
        assert adv.source_id == "n1" and loss == 0.9

    def test_random_inbatch_draws_from_pool(self, rng):
        pool = small_pool(rng, k=3)
        head = init_classifier(4, 2, seed=3)
        adv, _ = adversary_ablation(pool, head, 0, AdversaryConfig(mode="random_inbatch"),
                                    rng=np.random.default_rng(0))
        assert any(adv is nb for nb in pool.neighbors)

    def test_rcs_zero_rounds_returns_anchor(self, rng):
        pool = small_pool(rng, k=2)
        head = init_classifier(4, 2, seed=4)
        from swdrso.head import classify_loss
        adv, loss = adversary_ablation(pool, head, 0,
                                       AdversaryConfig(mode="rcs", rcs_rounds=1),
                                       corrupt_sample=lambda i: None)
        assert adv is pool.anchor
        assert loss == pytest.approx(classify_loss(pool.anchor.values, 0, head)[0])

    def test_discrete_below_grid_max(self, rng):
        head = init_classifier(4, 3, seed=5)
        from swdrso.head import classify_loss
        for _ in range(20):
            pool = small_pool(rng, k=3)
            y = int(rng.integers(3))
            _, disc = adversary_ablation(pool, head, y, AdversaryConfig(mode="discrete"))
            V = pool.matrix()
            _, grid_best = grid_simplex_max(lambda lam: classify_loss(V @ lam, y, head)[0],
                                            3, step=0.01)
            assert disc <= grid_best + 1e-12


class TestAdversaryConfig:
    def test_invalid_values(self):
        for kwargs in (dict(K=0), dict(T=0), dict(eta=0.0), dict(rho=0.0),
                       dict(mode="nope")):
            with pytest.raises(ValueError):
                AdversaryConfig(**kwargs)
