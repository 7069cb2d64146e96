"""Invariant suites behind the `check` CLI subcommand.

Each suite exercises one mathematical identity or structural property at desk scale
against the independent oracles and reports pass/fail. The acceptance tests
run the same suites at their full sample counts.
"""

from typing import Callable, List, Tuple

import numpy as np

from .adversary import (NeighborPool, SimplexWeights,
                        build_pool, inner_maximize, mix, project_simplex)
from .encoder import SetEmbedding, encode, encode_backward, init_encoder
from .head import classify_loss, init_classifier
from .measures import (SetInstance, project,
                       sliced_wasserstein, wasserstein_1d)
from .oracle import (brute_wasserstein_1d, check_gap_bound, finite_diff_grad,
                     grid_simplex_max, simplex_grid)
from .rng import child_rng


def _random_set(rng, n, d, sid="s") -> SetInstance:
    return SetInstance(id=sid, elements=rng.standard_normal((n, d)))


def check_embedding_identity(seed=0, trials=200, n=8, d=4, R=6) -> Tuple[bool, str]:
    """||encode(s1) - encode(s2)|| == SW(s1, s2) when n = H, identity featurizer."""
    rng = child_rng(seed, "check-identity")
    enc = init_encoder(d, H=n, R=R, seed=seed, featurizer=False)
    worst = 0.0
    for t in range(trials):
        s1 = _random_set(rng, n, d, f"a{t}")
        s2 = _random_set(rng, n, d, f"b{t}")
        lhs = np.linalg.norm(encode(s1, enc).values - encode(s2, enc).values)
        rhs = sliced_wasserstein(s1, s2, enc.dirs)
        worst = max(worst, abs(lhs - rhs) / max(rhs, 1e-30))
    return worst <= 1e-9, f"max relative error {worst:.3e} over {trials} pairs"


def check_wasserstein_brute(seed=0, trials=500) -> Tuple[bool, str]:
    rng = child_rng(seed, "check-w1d")
    omega = np.array([1.0])
    worst = 0.0
    for t in range(trials):
        n = int(rng.integers(1, 7))
        a = _random_set(rng, n, 1, f"a{t}")
        b = _random_set(rng, n, 1, f"b{t}")
        fast = wasserstein_1d(project(a, omega), project(b, omega))
        brute = brute_wasserstein_1d(a.elements[:, 0], b.elements[:, 0])
        worst = max(worst, abs(fast - brute))
    return worst <= 1e-12, f"max abs error {worst:.3e} over {trials} instances"


def check_simplex_projection(seed=0, trials=200, grid_step=0.001) -> Tuple[bool, str]:
    """Sort-and-threshold projection vs a dense-grid quadratic oracle, K <= 3."""
    rng = child_rng(seed, "check-simplex")
    worst = 0.0
    for t in range(trials):
        k = int(rng.integers(2, 4))
        v = rng.standard_normal(k) * 2.0
        lam = project_simplex(v).lam
        if abs(lam.sum() - 1.0) > 1e-9 or np.any(lam < -1e-9):
            return False, f"infeasible projection at trial {t}"
        grid = simplex_grid(k, grid_step)
        best_grid = grid[np.argmin(np.sum((grid - v) ** 2, axis=1))]
        worst = max(worst, float(np.linalg.norm(lam - best_grid)))
        if np.sum((lam - v) ** 2) > np.min(np.sum((grid - v) ** 2, axis=1)) + 1e-12:
            return False, f"grid point beats projection at trial {t}"
    return worst <= 1e-2, f"max distance to grid argmin {worst:.3e} (grid step {grid_step})"


def _random_pool(rng, m=6, k=3, rho=0.5) -> NeighborPool:
    anchor = SetEmbedding(values=rng.standard_normal(m), source_id="anchor")
    neighbors = []
    for i in range(k):
        direction = rng.standard_normal(m)
        direction /= np.linalg.norm(direction)
        offset = direction * (rho * rng.random())
        neighbors.append(SetEmbedding(values=anchor.values + offset, source_id=f"n{i}"))
    return NeighborPool(anchor=anchor, neighbors=neighbors, radius=rho)


def check_mixture_locality(seed=0, trials=1000) -> Tuple[bool, str]:
    rng = child_rng(seed, "check-locality")
    worst = 0.0
    for _ in range(trials):
        k = int(rng.integers(1, 6))
        pool = _random_pool(rng, m=int(rng.integers(2, 10)), k=k, rho=float(rng.random() + 0.1))
        lam = rng.dirichlet(np.ones(k))
        dist = float(np.linalg.norm(mix(pool, SimplexWeights(lam=lam)).values - pool.anchor.values))
        worst = max(worst, dist - pool.radius)
    return worst <= 1e-9, f"max radius excess {worst:.3e} over {trials} draws"


def _nonlinear_head_loss(head_a, head_b, y):
    """Small two-layer nonlinear scoring head for the bound checks."""
    def phi(v):
        hidden = np.tanh(v @ head_a)
        logits = hidden @ head_b
        shifted = logits - logits.max()
        return float(np.log(np.sum(np.exp(shifted))) - shifted[y])
    return phi


def check_hull_dominates_vertices(seed=0, trials=100) -> Tuple[bool, str]:
    """Grid-approximated barycentric max dominates the vertex max."""
    rng = child_rng(seed, "check-hull")
    m = 5
    for t in range(trials):
        k = int(rng.integers(2, 4))
        pool = _random_pool(rng, m=m, k=k, rho=1.0)
        phi = _nonlinear_head_loss(rng.standard_normal((m, 7)), rng.standard_normal((7, 3)),
                                   int(rng.integers(3)))
        V = pool.matrix()
        l_disc = max(phi(V @ e) for e in np.eye(k))
        _, l_bar = grid_simplex_max(lambda lam: phi(V @ lam), k, step=0.01)
        if l_bar < l_disc - 1e-12:
            return False, f"vertex max exceeds grid max at trial {t}"
    # Convex case: linear head + cross-entropy attains its max at a vertex.
    rng2 = child_rng(seed, "check-hull-convex")
    worst = 0.0
    for t in range(50):
        k = int(rng2.integers(2, 4))
        pool = _random_pool(rng2, m=m, k=k, rho=1.0)
        head = init_classifier(m, 3, seed=seed + t)
        y = int(rng2.integers(3))
        V = pool.matrix()
        loss = lambda lam: classify_loss(V @ lam, y, head)[0]
        l_disc = max(loss(e) for e in np.eye(k))
        _, l_bar = grid_simplex_max(loss, k, step=0.01)
        worst = max(worst, abs(l_bar - l_disc))
    return worst <= 1e-6, f"convex vertex gap {worst:.3e}; subset inequality held on {trials} instances"


def check_gap_bound_suite(seed=0, trials=100) -> Tuple[bool, str]:
    rng = child_rng(seed, "check-gap")
    m = 5
    for t in range(trials):
        k = int(rng.integers(1, 4))
        pool = _random_pool(rng, m=m, k=k, rho=float(rng.random() + 0.2))
        head = init_classifier(m, 3, seed=seed + 31 * t)
        report = check_gap_bound(pool, head, y=int(rng.integers(3)),
                                 sample_count=10_000, seed=seed + t)
        if not report.satisfied:
            return False, (f"violated at trial {t}: gap "
                           f"{report.l_bar_grid - report.l_disc:.3e} > bound {report.bound:.3e}")
    return True, f"satisfied on {trials}/{trials} instances"


def check_quantile_linearity(seed=0, trials=200) -> Tuple[bool, str]:
    """1D rank-wise convex averaging commutes with encoding (n = H)."""
    rng = child_rng(seed, "check-linearity")
    worst = 0.0
    for t in range(trials):
        n = int(rng.integers(2, 9))
        k = int(rng.integers(2, 5))
        enc = init_encoder(1, H=n, R=3, seed=seed + t, featurizer=False)
        sets = [_random_set(rng, n, 1, f"s{t}-{i}") for i in range(k)]
        lam = rng.dirichlet(np.ones(k))
        embs = [encode(s, enc) for s in sets]
        mixed = np.sum([lam[i] * embs[i].values for i in range(k)], axis=0)
        sorted_lists = [np.sort(s.elements[:, 0]) for s in sets]
        avg_set = SetInstance(id="avg", elements=np.sum(
            [lam[i] * sorted_lists[i] for i in range(k)], axis=0)[:, None])
        direct = encode(avg_set, enc).values
        scale = max(float(np.linalg.norm(mixed)), 1e-30)
        worst = max(worst, float(np.linalg.norm(direct - mixed)) / scale)
    return worst <= 1e-9, f"max relative deviation {worst:.3e} over {trials} draws"


def check_gradients(seed=0, trials=50) -> Tuple[bool, str]:
    """Composite featurizer->encode->loss and inner-objective gradients vs FD."""
    rng = child_rng(seed, "check-grad")
    worst = 0.0
    for t in range(trials):
        d_in, d, H, R, C = 3, 4, 3, 2, 3
        enc = init_encoder(d, H, R, seed=seed + t, featurizer=True, d_in=d_in)
        head = init_classifier(R * H, C, seed=seed + t)
        inst = _random_set(rng, int(rng.integers(3, 8)), d_in, f"g{t}")
        y = int(rng.integers(C))

        emb, record = encode(inst, enc, record=True)
        _, grad_v, _ = classify_loss(emb, y, head)
        analytic = encode_backward(record, enc, grad_v)["featurizer"]["weight1"]

        w1 = enc.featurizer.weight1

        def loss_at(w):
            w1[...] = w
            return classify_loss(encode(inst, enc), y, head)[0]

        orig = w1.copy()
        fd = finite_diff_grad(loss_at, orig.copy())
        w1[...] = orig
        denom = max(float(np.linalg.norm(fd)), 1e-10)
        worst = max(worst, float(np.linalg.norm(analytic - fd)) / denom)
    # Inner objective: gradient wrt simplex weights is V^T grad_v.
    rng = child_rng(seed, "check-grad-lambda")
    for t in range(trials):
        m, k, C = 6, 3, 3
        V = rng.standard_normal((m, k))
        head = init_classifier(m, C, seed=seed + 7 * t)
        y = int(rng.integers(C))
        lam = rng.dirichlet(np.ones(k))
        _, grad_v, _ = classify_loss(V @ lam, y, head)
        analytic = V.T @ grad_v
        fd = finite_diff_grad(lambda L: classify_loss(V @ L, y, head)[0], lam.copy())
        denom = max(float(np.linalg.norm(fd)), 1e-10)
        worst = max(worst, float(np.linalg.norm(analytic - fd)) / denom)
    return worst <= 1e-4, f"max relative gradient error {worst:.3e}"


SUITES: List[Tuple[str, Callable]] = [
    ("embedding-distance identity", check_embedding_identity),
    ("1D OT brute-force equivalence", check_wasserstein_brute),
    ("simplex projection vs grid oracle", check_simplex_projection),
    ("locality of convex mixing", check_mixture_locality),
    ("vertex max bounded by hull max", check_hull_dominates_vertices),
    ("Lipschitz gap bound", check_gap_bound_suite),
    ("quantile linearity (1D, n=H)", check_quantile_linearity),
    ("analytic vs finite-difference gradients", check_gradients),
]


def run_all(seed: int = 0) -> List[Tuple[str, bool, str]]:
    results = []
    for name, fn in SUITES:
        ok, detail = fn(seed=seed)
        results.append((name, ok, detail))
    return results
