"""Independent brute-force oracles backing the property and acceptance suites.

Everything here deliberately avoids the production code paths it checks:
exhaustive matchings instead of sorting, a dense simplex grid instead of
projected ascent, and central finite differences instead of the manual
backward passes.
"""

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .adversary import NeighborPool
from .head import ClassifierHead, classify_loss


@dataclass
class GapReport:
    l_disc: float
    l_bar_grid: float
    lipschitz_estimate: float
    rho: float
    bound: float
    satisfied: bool


def brute_wasserstein_1d(a: Sequence[float], b: Sequence[float]) -> float:
    """Minimum over all bijective matchings of sqrt((1/n) sum (a_i - b_pi(i))^2)."""
    a = list(a)
    b = list(b)
    if len(a) != len(b):
        raise ValueError("equal cardinality required")
    n = len(a)
    if n > 6:
        raise ValueError("brute-force oracle limited to n <= 6")
    best = math.inf
    for perm in itertools.permutations(range(n)):
        cost = sum((a[i] - b[perm[i]]) ** 2 for i in range(n)) / n
        best = min(best, cost)
    return math.sqrt(best)


def simplex_grid(k: int, step: float) -> np.ndarray:
    """All points of the regular grid on the simplex, vertices included."""
    if k > 3:
        raise ValueError("grid oracle limited to K <= 3")
    m = int(round(1.0 / step))
    if k == 1:
        return np.array([[1.0]])
    if k == 2:
        xs = np.arange(m + 1) / m
        return np.stack([xs, 1.0 - xs], axis=1)
    points = []
    for i in range(m + 1):
        for j in range(m + 1 - i):
            points.append((i / m, j / m, (m - i - j) / m))
    return np.array(points)


def grid_simplex_max(loss: Callable[[np.ndarray], float], k: int, step: float = 0.01):
    """Max of `loss` over the dense simplex grid. Returns (best point, best value)."""
    grid = simplex_grid(k, step)
    values = [loss(lam) for lam in grid]
    best = int(np.argmax(values))
    return grid[best], float(values[best])


def finite_diff_grad(fn: Callable[[np.ndarray], float], point: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient estimate, coordinate by coordinate."""
    point = np.asarray(point, dtype=np.float64)
    grad = np.zeros_like(point)
    flat = grad.reshape(-1)
    pflat = point.reshape(-1)
    for i in range(pflat.size):
        orig = pflat[i]
        pflat[i] = orig + h
        up = fn(point)
        pflat[i] = orig - h
        down = fn(point)
        pflat[i] = orig
        if not (math.isfinite(up) and math.isfinite(down)):
            raise ValueError("non-finite evaluation in finite differences")
        flat[i] = (up - down) / (2.0 * h)
    return grad


def check_gap_bound(pool: NeighborPool, head: ClassifierHead, y: int,
                    grid_step: float = 0.01, sample_count: int = 10_000,
                    seed: int = 0) -> GapReport:
    """Verify the Lipschitz gap bound between grid and vertex inner maxima.

    The Lipschitz constant is estimated as the max finite-difference slope of
    the composed loss over `sample_count` random pairs in the pool's convex
    hull; underestimating it only makes the check stricter.
    """
    k = pool.size
    if k > 3:
        raise ValueError("gap-bound oracle limited to K <= 3")
    V = pool.matrix()
    phi = lambda lam: classify_loss(V @ lam, y, head)[0]
    l_disc = max(phi(np.eye(k)[i]) for i in range(k))
    if k == 1:
        return GapReport(l_disc=l_disc, l_bar_grid=l_disc, lipschitz_estimate=0.0,
                         rho=pool.radius, bound=1e-6, satisfied=True)
    _, l_bar = grid_simplex_max(phi, k, grid_step)
    rng = np.random.Generator(np.random.Philox(key=[seed, 0x67617062]))
    w = rng.dirichlet(np.ones(k), size=(sample_count, 2))
    lip = 0.0
    for wu, wv in w:
        u, v = V @ wu, V @ wv
        dist = np.linalg.norm(u - v)
        if dist > 1e-12:
            lip = max(lip, abs(classify_loss(u, y, head)[0] - classify_loss(v, y, head)[0]) / dist)
    bound = 2.0 * lip * pool.radius + 1e-6
    gap = l_bar - l_disc
    return GapReport(l_disc=l_disc, l_bar_grid=l_bar, lipschitz_estimate=lip,
                     rho=pool.radius, bound=bound, satisfied=gap <= bound)
