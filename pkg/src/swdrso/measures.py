"""Empirical-measure view of sets and sliced-Wasserstein distances.

A set of element vectors is treated as the uniform empirical measure over its
elements. The 2-Wasserstein distance between two 1D empirical measures has a
closed form through sorted values (quantile functions); the sliced distance is
the root mean square of 1D distances over a fixed bank of projection
directions.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .rng import child_rng

SPLIT_TAGS = ("clean", "mild", "severe", "train")


@dataclass(frozen=True)
class SetInstance:
    """One unordered set of element vectors, optionally labeled."""

    id: str
    elements: np.ndarray  # (n, d), n >= 1
    label: Optional[int] = None
    split_tag: str = "train"

    def __post_init__(self):
        elements = np.asarray(self.elements, dtype=np.float64)
        if elements.ndim != 2 or elements.shape[0] < 1:
            raise ValueError(f"set {self.id!r}: elements must be a non-empty (n, d) array")
        if self.split_tag not in SPLIT_TAGS:
            raise ValueError(f"set {self.id!r}: unknown split_tag {self.split_tag!r}")
        elements.setflags(write=False)
        object.__setattr__(self, "elements", elements)

    @property
    def n(self) -> int:
        return self.elements.shape[0]

    @property
    def dim(self) -> int:
        return self.elements.shape[1]


@dataclass(frozen=True)
class ProjectedMeasure:
    """1D uniform empirical measure: sorted projections along one direction."""

    direction: np.ndarray
    sorted_values: np.ndarray

    def __post_init__(self):
        direction = np.asarray(self.direction, dtype=np.float64)
        values = np.asarray(self.sorted_values, dtype=np.float64)
        if abs(np.linalg.norm(direction) - 1.0) > 1e-12:
            raise ValueError("direction must have unit norm")
        if values.ndim != 1 or values.size < 1:
            raise ValueError("sorted_values must be a non-empty 1D array")
        if np.any(np.diff(values) < 0):
            raise ValueError("sorted_values must be non-decreasing")
        direction.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "direction", direction)
        object.__setattr__(self, "sorted_values", values)

    @property
    def n(self) -> int:
        return self.sorted_values.size


@dataclass(frozen=True)
class DirectionSet:
    """R frozen unit projection directions, reproducible from a seed."""

    directions: np.ndarray  # (R, d)
    seed: int

    def __post_init__(self):
        directions = np.asarray(self.directions, dtype=np.float64)
        if directions.ndim != 2 or directions.shape[0] < 1:
            raise ValueError("directions must be a non-empty (R, d) array")
        norms = np.linalg.norm(directions, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("all directions must have unit norm")
        directions.setflags(write=False)
        object.__setattr__(self, "directions", directions)

    @property
    def count(self) -> int:
        return self.directions.shape[0]

    @property
    def dim(self) -> int:
        return self.directions.shape[1]


def sample_directions(count: int, dim: int, seed: int) -> DirectionSet:
    """Draw `count` i.i.d. normalized standard-normal directions in R^dim.

    Regenerating with the same seed reproduces the directions bit-exactly.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = child_rng(seed, "directions")
    raw = rng.standard_normal((count, dim))
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    # Probability-zero guard: resample any exactly-zero draw deterministically.
    while np.any(norms == 0.0):
        bad = norms[:, 0] == 0.0
        raw[bad] = rng.standard_normal((int(bad.sum()), dim))
        norms = np.linalg.norm(raw, axis=1, keepdims=True)
    return DirectionSet(directions=raw / norms, seed=seed)


def project(instance: SetInstance, direction: np.ndarray) -> ProjectedMeasure:
    """Project a set's elements onto a unit direction, sorted ascending.

    Ties keep original element order (stable sort).
    """
    direction = np.asarray(direction, dtype=np.float64)
    if direction.shape != (instance.dim,):
        raise ValueError(
            f"direction dimension {direction.shape} does not match element dimension {instance.dim}"
        )
    values = instance.elements @ direction
    order = np.argsort(values, kind="stable")
    return ProjectedMeasure(direction=direction, sorted_values=values[order])


def _wasserstein_1d_sorted(a: np.ndarray, b: np.ndarray) -> float:
    n, m = a.size, b.size
    if n == m:
        return float(np.sqrt(np.mean((a - b) ** 2)))
    # Unequal cardinality: exact integral of the squared difference of the two
    # piecewise-constant quantile functions over the merged breakpoints.
    edges = np.union1d(np.arange(1, n) / n, np.arange(1, m) / m)
    edges = np.concatenate(([0.0], edges, [1.0]))
    mids = 0.5 * (edges[:-1] + edges[1:])
    widths = np.diff(edges)
    qa = a[np.minimum((mids * n).astype(np.int64), n - 1)]
    qb = b[np.minimum((mids * m).astype(np.int64), m - 1)]
    return float(np.sqrt(np.sum(widths * (qa - qb) ** 2)))


def wasserstein_1d(a: ProjectedMeasure, b: ProjectedMeasure) -> float:
    """2-Wasserstein distance between two 1D uniform empirical measures."""
    return _wasserstein_1d_sorted(a.sorted_values, b.sorted_values)


def sliced_wasserstein(s1: SetInstance, s2: SetInstance, dirs: DirectionSet) -> float:
    """Monte-Carlo sliced 2-Wasserstein distance over a fixed direction bank."""
    if s1.dim != s2.dim:
        raise ValueError(f"element dimensions differ: {s1.dim} vs {s2.dim}")
    if dirs.count < 1:
        raise ValueError("empty direction set")
    if dirs.dim != s1.dim:
        raise ValueError(f"direction dimension {dirs.dim} does not match element dimension {s1.dim}")
    total = 0.0
    for r in range(dirs.count):
        omega = dirs.directions[r]
        w = _wasserstein_1d_sorted(
            np.sort(s1.elements @ omega, kind="stable"),
            np.sort(s2.elements @ omega, kind="stable"),
        )
        total += w * w
    return float(np.sqrt(total / dirs.count))
