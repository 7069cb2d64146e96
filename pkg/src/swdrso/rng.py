"""Deterministic random streams.

A single master seed drives the whole pipeline. Each stochastic consumer
(direction sampling, reference init, batching, corruption, ...) gets its own
labeled child stream so that adding a consumer never perturbs the others.
Streams are backed by the counter-based Philox generator, which is bit-exact
across platforms.
"""

import hashlib

import numpy as np


def _label_key(label: str) -> int:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def child_rng(seed: int, label: str) -> np.random.Generator:
    """Generator for the stream `label` derived from the master `seed`."""
    return np.random.Generator(np.random.Philox(key=[seed & 0xFFFFFFFFFFFFFFFF, _label_key(label)]))
