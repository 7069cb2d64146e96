import numpy as np
import pytest

from swdrso.measures import SetInstance


def make_set(elements, sid="s", label=None, split_tag="train"):
    return SetInstance(id=sid, elements=np.asarray(elements, dtype=np.float64),
                       label=label, split_tag=split_tag)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
