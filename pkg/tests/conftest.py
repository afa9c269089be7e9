import numpy as np
import pytest

from drnvc.rng import RngHub


@pytest.fixture
def hub():
    return RngHub(1234)


@pytest.fixture
def rng(hub):
    return hub.stream("test")


def random_frames(rng: np.random.Generator, n: int, h: int = 64, w: int = 64):
    """Smooth-ish random frames in [0,1] as a (n,1,h,w) tensor."""
    base = rng.uniform(0.0, 1.0, (n, 1, h, w))
    k = np.ones((1, 1, 3, 3)) / 9.0
    from drnvc.layers import conv2d
    return np.clip(conv2d(base, k, np.zeros(1), 1, 1), 0.0, 1.0)
