import numpy as np
import pytest
from hypothesis import strategies as st

from pmm.core import PmmModel
from pmm.zoo import RelatedChainsParams, build_related_chains

DISPLAY_PARAMS = RelatedChainsParams(p=0.55, q=0.8, lambda1=0.52, lambda2=0.8, mu1=0.6, mu2=0.9)
PATTERN_PARAMS = RelatedChainsParams(p=6 / 7, q=8 / 35, lambda1=0.9, lambda2=0.2, mu1=0.8, mu2=0.1)
REVERSIBLE_PARAMS = RelatedChainsParams(p=0.55, q=0.8, lambda1=0.3, lambda2=0.65, mu1=0.446875, mu2=169 / 190)


def random_model(rng: np.random.Generator, nx: int, ny: int, sparsity: float = 0.3) -> PmmModel:
    """Random full-product model; zeros are sprinkled but every row keeps mass."""
    size = nx * ny
    k = rng.random((size, size)) ** 2
    k[rng.random(k.shape) < sparsity] = 0.0
    k[np.arange(size), rng.integers(0, size, size)] += 0.05
    k /= k.sum(axis=1, keepdims=True)
    init = rng.random(size) + 0.01
    init /= init.sum()
    return PmmModel.full([f"x{i}" for i in range(nx)], [f"y{i}" for i in range(ny)], init, k)


@st.composite
def small_models(draw, max_states: int = 6, min_y: int = 1):
    shapes = [(nx, ny) for nx in range(1, 4) for ny in range(min_y, 4) if nx * ny <= max_states]
    nx, ny = draw(st.sampled_from(shapes))
    seed = draw(st.integers(0, 2**32 - 1))
    sparsity = draw(st.sampled_from([0.0, 0.3, 0.5]))
    return random_model(np.random.default_rng(seed), nx, ny, sparsity)


@pytest.fixture
def display_model():
    return build_related_chains(DISPLAY_PARAMS)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
