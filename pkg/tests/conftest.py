import numpy as np
import pytest

from covdetect import model


def make_instance(N=20, Q=2, L=10, M=64, K=4, s2=1.0, g=1.0, seed=0):
    cfg = model.SystemConfig(N=N, Q=Q, L=L, M=M, K=K, sigma_w_sq=s2, g=g)
    return model.generate_instance(cfg, seed)


def desk_instance(seed=0):
    g, s2 = model.cell_edge_link_budget()
    cfg = model.SystemConfig(N=200, Q=2, L=50, M=256, K=20, sigma_w_sq=s2, g=g)
    return model.generate_instance(cfg, seed)


@pytest.fixture
def small():
    return make_instance()


@pytest.fixture
def desk():
    return desk_instance(3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
