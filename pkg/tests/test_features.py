import math

import numpy as np
import pytest

from paritylab.errors import InvalidInputError
from paritylab.features import make_feature_map, median_bandwidth
from paritylab.net import init_symmetric


def test_rff_self_kernel():
    fm = make_feature_map("gaussian-rff", 10, 2048, {"bandwidth": 1.0}, rng=0)
    X = np.random.default_rng(1).normal(size=(200, 10))
    assert abs(np.mean(np.sum(fm.embed(X) ** 2, axis=1)) - 1.0) < 0.1


def test_rff_cross_kernel():
    N, bw = 4096, 1.3
    fm = make_feature_map("gaussian-rff", 6, N, {"bandwidth": bw}, rng=2)
    g = np.random.default_rng(3)
    x, z = g.normal(size=6) * 0.5, g.normal(size=6) * 0.5
    est = float(fm.embed(x)[0] @ fm.embed(z)[0])
    exact = math.exp(-np.sum((x - z) ** 2) / (2 * bw**2))
    assert abs(est - exact) < 5 / math.sqrt(N)


def test_rff_median_bandwidth():
    probe = np.random.default_rng(4).normal(size=(300, 5))
    fm = make_feature_map("gaussian-rff", 5, 8, {"probe": probe}, rng=0)
    assert fm.params["bandwidth"] == median_bandwidth(probe)
    with pytest.raises(InvalidInputError):
        median_bandwidth(np.ones((4, 3)))


def test_relu_random_zero_input():
    fm = make_feature_map("relu-random", 7, 32, rng=1)
    assert np.all(fm.embed(np.zeros(7)) == 0)


def test_ntk_gates_reproduce_network():
    net = init_symmetric(4, 6, 3, rng=0)
    fm = make_feature_map("ntk-gates", 6, 8 * (6 + 2), {"net": net})
    X = np.random.default_rng(2).choice([-1, 1], size=(20, 6)) / math.sqrt(6)
    phi = fm.embed(X)
    # first block is the activations; <act, u> is the network output (0 at the mirrored init)
    np.testing.assert_allclose(phi[:, :8] @ net.u, 0.0, atol=1e-12)


def test_clamp_and_validation():
    fm = make_feature_map("relu-random", 3, 4, rng=0)
    assert np.all(fm.clamped().embed(np.full((2, 3), 50.0)) <= 1.0)
    with pytest.raises(InvalidInputError):
        fm.embed(np.zeros((2, 4)))
    with pytest.raises(InvalidInputError):
        make_feature_map("bogus", 3, 4)
    with pytest.raises(InvalidInputError):
        make_feature_map("relu-random", 3, 0)
