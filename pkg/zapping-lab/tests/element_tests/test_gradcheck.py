import numpy as np
import pytest

import constants as C
import gradcheck as G
import oracle as O
from utils import spawn_rng

# test_gradcheck.py
# Engine gradients and meta-gradients against the independent oracles


@pytest.mark.parametrize('suite', sorted(G.SUITES))
def test_suite(suite):
    results = G.run_suites([suite])
    assert results
    for r in results:
        assert r.passed, r.dump()


def test_check_result():
    r = G.check_gradient('exp', lambda x: x.exp().sum(), [np.zeros(3)])
    assert r.passed
    assert r.error < 1e-8
    bad = G.CheckResult('bad', 0.5, G.GRAD_TOL)
    assert not bad.passed
    assert bad.dump()['passed'] is False


def test_meta_gradient_differs_from_first_order():
    rng = spawn_rng(C.TEST_RANDOM_SEED, 'meta-vs-first-order')
    params = [rng.normal(size=(4, 4)), rng.normal(size=4)]
    episode = G.toy_episode(rng, k=3)
    meta = G.unrolled_meta_gradient(params, G.linear_forward, episode, 3, 0.5)

    # first-order approximation: the outer gradient at the adapted weights
    toy = O.SoftmaxRegressionToy()
    theta = [p.copy() for p in params]
    for k in range(3):
        g = toy.grad(theta, episode.x_inner[k:k + 1],
                     episode.y_inner[k:k + 1])
        theta = [t - 0.5 * gi for t, gi in zip(theta, g)]
    first_order = toy.grad(theta, episode.x_outer, episode.y_outer)
    assert O.FiniteDiffSpec().relative_error(meta, first_order) > 1e-3


def test_unknown_suite():
    with pytest.raises(ValueError):
        G.run_suites(['nope'])


def test_quadratic_closed_form():
    assert np.isclose(G.quadratic_meta_gradient(2.0, 0.1, 1), 1.62)
