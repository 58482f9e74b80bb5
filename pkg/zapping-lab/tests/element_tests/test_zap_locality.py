import numpy as np

import constants as C
from models import ArchitectureSpec, build_convnet
from optimizers import AdamState, adam_step
from tensor import Tensor
from utils import spawn_rng
from zapping import ZapPolicy, zap_class, zap_iid

# test_zap_locality.py
# Zapping touches exactly the rows it names, across many random events


def test_zap_class_locality():
    spec = ArchitectureSpec((1, 16, 16), 3, 4, False, 12)
    model = build_convnet(spec, spawn_rng(C.TEST_RANDOM_SEED, 'init'))
    state = AdamState(model.params)
    adam_step(state, model.params,
              [Tensor(np.ones(p.shape)) for p in model.params], 0.01)
    conv = [p.data.copy() for p in model.conv_parameters()]
    conv_moments = [m.copy() for m in state.m[:-2]]
    rng = spawn_rng(C.TEST_RANDOM_SEED, 'zap')
    pick = np.random.default_rng(C.TEST_RANDOM_SEED)
    resampled = []

    for _ in range(C.N_ZAP_EVENTS):
        c = int(pick.integers(12))
        w, b = model.fc_weight.data.copy(), model.fc_bias.data.copy()
        m_w = state.m[-2].copy()
        zap_class(model, c, rng, state)
        others = np.arange(12) != c
        assert np.array_equal(model.fc_weight.data[others], w[others])
        assert np.array_equal(model.fc_bias.data[others], b[others])
        assert np.array_equal(state.m[-2][others], m_w[others])
        assert model.fc_bias.data[c] == 0.0
        assert not np.array_equal(model.fc_weight.data[c], w[c])
        resampled.append(model.fc_weight.data[c].copy())

    for p, q in zip(model.conv_parameters(), conv):
        assert np.array_equal(p.data, q)
    for m, q in zip(state.m[:-2], conv_moments):
        assert np.array_equal(m, q)

    # resampled rows follow the initial distribution
    fan_in = model.fc_weight.shape[1]
    std = np.std(np.concatenate(resampled))
    assert abs(std / np.sqrt(2.0 / fan_in) - 1.0) < 0.02


def test_zap_iid_locality():
    spec = ArchitectureSpec((1, 8, 8), 3, 2, False, 30)
    model = build_convnet(spec, spawn_rng(C.TEST_RANDOM_SEED, 'init'))
    conv = [p.data.copy() for p in model.conv_parameters()]
    rng = spawn_rng(C.TEST_RANDOM_SEED, 'zap')
    policy = ZapPolicy(C.ZapMode.iid_cadence, 'small')
    counts = np.zeros(30, dtype=int)

    for epoch in range(C.N_ZAP_EVENTS // 10):
        w = model.fc_weight.data.copy()
        zapped = zap_iid(model, policy, epoch, rng)
        assert len(zapped) == 3
        counts[zapped] += 1
        changed = np.any(model.fc_weight.data != w, axis=1)
        assert list(np.flatnonzero(changed)) == zapped

    for p, q in zip(model.conv_parameters(), conv):
        assert np.array_equal(p.data, q)

    # every class gets zapped sooner or later
    assert np.all(counts > 0)
