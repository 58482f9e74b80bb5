import numpy as np
import pytest

import constants as C
from models import ArchitectureSpec, build_convnet
from optimizers import AdamState, adam_step
from tensor import Tensor
from utils import spawn_rng
from zapping import ZapPolicy, zap_class, zap_iid

# test_zapping.py
# Tests for the ZapPolicy object and zap operations


def head_model(num_classes=20, seed=0):
    spec = ArchitectureSpec((1, 8, 8), 3, 2, False, num_classes)
    return build_convnet(spec, spawn_rng(seed, 'init'))


def test_resolve_k():
    policy = ZapPolicy(C.ZapMode.iid_cadence)
    assert policy.resolve_k(20) == 20
    assert ZapPolicy(C.ZapMode.iid_cadence, 'small').resolve_k(20) == 2
    assert ZapPolicy(C.ZapMode.iid_cadence, 'medium').resolve_k(20) == 10
    assert ZapPolicy(C.ZapMode.iid_cadence, 'large').resolve_k(20) == 18
    assert ZapPolicy(C.ZapMode.iid_cadence, 0.25).resolve_k(20) == 5
    assert ZapPolicy(C.ZapMode.iid_cadence, 1.0).resolve_k(20) == 20
    assert ZapPolicy(C.ZapMode.iid_cadence, 3).resolve_k(20) == 3
    assert ZapPolicy(C.ZapMode.iid_cadence, 0).resolve_k(20) == 0

    # small fractions still zap one class
    assert ZapPolicy(C.ZapMode.iid_cadence, 'small').resolve_k(3) == 1


def test_exceptions():
    with pytest.raises(ValueError):
        ZapPolicy(C.ZapMode.iid_cadence, 21).resolve_k(20)
    with pytest.raises(ValueError):
        ZapPolicy(C.ZapMode.iid_cadence, -1).resolve_k(20)
    with pytest.raises(ValueError):
        ZapPolicy(C.ZapMode.iid_cadence, 'huge').resolve_k(20)
    with pytest.raises(ValueError):
        ZapPolicy(C.ZapMode.iid_cadence, 1.5).resolve_k(20)
    with pytest.raises(ValueError):
        ZapPolicy(C.ZapMode.iid_cadence, cadence_epochs=0)

    model = head_model()
    with pytest.raises(IndexError):
        zap_class(model, 20, spawn_rng(0, 'zap'))
    with pytest.raises(ValueError):
        zap_iid(model, ZapPolicy(C.ZapMode.off), 0, spawn_rng(0, 'zap'))


def test_zap_class():
    model = head_model()
    model.fc_bias.data[:] = 1.0
    before = model.clone_params()
    zap_class(model, 7, spawn_rng(0, 'zap'))

    w, b = model.fc_weight.data, model.fc_bias.data
    assert not np.array_equal(w[7], before[-2][7])
    assert b[7] == 0.0
    others = np.arange(20) != 7
    assert np.array_equal(w[others], before[-2][others])
    assert np.array_equal(b[others], before[-1][others])
    for p, q in zip(model.conv_parameters(), before):
        assert np.array_equal(p.data, q)


def test_zap_class_changes_one_logit():
    model = head_model()
    model.fc_bias.data[:] = 1.0
    x = np.random.default_rng(C.TEST_RANDOM_SEED).uniform(size=(6, 1, 8, 8))
    before = model(x).data
    zap_class(model, 7, spawn_rng(0, 'zap'))
    after = model(x).data

    others = np.arange(20) != 7
    assert np.array_equal(after[:, others], before[:, others])
    assert np.all(after[:, 7] != before[:, 7])


def test_zap_class_resets_optimizer_rows():
    model = head_model()
    state = AdamState(model.params)
    adam_step(state, model.params,
              [Tensor(np.ones(p.shape)) for p in model.params], 0.01)
    zap_class(model, 3, spawn_rng(0, 'zap'), state)
    w, b = model.index_of('fc.weight'), model.index_of('fc.bias')
    assert np.array_equal(state.m[w][3], np.zeros(state.m[w].shape[1]))
    assert state.v[b][3] == 0.0
    assert np.all(state.m[w][4] != 0)
    assert np.all(state.m[0] != 0)


def test_zap_iid():
    for i in range(C.N_ELEMENT_TESTS):
        model = head_model()
        before = model.fc_weight.data.copy()
        policy = ZapPolicy(C.ZapMode.iid_cadence, 'medium')
        zapped = zap_iid(model, policy, 0, spawn_rng(i, 'zap'))
        assert len(zapped) == 10
        assert zapped == sorted(set(zapped))
        changed = [c for c in range(20)
                   if not np.array_equal(before[c], model.fc_weight.data[c])]
        assert changed == zapped


def test_zap_iid_cadence():
    model = head_model()
    policy = ZapPolicy(C.ZapMode.iid_cadence, 'all', cadence_epochs=3)
    rng = spawn_rng(0, 'zap')
    fired = [e for e in range(7) if zap_iid(model, policy, e, rng)]
    assert fired == [0, 3, 6]
    assert zap_iid(model, policy, 0, rng) == list(range(20))


def test_dump():
    d = ZapPolicy(C.ZapMode.iid_cadence, 'small', 2, False).dump()
    assert d == {'mode': 'iid_cadence', 'k_classes': 'small',
                 'cadence_epochs': 2, 'reset_optimizer_state': False}


def test_zap_iid_replays():
    policy = ZapPolicy(C.ZapMode.iid_cadence, 5)
    picks = [zap_iid(head_model(10), policy, 0, spawn_rng(9, 'zap'))
             for _ in range(2)]
    assert len(picks[0]) == 5
    assert picks[0] == picks[1]
