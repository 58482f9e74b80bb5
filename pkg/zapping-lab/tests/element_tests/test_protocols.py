import numpy as np
import pytest

import constants as C
import functional as F
import oracle as O
import protocols as P
from data import DatasetError, EpisodeBatch, SplitPlan, sample_episode
from gradcheck import toy_episode
from helpers import ToyLinearModel, tiny_config, tiny_dataset, tiny_split
from metrics import MetricsStream
from optimizers import AdamState, sgd_step_inplace
from tensor import backward
from utils import spawn_rng
from zapping import zap_iid

# test_protocols.py
# Pre-training and transfer protocols, checked against reductions that have
# a simpler reference


def setup(**overrides):
    config = tiny_config(**overrides)
    dataset = tiny_dataset(config)
    return config, dataset, tiny_split(dataset, config)


def test_asb_without_zap_or_outer_step_is_plain_sgd():
    config, dataset, split = setup(zap='off', outer_lr=0.0, outer_steps=5)
    result = P.pretrain_asb(config, dataset, split)

    # replay the same episodes with per-example SGD only
    model = P.new_model(config, dataset, len(split.pretrain_classes))
    rng = spawn_rng(config.pretrain_seed, 'episodes')
    for _ in range(config.outer_steps):
        episode = sample_episode(dataset, split, config.inner_steps,
                                 config.remember_size, rng)
        for x_i, y_i in zip(episode.x_inner, episode.y_inner):
            loss = F.softmax_cross_entropy(model(x_i[None]), [y_i])
            sgd_step_inplace(model.params, backward(loss, model.params),
                             config.inner_lr)
    for p, q in zip(result.model.params, model.params):
        assert np.array_equal(p.data, q.data)


def test_empty_inner_loop_meta_equals_plain():
    config, dataset, split = setup()
    rng = spawn_rng(0, 'episodes')
    full = sample_episode(dataset, split, 2, 6, rng)
    empty = EpisodeBatch(full.x_inner[:0], full.y_inner[:0], full.x_rand,
                         full.y_rand, full.label)

    results = []
    for meta in (False, True):
        model = P.new_model(config, dataset, len(split.pretrain_classes))
        adam = AdamState(model.params)
        loss = P.asb_episode_update(model, adam, empty, 0.1, 0.01, meta)
        results.append((loss, model.clone_params()))
    (loss_a, a), (loss_b, b) = results
    assert loss_a == loss_b
    for p, q in zip(a, b):
        assert np.array_equal(p, q)


def test_meta_asb_matches_reference():
    rng = spawn_rng(C.TEST_RANDOM_SEED, 'meta-asb')
    model = ToyLinearModel(4, 4, rng)
    start = [p.data.copy() for p in model.params]
    episodes = [toy_episode(rng, k=k) for k in (1, 2, 3, 2)]

    adam = AdamState(model.params)
    for ep in episodes:
        P.asb_episode_update(model, adam, ep, 0.1, 0.05, meta=True)

    expected = O.reference_meta_asb(O.SoftmaxRegressionToy(), start,
                                    episodes, 0.1, 0.05)
    for p, e in zip(model.params, expected):
        assert np.allclose(p.data, e, rtol=1e-8, atol=1e-10)


def test_meta_and_plain_differ():
    rng = spawn_rng(C.TEST_RANDOM_SEED, 'meta-vs-plain')
    episode = toy_episode(rng, k=3)
    finals = []
    for meta in (False, True):
        model = ToyLinearModel(4, 4, spawn_rng(0, 'toy'))
        P.asb_episode_update(model, AdamState(model.params), episode, 0.5,
                             0.01, meta)
        finals.append(model.params[0].data.copy())
    assert not np.allclose(finals[0], finals[1])


def test_evaluate_is_pure():
    config, dataset, split = setup()
    model = P.new_model(config, dataset, len(split.pretrain_classes))
    x = np.concatenate([dataset.train_examples(c)
                        for c in split.pretrain_classes])
    y = np.repeat(np.arange(5), 4)
    before = model.clone_params()
    first = P.evaluate(model, x, y)
    assert first == P.evaluate(model, x, y)
    assert 0.0 <= first[0] <= 1.0
    for p, q in zip(model.params, before):
        assert np.array_equal(p.data, q)
    assert P.evaluate(model, x[:0], y[:0]) == (None, None)


def test_pretrain_asb_stream():
    config, dataset, split = setup(outer_steps=5, eval_every=2)
    stream = MetricsStream()
    result = P.pretrain(config, dataset, split, None, stream.record,
                        stream.zap)
    assert [r.step for r in stream.records] == [2, 4, 5]
    assert [e.step for e in stream.events] == [1, 2, 3, 4, 5]
    assert all(len(e.classes) == 1 for e in stream.events)
    assert len(result.losses) == 5
    assert result.validation_acc == stream.records[-1].test_acc


def test_pretrain_meta_asb_runs():
    config, dataset, split = setup(method='meta_asb', outer_steps=2)
    result = P.pretrain(config, dataset, split)
    assert result.steps == 2
    assert all(np.isfinite(result.losses))


def test_pretrain_iid_stream():
    config, dataset, split = setup(method='iid', zap='iid_cadence',
                                   zap_cadence=2, pretrain_epochs=3)
    stream = MetricsStream()
    result = P.pretrain(config, dataset, split, None, stream.record,
                        stream.zap)
    batches_per_epoch = int(np.ceil(20 / config.batch_size))
    assert result.steps == 3 * batches_per_epoch
    assert [r.step for r in stream.records] == [
        batches_per_epoch * (e + 1) for e in range(3)]
    assert [e.step for e in stream.events] == [0, 2 * batches_per_epoch]
    assert stream.events[0].classes == list(range(5))

    with pytest.raises(ValueError):
        P.pretrain_iid(tiny_config(), dataset, split)
    with pytest.raises(ValueError):
        P.pretrain_asb(config, dataset, split)


def test_zapping_a_converged_model_dips_then_recovers():
    config, dataset, split = setup(method='iid', zap='off', batch_size=4,
                                   pretrain_epochs=30)
    model = P.pretrain_iid(config, dataset, split).model
    x, y = P.pretrain_arrays(dataset, split, 'train')
    converged_acc, converged_loss = P.evaluate(model, x, y)

    # the zap the next epoch starts with, applied by hand
    zapping = config.replace(zap='iid_cadence', zap_k='all', batch_size=2,
                             pretrain_epochs=1, outer_lr=0.02)
    snapshot = model.clone_params()
    zapped = zap_iid(model, zapping.zap_policy(), 0,
                     spawn_rng(config.pretrain_seed, 'zap'))
    assert zapped == list(range(5))
    zapped_acc, zapped_loss = P.evaluate(model, x, y)
    assert zapped_loss > converged_loss
    assert zapped_acc < converged_acc
    model.load_params(snapshot)

    stream = MetricsStream()
    P.pretrain_iid(zapping, dataset, split, model, stream.record, stream.zap)
    assert stream.events[0].step == 0
    assert stream.events[0].classes == zapped
    recovered_acc, recovered_loss = P.evaluate(model, x, y)
    assert recovered_loss < zapped_loss
    assert recovered_acc >= zapped_acc


def test_frozen_transfer_keeps_features():
    config, dataset, split = setup()
    model = P.new_model(config, dataset, 5)
    before = model.clone_params()
    result = P.transfer_sequential(model, config, dataset, split)
    for p, q in zip(result.model.conv_parameters(), before):
        assert np.array_equal(p.data, q)
    for p, q in zip(model.params, before):
        assert np.array_equal(p.data, q)
    assert result.model.fc_weight.shape[0] == 3

    unfrozen = P.transfer_sequential(model, config.replace(freeze=False),
                                     dataset, split)
    assert not np.array_equal(unfrozen.model.conv_parameters()[0].data,
                              before[0])


def test_transfer_sequential_records():
    config, dataset, split = setup(transfer_eval_every=2)
    model = P.new_model(config, dataset, 5)
    stream = MetricsStream()
    result = P.transfer(model, config, dataset, split, None, stream.record)
    assert [r.step for r in result.records] == [2, 3]
    assert [r.classes_seen for r in result.records] == [2, 3]
    assert result.records == stream.records
    assert result.final_test_acc == result.records[-1].test_acc
    assert sorted(result.class_order) == list(split.transfer_classes)


def test_transfer_iid_records():
    config, dataset, split = setup(transfer_mode='iid', transfer_epochs=2,
                                   transfer_batch_size=4,
                                   transfer_eval_every=2)
    model = P.new_model(config, dataset, 5)
    result = P.transfer(model, config, dataset, split)
    steps = [r.step for r in result.records]
    assert steps == [0, 2, 4, 6]
    assert all(r.classes_seen == 3 for r in result.records)
    assert all(r.phase == C.Phase.transfer for r in result.records)


def test_transfer_order():
    config, _, split = setup()
    order = P.transfer_order(config, split)
    assert sorted(order) == list(split.transfer_classes)
    assert order == P.transfer_order(config, split)


def test_transfer_exceptions():
    config, dataset, split = setup()
    model = P.new_model(config, dataset, 5)
    with pytest.raises(DatasetError):
        P.transfer(model, config, dataset, split,
                   seen_classes=[split.transfer_classes[0]])
    empty = SplitPlan(split.pretrain_classes, (), 0)
    with pytest.raises(DatasetError):
        P.transfer(model, config, dataset, empty)
