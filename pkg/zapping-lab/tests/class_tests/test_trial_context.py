import pytest

import constants as C
from helpers import fresh_trial

# test_trial_context.py
# Tests for the TrialContext object


def test_fields():

    # test initialization
    trial, stream = fresh_trial()

    # test fields
    assert trial.model is None
    assert trial.seen_classes is None
    assert len(trial.split.pretrain_classes) == 5
    assert len(trial.split.transfer_classes) == 3
    assert not set(trial.split.pretrain_classes) & \
        set(trial.split.transfer_classes)
    assert trial.record_h == stream.record
    assert trial.event_h == stream.zap

    # test dump
    d = trial.dump()
    assert d['model'] is None
    assert d['split'] == trial.split.dump()
    assert d['config']['method'] == 'asb'


def test_pretrain():
    trial, stream = fresh_trial()
    result = trial.pretrain()
    assert trial.model is result.model
    assert trial.seen_classes == list(trial.split.pretrain_classes)
    assert result.steps == trial.config.outer_steps
    assert len(stream.events) == trial.config.outer_steps
    assert [r.step for r in stream.records] == [2, 4]
    assert all(r.phase == C.Phase.pretrain for r in stream.records)


def test_transfer_needs_model():
    trial, _ = fresh_trial()
    with pytest.raises(ValueError):
        trial.transfer()


def test_play():
    trial, stream = fresh_trial()
    summary = trial.play()
    for key in ('config_hash', 'tag', 'method', 'zap', 'pretrain_lr',
                'transfer_lr', 'dataset_hash', 'split', 'architecture_hash',
                'pretrain_validation_acc', 'pretrain_steps',
                'final_train_acc', 'final_test_acc', 'class_order'):
        assert key in summary
    assert summary['tag'] == 'asb+zap'
    assert sorted(summary['class_order']) == \
        list(trial.split.transfer_classes)
    assert 0.0 <= summary['final_test_acc'] <= 1.0

    transfer = [r for r in stream.records if r.phase == C.Phase.transfer]
    assert [r.classes_seen for r in transfer] == [1, 2, 3]


def test_play_debug():
    trial, stream = fresh_trial(zap='off')
    h = trial.play(debug=True)
    assert isinstance(h, str) and h
    assert not stream.events

    # the stream handlers are restored
    assert trial.record_h == stream.record
