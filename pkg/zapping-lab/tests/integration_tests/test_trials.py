import pytest

import constants as C
import config as cfg
import sweep as S
from helpers import fresh_trial
from metrics import MetricsStream
from stats import compare_groups
from trial_context import TrialContext

# test_trials.py
# Whole trials through every method and transfer protocol


VARIANTS = [
    dict(),
    dict(zap='off'),
    dict(method='meta_asb'),
    dict(method='iid', zap='iid_cadence'),
    dict(method='iid', zap='iid_cadence', zap_k='medium', zap_cadence=2),
    dict(method='iid', zap='off', transfer_mode='iid'),
    dict(transfer_mode='iid', freeze=False),
]


@pytest.mark.parametrize('overrides', VARIANTS)
def test_trial(overrides):
    trial, stream = fresh_trial(**overrides)
    summary = trial.play()
    assert 0.0 <= summary['final_test_acc'] <= 1.0
    assert 0.0 <= summary['pretrain_validation_acc'] <= 1.0
    if trial.config.zap == C.ZapMode.off:
        assert not stream.events
    else:
        assert stream.events


def test_replay_determinism():
    for seed in range(C.N_TRIAL_TESTS):
        hashes = [fresh_trial(pretrain_seed=seed)[0].play(debug=True)
                  for _ in range(2)]
        assert hashes[0] == hashes[1]
    assert fresh_trial(pretrain_seed=0)[0].play(debug=True) != \
        fresh_trial(pretrain_seed=1)[0].play(debug=True)


def skip_test_learnable():
    """Calibration check that the synthetic task is learnable: a 3-block,
    16-channel convnet trained i.i.d. for 20 epochs on 20 classes of 20
    glyphs reaches over 90% validation accuracy."""
    config = cfg.from_dict(dict(
        dataset='synth', synth_classes=20, synth_per_class=20,
        n_pretrain_classes=20, n_transfer_classes=0, method='iid',
        zap='off', pretrain_epochs=20, batch_size=32, outer_lr=1e-3))
    dataset = S.load_dataset(config)
    trial = TrialContext(config, dataset, MetricsStream().record,
                         MetricsStream().zap)
    result = trial.pretrain()
    assert result.validation_acc > 0.9


def skip_test_scaled_ordering(tmp_path):
    """Zapped variants beat their unzapped counterparts in frozen sequential
    transfer on the synthetic desk-scale setup.

    This takes most of an hour on a multi-core machine; run it with
    `pytest -k scaled_ordering` after renaming, or through the sweep
    command with configs/synth-*.json and compare."""
    base = dict(preset='synth-desk', pretrain_seeds=[0, 1, 2, 3, 4],
                transfer_seeds=[0])
    pairs = [
        (dict(method='asb', zap='per_episode_class'),
         dict(method='asb', zap='off')),
        (dict(method='iid', zap='iid_cadence', zap_k='all', zap_cadence=1),
         dict(method='iid', zap='off')),
    ]
    for zapped, plain in pairs:
        groups = {}
        for label, fields in (('zap', zapped), ('plain', plain)):
            config = cfg.from_dict(dict(base, **fields))
            out = str(tmp_path / '{}-{}'.format(fields['method'], label))
            S.sweep_and_select([config], out, workers=cfg.WORKERS)
            groups[label] = S.collect_summaries(out)
        report = compare_groups(groups, min_trials=5)
        means = {r['label']: r['transfer']['mean'] for r in report['rows']}
        assert means['zap'] > means['plain']
        assert report['tests'][0]['p'] < C.P_VALUE_THRESHOLD


def skip_test_scaled_iid_transfer(tmp_path):
    """With five epochs of i.i.d. transfer the zapped variants still come
    out ahead of their unzapped counterparts. Same cost and instructions as
    skip_test_scaled_ordering."""
    base = dict(preset='synth-desk', pretrain_seeds=[0, 1, 2, 3, 4],
                transfer_seeds=[0], transfer_mode='iid', transfer_epochs=5)
    pairs = [
        (dict(method='asb', zap='per_episode_class'),
         dict(method='asb', zap='off')),
        (dict(method='iid', zap='iid_cadence', zap_k='all', zap_cadence=1),
         dict(method='iid', zap='off')),
    ]
    for zapped, plain in pairs:
        groups = {}
        for label, fields in (('zap', zapped), ('plain', plain)):
            config = cfg.from_dict(dict(base, **fields))
            out = str(tmp_path / '{}-{}'.format(fields['method'], label))
            S.sweep_and_select([config], out, workers=cfg.WORKERS)
            groups[label] = S.collect_summaries(out)
        report = compare_groups(groups, min_trials=5)
        means = {r['label']: r['transfer']['mean'] for r in report['rows']}
        assert means['zap'] >= means['plain']
        assert report['tests'][0]['p'] < C.P_VALUE_THRESHOLD
