import os

import numpy as np

import config as cfg
import functional as F
from data import make_split, synth_glyphs
from metrics import MetricsStream, write_summary
from tensor import Tensor
from trial_context import TrialContext

# Helper functions for unit testing

# Small enough for a full pre-train + transfer trial in about a second
TINY_CONFIG = dict(
    dataset='synth', synth_classes=8, synth_per_class=6, image_size=12,
    data_seed=3, n_pretrain_classes=5, n_transfer_classes=3,
    transfer_train=4, transfer_test=2, channels=4, dtype='float64',
    inner_steps=3, remember_size=4, outer_steps=4, eval_every=2,
    pretrain_epochs=2, batch_size=8, transfer_epochs=2,
    transfer_batch_size=4, inner_lr=0.05, outer_lr=0.01, transfer_lr=0.05,
    pretrain_seeds=[0], transfer_seeds=[0])


def tiny_config(**overrides):
    values = dict(TINY_CONFIG)
    values.update(overrides)
    return cfg.from_dict(values)


def tiny_dataset(config=None):
    config = config or tiny_config()
    return synth_glyphs(**config.synth_options())


def tiny_split(dataset, config=None):
    config = config or tiny_config()
    return make_split(dataset, config.n_pretrain_classes,
                      config.n_transfer_classes, config.split_seed,
                      config.transfer_train, config.transfer_test)


def fresh_trial(**overrides):
    """A TrialContext on the tiny synthetic dataset plus its in-memory
    metrics stream."""
    config = tiny_config(**overrides)
    stream = MetricsStream()
    trial = TrialContext(config, tiny_dataset(config), stream.record,
                         stream.zap)
    return (trial, stream)


class ToyLinearModel:
    """Softmax regression with the forward(x, params) calling convention of
    models.Model, for tests that need closed-form oracles."""

    def __init__(self, n_classes, dim, rng):
        self.params = [Tensor(rng.normal(size=(n_classes, dim)),
                              requires_grad=True),
                       Tensor(rng.normal(size=n_classes), requires_grad=True)]

    def forward(self, x, params=None):
        w, b = self.params if params is None else params
        return F.linear(F.flatten(Tensor(np.asarray(x))), w, b)

    __call__ = forward


def write_fixture_trials(directory, finals, pretrain_accs=None, **fields):
    """Planted transfer summaries, one sub-directory per trial."""
    pretrain_accs = pretrain_accs or [0.5] * len(finals)
    for i, (final, pre) in enumerate(zip(finals, pretrain_accs)):
        summary = {
            'phase': 'transfer', 'tag': 'asb', 'method': 'asb', 'zap': 'off',
            'pretrain_lr': 0.01, 'transfer_lr': 0.01,
            'transfer_mode': 'sequential', 'config_hash': 'h{}'.format(i),
            'architecture_hash': 'arch', 'dataset_hash': 'data',
            'pretrain_validation_acc': pre, 'final_test_acc': final,
            'final_train_acc': final
        }
        summary.update(fields)
        write_summary(os.path.join(directory, 'trial{:02d}'.format(i)),
                      summary)


def answer_overrides(pairs):
    """['key=value', ...] from a dict, as the --set option takes them."""
    return ['{}={}'.format(k, v) for k, v in pairs.items()]
