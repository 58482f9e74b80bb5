import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

import constants as C
import data as D
from models import ARCHITECTURES, preset_architecture
from utils import make_hash_sha256
from zapping import ZapPolicy

# config.py
# Experiment configuration: one flat dataclass, named presets and JSON files.

logger = logging.getLogger(__name__)

# Dataset root and parallel trial workers
DATA_ROOT = os.getenv('ZAP_DATA_ROOT', 'data')
WORKERS = int(os.getenv('ZAP_WORKERS', os.cpu_count() or 1))


class ConfigError(ValueError):
    pass


ENUM_FIELDS = {
    'method': C.Method,
    'zap': C.ZapMode,
    'transfer_mode': C.TransferMode,
}


@dataclass
class ExperimentConfig:
    preset: str = None

    # Data
    dataset: str = 'synth'
    synth_classes: int = 70
    synth_per_class: int = 20
    image_size: int = 28
    data_seed: int = 7
    n_train: int = None
    n_pretrain_classes: int = 50
    n_transfer_classes: int = 20
    transfer_train: int = 15
    transfer_test: int = 5
    split_seed: int = 0

    # Architecture
    architecture: str = 'convnet3-28'
    channels: int = 16
    dtype: str = 'float32'

    # Pre-training
    method: C.Method = C.Method.asb
    zap: C.ZapMode = C.ZapMode.per_episode_class
    zap_k: object = 'all'
    zap_cadence: int = 1
    reset_optimizer_state: bool = True
    inner_lr: float = 0.01
    outer_lr: float = 0.001
    inner_steps: int = 10
    remember_size: int = 32
    outer_steps: int = 2000
    pretrain_epochs: int = 20
    batch_size: int = 256
    eval_every: int = 500

    # Transfer
    transfer_mode: C.TransferMode = C.TransferMode.sequential
    freeze: bool = True
    transfer_lr: float = 0.01
    transfer_epochs: int = 5
    transfer_batch_size: int = 32
    transfer_eval_every: int = 1

    # Seeds
    pretrain_seed: int = 0
    transfer_seed: int = 0

    # Sweep grids; empty means "the configured value only"
    pretrain_lrs: list = field(default_factory=list)
    transfer_lrs: list = field(default_factory=list)
    pretrain_seeds: list = field(default_factory=lambda: list(
        range(C.N_PRETRAIN_SEEDS)))
    transfer_seeds: list = field(default_factory=lambda: list(
        range(C.N_TRANSFER_SEEDS)))

    def __post_init__(self):
        self.validate()

    def validate(self):
        def fail(name, message):
            raise ConfigError("{}: {}".format(name, message))

        for name, enum in ENUM_FIELDS.items():
            value = getattr(self, name)
            if isinstance(value, str):
                if value not in enum.__members__:
                    fail(name, "unknown {} '{}' (expected one of {})".format(
                        name.replace('_', ' '), value,
                        ', '.join(enum.__members__)))
                setattr(self, name, enum[value])
            elif not isinstance(value, enum):
                fail(name, "expected a string, got {!r}".format(value))

        if self.dataset not in ('synth',) + tuple(D.DATASET_PRESETS):
            fail('dataset', "unknown dataset preset '{}'".format(self.dataset))
        if self.architecture not in ARCHITECTURES:
            fail('architecture', "unknown architecture preset '{}'".format(
                self.architecture))
        if self.dtype not in ('float32', 'float64'):
            fail('dtype', "must be float32 or float64")

        positive = ['synth_classes', 'synth_per_class', 'image_size',
                    'channels', 'inner_steps', 'remember_size', 'batch_size',
                    'eval_every', 'zap_cadence', 'transfer_batch_size',
                    'transfer_eval_every', 'transfer_train']
        for name in positive:
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                fail(name, "must be a positive integer, got {!r}".format(
                    value))
        non_negative = ['outer_steps', 'pretrain_epochs', 'transfer_epochs',
                        'n_pretrain_classes', 'n_transfer_classes']
        for name in non_negative:
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 0:
                fail(name, "must be a non-negative integer, got {!r}".format(
                    value))
        for name in ('inner_lr', 'outer_lr', 'transfer_lr'):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or value < 0:
                fail(name, "must be a non-negative number, got {!r}".format(
                    value))
        if self.synth_per_class < 2:
            fail('synth_per_class', "needs at least 2 examples per class")

        # Zap mode must fit the method
        if self.method == C.Method.iid and \
                self.zap == C.ZapMode.per_episode_class:
            fail('zap', "per_episode_class zapping needs an ASB method")
        if self.method != C.Method.iid and self.zap == C.ZapMode.iid_cadence:
            fail('zap', "iid_cadence zapping needs method iid")
        if self.zap == C.ZapMode.iid_cadence:
            try:
                self.zap_policy().resolve_k(max(self.n_pretrain_classes, 1))
            except (TypeError, ValueError) as e:
                fail('zap_k', str(e))

        for name in ('pretrain_lrs', 'transfer_lrs'):
            values = getattr(self, name)
            if not isinstance(values, list) or any(
                    not isinstance(v, (int, float)) or v < 0 for v in values):
                fail(name, "must be a list of non-negative numbers")
        for name in ('pretrain_seeds', 'transfer_seeds'):
            values = getattr(self, name)
            if not isinstance(values, list) or not values or any(
                    not isinstance(v, int) for v in values):
                fail(name, "must be a nonempty list of integers")

    @property
    def meta(self):
        return self.method == C.Method.meta_asb

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    def zap_policy(self):
        return ZapPolicy(self.zap, self.zap_k, self.zap_cadence,
                         self.reset_optimizer_state)

    def architecture_spec(self, num_classes, input_shape=None):
        return preset_architecture(self.architecture, num_classes,
                                   self.channels, input_shape)

    def pretrain_lr_field(self):
        """The learning rate a pre-training sweep varies."""
        return 'outer_lr' if self.method == C.Method.iid else 'inner_lr'

    def pretrain_lr(self):
        return getattr(self, self.pretrain_lr_field())

    def synth_options(self):
        return {'n_classes': self.synth_classes,
                'n_per_class': self.synth_per_class,
                'image_size': self.image_size, 'seed': self.data_seed}

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def dump(self):
        d = dataclasses.asdict(self)
        for name in ENUM_FIELDS:
            d[name] = getattr(self, name).name
        return d

    def digest(self):
        return make_hash_sha256(self.dump())

    def tag(self):
        """Short label of the pre-training variant, e.g. asb+zap."""
        zapped = '+zap' if self.zap != C.ZapMode.off else ''
        return '{}{}'.format(self.method.name, zapped)


PRESETS = {
    'omniglot-asb': dict(
        dataset='omniglot', architecture='convnet3-28', channels=256,
        dtype='float32', n_pretrain_classes=1000, n_transfer_classes=600,
        transfer_train=15, transfer_test=5, method='asb',
        zap='per_episode_class', inner_steps=20, remember_size=64,
        outer_steps=9000, eval_every=1000, transfer_eval_every=50,
        pretrain_lrs=list(C.PRETRAIN_LR_GRID),
        transfer_lrs=list(C.TRANSFER_LR_GRID)),
    'omniglot-meta-asb': dict(
        dataset='omniglot', architecture='convnet3-28', channels=256,
        dtype='float32', n_pretrain_classes=1000, n_transfer_classes=600,
        transfer_train=15, transfer_test=5, method='meta_asb',
        zap='per_episode_class', inner_steps=20, remember_size=64,
        outer_steps=25000, eval_every=2500, transfer_eval_every=50,
        pretrain_lrs=list(C.PRETRAIN_LR_GRID),
        transfer_lrs=list(C.TRANSFER_LR_GRID)),
    'omniglot-iid': dict(
        dataset='omniglot', architecture='convnet3-28', channels=256,
        dtype='float32', n_pretrain_classes=1000, n_transfer_classes=600,
        transfer_train=15, transfer_test=5, method='iid', zap='iid_cadence',
        zap_k='all', zap_cadence=1, outer_lr=1e-3, pretrain_epochs=30,
        batch_size=256, transfer_eval_every=50, pretrain_lrs=[3e-4, 1e-3],
        transfer_lrs=list(C.TRANSFER_LR_GRID)),
    'mini-imagenet-asb': dict(
        dataset='mini-imagenet', architecture='convnet4-84', channels=256,
        dtype='float32', n_pretrain_classes=80, n_transfer_classes=20,
        transfer_train=30, transfer_test=100, method='asb',
        zap='per_episode_class', inner_steps=20, remember_size=100,
        outer_steps=9000, eval_every=1000, transfer_eval_every=1,
        pretrain_lrs=list(C.PRETRAIN_LR_GRID),
        transfer_lrs=list(C.TRANSFER_LR_GRID)),
    'mini-imagenet-iid': dict(
        dataset='mini-imagenet', architecture='convnet4-84', channels=256,
        dtype='float32', n_pretrain_classes=80, n_transfer_classes=20,
        transfer_train=30, transfer_test=100, method='iid',
        zap='iid_cadence', zap_k='all', zap_cadence=1, outer_lr=1e-3,
        pretrain_epochs=30, batch_size=256, transfer_eval_every=1,
        pretrain_lrs=[3e-4, 1e-3], transfer_lrs=list(C.TRANSFER_LR_GRID)),
    'synth-desk': dict(
        dataset='synth', synth_classes=70, synth_per_class=20,
        image_size=28, architecture='convnet3-28', channels=16,
        dtype='float32', n_pretrain_classes=50, n_transfer_classes=20,
        transfer_train=15, transfer_test=5, method='asb',
        zap='per_episode_class', inner_steps=10, remember_size=32,
        outer_steps=2000, eval_every=500, transfer_eval_every=1,
        pretrain_seeds=[0, 1, 2, 3, 4], transfer_seeds=[0]),
}


def _field_names():
    return {f.name for f in dataclasses.fields(ExperimentConfig)}


def from_dict(d):
    """Build a config from a dict; a 'preset' key is applied first."""
    d = dict(d)
    unknown = sorted(set(d) - _field_names())
    if unknown:
        raise ConfigError("{}: unknown field".format(unknown[0]))
    values = {}
    preset = d.get('preset')
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError("preset: unknown preset '{}' (expected one of "
                              "{})".format(preset, ', '.join(sorted(PRESETS))))
        values.update(PRESETS[preset])
    values.update(d)
    try:
        return ExperimentConfig(**values)
    except TypeError as e:
        raise ConfigError("config: {}".format(e))


def parse_override(text):
    """'key=value' with a JSON value, or a bare string."""
    if '=' not in text:
        raise ConfigError("{}: overrides take the form key=value".format(
            text))
    key, raw = text.split('=', 1)
    key = key.strip()
    if key not in _field_names():
        raise ConfigError("{}: unknown field".format(key))
    try:
        value = json.loads(raw)
    except ValueError:
        value = raw
    return key, value


def load_config(path=None, overrides=()):
    """File fields over preset values, then key=value overrides."""
    d = {}
    if path is not None:
        try:
            with open(path) as f:
                d = json.load(f)
        except OSError as e:
            raise ConfigError("{}: cannot read config ({})".format(
                path, e.strerror))
        except ValueError as e:
            raise ConfigError("{}: not valid JSON ({})".format(path, e))
        if not isinstance(d, dict):
            raise ConfigError("{}: a config file holds one object".format(
                path))
    for text in overrides:
        key, value = parse_override(text)
        d[key] = value
    config = from_dict(d)
    logger.debug("resolved config %s", config.digest())
    return config
