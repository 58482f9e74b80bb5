import json
import logging
from dataclasses import dataclass, asdict

import numpy as np

import constants as C
import functional as F
from tensor import Tensor
from utils import make_hash_sha256

# models.py
# Implements the convolutional classifier and its [conv, fc] partition.

logger = logging.getLogger(__name__)


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class ArchitectureSpec:
    input_shape: tuple = (1, 28, 28)
    num_blocks: int = 3
    channels: int = 256
    final_pool: bool = False
    num_classes: int = 1000

    def __post_init__(self):
        object.__setattr__(self, 'input_shape',
                           tuple(int(s) for s in self.input_shape))
        if len(self.input_shape) != 3:
            raise SpecError("input_shape must be (channels, H, W)")
        if self.num_blocks not in (3, 4):
            raise SpecError("num_blocks must be 3 or 4, got {}".format(
                self.num_blocks))
        if self.channels < 1 or self.num_classes < 1:
            raise SpecError("channels and num_classes must be positive")
        self.feature_shape()

    def pools(self):
        """Which blocks end with a max pool."""
        return [b < self.num_blocks - 1 or self.final_pool
                for b in range(self.num_blocks)]

    def feature_shape(self):
        _, h, w = self.input_shape
        for pooled in self.pools():
            if pooled:
                h, w = h // C.POOL_SIZE, w // C.POOL_SIZE
            if h < 1 or w < 1:
                raise SpecError("input {} collapses below 1x1 after {} blocks"
                                .format(self.input_shape, self.num_blocks))
        return (self.channels, h, w)

    def feature_dim(self):
        return int(np.prod(self.feature_shape()))

    def with_classes(self, num_classes):
        return ArchitectureSpec(self.input_shape, self.num_blocks,
                                self.channels, self.final_pool, num_classes)

    def dump(self):
        d = asdict(self)
        d['input_shape'] = list(self.input_shape)
        return d

    def digest(self):
        """Hash of everything but the head width."""
        d = self.dump()
        d.pop('num_classes')
        return make_hash_sha256(d)


# Presets: 28x28 gray uses 3 blocks and no final pool; 84x84 rgb uses 4
ARCHITECTURES = {
    'convnet3-28': dict(input_shape=(1, 28, 28), num_blocks=3,
                        final_pool=False),
    'convnet4-84': dict(input_shape=(3, 84, 84), num_blocks=4,
                        final_pool=True),
}


def preset_architecture(name, num_classes, channels=256, input_shape=None):
    if name not in ARCHITECTURES:
        raise SpecError("unknown architecture preset '{}'".format(name))
    kwargs = dict(ARCHITECTURES[name])
    if input_shape is not None:
        kwargs['input_shape'] = tuple(input_shape)
    return ArchitectureSpec(channels=channels, num_classes=num_classes,
                            **kwargs)


def kaiming_normal(shape, fan_in, rng, dtype=np.float64):
    std = np.sqrt(2.0 / fan_in)
    return rng.normal(0.0, std, size=shape).astype(dtype, copy=False)


class Model:
    """
    A convnet with named parameters, each labelled conv or fc.
    """

    def __init__(self, spec, names, params, labels):
        if not (len(names) == len(params) == len(labels)):
            raise SpecError("names, params and labels differ in length")
        fc = [n for n, lab in zip(names, labels) if lab == C.Partition.fc]
        if fc != ['fc.weight', 'fc.bias']:
            raise SpecError("the head must be exactly fc.weight and fc.bias")
        self.spec = spec
        self.names = list(names)
        self.params = list(params)
        self.labels = list(labels)
        self._check_shapes([p.data for p in self.params])

    def _expected_shapes(self):
        shapes = []
        c_in = self.spec.input_shape[0]
        for _ in range(self.spec.num_blocks):
            shapes.append((self.spec.channels, c_in,
                           C.KERNEL_SIZE, C.KERNEL_SIZE))
            c_in = self.spec.channels
        shapes.append((self.spec.num_classes, self.spec.feature_dim()))
        shapes.append((self.spec.num_classes,))
        return shapes

    def _check_shapes(self, arrays):
        expected = self._expected_shapes()
        if len(arrays) != len(expected):
            raise SpecError("expected {} parameters, got {}".format(
                len(expected), len(arrays)))
        for name, arr, shape in zip(self.names, arrays, expected):
            if tuple(arr.shape) != shape:
                raise SpecError("{} has shape {}, expected {}".format(
                    name, tuple(arr.shape), shape))

    @property
    def dtype(self):
        return self.params[0].dtype

    @property
    def fc_weight(self):
        return self.params[self.index_of('fc.weight')]

    @property
    def fc_bias(self):
        return self.params[self.index_of('fc.bias')]

    def index_of(self, name):
        return self.names.index(name)

    def parameters(self):
        return list(self.params)

    def conv_parameters(self):
        return [p for p, lab in zip(self.params, self.labels)
                if lab == C.Partition.conv]

    def fc_parameters(self):
        return [p for p, lab in zip(self.params, self.labels)
                if lab == C.Partition.fc]

    def num_parameters(self):
        return sum(p.size for p in self.params)

    def forward(self, batch, params=None):
        """Logits for a batch; params overrides the stored parameters
        (functional call, used by the unrolled inner loop)."""
        params = self.params if params is None else list(params)
        if not isinstance(batch, Tensor):
            batch = Tensor(np.asarray(batch, dtype=self.dtype))
        if batch.ndim != 4 or tuple(batch.shape[1:]) != self.spec.input_shape:
            raise SpecError("batch shape {} does not match input {}".format(
                batch.shape, self.spec.input_shape))
        x = batch
        for weight, pooled in zip(params, self.spec.pools()):
            x = F.relu(F.instance_norm(F.conv2d(x, weight)))
            if pooled:
                x = F.maxpool2d(x)
        weight, bias = params[-2], params[-1]
        return F.linear(F.flatten(x), weight, bias)

    __call__ = forward

    def clone_params(self):
        return [p.data.copy() for p in self.params]

    def load_params(self, snapshot):
        snapshot = [np.asarray(s) for s in snapshot]
        self._check_shapes(snapshot)
        for p, s in zip(self.params, snapshot):
            p.data = s.astype(p.dtype, copy=True)

    def with_new_head(self, num_classes, rng):
        """A copy of this model whose fc layer is freshly initialised."""
        spec = self.spec.with_classes(num_classes)
        params = [Tensor(p.data.copy(), requires_grad=True)
                  for p in self.conv_parameters()]
        fan_in = spec.feature_dim()
        params.append(Tensor(kaiming_normal((num_classes, fan_in), fan_in,
                                            rng, self.dtype),
                             requires_grad=True))
        params.append(Tensor(np.zeros(num_classes, dtype=self.dtype),
                             requires_grad=True))
        return Model(spec, self.names, params, self.labels)

    def dump(self):
        return {
            'spec': self.spec.dump(),
            'names': self.names,
            'labels': [lab.name for lab in self.labels],
            'dtype': str(self.dtype),
            'num_parameters': self.num_parameters()
        }


def build_convnet(spec, rng, dtype=np.float64):
    """Kaiming-Normal weights, zero fc bias. Conv layers carry no bias:
    instance norm removes any per-channel constant."""
    names, params, labels = [], [], []
    c_in = spec.input_shape[0]
    for b in range(spec.num_blocks):
        fan_in = c_in * C.KERNEL_SIZE * C.KERNEL_SIZE
        shape = (spec.channels, c_in, C.KERNEL_SIZE, C.KERNEL_SIZE)
        names.append('conv{}.weight'.format(b))
        params.append(kaiming_normal(shape, fan_in, rng, dtype))
        labels.append(C.Partition.conv)
        c_in = spec.channels
    fan_in = spec.feature_dim()
    names += ['fc.weight', 'fc.bias']
    params.append(kaiming_normal((spec.num_classes, fan_in), fan_in, rng,
                                 dtype))
    params.append(np.zeros(spec.num_classes, dtype=dtype))
    labels += [C.Partition.fc, C.Partition.fc]
    tensors = [Tensor(p, requires_grad=True) for p in params]
    logger.debug("built convnet %s with %d parameters", spec.dump(),
                 sum(p.size for p in params))
    return Model(spec, names, tensors, labels)


def save_checkpoint(model, path, provenance=None):
    """Write parameters plus a JSON description into one .npz container."""
    meta = model.dump()
    meta['provenance'] = provenance or {}
    arrays = {name: p.data for name, p in zip(model.names, model.params)}
    with open(path, 'wb') as f:
        np.savez(f, __meta__=np.array(json.dumps(meta, sort_keys=True)),
                 **arrays)


def load_checkpoint(path):
    """Returns (model, meta)."""
    with np.load(path, allow_pickle=False) as archive:
        if '__meta__' not in archive.files:
            raise SpecError("{} is not a checkpoint".format(path))
        meta = json.loads(str(archive['__meta__']))
        spec_d = dict(meta['spec'])
        spec_d['input_shape'] = tuple(spec_d['input_shape'])
        spec = ArchitectureSpec(**spec_d)
        params = [Tensor(archive[name].copy(), requires_grad=True)
                  for name in meta['names']]
    labels = [C.Partition[lab] for lab in meta['labels']]
    return Model(spec, meta['names'], params, labels), meta
