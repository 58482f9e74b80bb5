import logging
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from utils import make_hash_sha256, spawn_rng

# data.py
# Datasets of classes, class splits and episode sampling.

logger = logging.getLogger(__name__)


class DatasetError(ValueError):
    pass


# Image presets: PIL mode, (height, width), channels
IMAGE_PRESETS = {
    '28x28-gray': ('L', (28, 28), 1),
    '84x84-rgb': ('RGB', (84, 84), 3),
}

# Dataset presets: image preset and train examples per class
DATASET_PRESETS = {
    'omniglot': {'image': '28x28-gray', 'n_train': 15},
    'mini-imagenet': {'image': '84x84-rgb', 'n_train': 500},
}

IMAGE_EXTENSIONS = ('.png', '.jpg', '.jpeg', '.bmp', '.gif')


@dataclass
class ClassDataset:
    """
    Classes C_0..C_{N-1}, each an ordered array of images (n, ch, H, W) in
    [0, 1]. The first n_train[c] images of a class are its train partition,
    the rest its validation partition.
    """
    class_names: list
    examples: list
    n_train: list
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.class_names) != len(self.examples):
            raise DatasetError("class names and example lists differ")
        if isinstance(self.n_train, int):
            self.n_train = [min(self.n_train, len(e)) for e in self.examples]
        self.n_train = [int(n) for n in self.n_train]
        shapes = {e.shape[1:] for e in self.examples}
        if len(shapes) > 1:
            raise DatasetError("classes disagree on image shape: {}".format(
                sorted(shapes)))

    @property
    def num_classes(self):
        return len(self.class_names)

    @property
    def image_shape(self):
        return tuple(self.examples[0].shape[1:])

    def train_examples(self, c):
        return self.examples[c][:self.n_train[c]]

    def validation_examples(self, c):
        return self.examples[c][self.n_train[c]:]

    def digest(self):
        """Identity of the data: provenance plus class names and counts."""
        return make_hash_sha256({
            'source': self.source,
            'classes': list(self.class_names),
            'counts': [len(e) for e in self.examples],
            'n_train': self.n_train
        })

    def dump(self):
        return {
            'num_classes': self.num_classes,
            'image_shape': list(self.image_shape),
            'examples': int(sum(len(e) for e in self.examples)),
            'source': self.source
        }


def _decode(path, mode, size):
    try:
        with Image.open(path) as img:
            img = img.convert(mode)
            if img.size != (size[1], size[0]):
                img = img.resize((size[1], size[0]), Image.BILINEAR)
            arr = np.asarray(img, dtype=np.float32) / 255.0
    except (OSError, UnidentifiedImageError) as e:
        raise DatasetError("cannot read image {}: {}".format(path, e))
    if arr.ndim == 2:
        arr = arr[None]
    else:
        arr = np.transpose(arr, (2, 0, 1))
    return np.ascontiguousarray(arr)


def load_imagefolder(root, preset, n_train=None):
    """One sub-directory per class; classes and files in lexicographic
    order."""
    if preset not in IMAGE_PRESETS:
        raise DatasetError("unknown image preset '{}'".format(preset))
    if not os.path.isdir(root):
        raise DatasetError("dataset root {} does not exist".format(root))
    mode, size, _ = IMAGE_PRESETS[preset]

    class_names = sorted(d for d in os.listdir(root)
                         if os.path.isdir(os.path.join(root, d)))
    if not class_names:
        raise DatasetError("no class directories under {}".format(root))

    examples = []
    for name in class_names:
        class_dir = os.path.join(root, name)
        files = sorted(f for f in os.listdir(class_dir)
                       if f.lower().endswith(IMAGE_EXTENSIONS))
        if not files:
            raise DatasetError("class directory {} has no images".format(
                class_dir))
        examples.append(np.stack([
            _decode(os.path.join(class_dir, f), mode, size) for f in files]))

    if n_train is None:
        n_train = max(1, min(len(e) for e in examples) * 3 // 4)
    logger.info("loaded %d classes from %s", len(class_names), root)
    return ClassDataset(class_names, examples, n_train,
                        source={'kind': 'imagefolder',
                                'root': os.path.abspath(root),
                                'preset': preset})


def _render_strokes(strokes, size):
    canvas = np.zeros((size, size))
    for stroke in strokes:
        for a, b in zip(stroke[:-1], stroke[1:]):
            n = int(np.ceil(np.hypot(*(b - a)) * 3)) + 2
            t = np.linspace(0.0, 1.0, n)[:, None]
            pts = np.rint(a + t * (b - a)).astype(int)
            pts = np.clip(pts, 0, size - 1)
            canvas[pts[:, 0], pts[:, 1]] = 1.0
    canvas = ndimage.gaussian_filter(canvas, sigma=max(0.6, size / 40.0))
    peak = canvas.max()
    return canvas / peak if peak > 0 else canvas


def _glyph_template(seed, c, size):
    rng = spawn_rng(seed, 'glyph', c)
    strokes = []
    for _ in range(int(rng.integers(2, 5))):
        n_points = int(rng.integers(2, 5))
        strokes.append(rng.uniform(0.2, 0.8, size=(n_points, 2)) * size)
    return strokes


def _jitter(strokes, rng, size):
    angle = rng.normal(0.0, 0.12)
    scale = 1.0 + rng.normal(0.0, 0.06)
    shift = rng.normal(0.0, size / 32.0, size=2)
    rot = np.array([[np.cos(angle), -np.sin(angle)],
                    [np.sin(angle), np.cos(angle)]]) * scale
    center = np.array([size / 2.0, size / 2.0])
    return [(s - center) @ rot.T + center + shift
            + rng.normal(0.0, size / 70.0, size=s.shape) for s in strokes]


def synth_glyphs(n_classes, n_per_class, image_size=28, seed=0, n_train=None):
    """Procedural stroke glyphs: one seeded template per class, seeded affine
    jitter and pixel noise per example."""
    if n_per_class < 2:
        raise DatasetError("synth_glyphs needs at least 2 examples per class")
    examples = []
    for c in range(n_classes):
        template = _glyph_template(seed, c, image_size)
        images = []
        for i in range(n_per_class):
            rng = spawn_rng(seed, 'glyph', c, i)
            img = _render_strokes(_jitter(template, rng, image_size),
                                  image_size)
            img = img + rng.normal(0.0, 0.05, size=img.shape)
            images.append(np.clip(img, 0.0, 1.0)[None])
        examples.append(np.stack(images).astype(np.float32))
    if n_train is None:
        n_train = max(1, n_per_class * 3 // 4)
    names = ['glyph{:04d}'.format(c) for c in range(n_classes)]
    return ClassDataset(names, examples, n_train, source={
        'kind': 'synth', 'n_classes': n_classes, 'n_per_class': n_per_class,
        'image_size': image_size, 'seed': seed})


def load_preset(name, data_root, synth=None, n_train=None):
    """Resolve a dataset preset: omniglot, mini-imagenet or synth."""
    if name == 'synth':
        synth = dict(synth or {})
        return synth_glyphs(n_train=n_train, **synth)
    if name not in DATASET_PRESETS:
        raise DatasetError("unknown dataset preset '{}'".format(name))
    preset = DATASET_PRESETS[name]
    root = os.path.join(data_root, name)
    return load_imagefolder(root, preset['image'],
                            n_train=n_train or preset['n_train'])


@dataclass(frozen=True)
class SplitPlan:
    pretrain_classes: tuple
    transfer_classes: tuple
    seed: int
    transfer_train: int = None
    transfer_test: int = None

    def __post_init__(self):
        if set(self.pretrain_classes) & set(self.transfer_classes):
            raise DatasetError("pretrain and transfer classes overlap")

    def dump(self):
        return {
            'pretrain_classes': [int(c) for c in self.pretrain_classes],
            'transfer_classes': [int(c) for c in self.transfer_classes],
            'seed': self.seed,
            'transfer_train': self.transfer_train,
            'transfer_test': self.transfer_test
        }


def make_split(dataset, n_pretrain, n_transfer, seed, transfer_train=None,
               transfer_test=None):
    if n_pretrain < 0 or n_transfer < 0:
        raise DatasetError("class counts must be non-negative")
    if n_pretrain + n_transfer > dataset.num_classes:
        raise DatasetError("{} + {} classes requested, dataset has {}".format(
            n_pretrain, n_transfer, dataset.num_classes))
    order = spawn_rng(seed, 'split').permutation(dataset.num_classes)
    pretrain = tuple(sorted(int(c) for c in order[:n_pretrain]))
    transfer = tuple(sorted(int(c) for c in
                            order[n_pretrain:n_pretrain + n_transfer]))
    return SplitPlan(pretrain, transfer, seed, transfer_train, transfer_test)


@dataclass
class EpisodeBatch:
    """K examples of one class for the inner loop plus R remember examples.
    Labels are indices into the split's pretrain classes."""
    x_inner: np.ndarray
    y_inner: np.ndarray
    x_rand: np.ndarray
    y_rand: np.ndarray
    label: int

    @property
    def x_outer(self):
        return np.concatenate([self.x_inner, self.x_rand])

    @property
    def y_outer(self):
        return np.concatenate([self.y_inner, self.y_rand])


def sample_episode(dataset, split, inner_steps, remember_size, rng):
    if inner_steps < 1 or remember_size < 1:
        raise ValueError("episodes need K >= 1 and R >= 1")
    classes = split.pretrain_classes
    if not classes:
        raise DatasetError("the split has no pretrain classes")
    counts = np.array([dataset.n_train[c] for c in classes])
    if counts.sum() == 0:
        raise DatasetError("the pretrain classes have no train examples")

    label = int(rng.integers(len(classes)))
    train = dataset.train_examples(classes[label])
    n = len(train)
    if n == 0:
        raise DatasetError("class {} has no train examples".format(
            classes[label]))
    if inner_steps <= n:
        idx = rng.choice(n, size=inner_steps, replace=False)
    else:
        # Show every example once, then draw the remainder with replacement
        idx = np.concatenate([rng.permutation(n),
                              rng.integers(n, size=inner_steps - n)])
    x_inner = train[idx]
    y_inner = np.full(inner_steps, label, dtype=np.int64)

    ends = np.cumsum(counts)
    flat = rng.integers(ends[-1], size=remember_size)
    owners = np.searchsorted(ends, flat, side='right')
    offsets = flat - (ends[owners] - counts[owners])
    x_rand = np.stack([dataset.examples[classes[o]][k]
                       for o, k in zip(owners, offsets)])
    return EpisodeBatch(x_inner, y_inner, x_rand,
                        owners.astype(np.int64), label)


def pretrain_arrays(dataset, split, part='train'):
    """All pretrain-split examples of one partition with local labels."""
    pick = (dataset.train_examples if part == 'train'
            else dataset.validation_examples)
    xs, ys = [], []
    for label, c in enumerate(split.pretrain_classes):
        x = pick(c)
        xs.append(x)
        ys.append(np.full(len(x), label, dtype=np.int64))
    if not xs:
        raise DatasetError("the split has no pretrain classes")
    return np.concatenate(xs), np.concatenate(ys)


def transfer_partition(dataset, split, c):
    """(train, test) images of one transfer class."""
    images = dataset.examples[c]
    n_train = split.transfer_train or dataset.n_train[c]
    train = images[:n_train]
    test = images[n_train:]
    if split.transfer_test is not None:
        test = test[:split.transfer_test]
    return train, test


def minibatches(n, batch_size, rng):
    """Shuffled index batches covering range(n) once, without replacement."""
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]
