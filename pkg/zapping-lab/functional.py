import functools

import numpy as np

import constants as C
from tensor import Tensor, ShapeError

# functional.py
# Network ops composed from Tensor primitives. Each op is differentiable to
# any order because it is built only from recorded primitives.


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


@functools.lru_cache(maxsize=64)
def _im2col_index(n, c, h, w):
    """Flat source index of every (row, channel, ky, kx) patch entry of a
    3x3, stride 1, zero-pad 1 convolution; -1 marks padding."""
    k = C.KERNEL_SIZE
    ni = np.arange(n).reshape(n, 1, 1, 1, 1, 1)
    yi = np.arange(h).reshape(1, h, 1, 1, 1, 1)
    xi = np.arange(w).reshape(1, 1, w, 1, 1, 1)
    ci = np.arange(c).reshape(1, 1, 1, c, 1, 1)
    dy = np.arange(k).reshape(1, 1, 1, 1, k, 1) - k // 2
    dx = np.arange(k).reshape(1, 1, 1, 1, 1, k) - k // 2
    r, s = yi + dy, xi + dx
    valid = (r >= 0) & (r < h) & (s >= 0) & (s < w)
    flat = ((ni * c + ci) * h + r) * w + s
    index = np.where(valid, flat, -1).reshape(n * h * w, c * k * k)
    index.flags.writeable = False
    return index


@functools.lru_cache(maxsize=64)
def _pool_windows(n, c, h, w):
    """Flat indices of every 2x2 pooling window, shape (n, c, h/2, w/2, 4)."""
    p = C.POOL_SIZE
    ho, wo = h // p, w // p
    ni = np.arange(n).reshape(n, 1, 1, 1, 1, 1)
    ci = np.arange(c).reshape(1, c, 1, 1, 1, 1)
    yi = np.arange(ho).reshape(1, 1, ho, 1, 1, 1) * p
    xi = np.arange(wo).reshape(1, 1, 1, wo, 1, 1) * p
    dy = np.arange(p).reshape(1, 1, 1, 1, p, 1)
    dx = np.arange(p).reshape(1, 1, 1, 1, 1, p)
    flat = ((ni * c + ci) * h + yi + dy) * w + xi + dx
    windows = flat.reshape(n, c, ho, wo, p * p)
    windows.flags.writeable = False
    return windows


def conv2d(x, kernel):
    """3x3 cross-correlation, stride 1, zero padding 1."""
    x, kernel = _as_tensor(x), _as_tensor(kernel)
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError("conv2d expects 4-d input and kernel, got {} and {}"
                         .format(x.shape, kernel.shape))
    n, c, h, w = x.shape
    c_out, c_in, kh, kw = kernel.shape
    if (kh, kw) != (C.KERNEL_SIZE, C.KERNEL_SIZE):
        raise ShapeError("kernel must be 3x3, got {}x{}".format(kh, kw))
    if c_in != c:
        raise ShapeError("input has {} channels, kernel expects {}".format(
            c, c_in))
    cols = x.gather(_im2col_index(n, c, h, w))
    out = cols @ kernel.reshape(c_out, c_in * kh * kw).T
    return out.reshape(n, h, w, c_out).permute(0, 3, 1, 2)


def instance_norm(x, eps=C.INSTANCE_NORM_EPS):
    """Per-(sample, channel) normalisation, no affine parameters."""
    x = _as_tensor(x)
    if x.ndim != 4:
        raise ShapeError("instance_norm expects 4-d input, got {}".format(
            x.shape))
    if x.shape[2] * x.shape[3] < 1:
        raise ShapeError("instance_norm needs H*W >= 1")
    centered = x - x.mean(axis=(2, 3), keepdims=True)
    var = (centered * centered).mean(axis=(2, 3), keepdims=True)
    return centered * (var + eps) ** -0.5


def relu(x):
    x = _as_tensor(x)
    mask = Tensor((x.data > 0).astype(x.dtype))
    return x * mask


def maxpool2d(x):
    """2x2 max pool, stride 2. Ties go to the first maximal element."""
    x = _as_tensor(x)
    if x.ndim != 4:
        raise ShapeError("maxpool2d expects 4-d input, got {}".format(x.shape))
    n, c, h, w = x.shape
    if h < C.POOL_SIZE or w < C.POOL_SIZE:
        raise ShapeError("maxpool2d needs at least 2x2 input, got {}x{}"
                         .format(h, w))
    windows = _pool_windows(n, c, h, w)
    values = x.data.reshape(-1)[windows]
    first_max = values.argmax(axis=-1)[..., None]
    chosen = np.take_along_axis(windows, first_max, axis=-1)[..., 0]
    return x.gather(chosen)


def flatten(x):
    x = _as_tensor(x)
    return x.reshape(x.shape[0], -1)


def linear(x, weight, bias=None):
    x, weight = _as_tensor(x), _as_tensor(weight)
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError("linear got input {} and weight {}".format(
            x.shape, weight.shape))
    out = x @ weight.T
    if bias is not None:
        bias = _as_tensor(bias)
        if bias.shape != (weight.shape[0],):
            raise ShapeError("bias {} does not match weight {}".format(
                bias.shape, weight.shape))
        out = out + bias
    return out


def softmax_cross_entropy(logits, targets):
    """Mean over the batch of -log softmax(logits)[target]."""
    logits = _as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    if logits.ndim != 2:
        raise ShapeError("logits must be 2-d, got {}".format(logits.shape))
    n, c = logits.shape
    if targets.shape != (n,):
        raise ShapeError("{} targets for {} rows".format(targets.size, n))
    if n == 0:
        raise ShapeError("cross entropy of an empty batch")
    if targets.min() < 0 or targets.max() >= c:
        raise ValueError("targets must lie in [0, {})".format(c))

    # The shift is a constant; log-sum-exp is invariant to it
    shift = Tensor(logits.data.max(axis=1, keepdims=True))
    z = logits - shift
    log_norm = z.exp().sum(axis=1, keepdims=True).log()
    picked = (z - log_norm).gather(np.arange(n) * c + targets)
    return -picked.sum() * (1.0 / n)


def softmax(logits):
    logits = _as_tensor(logits)
    z = logits - Tensor(logits.data.max(axis=1, keepdims=True))
    e = z.exp()
    return e / e.sum(axis=1, keepdims=True)
