import contextlib
import logging
import threading

import numpy as np

# tensor.py
# Implements the Tensor object and reverse-mode differentiation.
#
# Every op is a Function whose backward is written with Tensor ops, so when
# backward runs with create_graph=True the gradients are themselves graph
# nodes and can be differentiated again.

logger = logging.getLogger(__name__)

DEFAULT_DTYPE = np.float64


class ShapeError(ValueError):
    pass


class GraphError(ValueError):
    pass


# Grad mode is per thread: graphs built in different threads never interact
_grad_state = threading.local()


def is_grad_enabled():
    return getattr(_grad_state, 'enabled', True)


@contextlib.contextmanager
def grad_mode(enabled):
    previous = is_grad_enabled()
    _grad_state.enabled = bool(enabled)
    try:
        yield
    finally:
        _grad_state.enabled = previous


def no_grad():
    return grad_mode(False)


class Tensor:
    """
    An n-dimensional float array taking part in a computation graph.
    """

    # Make ndarray (op) Tensor dispatch to the Tensor's reflected operator
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False, dtype=None, _ctx=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self._ctx = _ctx  # the Function that produced this tensor, if any

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self):
        return self._ctx is None

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        grad = ", requires_grad=True" if self.requires_grad else ""
        return "Tensor({}{})".format(self.data, grad)

    def __len__(self):
        return len(self.data)

    def _lift(self, other):
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.dtype))

    # Arithmetic

    def __add__(self, other):
        return Add.apply(self, self._lift(other))

    def __radd__(self, other):
        return Add.apply(self._lift(other), self)

    def __sub__(self, other):
        return Add.apply(self, Neg.apply(self._lift(other)))

    def __rsub__(self, other):
        return Add.apply(self._lift(other), Neg.apply(self))

    def __mul__(self, other):
        return Mul.apply(self, self._lift(other))

    def __rmul__(self, other):
        return Mul.apply(self._lift(other), self)

    def __neg__(self):
        return Neg.apply(self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return self * other ** -1
        return self * (1.0 / other)

    def __rtruediv__(self, other):
        return self._lift(other) * self ** -1

    def __pow__(self, exponent):
        if isinstance(exponent, Tensor):
            raise TypeError("only scalar exponents are supported")
        return Pow.apply(self, exponent=float(exponent))

    def __matmul__(self, other):
        return MatMul.apply(self, self._lift(other))

    def exp(self):
        return Exp.apply(self)

    def log(self):
        return Log.apply(self)

    # Shape ops

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Reshape.apply(self, shape=tuple(shape))

    def permute(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return Permute.apply(self, axes=tuple(axes))

    @property
    def T(self):
        if self.ndim != 2:
            raise ShapeError("T is defined for 2-d tensors, got shape {}"
                             .format(self.shape))
        return self.permute(1, 0)

    def sum(self, axis=None, keepdims=False):
        if isinstance(axis, int):
            axis = (axis,)
        return Sum.apply(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        if axis is None:
            count = self.size
        else:
            axes = (axis,) if isinstance(axis, int) else axis
            count = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def broadcast_to(self, shape):
        shape = tuple(shape)
        if self.shape == shape:
            return self
        return BroadcastTo.apply(self, shape=shape)

    def sum_to(self, shape):
        shape = tuple(shape)
        if self.shape == shape:
            return self
        return SumTo.apply(self, shape=shape)

    def gather(self, index):
        """Pick entries of the flattened tensor; index -1 yields zero."""
        return Gather.apply(self, index=np.asarray(index))

    def scatter_add(self, index, shape):
        return ScatterAdd.apply(self, index=np.asarray(index),
                                shape=tuple(shape))


def tensor(shape, values, requires_grad=False, dtype=DEFAULT_DTYPE):
    """Build a leaf tensor from a shape and a row-major list of values."""
    shape = tuple(int(s) for s in shape)
    values = np.asarray(values, dtype=dtype).ravel()
    if int(np.prod(shape, dtype=np.int64)) != values.size:
        raise ShapeError("shape {} holds {} values, got {}".format(
            shape, int(np.prod(shape, dtype=np.int64)), values.size))
    return Tensor(values.reshape(shape), requires_grad=requires_grad)


def zeros_like(t):
    return Tensor(np.zeros_like(t.data))


class Function:
    """
    A recorded op. Subclasses implement forward on arrays and backward on
    Tensors; `needs` tells backward which parents want a gradient.
    """

    parents = ()
    needs = ()

    @classmethod
    def apply(cls, *inputs, **attrs):
        fn = cls()
        fn.parents = inputs
        for k, v in attrs.items():
            setattr(fn, k, v)
        out = fn.forward(*[t.data for t in inputs])
        track = is_grad_enabled() and any(t.requires_grad for t in inputs)
        return Tensor(out, requires_grad=track, _ctx=fn if track else None)

    def forward(self, *arrays):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError


def _sum_to(x, shape):
    lead = x.ndim - len(shape)
    axes = tuple(range(lead))
    axes += tuple(i + lead for i, s in enumerate(shape)
                  if s == 1 and x.shape[i + lead] != 1)
    if axes:
        x = x.sum(axis=axes, keepdims=True)
    return x.reshape(shape)


class Add(Function):
    def forward(self, a, b):
        return a + b

    def backward(self, grad):
        a, b = self.parents
        ga = grad.sum_to(a.shape) if self.needs[0] else None
        gb = grad.sum_to(b.shape) if self.needs[1] else None
        return ga, gb


class Mul(Function):
    def forward(self, a, b):
        return a * b

    def backward(self, grad):
        a, b = self.parents
        ga = (grad * b).sum_to(a.shape) if self.needs[0] else None
        gb = (grad * a).sum_to(b.shape) if self.needs[1] else None
        return ga, gb


class Neg(Function):
    def forward(self, a):
        return -a

    def backward(self, grad):
        return (-grad,)


class Pow(Function):
    def forward(self, a):
        return a ** self.exponent

    def backward(self, grad):
        (a,) = self.parents
        return (grad * (a ** (self.exponent - 1.0)) * self.exponent,)


class Exp(Function):
    def forward(self, a):
        return np.exp(a)

    def backward(self, grad):
        (a,) = self.parents
        return (grad * a.exp(),)


class Log(Function):
    def forward(self, a):
        return np.log(a)

    def backward(self, grad):
        (a,) = self.parents
        return (grad * a ** -1.0,)


class MatMul(Function):
    def forward(self, a, b):
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeError("cannot multiply shapes {} and {}".format(
                a.shape, b.shape))
        return a @ b

    def backward(self, grad):
        a, b = self.parents
        ga = grad @ b.T if self.needs[0] else None
        gb = a.T @ grad if self.needs[1] else None
        return ga, gb


class Reshape(Function):
    def forward(self, a):
        try:
            return a.reshape(self.shape)
        except ValueError as e:
            raise ShapeError(str(e))

    def backward(self, grad):
        (a,) = self.parents
        return (grad.reshape(a.shape),)


class Permute(Function):
    def forward(self, a):
        return np.ascontiguousarray(np.transpose(a, self.axes))

    def backward(self, grad):
        return (grad.permute(tuple(np.argsort(self.axes))),)


class Sum(Function):
    def forward(self, a):
        return np.sum(a, axis=self.axis, keepdims=self.keepdims)

    def backward(self, grad):
        (a,) = self.parents
        if not self.keepdims:
            if self.axis is None:
                kept = (1,) * a.ndim
            else:
                axes = [ax % a.ndim for ax in self.axis]
                kept = tuple(1 if i in axes else s
                             for i, s in enumerate(a.shape))
            grad = grad.reshape(kept)
        return (grad.broadcast_to(a.shape),)


class BroadcastTo(Function):
    def forward(self, a):
        return np.ascontiguousarray(np.broadcast_to(a, self.shape))

    def backward(self, grad):
        (a,) = self.parents
        return (grad.sum_to(a.shape),)


class SumTo(Function):
    def forward(self, a):
        return _sum_to(a, self.shape)

    def backward(self, grad):
        (a,) = self.parents
        return (grad.broadcast_to(a.shape),)


class Gather(Function):
    def forward(self, a):
        flat = a.reshape(-1)
        invalid = self.index < 0
        out = flat.take(np.where(invalid, 0, self.index))
        if invalid.any():
            out[invalid] = 0
        return out

    def backward(self, grad):
        (a,) = self.parents
        return (grad.scatter_add(self.index, a.shape),)


class ScatterAdd(Function):
    def forward(self, g):
        if g.shape != self.index.shape:
            raise ShapeError("scatter values {} do not match index {}".format(
                g.shape, self.index.shape))
        size = int(np.prod(self.shape, dtype=np.int64))
        valid = self.index >= 0
        out = np.bincount(self.index[valid], weights=g[valid],
                          minlength=size)
        return out.astype(g.dtype, copy=False).reshape(self.shape)

    def backward(self, grad):
        return (grad.gather(self.index),)


def _topological_order(root):
    """Nodes reachable from root, parents before children, each once."""
    order, visited = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        if node._ctx is not None:
            for p in node._ctx.parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
    return order


def backward(loss, wrt, create_graph=False):
    """Gradients of a scalar loss with respect to each tensor in wrt.

    Tensors that the loss does not depend on get a zero gradient. With
    create_graph the returned gradients are graph nodes themselves."""
    if not isinstance(loss, Tensor):
        raise TypeError("loss must be a Tensor")
    if loss.size != 1:
        raise ShapeError("backward needs a scalar loss, got shape {}".format(
            loss.shape))
    wrt = list(wrt)
    targets = {id(t) for t in wrt}

    order = _topological_order(loss) if loss.requires_grad else []

    # Only nodes on a path from a target to the loss are visited
    relevant = set()
    for node in order:
        if id(node) in targets or (node._ctx is not None and any(
                id(p) in relevant for p in node._ctx.parents)):
            relevant.add(id(node))

    grads = {}
    if id(loss) in relevant:
        grads[id(loss)] = Tensor(np.ones_like(loss.data))

    with grad_mode(create_graph):
        for node in reversed(order):
            if id(node) not in relevant or node._ctx is None:
                continue
            g = grads.get(id(node))
            if g is None:
                continue
            ctx = node._ctx
            ctx.needs = tuple(id(p) in relevant for p in ctx.parents)
            for parent, pg in zip(ctx.parents, ctx.backward(g)):
                if pg is None or id(parent) not in relevant:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg

    result = []
    for t in wrt:
        g = grads.get(id(t))
        if g is None:
            g = zeros_like(t)
        elif g.shape != t.shape:
            g = g.reshape(t.shape)
        result.append(g)
    return result
