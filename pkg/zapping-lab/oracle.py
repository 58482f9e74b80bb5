import math
from dataclasses import dataclass

import numpy as np

# oracle.py
# Independent reference implementations used to verify the engine:
# finite differences, loop convolution, a hand-unrolled meta-gradient and a
# loop Adam. Plain numpy and Python only; nothing here imports the
# production tensor, functional or optimizer modules.


@dataclass(frozen=True)
class FiniteDiffSpec:
    h: float = 1e-5
    tol: float = 1e-4
    abs_floor: float = 1e-8
    scheme: str = 'central'

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("finite-difference step must be positive")
        if self.scheme != 'central':
            raise ValueError("only the central scheme is implemented")

    def relative_error(self, analytic, numeric):
        """||a - n|| / max(||a||, ||n||, abs_floor) over all entries."""
        a = np.concatenate([np.ravel(x) for x in _as_list(analytic)])
        n = np.concatenate([np.ravel(x) for x in _as_list(numeric)])
        scale = max(np.linalg.norm(a), np.linalg.norm(n), self.abs_floor)
        return float(np.linalg.norm(a - n) / scale)

    def agrees(self, analytic, numeric):
        return self.relative_error(analytic, numeric) <= self.tol


def _as_list(x):
    if isinstance(x, (list, tuple)):
        return list(x)
    return [x]


def _finite(value, where):
    value = float(value)
    if not math.isfinite(value):
        raise FloatingPointError("non-finite function value {} at {}".format(
            value, where))
    return value


def fd_gradient(f, params, spec=FiniteDiffSpec()):
    """Central differences of a scalar function of a list of arrays."""
    params = [np.array(p, dtype=np.float64) for p in _as_list(params)]
    grads = []
    for i, p in enumerate(params):
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for j in range(flat.size):
            saved = flat[j]
            flat[j] = saved + spec.h
            up = _finite(f(params), (i, j))
            flat[j] = saved - spec.h
            down = _finite(f(params), (i, j))
            flat[j] = saved
            gflat[j] = (up - down) / (2.0 * spec.h)
        grads.append(g)
    return grads


def brute_conv(x, kernel):
    """3x3 cross-correlation, stride 1, zero padding 1, by explicit loops."""
    n_batch, c_in, height, width = x.shape
    c_out, k_in, kh, kw = kernel.shape
    if k_in != c_in:
        raise ValueError("channel mismatch")
    out = np.zeros((n_batch, c_out, height, width))
    for n in range(n_batch):
        for o in range(c_out):
            for r in range(height):
                for s in range(width):
                    acc = 0.0
                    for c in range(c_in):
                        for dy in range(kh):
                            for dx in range(kw):
                                rr, ss = r + dy - kh // 2, s + dx - kw // 2
                                if 0 <= rr < height and 0 <= ss < width:
                                    acc += (x[n, c, rr, ss]
                                            * kernel[o, c, dy, dx])
                    out[n, o, r, s] = acc
    return out


class ReferenceAdam:
    """Adam written one coordinate at a time."""

    def __init__(self, shapes, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [[0.0] * int(np.prod(s)) for s in shapes]
        self.v = [[0.0] * int(np.prod(s)) for s in shapes]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        out = []
        for k, (p, g) in enumerate(zip(params, grads)):
            p = np.array(p, dtype=np.float64)
            flat, gflat = p.reshape(-1), np.ravel(g)
            for j in range(flat.size):
                gj = float(gflat[j])
                self.m[k][j] = self.beta1 * self.m[k][j] + \
                    (1.0 - self.beta1) * gj
                self.v[k][j] = self.beta2 * self.v[k][j] + \
                    (1.0 - self.beta2) * (gj * gj)
                m_hat = self.m[k][j] / c1
                v_hat = self.v[k][j] / c2
                flat[j] -= self.lr * m_hat / (math.sqrt(v_hat) + self.eps)
            out.append(p)
        return out


class QuadraticToy:
    """L(theta) = 1/2 sum(theta^2), independent of the data."""

    def loss(self, params, x, y):
        return 0.5 * sum(float(np.sum(p * p)) for p in params)

    def grad(self, params, x, y):
        return [np.array(p, dtype=np.float64) for p in params]

    def hessian(self, params, x, y):
        n = sum(np.size(p) for p in params)
        return np.eye(n)


class SoftmaxRegressionToy:
    """Linear softmax classifier, params [W (C, D), b (C)], mean
    cross-entropy. Gradient and Hessian in closed form."""

    def _probs(self, params, x):
        w, b = params
        z = x.reshape(len(x), -1) @ w.T + b
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def loss(self, params, x, y):
        p = self._probs(params, x)
        return float(-np.mean(np.log(p[np.arange(len(y)), y])))

    def grad(self, params, x, y):
        w, _ = params
        xf = x.reshape(len(x), -1)
        d = self._probs(params, x)
        d[np.arange(len(y)), y] -= 1.0
        d /= len(y)
        return [d.T @ xf, d.sum(axis=0)]

    def hessian(self, params, x, y):
        w, _ = params
        n_classes, dim = w.shape
        xf = x.reshape(len(x), -1)
        probs = self._probs(params, x)
        size = n_classes * dim + n_classes
        h = np.zeros((size, size))
        for xi, p in zip(xf, probs):
            # d logits / d [vec(W), b]
            jac = np.zeros((n_classes, size))
            for c in range(n_classes):
                jac[c, c * dim:(c + 1) * dim] = xi
                jac[c, n_classes * dim + c] = 1.0
            h += jac.T @ (np.diag(p) - np.outer(p, p)) @ jac
        return h / len(xf)


def _pack(params):
    return np.concatenate([np.ravel(p) for p in params])


def _unpack(vector, like):
    out, i = [], 0
    for p in like:
        size = np.size(p)
        out.append(vector[i:i + size].reshape(np.shape(p)))
        i += size
    return out


def unrolled_loss(toy, params, episode, inner_steps, inner_lr):
    """Outer loss after inner_steps single-example SGD steps."""
    theta = [np.array(p, dtype=np.float64) for p in params]
    for k in range(inner_steps):
        x_k, y_k = episode.x_inner[k:k + 1], episode.y_inner[k:k + 1]
        theta = [t - inner_lr * g
                 for t, g in zip(theta, toy.grad(theta, x_k, y_k))]
    return toy.loss(theta, episode.x_outer, episode.y_outer)


def unrolled_meta_oracle(toy, params, episode, inner_steps, inner_lr,
                         spec=FiniteDiffSpec()):
    """Finite differences of the whole inner-loop + outer-loss pipeline."""
    return fd_gradient(
        lambda p: unrolled_loss(toy, p, episode, inner_steps, inner_lr),
        params, spec)


def hand_unrolled_meta_gradient(toy, params, episode, inner_steps, inner_lr):
    """Exact gradient of the unrolled pipeline with respect to its start:
    g_K = grad L(theta_K), then g_i = (I - lr H_i) g_{i+1} backwards."""
    thetas = [[np.array(p, dtype=np.float64) for p in params]]
    for k in range(inner_steps):
        x_k, y_k = episode.x_inner[k:k + 1], episode.y_inner[k:k + 1]
        theta = thetas[-1]
        thetas.append([t - inner_lr * g
                       for t, g in zip(theta, toy.grad(theta, x_k, y_k))])
    g = _pack(toy.grad(thetas[-1], episode.x_outer, episode.y_outer))
    for k in reversed(range(inner_steps)):
        x_k, y_k = episode.x_inner[k:k + 1], episode.y_inner[k:k + 1]
        g = g - inner_lr * (toy.hessian(thetas[k], x_k, y_k) @ g)
    return _unpack(g, params)


def reference_meta_asb(toy, params, episodes, inner_lr, outer_lr):
    """Meta-ASB without zapping on a toy model: per episode, the meta-gradient
    at the episode start feeds one Adam step."""
    adam = ReferenceAdam([np.shape(p) for p in params], outer_lr)
    theta = [np.array(p, dtype=np.float64) for p in params]
    for episode in episodes:
        g = hand_unrolled_meta_gradient(toy, theta, episode,
                                        len(episode.x_inner), inner_lr)
        theta = adam.step(theta, g)
    return theta
