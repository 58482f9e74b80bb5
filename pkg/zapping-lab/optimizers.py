import numpy as np

import constants as C
from tensor import ShapeError, GraphError

# optimizers.py
# Plain SGD (in-place and graph-preserving) and bias-corrected Adam.


def _check_pairs(params, grads):
    params, grads = list(params), list(grads)
    if len(params) != len(grads):
        raise ShapeError("{} parameters but {} gradients".format(
            len(params), len(grads)))
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeError("parameter {} got gradient {}".format(
                p.shape, g.shape))
    return params, grads


def sgd_step_inplace(params, grads, lr):
    """theta <- theta - lr * g, written into the parameter buffers."""
    params, grads = _check_pairs(params, grads)
    for p, g in zip(params, grads):
        p.data -= (lr * g.data).astype(p.dtype, copy=False)


def sgd_step_functional(params, grads, lr):
    """theta_{i+1} = theta_i - lr * g as new graph nodes, so a later loss can
    be differentiated back through the step."""
    params, grads = _check_pairs(params, grads)
    if not any(g.requires_grad for g in grads):
        raise GraphError("functional SGD needs gradients built with "
                         "create_graph=True")
    return [p - g * lr for p, g in zip(params, grads)]


class AdamState:
    def __init__(self, params, beta1=C.ADAM_BETA1, beta2=C.ADAM_BETA2,
                 eps=C.ADAM_EPS):
        self.shapes = [tuple(p.shape) for p in params]
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.t = 0
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    def reset_rows(self, index, rows):
        """Zero the moments of the given leading-axis rows of one slot."""
        rows = list(rows)
        self.m[index][rows] = 0
        self.v[index][rows] = 0

    def dump(self):
        return {
            't': self.t,
            'beta1': self.beta1,
            'beta2': self.beta2,
            'eps': self.eps,
            'shapes': [list(s) for s in self.shapes]
        }


def adam_step(state, params, grads, lr):
    params, grads = _check_pairs(params, grads)
    if [tuple(p.shape) for p in params] != state.shapes:
        raise ShapeError("Adam state was built for shapes {}".format(
            state.shapes))
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** state.t
    correction2 = 1.0 - b2 ** state.t
    for i, (p, g) in enumerate(zip(params, grads)):
        g = g.data.astype(p.dtype, copy=False)
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * (g * g)
        m_hat = state.m[i] / correction1
        v_hat = state.v[i] / correction2
        p.data -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
