import logging
from dataclasses import dataclass

import numpy as np

import constants as C
import functional as F
import oracle as O
from data import EpisodeBatch
from models import ArchitectureSpec, build_convnet
from optimizers import sgd_step_functional
from tensor import Tensor, backward
from utils import spawn_rng

# gradcheck.py
# Compares the engine's gradients and meta-gradients against the oracles.

logger = logging.getLogger(__name__)

GRAD_TOL = 1e-4
META_TOL = 1e-3


@dataclass
class CheckResult:
    name: str
    error: float
    tol: float

    @property
    def passed(self):
        return self.error <= self.tol

    def dump(self):
        return {'name': self.name, 'error': self.error, 'tol': self.tol,
                'passed': self.passed}


def analytic_gradient(f, arrays):
    """Gradient of f (built from Tensor ops) at the given arrays."""
    leaves = [Tensor(np.array(a, dtype=np.float64), requires_grad=True)
              for a in arrays]
    return [g.data for g in backward(f(*leaves), leaves)]


def numeric_gradient(f, arrays, spec):
    return O.fd_gradient(lambda ps: f(*[Tensor(p) for p in ps]).item(),
                         arrays, spec)


def check_gradient(name, f, arrays, tol=GRAD_TOL):
    spec = O.FiniteDiffSpec(C.FD_STEP, tol, C.FD_ABS_FLOOR)
    error = spec.relative_error(analytic_gradient(f, arrays),
                                numeric_gradient(f, arrays, spec))
    return CheckResult(name, error, tol)


def _weighted(out, weights):
    # A fixed random projection makes every output entry count
    return (out * Tensor(weights)).sum()


def op_suite(seed=C.TEST_RANDOM_SEED):
    rng = spawn_rng(seed, 'gradcheck', 'ops')
    x = rng.normal(size=(2, 3, 6, 6))
    k = rng.normal(size=(4, 3, 3, 3))
    w_conv = rng.normal(size=(2, 4, 6, 6))
    w_pool = rng.normal(size=(2, 3, 3, 3))
    a = rng.normal(size=(3, 5))
    wl, bl = rng.normal(size=(4, 5)), rng.normal(size=4)
    w_lin = rng.normal(size=(3, 4))
    logits = rng.normal(size=(5, 7))
    targets = rng.integers(7, size=5)
    positive = rng.uniform(0.5, 2.0, size=(3, 4))

    return [
        check_gradient('conv2d', lambda x_, k_: _weighted(
            F.conv2d(x_, k_), w_conv), [x, k]),
        check_gradient('instance_norm', lambda x_: _weighted(
            F.instance_norm(x_), x), [x]),
        check_gradient('relu', lambda x_: _weighted(F.relu(x_), x), [x]),
        check_gradient('maxpool2d', lambda x_: _weighted(
            F.maxpool2d(x_), w_pool), [x]),
        check_gradient('linear', lambda a_, w_, b_: _weighted(
            F.linear(a_, w_, b_), w_lin), [a, wl, bl]),
        check_gradient('softmax_cross_entropy', lambda z: (
            F.softmax_cross_entropy(z, targets)), [logits]),
        check_gradient('exp_log_div', lambda p: (
            (p.exp() / (p + 1.0)).log().sum()), [positive]),
    ]


def model_suite(seed=C.TEST_RANDOM_SEED, channels=4, size=14, batch=2,
                num_classes=3):
    """Full forward + loss of a small convnet against finite differences."""
    rng = spawn_rng(seed, 'gradcheck', 'model')
    spec = ArchitectureSpec((1, size, size), 3, channels, False, num_classes)
    model = build_convnet(spec, rng)
    x = rng.normal(size=(batch, 1, size, size))
    y = rng.integers(num_classes, size=batch)

    def loss(*params):
        return F.softmax_cross_entropy(model.forward(x, list(params)), y)

    return [check_gradient('convnet', loss,
                           [p.data for p in model.params])]


def unrolled_meta_gradient(model_params, forward, episode, inner_steps,
                           inner_lr):
    """Meta-gradient through functional inner steps, from the engine."""
    leaves = [Tensor(np.array(p, dtype=np.float64), requires_grad=True)
              for p in model_params]
    theta = leaves
    for k in range(inner_steps):
        x_k, y_k = episode.x_inner[k:k + 1], episode.y_inner[k:k + 1]
        loss = F.softmax_cross_entropy(forward(x_k, theta), y_k)
        theta = sgd_step_functional(theta, backward(loss, theta,
                                                    create_graph=True),
                                    inner_lr)
    outer = F.softmax_cross_entropy(forward(episode.x_outer, theta),
                                    episode.y_outer)
    return [g.data for g in backward(outer, leaves)]


def linear_forward(x, params):
    w, b = params
    return F.linear(F.flatten(Tensor(x)), w, b)


def toy_episode(rng, n_classes=4, dim=4, k=3, r=5):
    label = int(rng.integers(n_classes))
    return EpisodeBatch(rng.normal(size=(k, dim)),
                        np.full(k, label, dtype=np.int64),
                        rng.normal(size=(r, dim)),
                        rng.integers(n_classes, size=r).astype(np.int64),
                        label)


def quadratic_meta_gradient(theta0, inner_lr, inner_steps):
    """d/d theta0 of 1/2 theta_K^2 with theta_{i+1} = theta_i - lr theta_i."""
    t0 = Tensor(np.array([theta0], dtype=np.float64), requires_grad=True)
    theta = [t0]
    for _ in range(inner_steps):
        inner = (theta[0] * theta[0]).sum() * 0.5
        theta = sgd_step_functional(theta, backward(inner, theta,
                                                    create_graph=True),
                                    inner_lr)
    outer = (theta[0] * theta[0]).sum() * 0.5
    return backward(outer, [t0])[0].item()


def meta_suite(seed=C.TEST_RANDOM_SEED, inner_lr=0.1):
    rng = spawn_rng(seed, 'gradcheck', 'meta')
    toy = O.SoftmaxRegressionToy()
    params = [rng.normal(size=(4, 4)), rng.normal(size=4)]
    spec = O.FiniteDiffSpec(C.FD_STEP, META_TOL, C.FD_ABS_FLOOR)
    results = []
    for k in (1, 2, 3):
        episode = toy_episode(rng, k=k)
        analytic = unrolled_meta_gradient(params, linear_forward, episode, k,
                                          inner_lr)
        numeric = O.unrolled_meta_oracle(toy, params, episode, k, inner_lr,
                                         spec)
        results.append(CheckResult('meta K={} vs finite differences'.format(
            k), spec.relative_error(analytic, numeric), META_TOL))
        exact = O.hand_unrolled_meta_gradient(toy, params, episode, k,
                                              inner_lr)
        results.append(CheckResult('meta K={} vs hand unrolled'.format(k),
                                   spec.relative_error(analytic, exact),
                                   1e-10))
        closed = (1 - inner_lr) ** (2 * k) * 2.0
        found = quadratic_meta_gradient(2.0, inner_lr, k)
        results.append(CheckResult('quadratic K={}'.format(k),
                                   abs(found - closed) / closed, 1e-12))
    return results


SUITES = {
    'ops': op_suite,
    'model': model_suite,
    'meta': meta_suite,
}


def run_suites(names=None, seed=C.TEST_RANDOM_SEED):
    results = []
    for name in names or SUITES:
        if name not in SUITES:
            raise ValueError("unknown gradcheck suite '{}'".format(name))
        for r in SUITES[name](seed=seed):
            logger.info("%s %s: %.3g (tol %g)", 'ok' if r.passed else 'FAIL',
                        r.name, r.error, r.tol)
            results.append(r)
    return results
