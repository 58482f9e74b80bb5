import logging
import time
from dataclasses import dataclass, field

import numpy as np
from tqdm import tqdm

import constants as C
import functional as F
from data import (DatasetError, minibatches, pretrain_arrays, sample_episode,
                  transfer_partition)
from metrics import MetricsRecord, ZapEvent
from models import build_convnet
from optimizers import (AdamState, adam_step, sgd_step_functional,
                        sgd_step_inplace)
from tensor import backward, no_grad
from utils import spawn_rng
from zapping import zap_class, zap_iid

# protocols.py
# Pre-training (i.i.d., ASB, Meta-ASB) and transfer (sequential, i.i.d.).

logger = logging.getLogger(__name__)

EVAL_BATCH = 256


def _ignore(*args):
    return 0


def _progress(iterable, **kwargs):
    return tqdm(iterable, disable=not logger.isEnabledFor(logging.INFO),
                leave=False, **kwargs)


@dataclass
class PretrainResult:
    model: object
    losses: list = field(default_factory=list)
    validation_acc: float = None
    steps: int = 0


@dataclass
class TransferResult:
    model: object
    records: list = field(default_factory=list)
    class_order: list = field(default_factory=list)

    @property
    def final_train_acc(self):
        return self.records[-1].train_acc if self.records else None

    @property
    def final_test_acc(self):
        return self.records[-1].test_acc if self.records else None


def evaluate(model, x, y, params=None):
    """(accuracy, mean loss) of model on (x, y); (None, None) when empty.
    Runs without recording a graph and never touches parameters."""
    if len(x) == 0:
        return None, None
    correct, total_loss = 0, 0.0
    with no_grad():
        for i in range(0, len(x), EVAL_BATCH):
            xb, yb = x[i:i + EVAL_BATCH], y[i:i + EVAL_BATCH]
            logits = model.forward(xb, params)
            total_loss += F.softmax_cross_entropy(logits, yb).item() * len(xb)
            correct += int((logits.data.argmax(axis=1) == yb).sum())
    return correct / len(x), total_loss / len(x)


def new_model(config, dataset, num_classes, seed=None):
    seed = config.pretrain_seed if seed is None else seed
    spec = config.architecture_spec(num_classes, dataset.image_shape)
    return build_convnet(spec, spawn_rng(seed, 'init'), config.np_dtype)


def pretrain_iid(config, dataset, split, model=None, record_h=_ignore,
                 event_h=_ignore):
    """Adam over shuffled mini-batches for E epochs; zap_iid at each epoch
    start. One record per epoch."""
    if config.method != C.Method.iid:
        raise ValueError("method: pretrain_iid needs method iid, got {}"
                         .format(config.method.name))
    num_classes = len(split.pretrain_classes)
    if model is None:
        model = new_model(config, dataset, num_classes)
    x, y = pretrain_arrays(dataset, split, 'train')
    x_val, y_val = pretrain_arrays(dataset, split, 'validation')
    policy = config.zap_policy()
    adam = AdamState(model.params)
    batch_rng = spawn_rng(config.pretrain_seed, 'batches')
    zap_rng = spawn_rng(config.pretrain_seed, 'zap')
    reset_state = adam if policy.reset_optimizer_state else None

    result = PretrainResult(model)
    start = time.perf_counter()
    for epoch in _progress(range(config.pretrain_epochs), desc='epochs'):
        if policy.mode == C.ZapMode.iid_cadence:
            zapped = zap_iid(model, policy, epoch, zap_rng, reset_state)
            if zapped:
                event_h(ZapEvent(result.steps, C.Phase.pretrain, policy.mode,
                                 zapped))
        epoch_losses = []
        for idx in minibatches(len(x), config.batch_size, batch_rng):
            loss = F.softmax_cross_entropy(model(x[idx]), y[idx])
            grads = backward(loss, model.params)
            adam_step(adam, model.params, grads, config.outer_lr)
            epoch_losses.append(loss.item())
            result.steps += 1
        result.losses += epoch_losses
        train_acc, _ = evaluate(model, x, y)
        result.validation_acc, _ = evaluate(model, x_val, y_val)
        record_h(MetricsRecord(result.steps, C.Phase.pretrain, num_classes,
                               train_acc, result.validation_acc,
                               float(np.mean(epoch_losses)),
                               time.perf_counter() - start))
        logger.debug("epoch %d: loss %.4f, validation %s", epoch,
                     np.mean(epoch_losses), result.validation_acc)
    return result


def asb_episode_update(model, adam, episode, inner_lr, outer_lr, meta):
    """One adapt-then-remember step. The inner loop takes one SGD step per
    example of episode.x_inner. Meta mode differentiates the outer loss
    through the inner steps back to their start and leaves the model at the
    start plus the Adam step; otherwise the outer step starts where the inner
    loop ended. Returns the outer loss."""
    params = model.params
    if meta:
        theta = list(params)
        for x_i, y_i in zip(episode.x_inner, episode.y_inner):
            loss = F.softmax_cross_entropy(model.forward(x_i[None], theta),
                                           [y_i])
            grads = backward(loss, theta, create_graph=True)
            theta = sgd_step_functional(theta, grads, inner_lr)
    else:
        for x_i, y_i in zip(episode.x_inner, episode.y_inner):
            loss = F.softmax_cross_entropy(model.forward(x_i[None]), [y_i])
            sgd_step_inplace(params, backward(loss, params), inner_lr)
        theta = params

    outer = F.softmax_cross_entropy(model.forward(episode.x_outer, theta),
                                    episode.y_outer)
    grads = backward(outer, params)
    adam_step(adam, params, grads, outer_lr)
    return outer.item()


def pretrain_asb(config, dataset, split, model=None, record_h=_ignore,
                 event_h=_ignore):
    """S outer steps of: sample an episode, zap its class, adapt on it one
    example at a time, then remember with one batch update."""
    if config.method not in (C.Method.asb, C.Method.meta_asb):
        raise ValueError("method: pretrain_asb needs asb or meta_asb, got {}"
                         .format(config.method.name))
    policy = config.zap_policy()
    if policy.mode == C.ZapMode.iid_cadence:
        raise ValueError("zap: iid_cadence zapping needs method iid")
    num_classes = len(split.pretrain_classes)
    if model is None:
        model = new_model(config, dataset, num_classes)
    x, y = pretrain_arrays(dataset, split, 'train')
    x_val, y_val = pretrain_arrays(dataset, split, 'validation')
    adam = AdamState(model.params)
    episode_rng = spawn_rng(config.pretrain_seed, 'episodes')
    zap_rng = spawn_rng(config.pretrain_seed, 'zap')
    reset_state = adam if policy.reset_optimizer_state else None

    result = PretrainResult(model)
    start = time.perf_counter()

    def record(step, loss):
        train_acc, _ = evaluate(model, x, y)
        result.validation_acc, _ = evaluate(model, x_val, y_val)
        record_h(MetricsRecord(step, C.Phase.pretrain, num_classes,
                               train_acc, result.validation_acc, loss,
                               time.perf_counter() - start))

    for step in _progress(range(1, config.outer_steps + 1), desc='outer'):
        episode = sample_episode(dataset, split, config.inner_steps,
                                 config.remember_size, episode_rng)
        if policy.mode == C.ZapMode.per_episode_class:
            zap_class(model, episode.label, zap_rng, reset_state)
            event_h(ZapEvent(step, C.Phase.pretrain, policy.mode,
                             [episode.label]))
        loss = asb_episode_update(model, adam, episode, config.inner_lr,
                                  config.outer_lr, config.meta)
        result.losses.append(loss)
        result.steps = step
        if step % config.eval_every == 0 or step == config.outer_steps:
            record(step, loss)
    return result


def pretrain(config, dataset, split, model=None, record_h=_ignore,
             event_h=_ignore):
    if config.method == C.Method.iid:
        fn = pretrain_iid
    else:
        fn = pretrain_asb
    logger.info("pre-training %s on %d classes", config.tag(),
                len(split.pretrain_classes))
    return fn(config, dataset, split, model, record_h, event_h)


def _check_disjoint(split, seen_classes):
    seen = set(split.pretrain_classes) | set(seen_classes or ())
    overlap = sorted(seen & set(split.transfer_classes))
    if overlap:
        raise DatasetError("transfer classes {} were seen in pre-training"
                           .format(overlap[:5]))
    if not split.transfer_classes:
        raise DatasetError("the split has no transfer classes")


def transfer_order(config, split):
    """Seeded presentation order of the transfer classes."""
    rng = spawn_rng(config.transfer_seed, 'order')
    return [int(c) for c in rng.permutation(split.transfer_classes)]


def transfer_sequential(model, config, dataset, split, seen_classes=None,
                        record_h=_ignore):
    """Replace the head, then show the transfer classes one at a time, one
    SGD step per image. Frozen mode updates the head only."""
    _check_disjoint(split, seen_classes)
    order = transfer_order(config, split)
    net = model.with_new_head(len(order),
                              spawn_rng(config.transfer_seed, 'head'))
    trainable = net.fc_parameters() if config.freeze else net.parameters()

    result = TransferResult(net, class_order=order)
    seen_x, seen_y, held_x, held_y = [], [], [], []
    start = time.perf_counter()
    for label, c in enumerate(_progress(order, desc='classes')):
        train, test = transfer_partition(dataset, split, c)
        for image in train:
            loss = F.softmax_cross_entropy(net(image[None]), [label])
            sgd_step_inplace(trainable, backward(loss, trainable),
                             config.transfer_lr)
        seen_x.append(train)
        seen_y.append(np.full(len(train), label, dtype=np.int64))
        held_x.append(test)
        held_y.append(np.full(len(test), label, dtype=np.int64))

        classes_seen = label + 1
        if classes_seen % config.transfer_eval_every == 0 or \
                classes_seen == len(order):
            train_acc, loss = evaluate(net, np.concatenate(seen_x),
                                       np.concatenate(seen_y))
            test_acc, _ = evaluate(net, np.concatenate(held_x),
                                   np.concatenate(held_y))
            rec = MetricsRecord(classes_seen, C.Phase.transfer, classes_seen,
                                train_acc, test_acc, loss,
                                time.perf_counter() - start)
            result.records.append(rec)
            record_h(rec)
    return result


def transfer_iid(model, config, dataset, split, seen_classes=None,
                 record_h=_ignore):
    """Replace the head, then fine-tune every weight with Adam over shuffled
    mini-batches of all transfer classes."""
    _check_disjoint(split, seen_classes)
    order = transfer_order(config, split)
    net = model.with_new_head(len(order),
                              spawn_rng(config.transfer_seed, 'head'))
    adam = AdamState(net.params)
    batch_rng = spawn_rng(config.transfer_seed, 'batches')

    xs, ys, xt, yt = [], [], [], []
    for label, c in enumerate(order):
        train, test = transfer_partition(dataset, split, c)
        xs.append(train)
        ys.append(np.full(len(train), label, dtype=np.int64))
        xt.append(test)
        yt.append(np.full(len(test), label, dtype=np.int64))
    x, y = np.concatenate(xs), np.concatenate(ys)
    x_test, y_test = np.concatenate(xt), np.concatenate(yt)

    result = TransferResult(net, class_order=order)
    start = time.perf_counter()

    def record(step, last):
        if step % config.transfer_eval_every != 0 and not last:
            return
        train_acc, loss = evaluate(net, x, y)
        test_acc, _ = evaluate(net, x_test, y_test)
        rec = MetricsRecord(step, C.Phase.transfer, len(order), train_acc,
                            test_acc, loss, time.perf_counter() - start)
        result.records.append(rec)
        record_h(rec)

    step = 0
    record(step, config.transfer_epochs == 0)
    for epoch in _progress(range(config.transfer_epochs), desc='epochs'):
        batches = minibatches(len(x), config.transfer_batch_size, batch_rng)
        for i, idx in enumerate(batches):
            loss = F.softmax_cross_entropy(net(x[idx]), y[idx])
            adam_step(adam, net.params, backward(loss, net.params),
                      config.transfer_lr)
            step += 1
            record(step, epoch == config.transfer_epochs - 1 and
                   i == len(batches) - 1)
    return result


def transfer(model, config, dataset, split, seen_classes=None,
             record_h=_ignore):
    if config.transfer_mode == C.TransferMode.sequential:
        fn = transfer_sequential
    else:
        fn = transfer_iid
    logger.info("%s transfer to %d classes at lr %g",
                config.transfer_mode.name, len(split.transfer_classes),
                config.transfer_lr)
    return fn(model, config, dataset, split, seen_classes, record_h)
