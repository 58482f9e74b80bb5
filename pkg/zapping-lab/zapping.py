import logging
from dataclasses import dataclass

import numpy as np

import constants as C
from models import kaiming_normal

# zapping.py
# Implements zapping: resampling the final-layer rows of chosen classes from
# the initial distribution (Kaiming-Normal weights, zero bias).

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ZapPolicy:
    mode: C.ZapMode = C.ZapMode.off
    k_classes: object = 'all'  # count, fraction in (0, 1], 'all' or a name
    cadence_epochs: int = 1
    reset_optimizer_state: bool = True

    def __post_init__(self):
        if self.cadence_epochs < 1:
            raise ValueError("cadence_epochs must be positive")

    def resolve_k(self, num_classes):
        k = self.k_classes
        if isinstance(k, str):
            if k == 'all':
                return num_classes
            if k not in C.ZAP_AMOUNTS:
                raise ValueError("unknown zap amount '{}'".format(k))
            k = C.ZAP_AMOUNTS[k]
        # Floats are fractions of the head (1.0 is all); ints are counts
        if isinstance(k, float):
            if not 0.0 < k <= 1.0:
                raise ValueError("zap fraction must lie in (0, 1]")
            return max(1, int(round(k * num_classes)))
        k = int(k)
        if k < 0:
            raise ValueError("cannot zap a negative number of classes")
        if k > num_classes:
            raise ValueError("cannot zap {} of {} classes".format(
                k, num_classes))
        return k

    def dump(self):
        return {
            'mode': self.mode.name,
            'k_classes': self.k_classes,
            'cadence_epochs': self.cadence_epochs,
            'reset_optimizer_state': self.reset_optimizer_state
        }


def zap_class(model, class_index, rng, optimizer_state=None):
    """Resample the fc row of one class and zero its bias entry. Nothing else
    in the model changes."""
    weight, bias = model.fc_weight, model.fc_bias
    num_classes, fan_in = weight.shape
    if not 0 <= class_index < num_classes:
        raise IndexError("class {} is outside a {}-class head".format(
            class_index, num_classes))
    weight.data[class_index] = kaiming_normal((fan_in,), fan_in, rng,
                                              weight.dtype)
    bias.data[class_index] = 0
    if optimizer_state is not None:
        optimizer_state.reset_rows(model.index_of('fc.weight'), [class_index])
        optimizer_state.reset_rows(model.index_of('fc.bias'), [class_index])


def zap_iid(model, policy, epoch_index, rng, optimizer_state=None):
    """Zap k distinct classes when epoch_index is on the cadence.
    Returns the zapped classes in ascending order."""
    if policy.mode != C.ZapMode.iid_cadence:
        raise ValueError("zap_iid needs an iid_cadence policy, got {}".format(
            policy.mode.name))
    num_classes = model.fc_weight.shape[0]
    k = policy.resolve_k(num_classes)
    if epoch_index % policy.cadence_epochs != 0 or k == 0:
        return []
    if k == num_classes:
        classes = np.arange(num_classes)
    else:
        classes = np.sort(rng.choice(num_classes, size=k, replace=False))
    for c in classes:
        zap_class(model, int(c), rng, optimizer_state)
    logger.debug("epoch %d: zapped %d of %d classes", epoch_index, k,
                 num_classes)
    return [int(c) for c in classes]
