import logging

import protocols as P
from data import make_split
from utils import make_hash_sha256

# trial_context.py
# Implements a TrialContext: one pre-training + transfer trial.

logger = logging.getLogger(__name__)


class TrialContext:
    def __init__(self, config, dataset, record_h, event_h, split=None,
                 model=None, seen_classes=None):

        # Instantiate the experiment
        self.config = config
        self.dataset = dataset
        if split is None:
            split = make_split(dataset, config.n_pretrain_classes,
                               config.n_transfer_classes, config.split_seed,
                               config.transfer_train, config.transfer_test)
        self.split = split

        # A model handed in is a pre-trained one (transfer-only trials)
        self.model = model
        self.seen_classes = seen_classes
        self.pretrain_result = None
        self.transfer_result = None

        # Instantiate measurement handlers
        self.record_h = record_h
        self.event_h = event_h

    def pretrain(self):
        self.pretrain_result = P.pretrain(self.config, self.dataset,
                                          self.split, None, self.record_h,
                                          self.event_h)
        self.model = self.pretrain_result.model
        self.seen_classes = list(self.split.pretrain_classes)
        return self.pretrain_result

    def transfer(self):
        if self.model is None:
            raise ValueError("transfer needs a pre-trained model")
        self.transfer_result = P.transfer(self.model, self.config,
                                          self.dataset, self.split,
                                          self.seen_classes, self.record_h)
        return self.transfer_result

    def play(self, debug=False):
        """Pre-train (unless a model was handed in), then transfer.
        With debug, returns a running hash over every measurement in order."""
        trial_hash = ""
        if debug:
            record_h, event_h = self.record_h, self.event_h

            def fold(h):
                def wrapped(item):
                    nonlocal trial_hash
                    trial_hash = make_hash_sha256(
                        trial_hash + make_hash_sha256(item.dump()))
                    return h(item)
                return wrapped
            self.record_h, self.event_h = fold(record_h), fold(event_h)

        try:
            if self.model is None:
                self.pretrain()
            self.transfer()
        finally:
            if debug:
                self.record_h, self.event_h = record_h, event_h

        if debug:
            return trial_hash
        return self.summary()

    def summary(self):
        c = self.config
        summary = {
            'config_hash': c.digest(),
            'tag': c.tag(),
            'method': c.method.name,
            'zap': c.zap.name,
            'pretrain_lr': c.pretrain_lr(),
            'transfer_lr': c.transfer_lr,
            'transfer_mode': c.transfer_mode.name,
            'freeze': c.freeze,
            'pretrain_seed': c.pretrain_seed,
            'transfer_seed': c.transfer_seed,
            'dataset_hash': self.dataset.digest(),
            'split': self.split.dump()
        }
        if self.model is not None:
            summary['architecture_hash'] = self.model.spec.digest()
        if self.pretrain_result is not None:
            summary['pretrain_validation_acc'] = \
                self.pretrain_result.validation_acc
            summary['pretrain_steps'] = self.pretrain_result.steps
        if self.transfer_result is not None:
            summary['final_train_acc'] = self.transfer_result.final_train_acc
            summary['final_test_acc'] = self.transfer_result.final_test_acc
            summary['class_order'] = self.transfer_result.class_order
        return summary

    def dump(self):
        return {
            'config': self.config.dump(),
            'dataset': self.dataset.dump(),
            'split': self.split.dump(),
            'model': self.model.dump() if self.model is not None else None
        }
