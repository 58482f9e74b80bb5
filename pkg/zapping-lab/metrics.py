import json
import logging
import os
from dataclasses import dataclass, field

import constants as C
from utils import make_hash_sha256

# metrics.py
# Measurement records, the newline-delimited metrics stream and summary files.

logger = logging.getLogger(__name__)

METRICS_FILE = 'metrics.ndjson'
TIMING_FILE = 'timing.ndjson'
SUMMARY_FILE = 'summary.json'


def _check_accuracy(name, value):
    if value is not None and not 0.0 <= value <= 1.0:
        raise ValueError("{} must lie in [0, 1], got {}".format(name, value))


@dataclass
class MetricsRecord:
    """
    One evaluation point. train_acc is measured on the examples trained on so
    far, test_acc on held-out examples. Fields a protocol does not measure are
    None.
    """
    step: int
    phase: C.Phase
    classes_seen: int
    train_acc: float = None
    test_acc: float = None
    loss: float = None
    wall_clock: float = 0.0

    def __post_init__(self):
        _check_accuracy('train_acc', self.train_acc)
        _check_accuracy('test_acc', self.test_acc)

    def dump(self):
        # wall_clock is kept out: it goes to the timing sidecar
        return {
            'kind': 'metrics',
            'step': int(self.step),
            'phase': self.phase.name,
            'classes_seen': int(self.classes_seen),
            'train_acc': self.train_acc,
            'test_acc': self.test_acc,
            'loss': self.loss
        }

    @classmethod
    def load(cls, d, wall_clock=0.0):
        return cls(d['step'], C.Phase[d['phase']], d['classes_seen'],
                   d['train_acc'], d['test_acc'], d['loss'], wall_clock)


@dataclass
class ZapEvent:
    step: int
    phase: C.Phase
    mode: C.ZapMode
    classes: list = field(default_factory=list)

    def dump(self):
        return {
            'kind': 'zap',
            'step': int(self.step),
            'phase': self.phase.name,
            'mode': self.mode.name,
            'classes': [int(c) for c in self.classes]
        }


class MetricsStream:
    """
    Sink for MetricsRecords and ZapEvents. Lines are kept in memory and,
    when a directory is given, appended to metrics.ndjson as they arrive.
    Wall-clock times go to timing.ndjson so that the metrics file itself is
    reproducible byte for byte.
    """

    def __init__(self, directory=None, header=None):
        self.directory = directory
        self.header = dict(header or {})
        self.header['kind'] = 'header'
        self.records = []
        self.events = []
        self.lines = []
        self._last_step = {}
        if directory is not None:
            os.makedirs(directory, exist_ok=True)
            for name in (METRICS_FILE, TIMING_FILE):
                open(os.path.join(directory, name), 'w').close()
        self._write(self.header)

    def _write(self, obj, timing=None):
        line = json.dumps(obj, sort_keys=True)
        self.lines.append(line)
        if self.directory is None:
            return
        with open(os.path.join(self.directory, METRICS_FILE), 'a') as f:
            f.write(line + '\n')
        if timing is not None:
            with open(os.path.join(self.directory, TIMING_FILE), 'a') as f:
                f.write(json.dumps(timing, sort_keys=True) + '\n')

    def record(self, rec):
        last = self._last_step.get(rec.phase)
        if last is not None and rec.step <= last:
            raise ValueError("{} step {} does not follow step {}".format(
                rec.phase.name, rec.step, last))
        self._last_step[rec.phase] = rec.step
        self.records.append(rec)
        self._write(rec.dump(), timing={'phase': rec.phase.name,
                                        'step': int(rec.step),
                                        'wall_clock': rec.wall_clock})

    def zap(self, event):
        self.events.append(event)
        self._write(event.dump())

    def digest(self):
        """Running hash of every line, in order."""
        h = ""
        for line in self.lines:
            h = make_hash_sha256(h + make_hash_sha256(line))
        return h


def read_metrics(directory):
    """Returns (header, records, events) of a metrics directory."""
    path = os.path.join(directory, METRICS_FILE)
    if not os.path.exists(path):
        raise FileNotFoundError("no metrics stream at {}".format(path))

    timings = {}
    timing_path = os.path.join(directory, TIMING_FILE)
    if os.path.exists(timing_path):
        with open(timing_path) as f:
            for line in f:
                if line.strip():
                    t = json.loads(line)
                    timings[(t['phase'], t['step'])] = t['wall_clock']

    header, records, events = None, [], []
    with open(path) as f:
        for line in f:
            if not line.strip():
                continue
            obj = json.loads(line)
            kind = obj.get('kind')
            if kind == 'header':
                header = obj
            elif kind == 'metrics':
                wall = timings.get((obj['phase'], obj['step']), 0.0)
                records.append(MetricsRecord.load(obj, wall))
            elif kind == 'zap':
                events.append(ZapEvent(obj['step'], C.Phase[obj['phase']],
                                       C.ZapMode[obj['mode']],
                                       obj['classes']))
            else:
                raise ValueError("{}: unknown record kind '{}'".format(
                    path, kind))
    return header, records, events


def write_summary(directory, summary):
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, SUMMARY_FILE), 'w') as f:
        json.dump(summary, f, indent=2, sort_keys=True)


def read_summary(directory):
    with open(os.path.join(directory, SUMMARY_FILE)) as f:
        return json.load(f)
