import functools
import json
import logging
import os
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor, as_completed

import numpy as np

import concurrency as R
import config as cfg
from data import DatasetError, SplitPlan, load_preset
from metrics import MetricsStream, read_summary, write_summary, SUMMARY_FILE
from models import SpecError, load_checkpoint, save_checkpoint
from stats import summarize
from trial_context import TrialContext
from utils import source_revision

# sweep.py
# Trial workers, grid sweeps and best-learning-rate selection.

logger = logging.getLogger(__name__)

CHECKPOINT_FILE = 'checkpoint.npz'
MANIFEST_FILE = 'manifest.json'
REPORT_FILE = 'report.json'


class SweepError(RuntimeError):
    pass


@functools.lru_cache(maxsize=4)
def _cached_dataset(name, data_root, synth, n_train):
    return load_preset(name, data_root, dict(synth), n_train)


def load_dataset(config, data_root=None):
    """Datasets are immutable once loaded, so each process keeps a few."""
    synth = tuple(sorted(config.synth_options().items()))
    return _cached_dataset(config.dataset, data_root or cfg.DATA_ROOT, synth,
                           config.n_train)


def _header(config, phase):
    return {'phase': phase, 'config_hash': config.digest(),
            'config': config.dump()}


def check_architecture(config, model, dataset):
    expected = config.architecture_spec(model.spec.num_classes,
                                        dataset.image_shape)
    if expected.digest() != model.spec.digest():
        raise SpecError("architecture: checkpoint holds {} but the config "
                        "asks for {}".format(model.spec.dump(),
                                             expected.dump()))


def check_dataset(provenance, dataset):
    recorded = provenance.get('dataset_hash')
    if recorded and recorded != dataset.digest():
        raise DatasetError("dataset: checkpoint was pre-trained on dataset {} "
                           "but the config loads {}".format(
                               recorded[:12], dataset.digest()[:12]))


def run_pretrain(config, out_dir, label=None, data_root=None):
    """Pre-train one model; writes checkpoint, metrics and summary."""
    dataset = load_dataset(config, data_root)
    stream = MetricsStream(out_dir, _header(config, 'pretrain'))
    trial = TrialContext(config, dataset, stream.record, stream.zap)
    trial.pretrain()
    summary = trial.summary()
    summary.update(phase='pretrain', metrics_digest=stream.digest(),
                   label=label or summary['tag'])
    save_checkpoint(trial.model, os.path.join(out_dir, CHECKPOINT_FILE),
                    provenance={
                        'config_hash': summary['config_hash'],
                        'pretrain_seed': config.pretrain_seed,
                        'dataset_hash': summary['dataset_hash'],
                        'split': trial.split.dump(),
                        'pretrain_validation_acc':
                            summary['pretrain_validation_acc'],
                        'revision': source_revision()})
    write_summary(out_dir, summary)
    return summary


def run_transfer(config, checkpoint, out_dir, label=None, data_root=None):
    """Transfer one checkpoint; writes metrics and summary."""
    model, meta = load_checkpoint(checkpoint)
    dataset = load_dataset(config, data_root)
    check_architecture(config, model, dataset)
    provenance = meta.get('provenance', {})
    check_dataset(provenance, dataset)
    seen = provenance.get('split', {}).get('pretrain_classes')

    split = None
    if 'split' in provenance:
        # Transfer onto the classes the checkpoint was split against
        s = provenance['split']
        split = SplitPlan(tuple(s['pretrain_classes']),
                          tuple(s['transfer_classes']), s['seed'],
                          config.transfer_train, config.transfer_test)

    stream = MetricsStream(out_dir, _header(config, 'transfer'))
    trial = TrialContext(config, dataset, stream.record, stream.zap,
                         split=split, model=model, seen_classes=seen)
    trial.transfer()
    summary = trial.summary()
    summary.update(phase='transfer', metrics_digest=stream.digest(),
                   label=label or summary['tag'],
                   checkpoint=os.path.abspath(checkpoint),
                   pretrain_validation_acc=provenance.get(
                       'pretrain_validation_acc'))
    write_summary(out_dir, summary)
    return summary


def write_manifest(out_dir, manifest):
    with R.manifest_lock:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, MANIFEST_FILE), 'w') as f:
            json.dump(manifest, f, indent=2, sort_keys=True)


def new_manifest(out_dir, configs, config_paths=()):
    return {
        'config_paths': [os.path.abspath(p) for p in config_paths],
        'configs': {c.digest(): c.dump() for c in configs},
        'revision': source_revision(),
        'output_dir': os.path.abspath(out_dir),
        'trials': {}
    }


def _label(s):
    return '{:g}'.format(s)


def plan_sweep(configs, out_dir):
    """Expand configs over their grids. Returns (pretrain jobs, transfer
    jobs): (trial id, config, directory, label) and
    (trial id, config, checkpoint, directory, label). The label names the
    config the trial came from; repeated tags get a numeric suffix."""
    pretrain_jobs, transfer_jobs = [], []
    counts = defaultdict(int)
    for config in configs:
        label = config.tag()
        counts[label] += 1
        if counts[label] > 1:
            label = '{}-{}'.format(label, counts[label])
        lr_field = config.pretrain_lr_field()
        for plr in config.pretrain_lrs or [config.pretrain_lr()]:
            for ps in config.pretrain_seeds:
                pc = config.replace(pretrain_seed=ps, **{lr_field: plr})
                pid = '{}/plr={}_ps={}'.format(label, _label(plr), ps)
                pdir = os.path.join(out_dir, pid)
                pretrain_jobs.append((pid, pc, pdir, label))
                for tlr in config.transfer_lrs or [config.transfer_lr]:
                    for ts in config.transfer_seeds:
                        tc = pc.replace(transfer_lr=tlr, transfer_seed=ts)
                        tid = '{}/tlr={}_ts={}'.format(pid, _label(tlr), ts)
                        transfer_jobs.append((
                            tid, tc, os.path.join(pdir, CHECKPOINT_FILE),
                            os.path.join(out_dir, tid), label))
    return pretrain_jobs, transfer_jobs


def _run_jobs(fn, jobs, workers, data_root, manifest, out_dir):
    """Run fn over jobs; the first failure aborts with the trial's id."""
    results = {}

    def done(tid, status):
        manifest['trials'][tid] = status
        write_manifest(out_dir, manifest)

    if workers <= 1:
        for tid, *args in jobs:
            try:
                results[tid] = fn(*args, data_root=data_root)
            except Exception as e:
                done(tid, 'failed')
                raise SweepError("trial {} failed: {}".format(tid, e)) from e
            done(tid, 'done')
        return results

    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(fn, *args, data_root=data_root): tid
                   for tid, *args in jobs}
        for future in as_completed(futures):
            tid = futures[future]
            try:
                results[tid] = future.result()
            except Exception as e:
                done(tid, 'failed')
                for f in futures:
                    f.cancel()
                raise SweepError("trial {} failed: {}".format(tid, e)) from e
            done(tid, 'done')
    return results


def select_best(summaries):
    """Per config label, the (pre-train lr, transfer lr) pair with the
    highest mean final held-out transfer accuracy. Ties go to the smaller
    rates. Summaries without a label fall back to their method tag."""
    groups = defaultdict(list)
    for s in summaries:
        label = s.get('label') or s['tag']
        groups[(label, s['pretrain_lr'], s['transfer_lr'])].append(s)

    best = {}
    for (label, plr, tlr), trials in sorted(groups.items()):
        finals = [s['final_test_acc'] for s in trials]
        mean = float(np.mean(finals))
        if label in best and mean <= best[label]['transfer']['mean']:
            continue
        best[label] = {
            'label': label,
            'tag': trials[0]['tag'],
            'method': trials[0].get('method'),
            'zap': trials[0].get('zap'),
            'pretrain_lr': plr,
            'transfer_lr': tlr,
            'transfer': summarize(finals),
            'pretrain': summarize(s.get('pretrain_validation_acc')
                                  for s in trials),
            'finals': finals,
            'trials': [s.get('directory') for s in trials]
        }
    return best


def sweep_and_select(configs, out_dir, workers=1, data_root=None,
                     config_paths=()):
    if not configs:
        raise SweepError("the sweep grid is empty")
    pretrain_jobs, transfer_jobs = plan_sweep(configs, out_dir)
    manifest = new_manifest(out_dir, configs, config_paths)
    manifest['trials'] = {job[0]: 'pending'
                          for job in pretrain_jobs + transfer_jobs}
    write_manifest(out_dir, manifest)
    logger.info("sweep: %d pre-training and %d transfer trials",
                len(pretrain_jobs), len(transfer_jobs))

    _run_jobs(run_pretrain, pretrain_jobs, workers, data_root, manifest,
              out_dir)
    results = _run_jobs(run_transfer, transfer_jobs, workers, data_root,
                        manifest, out_dir)
    summaries = []
    for tid, summary in sorted(results.items()):
        summary['directory'] = os.path.join(out_dir, tid)
        summaries.append(summary)

    report = select_best(summaries)
    with open(os.path.join(out_dir, REPORT_FILE), 'w') as f:
        json.dump(report, f, indent=2, sort_keys=True)
    return report


def collect_summaries(directory, phase='transfer'):
    """Transfer summaries under a directory. A sweep report, when present,
    narrows them to the selected learning rates."""
    report_path = os.path.join(directory, REPORT_FILE)
    if os.path.exists(report_path):
        with open(report_path) as f:
            report = json.load(f)
        dirs = [d for entry in report.values() for d in entry['trials']]
    else:
        dirs = sorted(root for root, _, files in os.walk(directory)
                      if SUMMARY_FILE in files)
    summaries = []
    for d in dirs:
        s = read_summary(d)
        if s.get('phase') == phase:
            s['directory'] = d
            summaries.append(s)
    return summaries
