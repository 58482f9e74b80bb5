import functools
import json
import logging
import os

import click

import config as cfg
import gradcheck as G
import plotting
import sweep as S
from data import DatasetError
from metrics import read_metrics
from models import SpecError
from stats import InsufficientTrialsError, compare_groups, format_table

# cli.py
# Command-line entry point: python cli.py <command> ...

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'

EXPECTED_ERRORS = (cfg.ConfigError, DatasetError, SpecError, S.SweepError,
                   InsufficientTrialsError, FloatingPointError, ValueError,
                   OSError)


def reports_errors(fn):
    """Turn expected failures into a one-line message and exit code 1."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except EXPECTED_ERRORS as e:
            raise click.ClickException(str(e))
    return wrapper


def _label_dirs(dirs):
    labels, seen = [], {}
    for d in dirs:
        label = os.path.basename(os.path.normpath(d))
        seen[label] = seen.get(label, 0) + 1
        labels.append(label if seen[label] == 1 else
                      '{}-{}'.format(label, seen[label]))
    return labels


def config_from_manifest(path):
    with open(path) as f:
        manifest = json.load(f)
    configs = list(manifest.get('configs', {}).values())
    if len(configs) != 1:
        raise cfg.ConfigError("{}: replay needs a manifest of exactly one "
                              "config, found {}".format(path, len(configs)))
    return cfg.from_dict(configs[0])


set_option = click.option('--set', 'overrides', multiple=True,
                          metavar='KEY=VALUE',
                          help='Override one config field (JSON value).')
data_root_option = click.option('--data-root', default=None,
                                help='Dataset root (default $ZAP_DATA_ROOT).')


@click.group()
@click.option('--log-level', default='INFO', show_default=True,
              type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR']))
def cli(log_level):
    """Zapping, ASB and Meta-ASB pre-training with transfer evaluation."""
    logging.basicConfig(level=getattr(logging, log_level), format=LOG_FORMAT)


@cli.command()
@click.argument('config_path', required=False)
@click.option('--out', required=True, help='Output directory.')
@click.option('--replay', 'manifest', default=None,
              help='Re-run the config recorded in a manifest.')
@set_option
@data_root_option
@reports_errors
def pretrain(config_path, out, manifest, overrides, data_root):
    """Pre-train one model: checkpoint, metrics stream, manifest."""
    if manifest is not None:
        config = config_from_manifest(manifest)
    else:
        config = cfg.load_config(config_path, overrides)
    record = S.new_manifest(out, [config], [config_path] if config_path
                            else [])
    record['seeds'] = {'pretrain_seed': config.pretrain_seed,
                       'split_seed': config.split_seed,
                       'data_seed': config.data_seed}
    record['trials'] = {'pretrain': 'running'}
    S.write_manifest(out, record)
    try:
        summary = S.run_pretrain(config, out, data_root=data_root)
    except Exception:
        record['trials']['pretrain'] = 'failed'
        S.write_manifest(out, record)
        raise
    record['trials']['pretrain'] = 'done'
    S.write_manifest(out, record)
    click.echo("pre-trained {} (validation accuracy {}) -> {}".format(
        summary['tag'], summary['pretrain_validation_acc'], out))


@cli.command()
@click.argument('checkpoint')
@click.argument('config_path', required=False)
@click.option('--out', required=True, help='Output directory.')
@set_option
@data_root_option
@reports_errors
def transfer(checkpoint, config_path, out, overrides, data_root):
    """Transfer a checkpoint: metrics stream and summary."""
    config = cfg.load_config(config_path, overrides)
    record = S.new_manifest(out, [config], [config_path] if config_path
                            else [])
    record['checkpoint'] = os.path.abspath(checkpoint)
    record['seeds'] = {'transfer_seed': config.transfer_seed}
    record['trials'] = {'transfer': 'running'}
    S.write_manifest(out, record)
    try:
        summary = S.run_transfer(config, checkpoint, out,
                                 data_root=data_root)
    except Exception:
        record['trials']['transfer'] = 'failed'
        S.write_manifest(out, record)
        raise
    record['trials']['transfer'] = 'done'
    S.write_manifest(out, record)
    click.echo("final train accuracy {}, held-out accuracy {}".format(
        summary['final_train_acc'], summary['final_test_acc']))


@cli.command()
@click.argument('config_paths', nargs=-1, required=True)
@click.option('--out', required=True, help='Output directory.')
@click.option('--workers', default=cfg.WORKERS, show_default=True,
              type=click.IntRange(min=1), help='Parallel trial processes.')
@set_option
@data_root_option
@reports_errors
def sweep(config_paths, out, workers, overrides, data_root):
    """Run every config over its learning-rate and seed grids, then pick
    the best learning rates per config."""
    configs = [cfg.load_config(p, overrides) for p in config_paths]
    report = S.sweep_and_select(configs, out, workers, data_root,
                                config_paths)
    for label, best in sorted(report.items()):
        t = best['transfer']
        click.echo("{}: pre-train lr {:g}, transfer lr {:g}, transfer "
                   "{:.4f} ± {:.4f} (n={})".format(
                       label, best['pretrain_lr'], best['transfer_lr'],
                       t['mean'], t['std'], t['n']))


@cli.command()
@click.argument('dirs', nargs=-1, required=True)
@click.option('--json-out', default=None, help='Also write the report.')
@reports_errors
def compare(dirs, json_out):
    """Mean ± std per method and pairwise Mann-Whitney U tests."""
    groups = {label: S.collect_summaries(d)
              for label, d in zip(_label_dirs(dirs), dirs)}
    report = compare_groups(groups)
    click.echo(format_table(report))
    if json_out:
        with open(json_out, 'w') as f:
            json.dump(report, f, indent=2, sort_keys=True)


@cli.command()
@click.argument('dirs', nargs=-1, required=True)
@click.option('--out', required=True, help='Directory for the SVG files.')
@reports_errors
def plot(dirs, out):
    """Accuracy trajectories and pre-train / transfer bar charts."""
    lines = {'sequential': {}, 'iid': {}}
    bars, hashes = [], []
    for label, d in zip(_label_dirs(dirs), dirs):
        summaries = S.collect_summaries(d)
        if not summaries:
            raise ValueError("{}: no transfer results".format(d))
        mode = summaries[0]['transfer_mode']
        lines[mode][label] = {
            'zap': summaries[0]['zap'] != 'off',
            'trajectories': [read_metrics(s['directory'])[1]
                             for s in summaries]}
        bars.append({'label': label,
                     'pretrain': [s.get('pretrain_validation_acc')
                                  for s in summaries],
                     'transfer': [s.get('final_test_acc')
                                  for s in summaries]})
        hashes += [s['config_hash'] for s in summaries]

    os.makedirs(out, exist_ok=True)
    x_fields = {'sequential': 'classes_seen', 'iid': 'step'}
    for mode, groups in lines.items():
        if not groups:
            continue
        for metric in ('train_acc', 'test_acc'):
            path = os.path.join(out, '{}_{}.svg'.format(mode, metric))
            plotting.plot_trajectories(groups, path, metric, x_fields[mode],
                                       hashes)
    plotting.plot_bars(bars, os.path.join(out, 'bars.svg'), hashes)
    click.echo("plots written to {}".format(out))


@cli.command()
@click.option('--suite', 'suites', multiple=True,
              type=click.Choice(sorted(G.SUITES)),
              help='Suites to run (default all).')
@reports_errors
def gradcheck(suites):
    """Check gradients and meta-gradients against the oracles."""
    results = G.run_suites(list(suites) or None)
    for r in results:
        click.echo("{:4} {:40} {:.3g} (tol {:g})".format(
            'ok' if r.passed else 'FAIL', r.name, r.error, r.tol))
    failed = [r for r in results if not r.passed]
    if failed:
        raise click.ClickException("{} of {} checks failed".format(
            len(failed), len(results)))


if __name__ == '__main__':
    cli()
