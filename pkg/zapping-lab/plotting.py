import logging
from collections import defaultdict

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

import concurrency as R  # noqa: E402
from stats import summarize  # noqa: E402

# plotting.py
# Line and bar charts of trial results, written as SVG.

logger = logging.getLogger(__name__)


def _save(fig, path, hashes):
    fig.tight_layout()
    fig.savefig(path, format='svg', metadata={
        'Title': 'zapping-lab',
        'Identifier': ' '.join(sorted(set(hashes)))})
    plt.close(fig)


def _mean_curve(trajectories, x_field, y_field):
    """Average y over trials at each x."""
    by_x = defaultdict(list)
    for records in trajectories:
        for r in records:
            y = getattr(r, y_field)
            if y is not None:
                by_x[getattr(r, x_field)].append(y)
    xs = sorted(by_x)
    return xs, [float(np.mean(by_x[x])) for x in xs]


def plot_trajectories(groups, path, metric='test_acc', x_field='classes_seen',
                      hashes=()):
    """groups maps a label to {'zap': bool, 'trajectories': [records]}.
    One line per label, dashed for zapped variants."""
    if not groups:
        raise ValueError("nothing to plot")
    drawn = {}
    with R.plot_lock:
        fig, ax = plt.subplots(figsize=(6, 4))
        for label, group in sorted(groups.items()):
            xs, ys = _mean_curve(group['trajectories'], x_field, metric)
            style = '--' if group['zap'] else '-'
            ax.plot(xs, ys, linestyle=style, label=label)
            drawn[label] = {'x': xs, 'y': ys, 'linestyle': style}
        xlabel = 'classes seen' if x_field == 'classes_seen' else 'batches'
        ax.set_xlabel(xlabel)
        ax.set_ylabel('accuracy')
        ax.set_ylim(0.0, 1.0)
        ax.legend()
        _save(fig, path, hashes)
    logger.info("wrote %s", path)
    return {'xlabel': xlabel, 'ylabel': 'accuracy', 'lines': drawn}


def plot_bars(rows, path, hashes=()):
    """rows: [{'label', 'pretrain': [accs], 'transfer': [accs]}]. Bars are
    means, error bars the sample standard deviation."""
    if not rows:
        raise ValueError("nothing to plot")

    def stat(values):
        s = summarize(values)
        return (s['mean'] or 0.0, s['std'] or 0.0)

    labels = [r['label'] for r in rows]
    pre = [stat(r['pretrain']) for r in rows]
    trans = [stat(r['transfer']) for r in rows]
    x = np.arange(len(rows))
    width = 0.38
    with R.plot_lock:
        fig, ax = plt.subplots(figsize=(max(4, 1.5 * len(rows)), 4))
        ax.bar(x - width / 2, [m for m, _ in pre], width,
               yerr=[s for _, s in pre], capsize=3, label='pre-train')
        ax.bar(x + width / 2, [m for m, _ in trans], width,
               yerr=[s for _, s in trans], capsize=3, label='transfer')
        ax.set_xticks(x)
        ax.set_xticklabels(labels, rotation=20)
        ax.set_ylabel('accuracy')
        ax.set_ylim(0.0, 1.0)
        ax.legend()
        _save(fig, path, hashes)
    logger.info("wrote %s", path)
    return {'labels': labels,
            'pretrain': {'mean': [m for m, _ in pre],
                         'err': [s for _, s in pre]},
            'transfer': {'mean': [m for m, _ in trans],
                         'err': [s for _, s in trans]}}
