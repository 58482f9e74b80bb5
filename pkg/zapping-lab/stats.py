import itertools
import logging

import numpy as np
from scipy import stats

import constants as C

# stats.py
# Significance tests and result tables.

logger = logging.getLogger(__name__)

# Largest sample size for which the exact null distribution is used
EXACT_LIMIT = 20


class InsufficientTrialsError(ValueError):
    pass


def mann_whitney_u(sample_a, sample_b):
    """Two-sided Mann-Whitney U test. Returns (U of sample_a, p-value).
    Exact distribution for small tie-free samples, else the normal
    approximation with tie correction."""
    a = np.asarray(sample_a, dtype=float).ravel()
    b = np.asarray(sample_b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("mann_whitney_u needs two nonempty samples")
    pooled = np.concatenate([a, b])
    if np.all(pooled == pooled[0]):
        # Every rank tied: no evidence either way
        return a.size * b.size / 2.0, 1.0
    ties = np.unique(pooled).size < pooled.size
    exact = max(a.size, b.size) <= EXACT_LIMIT and not ties
    res = stats.mannwhitneyu(a, b, alternative='two-sided',
                             method='exact' if exact else 'asymptotic')
    return float(res.statistic), float(min(1.0, res.pvalue))


def summarize(values):
    """mean, sample std (ddof 1; 0 for a single value) and count."""
    values = np.asarray([v for v in values if v is not None], dtype=float)
    if values.size == 0:
        return {'mean': None, 'std': None, 'n': 0}
    std = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return {'mean': float(values.mean()), 'std': std, 'n': int(values.size)}


def _check_poolable(groups):
    for key in ('architecture_hash', 'dataset_hash'):
        found = {s.get(key) for trials in groups.values() for s in trials}
        if len(found) > 1:
            raise ValueError("refusing to pool trials with differing {}"
                             " values".format(key.replace('_', ' ')))


def compare_groups(groups, min_trials=2):
    """groups maps a label to its trial summaries. Returns per-label rows
    and pairwise tests on final transfer accuracy."""
    if len(groups) < 2:
        raise InsufficientTrialsError("compare needs at least two methods")
    for label, trials in groups.items():
        if len(trials) < min_trials:
            raise InsufficientTrialsError(
                "{}: {} trial(s), compare needs at least {}".format(
                    label, len(trials), min_trials))
    _check_poolable(groups)

    rows = []
    for label, trials in groups.items():
        rows.append({
            'label': label,
            'method': trials[0].get('method'),
            'zap': trials[0].get('zap'),
            'pretrain': summarize(s.get('pretrain_validation_acc')
                                  for s in trials),
            'transfer': summarize(s.get('final_test_acc') for s in trials),
            'finals': [s.get('final_test_acc') for s in trials]
        })
    tests = []
    for x, y in itertools.combinations(rows, 2):
        u, p = mann_whitney_u(x['finals'], y['finals'])
        tests.append({'a': x['label'], 'b': y['label'], 'u': u, 'p': p})
    return {'rows': rows, 'tests': tests}


def _cell(s):
    if s['mean'] is None:
        return '-'
    return '{:.1f} ± {:.1f}'.format(100 * s['mean'], 100 * s['std'])


def format_table(report):
    """Plain-text table: one row per method, then the pairwise p-values."""
    header = ['method', 'zap', 'pre-train', 'transfer', 'n']
    body = [[r['label'], r['zap'] or '-', _cell(r['pretrain']),
             _cell(r['transfer']), str(r['transfer']['n'])]
            for r in report['rows']]
    widths = [max(len(line[i]) for line in [header] + body)
              for i in range(len(header))]

    def fmt(line):
        return ' | '.join(c.ljust(w) for c, w in zip(line, widths)).rstrip()

    lines = [fmt(header), '-+-'.join('-' * w for w in widths)]
    lines += [fmt(line) for line in body]
    if report['tests']:
        lines.append('')
    for t in report['tests']:
        mark = '*' if t['p'] < C.P_VALUE_THRESHOLD else ''
        lines.append('{} vs {}: U = {:g}, p = {:.4g}{}'.format(
            t['a'], t['b'], t['u'], t['p'], mark))
    return '\n'.join(lines)
