import numpy as np
import pytest

import constants as C
from stats import (InsufficientTrialsError, compare_groups, format_table,
                   mann_whitney_u, summarize)

# test_stats.py
# Tests for the significance tests and result tables


def trials(finals, **fields):
    out = []
    for f in finals:
        s = {'method': 'asb', 'zap': 'off', 'architecture_hash': 'a',
             'dataset_hash': 'd', 'pretrain_validation_acc': 0.5,
             'final_test_acc': f}
        s.update(fields)
        out.append(s)
    return out


def test_mann_whitney_u():
    # complete separation, exact two-sided p = 2 / C(10, 5)
    u, p = mann_whitney_u([6, 7, 8, 9, 10], [1, 2, 3, 4, 5])
    assert u == 25.0
    assert np.isclose(p, 2 / 252)

    u_back, p_back = mann_whitney_u([1, 2, 3, 4, 5], [6, 7, 8, 9, 10])
    assert u_back == 0.0
    assert np.isclose(p_back, p)


def test_mann_whitney_u_symmetry():
    rng = np.random.default_rng(C.TEST_RANDOM_SEED)
    for _ in range(C.N_ELEMENT_TESTS):
        a = rng.normal(size=int(rng.integers(2, 12)))
        b = rng.normal(0.5, size=int(rng.integers(2, 12)))
        u_ab, p_ab = mann_whitney_u(a, b)
        u_ba, p_ba = mann_whitney_u(b, a)
        assert np.isclose(u_ab + u_ba, a.size * b.size)
        assert np.isclose(p_ab, p_ba)
        assert 0.0 < p_ab <= 1.0


def test_mann_whitney_u_ties():
    assert mann_whitney_u([0.5, 0.5], [0.5, 0.5, 0.5]) == (3.0, 1.0)
    u, p = mann_whitney_u([0.1, 0.2, 0.2, 0.4], [0.2, 0.3, 0.3, 0.5])
    assert 0.0 < p <= 1.0
    with pytest.raises(ValueError):
        mann_whitney_u([], [1.0])


def test_summarize():
    assert summarize([1.0, 2.0, 3.0]) == {'mean': 2.0, 'std': 1.0, 'n': 3}
    assert summarize([0.4]) == {'mean': 0.4, 'std': 0.0, 'n': 1}
    assert summarize([None, 0.4]) == {'mean': 0.4, 'std': 0.0, 'n': 1}
    assert summarize([]) == {'mean': None, 'std': None, 'n': 0}


def test_compare_groups():
    groups = {'asb+zap': trials([0.8, 0.82, 0.85, 0.79, 0.81],
                                zap='per_episode_class'),
              'asb': trials([0.6, 0.62, 0.61, 0.59, 0.63])}
    report = compare_groups(groups)
    assert [r['label'] for r in report['rows']] == ['asb+zap', 'asb']
    assert report['rows'][0]['transfer']['n'] == 5
    assert np.isclose(report['rows'][1]['transfer']['mean'], 0.61)
    (test,) = report['tests']
    assert (test['a'], test['b']) == ('asb+zap', 'asb')
    assert test['u'] == 25.0
    assert test['p'] < C.P_VALUE_THRESHOLD

    table = format_table(report)
    assert 'asb+zap' in table
    assert '81.4 ± ' in table
    assert 'asb+zap vs asb: U = 25' in table
    assert table.rstrip().endswith('*')


def test_compare_groups_exceptions():
    with pytest.raises(InsufficientTrialsError):
        compare_groups({'asb': trials([0.5, 0.6])})
    with pytest.raises(InsufficientTrialsError):
        compare_groups({'asb': trials([0.5, 0.6]), 'iid': trials([0.5])})
    with pytest.raises(ValueError):
        compare_groups({'asb': trials([0.5, 0.6]),
                        'iid': trials([0.5, 0.6], architecture_hash='b')})
    with pytest.raises(ValueError):
        compare_groups({'asb': trials([0.5, 0.6]),
                        'iid': trials([0.5, 0.6], dataset_hash='e')})
