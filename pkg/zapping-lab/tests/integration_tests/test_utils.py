import numpy as np

import constants as C
from utils import make_hash_sha256, make_hashable, source_revision, spawn_rng

# test_utils.py


def test_make_hash_sha256():
    w = {'a': ['b', None, dict(c=dict(), d=(1, 2))], (3, 4): 'e'}
    x = {'a': ['b', None, dict(c=dict(), d=(1, 2))], (3, 4): 'e'}
    y = {'b': ['b', None, dict(c=dict(), d=(1, 2))], (3, 4): 'e'}
    z = {(3, 4): 'e', 'b': ['b', None, dict(c=dict(), d=(1, 2))]}
    assert make_hash_sha256(w) == make_hash_sha256(x)
    assert make_hash_sha256(x) != make_hash_sha256(y)
    assert make_hash_sha256(y) == make_hash_sha256(z)


def test_make_hashable():
    a = np.arange(3.0)
    assert make_hashable(a) == make_hashable(a.copy())
    assert make_hashable(a) != make_hashable(a.astype(np.float32))
    assert make_hashable(C.Method.asb) == 'asb'
    assert make_hashable(np.int64(4)) == 4
    assert make_hashable({1, 2}) == make_hashable({2, 1})
    hash(make_hashable({'x': [a, {'y': C.ZapMode.off}]}))


def test_spawn_rng():
    a = spawn_rng(3, 'episodes').normal(size=4)
    assert np.array_equal(a, spawn_rng(3, 'episodes').normal(size=4))
    assert not np.array_equal(a, spawn_rng(3, 'zap').normal(size=4))
    assert not np.array_equal(a, spawn_rng(4, 'episodes').normal(size=4))
    assert not np.array_equal(spawn_rng(0, 'glyph', 1).normal(size=4),
                              spawn_rng(0, 'glyph', 2).normal(size=4))


def test_source_revision():
    rev = source_revision()
    assert isinstance(rev, str) and rev
