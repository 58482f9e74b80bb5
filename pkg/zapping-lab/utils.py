import base64
import dataclasses
import hashlib
import subprocess
from enum import Enum

import numpy as np


def make_hashable(x):
    """Make a generic object hashable.
    From https://stackoverflow.com/questions/5884066/hashing-a-dictionary
    Dict keys are sorted so the result does not depend on insertion order."""
    if isinstance(x, np.ndarray):
        return ('ndarray', x.dtype.str, x.shape, x.tobytes())
    elif isinstance(x, Enum):
        return x.name
    elif dataclasses.is_dataclass(x) and not isinstance(x, type):
        return make_hashable(dataclasses.asdict(x))
    elif isinstance(x, (tuple, list)):
        return tuple((make_hashable(e) for e in x))
    elif isinstance(x, dict):
        items = ((repr(k), make_hashable(v)) for k, v in x.items())
        return tuple(sorted(items, key=lambda kv: kv[0]))
    elif isinstance(x, (set, frozenset)):
        return tuple(sorted(repr(make_hashable(e)) for e in x))
    elif isinstance(x, np.generic):
        return x.item()

    return x


def make_hash_sha256(x):
    """Hash a dictionary in a platform-independent manner.
    From https://stackoverflow.com/questions/5884066/hashing-a-dictionary"""
    hasher = hashlib.sha256()
    hasher.update(repr(make_hashable(x)).encode())
    return base64.b64encode(hasher.digest()).decode()


def spawn_rng(seed, *stream):
    """Independent numpy Generator for the named stream of a seed.
    Streams are keyed by strings so that adding a stream never shifts
    the draws of another one."""
    keys = [int(seed)]
    for s in stream:
        if isinstance(s, str):
            keys.append(int.from_bytes(hashlib.sha256(s.encode()).digest()[:4],
                                       'little'))
        else:
            keys.append(int(s))
    return np.random.default_rng(keys)


def source_revision():
    """Git revision of the working tree, or 'unknown' outside a checkout."""
    try:
        out = subprocess.run(['git', 'rev-parse', 'HEAD'],
                             capture_output=True, text=True, timeout=5)
    except (OSError, subprocess.SubprocessError):
        return 'unknown'
    rev = out.stdout.strip()
    return rev if out.returncode == 0 and rev else 'unknown'
