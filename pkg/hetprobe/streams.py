"""Counter-based random substreams.

Every Monte-Carlo draw in the package comes from a generator that is a pure
function of ``(seed, *key)``, so work can be scheduled on any number of
threads without changing results.
"""

from typing import Tuple

import numpy as np

from hetprobe.errors import InvalidArgumentError

MAX_SEED = 2**64 - 1


def check_seed(seed: int) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise InvalidArgumentError(f"seed must be an integer, got {seed!r}")
    if not 0 <= int(seed) <= MAX_SEED:
        raise InvalidArgumentError(f"seed must lie in [0, 2**64), got {seed}")
    return int(seed)


def spawn_key(*key: int) -> Tuple[int, ...]:
    for k in key:
        if int(k) < 0:
            raise InvalidArgumentError(f"substream key entries must be non-negative, got {key}")
    return tuple(int(k) for k in key)


def substream(seed: int, *key: int) -> np.random.Generator:
    sequence = np.random.SeedSequence(check_seed(seed), spawn_key=spawn_key(*key))
    return np.random.Generator(np.random.Philox(sequence))
