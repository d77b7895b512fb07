"""Seeded random streams for reproducible simulation runs.

Every random draw of a run comes from a generator keyed by the run seed
plus a fixed stream label and, where work is split, a chunk index. Work
split across threads therefore draws the same numbers as a serial run.
"""

import numpy as np

from ..errors import DomainError

# Stream labels; never renumber, recorded runs depend on them.
SAMPLING = 1
INJECTION = 2
SYNTHETIC = 3
ABILITIES = 4


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for (seed, keys...)."""
    if seed < 0 or any(k < 0 for k in keys):
        raise DomainError(f"seed and stream keys must be non-negative, got {(seed, *keys)}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, keys)])))
