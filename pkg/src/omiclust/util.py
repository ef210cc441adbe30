"""Small shared helpers."""

import numpy as np


def derive_seed(*parts):
    """Collapse a tuple of non-negative ints into one stable child seed.

    Keeps seeds for nested work units (replicate, fold, restart)
    independent of loop order and of each other.
    """
    ss = np.random.SeedSequence([int(p) & 0xFFFFFFFF for p in parts])
    return int(ss.generate_state(1)[0])
