"""Counter-based random substreams keyed by ``(master_seed, trial, role)``.

Every trial draws from its own stream, so results do not depend on the order
in which trials are scheduled or on the number of workers.
"""

import numpy as np

ROLES = {"graph": 0, "seeds": 1, "offspring": 2}


def substream(master_seed: int, index: int, role: str = "seeds") -> np.random.Generator:
    key = (int(index), ROLES[role])
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(master_seed), spawn_key=key)))
