"""Counter-based random streams, derived purely from (seed, purpose, index).

Philox is counter-based, so replications can run in any order (or in
parallel) and still see identical draws: each (purpose, rep) pair keys
its own stream through the seed sequence spawn key.
"""

import numpy as np

ATOMS = 1
NOISE = 2
EVAL = 3
DESIGN = 4
L2_SAMPLE = 5
GRAM = 6

_PURPOSES = {ATOMS, NOISE, EVAL, DESIGN, L2_SAMPLE, GRAM}


def stream(seed, purpose, rep=0):
    """Independent generator for one (seed, purpose, replication) triple."""
    if purpose not in _PURPOSES:
        raise ValueError(f"unknown stream purpose {purpose}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(purpose), int(rep)))
    return np.random.Generator(np.random.Philox(ss))


def sphere_noise(rng, dim, eta):
    """Noise vector with norm uniformly in [0, eta]: a uniform direction
    scaled by a uniform radius, so the bound ||eps|| <= eta always holds
    and the constraint-ball boundary gets exercised."""
    if eta == 0.0:
        return np.zeros(dim)
    direction = rng.normal(size=dim)
    direction /= np.linalg.norm(direction)
    return direction * (eta * rng.uniform())
