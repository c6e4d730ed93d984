'''
Seeded random streams.

Every episode draws from counter-based Philox generators keyed by
(base seed, episode index, stream role), so episodes are reproducible on their own
and independent of the order they run in. Schedulers compared under the same
(seed, episode) see the same channel realizations (common random numbers).
'''

from __future__ import annotations

import numpy as np


ROLES = {'channel': 0, 'tiebreak': 1, 'instance': 2, 'trace': 3, 'markov': 4}

_BLOCK = 4096


def episode_rng(seed: int, episode: int, role: str) -> np.random.Generator:
    '''Independent generator for one (seed, episode, role) triple.'''
    if role not in ROLES:
        raise ValueError(f'unknown stream role {role!r}; known: {sorted(ROLES)}')
    seq = np.random.SeedSequence([int(seed), int(episode), ROLES[role]])
    return np.random.Generator(np.random.Philox(seq))


class UniformStream:
    '''
    Scalar uniforms pulled from a generator in blocks.

    Hands out exactly the sequence rng.random(n) would produce, one value per call;
    the per-slot loop calls random() far too often to pay numpy's per-call overhead.
    '''

    def __init__(self, rng: np.random.Generator) -> None:
        self._rng = rng
        self._buf: list[float] = []
        self._pos = 0

    def random(self) -> float:
        if self._pos >= len(self._buf):
            self._buf = self._rng.random(_BLOCK).tolist()
            self._pos = 0
        value = self._buf[self._pos]
        self._pos += 1
        return value
