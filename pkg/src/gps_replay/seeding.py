"""Named sub-seeds derived from one master seed.

``Seeds(master).seed(name, *ids)`` hashes ``(master, crc32(name), *ids)``
through ``numpy.random.SeedSequence``; components draw from their own streams
(``subsample``, ``permutation``, ``init``, ``policy``, ``train``, ``replay``, ``rebuild``,
``simulation``) so any one can be perturbed without moving the others.
"""
from __future__ import annotations

import zlib

import numpy as np


class Seeds:
    def __init__(self, master: int):
        self.master = int(master)

    def seed(self, name: str, *ids: int) -> int:
        ss = np.random.SeedSequence([self.master, zlib.crc32(name.encode()),
                                     *[int(i) for i in ids]])
        return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))

    def rng(self, name: str, *ids: int) -> np.random.Generator:
        return np.random.default_rng(self.seed(name, *ids))

    def child(self, name: str, *ids: int) -> "Seeds":
        return Seeds(self.seed(name, *ids))
