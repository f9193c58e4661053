"""Seeded Rademacher and Gaussian probe vectors.

Each :class:`ProbeStream` owns a PCG64 generator seeded from
``SeedSequence(master_seed, spawn_key=(trial_index, *key))``. Streams with
different spawn keys are statistically independent, so trials can be
scheduled in any order (or in parallel) and still replay bit for bit.
"""

from __future__ import annotations

import enum
from typing import Optional

import numpy as np

DEFAULT_SEED = 20220125


class ProbeDistribution(enum.Enum):
    RADEMACHER = "rademacher"
    GAUSSIAN = "gaussian"

    @classmethod
    def parse(cls, value) -> "ProbeDistribution":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown probe distribution {value!r}; expected 'rademacher' or 'gaussian'") from None


RADEMACHER = ProbeDistribution.RADEMACHER
GAUSSIAN = ProbeDistribution.GAUSSIAN


class ProbeStream:
    """Single-consumer source of i.i.d. probe vectors of length ``n``.

    Rademacher entries are drawn as ``sign`` of a uniform double compared to
    0.5, Gaussian entries with numpy's ziggurat sampler. Both consume the
    generator element by element, so ``probe_matrix(k)`` returns exactly the
    next ``k`` vectors that ``next_probe`` would have produced.
    """

    def __init__(self, n: int, dist=RADEMACHER, master_seed: int = DEFAULT_SEED,
                 trial_index: int = 0, key: tuple[int, ...] = ()):
        if n < 1:
            raise ValueError(f"probe length must be positive, got {n}")
        if trial_index < 0:
            raise ValueError(f"trial_index must be non-negative, got {trial_index}")
        self.n = int(n)
        self.dist = ProbeDistribution.parse(dist)
        self.master_seed = int(master_seed)
        self.trial_index = int(trial_index)
        self.key = tuple(int(k) for k in key)
        seq = np.random.SeedSequence(self.master_seed, spawn_key=(self.trial_index, *self.key))
        self._rng = np.random.Generator(np.random.PCG64(seq))
        self.drawn = 0

    def fork(self, label: int, dist: Optional[ProbeDistribution] = None) -> "ProbeStream":
        """Independent child stream; does not advance this one."""
        return ProbeStream(self.n, self.dist if dist is None else dist, self.master_seed,
                           self.trial_index, key=(*self.key, label))

    def _draw(self, count: int) -> np.ndarray:
        # rows are successive probes, so the layout matches repeated single draws
        if self.dist is RADEMACHER:
            rows = np.where(self._rng.random((count, self.n)) < 0.5, -1.0, 1.0)
        else:
            rows = self._rng.standard_normal((count, self.n))
        self.drawn += count
        return rows

    def next_probe(self) -> np.ndarray:
        return self._draw(1)[0]

    def probe_matrix(self, count: int) -> np.ndarray:
        """``(n, count)`` matrix whose columns are the next ``count`` probes."""
        if count < 1:
            raise ValueError(f"count must be positive, got {count}")
        return np.ascontiguousarray(self._draw(count).T)

    def __repr__(self) -> str:
        return (f"ProbeStream(n={self.n}, dist={self.dist.value}, master_seed={self.master_seed}, "
                f"trial_index={self.trial_index}, key={self.key})")
