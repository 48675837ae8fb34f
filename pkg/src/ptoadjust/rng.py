"""Deterministic random substreams.

Every stream is a Philox (counter-based) generator keyed by a SeedSequence
built from the run seed plus an integer path such as ``(n, rep, purpose)``.
The draws of one replication therefore never depend on how replications are
scheduled across workers.
"""

from __future__ import annotations

import numpy as np

RNG_ALGORITHM = "numpy-Philox4x64/SeedSequence/ziggurat-normal"

DATA_STREAM = 0
BOOTSTRAP_STREAM = 1
SYNTHETIC_STREAM = 2


def substream(seed: int, *path: int) -> np.random.Generator:
    """Generator for the stream at ``path`` below ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in path))
    return np.random.Generator(np.random.Philox(ss))


def algorithm_tag() -> str:
    """Identifier of the generator stack; part of every run digest."""
    major_minor = ".".join(np.__version__.split(".")[:2])
    return f"{RNG_ALGORITHM}/numpy-{major_minor}"
