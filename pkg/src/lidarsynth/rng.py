"""Counter-based random streams keyed by (master seed, sample index, stage).

Every stochastic step of the generator draws from its own Philox stream so
results never depend on how samples are distributed across workers.
"""

from __future__ import annotations

import zlib

import numpy as np

STAGES = ("pose", "scene", "mask", "jitter", "clusters")


def stage_key(stage: str) -> int:
    return zlib.crc32(stage.encode("ascii"))


def stream(master_seed: int, index: int, stage: str, attempt: int = 0) -> np.random.Generator:
    """Independent generator for one (sample, stage, attempt) triple."""
    if master_seed < 0 or index < 0 or attempt < 0:
        raise ValueError("seed, index and attempt must be non-negative")
    seq = np.random.SeedSequence([master_seed, index, stage_key(stage), attempt])
    return np.random.Generator(np.random.Philox(seq))


def sample_seed(master_seed: int, index: int) -> int:
    """64-bit per-sample seed recorded in sample metadata."""
    seq = np.random.SeedSequence([master_seed, index])
    return int(seq.generate_state(1, np.uint64)[0])
