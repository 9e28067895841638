"""Seed handling: one integer seed fans out into independent sub-streams."""

import numpy as np

LOCATIONS = 0
NORMALS = 1
FOLDS = 2


def substream(seed: int | None, index: int) -> np.random.Generator:
    """Generator for sub-stream ``index`` derived from ``seed``."""
    child = np.random.SeedSequence(seed).spawn(index + 1)[index]
    return np.random.default_rng(child)


def fresh_seed() -> int:
    return int(np.random.SeedSequence().generate_state(1, dtype=np.uint32)[0])
