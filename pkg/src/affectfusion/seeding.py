"""Per-stage random streams derived from one global seed."""

import hashlib

import numpy as np


def derive_seed(seed: int, stage: str) -> int:
    """Stable 63-bit seed for ``stage``; independent of Python's hash salt."""
    digest = hashlib.sha256(f"{int(seed)}:{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def stage_rng(seed: int, stage: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, stage))
