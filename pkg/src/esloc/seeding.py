"""Deterministic seed derivation.

Every random draw in the package flows through a `numpy` Generator whose
SeedSequence is derived from explicit integer/string parts, so results are
reproducible across runs, platforms and thread counts (no reliance on
PYTHONHASHSEED or global RNG state).
"""
from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["seed_sequence", "derive_seed", "rng_from", "member_seeds"]

_MASK64 = (1 << 64) - 1


def _as_entropy(part: int | str) -> int:
    if isinstance(part, str):
        digest = hashlib.sha256(part.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    return int(part) & _MASK64


def seed_sequence(*parts: int | str) -> np.random.SeedSequence:
    """SeedSequence keyed by the given parts (ints or labels)."""
    if not parts:
        raise ValueError("at least one seed part is required")
    return np.random.SeedSequence([_as_entropy(p) for p in parts])


def derive_seed(*parts: int | str) -> int:
    """Collapse parts into a single 64-bit integer seed."""
    return int(seed_sequence(*parts).generate_state(1, np.uint64)[0])


def rng_from(*parts: int | str) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(*parts))


def member_seeds(seed: int, n: int) -> np.ndarray:
    """Per-member integer seeds derived from (seed, j).

    Member j's stream depends only on (seed, j), never on how many members
    were drawn before it, so ensembles are independent of evaluation order.
    """
    return np.array([derive_seed(seed, j) for j in range(n)], dtype=np.uint64)
