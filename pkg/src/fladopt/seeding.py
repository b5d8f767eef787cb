"""Deterministic seed fan-out.

A single 64-bit master seed is split into independent child streams by a
counter-based rule: each named purpose ("init", "shuffle", ...) plus any
integer indices hash to a spawn key, so layer initialisation, data shuffles
and noise draws never share a stream and are individually reproducible.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["child_seed_sequence", "child_rng"]


def _key_words(path: tuple) -> tuple[int, ...]:
    words = []
    for part in path:
        if isinstance(part, (int, np.integer)):
            words.append(int(part) & 0xFFFFFFFF)
        else:
            digest = hashlib.sha256(str(part).encode("utf-8")).digest()
            words.append(int.from_bytes(digest[:4], "little"))
    return tuple(words)


def child_seed_sequence(master_seed: int, *path) -> np.random.SeedSequence:
    """Derive an independent SeedSequence for the stream named by `path`."""
    return np.random.SeedSequence(int(master_seed) & (2**64 - 1), spawn_key=_key_words(path))


def child_rng(master_seed: int, *path) -> np.random.Generator:
    """Generator seeded from the child stream named by `path`."""
    return np.random.default_rng(child_seed_sequence(master_seed, *path))
