"""Deterministic RNG substreams.

Every random decision in the toolkit flows from one integer seed through a
named substream, so components (masking, init, sampling, ...) can be varied
independently and per-example streams stay reproducible under parallelism.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _name_key(name: str) -> int:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def substream(seed: int, *names: str | int) -> np.random.Generator:
    """Generator for the substream identified by ``names`` under ``seed``.

    Names may be strings (hashed) or non-negative integers (used verbatim,
    e.g. an example index). Identical (seed, names) always yields the same
    stream; distinct names yield statistically independent streams.
    """
    key = tuple(_name_key(n) if isinstance(n, str) else int(n) for n in names)
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))
