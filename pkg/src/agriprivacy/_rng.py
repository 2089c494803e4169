"""Seed-stream derivation shared by every randomized component."""

import hashlib

import numpy as np


def stream_key(label):
    """Map a text label (e.g. a market id) to a stable 32-bit stream key."""
    digest = hashlib.sha256(str(label).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")


def derive_rng(seed, *keys):
    """Return a Generator for the stream identified by ``(seed, *keys)``.

    Streams with different keys are statistically independent, and the same
    ``(seed, *keys)`` always yields the same sequence, whatever order the
    streams are created in.
    """
    spawn_key = tuple(k if isinstance(k, int) else stream_key(k) for k in keys)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=spawn_key)))
