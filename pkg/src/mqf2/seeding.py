"""Deterministic random streams derived from a single run seed.

Every source of randomness in a run (data synthesis, parameter init, batch
shuffling, path sampling) draws from its own named stream so that fixing the
run seed reproduces each component independently of the others.
"""

from __future__ import annotations

import zlib

import numpy as np

from .errors import ConfigError

STREAMS = ("data", "init", "training", "sampling")


def rng_for(seed, stream):
    """Generator for one named sub-stream of the run seed."""
    if stream not in STREAMS:
        raise ConfigError(f"unknown random stream {stream!r}; choose from {STREAMS}")
    if not isinstance(seed, (int, np.integer)) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
    salt = zlib.crc32(stream.encode("ascii"))
    return np.random.default_rng(np.random.SeedSequence([int(seed), salt]))
