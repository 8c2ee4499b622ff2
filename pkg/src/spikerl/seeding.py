"""Deterministic random-stream management.

All stochastic components draw from numpy Generators backed by the Philox
counter-based bit generator, keyed through `numpy.random.SeedSequence`.
Independent streams are derived by spawning named children from a root
sequence, so every consumer (weight init, each layer's firing draws, each
run, each environment) owns its own stream and reproducibility does not
depend on call interleaving.
"""

from __future__ import annotations

import numpy as np


def root_sequence(seed: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed))


def generator_from(seq: np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seq))


def spawn_generators(seed: int, n: int) -> list[np.random.Generator]:
    """n independent Philox generators derived from one seed."""
    return [generator_from(child) for child in root_sequence(seed).spawn(n)]
