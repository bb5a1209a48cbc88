"""Shared fixtures: cached conversations so slow synthesis runs once."""

import numpy as np
import pytest

from cssep import mixgen

_CACHE = {}


def make_conversation(overlap: float, seed: int, min_length: float = 15.0):
    """Deterministic two-speaker conversation, cached per (overlap, seed)."""
    key = (overlap, seed, min_length)
    if key not in _CACHE:
        spec = mixgen.MixtureSpec(target_overlap=overlap, seed=seed,
                                  min_length_seconds=min_length)
        rng = np.random.default_rng([seed, 1])
        pools = (mixgen.UtterancePool.draw(0, rng, 64),
                 mixgen.UtterancePool.draw(1, rng, 64))
        _CACHE[key] = mixgen.build_conversation(pools, spec, f"conv-{seed}")
    return _CACHE[key]


@pytest.fixture
def conversation():
    return make_conversation


@pytest.fixture(scope="session")
def conversation_40():
    return make_conversation(0.4, 100)
