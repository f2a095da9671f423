"""Seeded sampling of feature index sets.

Generators are numpy ``Generator`` objects on the PCG64 bit generator, which
produces the same stream for the same seed on every platform. Independent
child streams are derived with ``SeedSequence(seed, spawn_key=key)``: tree
``i`` of an ensemble seeded with ``s`` draws from ``spawn_rng(s, i)``, so a
tree's randomness does not depend on which thread builds it or in what order.
"""

import logging

import numpy as np

from core.errors import InvalidConfigurationError
from models.data import FeatureDistribution

logger = logging.getLogger(__name__)

SeededRng = np.random.Generator


def seeded_rng(seed: int) -> SeededRng:
    """Master generator for ``seed`` (unsigned 64-bit)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def spawn_rng(seed: int, *key: int) -> SeededRng:
    """Child generator identified by ``key`` under the master ``seed``."""
    sequence = np.random.SeedSequence(int(seed), spawn_key=tuple(int(part) for part in key))
    return np.random.Generator(np.random.PCG64(sequence))


def spawn_seed(seed: int, *key: int) -> int:
    """Derived 64-bit seed, for handing a child stream to another component."""
    sequence = np.random.SeedSequence(int(seed), spawn_key=tuple(int(part) for part in key))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def sample_without_replacement(distribution: FeatureDistribution, k: int, rng: SeededRng) -> np.ndarray:
    """Draw ``k`` distinct feature indices, returned sorted.

    Each draw is proportional to the probabilities of the features not yet
    chosen (draw, remove, renormalise). Zero-probability features are only
    drawn, uniformly, once every positive-probability feature is taken.
    """
    n_features = distribution.n_features
    if k < 1 or k > n_features:
        raise InvalidConfigurationError(f"k must be in [1, {n_features}], got {k}")

    weights = np.array(distribution.probs, dtype=np.float64)
    available = np.ones(n_features, dtype=bool)
    chosen = np.empty(k, dtype=np.int64)
    for draw in range(k):
        cumulative = np.cumsum(weights)
        total = cumulative[-1]
        if total > 0:
            target = rng.random() * total
            index = int(np.searchsorted(cumulative, target, side="right"))
            if index >= n_features or weights[index] <= 0:
                # rounding pushed the target past the last positive weight
                index = int(np.flatnonzero(weights > 0)[-1])
        else:
            remaining = np.flatnonzero(available)
            index = int(remaining[rng.integers(remaining.size)])
        chosen[draw] = index
        weights[index] = 0.0
        available[index] = False
    return np.sort(chosen)


def sample_with_replacement(distribution: FeatureDistribution, k: int, rng: SeededRng) -> np.ndarray:
    """``k`` independent categorical draws; duplicates are possible."""
    if k < 1:
        raise InvalidConfigurationError(f"k must be >= 1, got {k}")
    return rng.choice(distribution.n_features, size=k, replace=True, p=distribution.probs)


def sample_feature_subset(
    distribution: FeatureDistribution,
    k: int,
    rng: SeededRng,
    with_replacement: bool = False,
) -> np.ndarray:
    """Sorted, de-duplicated feature subset for one tree."""
    if with_replacement:
        return np.unique(sample_with_replacement(distribution, k, rng))
    return sample_without_replacement(distribution, k, rng)
