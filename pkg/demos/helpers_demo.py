"""Shared bits for the demo scripts."""

import numpy as np

from chainattr import Tree


def stump(feature, threshold, left_value, right_value):
    return Tree(
        feature=np.array([feature, -1, -1]),
        threshold=np.array([threshold, 0.0, 0.0]),
        left=np.array([1, -1, -1]),
        right=np.array([2, -1, -1]),
        value=np.array([0.0, left_value, right_value]),
    )


def boosted_stumps(rng, m, rounds):
    """(trees, weights, base_score) for a random boosted-stump ensemble."""
    trees = [
        stump(
            int(rng.integers(m)),
            float(rng.normal()),
            float(rng.normal() * 0.5),
            float(rng.normal() * 0.5),
        )
        for _ in range(rounds)
    ]
    return trees, np.ones(rounds), float(rng.normal() * 0.2)
