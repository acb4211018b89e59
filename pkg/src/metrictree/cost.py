"""Analytic cost model for choosing the tree fan-out.

Models a range query's expected work on a machine that evaluates
`concurrency` candidates at once.  Each level i keeps a fraction
bound(i) = max(0, 1 - 2*sigma2/r^2)^i of its nc^i nodes after pruning;
the surviving candidates are processed in ceil-sized waves whose cost
grows with the depth and the log of the fan-out.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

DEFAULT_CANDIDATES = (10, 20, 40, 80, 160, 320)


def ceil_log(n, base):
    """Integer-exact ceil(log_base(n)) for n >= 1, base >= 2."""
    if base < 2:
        raise ValueError("base must be >= 2")
    if n < 1:
        raise ValueError("n must be >= 1")
    t = 0
    power = 1
    while power < n:
        power *= base
        t += 1
    return t


def prune_retention_bound(sigma2, radius, i):
    """Upper bound on the fraction of level-i nodes surviving pruning.

    max(0, 1 - 2*sigma2/radius^2)^i: non-increasing in the level i and
    non-decreasing in the radius.
    """
    if radius <= 0:
        raise ValueError("radius must be > 0")
    if sigma2 < 0:
        raise ValueError("variance must be >= 0")
    if i < 0:
        raise ValueError("level must be >= 0")
    base = max(0.0, 1.0 - 2.0 * sigma2 / (radius * radius))
    return base**i


def estimate_range_cost(n, nc, concurrency, sigma2, radius):
    """Modeled cost of one range query at fan-out nc.

    Sums, over levels i = 1..ceil(log_nc(n)), the wave count
    ceil(nc^i * bound(i) / concurrency) weighted by i^2 * ln(nc)^2.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if nc < 2:
        raise ValueError("fan-out must be >= 2")
    if concurrency < 1:
        raise ValueError("concurrency must be >= 1")
    if n <= 1:
        return 0.0
    depth = ceil_log(n, nc)
    lg2 = math.log(nc) ** 2
    total = 0.0
    for i in range(1, depth + 1):
        survivors = (nc**i) * prune_retention_bound(sigma2, radius, i)
        waves = math.ceil(survivors / concurrency)
        total += (i * i) * waves * lg2
    return total


def recommend_node_capacity(
    n, concurrency, sigma2, radius, candidates=DEFAULT_CANDIDATES
):
    """Fan-out from `candidates` minimizing the modeled range cost.

    Ties go to the smaller fan-out.  Returns (best_nc, costs) where costs
    maps each candidate to its modeled cost.
    """
    if not candidates:
        raise ValueError("candidates must be non-empty")
    costs = {
        int(nc): estimate_range_cost(n, int(nc), concurrency, sigma2, radius)
        for nc in candidates
    }
    best = min(sorted(costs), key=lambda nc: (costs[nc], nc))
    return best, costs


def estimate_variance(dataset, sample_pairs=10000, seed=0):
    """Sample variance (ddof=1) of pairwise distances in a dataset.

    Uses every unordered pair when there are at most sample_pairs of
    them, otherwise draws sample_pairs ordered pairs (i != j) with
    replacement from a seeded generator.  Fewer than two sampled values
    give 0.0.
    """
    n = dataset.n
    if n < 2:
        return 0.0
    total_pairs = n * (n - 1) // 2
    values = []
    if total_pairs <= sample_pairs:
        for a, b in itertools.combinations(range(n), 2):
            values.append(dataset.pairwise(a, b))
    else:
        rng = np.random.default_rng(seed)
        drawn = 0
        while drawn < sample_pairs:
            a = int(rng.integers(0, n))
            b = int(rng.integers(0, n))
            if a == b:
                continue
            values.append(dataset.pairwise(a, b))
            drawn += 1
    if len(values) < 2:
        return 0.0
    return float(np.var(np.asarray(values, dtype=np.float64), ddof=1))
