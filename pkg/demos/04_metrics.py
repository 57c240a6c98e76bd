"""Scoring a clustering by label skew.

The ranked-histogram Wasserstein distance ignores which class is dominant,
only how skewed a client is. A split that isolates one-hot clients from
near-uniform ones scores high on the silhouette variant (WAS) and low on the
Davies-Bouldin variant (WADB); a random split does the opposite.
"""

import numpy as np

from fedgwc.datagen import dirichlet_partition
from fedgwc.metrics import wadb_score, was_score, wasserstein_distance

rng = np.random.default_rng(1)
print("one-hot on class 0 vs one-hot on class 3:",
      wasserstein_distance([1, 0, 0, 0], [0, 0, 0, 1]))

skewed = [dirichlet_partition(0.0, 10, rng) for _ in range(20)]
flat = [dirichlet_partition(1000.0, 10, rng) for _ in range(20)]
H = np.array(skewed + flat)

by_skew = np.repeat([0, 1], 20)
shuffled = rng.permutation(by_skew)
print(f"split by skew:  WAS {was_score(H, by_skew):.3f}  WADB {wadb_score(H, by_skew):.3f}")
print(f"random split:   WAS {was_score(H, shuffled):.3f}  WADB {wadb_score(H, shuffled):.3f}")
