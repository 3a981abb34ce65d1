"""Cutoff-point detection on a decreasing score list.

Compares the slope-quotient elbow test (with and without trial pruning)
against BIC-guided 1-D clustering on the same synthetic curve.
"""

import numpy as np

from cmiprune import (
    OrderedLayer,
    ScreeParams,
    XMeansParams,
    scree_cutoff,
    xmeans_clusters,
    xmeans_cutoff,
)
from cmiprune.cutoff import scree_slopes

# A curve with a clear elbow after the 4th value.
values = (3.2, 2.4, 1.9, 1.6, 0.12, 0.10, 0.08, 0.07, 0.05, 0.0)
ordered = OrderedLayer(1, tuple(range(10)), values)

print("scores:", values)
print("slope quotients:", np.round(scree_slopes(values), 2))

# K=1: the largest slope wins outright, no model evaluations needed.
r = scree_cutoff(ordered, ScreeParams(top_k=1), eval_fn=None)
print(f"\nscree K=1 cutoff: keep first {r.cutoff_index} features")


# K=3: candidates are trial-pruned; pretend accuracy collapses under 4 kept.
def fake_accuracy(layer_id, retained):
    return 0.99 if len(retained) >= 4 else 0.42


r = scree_cutoff(ordered, ScreeParams(top_k=3, target_accuracy=0.97), fake_accuracy)
print(f"scree K=3 candidates {[i for i, _ in r.candidates]} -> cutoff {r.cutoff_index}")

# Clustering route: the curve's two regimes form two clusters, retained
# cumulatively from the high end until the accuracy gate passes.
clusters = xmeans_clusters(values, rng_seed=0)
print("\nclusters found:", [sorted(c.tolist()) for c in clusters])
r = xmeans_cutoff(ordered, XMeansParams(target_accuracy=0.97, rng_seed=0), fake_accuracy)
print(f"x-means cutoff: keep first {r.cutoff_index} features")
