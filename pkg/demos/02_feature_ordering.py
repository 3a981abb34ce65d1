"""Greedy feature ranking inside one layer.

Builds a small layer where one feature is the label itself, one is a
noisy copy, one is a duplicate, and one is pure noise, then shows the
greedy order and the decreasing residual-information list.
"""

import numpy as np

from cmiprune import (
    ConditioningContext,
    FeatureMatrix,
    LayerFeatures,
    label_kernel,
    order_layer,
)

rng = np.random.default_rng(7)
n = 64
labels = rng.integers(0, 3, size=n)

label_col = labels.reshape(-1, 1).astype(float)
noisy = label_col + rng.normal(0, 0.3, size=(n, 1))
duplicate = noisy.copy()
noise = rng.normal(size=(n, 1))

layer = LayerFeatures(
    layer_id=1,
    features=(
        FeatureMatrix(noise, 1, 0),       # index 0: useless
        FeatureMatrix(noisy, 1, 1),       # index 1: informative
        FeatureMatrix(duplicate, 1, 2),   # index 2: redundant copy of 1
        FeatureMatrix(label_col, 1, 3),   # index 3: the label itself
    ),
)
y_kernel = label_kernel(labels)

ordered = order_layer(layer, y_kernel, ConditioningContext("per_layer"), 1.01)
print("greedy order (original feature indices):", ordered.order)
print("residual information after each pick:")
for rank, (idx, c) in enumerate(zip(ordered.order, ordered.cmi_values), 1):
    print(f"  rank {rank}: feature {idx}  residual {c:.4f} bits")

# The label feature is picked first, the duplicate adds almost nothing
# once its twin is in, and the list ends at exactly zero.
assert ordered.order[0] == 3
assert ordered.cmi_values[-1] == 0.0
