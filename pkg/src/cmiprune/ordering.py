"""Greedy feature-map ordering by incremental information gain.

Each layer's feature maps are ranked one at a time: the next map picked is
the one whose addition to the already-ordered set (plus any cross-layer
conditioning context) maximizes information about the labels.  After every
pick, the residual information still held by the unordered remainder is
recorded, producing the per-layer decreasing score list that cutoff
selection operates on.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .entropy import (
    EntropyOrder,
    FeatureMatrix,
    KernelSpec,
    NormalizedKernel,
    OrderLike,
    _as_order,
    build_kernel,
    normalize_product,
    renyi_entropy,
)
from .errors import ContextStrategyMismatch, DimensionMismatch, EmptyLayer

STRATEGIES = ("per_layer", "cross_full", "cross_compact")


def worker_threads() -> int:
    """Worker-thread cap from CMIPRUNE_THREADS (default 1, serial)."""
    try:
        return max(1, int(os.environ.get("CMIPRUNE_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True, eq=False)
class LayerFeatures:
    """All feature maps of one conv layer, sharing a sample batch."""

    layer_id: int
    features: tuple[FeatureMatrix, ...]

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        if len(self.features) == 0:
            raise EmptyLayer(f"layer {self.layer_id} has no feature maps")
        n = self.features[0].n
        for f in self.features:
            if f.n != n:
                raise DimensionMismatch(
                    f"layer {self.layer_id}: sample counts differ ({f.n} vs {n})"
                )

    @property
    def n(self) -> int:
        return self.features[0].n

    def __len__(self) -> int:
        return len(self.features)


@dataclass(frozen=True)
class ConditioningContext:
    """Selected-feature kernels of previously pruned layers.

    One entry per committed layer, in commitment order.  per_layer ignores
    context (and requires none), cross_compact conditions on the last entry
    only, cross_full on all entries.
    """

    strategy: str = "per_layer"
    selected_kernels: tuple[tuple[NormalizedKernel, ...], ...] = ()

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ContextStrategyMismatch(f"unknown strategy {self.strategy!r}")
        object.__setattr__(
            self, "selected_kernels", tuple(tuple(ks) for ks in self.selected_kernels)
        )
        if self.strategy == "per_layer" and self.selected_kernels:
            raise ContextStrategyMismatch("per_layer ordering takes no conditioning context")

    def conditioning_kernels(self) -> list[NormalizedKernel]:
        if self.strategy == "cross_compact" and self.selected_kernels:
            return list(self.selected_kernels[-1])
        if self.strategy == "cross_full":
            return [k for layer in self.selected_kernels for k in layer]
        return []


@dataclass(frozen=True, eq=False)
class OrderedLayer:
    """Ranked feature indices with their decreasing residual-information list."""

    layer_id: int
    order: tuple[int, ...]
    cmi_values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "order", tuple(int(i) for i in self.order))
        object.__setattr__(self, "cmi_values", tuple(float(c) for c in self.cmi_values))
        if sorted(self.order) != list(range(len(self.order))):
            raise ValueError(f"order is not a permutation: {self.order}")
        if len(self.cmi_values) != len(self.order):
            raise ValueError("cmi_values and order lengths differ")


def build_layer_kernels(
    layer: LayerFeatures, spec: KernelSpec = KernelSpec()
) -> list[NormalizedKernel]:
    """One normalized kernel per feature map, aligned with feature indices."""
    kernels = []
    for f in layer.features:
        try:
            kernels.append(build_kernel(f, spec))
        except Exception as e:
            raise type(e)(f"feature {f.feature_index} of layer {layer.layer_id}: {e}") from e
    return kernels


def _candidate_mi(
    prefix: np.ndarray | None,
    cand: NormalizedKernel,
    g_y: NormalizedKernel,
    s_y: float,
    alpha: EntropyOrder,
) -> float:
    """I(Y; prefix-set + candidate) given the accumulated conditioning product."""
    prod = cand.g if prefix is None else prefix * cand.g
    s_x = renyi_entropy(normalize_product(prod), alpha)
    s_xy = renyi_entropy(normalize_product(prod * g_y.g), alpha)
    return s_y + s_x - s_xy


def order_layer(
    layer: LayerFeatures,
    y_kernel: NormalizedKernel,
    ctx: ConditioningContext = ConditioningContext(),
    order_param: OrderLike = 1.01,
    kernels: list[NormalizedKernel] | None = None,
    spec: KernelSpec = KernelSpec(),
) -> OrderedLayer:
    """Rank one layer's feature maps greedily and emit the residual list.

    Every iteration picks the unordered feature maximizing information
    about the labels jointly with context + already-ordered maps (ties
    break toward the lowest original index), then records the conditional
    information the remaining unordered set still carries.  The final
    entry is 0 by convention: an empty remainder carries nothing.

    Precomputed `kernels` may be passed to skip kernelization; otherwise
    they are built once from `spec`.  The Hadamard product of the growing
    conditioning set is maintained incrementally, one elementwise multiply
    per iteration, with a fixed association order (context layers first,
    then picks in selection order) so results are reproducible.
    """
    alpha = _as_order(order_param)
    if kernels is None:
        kernels = build_layer_kernels(layer, spec)
    n = y_kernel.n
    for k in kernels:
        if k.n != n:
            raise DimensionMismatch(f"kernel n={k.n} does not match labels n={n}")
    ctx_kernels = ctx.conditioning_kernels()
    for k in ctx_kernels:
        if k.n != n:
            raise DimensionMismatch(f"context kernel n={k.n} does not match labels n={n}")

    prefix: np.ndarray | None = None  # running product over ctx + ordered picks
    for k in ctx_kernels:
        prefix = k.g if prefix is None else prefix * k.g

    s_y = renyi_entropy(y_kernel, alpha)
    remaining = list(range(len(kernels)))
    order: list[int] = []
    cmi_values: list[float] = []
    pool_size = min(worker_threads(), len(kernels))

    def score(idx: int) -> float:
        return _candidate_mi(prefix, kernels[idx], y_kernel, s_y, alpha)

    while remaining:
        if pool_size > 1 and len(remaining) > 1:
            with ThreadPoolExecutor(max_workers=pool_size) as pool:
                scores = list(pool.map(score, remaining))
        else:
            scores = [score(i) for i in remaining]
        # reduce by (score, index): max score, lowest original index on ties
        best_pos = 0
        for pos in range(1, len(remaining)):
            if scores[pos] > scores[best_pos]:
                best_pos = pos
        star = remaining.pop(best_pos)
        order.append(star)
        prefix = kernels[star].g if prefix is None else prefix * kernels[star].g

        if remaining:
            cmi_values.append(
                _residual_cmi(prefix, [kernels[i] for i in remaining], y_kernel, alpha)
            )
        else:
            cmi_values.append(0.0)

    return OrderedLayer(layer.layer_id, tuple(order), tuple(cmi_values))


def _residual_cmi(
    prefix: np.ndarray,
    unordered: list[NormalizedKernel],
    g_y: NormalizedKernel,
    alpha: EntropyOrder,
) -> float:
    """I(unordered set; Y | conditioning product), four-term form."""
    u = unordered[0].g
    for k in unordered[1:]:
        u = u * k.g
    s_xz = renyi_entropy(normalize_product(u * prefix), alpha)
    s_yz = renyi_entropy(normalize_product(g_y.g * prefix), alpha)
    s_xyz = renyi_entropy(normalize_product(u * g_y.g * prefix), alpha)
    s_z = renyi_entropy(normalize_product(prefix), alpha)
    return s_xz + s_yz - s_xyz - s_z
