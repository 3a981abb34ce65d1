"""Cutoff-point selection on a layer's decreasing score list.

Three detectors are provided: a slope-quotient elbow test with trial
pruning over the top-K candidate points, 1-D recursive-split clustering
scored by BIC with cumulative cluster retention, and a permutation test
that stops selection once a candidate's contribution is indistinguishable
from a row-shuffled copy of itself.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .entropy import (
    FeatureMatrix,
    KernelSpec,
    NormalizedKernel,
    OrderLike,
    build_kernel,
    conditional_mi,
)
from .errors import DegenerateVariance, EmptyRemaining, EvaluatorFailure
from .ordering import OrderedLayer

# (layer_id, retained feature indices) -> accuracy fraction on training data
TrialEvaluator = Callable[[int, Sequence[int]], float]

VARIANCE_FLOOR = 1e-12


@dataclass(frozen=True)
class ScreeParams:
    """Slope-quotient elbow detection over top_k candidate points.

    `fallback` applies when no candidate reaches target_accuracy:
    "max_index" keeps the largest candidate index (algorithm text),
    "best_accuracy" keeps the best-scoring candidate (prose variant).
    """

    top_k: int = 1
    target_accuracy: float = 0.95
    denom_epsilon: float = 1e-12
    fallback: str = "max_index"

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if not 0.0 < self.target_accuracy <= 1.0:
            raise ValueError("target_accuracy must be in (0, 1]")
        if self.fallback not in ("max_index", "best_accuracy"):
            raise ValueError(f"unknown fallback {self.fallback!r}")


@dataclass(frozen=True)
class XMeansParams:
    k_init: int = 1
    k_max: int | None = None  # None -> ceil(len(values) / 2)
    target_accuracy: float = 0.95
    rng_seed: int = 0

    def __post_init__(self):
        if self.k_init < 1:
            raise ValueError("k_init must be >= 1")
        if self.k_max is not None and self.k_max < self.k_init:
            raise ValueError("k_max must be >= k_init")


@dataclass(frozen=True)
class PermutationParams:
    permutations: int = 100
    significance: float = 0.05
    rng_seed: int = 0

    def __post_init__(self):
        if self.permutations < 1:
            raise ValueError("permutations must be >= 1")
        if not 0.0 < self.significance < 1.0:
            raise ValueError("significance must be in (0, 1)")


@dataclass(frozen=True)
class CutoffResult:
    """Chosen cutoff for one ordered layer.

    `selected_indices` is the retained prefix of the ordering (original
    feature indices); `cutoff_index` is its length.  `candidates` lists
    every (index, accuracy) pair the evaluator was asked about, and
    `flags` records degenerate-input or fallback events.
    """

    selected_indices: tuple[int, ...]
    cutoff_index: int
    candidates: tuple[tuple[int, float], ...] = ()
    method: str = ""
    accuracy: float | None = None
    flags: tuple[str, ...] = ()


def _run_trial(eval_fn: TrialEvaluator, layer_id: int, retained: Sequence[int]) -> float:
    try:
        acc = float(eval_fn(layer_id, list(retained)))
    except Exception as e:
        raise EvaluatorFailure(f"trial evaluation failed on layer {layer_id}: {e}") from e
    if not 0.0 <= acc <= 1.0:
        raise EvaluatorFailure(f"evaluator returned {acc}, not a fraction in [0, 1]")
    return acc


def scree_slopes(values: Sequence[float], denom_epsilon: float = 1e-12) -> np.ndarray:
    """Slope quotient s(i) = (c_i - c_{i+1}) / (c_{i+1} - c_{i+2}), guarded.

    Entry j of the result is the slope at 1-based cutoff index j+1; the
    denominator is floored at denom_epsilon so tied tail values cannot
    divide by zero.
    """
    c = np.asarray(values, dtype=np.float64)
    num = c[:-2] - c[1:-1]
    den = np.maximum(c[1:-1] - c[2:], denom_epsilon)
    return num / den


def scree_cutoff(
    ordered: OrderedLayer, params: ScreeParams, eval_fn: TrialEvaluator
) -> CutoffResult:
    """Pick the cutoff at the steepest drop in the score list.

    The top_k largest slopes give candidate cutoff indices (slope ties
    break toward the smaller index).  With top_k == 1 the max-slope index
    wins outright and no trial pruning happens; otherwise each candidate
    prefix is trial-pruned and the smallest index whose accuracy meets
    params.target_accuracy wins, falling back per params.fallback.

    Fewer than 3 scores cannot form a slope; all features are then
    retained and the result is flagged "too_few_values".
    """
    c = ordered.cmi_values
    n = len(c)
    if n < 3:
        return CutoffResult(
            selected_indices=ordered.order,
            cutoff_index=n,
            method="scree",
            flags=("too_few_values",),
        )
    slopes = scree_slopes(c, params.denom_epsilon)
    k = min(params.top_k, len(slopes))
    # stable sort on -slope keeps equal slopes in ascending index order
    ranked = np.argsort(-slopes, kind="stable")[:k]
    candidate_indices = [int(i) + 1 for i in ranked]  # 1-based retained counts

    if params.top_k == 1:
        i_star = candidate_indices[0]
        return CutoffResult(
            selected_indices=ordered.order[:i_star],
            cutoff_index=i_star,
            method="scree",
        )

    candidates = []
    for idx in candidate_indices:
        acc = _run_trial(eval_fn, ordered.layer_id, ordered.order[:idx])
        candidates.append((idx, acc))

    meeting = [(idx, acc) for idx, acc in candidates if acc >= params.target_accuracy]
    flags: tuple[str, ...] = ()
    if meeting:
        i_star, acc_star = min(meeting, key=lambda t: t[0])
    elif params.fallback == "max_index":
        i_star = max(idx for idx, _ in candidates)
        acc_star = dict(candidates)[i_star]
        flags = ("fallback_max_index",)
    else:
        i_star, acc_star = max(candidates, key=lambda t: (t[1], -t[0]))
        flags = ("fallback_best_accuracy",)
    return CutoffResult(
        selected_indices=ordered.order[:i_star],
        cutoff_index=i_star,
        candidates=tuple(candidates),
        method="scree",
        accuracy=acc_star,
        flags=flags,
    )


# --- 1-D clustering with BIC-scored recursive splits ----------------------


def _kmeans_pp_centers(values: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [values[rng.integers(len(values))]]
    for _ in range(1, k):
        d2 = np.min([(values - c) ** 2 for c in centers], axis=0)
        total = d2.sum()
        if total <= 0.0:
            centers.append(values[rng.integers(len(values))])
            continue
        centers.append(values[rng.choice(len(values), p=d2 / total)])
    return np.asarray(centers)


def _kmeans_1d(
    values: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = 100, tol: float = 1e-9
) -> np.ndarray:
    """Lloyd's algorithm on a 1-D array; returns per-point cluster labels."""
    centers = _kmeans_pp_centers(values, k, rng)
    labels = np.zeros(len(values), dtype=int)
    for _ in range(max_iter):
        labels = np.argmin(np.abs(values[:, None] - centers[None, :]), axis=1)
        new_centers = centers.copy()
        for j in range(k):
            members = values[labels == j]
            if len(members):
                new_centers[j] = members.mean()
        if np.max(np.abs(new_centers - centers)) < tol:
            centers = new_centers
            break
        centers = new_centers
    return np.argmin(np.abs(values[:, None] - centers[None, :]), axis=1)


def _cluster_variance(members: np.ndarray) -> float:
    var = float(np.var(members))
    if var < VARIANCE_FLOOR:
        warnings.warn("cluster variance is 0; applying 1e-12 floor", DegenerateVariance)
        var = VARIANCE_FLOOR
    return var


def _gaussian_loglik(members: np.ndarray, scope_size: int) -> float:
    """Hard-assignment mixture log-likelihood of one spherical component.

    Includes the log cluster prior R_c/R, which is what stops the split
    recursion on already-tight clusters.
    """
    var = _cluster_variance(members)
    resid = members - members.mean()
    r_c = len(members)
    return float(
        r_c * np.log(r_c / scope_size)
        - 0.5 * r_c * np.log(2.0 * np.pi * var)
        - 0.5 * np.sum(resid**2) / var
    )


def _bic(cluster_members: list[np.ndarray], scope_size: int) -> float:
    """BIC = log-likelihood - (p/2) log R with p = 2k (centers + variances)."""
    loglik = sum(_gaussian_loglik(m, scope_size) for m in cluster_members)
    p = 2 * len(cluster_members)
    return loglik - 0.5 * p * np.log(scope_size)


def _split_recursive(
    values: np.ndarray,
    index: np.ndarray,
    rng: np.random.Generator,
    budget: list[int],
) -> list[np.ndarray]:
    """Try a 2-way split; keep it when the two-cluster BIC beats the parent's."""
    if len(values) < 4 or budget[0] <= 0:
        return [index]
    labels = _kmeans_1d(values, 2, rng)
    left, right = index[labels == 0], index[labels == 1]
    if len(left) < 2 or len(right) < 2:
        # a child needs >= 2 points for its variance parameter; singleton
        # children ride the variance floor to absurd likelihoods
        return [index]
    parent_bic = _bic([values], len(values))
    split_bic = _bic([values[labels == 0], values[labels == 1]], len(values))
    if split_bic <= parent_bic:
        return [index]
    budget[0] -= 1
    return _split_recursive(values[labels == 0], left, rng, budget) + _split_recursive(
        values[labels == 1], right, rng, budget
    )


def xmeans_clusters(
    values: Sequence[float], k_init: int = 1, k_max: int | None = None, rng_seed: int = 0
) -> list[np.ndarray]:
    """Cluster a 1-D value list; the cluster count is chosen by BIC.

    Starts from k_init k-means++ clusters and recursively 2-way splits any
    cluster whose split improves BIC, never exceeding k_max clusters total.
    Returns each cluster's member positions (into `values`).
    """
    vals = np.asarray(values, dtype=np.float64)
    if k_max is None:
        k_max = max(1, int(np.ceil(len(vals) / 2)))
    k_init = min(k_init, k_max, len(vals))
    rng = np.random.default_rng(rng_seed)
    index = np.arange(len(vals))

    if k_init == 1:
        seeds = [index]
    else:
        labels = _kmeans_1d(vals, k_init, rng)
        seeds = [index[labels == j] for j in range(k_init) if np.any(labels == j)]

    budget = [k_max - len(seeds)]  # remaining allowed splits
    clusters: list[np.ndarray] = []
    for seed in seeds:
        clusters.extend(_split_recursive(vals[seed], seed, rng, budget))
    return clusters


def xmeans_cutoff(
    ordered: OrderedLayer, params: XMeansParams, eval_fn: TrialEvaluator
) -> CutoffResult:
    """Cluster the score list and retain clusters cumulatively.

    Clusters are ordered by decreasing center score.  Retention grows one
    cluster at a time, trial-pruning the remainder, and stops at the first
    cumulative set meeting params.target_accuracy; if none qualifies every
    feature is retained.
    """
    values = np.asarray(ordered.cmi_values, dtype=np.float64)
    clusters = xmeans_clusters(values, params.k_init, params.k_max, params.rng_seed)
    clusters.sort(key=lambda idx: -float(values[idx].mean()))

    candidates = []
    retained: list[int] = []
    for j, cluster in enumerate(clusters):
        retained.extend(int(i) for i in cluster)
        if j == len(clusters) - 1:
            # retaining every cluster prunes nothing; nothing to evaluate
            break
        acc = _run_trial(eval_fn, ordered.layer_id, [ordered.order[i] for i in sorted(retained)])
        candidates.append((len(retained), acc))
        if acc >= params.target_accuracy:
            sel = tuple(ordered.order[i] for i in sorted(retained))
            return CutoffResult(
                selected_indices=sel,
                cutoff_index=len(sel),
                candidates=tuple(candidates),
                method="xmeans",
                accuracy=acc,
            )
    return CutoffResult(
        selected_indices=ordered.order,
        cutoff_index=len(ordered.order),
        candidates=tuple(candidates),
        method="xmeans",
        flags=("retained_all",),
    )


# --- permutation stop test -------------------------------------------------


def _permuted_kernel(g: NormalizedKernel, perm: np.ndarray) -> NormalizedKernel:
    # row-shuffling a feature permutes its Gram matrix symmetrically;
    # bandwidth heuristics depend only on the (unordered) distance multiset
    return NormalizedKernel(g.g[np.ix_(perm, perm)], validate=False)


def permutation_cutoff(
    selected: Sequence[FeatureMatrix],
    remaining: Sequence[FeatureMatrix],
    y_kernel: NormalizedKernel,
    params: PermutationParams,
    order_param: OrderLike = 1.01,
    spec: KernelSpec = KernelSpec(),
) -> tuple[str, int]:
    """Significance test for the head of `remaining`.

    The residual information of the non-candidate remainder, conditioned on
    the selected set plus the candidate, is compared against the same
    quantity with the candidate's sample rows shuffled.  When the
    un-shuffled value is >= the shuffled one in at most a `significance`
    fraction of trials the candidate is kept ("continue", len(selected)+1);
    otherwise selection stops ("stop", len(selected)).
    """
    if len(remaining) == 0:
        raise EmptyRemaining("no candidate feature to test")
    f = remaining[0]
    rest = [build_kernel(fm, spec) for fm in remaining[1:]]
    sel = [build_kernel(fm, spec) for fm in selected]
    g_f = build_kernel(f, spec)

    def residual(candidate_kernel: NormalizedKernel) -> float:
        return conditional_mi(rest, y_kernel, [*sel, candidate_kernel], order_param)

    baseline = residual(g_f)
    rng = np.random.default_rng(params.rng_seed)
    hits = 0
    for _ in range(params.permutations):
        perm = rng.permutation(f.n)
        if baseline >= residual(_permuted_kernel(g_f, perm)):
            hits += 1
    if hits / params.permutations <= params.significance:
        return "continue", len(selected) + 1
    return "stop", len(selected)


def permutation_scan(
    ordered: OrderedLayer,
    features: Sequence[FeatureMatrix],
    y_kernel: NormalizedKernel,
    params: PermutationParams,
    order_param: OrderLike = 1.01,
    spec: KernelSpec = KernelSpec(),
) -> CutoffResult:
    """Walk the ordering, testing each feature until the first stop."""
    ranked = [features[i] for i in ordered.order]
    kept = 0
    for i in range(len(ranked)):
        decision, kept = permutation_cutoff(
            ranked[:i], ranked[i:], y_kernel, params, order_param, spec
        )
        if decision == "stop":
            break
    return CutoffResult(
        selected_indices=ordered.order[:kept],
        cutoff_index=kept,
        method="permutation",
    )
