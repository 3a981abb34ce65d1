"""Whole-network pruning drives: forward and bi-directional sweeps.

The orchestrator walks the conv layers, ranks each layer's feature maps
(conditioned on already-committed layers per the configured strategy),
runs the configured cutoff detector against a trial evaluator, and commits
the resulting keep-set.  Bi-directional mode first trial-prunes every
layer independently to find the most prunable feasible starting layer,
then sweeps outward in both directions from it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .cutoff import (
    CutoffResult,
    PermutationParams,
    ScreeParams,
    XMeansParams,
    permutation_scan,
    scree_cutoff,
    xmeans_cutoff,
)
from .entropy import KernelSpec, NormalizedKernel
from .errors import LayerCountMismatch, PlanModelMismatch
from .ordering import ConditioningContext, LayerFeatures, OrderedLayer, build_layer_kernels, order_layer
from .toynet import LabeledDataset, MaskSet, ToyModel, apply_mask, evaluate

# accuracy of the model with the given {layer_id: retained indices} applied
RetainedEvaluator = Callable[[Mapping[int, Sequence[int]]], float]

STRATEGIES = ("per_layer", "cross_full", "cross_compact")
CUTOFFS = ("scree", "xmeans", "permutation")
DIRECTIONS = ("forward", "bidirectional")
MODES = ("zero_weight", "actual")


@dataclass(frozen=True)
class PruneConfig:
    """Everything a pruning run needs besides the model and its features.

    Exactly one of target_accuracy (a trial-accuracy floor) or
    accuracy_drop (floor = full accuracy - drop, resolved at run start)
    must be set.  The final conv layer is kept intact unless
    prune_last_layer is set, which only zero_weight mode allows.
    """

    strategy: str = "cross_compact"
    cutoff: str = "scree"
    direction: str = "forward"
    target_accuracy: float | None = None
    accuracy_drop: float | None = 0.01
    mode: str = "actual"
    alpha: float = 1.01
    kernel: KernelSpec = KernelSpec()
    scree: ScreeParams = ScreeParams()
    xmeans: XMeansParams = XMeansParams()
    permutation: PermutationParams = PermutationParams()
    seed: int = 0
    prune_last_layer: bool = False
    stage1_masks: str = "discard"  # or "seed_trial_model"

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.cutoff not in CUTOFFS:
            raise ValueError(f"unknown cutoff {self.cutoff!r}")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.direction == "bidirectional" and self.strategy == "per_layer":
            raise ValueError("bidirectional pruning needs a cross-layer strategy for its sweeps")
        if (self.target_accuracy is None) == (self.accuracy_drop is None):
            raise ValueError("set exactly one of target_accuracy / accuracy_drop")
        if self.target_accuracy is not None and not 0.0 < self.target_accuracy <= 1.0:
            raise ValueError("target_accuracy must be in (0, 1]")
        if self.prune_last_layer and self.mode == "actual":
            raise ValueError("actual mode cannot prune the final conv layer")
        if self.stage1_masks not in ("discard", "seed_trial_model"):
            raise ValueError(f"unknown stage1_masks policy {self.stage1_masks!r}")

    def resolve_target(self, full_accuracy: float) -> float:
        if self.target_accuracy is not None:
            return self.target_accuracy
        return full_accuracy - self.accuracy_drop


@dataclass(frozen=True)
class LayerPlan:
    """Committed decision for one conv layer."""

    layer_id: int
    selected: tuple[int, ...]
    pruned: tuple[int, ...]
    order: tuple[int, ...]
    cmi_values: tuple[float, ...]
    cutoff_method: str
    candidates: tuple[tuple[int, float], ...] = ()
    accuracy: float | None = None
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if sorted(self.selected + self.pruned) != sorted(self.order):
            raise ValueError(f"layer {self.layer_id}: selected/pruned do not partition")


@dataclass(frozen=True)
class PruningPlan:
    """Per-layer keep-sets plus provenance of how they were chosen."""

    layers: tuple[LayerPlan, ...]
    strategy: str
    cutoff: str
    direction: str
    mode: str
    target_accuracy: float
    full_accuracy: float | None
    start_layer: int | None = None
    commit_trace: tuple[int, ...] = ()
    flags: tuple[str, ...] = ()

    def layer(self, layer_id: int) -> LayerPlan:
        for lp in self.layers:
            if lp.layer_id == layer_id:
                return lp
        raise KeyError(layer_id)

    @property
    def filters_total(self) -> int:
        return sum(len(lp.order) for lp in self.layers)

    @property
    def filters_pruned(self) -> int:
        return sum(len(lp.pruned) for lp in self.layers)

    def retained_map(self) -> dict[int, list[int]]:
        return {lp.layer_id: sorted(lp.selected) for lp in self.layers}

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "cutoff": self.cutoff,
            "direction": self.direction,
            "mode": self.mode,
            "target_accuracy": self.target_accuracy,
            "full_accuracy": self.full_accuracy,
            "start_layer": self.start_layer,
            "commit_trace": list(self.commit_trace),
            "flags": list(self.flags),
            "layers": [
                {
                    "layer_id": lp.layer_id,
                    "selected": list(lp.selected),
                    "pruned": list(lp.pruned),
                    "order": list(lp.order),
                    "cmi_values": list(lp.cmi_values),
                    "cutoff_method": lp.cutoff_method,
                    "candidates": [list(c) for c in lp.candidates],
                    "accuracy": lp.accuracy,
                    "flags": list(lp.flags),
                }
                for lp in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PruningPlan":
        return cls(
            layers=tuple(
                LayerPlan(
                    layer_id=ld["layer_id"],
                    selected=tuple(ld["selected"]),
                    pruned=tuple(ld["pruned"]),
                    order=tuple(ld["order"]),
                    cmi_values=tuple(ld["cmi_values"]),
                    cutoff_method=ld["cutoff_method"],
                    candidates=tuple((int(i), float(a)) for i, a in ld["candidates"]),
                    accuracy=ld["accuracy"],
                    flags=tuple(ld["flags"]),
                )
                for ld in d["layers"]
            ),
            strategy=d["strategy"],
            cutoff=d["cutoff"],
            direction=d["direction"],
            mode=d["mode"],
            target_accuracy=d["target_accuracy"],
            full_accuracy=d["full_accuracy"],
            start_layer=d["start_layer"],
            commit_trace=tuple(d["commit_trace"]),
            flags=tuple(d["flags"]),
        )


@dataclass(frozen=True)
class PruneReport:
    """Compression and accuracy metrics for a committed plan."""

    filters_total: int
    filters_pruned: int
    pruned_percent: float
    parameters_retained: int
    accuracy_before: float
    accuracy_after_retrain: float | None
    per_layer: tuple[dict, ...]
    mode: str

    def to_dict(self) -> dict:
        return {
            "filters_total": self.filters_total,
            "filters_pruned": self.filters_pruned,
            "pruned_percent": self.pruned_percent,
            "parameters_retained": self.parameters_retained,
            "accuracy_before": self.accuracy_before,
            "accuracy_after_retrain": self.accuracy_after_retrain,
            "per_layer": list(self.per_layer),
            "mode": self.mode,
        }


class _Run:
    """Shared state of one orchestration: caches, commitments, context."""

    def __init__(self, features_per_layer, y_kernel, cfg, evaluate_retained):
        self.layers = sorted(features_per_layer, key=lambda lf: lf.layer_id)
        ids = [lf.layer_id for lf in self.layers]
        if ids != list(range(ids[0], ids[0] + len(ids))):
            raise LayerCountMismatch(f"layer ids must be consecutive, got {ids}")
        self.by_id = {lf.layer_id: lf for lf in self.layers}
        self.y_kernel = y_kernel
        self.cfg = cfg
        self.evaluate_retained = evaluate_retained
        self.kernels: dict[int, list[NormalizedKernel]] = {}
        self.committed: dict[int, list[int]] = {}
        self.commit_trace: list[int] = []
        self.results: dict[int, tuple[OrderedLayer, CutoffResult]] = {}
        full = float(evaluate_retained({}))
        self.full_accuracy = None if np.isnan(full) else full
        self.target = cfg.resolve_target(full)
        self.stage1_seed: dict[int, list[int]] = {}

    def layer_kernels(self, layer_id: int) -> list[NormalizedKernel]:
        if layer_id not in self.kernels:
            self.kernels[layer_id] = build_layer_kernels(self.by_id[layer_id], self.cfg.kernel)
        return self.kernels[layer_id]

    def context_for(self, strategy: str, committed_ids: Sequence[int]) -> ConditioningContext:
        if strategy == "per_layer":
            return ConditioningContext("per_layer")
        entries = []
        for lid in committed_ids:
            kernels = self.layer_kernels(lid)
            entries.append(tuple(kernels[i] for i in sorted(self.committed[lid])))
        return ConditioningContext(strategy, tuple(entries))

    def trial_evaluator(self, base: Mapping[int, Sequence[int]]):
        def run(layer_id: int, retained: Sequence[int]) -> float:
            masks = dict(base)
            masks[layer_id] = list(retained)
            return self.evaluate_retained(masks)

        return run

    def trial_base(self) -> dict[int, list[int]]:
        base = dict(self.stage1_seed)
        base.update(self.committed)
        return base

    def is_exempt(self, layer_id: int) -> bool:
        return layer_id == self.layers[-1].layer_id and not self.cfg.prune_last_layer

    def cut_layer(
        self, layer_id: int, strategy: str, committed_ids: Sequence[int], commit: bool = True
    ) -> tuple[OrderedLayer, CutoffResult]:
        layer = self.by_id[layer_id]
        ctx = self.context_for(strategy, committed_ids)
        ordered = order_layer(
            layer, self.y_kernel, ctx, self.cfg.alpha, kernels=self.layer_kernels(layer_id)
        )
        if self.is_exempt(layer_id):
            result = CutoffResult(
                selected_indices=ordered.order,
                cutoff_index=len(ordered.order),
                method=self.cfg.cutoff,
                flags=("last_layer_exempt",),
            )
        else:
            result = self.run_cutoff(ordered, layer)
        if commit:
            self.committed[layer_id] = sorted(result.selected_indices)
            self.commit_trace.append(layer_id)
            self.results[layer_id] = (ordered, result)
        return ordered, result

    def run_cutoff(self, ordered: OrderedLayer, layer: LayerFeatures) -> CutoffResult:
        cfg = self.cfg
        if cfg.cutoff == "scree":
            params = replace(cfg.scree, target_accuracy=self.target)
            return scree_cutoff(ordered, params, self.trial_evaluator(self.trial_base()))
        if cfg.cutoff == "xmeans":
            params = replace(cfg.xmeans, target_accuracy=self.target)
            return xmeans_cutoff(ordered, params, self.trial_evaluator(self.trial_base()))
        return permutation_scan(
            ordered, layer.features, self.y_kernel, cfg.permutation, cfg.alpha, cfg.kernel
        )

    def accuracy_of(self, layer_id: int, result: CutoffResult) -> float:
        if result.accuracy is not None:
            return result.accuracy
        masks = self.trial_base()
        masks[layer_id] = sorted(result.selected_indices)
        return self.evaluate_retained(masks)

    def build_plan(self, start_layer: int | None = None, flags: tuple[str, ...] = ()) -> PruningPlan:
        plans = []
        for layer in self.layers:
            ordered, result = self.results[layer.layer_id]
            selected = tuple(sorted(result.selected_indices))
            pruned = tuple(sorted(set(ordered.order) - set(selected)))
            plans.append(
                LayerPlan(
                    layer_id=layer.layer_id,
                    selected=selected,
                    pruned=pruned,
                    order=ordered.order,
                    cmi_values=ordered.cmi_values,
                    cutoff_method=result.method,
                    candidates=result.candidates,
                    accuracy=result.accuracy,
                    flags=result.flags,
                )
            )
        return PruningPlan(
            layers=tuple(plans),
            strategy=self.cfg.strategy,
            cutoff=self.cfg.cutoff,
            direction=self.cfg.direction,
            mode=self.cfg.mode,
            target_accuracy=self.target,
            full_accuracy=self.full_accuracy,
            start_layer=start_layer,
            commit_trace=tuple(self.commit_trace),
            flags=flags,
        )


def forward_prune(
    features_per_layer: Sequence[LayerFeatures],
    y_kernel: NormalizedKernel,
    cfg: PruneConfig,
    evaluate_retained: RetainedEvaluator,
) -> PruningPlan:
    """Prune every conv layer first to last.

    Each layer is ranked with the conditioning context implied by
    cfg.strategy (nothing, all committed layers, or just the previous
    one), cut with cfg.cutoff under a trial evaluator that stacks the
    candidate mask on all committed masks, and committed.
    """
    run = _Run(features_per_layer, y_kernel, cfg, evaluate_retained)
    for layer in run.layers:
        committed_ids = _context_ids(cfg.strategy, run.commit_trace)
        run.cut_layer(layer.layer_id, cfg.strategy, committed_ids)
    return run.build_plan()


def _context_ids(strategy: str, commit_trace: Sequence[int]) -> list[int]:
    if strategy == "per_layer":
        return []
    if strategy == "cross_compact":
        return list(commit_trace[-1:])
    return list(commit_trace)


def bidirectional_prune(
    features_per_layer: Sequence[LayerFeatures],
    y_kernel: NormalizedKernel,
    cfg: PruneConfig,
    evaluate_retained: RetainedEvaluator,
) -> PruningPlan:
    """Prune outward from the most prunable feasible layer.

    Stage 1 trial-prunes each layer independently (per-layer ranking, each
    trial touching only that layer) and picks the starting layer: highest
    pruning ratio among those meeting the accuracy target, ties to the
    smaller id; when none qualifies the best-accuracy layer starts and the
    plan is flagged "no_feasible_start".  Only the starting layer's
    stage-1 mask is committed.  Stage 2 sweeps forward from it and stage 3
    backward, both with cross-layer conditioning on committed layers in
    the sweep's own direction.
    """
    run = _Run(features_per_layer, y_kernel, cfg, evaluate_retained)

    stage1: dict[int, tuple[OrderedLayer, CutoffResult, float, float]] = {}
    for layer in run.layers:
        ordered, result = run.cut_layer(layer.layer_id, "per_layer", [], commit=False)
        acc = run.accuracy_of(layer.layer_id, result)
        ratio = 1.0 - len(result.selected_indices) / len(ordered.order)
        stage1[layer.layer_id] = (ordered, result, acc, ratio)

    flags: tuple[str, ...] = ()
    feasible = [lid for lid, (_, _, acc, _) in stage1.items() if acc >= run.target]
    if feasible:
        k_star = max(feasible, key=lambda lid: (stage1[lid][3], -lid))
    else:
        k_star = max(stage1, key=lambda lid: (stage1[lid][2], -lid))
        flags = ("no_feasible_start",)

    ordered, result, acc, _ = stage1[k_star]
    run.committed[k_star] = sorted(result.selected_indices)
    run.commit_trace.append(k_star)
    run.results[k_star] = (ordered, result)
    if cfg.stage1_masks == "seed_trial_model":
        run.stage1_seed = {
            lid: sorted(res.selected_indices)
            for lid, (_, res, _, _) in stage1.items()
            if lid != k_star
        }

    last_id = run.layers[-1].layer_id
    first_id = run.layers[0].layer_id
    forward_ids = list(range(k_star + 1, last_id + 1))
    backward_ids = list(range(k_star - 1, first_id - 1, -1))

    for lid in forward_ids:
        committed_ids = _context_ids(cfg.strategy, run.commit_trace)
        run.cut_layer(lid, cfg.strategy, committed_ids)
        run.stage1_seed.pop(lid, None)

    backward_trace = [k_star]
    for lid in backward_ids:
        committed_ids = _context_ids(cfg.strategy, backward_trace)
        run.cut_layer(lid, cfg.strategy, committed_ids)
        run.stage1_seed.pop(lid, None)
        backward_trace.append(lid)

    return run.build_plan(start_layer=k_star, flags=flags)


def summarize(
    plan: PruningPlan,
    model: ToyModel,
    dataset: LabeledDataset,
    accuracy_after_retrain: float | None = None,
) -> PruneReport:
    """Materialize the plan on the model and measure it.

    Parameter counts come from the masked model under the plan's mode
    (unchanged shapes for zero_weight, reduced for actual); accuracy is
    measured on `dataset` before any retraining.
    """
    plan_counts = [len(lp.order) for lp in plan.layers]
    if plan_counts != model.filter_counts:
        raise PlanModelMismatch(
            f"plan filters {plan_counts} vs model filters {model.filter_counts}"
        )
    masks = MaskSet.from_retained(model.filter_counts, plan.retained_map())
    masked = apply_mask(model, masks, plan.mode)
    per_layer = tuple(
        {
            "layer_id": lp.layer_id,
            "filters_total": len(lp.order),
            "filters_selected": len(lp.selected),
            "filters_pruned": len(lp.pruned),
            "accuracy": lp.accuracy,
            "flags": list(lp.flags),
        }
        for lp in plan.layers
    )
    return PruneReport(
        filters_total=plan.filters_total,
        filters_pruned=plan.filters_pruned,
        pruned_percent=plan.filters_pruned / plan.filters_total,
        parameters_retained=masked.parameter_count(),
        accuracy_before=evaluate(masked, dataset),
        accuracy_after_retrain=accuracy_after_retrain,
        per_layer=per_layer,
        mode=plan.mode,
    )
