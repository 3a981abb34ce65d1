"""Glue between the toy model and the pruning orchestration.

A trial session owns the trained model plus its training data and answers
"what is the training accuracy with these keep-sets applied" — the
evaluator contract the cutoff detectors need.  Results are memoized since
sweeps revisit identical mask combinations.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .entropy import NormalizedKernel, label_kernel
from .ordering import LayerFeatures
from .orchestrator import PruningPlan
from .toynet import LabeledDataset, MaskSet, ToyModel, apply_mask, evaluate, forward_extract, train


class ToyTrialSession:
    """Trial-accuracy oracle over one model and one dataset.

    Intermediate (trial) models are evaluated on training data; the mode
    decides whether masks are applied by zeroing or by actual removal.
    """

    def __init__(self, model: ToyModel, train_data: LabeledDataset, mode: str = "actual"):
        self.model = model
        self.train_data = train_data
        self.mode = mode
        self._cache: dict[tuple, float] = {}

    def evaluate_retained(self, retained: Mapping[int, Sequence[int]]) -> float:
        key = tuple(sorted((lid, tuple(sorted(idx))) for lid, idx in retained.items()))
        if key not in self._cache:
            masks = MaskSet.from_retained(
                self.model.filter_counts, {lid: list(idx) for lid, idx in retained.items()}
            )
            mode = self.mode
            if mode == "actual" and not masks.keep[-1].all():
                # trial models may zero the last layer even when the final
                # plan must keep it; accuracy is identical without batch norm
                mode = "zero_weight"
            masked = apply_mask(self.model, masks, mode)
            self._cache[key] = evaluate(masked, self.train_data)
        return self._cache[key]


def extract_features(
    model: ToyModel, data: LabeledDataset, batch_size: int = 256, seed: int = 0
) -> tuple[list[LayerFeatures], np.ndarray]:
    """Feature maps and labels for a seeded sample batch of `data`."""
    n = min(batch_size, len(data))
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(data), size=n, replace=False)
    batch = LabeledDataset(data.images[idx], data.labels[idx], data.split)
    return forward_extract(model, batch), batch.labels


def labels_kernel(labels: np.ndarray) -> NormalizedKernel:
    return label_kernel(labels)


def retrain_under_plan(
    model: ToyModel,
    plan: PruningPlan,
    data: LabeledDataset,
    epochs: int = 20,
    lr: float = 0.01,
    momentum: float = 0.9,
    batch_size: int = 32,
    seed: int = 0,
) -> ToyModel:
    """Materialize the plan and fine-tune the surviving weights."""
    masks = MaskSet.from_retained(model.filter_counts, plan.retained_map())
    pruned = apply_mask(model, masks, plan.mode)
    return train(pruned, data, epochs=epochs, lr=lr, momentum=momentum,
                 batch_size=batch_size, seed=seed)
