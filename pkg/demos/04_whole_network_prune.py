"""Whole-network pruning on the built-in toy CNN, end to end.

Trains the small conv net on synthetic bar/blob images, prunes it
bi-directionally with compact cross-layer conditioning and the K=3 elbow
test, then retrains and prints the before/after numbers.  Takes ~20 s on
a laptop CPU.
"""

import numpy as np

from cmiprune import (
    LabeledDataset,
    PruneConfig,
    ScreeParams,
    ToyModel,
    bidirectional_prune,
    evaluate,
    label_kernel,
    summarize,
    synthetic_dataset,
    train,
)
from cmiprune.harness import ToyTrialSession, extract_features, retrain_under_plan

full = synthetic_dataset(768, num_classes=3, seed=0)
train_set = LabeledDataset(full.images[:512], full.labels[:512])
test_set = LabeledDataset(full.images[512:], full.labels[512:], split="test")

model = train(ToyModel.create(num_classes=3, seed=0), train_set, epochs=30, seed=0)
print(f"trained model: train {evaluate(model, train_set):.3f}, test {evaluate(model, test_set):.3f}")

layers, labels = extract_features(model, train_set, batch_size=256, seed=0)
y_kernel = label_kernel(labels)

cfg = PruneConfig(
    strategy="cross_compact",
    cutoff="scree",
    direction="bidirectional",
    accuracy_drop=0.01,
    target_accuracy=None,
    mode="actual",
    scree=ScreeParams(top_k=3),
    seed=0,
)
session = ToyTrialSession(model, train_set, cfg.mode)
plan = bidirectional_prune(layers, y_kernel, cfg, session.evaluate_retained)

print(f"\nstarting layer: {plan.start_layer}, commit order: {plan.commit_trace}")
for lp in plan.layers:
    kept = len(lp.selected)
    print(f"  layer {lp.layer_id}: kept {kept}/{len(lp.order)}  flags={list(lp.flags)}")
print(f"filters pruned: {plan.filters_pruned}/{plan.filters_total} "
      f"({100 * plan.filters_pruned / plan.filters_total:.1f}%)")

report = summarize(plan, model, test_set)
retrained = retrain_under_plan(model, plan, train_set, epochs=20, seed=0)
after = evaluate(retrained, test_set)
print(f"\nparameters retained: {report.parameters_retained} "
      f"(full model: {model.parameter_count()})")
print(f"test accuracy: before retrain {report.accuracy_before:.3f}, after {after:.3f}")
