import time

import pytest

from cmiprune import LabeledDataset, ToyModel, evaluate, synthetic_dataset, train


@pytest.fixture(scope="session")
def trained_toy():
    """Seeded reference model at >= 95% synthetic test accuracy.

    Shared across acceptance tests; timing is exposed so the end-to-end
    budget can include training.
    """
    t0 = time.monotonic()
    full = synthetic_dataset(768, num_classes=3, seed=0)
    train_set = LabeledDataset(full.images[:512], full.labels[:512])
    test_set = LabeledDataset(full.images[512:], full.labels[512:], split="test")
    model = ToyModel.create(num_classes=3, batch_norm=False, seed=0)
    model = train(model, train_set, epochs=30, seed=0)
    elapsed = time.monotonic() - t0
    return {
        "model": model,
        "train": train_set,
        "test": test_set,
        "test_accuracy": evaluate(model, test_set),
        "train_accuracy": evaluate(model, train_set),
        "train_seconds": elapsed,
    }
