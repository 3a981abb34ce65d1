"""Serializable configuration for a whole pipeline run."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass

from .cutoff import PermutationParams, ScreeParams, XMeansParams
from .entropy import KernelSpec
from .orchestrator import PruneConfig


@dataclass(frozen=True)
class RunConfig:
    """Flat field set the CLI maps onto one-to-one.

    The hash covers every field except out_dir, so two runs writing to
    different places still produce identically-stamped artifacts.
    """

    # pruning algorithm
    strategy: str = "cross_compact"
    cutoff: str = "scree"
    direction: str = "bidirectional"
    target_accuracy: float | None = None
    accuracy_drop: float | None = 0.01
    mode: str = "actual"
    alpha: float = 1.01
    kernel: str = "rbf"
    sigma: float | None = None
    top_k: int = 3
    scree_fallback: str = "max_index"
    xmeans_k_init: int = 1
    xmeans_k_max: int | None = None
    permutations: int = 100
    significance: float = 0.05
    prune_last_layer: bool = False
    stage1_masks: str = "discard"
    # feature source
    source: str = "toy"  # toy | dump
    features_dir: str | None = None
    model_dir: str | None = None
    # toy harness
    classes: int = 3
    train_samples: int = 512
    test_samples: int = 256
    image_size: int = 16
    batch_norm: bool = False
    train_epochs: int = 30
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 32
    extract_batch: int = 256
    retrain_epochs: int = 0
    # run
    seed: int = 0
    out_dir: str = "run_out"

    def __post_init__(self):
        if self.source not in ("toy", "dump"):
            raise ValueError(f"unknown source {self.source!r}")
        if self.source == "dump" and not self.features_dir:
            raise ValueError("source 'dump' needs features_dir")

    def prune_config(self) -> PruneConfig:
        return PruneConfig(
            strategy=self.strategy,
            cutoff=self.cutoff,
            direction=self.direction,
            target_accuracy=self.target_accuracy,
            accuracy_drop=self.accuracy_drop,
            mode=self.mode,
            alpha=self.alpha,
            kernel=KernelSpec(kind=self.kernel, sigma=self.sigma),
            scree=ScreeParams(top_k=self.top_k, fallback=self.scree_fallback),
            xmeans=XMeansParams(
                k_init=self.xmeans_k_init, k_max=self.xmeans_k_max, rng_seed=self.seed
            ),
            permutation=PermutationParams(
                permutations=self.permutations, significance=self.significance,
                rng_seed=self.seed,
            ),
            seed=self.seed,
            prune_last_layer=self.prune_last_layer,
            stage1_masks=self.stage1_masks,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("out_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]
