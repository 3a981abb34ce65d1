"""End-to-end pipeline stages: prepare, order, prune, retrain, report.

Every stage writes its artifacts under the run's output directory and
stamps them with the config hash; failures land in error.json with the
failing stage named, and the process-style entry points return a nonzero
status instead of raising.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import RunConfig
from .dumpio import (
    atomic_write_text,
    load_model,
    read_feature_dump,
    save_model,
    write_feature_dump,
)
from .errors import CmipruneError, EvaluatorFailure
from .harness import ToyTrialSession, extract_features, retrain_under_plan
from .entropy import label_kernel
from .orchestrator import (
    PruneReport,
    PruningPlan,
    bidirectional_prune,
    forward_prune,
    summarize,
)
from .ordering import ConditioningContext, order_layer
from .toynet import LabeledDataset, ToyModel, evaluate, synthetic_dataset, train


@dataclass
class PipelineResult:
    status: int
    artifacts: dict[str, str]
    error: str | None = None
    failed_stage: str | None = None


class _StageError(Exception):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage}: {cause}")
        self.stage = stage
        self.cause = cause


def _json_text(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def toy_datasets(cfg: RunConfig) -> tuple[LabeledDataset, LabeledDataset]:
    full = synthetic_dataset(
        cfg.train_samples + cfg.test_samples,
        num_classes=cfg.classes,
        image_size=cfg.image_size,
        seed=cfg.seed,
    )
    train_set = LabeledDataset(full.images[: cfg.train_samples], full.labels[: cfg.train_samples])
    test_set = LabeledDataset(
        full.images[cfg.train_samples :], full.labels[cfg.train_samples :], split="test"
    )
    return train_set, test_set


def prepare_toy(cfg: RunConfig) -> tuple[ToyModel, LabeledDataset, LabeledDataset]:
    """Trained toy model plus its train/test split, all seeded."""
    train_set, test_set = toy_datasets(cfg)
    if cfg.model_dir:
        model = load_model(cfg.model_dir)
    else:
        model = ToyModel.create(
            input_shape=(1, cfg.image_size, cfg.image_size),
            num_classes=cfg.classes,
            batch_norm=cfg.batch_norm,
            seed=cfg.seed,
        )
        model = train(
            model,
            train_set,
            epochs=cfg.train_epochs,
            lr=cfg.learning_rate,
            momentum=cfg.momentum,
            batch_size=cfg.batch_size,
            seed=cfg.seed,
        )
    return model, train_set, test_set


def _load_features(cfg: RunConfig):
    """(features_per_layer, labels, model | None, train/test sets | None)."""
    if cfg.source == "dump":
        layers, labels = read_feature_dump(cfg.features_dir)
        return layers, labels, None, None, None
    model, train_set, test_set = prepare_toy(cfg)
    layers, labels = extract_features(model, train_set, cfg.extract_batch, cfg.seed)
    return layers, labels, model, train_set, test_set


def _external_evaluator(retained):
    if retained:
        raise EvaluatorFailure(
            "feature dumps carry no runnable model; use cutoff scree with --K 1 "
            "or the permutation cutoff"
        )
    return float("nan")


def run_order(cfg: RunConfig, layer: int | None = None) -> PipelineResult:
    """Rank features and emit score-curve CSVs; prunes nothing."""
    out = Path(cfg.out_dir)
    try:
        layers, labels, _, _, _ = _stage("prepare", _load_features, cfg)
        y_kernel = label_kernel(labels)
        wanted = [lf for lf in layers if layer is None or lf.layer_id == layer]
        if not wanted:
            raise _StageError("order", KeyError(f"no layer {layer} in features"))
        artifacts = {}
        out.mkdir(parents=True, exist_ok=True)
        for lf in wanted:
            ordered = _stage(
                "order",
                order_layer,
                lf,
                y_kernel,
                ConditioningContext("per_layer"),
                cfg.alpha,
                spec=cfg.prune_config().kernel,
            )
            path = out / f"cmi_layer{lf.layer_id:02d}.csv"
            _write_curve(path, ordered.order, ordered.cmi_values, cfg.config_hash())
            artifacts[f"cmi_layer{lf.layer_id}"] = str(path)
        return PipelineResult(0, artifacts)
    except _StageError as e:
        return _fail(out, e)


def run_extract(cfg: RunConfig) -> PipelineResult:
    """Train (or load) the toy model and write its feature dump + weights."""
    out = Path(cfg.out_dir)
    try:
        model, train_set, _ = _stage("prepare", prepare_toy, cfg)
        from .toynet import activation_tensors

        n = min(cfg.extract_batch, len(train_set))
        rng = np.random.default_rng(cfg.seed)
        idx = rng.choice(len(train_set), size=n, replace=False)
        batch = LabeledDataset(train_set.images[idx], train_set.labels[idx])
        tensors = _stage("extract", activation_tensors, model, batch)
        dump_dir = out / "features"
        _stage("extract", write_feature_dump, dump_dir, tensors, batch.labels, "toy")
        model_dir = out / "model"
        _stage("extract", save_model, model, model_dir)
        _write_config(out, cfg)
        return PipelineResult(
            0, {"features": str(dump_dir), "model": str(model_dir), "config": str(out / "config.json")}
        )
    except _StageError as e:
        return _fail(out, e)


def run_prune(cfg: RunConfig) -> PipelineResult:
    """Full pipeline: features -> plan -> report (+ optional retrain)."""
    out = Path(cfg.out_dir)
    try:
        layers, labels, model, train_set, test_set = _stage("prepare", _load_features, cfg)
        y_kernel = label_kernel(labels)
        prune_cfg = cfg.prune_config()
        if model is None and cfg.target_accuracy is None:
            raise _StageError(
                "prune",
                ValueError("dump-source runs need an explicit --target-accuracy"),
            )
        session = None
        if model is not None:
            session = ToyTrialSession(model, train_set, cfg.mode)
            evaluator = session.evaluate_retained
        else:
            evaluator = _external_evaluator
        runner = bidirectional_prune if cfg.direction == "bidirectional" else forward_prune
        plan = _stage("prune", runner, layers, y_kernel, prune_cfg, evaluator)

        out.mkdir(parents=True, exist_ok=True)
        artifacts = {}
        _write_config(out, cfg)
        artifacts["config"] = str(out / "config.json")
        plan_path = out / "plan.json"
        atomic_write_text(
            plan_path, _json_text({"config_hash": cfg.config_hash(), "plan": plan.to_dict()})
        )
        artifacts["plan"] = str(plan_path)
        for lp in plan.layers:
            path = out / f"cmi_layer{lp.layer_id:02d}.csv"
            _write_curve(path, lp.order, lp.cmi_values, cfg.config_hash())
            artifacts[f"cmi_layer{lp.layer_id}"] = str(path)

        report = None
        if model is not None:
            report = _stage("report", summarize, plan, model, test_set)
            model_dir = out / "model"
            _stage("report", save_model, model, model_dir)
            artifacts["model"] = str(model_dir)
            if cfg.retrain_epochs > 0:
                retrained = _stage(
                    "retrain",
                    retrain_under_plan,
                    model,
                    plan,
                    train_set,
                    cfg.retrain_epochs,
                    cfg.learning_rate,
                    cfg.momentum,
                    cfg.batch_size,
                    cfg.seed,
                )
                report = replace(
                    report, accuracy_after_retrain=evaluate(retrained, test_set)
                )
                retrained_dir = out / "model_retrained"
                _stage("retrain", save_model, retrained, retrained_dir)
                artifacts["model_retrained"] = str(retrained_dir)
        if report is not None:
            artifacts.update(_write_report(out, cfg, report))
        return PipelineResult(0, artifacts)
    except _StageError as e:
        return _fail(out, e)


def run_retrain(run_dir: Path, epochs: int | None = None) -> PipelineResult:
    """Fine-tune the pruned model of a previous prune run and re-report."""
    run_dir = Path(run_dir)
    try:
        cfg = _stage("prepare", _read_config, run_dir)
        if epochs is not None:
            cfg = replace(cfg, retrain_epochs=epochs)
        if cfg.retrain_epochs < 1:
            cfg = replace(cfg, retrain_epochs=20)
        plan_doc = json.loads((run_dir / "plan.json").read_text())
        plan = PruningPlan.from_dict(plan_doc["plan"])
        model = _stage("prepare", load_model, run_dir / "model")
        train_set, test_set = toy_datasets(cfg)
        retrained = _stage(
            "retrain",
            retrain_under_plan,
            model,
            plan,
            train_set,
            cfg.retrain_epochs,
            cfg.learning_rate,
            cfg.momentum,
            cfg.batch_size,
            cfg.seed,
        )
        report = _stage("report", summarize, plan, model, test_set)
        report = replace(report, accuracy_after_retrain=evaluate(retrained, test_set))
        retrained_dir = run_dir / "model_retrained"
        _stage("retrain", save_model, retrained, retrained_dir)
        artifacts = {"model_retrained": str(retrained_dir)}
        artifacts.update(_write_report(run_dir, cfg, report))
        return PipelineResult(0, artifacts)
    except _StageError as e:
        return _fail(run_dir, e)


def run_report(run_dir: Path) -> PipelineResult:
    """Render the stored report as text on stdout."""
    run_dir = Path(run_dir)
    try:
        doc = _stage("report", lambda: json.loads((run_dir / "report.json").read_text()))
        print(format_report(doc))
        return PipelineResult(0, {"report": str(run_dir / "report.json")})
    except _StageError as e:
        return _fail(run_dir, e)


def format_report(doc: dict) -> str:
    r = doc["report"]
    after = r["accuracy_after_retrain"]
    lines = [
        f"config hash:       {doc['config_hash']}",
        f"mode:              {r['mode']}",
        f"filters pruned:    {r['filters_pruned']} / {r['filters_total']} "
        f"({100 * r['pruned_percent']:.2f}%)",
        f"parameters kept:   {r['parameters_retained']}",
        f"accuracy before:   {100 * r['accuracy_before']:.2f}%",
        f"accuracy after:    {'-' if after is None else f'{100 * after:.2f}%'}",
        "",
        "layer  total  kept  pruned",
    ]
    for row in r["per_layer"]:
        lines.append(
            f"{row['layer_id']:>5}  {row['filters_total']:>5}  "
            f"{row['filters_selected']:>4}  {row['filters_pruned']:>6}"
        )
    return "\n".join(lines)


# --- helpers -----------------------------------------------------------------


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except _StageError:
        raise
    except (CmipruneError, OSError, ValueError, KeyError) as e:
        raise _StageError(name, e) from e


def _fail(out: Path, err: _StageError) -> PipelineResult:
    log = {
        "stage": err.stage,
        "error": type(err.cause).__name__,
        "message": str(err.cause),
    }
    try:
        out.mkdir(parents=True, exist_ok=True)
        atomic_write_text(Path(out) / "error.json", _json_text(log))
    except OSError:
        pass
    return PipelineResult(1, {}, error=str(err.cause), failed_stage=err.stage)


def _write_config(out: Path, cfg: RunConfig) -> None:
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(
        out / "config.json",
        _json_text({"config_hash": cfg.config_hash(), "config": cfg.to_dict()}),
    )


def _read_config(run_dir: Path) -> RunConfig:
    doc = json.loads((Path(run_dir) / "config.json").read_text())
    return RunConfig.from_dict(doc["config"])


def _write_curve(path: Path, order, values, config_hash: str) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow([f"# config_hash={config_hash}"])
    writer.writerow(["rank", "feature_index", "cmi"])
    for rank, (idx, val) in enumerate(zip(order, values), start=1):
        writer.writerow([rank, idx, f"{val:.12g}"])
    atomic_write_text(path, buf.getvalue())


def _write_report(out: Path, cfg: RunConfig, report: PruneReport) -> dict[str, str]:
    report_path = out / "report.json"
    atomic_write_text(
        report_path,
        _json_text({"config_hash": cfg.config_hash(), "report": report.to_dict()}),
    )
    csv_path = out / "report.csv"
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(
        [
            "Algorithm",
            "Parameters Retained",
            "Filters Pruned Percentage",
            "Accuracy before Retraining",
            "Accuracy after Retraining",
        ]
    )
    after = report.accuracy_after_retrain
    writer.writerow(
        [
            f"{cfg.direction} pruning & {cfg.strategy} ({cfg.cutoff}) [{cfg.config_hash()}]",
            report.parameters_retained,
            f"{100 * report.pruned_percent:.2f}%",
            f"{100 * report.accuracy_before:.2f}%",
            "-" if after is None else f"{100 * after:.2f}%",
        ]
    )
    atomic_write_text(csv_path, buf.getvalue())
    return {"report": str(report_path), "report_csv": str(csv_path)}
