"""Pipeline and CLI tests on a deliberately small toy configuration."""

import json
import subprocess
import sys

import numpy as np
import pytest

from cmiprune.cli import main
from cmiprune.config import RunConfig
from cmiprune.pipeline import run_extract, run_order, run_prune, run_retrain

FAST_TOY = dict(
    train_samples=96,
    test_samples=48,
    train_epochs=4,
    extract_batch=48,
    top_k=1,
    direction="forward",
    strategy="cross_compact",
    accuracy_drop=None,
    target_accuracy=0.5,
)


def fast_config(out_dir, **overrides):
    kw = dict(FAST_TOY)
    kw.update(overrides)
    return RunConfig(out_dir=str(out_dir), **kw)


class TestRunConfig:
    def test_round_trip(self):
        cfg = fast_config("x", seed=3)
        clone = RunConfig.from_dict(cfg.to_dict())
        assert clone == cfg

    def test_hash_ignores_out_dir(self):
        a = fast_config("a")
        b = fast_config("b")
        assert a.config_hash() == b.config_hash()
        assert a.config_hash() != fast_config("a", seed=9).config_hash()

    def test_dump_source_needs_dir(self):
        with pytest.raises(ValueError):
            RunConfig(source="dump")


class TestPipeline:
    def test_prune_writes_stamped_artifacts(self, tmp_path):
        cfg = fast_config(tmp_path / "run")
        result = run_prune(cfg)
        assert result.status == 0, result.error
        plan_doc = json.loads((tmp_path / "run" / "plan.json").read_text())
        report_doc = json.loads((tmp_path / "run" / "report.json").read_text())
        assert plan_doc["config_hash"] == cfg.config_hash()
        assert report_doc["config_hash"] == cfg.config_hash()
        csv_head = (tmp_path / "run" / "report.csv").read_text().splitlines()[0]
        assert csv_head.split(",") == [
            "Algorithm",
            "Parameters Retained",
            "Filters Pruned Percentage",
            "Accuracy before Retraining",
            "Accuracy after Retraining",
        ]

    def test_plan_json_byte_identical_across_runs(self, tmp_path):
        a = run_prune(fast_config(tmp_path / "a"))
        b = run_prune(fast_config(tmp_path / "b"))
        assert a.status == 0 and b.status == 0
        assert (tmp_path / "a" / "plan.json").read_bytes() == (
            tmp_path / "b" / "plan.json"
        ).read_bytes()

    def test_cmi_curves_non_increasing(self, tmp_path):
        cfg = fast_config(tmp_path / "run")
        assert run_prune(cfg).status == 0
        for k in (1, 2, 3):
            rows = (tmp_path / "run" / f"cmi_layer{k:02d}.csv").read_text().splitlines()[2:]
            values = [float(r.split(",")[2]) for r in rows]
            slack = 1e-6 * max(1.0, values[0])
            assert all(b <= a + slack for a, b in zip(values, values[1:]))
            assert values[-1] == 0.0

    def test_order_stage_emits_curve_only(self, tmp_path):
        cfg = fast_config(tmp_path / "run")
        result = run_order(cfg, layer=1)
        assert result.status == 0
        assert (tmp_path / "run" / "cmi_layer01.csv").exists()
        assert not (tmp_path / "run" / "plan.json").exists()

    def test_extract_then_prune_from_dump(self, tmp_path):
        cfg = fast_config(tmp_path / "ex")
        assert run_extract(cfg).status == 0
        dump_cfg = fast_config(
            tmp_path / "run2",
            source="dump",
            features_dir=str(tmp_path / "ex" / "features"),
            target_accuracy=0.5,
        )
        result = run_prune(dump_cfg)
        assert result.status == 0, result.error
        assert (tmp_path / "run2" / "plan.json").exists()
        # no model -> no report
        assert not (tmp_path / "run2" / "report.json").exists()

    def test_dump_prune_requires_explicit_target(self, tmp_path):
        cfg = fast_config(tmp_path / "ex")
        assert run_extract(cfg).status == 0
        bad = fast_config(
            tmp_path / "run3",
            source="dump",
            features_dir=str(tmp_path / "ex" / "features"),
            target_accuracy=None,
            accuracy_drop=0.01,
        )
        result = run_prune(bad)
        assert result.status == 1
        err = json.loads((tmp_path / "run3" / "error.json").read_text())
        assert err["stage"] == "prune"

    def test_error_log_on_bad_features_dir(self, tmp_path):
        cfg = fast_config(
            tmp_path / "run4", source="dump", features_dir=str(tmp_path / "nowhere"),
            target_accuracy=0.5,
        )
        result = run_prune(cfg)
        assert result.status == 1
        assert result.failed_stage == "prepare"
        err = json.loads((tmp_path / "run4" / "error.json").read_text())
        assert err["error"] == "ManifestMissing"

    def test_retrain_updates_report(self, tmp_path):
        cfg = fast_config(tmp_path / "run")
        assert run_prune(cfg).status == 0
        before = json.loads((tmp_path / "run" / "report.json").read_text())
        assert before["report"]["accuracy_after_retrain"] is None
        result = run_retrain(tmp_path / "run", epochs=2)
        assert result.status == 0, result.error
        after = json.loads((tmp_path / "run" / "report.json").read_text())
        assert after["report"]["accuracy_after_retrain"] is not None


class TestCli:
    def test_prune_subcommand(self, tmp_path, capsys):
        status = main(
            [
                "prune", "--strategy", "compact", "--cutoff", "scree",
                "--direction", "forward", "--K", "1",
                "--target-accuracy", "0.5", "--train-samples", "96",
                "--test-samples", "48", "--train-epochs", "4",
                "--extract-batch", "48", "--out", str(tmp_path / "cli_run"),
            ]
        )
        assert status == 0
        out = capsys.readouterr().out
        assert "plan" in out
        assert (tmp_path / "cli_run" / "plan.json").exists()

    def test_bidirectional_compact_scree_k3(self, tmp_path):
        status = main(
            [
                "prune", "--strategy", "compact", "--cutoff", "scree",
                "--direction", "bidirectional", "--K", "3",
                "--accuracy-drop", "0.01", "--train-samples", "96",
                "--test-samples", "48", "--train-epochs", "4",
                "--extract-batch", "48", "--out", str(tmp_path / "bidir"),
            ]
        )
        assert status == 0
        plan = json.loads((tmp_path / "bidir" / "plan.json").read_text())["plan"]
        assert plan["direction"] == "bidirectional"
        assert plan["start_layer"] in (1, 2, 3)

    def test_order_subcommand(self, tmp_path):
        status = main(
            [
                "order", "--layer", "1", "--train-samples", "96",
                "--test-samples", "48", "--train-epochs", "2",
                "--extract-batch", "48", "--out", str(tmp_path / "cli_order"),
            ]
        )
        assert status == 0
        assert (tmp_path / "cli_order" / "cmi_layer01.csv").exists()

    def test_report_subcommand(self, tmp_path, capsys):
        assert run_prune(fast_config(tmp_path / "run")).status == 0
        status = main(["report", "--run", str(tmp_path / "run")])
        assert status == 0
        assert "filters pruned" in capsys.readouterr().out

    def test_entry_point_exists(self):
        proc = subprocess.run(
            [sys.executable, "-m", "cmiprune.cli", "--help"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        for sub in ("extract", "order", "prune", "retrain", "report"):
            assert sub in proc.stdout

    def test_thread_env_cap_preserves_results(self, tmp_path, monkeypatch):
        a = run_prune(fast_config(tmp_path / "serial"))
        monkeypatch.setenv("CMIPRUNE_THREADS", "4")
        b = run_prune(fast_config(tmp_path / "threaded"))
        assert a.status == 0 and b.status == 0
        assert (tmp_path / "serial" / "plan.json").read_bytes() == (
            tmp_path / "threaded" / "plan.json"
        ).read_bytes()
