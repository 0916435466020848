from __future__ import annotations

import json

import pytest

from graphspot.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, POOLING_ROWS, WINDOW_ROWS, ReplicateConfig, main, sha256_file
from graphspot.data import load_match
from graphspot.spotter import SpottingPrediction, write_predictions

GEN = {"duration_s": 240.0, "events_per_class": 1, "decoys": 1, "reverse_decoys": 2}


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def _manifest_core(path):
    raw = json.loads(path.read_text())
    raw.pop("timings_s")
    return raw


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    cfg = _write(root / "gen.json", {"generator": GEN, "splits": [2, 1, 1]})
    assert main(["generate", "--config", cfg, "--seed", "4", "--out", str(root / "ds")]) == EXIT_OK
    return root / "ds"


@pytest.fixture(scope="module")
def trained(dataset, tmp_path_factory):
    root = tmp_path_factory.mktemp("train")
    cfg = _write(root / "train.json", {"max_epochs": 1, "stride_s": 5.0, "method": "netvlad++", "k": 8})
    ckpt = root / "model.json"
    code = main(["train", "--config", cfg, "--train", str(dataset / "train"), "--val", str(dataset / "val"), "--out", str(ckpt)])
    assert code == EXIT_OK
    return ckpt


class TestGenerate:
    def test_layout_and_manifest(self, dataset):
        files = sorted(p.name for p in dataset.rglob("*.jsonl"))
        assert len(files) == 4
        manifest = json.loads((dataset / "manifest.json").read_text())
        assert manifest["seed"] == 4 and len(manifest["outputs"]) == 4
        for path, digest in manifest["outputs"].items():
            assert sha256_file(path) == digest

    def test_same_seed_same_manifest(self, tmp_path):
        cfg = _write(tmp_path / "g.json", {"generator": {**GEN, "duration_s": 120.0, "events_per_class": 0}, "splits": [1, 1, 0]})
        for name in ("a", "b"):
            assert main(["generate", "--config", cfg, "--out", str(tmp_path / "same")]) == EXIT_OK
            (tmp_path / f"{name}.json").write_text(json.dumps(_manifest_core(tmp_path / "same" / "manifest.json")))
        assert (tmp_path / "a.json").read_text() == (tmp_path / "b.json").read_text()


class TestTrainSpotEval:
    def test_train_outputs(self, trained):
        for suffix in (".model.json", ".history.csv", ".manifest.json"):
            assert trained.with_suffix(suffix).exists()
        manifest = json.loads(trained.with_suffix(".manifest.json").read_text())
        assert manifest["config"]["method"] == "netvlad++" and len(manifest["inputs"]) == 3

    def test_spot_then_eval(self, trained, dataset, tmp_path):
        test_dir = dataset / "test"
        assert main(["spot", "--checkpoint", str(trained), "--match", str(test_dir), "--out-dir", str(tmp_path / "s"),
                     "--conf-threshold", "0.0"]) == EXIT_OK
        preds = sorted((tmp_path / "s").glob("*.predictions.csv"))
        assert len(preds) == 1 and len(list((tmp_path / "s").glob("*.curve.csv"))) == 1
        gt = sorted(test_dir.glob("*.jsonl"))
        out = tmp_path / "report.json"
        assert main(["eval", "--predictions", *map(str, preds), "--ground-truth", *map(str, gt), "--out", str(out),
                     "--pr-csv", str(tmp_path / "pr")]) == EXIT_OK
        report = json.loads(out.read_text())
        assert 0.0 <= report["mAP"] <= 1.0 and len(report["deltas_s"]) == 12
        assert len(list((tmp_path / "pr").glob("*.csv"))) == 12 * len(report["classes"])

    def test_spot_is_deterministic(self, trained, dataset, tmp_path):
        for name in ("a", "b"):
            assert main(["spot", "--checkpoint", str(trained), "--match", str(dataset / "test"), "--out-dir", str(tmp_path / name)]) == EXIT_OK
        for f in sorted((tmp_path / "a").glob("*.csv")):
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()

    def test_ground_truth_echo_scores_one(self, dataset, tmp_path):
        gt = sorted((dataset / "test").glob("*.jsonl"))[0]
        match = load_match(gt)
        pred = tmp_path / "echo.csv"
        write_predictions([SpottingPrediction(e.class_id, e.frame_index / match.fps, 1.0) for e in match.events], pred)
        out = tmp_path / "echo.json"
        assert main(["eval", "--predictions", str(pred), "--ground-truth", str(gt), "--out", str(out)]) == EXIT_OK
        assert json.loads(out.read_text())["mAP"] == 1.0

    def test_plots(self, trained, dataset, tmp_path):
        gt = sorted((dataset / "test").glob("*.jsonl"))[0]
        assert main(["spot", "--checkpoint", str(trained), "--match", str(gt), "--out-dir", str(tmp_path / "s")]) == EXIT_OK
        curve = next((tmp_path / "s").glob("*.curve.csv"))
        out = tmp_path / "c.svg"
        assert main(["plot", "confidence", "--curve", str(curve), "--match", str(gt), "--classes", "0", "1", "--out", str(out)]) == EXIT_OK
        assert out.read_bytes().lstrip().startswith(b"<?xml")
        assert out.with_suffix(".manifest.json").exists()


class TestExitCodes:
    def test_unknown_flag(self, capsys):
        assert main(["eval", "--predictions", "p", "--ground-truth", "g", "--out", "o", "--bogus"]) == EXIT_USAGE
        assert "--bogus" in capsys.readouterr().err

    def test_missing_required_flag_is_named(self, capsys):
        assert main(["eval", "--predictions", "p"]) == EXIT_USAGE
        assert "--ground-truth" in capsys.readouterr().err

    def test_missing_subcommand(self):
        assert main([]) == EXIT_USAGE

    def test_eval_count_mismatch(self, tmp_path, capsys):
        code = main(["eval", "--predictions", "a.csv", "b.csv", "--ground-truth", "g.jsonl", "--out", str(tmp_path / "r.json")])
        assert code == EXIT_USAGE and "--predictions" in capsys.readouterr().err

    def test_plot_needs_report(self, tmp_path):
        assert main(["plot", "pr", "--out", str(tmp_path / "x.svg")]) == EXIT_USAGE

    def test_malformed_match_is_data_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"match_id": "m", "pitch_length_m": 105, "pitch_width_m": 68, "fps": 2}\n{"frame": 0, "entities": [{"kind": "A", "x": 500, "y": 0}]}\n')
        pred = tmp_path / "p.csv"
        write_predictions([], pred)
        code = main(["eval", "--predictions", str(pred), "--ground-truth", str(bad), "--out", str(tmp_path / "r.json")])
        assert code == EXIT_DATA and "InvariantViolation" in capsys.readouterr().err

    def test_missing_file_is_data_error(self, tmp_path):
        assert main(["spot", "--checkpoint", str(tmp_path / "none.json"), "--match", "x", "--out-dir", str(tmp_path)]) == EXIT_DATA

    def test_bad_generator_config(self, tmp_path, capsys):
        cfg = _write(tmp_path / "g.json", {"generator": {"duration_s": 10.0}})
        assert main(["generate", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_DATA
        assert "ConfigError" in capsys.readouterr().err

    def test_unknown_train_field(self, tmp_path, dataset):
        cfg = _write(tmp_path / "t.json", {"epochs": 3})
        code = main(["train", "--config", cfg, "--train", str(dataset / "train"), "--val", str(dataset / "val"), "--out", str(tmp_path / "m.json")])
        assert code == EXIT_DATA


class TestReplicate:
    def test_default_rows(self):
        cfg = ReplicateConfig()
        assert cfg.methods == POOLING_ROWS and len(cfg.methods) == 8
        assert cfg.windows_s == WINDOW_ROWS and len(cfg.windows_s) == 12

    def test_small_run_is_deterministic(self, tmp_path):
        cfg = _write(tmp_path / "r.json", {
            "splits": [1, 1, 1], "generator": GEN, "train": {"max_epochs": 1, "stride_s": 5.0, "k": 8},
            "methods": ["avg", "netvlad++"], "windows_s": [10, 20], "workers": 1,
        })
        for name in ("a", "b"):
            assert main(["replicate", "--config", cfg, "--out", str(tmp_path / name)]) == EXIT_OK
        a, b = tmp_path / "a", tmp_path / "b"
        table = (a / "table.txt").read_text()
        assert len([ln for ln in table.splitlines() if ln]) == 8  # two titles, two headers, 2 + 2 rows
        for rel in ("comparison.json", "table.txt", "runs/netvlad++_T10/model.json", "runs/avg_T10/report.json", "plots/pr_netvlad++_T10.svg"):
            assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel
        core_a, core_b = _manifest_core(a / "manifest.json"), _manifest_core(b / "manifest.json")
        assert list(core_a["outputs"].values()) == list(core_b["outputs"].values())

    def test_unknown_field(self, tmp_path):
        cfg = _write(tmp_path / "r.json", {"pooling": ["avg"]})
        assert main(["replicate", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_DATA
