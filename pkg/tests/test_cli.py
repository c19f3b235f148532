import json
import os

import numpy as np
import pytest

from signkit.cli import main

TINY_CONFIG = {
    "pipeline": {"keep_blocks": ["left_hand", "right_hand", "body"]},
    "model": {
        "conv_filters": [2],
        "lstm_units": 4,
        "lstm_proj_dim": 8,
        "keypoints": 75,
        "dropout": 0.0,
    },
    "train": {"batch_size": 4, "max_epochs": 2, "patience": 12, "lr0": 0.01},
}


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_data")
    assert main(["synth", "--out", str(root), "--classes", "2", "--per-class", "5", "--seed", "3"]) == 0
    return root


@pytest.fixture(scope="module")
def config_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "config.json"
    path.write_text(json.dumps(TINY_CONFIG))
    return path


@pytest.fixture(scope="module")
def trained(tmp_path_factory, dataset, config_path):
    out = tmp_path_factory.mktemp("run")
    code = main(
        [
            "train",
            "--manifest", str(dataset / "manifest.json"),
            "--out", str(out),
            "--config", str(config_path),
            "--seed", "1",
        ]
    )
    assert code == 0
    return out


class TestUsage:
    def test_unknown_flag_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["synth", "--bogus"])
        assert exc.value.code == 2

    def test_missing_subcommand_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2

    def test_domain_error_exits_1(self, tmp_path, capsys):
        code = main(["train", "--manifest", str(tmp_path / "nope.json"), "--out", str(tmp_path)])
        assert code == 1
        assert "error:" in capsys.readouterr().err


class TestVerifyArch:
    def test_table_output(self, capsys):
        assert main(["verify-arch"]) == 0
        out = capsys.readouterr().out
        assert "3,057,876" in out
        assert "3,060,948" in out
        assert "UNREALIZABLE" in out
        assert "Bidirectional LSTM-1" in out

    def test_json_output(self, capsys):
        assert main(["verify-arch", "--format", "json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["expected_total"] == 3_057_876
        assert payload["computed_total"] == 3_060_948
        assert payload["delta"] == 3_072


class TestPipelineCommands:
    def test_synth_writes_manifest(self, dataset):
        assert (dataset / "manifest.json").exists()
        assert len(list(dataset.glob("*.kpjl"))) == 10

    def test_preprocess_single_file(self, dataset, tmp_path):
        src = next(iter(sorted(dataset.glob("*.kpjl"))))
        out = tmp_path / "tensor.sgkt"
        assert main(["preprocess", "--input", str(src), "--out", str(out)]) == 0
        from signkit.checkpoint import load_tensor

        tensor = load_tensor(out)
        assert tensor.shape == (30, 543, 3)

    def test_augment_factor(self, dataset, tmp_path):
        out = tmp_path / "aug"
        code = main(
            [
                "augment",
                "--manifest", str(dataset / "manifest.json"),
                "--out", str(out),
                "--copies", "2",
                "--seed", "5",
            ]
        )
        assert code == 0
        from signkit.keypoints import read_manifest

        expanded = read_manifest(out / "manifest.json")
        assert len(expanded.sequences) == 30


class TestTrainEval:
    def test_train_outputs_exist(self, trained):
        assert (trained / "history.csv").exists()
        assert (trained / "best.sgkp").exists()
        assert (trained / "report.json").exists()
        assert (trained / "confusion.csv").exists()
        header = (trained / "history.csv").read_text().splitlines()[0]
        assert header == "epoch,train_loss,train_acc,val_loss,val_acc,lr,wall_ms"

    def test_eval_report(self, trained, dataset, tmp_path):
        out = tmp_path / "report.json"
        code = main(
            [
                "eval",
                "--model", str(trained / "best.sgkp"),
                "--manifest", str(dataset / "manifest.json"),
                "--out", str(out),
            ]
        )
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["classes"] == ["g00", "g01"]
        assert len(payload["confusion"]) == 2

    def test_infer_deterministic(self, trained, dataset, tmp_path):
        src = sorted(dataset.glob("*.kpjl"))[0]
        outs = []
        for name in ("a.json", "b.json"):
            out = tmp_path / name
            code = main(
                [
                    "infer",
                    "--model", str(trained / "best.sgkp"),
                    "--input", str(src),
                    "--out", str(out),
                ]
            )
            assert code == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]
        rows = json.loads(outs[0])
        assert all(set(r) == {"window_end", "label", "probs"} for r in rows)

    def test_bench_stats(self, trained, capsys):
        assert main(["bench", "--model", str(trained / "best.sgkp"), "--n", "3"]) == 0
        stats = json.loads(capsys.readouterr().out)
        assert stats["n"] == 3
        assert 0 < stats["p50_ms"] <= stats["p95_ms"]


class TestDeterminism:
    def _train(self, dataset, config_path, out, jobs="1"):
        code = main(
            [
                "train",
                "--manifest", str(dataset / "manifest.json"),
                "--out", str(out),
                "--config", str(config_path),
                "--seed", "7",
                "--jobs", jobs,
            ]
        )
        assert code == 0

    def test_two_runs_byte_identical(self, dataset, config_path, tmp_path):
        self._train(dataset, config_path, tmp_path / "r1")
        self._train(dataset, config_path, tmp_path / "r2")
        for name in ("history.csv", "best.sgkp", "report.json", "confusion.csv"):
            a = (tmp_path / "r1" / name).read_bytes()
            b = (tmp_path / "r2" / name).read_bytes()
            assert a == b, name

    def test_jobs_invariance(self, dataset, config_path, tmp_path):
        self._train(dataset, config_path, tmp_path / "j1", jobs="1")
        self._train(dataset, config_path, tmp_path / "j4", jobs="4")
        for name in ("history.csv", "best.sgkp", "report.json"):
            a = (tmp_path / "j1" / name).read_bytes()
            b = (tmp_path / "j4" / name).read_bytes()
            assert a == b, name


class TestCvGrid:
    def test_cv_summary(self, dataset, config_path, tmp_path):
        out = tmp_path / "cv"
        code = main(
            [
                "cv",
                "--manifest", str(dataset / "manifest.json"),
                "--out", str(out),
                "--config", str(config_path),
                "--k", "2",
                "--seed", "0",
            ]
        )
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["k"] == 2
        assert len(summary["per_fold_macro_f1"]) == 2
        assert (out / "fold0_report.json").exists()

    def test_grid_ranked_output(self, dataset, config_path, tmp_path):
        space = tmp_path / "space.json"
        space.write_text(json.dumps({"lr0": [0.01, 0.001]}))
        out = tmp_path / "grid.json"
        code = main(
            [
                "grid",
                "--manifest", str(dataset / "manifest.json"),
                "--space", str(space),
                "--out", str(out),
                "--config", str(config_path),
                "--seed", "0",
            ]
        )
        assert code == 0
        results = json.loads(out.read_text())
        assert len(results) == 2
        assert [r["rank"] for r in results] == [1, 2]
