import json

import pytest

from contradapt import __version__
from contradapt.cli import main


def _gen_small(tmp_path, name="data", kind="blobs", seed=0, extra=()):
    out = tmp_path / name
    args = [
        "gen", "--kind", kind, "--out", str(out), "--seed", str(seed),
        "--per-class", "12",
    ]
    if kind == "blobs":
        args += ["--classes", "2", "--dims", "2"]
    assert main(args + list(extra)) == 0
    return out


_FAST_TRAIN = [
    "--loops", "2", "--steps-per-loop", "3", "--hidden-sizes", "8",
    "--bottleneck-dim", "4", "--probe-per-class", "4",
    "--per-class-source", "4", "--per-class-target", "4",
    "--ce-batch-size", "8", "--d0", "0.5", "--n0", "0",
]


def _run_train(data_dir, out_dir, extra=()):
    return main(
        ["train", "--source", str(data_dir / "source.csv"),
         "--target", str(data_dir / "target.csv"), "--out", str(out_dir)]
        + _FAST_TRAIN + list(extra)
    )


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_gen_writes_deterministic_artifacts(tmp_path, capsys):
    a = _gen_small(tmp_path, "a", kind="moons", seed=7)
    b = _gen_small(tmp_path, "b", kind="moons", seed=7)
    assert (a / "source.csv").read_bytes() == (b / "source.csv").read_bytes()
    assert (a / "target.csv").read_bytes() == (b / "target.csv").read_bytes()
    manifest = json.loads((a / "gen_manifest.json").read_text())
    assert manifest["command"] == "gen"
    assert manifest["generator"]["generator"] == "moons"
    assert manifest["generator"]["seed"] == 7
    c = _gen_small(tmp_path, "c", kind="moons", seed=8)
    assert (a / "source.csv").read_bytes() != (c / "source.csv").read_bytes()


def test_gen_blobs_respects_flags(tmp_path):
    out = _gen_small(tmp_path, "blobs4", kind="blobs",
                     extra=("--rotation", "45", "--translation", "1.5"))
    manifest = json.loads((out / "gen_manifest.json").read_text())
    assert manifest["generator"]["rotation_deg"] == 45.0
    assert manifest["generator"]["translation"] == 1.5
    header = (out / "source.csv").read_text().splitlines()[0]
    assert header == "feature_0,feature_1,label,domain"


def test_gen_missing_required_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["gen", "--kind", "moons"])  # no --out
    assert exc.value.code == 2


def test_train_requires_dataset_paths(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--out", str(tmp_path / "run")])
    assert exc.value.code == 2
    assert "--source" in capsys.readouterr().err


def test_train_writes_run_artifacts(tmp_path, capsys):
    data = _gen_small(tmp_path)
    out = tmp_path / "run"
    assert _run_train(data, out, ["--method", "can", "--seed", "3"]) == 0
    line = capsys.readouterr().out.strip().splitlines()[-1]
    assert "method=can" in line and "seed=3" in line

    records = [json.loads(l) for l in (out / "metrics.jsonl").read_text().splitlines()]
    assert len(records) == 2
    assert [r["loop"] for r in records] == [0, 1]
    for r in records:
        assert set(r) == {
            "loop", "ce_loss", "cdd_estimate", "cdd_g", "target_accuracy",
            "clustering_accuracy", "n_kept", "n_kept_classes", "learning_rate",
        }
    summary = json.loads((out / "summary.json").read_text())
    assert summary["method"] == "can" and summary["loops_run"] == 2
    assert (out / "checkpoint.txt").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["method"] == "can"
    assert manifest["config"]["seed"] == 3
    assert manifest["datasets"]["source"].endswith("source.csv")
    assert manifest["datasets"]["source_generator"]["generator"] == "blobs"


def test_train_config_file_with_flag_override(tmp_path, capsys):
    data = _gen_small(tmp_path)
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({
        "method": "can", "loops": 1, "steps_per_loop": 2, "hidden_sizes": [8],
        "bottleneck_dim": 4, "probe_per_class": 4, "ce_batch_size": 8,
        "source": str(data / "source.csv"), "target": str(data / "target.csv"),
    }))
    out = tmp_path / "run"
    assert main(["train", "--out", str(out), "--config", str(cfg_path),
                 "--method", "source-only"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["method"] == "source-only"  # flag beats file
    assert summary["loops_run"] == 1


def test_train_rejects_unknown_config_keys(tmp_path, capsys):
    data = _gen_small(tmp_path)
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"method": "can", "wombat": True}))
    code = main(["train", "--out", str(tmp_path / "r"), "--config", str(cfg_path),
                 "--source", str(data / "source.csv"),
                 "--target", str(data / "target.csv")])
    assert code == 1
    assert "unknown config keys" in capsys.readouterr().err


def test_manifest_rerun_is_byte_identical(tmp_path):
    data = _gen_small(tmp_path)
    first = tmp_path / "first"
    assert _run_train(data, first, ["--method", "can", "--seed", "5"]) == 0
    second = tmp_path / "second"
    assert main(["train", "--config", str(first / "manifest.json"),
                 "--out", str(second)]) == 0
    assert (first / "metrics.jsonl").read_bytes() == (second / "metrics.jsonl").read_bytes()
    assert (first / "checkpoint.txt").read_bytes() == (second / "checkpoint.txt").read_bytes()


def test_eval_reports_accuracy(tmp_path, capsys):
    data = _gen_small(tmp_path)
    out = tmp_path / "run"
    assert _run_train(data, out) == 0
    capsys.readouterr()
    assert main(["eval", "--checkpoint", str(out / "checkpoint.txt"),
                 "--data", str(data / "target.csv")]) == 0
    report = json.loads(capsys.readouterr().out)
    assert set(report) == {"accuracy", "per_class", "mean_class_accuracy", "n"}
    assert 0.0 <= report["accuracy"] <= 1.0
    assert report["n"] == 24


def test_eval_failure_paths(tmp_path, capsys):
    data = _gen_small(tmp_path)
    assert main(["eval", "--checkpoint", str(tmp_path / "nope.txt"),
                 "--data", str(data / "target.csv")]) == 1
    assert "error:" in capsys.readouterr().err


def test_gradcheck_passes_and_reports(capsys):
    assert main(["gradcheck"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") >= 3
    assert "all components PASS" in out


def test_gradcheck_tight_tolerance_fails(capsys):
    # finite-difference truncation error is far above 1e-12, so the
    # threshold must trip
    assert main(["gradcheck", "--rtol", "1e-12"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_gradcheck_seed_reproducibility(capsys):
    assert main(["gradcheck", "--seed", "9"]) == 0
    first = capsys.readouterr().out
    assert main(["gradcheck", "--seed", "9"]) == 0
    assert capsys.readouterr().out == first


def test_hidden_sizes_parsing(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--out", str(tmp_path / "r"), "--hidden-sizes", "8,x"])
    assert exc.value.code == 2
