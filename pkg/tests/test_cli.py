import json

import pytest

from backprover.cli import main


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["gen-data", "--out", str(root / "data"), "--seed", "42", "--depths", "0:0.3,1:0.4,2:0.3",
                 "--train", "30", "--dev", "10", "--test", "12"]) == 0
    assert main(["train", "--train", str(root / "data/train.jsonl"), "--dev", str(root / "data/dev.jsonl"),
                 "--out", str(root / "run"), "--epochs", "1", "--d-model", "16", "--d", "16", "--layers", "1"]) == 0
    return root


def test_gen_data_manifest_echoes_config(workdir):
    manifest = json.loads((workdir / "data/manifest.json").read_text())
    assert manifest["config"]["seed"] == 42
    assert manifest["config"]["target_depth_distribution"] == {"0": 0.3, "1": 0.4, "2": 0.3}
    assert {k: v["samples"] for k, v in manifest["counts"].items()} == {"train": 30, "dev": 10, "test": 12}


def test_train_outputs(workdir):
    assert (workdir / "run/model.pt").exists() and (workdir / "run/last.pt").exists()
    records = [json.loads(x) for x in (workdir / "run/metrics.jsonl").read_text().splitlines()]
    assert [r["split"] for r in records] == ["train", "dev"]


@pytest.mark.parametrize("flags", [["--beam", "8"], ["--beam", "1"], ["--force-gold-parent", "--force-gold-child"],
                                   ["--beam", "2", "--no-focus-pos-emb", "--strategy", "fail", "--rule-answer"]])
def test_predict_then_eval(workdir, flags, capsys):
    preds = workdir / "p.jsonl"
    assert main(["predict", "--checkpoint", str(workdir / "run/model.pt"), "--data", str(workdir / "data/test.jsonl"),
                 "--out", str(preds), *flags]) == 0
    assert len(preds.read_text().splitlines()) == 12
    capsys.readouterr()
    assert main(["eval", "--predictions", str(preds), "--data", str(workdir / "data/test.jsonl"),
                 "--json", str(workdir / "r.json")]) == 0
    out = capsys.readouterr().out
    assert "all" in out and "QA" in out
    report = json.loads((workdir / "r.json").read_text())
    if "--force-gold-child" in flags:
        assert report["all"]["pa"] == 1.0


def test_eval_chart(workdir):
    pytest.importorskip("matplotlib")
    preds = workdir / "pc.jsonl"
    main(["predict", "--checkpoint", str(workdir / "run/model.pt"), "--data", str(workdir / "data/test.jsonl"),
          "--out", str(preds), "--beam", "1"])
    assert main(["eval", "--predictions", str(preds), "--data", str(workdir / "data/test.jsonl"),
                 "--chart", str(workdir / "c.png")]) == 0
    assert (workdir / "c.png").stat().st_size > 0


def test_bench(workdir, capsys):
    assert main(["bench", "--checkpoint", str(workdir / "run/model.pt"), "--data", str(workdir / "data/test.jsonl"),
                 "--reps", "2", "--warmup", "1", "--json", str(workdir / "b.json")]) == 0
    assert "slope" in capsys.readouterr().out
    assert json.loads((workdir / "b.json").read_text())["repetitions"] == 2


def test_inspect_verdict(workdir, capsys):
    first = json.loads((workdir / "data/dev.jsonl").read_text().splitlines()[0])["id"]
    assert main(["inspect", first, "--data", str(workdir / "data/dev.jsonl")]) == 0
    out = capsys.readouterr().out
    assert first in out and "verdict   valid" in out


def test_module_error_is_one_line(workdir, capsys):
    assert main(["eval", "--predictions", str(workdir / "missing.jsonl"), "--data",
                 str(workdir / "data/test.jsonl")]) == 1
    err = capsys.readouterr().err.strip()
    assert err.startswith("backprover eval:") and "\n" not in err


def test_unknown_sample(workdir, capsys):
    assert main(["inspect", "nope", "--data", str(workdir / "data/dev.jsonl")]) == 1
    assert "nope" in capsys.readouterr().err


def test_unknown_flag_rejected():
    with pytest.raises(SystemExit) as exc:
        main(["predict", "--bogus"])
    assert exc.value.code == 2


def test_help_lists_commands(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    out = capsys.readouterr().out
    for cmd in ("gen-data", "train", "predict", "eval", "bench", "inspect"):
        assert cmd in out
