import csv
import json

import pytest

from lossforge import losses as L
from lossforge.cli import main

TARGET = "(mul (sub yr yp) (sub yr yp))"


def _data_files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "manifest.json"}


def test_search_proxy(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["search", "--config-id", "4", "--proxy-fitness", TARGET, "--generations", "5",
                 "--seed", "1", "--out", str(out)]) == 0
    lines = (out / "history.jsonl").read_text().splitlines()
    assert len(lines) == 5
    rec = json.loads(lines[-1])
    assert set(rec) == {"generation", "best_scalar", "mean_scalar", "best_expr", "archive_size", "evaluations"}
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["finished"] and "best.sexp" in manifest["outputs"]
    assert len(manifest["timings"]["generations"]) == 5


def test_search_is_reproducible(tmp_path):
    args = ["search", "--config-id", "2", "--proxy-fitness", TARGET, "--generations", "4", "--seed", "3"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert _data_files(tmp_path / "a") == _data_files(tmp_path / "b")


def test_search_resume(tmp_path):
    base = ["search", "--config-id", "4", "--proxy-fitness", TARGET, "--seed", "2"]
    assert main(base + ["--generations", "6", "--out", str(tmp_path / "full")]) == 0
    assert main(base + ["--generations", "3", "--out", str(tmp_path / "part")]) == 0
    assert main(base + ["--generations", "6", "--out", str(tmp_path / "part"),
                        "--resume", str(tmp_path / "part" / "checkpoint.json")]) == 0
    full = (tmp_path / "full" / "best.sexp").read_text()
    assert (tmp_path / "part" / "best.sexp").read_text() == full


@pytest.mark.parametrize("argv", [
    ["search", "--config-id", "9", "--out", "x"],
    ["eval", "--loss", "nosuch"],
    ["eval", "--loss", "(add 1 2)"],
    ["shape", "--loss", "bce", "--grid", "8"],
    ["shape", "--loss", "wasserstein"],
    ["train", "--loss", "bce", "--loss-on", "neither", "--out", "x"],
    ["frobnicate"],
])
def test_usage_errors(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    with pytest.raises(SystemExit) as exc:
        raise SystemExit(main(argv))
    assert exc.value.code == 2


def test_bad_config_file(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("gp.nosuch=1\n")
    assert main(["search", "--config", str(cfg), "--proxy-fitness", TARGET, "--out", str(tmp_path / "o")]) == 2


def test_config_file_applies(tmp_path):
    cfg = tmp_path / "gp.cfg"
    cfg.write_text("# short run\ngp.T=3\ngp.selection=select_n_best\n")
    assert main(["search", "--config", str(cfg), "--proxy-fitness", TARGET, "--out", str(tmp_path / "o")]) == 0
    assert len((tmp_path / "o" / "history.jsonl").read_text().splitlines()) == 3


def test_shape_output(tmp_path, capsys):
    path = tmp_path / "shape.csv"
    assert main(["shape", "--loss", "ganetic", "--y-real", "1", "--out", str(path)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert abs(report["argmin"] - 0.7302079) < 1e-5
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["y_pred", "loss", "gradient"] and len(rows) == 513


def test_shape_sexp_file(tmp_path, capsys):
    f = tmp_path / "g.sexp"
    f.write_text(L.DISCOVERED["ganetic"] + "\n")
    assert main(["shape", "--loss", str(f)]) == 0
    assert abs(json.loads(capsys.readouterr().out)["argmin"] - 0.7302079) < 1e-5


def test_eval_builtin_and_sexp_agree(capsys):
    base = ["eval", "--runs", "1", "--steps", "20"]
    assert main(base + ["--loss", "ganetic"]) == 0
    first = capsys.readouterr().out
    assert main(base + ["--loss", L.DISCOVERED["f4"]]) == 0
    assert capsys.readouterr().out == first
    assert json.loads(first)["std_fd"] == 0.0


def test_train_outputs_and_determinism(tmp_path):
    args = ["train", "--loss", "ganetic", "--steps", "40", "--seed", "4"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a = _data_files(tmp_path / "a")
    assert set(a) == {"samples.csv", "history.csv", "summary.json"}
    assert a == _data_files(tmp_path / "b")


def test_compare(tmp_path):
    out = tmp_path / "cmp"
    assert main(["compare", "--losses", "ganetic,bce", "--seeds", "2", "--steps", "20", "--out", str(out)]) == 0
    rows = list(csv.DictReader((out / "summary.csv").open()))
    assert [r["loss"] for r in rows] == ["ganetic", "bce"]
    assert float(rows[0]["best"]) <= float(rows[0]["mean"]) <= float(rows[0]["worst"])
    assert len(list(csv.DictReader((out / "runs.csv").open()))) == 4
