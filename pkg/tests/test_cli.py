import json

import pytest

from fginfer.cli import main


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["gen", "--family", "ising", "--n", "3", "--count", "12", "--seed", "7", "--out", str(root / "d")]) == 0
    assert main(["gen", "--family", "asym", "--n", "3", "--count", "12", "--seed", "8", "--out", str(root / "a")]) == 0
    return root


def run(*argv):
    return main([str(a) for a in argv])


def test_gen_is_byte_identical(data, tmp_path):
    assert run("gen", "--family", "ising", "--n", 3, "--count", 12, "--seed", 7, "--out", tmp_path / "again") == 0
    files = sorted(p.name for p in (data / "d").iterdir())
    assert len(files) == 24
    for name in files:
        assert (data / "d" / name).read_bytes() == (tmp_path / "again" / name).read_bytes()


@pytest.mark.parametrize("algo", ["exact", "bp", "fenbp", "beam", "bestfirst"])
def test_infer_metrics_are_reproducible(data, tmp_path, monkeypatch, algo):
    out1, out2 = tmp_path / "m1.json", tmp_path / "m2.json"
    assert run("infer", "--algo", algo, "--damping", 0.5, "--in", data / "d", "--metrics", out1) == 0
    monkeypatch.setenv("FG_THREADS", "3")
    assert run("infer", "--algo", algo, "--damping", 0.5, "--in", data / "d", "--metrics", out2) == 0
    assert out1.read_bytes() == out2.read_bytes()
    doc = json.loads(out1.read_text())
    assert set(doc) == {"algo", "dataset", "kl", "rmse", "uai_score", "per_instance", "seed", "config"}
    assert len(doc["per_instance"]) == 12
    if algo in ("beam", "bestfirst"):
        assert doc["kl"] is None and doc["uai_score"] >= 0
    else:
        assert doc["kl"] >= 0 and doc["rmse"] >= 0


def test_eval_of_oracle_predictions_is_zero(data, tmp_path):
    pred = tmp_path / "p.json"
    assert run("infer", "--algo", "exact", "--in", data / "d", "--pred-out", pred, "--metrics", tmp_path / "x.json") == 0
    assert run("eval", "--pred", pred, "--in", data / "d", "--metrics", tmp_path / "m.json") == 0
    doc = json.loads((tmp_path / "m.json").read_text())
    assert (doc["kl"], doc["rmse"], doc["uai_score"]) == (0.0, 0.0, 0.0)


def test_train_and_eval_fegnn(data, tmp_path):
    ckpt = tmp_path / "m.json"
    assert run("train", "--model", "fegnn", "--train", data / "a", "--val", data / "a", "--ckpt", ckpt,
               "--epochs", 2, "--history", tmp_path / "h.json") == 0
    assert all(k.startswith("fegnn/") for k in json.loads(ckpt.read_text()))
    assert run("eval", "--model", "fegnn", "--ckpt", ckpt, "--in", data / "a", "--metrics", tmp_path / "e.json") == 0
    assert json.loads((tmp_path / "e.json").read_text())["kl"] >= 0
    assert run("infer", "--algo", "fegnn", "--ckpt", ckpt, "--in", data / "a", "--metrics", tmp_path / "i.json") == 0
    assert json.loads((tmp_path / "e.json").read_text())["kl"] == json.loads((tmp_path / "i.json").read_text())["kl"]


def test_train_fenbp_map_with_default_split(data, tmp_path):
    ckpt = tmp_path / "m.json"
    assert run("train", "--model", "fenbp", "--mode", "max", "--train", data / "d", "--ckpt", ckpt,
               "--epochs", 1, "--iters", 3, "--history", tmp_path / "h.json") == 0
    hist = json.loads((tmp_path / "h.json").read_text())
    assert hist["model"]["mode"] == "max"
    assert run("eval", "--model", "fenbp", "--mode", "max", "--iters", 3, "--ckpt", ckpt, "--in", data / "d",
               "--metrics", tmp_path / "e.json") == 0
    doc = json.loads((tmp_path / "e.json").read_text())
    assert doc["kl"] is None and doc["uai_score"] >= 0


def test_permaudit(tmp_path):
    assert run("permaudit", "--algo", "fegnn", "--count", 3, "--witnesses", 2, "--report", tmp_path / "r.json") == 0
    rep = json.loads((tmp_path / "r.json").read_text())
    assert rep["symmetries"]["assignment"]["status"] == "not asserted"
    assert rep["symmetries"]["global"]["status"] == "pass"


def test_gradcheck_command(capsys):
    assert run("gradcheck", "--model", "fenbp", "--instances", 1) == 0
    assert json.loads(capsys.readouterr().out)["passed"]


def test_bounds_command(data, tmp_path):
    assert run("bounds", "--in", data / "d", "--mode", "max", "--damping", 0.5, "--out", tmp_path / "b.json") == 0
    assert json.loads((tmp_path / "b.json").read_text())["all_hold"]


@pytest.mark.parametrize("argv", [
    ["infer", "--algo", "nope", "--in", "x"],
    ["infer", "--algo", "bp", "--in", "/does/not/exist"],
    ["gen", "--family", "ising", "--n", "1", "--out", "/tmp/never"],
    ["eval", "--in", "/tmp"],
    [],
])
def test_errors_are_json_on_stderr(argv, capsys, tmp_path):
    assert main(argv) == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert set(err) == {"error", "message"}


def test_bad_thread_count(data, monkeypatch, capsys):
    monkeypatch.setenv("FG_THREADS", "many")
    assert run("infer", "--algo", "bp", "--in", data / "d") == 1
