import io
import json
import math
import sys

import numpy as np
import pytest

from ksconf.cli import main
from ksconf.io import load_model
from ksconf.sketch import centroid_cap


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def write_csv(path, conf, labels=None):
    with open(path, "w") as fh:
        fh.write("id,label,confidence\n")
        for i, c in enumerate(conf):
            lab = "" if labels is None else labels[i]
            fh.write(f"s{i},{lab},{float(c)!r}\n")


def manifest(path):
    with open(str(path) + ".manifest.json") as fh:
        return json.load(fh)


def test_calibrate_three_rows(workdir):
    write_csv("val.csv", [0.8, 0.2, 0.5])
    assert main(["calibrate", "val.csv", "-o", "m.ksconf"]) == 0
    model = load_model("m.ksconf")
    assert model.n == 3 and model.breakpoints.tolist() == [0.2, 0.5, 0.8]
    man = manifest("m.ksconf")
    assert man["command"] == "calibrate" and "val.csv" in man["inputs"]


def test_calibrate_deterministic(workdir):
    write_csv("val.csv", [0.5] * 10 + [1.0, 0.0])
    main(["calibrate", "val.csv", "-o", "a.ksconf", "--seed", "4"])
    main(["calibrate", "val.csv", "-o", "b.ksconf", "--seed", "4"])
    assert open("a.ksconf", "rb").read() == open("b.ksconf", "rb").read()


def test_calibrate_stdin(workdir, monkeypatch, capsys):
    monkeypatch.setattr(sys, "stdin", io.StringIO('{"id": "a", "confidence": 0.3}\n{"id": "b", "confidence": 0.6}\n'))
    assert main(["calibrate", "-", "-o", "-"]) == 0
    assert capsys.readouterr().out.startswith("ksconf-model/1\n")


@pytest.mark.slow
def test_sketch_memory_bounded(workdir):
    rng = np.random.default_rng(0)
    write_csv("big.csv", rng.beta(5, 1, 1_000_000))
    assert main(["calibrate", "big.csv", "--sketch", "-o", "s.ksconf"]) == 0
    model = load_model("s.ksconf")
    assert model.n == 1000
    centroids = int(model.meta.source.split("centroids=")[1].split(",")[0])
    assert centroids <= centroid_cap(100)


def test_stream_two_windows(workdir, rng):
    write_csv("val.csv", rng.beta(5, 1, 2000))
    write_csv("stream.csv", rng.beta(5, 1, 200))
    main(["calibrate", "val.csv", "-o", "m.ksconf"])
    assert main(["test", "m.ksconf", "stream.csv", "--batch-size", "100", "-o", "out.jsonl"]) == 0
    recs = [json.loads(line) for line in open("out.jsonl")]
    assert len(recs) == 2 and all("statistic" in r for r in recs)
    assert recs[0]["positive"] == (recs[0]["statistic"] > recs[0]["threshold"])


def test_partial_window_skipped(workdir, rng):
    write_csv("val.csv", rng.beta(5, 1, 2000))
    write_csv("stream.csv", rng.beta(1, 5, 130))
    main(["calibrate", "val.csv", "-o", "m.ksconf"])
    main(["test", "m.ksconf", "stream.csv", "--batch-size", "50", "-o", "out.jsonl"])
    recs = [json.loads(line) for line in open("out.jsonl")]
    assert [r.get("skipped", False) for r in recs] == [False, False, True]
    assert recs[-1]["count"] == 30
    assert recs[0]["positive"] and recs[1]["positive"]


def test_alpha_change_keeps_model(workdir, rng):
    write_csv("val.csv", rng.beta(5, 1, 2000))
    write_csv("stream.csv", rng.beta(5, 1, 300))
    main(["calibrate", "val.csv", "-o", "m.ksconf"])
    main(["test", "m.ksconf", "stream.csv", "--alpha", "0.01", "-o", "a.jsonl"])
    main(["test", "m.ksconf", "stream.csv", "--alpha", "0.1", "-o", "b.jsonl"])
    assert manifest("a.jsonl")["inputs"]["m.ksconf"] == manifest("b.jsonl")["inputs"]["m.ksconf"]
    assert manifest("m.ksconf")["outputs"]["m.ksconf"] == manifest("a.jsonl")["inputs"]["m.ksconf"]


@pytest.mark.slow
def test_within_specs_stream_fpr(workdir):
    rng = np.random.default_rng(1)
    write_csv("val.csv", rng.beta(5, 1, 50_000))
    write_csv("stream.csv", rng.beta(5, 1, 1_000_000))
    main(["calibrate", "val.csv", "-o", "m.ksconf"])
    main(["test", "m.ksconf", "stream.csv", "--batch-size", "100", "-o", "out.jsonl"])
    recs = [json.loads(line) for line in open("out.jsonl")]
    assert len(recs) == 10_000
    rate = sum(r["positive"] for r in recs) / len(recs)
    assert abs(rate - 0.01) <= 3 * math.sqrt(0.01 * 0.99 / 10_000)


def test_filter(workdir, rng):
    write_csv("val.csv", rng.beta(5, 1, 2000))
    conf = np.concatenate((rng.beta(5, 1, 80), rng.beta(1, 8, 20)))
    write_csv("batch.csv", conf)
    main(["calibrate", "val.csv", "-o", "m.ksconf"])
    assert main(["filter", "m.ksconf", "batch.csv", "-w", "10", "--seed", "2", "-o", "f.jsonl"]) == 0
    recs = [json.loads(line) for line in open("f.jsonl")]
    assert len(recs) == 10
    assert {"id", "confidence", "uniformized", "bin"} <= set(recs[0])
    assert sum(int(r["id"][1:]) >= 80 for r in recs) >= 5  # base rate would give 2


def test_thresholds(capsys):
    assert main(["thresholds", "--alpha", "0.1", "-m", "100"]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["tabulated"] == 0.120666503906
    main(["thresholds", "--alpha", "0.5", "-m", "1"])
    assert json.loads(capsys.readouterr().out)["tabulated"] == 0.75
    main(["thresholds", "--alpha", "0.01", "-m", "7"])
    rec = json.loads(capsys.readouterr().out)
    assert rec["tabulated"] is None and rec["tabulated_status"] == "not-tabulated"
    assert rec["approximate"] == math.sqrt(-0.5 * math.log(0.005) / 7)


def test_error_record_and_exit_status(workdir, capsys):
    assert main(["thresholds", "--alpha", "0.01", "-m", "7", "--threshold-source", "tabulated"]) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "not-tabulated"
    write_csv("bad.csv", [0.5, 1.5])
    assert main(["calibrate", "bad.csv", "-o", "m.ksconf"]) == 1
    assert json.loads(capsys.readouterr().err)["error"] == "domain"
    with pytest.raises(SystemExit) as exc:
        main(["test", "--alpha"])
    assert exc.value.code == 2
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "usage"


def test_success_emits_no_error_record(workdir, capsys):
    assert main(["thresholds", "--alpha", "0.05", "-m", "30"]) == 0
    assert capsys.readouterr().err == ""


def test_eval_and_rerun(workdir):
    (workdir / "exp.yaml").write_text(
        "experiment: tpr\nseed: 5\ntrials: 200\ntests: [ksconf, z]\nalphas: [0.05]\n"
        "batch_sizes: [20]\nrhos: [0.0, 1.0]\ncalibration_size: 5000\n"
        "reference: {kind: beta, a: 5, b: 1}\nalternative: {kind: beta, a: 1, b: 5}\n")
    assert main(["eval", "exp.yaml", "-o", "r.csv", "--long", "r_long.csv"]) == 0
    lines = open("r.csv").read().splitlines()
    assert lines[0] == "test,alpha,m,rho,rate,stderr,trials" and len(lines) == 5
    assert main(["rerun", "r.csv.manifest.json", "-o", "r2.csv", "--check"]) == 0
    assert open("r.csv", "rb").read() == open("r2.csv", "rb").read()


def test_rerun_detects_changed_input(workdir, capsys):
    write_csv("val.csv", [0.1, 0.2, 0.3])
    main(["calibrate", "val.csv", "-o", "m.ksconf"])
    write_csv("val.csv", [0.1, 0.2, 0.4])
    assert main(["rerun", "m.ksconf.manifest.json"]) == 1
    assert json.loads(capsys.readouterr().err)["error"] == "invalid-parameter"
