"""``ksconf`` command-line interface.

Subcommands: calibrate, test, filter, eval, thresholds, rerun. Every
command that writes to a file also writes ``<output>.manifest.json``
(or the path given with ``--manifest``) recording its resolved parameters
and the SHA-256 of every input and output; ``ksconf rerun MANIFEST``
replays it. Failures print one JSON error record to stderr and exit
non-zero.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import sys
from pathlib import Path
from typing import Callable, Optional

import yaml

from . import __version__
from .calibration import DEFAULT_JITTER_EPS, build_calibration
from .errors import FormatError, InvalidParameterError, KSConfError
from .filtering import bin_uniformized, filter_suspicious
from .harness import run_config
from .io import dumps_model, iter_scores, loads_model, open_text
from .kstest import (TestConfig, approximate_threshold, batch_test, normalize_source,
                     resolve_threshold)
from .sketch import DEFAULT_COMPRESSION, QuantileSketch, centroid_cap, sketch_to_model

DEFAULT_SKETCH_BREAKPOINTS = 1000


class _HashingReader(io.TextIOBase):
    """Text reader that hashes everything it hands out."""

    def __init__(self, stream):
        self._stream = stream
        self.sha = hashlib.sha256()

    def readline(self, size=-1):
        line = self._stream.readline(size)
        self.sha.update(line.encode("utf-8"))
        return line

    def read(self, size=-1):
        data = self._stream.read(size)
        self.sha.update(data.encode("utf-8"))
        return data

    def __iter__(self):
        return self

    def __next__(self):
        line = self.readline()
        if not line:
            raise StopIteration
        return line


class Run:
    """Collects input/output digests for the manifest of one command."""

    def __init__(self, command: str, params: dict):
        self.command = command
        self.params = params
        self.inputs: dict[str, Optional[str]] = {}
        self.outputs: dict[str, str] = {}

    def read_text(self, path: str) -> str:
        with open_text(path) as fh:
            text = fh.read()
        self.inputs[path] = _sha(text)
        return text

    def write_text(self, path: str, text: str) -> None:
        with open_text(path, "w") as fh:
            fh.write(text)
        if path != "-":
            self.outputs[path] = _sha(text)

    def manifest(self) -> dict:
        return {"artifact": "ksconf", "artifact_version": __version__, "command": self.command,
                "parameters": self.params, "inputs": self.inputs, "outputs": self.outputs}


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _stream_scores(run: Run, path: str, fmt: str):
    """Yield samples from ``path`` while hashing it for the manifest."""
    with open_text(path) as fh:
        reader = _HashingReader(fh)
        yield from iter_scores(reader, fmt, name=path)
        reader.read()
        run.inputs[path] = reader.sha.hexdigest()


# -- commands --------------------------------------------------------------------

def cmd_calibrate(run: Run) -> None:
    p = run.params
    source = p["source"] if p.get("source") is not None else Path(p["input"]).name
    if p["sketch"]:
        sk = QuantileSketch(p["compression"])
        for s in _stream_scores(run, p["input"], p["format"]):
            sk.insert(s.confidence)
        model = sketch_to_model(sk, min(p["breakpoints"], int(sk.total_weight)),
                                p["jitter_eps"], p["seed"],
                                source=f"{source} (sketch compression={p['compression']:g}, "
                                       f"centroids={sk.centroid_count}, cap={centroid_cap(p['compression'])})")
    else:
        conf = [s.confidence for s in _stream_scores(run, p["input"], p["format"])]
        model = build_calibration(conf, p["jitter_eps"], p["seed"], source=source)
    run.write_text(p["output"], dumps_model(model))


def cmd_test(run: Run) -> None:
    p = run.params
    model = loads_model(run.read_text(p["model"]))
    if not hasattr(model, "breakpoints"):
        raise FormatError(f"{p['model']} is not a KS(conf) calibration model")
    if p["window_policy"] != "consecutive":
        raise InvalidParameterError(f"unsupported window policy {p['window_policy']!r}")
    config = TestConfig(p["alpha"], p["batch_size"], p["threshold_source"])
    m = config.batch_size
    lines = []
    window: list = []
    batch = 0
    start = 0

    for s in _stream_scores(run, p["input"], p["format"]):
        window.append(s)
        if len(window) == m:
            out = batch_test(model, [x.confidence for x in window], config)
            rec = {"batch": batch, "start": start, "first_id": window[0].id,
                   "last_id": window[-1].id, **out.to_dict()}
            lines.append(json.dumps(rec))
            batch += 1
            start += m
            window = []
    if window:
        lines.append(json.dumps({"batch": batch, "start": start, "count": len(window),
                                 "skipped": True}))
    run.write_text(p["output"], "".join(line + "\n" for line in lines))


def cmd_filter(run: Run) -> None:
    p = run.params
    model = loads_model(run.read_text(p["model"]))
    if not hasattr(model, "breakpoints"):
        raise FormatError(f"{p['model']} is not a KS(conf) calibration model")
    batch = list(_stream_scores(run, p["input"], p["format"]))
    res = filter_suspicious(model, batch, p["w"], p["seed"])
    by_id = {s.id: s for s in batch}
    lines = []
    for ident in res.selected_ids:
        s = by_id[ident]
        u = model.uniformize(s.confidence)
        lines.append(json.dumps({
            "id": ident, "confidence": s.confidence, "uniformized": u,
            "bin": int(bin_uniformized(u, res.bin_total)),
            "selected_bin": res.bin_index, "bin_count": res.bin_count,
            "bin_total": res.bin_total, "estimated_enrichment": res.estimated_enrichment}))
    run.write_text(p["output"], "".join(line + "\n" for line in lines))


def cmd_eval(run: Run) -> None:
    p = run.params
    cfg = yaml.safe_load(run.read_text(p["config"])) or {}
    if not isinstance(cfg, dict):
        raise FormatError("experiment config must be a mapping")
    if p.get("seed") is not None:
        cfg["seed"] = p["seed"]
    if p.get("trials") is not None:
        cfg["trials"] = p["trials"]
    p["resolved_config"] = cfg
    base = Path(p["config"]).parent if p["config"] != "-" else Path(".")
    for key in ("reference", "alternative"):
        spec = cfg.get(key) or {}
        if spec.get("kind") == "file":
            path = Path(spec["path"])
            run.read_text(str(path if path.is_absolute() else base / path))
    report = run_config(cfg, base)
    run.write_text(p["output"], report.to_csv())
    if p.get("long"):
        run.write_text(p["long"], report.to_long_csv())


def cmd_thresholds(run: Run) -> None:
    p = run.params
    alpha, m = p["alpha"], p["batch_size"]
    rec = {"alpha": alpha, "m": m, "tabulated": None, "tabulated_status": "listed",
           "approximate": None}
    source = normalize_source(p["threshold_source"])
    if source in ("tabulated", "auto"):
        try:
            rec["tabulated"] = resolve_threshold(alpha, m, "tabulated")[0]
        except KSConfError as e:
            if source == "tabulated":
                raise
            rec["tabulated_status"] = e.code
    else:
        rec["tabulated_status"] = "not-requested"
    if source in ("approximate", "auto"):
        rec["approximate"] = approximate_threshold(alpha, m)
    run.write_text(p["output"], json.dumps(rec) + "\n")


COMMANDS: dict[str, Callable[[Run], None]] = {
    "calibrate": cmd_calibrate, "test": cmd_test, "filter": cmd_filter,
    "eval": cmd_eval, "thresholds": cmd_thresholds,
}


# -- argument parsing ----------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error("usage", message)
        self.exit(2)


def _emit_error(code: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": code, "message": message}) + "\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ksconf", description="Detect out-of-specs classifier operation "
                     "by KS-testing prediction confidences against a calibrated reference.")
    parser.add_argument("--version", action="version", version=f"ksconf {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, output_default):
        sp.add_argument("-o", "--output", default=output_default,
                        help="output path, '-' for stdout (default: %(default)s)")
        sp.add_argument("--manifest", default=None,
                        help="manifest path (default: <output>.manifest.json for file outputs)")

    def scores(sp, name="input"):
        sp.add_argument(name, help="scores as CSV (id,label,confidence) or JSON lines; '-' for stdin")
        sp.add_argument("--format", choices=["auto", "csv", "jsonl"], default="auto")

    sp = sub.add_parser("calibrate", help="build a reference model from within-specs scores")
    scores(sp)
    common(sp, "model.ksconf")
    sp.add_argument("--jitter-eps", type=float, default=DEFAULT_JITTER_EPS)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--sketch", action="store_true", help="stream through a constant-memory sketch")
    sp.add_argument("--compression", type=float, default=DEFAULT_COMPRESSION)
    sp.add_argument("--breakpoints", type=int, default=DEFAULT_SKETCH_BREAKPOINTS,
                    help="breakpoints extracted from the sketch (default: %(default)s)")
    sp.add_argument("--source", default=None, help="source description stored in the model")

    sp = sub.add_parser("test", help="KS-test consecutive windows of a score stream")
    sp.add_argument("model")
    scores(sp)
    common(sp, "-")
    sp.add_argument("--alpha", type=float, default=0.01)
    sp.add_argument("--batch-size", type=int, default=100)
    sp.add_argument("--threshold-source", choices=["tabulated", "approx", "auto"], default="auto")
    sp.add_argument("--window-policy", choices=["consecutive"], default="consecutive")

    sp = sub.add_parser("filter", help="pick w suspicious samples from a flagged batch")
    sp.add_argument("model")
    scores(sp)
    common(sp, "-")
    sp.add_argument("-w", "--subset-size", dest="w", type=int, default=10)
    sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("eval", help="run an evaluation experiment from a YAML/JSON config")
    sp.add_argument("config")
    common(sp, "report.csv")
    sp.add_argument("--long", default=None, help="also write a long-format table here")
    sp.add_argument("--seed", type=int, default=None, help="override the config's root seed")
    sp.add_argument("--trials", type=int, default=None, help="override the number of trials")

    sp = sub.add_parser("thresholds", help="print KS thresholds for (alpha, m)")
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--batch-size", "-m", type=int, required=True)
    sp.add_argument("--threshold-source", choices=["tabulated", "approx", "auto"], default="auto")
    common(sp, "-")

    sp = sub.add_parser("rerun", help="replay a command from its manifest")
    sp.add_argument("manifest")
    sp.add_argument("-o", "--output", default=None, help="write to this path instead")
    sp.add_argument("--check", action="store_true",
                    help="fail unless the new output matches the recorded digest")
    return parser


def _params_from_args(args) -> dict:
    skip = {"command", "manifest"}
    return {k: v for k, v in vars(args).items() if k not in skip}


def execute(command: str, params: dict, manifest_path: Optional[str]) -> Run:
    run = Run(command, dict(params))
    COMMANDS[command](run)
    out = params.get("output", "-")
    if manifest_path is None and out != "-":
        manifest_path = out + ".manifest.json"
    if manifest_path is not None:
        with open(manifest_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(json.dumps(run.manifest(), indent=2, sort_keys=True) + "\n")
    return run


def rerun(manifest_path: str, output: Optional[str], check: bool) -> Run:
    with open(manifest_path, encoding="utf-8") as fh:
        man = json.load(fh)
    if man.get("artifact") != "ksconf" or man.get("command") not in COMMANDS:
        raise FormatError(f"{manifest_path} is not a ksconf run manifest")
    params = dict(man["parameters"])
    params.pop("resolved_config", None)
    for path, digest in man["inputs"].items():
        if path == "-" or digest is None:
            raise InvalidParameterError("cannot replay a run that read standard input")
        with open(path, encoding="utf-8", newline="") as fh:
            if _sha(fh.read()) != digest:
                raise InvalidParameterError(f"input {path} changed since the recorded run")
    old_out = params.get("output")
    if output is not None:
        params["output"] = output
        if params.get("long"):
            params["long"] = output + ".long.csv"
    run = Run(man["command"], params)
    COMMANDS[man["command"]](run)
    if check and old_out in man["outputs"]:
        new = run.outputs.get(params["output"])
        if new != man["outputs"][old_out]:
            raise KSConfError(f"output differs from recorded run ({new} != {man['outputs'][old_out]})")
    return run


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "rerun":
            rerun(args.manifest, args.output, args.check)
        else:
            execute(args.command, _params_from_args(args), args.manifest)
    except KSConfError as e:
        _emit_error(e.code, str(e))
        return 1
    except (OSError, yaml.YAMLError, KeyError) as e:
        _emit_error("io" if isinstance(e, OSError) else "format", str(e))
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
