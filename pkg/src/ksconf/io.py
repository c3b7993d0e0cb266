"""Score-file ingestion and the text model file format.

Model files look like::

    ksconf-model/1
    family: "ksconf"
    n: 3
    jitter_eps: 1e-09
    jitter_seed: 7
    source: "val.csv"
    created: null
    data:
    0.20000000000000001
    0.5
    0.80000000000000004

Header values are JSON. Rows after ``data:`` depend on the family:
``ksconf`` stores one breakpoint per line, ``mean`` stores
``alpha m sided lower upper`` threshold rows and ``chi2`` stores
``label frequency`` rows (label ``other`` for the catch-all bin).
Floats are written with 17 significant digits so reading them back is bit-exact.
"""

from __future__ import annotations

import csv
import io
import json
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import IO, Iterable, Iterator, Optional, Union

import numpy as np

from .baselines import LabelFrequencyModel, MeanTestModel
from .calibration import CalibrationModel, ModelMeta, ScoreSample
from .errors import DomainError, FormatError

MAGIC = "ksconf-model/1"

PathLike = Union[str, Path]


def fmt_float(x: float) -> str:
    return "%.17g" % x


@contextmanager
def open_text(path: PathLike, mode: str = "r"):
    """Open a UTF-8 text file; ``-`` means stdin/stdout."""
    if str(path) == "-":
        stream = sys.stdin if "r" in mode else sys.stdout
        yield stream
        if "r" not in mode:
            stream.flush()
        return
    with open(path, mode, encoding="utf-8", newline="") as fh:
        yield fh


# -- scores -------------------------------------------------------------------

def _detect_format(path: PathLike, first_line: str) -> str:
    suffix = Path(str(path)).suffix.lower()
    if suffix in (".jsonl", ".ndjson", ".json"):
        return "jsonl"
    if suffix == ".csv":
        return "csv"
    return "jsonl" if first_line.lstrip().startswith("{") else "csv"


def _parse_label(raw, where: str) -> Optional[int]:
    if raw is None or raw == "":
        return None
    try:
        value = int(raw)
    except (TypeError, ValueError):
        raise FormatError(f"{where}: label {raw!r} is not an integer") from None
    if isinstance(raw, float) and raw != value:
        raise FormatError(f"{where}: label {raw!r} is not an integer")
    return value


def _make_sample(rec: dict, where: str) -> ScoreSample:
    try:
        conf = float(rec["confidence"])
        ident = rec["id"]
    except KeyError as e:
        raise FormatError(f"{where}: missing field {e.args[0]!r}") from None
    except (TypeError, ValueError):
        raise FormatError(f"{where}: confidence {rec.get('confidence')!r} is not a number") from None
    try:
        return ScoreSample(str(ident), conf, _parse_label(rec.get("label"), where))
    except DomainError as e:
        raise DomainError(f"{where}: {e}") from None


def iter_scores(stream: IO[str], fmt: str = "auto", name: str = "<stream>") -> Iterator[ScoreSample]:
    first = stream.readline()
    if fmt == "auto":
        fmt = _detect_format(name, first)
    if fmt == "jsonl":
        lines = [first] if first else []
        for lineno, line in enumerate(_chain(lines, stream), start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise FormatError(f"{name}:{lineno}: invalid JSON ({e.msg})") from None
            if not isinstance(rec, dict):
                raise FormatError(f"{name}:{lineno}: expected a JSON object")
            yield _make_sample(rec, f"{name}:{lineno}")
    elif fmt == "csv":
        header = next(csv.reader([first]), None)
        if not header or "id" not in header or "confidence" not in header:
            raise FormatError(f"{name}: CSV header must contain id,label,confidence")
        reader = csv.DictReader(stream, fieldnames=header)
        for lineno, row in enumerate(reader, start=2):
            if not any(row.values()):
                continue
            yield _make_sample(row, f"{name}:{lineno}")
    else:
        raise FormatError(f"unknown score format {fmt!r}")


def _chain(head: list, rest: Iterable[str]) -> Iterator[str]:
    yield from head
    yield from rest


def read_scores(path: PathLike, fmt: str = "auto") -> list[ScoreSample]:
    with open_text(path) as fh:
        return list(iter_scores(fh, fmt, name=str(path)))


def write_scores_csv(samples: Iterable[ScoreSample], stream: IO[str]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["id", "label", "confidence"])
    for s in samples:
        w.writerow([s.id, "" if s.label is None else s.label, fmt_float(s.confidence)])


# -- model files ----------------------------------------------------------------

def dumps_model(model) -> str:
    if isinstance(model, CalibrationModel):
        header = {"family": "ksconf", "n": model.n, "jitter_eps": model.meta.jitter_eps,
                  "jitter_seed": model.meta.jitter_seed, "source": model.meta.source,
                  "created": model.meta.created}
        rows = [fmt_float(z) for z in model.breakpoints.tolist()]
    elif isinstance(model, MeanTestModel):
        header = {"family": "mean", "mu": model.mu, "sigma2": model.sigma2,
                  "log_space": model.log_space}
        rows = []
        for (a, m, sym), th in sorted(model.bootstrap_thresholds.items()):
            lo, hi = th if sym else (th, None)
            rows.append(" ".join([fmt_float(a), str(m), "two" if sym else "one",
                                  fmt_float(lo), "-" if hi is None else fmt_float(hi)]))
    elif isinstance(model, LabelFrequencyModel):
        header = {"family": "chi2", "K": model.K, "n": model.n,
                  "pseudo_count": model.pseudo_count, "merged_other": sorted(model.merged_other)}
        rows = [f"{lab} {fmt_float(f)}" for lab, f in
                zip(model.retained.tolist(), model.frequencies.tolist())]
        if model.merged_other:
            rows.append(f"other {fmt_float(model.frequencies[-1])}")
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    out = [MAGIC]
    out += [f"{k}: {json.dumps(v, allow_nan=False)}" for k, v in header.items()]
    out.append("data:")
    out += rows
    return "\n".join(out) + "\n"


def loads_model(text: str):
    lines = text.splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise FormatError(f"not a model file (expected first line {MAGIC!r})")
    header = {}
    i = 1
    while i < len(lines) and lines[i].strip() != "data:":
        key, sep, value = lines[i].partition(":")
        if not sep:
            raise FormatError(f"model line {i + 1}: expected 'key: value'")
        try:
            header[key.strip()] = json.loads(value)
        except json.JSONDecodeError:
            raise FormatError(f"model line {i + 1}: value is not JSON") from None
        i += 1
    if i == len(lines):
        raise FormatError("model file has no data section")
    rows = [ln.split() for ln in lines[i + 1:] if ln.strip()]
    family = header.get("family")
    try:
        if family == "ksconf":
            z = np.array([float(r[0]) for r in rows])
            if z.size != header["n"]:
                raise FormatError(f"model declares n={header['n']} but lists {z.size} breakpoints")
            meta = ModelMeta(header.get("source", ""), int(header["jitter_seed"]),
                             float(header["jitter_eps"]), header.get("created"))
            return CalibrationModel(z, meta)
        if family == "mean":
            table = {}
            for a, m, sided, lo, hi in rows:
                key = (float(a), int(m), sided == "two")
                table[key] = (float(lo), float(hi)) if sided == "two" else float(lo)
            return MeanTestModel(float(header["mu"]), float(header["sigma2"]),
                                 bool(header["log_space"]), table)
        if family == "chi2":
            retained = [int(r[0]) for r in rows if r[0] != "other"]
            freqs = [float(r[1]) for r in rows]
            return LabelFrequencyModel(int(header["K"]), np.array(retained, dtype=np.int64),
                                       np.array(freqs), frozenset(header["merged_other"]),
                                       int(header["n"]), float(header["pseudo_count"]))
    except (KeyError, ValueError, IndexError) as e:
        if isinstance(e, FormatError):
            raise
        raise FormatError(f"malformed {family} model: {e}") from None
    raise FormatError(f"unknown model family {family!r}")


def save_model(model, path: PathLike) -> None:
    with open_text(path, "w") as fh:
        fh.write(dumps_model(model))


def load_model(path: PathLike):
    with open_text(path) as fh:
        return loads_model(fh.read())
