"""Kolmogorov-Smirnov batch test on uniformized confidences."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Sequence

import numpy as np

from .calibration import CalibrationModel
from .errors import InvalidParameterError, NotTabulatedError

THRESHOLD_SOURCES = ("tabulated", "approximate", "auto")
_SOURCE_ALIASES = {"approx": "approximate"}


def normalize_source(source: str) -> str:
    s = _SOURCE_ALIASES.get(source, source)
    if s not in THRESHOLD_SOURCES:
        raise InvalidParameterError(
            f"unknown threshold source {source!r}; expected one of {THRESHOLD_SOURCES}")
    return s


@dataclass(frozen=True)
class TestConfig:
    alpha: float
    batch_size: int
    threshold_source: str = "auto"

    __test__ = False  # not a pytest class

    def __post_init__(self):
        _check_alpha_m(self.alpha, self.batch_size)
        object.__setattr__(self, "threshold_source", normalize_source(self.threshold_source))


@dataclass(frozen=True)
class TestOutcome:
    statistic: float
    threshold: float
    positive: bool
    m: int
    alpha: float
    source: str

    __test__ = False

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "threshold": self.threshold,
                "positive": self.positive, "m": self.m, "alpha": self.alpha,
                "source": self.source}


def _check_alpha_m(alpha, m):
    if not 0.0 < alpha < 1.0:
        raise InvalidParameterError(f"alpha must lie in (0, 1), got {alpha!r}")
    if int(m) != m or m < 1:
        raise InvalidParameterError(f"batch size must be a positive integer, got {m!r}")


@lru_cache(maxsize=1)
def threshold_table() -> dict[tuple[float, int], str]:
    """Tabulated KS thresholds keyed by (alpha, m), values as printed decimal strings."""
    text = resources.files("ksconf").joinpath("data/ks_thresholds.csv").read_text("utf-8")
    return {(float(r["alpha"]), int(r["m"])): r["theta"] for r in csv.DictReader(io.StringIO(text))}


def _lookup(alpha: float, m: int):
    table = threshold_table()
    key = (float(alpha), int(m))
    if key in table:
        return table[key]
    for (a, mm), v in table.items():
        if mm == m and math.isclose(a, alpha, rel_tol=1e-12):
            return v
    return None


def approximate_threshold(alpha: float, m: int) -> float:
    return math.sqrt(-0.5 * math.log(alpha / 2) / m)


def threshold(alpha: float, m: int, source: str = "auto") -> float:
    """Decision threshold theta(alpha, m) for the KS statistic."""
    _check_alpha_m(alpha, m)
    return resolve_threshold(alpha, m, source)[0]


def resolve_threshold(alpha: float, m: int, source: str = "auto") -> tuple[float, str]:
    """Like :func:`threshold`, also returning the source actually used."""
    _check_alpha_m(alpha, m)
    source = normalize_source(source)
    if source == "approximate":
        return approximate_threshold(alpha, m), "approximate"
    text = _lookup(alpha, m)
    if text is not None:
        return float(text), "tabulated"
    if source == "tabulated":
        raise NotTabulatedError(f"no tabulated threshold for alpha={alpha!r}, m={m}")
    return approximate_threshold(alpha, m), "approximate"


def ks_statistic(uniformized: Sequence[float]) -> float:
    """Largest deviation between the batch's empirical cdf and the identity on [0, 1]."""
    u = np.sort(np.asarray(uniformized, dtype=np.float64))
    if u.ndim != 1 or u.size == 0:
        raise InvalidParameterError("KS statistic needs a non-empty 1-d batch")
    return float(ks_statistic_rows(u[None, :], presorted=True)[0])


def ks_statistic_rows(batches: np.ndarray, presorted: bool = False) -> np.ndarray:
    """Row-wise KS statistic for a 2-d array of uniformized batches."""
    u = np.asarray(batches, dtype=np.float64)
    if not presorted:
        u = np.sort(u, axis=1)
    m = u.shape[1]
    k = np.arange(1, m + 1, dtype=np.float64)
    above = (u - (k - 1) / m).max(axis=1)
    below = (k / m - u).max(axis=1)
    return np.maximum(above, below)


def batch_test(model: CalibrationModel, confidences: Sequence[float],
               config: TestConfig) -> TestOutcome:
    """Uniformize a batch through ``model`` and decide whether it is out of specs."""
    z = np.asarray(confidences, dtype=np.float64)
    if z.ndim != 1 or z.size != config.batch_size:
        raise InvalidParameterError(
            f"batch has {z.size} confidences, config expects {config.batch_size}")
    stat = ks_statistic(model.uniformize(z))
    theta, used = resolve_threshold(config.alpha, config.batch_size, config.threshold_source)
    return TestOutcome(stat, theta, stat > theta, config.batch_size, config.alpha, used)
