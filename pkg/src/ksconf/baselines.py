"""Comparison tests: Gaussian (z) and bootstrap mean tests, their log and
symmetric variants, and a chi-squared test on predicted label frequencies."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from scipy import special

from .errors import (DegenerateModelError, DomainError, InsufficientDataError,
                     InvalidParameterError, NeedsCalibrationError)

LOG_FLOOR = 1e-12
DEFAULT_BOOTSTRAP = 100_000
DEFAULT_BOOTSTRAP_SEED = 20180101
CHI2_PSEUDO_COUNT = 1.0

MEAN_VARIANTS = ("z", "mean", "log-z", "log-mean")

Thresholds = Union[float, tuple[float, float]]


def normal_quantile(p: float) -> float:
    """Inverse standard normal cdf."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"normal quantile needs p in (0, 1), got {p!r}")
    return float(special.ndtri(p))


def to_log(scores) -> np.ndarray:
    return np.log(np.maximum(np.asarray(scores, dtype=np.float64), LOG_FLOOR))


@dataclass(frozen=True)
class BaselineOutcome:
    """Decision of a baseline test. ``thresholds`` is (lower, upper); a missing side is None."""

    test: str
    statistic: float
    thresholds: tuple[Optional[float], Optional[float]]
    positive: bool
    m: int
    alpha: float
    p_value: Optional[float] = None

    def to_dict(self) -> dict:
        return {"test": self.test, "statistic": self.statistic,
                "lower": self.thresholds[0], "upper": self.thresholds[1],
                "positive": self.positive, "m": self.m, "alpha": self.alpha,
                "p_value": self.p_value}


# -- mean-based tests -------------------------------------------------------

@dataclass(frozen=True)
class MeanTestModel:
    mu: float
    sigma2: float
    log_space: bool = False
    # (alpha, m, symmetric) -> threshold or (lower, upper)
    bootstrap_thresholds: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.sigma2 >= 0:
            raise InvalidParameterError(f"variance must be non-negative, got {self.sigma2!r}")


def fit_mean_model(val_scores: Sequence[float], log_space: bool = False) -> MeanTestModel:
    x = np.asarray(val_scores, dtype=np.float64)
    if x.size < 2:
        raise InsufficientDataError("mean tests need at least 2 validation scores")
    if log_space:
        x = to_log(x)
    return MeanTestModel(float(x.mean()), float(x.var()), log_space)


def z_threshold(model: MeanTestModel, alpha: float, m: int, symmetric: bool = False) -> Thresholds:
    """Gaussian approximation of the batch-mean distribution: N(mu, sigma^2 / m)."""
    _check(alpha, m)
    if model.sigma2 == 0:
        raise DegenerateModelError("z-test undefined for zero validation variance")
    scale = math.sqrt(model.sigma2 / m)
    if symmetric:
        return (model.mu + normal_quantile(alpha / 2) * scale,
                model.mu + normal_quantile(1 - alpha / 2) * scale)
    return model.mu + normal_quantile(alpha) * scale


def bootstrap_means(val_scores: Sequence[float], m: int, B: int = DEFAULT_BOOTSTRAP,
                    seed: int = DEFAULT_BOOTSTRAP_SEED, log_space: bool = False,
                    chunk: int = 5_000_000) -> np.ndarray:
    """Sorted means of ``B`` size-``m`` batches resampled with replacement."""
    x = np.asarray(val_scores, dtype=np.float64)
    if x.size == 0:
        raise InsufficientDataError("bootstrap needs validation scores")
    if log_space:
        x = to_log(x)
    rng = np.random.default_rng(seed)
    rows = max(1, chunk // m)
    means = np.empty(B)
    for start in range(0, B, rows):
        stop = min(B, start + rows)
        idx = rng.integers(0, x.size, size=(stop - start, m))
        means[start:stop] = x[idx].mean(axis=1)
    means.sort()
    return means


def thresholds_from_means(sorted_means: np.ndarray, alpha: float, symmetric: bool) -> Thresholds:
    """Lower empirical quantile convention: order statistic ceil(B * level), 1-based."""
    B = sorted_means.size
    if B * alpha < 1:
        raise InvalidParameterError(f"B={B} too small to resolve alpha={alpha!r} (need B*alpha >= 1)")
    if symmetric:
        i = max(1, math.ceil(B * alpha / 2))
        return float(sorted_means[i - 1]), float(sorted_means[B - i])
    return float(sorted_means[math.ceil(B * alpha) - 1])


def bootstrap_mean_thresholds(val_scores: Sequence[float], m: int, alpha: float,
                              symmetric: bool = False, B: int = DEFAULT_BOOTSTRAP,
                              seed: int = DEFAULT_BOOTSTRAP_SEED,
                              log_space: bool = False) -> Thresholds:
    _check(alpha, m)
    if B * alpha < 1:
        raise InvalidParameterError(f"B={B} too small to resolve alpha={alpha!r} (need B*alpha >= 1)")
    means = bootstrap_means(val_scores, m, B, seed, log_space)
    return thresholds_from_means(means, alpha, symmetric)


def calibrate_bootstrap(model: MeanTestModel, val_scores: Sequence[float], m: int,
                        alphas: Iterable[float], B: int = DEFAULT_BOOTSTRAP,
                        seed: int = DEFAULT_BOOTSTRAP_SEED) -> MeanTestModel:
    """Return a copy of ``model`` holding one- and two-sided bootstrap thresholds for batch size m."""
    means = bootstrap_means(val_scores, m, B, seed, model.log_space)
    table = dict(model.bootstrap_thresholds)
    for a in alphas:
        _check(a, m)
        for sym in (False, True):
            table[(float(a), int(m), sym)] = thresholds_from_means(means, a, sym)
    return replace(model, bootstrap_thresholds=table)


def _parse_variant(variant: str) -> tuple[str, bool]:
    if variant not in MEAN_VARIANTS:
        raise InvalidParameterError(f"unknown mean-test variant {variant!r}; expected {MEAN_VARIANTS}")
    if variant.startswith("log-"):
        return variant[4:], True
    return variant, False


def mean_thresholds(model: MeanTestModel, alpha: float, m: int, variant: str,
                    symmetric: bool = False) -> Thresholds:
    kind, log_space = _parse_variant(variant)
    if log_space != model.log_space:
        raise InvalidParameterError(
            f"variant {variant!r} needs a model with log_space={log_space}")
    if kind == "z":
        return z_threshold(model, alpha, m, symmetric)
    key = (float(alpha), int(m), bool(symmetric))
    if key not in model.bootstrap_thresholds:
        raise NeedsCalibrationError(
            f"no bootstrap threshold for alpha={alpha!r}, m={m}, symmetric={symmetric}; "
            "recalibrate with validation data")
    return model.bootstrap_thresholds[key]


def mean_test_decide(model: MeanTestModel, batch: Sequence[float], alpha: float, m: int,
                     variant: str, symmetric: bool = False) -> BaselineOutcome:
    """One-sided variants alarm on a low batch mean; symmetric ones on either side."""
    x = np.asarray(batch, dtype=np.float64)
    if x.size != m:
        raise InvalidParameterError(f"batch has {x.size} scores, expected {m}")
    th = mean_thresholds(model, alpha, m, variant, symmetric)
    stat = float((to_log(x) if model.log_space else x).mean())
    name = ("sym-" if symmetric else "") + variant
    if symmetric:
        lo, hi = th
        return BaselineOutcome(name, stat, (lo, hi), stat < lo or stat > hi, m, alpha)
    return BaselineOutcome(name, stat, (th, None), stat < th, m, alpha)


# -- label-frequency chi-squared test --------------------------------------

@dataclass(frozen=True, eq=False)
class LabelFrequencyModel:
    """Validation label frequencies. Labels never seen in validation share one catch-all bin."""

    K: int
    retained: np.ndarray          # label indices with their own bin, ascending
    frequencies: np.ndarray       # one entry per bin; catch-all last when present
    merged_other: frozenset = frozenset()
    n: int = 0
    pseudo_count: float = CHI2_PSEUDO_COUNT

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=np.float64)
        if abs(f.sum() - 1.0) > 1e-12 or np.any(f <= 0):
            raise InvalidParameterError("bin frequencies must be positive and sum to 1")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "retained", np.asarray(self.retained, dtype=np.int64))
        bin_of = np.full(self.K, len(self.retained), dtype=np.int64)
        bin_of[self.retained] = np.arange(len(self.retained))
        object.__setattr__(self, "_bin_of", bin_of)

    @property
    def bins(self) -> int:
        return int(self.frequencies.size)

    def __eq__(self, other):
        if not isinstance(other, LabelFrequencyModel):
            return NotImplemented
        return (self.K == other.K and self.n == other.n and self.merged_other == other.merged_other
                and self.pseudo_count == other.pseudo_count
                and np.array_equal(self.retained, other.retained)
                and np.array_equal(self.frequencies, other.frequencies))

    def bin_counts(self, labels) -> np.ndarray:
        """Observed counts per bin; ``labels`` may be 1-d or a 2-d array of batches."""
        lab = np.asarray(labels, dtype=np.int64)
        if np.any((lab < 0) | (lab >= self.K)):
            raise DomainError(f"label outside 0..{self.K - 1}")
        b = self._bin_of[lab]
        if b.ndim == 1:
            return np.bincount(b, minlength=self.bins).astype(np.float64)
        rows = b.shape[0]
        flat = b + self.bins * np.arange(rows)[:, None]
        return np.bincount(flat.ravel(), minlength=rows * self.bins).reshape(rows, self.bins).astype(np.float64)


def fit_label_model(labels: Sequence[int], K: int,
                    pseudo_count: float = CHI2_PSEUDO_COUNT) -> LabelFrequencyModel:
    lab = np.asarray(labels, dtype=np.int64)
    if lab.size == 0:
        raise InsufficientDataError("label model needs validation labels")
    if np.any((lab < 0) | (lab >= K)):
        raise DomainError(f"validation label outside 0..{K - 1}")
    counts = np.bincount(lab, minlength=K).astype(np.float64)
    retained = np.flatnonzero(counts > 0)
    merged = frozenset(np.flatnonzero(counts == 0).tolist())
    if merged:
        denom = lab.size + pseudo_count
        freqs = np.concatenate((counts[retained] / denom, [pseudo_count / denom]))
        freqs /= freqs.sum()
    else:
        freqs = counts[retained] / lab.size
    return LabelFrequencyModel(K, retained, freqs, merged, int(lab.size), pseudo_count)


def chi2_statistic(model: LabelFrequencyModel, batch_labels) -> tuple:
    """Pearson statistic(s) and degrees of freedom; works row-wise on 2-d input."""
    obs = model.bin_counts(batch_labels)
    m = obs.sum(axis=-1, keepdims=True)
    expected = m * model.frequencies
    stat = ((obs - expected) ** 2 / expected).sum(axis=-1)
    return stat, model.bins - 1


def chi2_pvalue(stat, df: int):
    if df <= 0:
        return np.ones_like(np.asarray(stat, dtype=np.float64))
    return special.gammaincc(df / 2.0, np.asarray(stat, dtype=np.float64) / 2.0)


def chi2_test(model: LabelFrequencyModel, batch_labels: Sequence[int], alpha: float) -> BaselineOutcome:
    lab = np.asarray(batch_labels, dtype=np.int64)
    _check(alpha, max(1, lab.size))
    if lab.ndim != 1 or lab.size == 0:
        raise InvalidParameterError("chi2 test needs a non-empty 1-d batch of labels")
    stat, df = chi2_statistic(model, lab)
    p = float(chi2_pvalue(stat, df))
    return BaselineOutcome("chi2", float(stat), (None, None), p < alpha, int(lab.size), alpha, p)


def _check(alpha, m):
    if not 0.0 < alpha < 1.0:
        raise InvalidParameterError(f"alpha must lie in (0, 1), got {alpha!r}")
    if int(m) != m or m < 1:
        raise InvalidParameterError(f"batch size must be a positive integer, got {m!r}")
