"""Mergeable constant-memory quantile sketch (merging t-digest, arcsine scale).

Centroids are merged greedily in sorted order as long as the span they
cover in the scale ``k(q) = delta / (2 pi) * asin(2q - 1)`` stays within one
unit. Any two neighbouring centroids together span more than one unit and
the whole scale spans ``delta / 2`` units, so a compressed sketch never
holds more than ``delta + 1`` centroids, whatever the stream length.
"""

from __future__ import annotations

import math
from typing import Iterable, Optional

import numpy as np

from .calibration import DEFAULT_JITTER_EPS, DEFAULT_SEED, CalibrationModel, build_calibration
from .errors import DomainError, InsufficientDataError, InvalidParameterError

DEFAULT_COMPRESSION = 100.0
BUFFER_FACTOR = 5


def centroid_cap(compression: float) -> int:
    """Upper bound on the number of centroids after compression."""
    return int(math.floor(compression)) + 1


class QuantileSketch:
    """Streaming summary of values in [0, 1].

    Single writer. Inserts go to a bounded buffer that is folded into the
    centroid list when full; reading :attr:`centroids` flushes it.
    """

    def __init__(self, compression: float = DEFAULT_COMPRESSION):
        if not compression > 0:
            raise InvalidParameterError(f"compression must be positive, got {compression!r}")
        self.compression = float(compression)
        self._means = np.empty(0)
        self._weights = np.empty(0)
        self._buffer: list[float] = []
        self._buffer_size = BUFFER_FACTOR * int(math.ceil(self.compression))
        self.min = math.inf
        self.max = -math.inf

    def __repr__(self):
        return (f"QuantileSketch(compression={self.compression}, "
                f"centroids={self.centroid_count}, total_weight={self.total_weight})")

    @property
    def total_weight(self) -> float:
        return float(self._weights.sum()) + len(self._buffer)

    @property
    def centroid_count(self) -> int:
        self._flush()
        return int(self._means.size)

    @property
    def centroids(self) -> list[tuple[float, float]]:
        self._flush()
        return list(zip(self._means.tolist(), self._weights.tolist()))

    def insert(self, value: float) -> "QuantileSketch":
        v = float(value)
        if not 0.0 <= v <= 1.0:
            raise DomainError(f"sketch values must lie in [0, 1], got {value!r}")
        self._buffer.append(v)
        if v < self.min:
            self.min = v
        if v > self.max:
            self.max = v
        if len(self._buffer) >= self._buffer_size:
            self._flush()
        return self

    def extend(self, values: Iterable[float]) -> "QuantileSketch":
        for v in values:
            self.insert(v)
        return self

    def merge(self, other: "QuantileSketch") -> "QuantileSketch":
        """Return a new sketch summarizing both inputs; neither input is modified."""
        out = QuantileSketch(min(self.compression, other.compression))
        self._flush()
        other._flush()
        means = np.concatenate((self._means, other._means))
        weights = np.concatenate((self._weights, other._weights))
        out._means, out._weights = _compress(means, weights, out.compression)
        out.min = min(self.min, other.min)
        out.max = max(self.max, other.max)
        return out

    def _flush(self):
        if not self._buffer:
            return
        means = np.concatenate((self._means, np.asarray(self._buffer)))
        weights = np.concatenate((self._weights, np.ones(len(self._buffer))))
        self._buffer = []
        self._means, self._weights = _compress(means, weights, self.compression)

    def quantile(self, q):
        """Interpolated quantile estimate(s) at level(s) q in [0, 1]."""
        self._flush()
        if self._means.size == 0:
            raise InsufficientDataError("empty sketch")
        q = np.asarray(q, dtype=np.float64)
        if np.any(~((q >= 0) & (q <= 1))):
            raise DomainError("quantile level outside [0, 1]")
        w = self._weights
        total = w.sum()
        centers = np.cumsum(w) - w / 2
        # anchor the ends at the observed extremes
        xs = np.concatenate(([0.0], centers, [total]))
        ys = np.concatenate(([self.min], self._means, [self.max]))
        out = np.interp(q * total, xs, ys)
        return float(out) if out.ndim == 0 else out


def _scale(q: np.ndarray, compression: float) -> np.ndarray:
    return compression / (2 * math.pi) * np.arcsin(2 * q - 1)


def _compress(means: np.ndarray, weights: np.ndarray, compression: float):
    if means.size == 0:
        return means, weights
    order = np.lexsort((weights, means))
    means = means[order]
    weights = weights[order]
    total = weights.sum()
    cum = np.cumsum(weights)
    k_right = _scale(np.minimum(cum / total, 1.0), compression)
    out_m: list[float] = []
    out_w: list[float] = []
    cur_m = means[0]
    cur_w = weights[0]
    k_left = _scale(np.float64(0.0), compression)
    for i in range(1, means.size):
        if k_right[i] - k_left <= 1.0:
            w_new = cur_w + weights[i]
            cur_m = cur_m + (means[i] - cur_m) * weights[i] / w_new
            cur_w = w_new
        else:
            out_m.append(cur_m)
            out_w.append(cur_w)
            k_left = k_right[i - 1]
            cur_m = means[i]
            cur_w = weights[i]
    out_m.append(cur_m)
    out_w.append(cur_w)
    # running means can drift by an ulp; keep the sorted invariant exact
    return np.maximum.accumulate(np.array(out_m)), np.array(out_w)


def sketch_insert(sketch: QuantileSketch, value: float) -> QuantileSketch:
    return sketch.insert(value)


def sketch_merge(a: QuantileSketch, b: QuantileSketch) -> QuantileSketch:
    return a.merge(b)


def sketch_to_model(sketch: QuantileSketch, breakpoint_count: int,
                    epsilon: float = DEFAULT_JITTER_EPS, seed: int = DEFAULT_SEED,
                    source: Optional[str] = None) -> CalibrationModel:
    """Extract ``breakpoint_count`` midpoint quantiles and build a reference model from them."""
    if breakpoint_count < 2:
        raise InvalidParameterError(f"breakpoint_count must be >= 2, got {breakpoint_count}")
    total = sketch.total_weight
    if breakpoint_count > total:
        raise InsufficientDataError(
            f"breakpoint_count {breakpoint_count} exceeds sketch weight {total:g}")
    levels = (np.arange(1, breakpoint_count + 1) - 0.5) / breakpoint_count
    values = np.clip(sketch.quantile(levels), 0.0, 1.0)
    if source is None:
        source = f"sketch(compression={sketch.compression:g}, weight={total:g})"
    return build_calibration(values, epsilon=epsilon, seed=seed, source=source)
