"""Pick a small subset of a flagged batch that is enriched in unexpected samples."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .calibration import CalibrationModel, ScoreSample
from .errors import InvalidParameterError


@dataclass(frozen=True)
class FilterResult:
    selected_ids: tuple
    bin_index: int
    bin_count: int
    bin_total: int
    estimated_enrichment: float


def _check_w(w: int, m: int):
    if w < 1:
        raise InvalidParameterError(f"subset size w must be >= 1, got {w}")
    if w > m:
        raise InvalidParameterError(f"subset size w={w} exceeds batch size m={m}")


def bin_uniformized(u: np.ndarray, bin_total: int) -> np.ndarray:
    # half-open bins, the last one closed so that 1.0 lands in it
    return np.minimum((np.asarray(u) * bin_total).astype(np.int64), bin_total - 1)


def select_indices(u: np.ndarray, w: int, rng: np.random.Generator):
    """Indices of the selected subset, plus (bin_index, bin_count, bin_total).

    Bins are ranked by count (ties: lower index first). The top bin is
    subsampled uniformly to ``w``; if it holds fewer than ``w`` members the
    next bins in rank order fill the remainder.
    """
    u = np.asarray(u, dtype=np.float64)
    m = u.size
    _check_w(w, m)
    bin_total = math.ceil(m / w)
    bins = bin_uniformized(u, bin_total)
    counts = np.bincount(bins, minlength=bin_total)
    ranked = np.lexsort((np.arange(bin_total), -counts))
    chosen: list[np.ndarray] = []
    need = w
    for b in ranked:
        members = np.flatnonzero(bins == b)
        if members.size >= need:
            chosen.append(np.sort(rng.choice(members, size=need, replace=False)))
            break
        chosen.append(members)
        need -= members.size
    top = int(ranked[0])
    return np.concatenate(chosen), top, int(counts[top]), bin_total


def filter_suspicious(model: CalibrationModel, batch: Sequence[ScoreSample], w: int,
                      seed: int = 0) -> FilterResult:
    m = len(batch)
    _check_w(w, m)
    u = model.uniformize(np.array([s.confidence for s in batch], dtype=np.float64))
    idx, b, count, total = select_indices(u, w, np.random.default_rng(seed))
    return FilterResult(tuple(batch[i].id for i in idx), b, count, total, count / (m / total))


def lowest_confidence_baseline(batch: Sequence[ScoreSample], w: int) -> list:
    """Ids of the ``w`` least confident samples; ties go to the smaller id."""
    _check_w(w, len(batch))
    ranked = sorted(batch, key=lambda s: (s.confidence, s.id))
    return [s.id for s in ranked[:w]]
