"""Within-specs reference distribution and the uniformizing transform.

The reference is the sorted list of validation confidences
``Z_1 < ... < Z_n`` together with the virtual endpoints ``Z_0 = 0`` and
``Z_{n+1} = 1``. A confidence ``p`` in segment ``[Z_k, Z_{k+1}]`` maps to

    k/n + (p - Z_k) / (n * (Z_{k+1} - Z_k))

so that every breakpoint ``Z_k`` lands exactly on ``k/n``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DomainError, InsufficientDataError, InvalidParameterError

DEFAULT_JITTER_EPS = 1e-9
DEFAULT_SEED = 0


@dataclass(frozen=True)
class ScoreSample:
    """One classifier output: an identifier, the predicted label and its confidence."""

    id: str
    confidence: float
    label: Optional[int] = None

    def __post_init__(self):
        c = float(self.confidence)
        if not 0.0 <= c <= 1.0:
            raise DomainError(f"confidence {self.confidence!r} outside [0, 1] (id={self.id!r})")
        object.__setattr__(self, "confidence", c)
        if self.label is not None:
            lab = int(self.label)
            if lab < 0 or lab != self.label:
                raise DomainError(f"label {self.label!r} is not a non-negative integer (id={self.id!r})")
            object.__setattr__(self, "label", lab)


@dataclass(frozen=True)
class ModelMeta:
    source: str = ""
    jitter_seed: int = DEFAULT_SEED
    jitter_eps: float = DEFAULT_JITTER_EPS
    created: Optional[str] = None


@dataclass(frozen=True, eq=False)
class CalibrationModel:
    """Immutable reference distribution; safe to share between threads."""

    breakpoints: np.ndarray
    meta: ModelMeta = field(default_factory=ModelMeta)

    def __post_init__(self):
        z = np.array(self.breakpoints, dtype=np.float64)
        if z.ndim != 1 or z.size < 2:
            raise InsufficientDataError("a calibration model needs at least 2 breakpoints")
        if not (z[0] > 0.0 and z[-1] < 1.0):
            raise DomainError("breakpoints must lie strictly inside (0, 1)")
        if np.any(np.diff(z) <= 0):
            raise InvalidParameterError("breakpoints must be strictly increasing")
        z.setflags(write=False)
        object.__setattr__(self, "breakpoints", z)
        # padded grid [0, Z_1, ..., Z_n, 1] used by the segment lookup
        grid = np.concatenate(([0.0], z, [1.0]))
        grid.setflags(write=False)
        object.__setattr__(self, "_grid", grid)

    @property
    def n(self) -> int:
        return int(self.breakpoints.size)

    def __eq__(self, other):
        if not isinstance(other, CalibrationModel):
            return NotImplemented
        return self.meta == other.meta and np.array_equal(self.breakpoints, other.breakpoints)

    def uniformize(self, p):
        """Map confidences (scalar or array) to uniformized scores in [0, 1]."""
        arr = np.asarray(p, dtype=np.float64)
        if np.any(~((arr >= 0.0) & (arr <= 1.0))):
            raise DomainError("confidence outside [0, 1]")
        grid = self._grid
        n = self.n
        # left segment at a breakpoint: first index with grid[i] >= p, minus one
        k = np.searchsorted(grid, arr, side="left") - 1
        k = np.clip(k, 0, n)
        lo = grid[k]
        t = (arr - lo) / (grid[k + 1] - lo)
        # the top segment [Z_n, 1] would exceed 1 under the formula; clamp
        out = np.minimum((k + t) / n, 1.0)
        if out.ndim == 0:
            return float(out)
        return out


def uniformize(model: CalibrationModel, p):
    return model.uniformize(p)


def _representable_count(lo: float, hi: float, limit: int) -> int:
    """Number of float64 values strictly between lo and hi, capped at ``limit``."""
    count = 0
    x = np.nextafter(lo, hi)
    while x < hi and count < limit:
        count += 1
        x = np.nextafter(x, hi)
    return count


def dedupe_jitter(scores: Iterable[float], epsilon: float = DEFAULT_JITTER_EPS,
                  seed: int = DEFAULT_SEED) -> np.ndarray:
    """Make scores pairwise distinct and strictly interior to (0, 1).

    Only values that collide with another value, or sit exactly on 0 or 1,
    are moved. A moved value receives uniform noise of magnitude at most
    ``epsilon``, restricted to half the gap to its distinct neighbours so the
    relative order of distinct inputs is preserved. Output order matches input.
    """
    x = np.asarray(list(scores) if not isinstance(scores, np.ndarray) else scores, dtype=np.float64)
    if not epsilon > 0:
        raise InvalidParameterError(f"jitter epsilon must be positive, got {epsilon!r}")
    if epsilon >= 0.5:
        raise InvalidParameterError(f"jitter epsilon {epsilon!r} too large, must be < 0.5")
    if np.any(~((x >= 0.0) & (x <= 1.0))):
        raise DomainError("scores must lie in [0, 1]")
    out = x.copy()
    if x.size == 0:
        return out
    rng = np.random.default_rng(seed)
    values, inverse, counts = np.unique(x, return_inverse=True, return_counts=True)
    needs = (counts > 1) | (values == 0.0) | (values == 1.0)
    if not needs.any():
        return out
    order = np.argsort(inverse, kind="stable")
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    for j in np.flatnonzero(needs):
        v = values[j]
        prev = values[j - 1] if j > 0 else 0.0
        nxt = values[j + 1] if j + 1 < values.size else 1.0
        lo = max(v - epsilon, prev + (v - prev) / 2, 0.0)
        hi = min(v + epsilon, v + (nxt - v) / 2, 1.0)
        r = int(counts[j])
        if _representable_count(lo, hi, r) < r:
            raise InvalidParameterError(
                f"cannot separate {r} copies of {v!r} within epsilon={epsilon!r}")
        members = order[starts[j]:starts[j] + r]
        out[members] = _distinct_uniform(rng, lo, hi, r)
    return out


def _distinct_uniform(rng: np.random.Generator, lo: float, hi: float, r: int) -> np.ndarray:
    chosen: list[float] = []
    seen: set[float] = set()
    for _ in range(64):
        draws = rng.uniform(lo, hi, size=r - len(chosen))
        for d in draws:
            d = float(d)
            if lo < d < hi and d not in seen:
                seen.add(d)
                chosen.append(d)
        if len(chosen) == r:
            return np.array(chosen)
    # window nearly exhausted by rounding; fall back to an even spread
    grid = np.linspace(lo, hi, r + 2)[1:-1]
    if np.unique(grid).size != r or not (grid[0] > lo and grid[-1] < hi):
        raise InvalidParameterError(f"cannot place {r} distinct values in ({lo!r}, {hi!r})")
    return grid


def build_calibration(scores: Sequence[float], epsilon: float = DEFAULT_JITTER_EPS,
                      seed: int = DEFAULT_SEED, source: str = "",
                      created: Optional[str] = None) -> CalibrationModel:
    """Sort validation confidences (after de-duplication) into a reference model."""
    x = np.asarray(scores, dtype=np.float64)
    if x.size < 2:
        raise InsufficientDataError(f"calibration needs at least 2 scores, got {x.size}")
    z = np.sort(dedupe_jitter(x, epsilon, seed))
    meta = ModelMeta(source=source, jitter_seed=int(seed), jitter_eps=float(epsilon), created=created)
    return CalibrationModel(z, meta)
