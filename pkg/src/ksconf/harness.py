"""Monte-Carlo evaluation: false-positive rate, detection rate vs. mixture
proportion, and filtering enrichment, on synthetic or file-backed score pools.

All randomness derives from one integer seed. Calibration draws and test
batches use separate seed streams, and test batches for a given (m, rho)
are shared across tests and alphas so comparisons are paired.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from . import baselines as bl
from .calibration import DEFAULT_JITTER_EPS, CalibrationModel, ScoreSample, build_calibration
from .errors import InsufficientDataError, InvalidParameterError
from .filtering import select_indices
from .io import fmt_float, read_scores
from .kstest import ks_statistic_rows, resolve_threshold

TESTS = ("ksconf", "mean", "log-mean", "z", "log-z",
         "sym-mean", "sym-log-mean", "sym-z", "sym-log-z", "chi2")
FILTER_METHODS = ("ksconf-filter", "lowest-confidence", "random")

DEFAULT_TRIALS = 10_000
FAST_TRIALS = 1_000
DEFAULT_CALIBRATION_SIZE = 50_000
_CHUNK_ELEMENTS = 1_000_000

_CAL_STREAM, _EVAL_STREAM, _FILTER_STREAM, _POOL_STREAM = 0, 1, 2, 3


# -- score sources ----------------------------------------------------------------

@dataclass(frozen=True)
class BetaSource:
    """Confidences ~ Beta(a, b). Labels, when ``classes`` > 0, are drawn
    independently from a fixed class prior: uniform, or Dirichlet(concentration)
    sampled once with ``label_seed``."""

    a: float
    b: float
    classes: int = 0
    label_concentration: Optional[float] = None
    label_seed: int = 0

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise InvalidParameterError(f"beta parameters must be positive, got a={self.a}, b={self.b}")
        if self.classes < 0:
            raise InvalidParameterError("classes must be non-negative")
        prior = None
        if self.classes:
            if self.label_concentration is None:
                prior = np.full(self.classes, 1.0 / self.classes)
            else:
                prior = np.random.default_rng(self.label_seed).dirichlet(
                    np.full(self.classes, float(self.label_concentration)))
        object.__setattr__(self, "_prior", prior)

    @property
    def has_labels(self) -> bool:
        return self.classes > 0

    def draw(self, rng: np.random.Generator, shape):
        conf = rng.beta(self.a, self.b, size=shape)
        labels = None
        if self._prior is not None:
            labels = rng.choice(self.classes, size=shape, p=self._prior)
        return conf, labels


@dataclass(frozen=True, eq=False)
class PoolSource:
    """Finite pool of recorded scores, sampled with replacement."""

    confidences: np.ndarray
    labels: Optional[np.ndarray] = None
    name: str = "pool"

    def __post_init__(self):
        c = np.asarray(self.confidences, dtype=np.float64)
        if c.size == 0:
            raise InsufficientDataError(f"score pool {self.name!r} is empty")
        object.__setattr__(self, "confidences", c)
        if self.labels is not None:
            object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    @classmethod
    def from_samples(cls, samples: Sequence[ScoreSample], name: str = "pool") -> "PoolSource":
        conf = np.array([s.confidence for s in samples], dtype=np.float64)
        labels = None
        if samples and all(s.label is not None for s in samples):
            labels = np.array([s.label for s in samples], dtype=np.int64)
        return cls(conf, labels, name)

    @classmethod
    def from_file(cls, path, fmt: str = "auto") -> "PoolSource":
        return cls.from_samples(read_scores(path, fmt), name=str(path))

    def draw(self, rng: np.random.Generator, shape):
        idx = rng.integers(0, self.confidences.size, size=shape)
        return self.confidences[idx], None if self.labels is None else self.labels[idx]

    def split(self, holdout: float, rng: np.random.Generator):
        """Disjoint (calibration, held-out) partitions; held-out gets ``holdout`` of the pool."""
        if not 0 < holdout < 1:
            raise InvalidParameterError("holdout fraction must lie in (0, 1)")
        perm = rng.permutation(self.confidences.size)
        cut = self.confidences.size - int(round(holdout * self.confidences.size))
        if cut < 2 or cut == self.confidences.size:
            raise InsufficientDataError(f"pool {self.name!r} too small to split")
        parts = []
        for idx in (np.sort(perm[:cut]), np.sort(perm[cut:])):
            labels = None if self.labels is None else self.labels[idx]
            parts.append(PoolSource(self.confidences[idx], labels, self.name))
        return parts[0], parts[1]


ScoreSource = Union[BetaSource, PoolSource]


@dataclass(frozen=True)
class MixtureSpec:
    reference: ScoreSource
    alternative: ScoreSource
    rho: float

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise InvalidParameterError(f"mixture proportion must lie in [0, 1], got {self.rho!r}")

    def alternative_count(self, m: int) -> int:
        return int(math.floor(self.rho * m + 0.5))


@dataclass
class Batches:
    """R batches of size m, as arrays. ``alternative`` marks out-of-specs samples."""

    confidences: np.ndarray
    labels: Optional[np.ndarray]
    alternative: np.ndarray


def draw_batches(source: Union[ScoreSource, MixtureSpec], rows: int, m: int,
                 rng: np.random.Generator) -> Batches:
    if m < 1:
        raise InvalidParameterError(f"batch size must be >= 1, got {m}")
    shape = (rows, m)
    if not isinstance(source, MixtureSpec):
        conf, labels = source.draw(rng, shape)
        return Batches(conf, labels, np.zeros(shape, dtype=bool))
    k = source.alternative_count(m)
    ref_c, ref_l = source.reference.draw(rng, shape)
    alt_c, alt_l = source.alternative.draw(rng, shape)
    order = np.argsort(rng.random(shape), axis=1)
    mask = np.zeros(shape, dtype=bool)
    np.put_along_axis(mask, order[:, :k], True, axis=1)
    labels = None
    if ref_l is not None and alt_l is not None:
        labels = np.where(mask, alt_l, ref_l)
    return Batches(np.where(mask, alt_c, ref_c), labels, mask)


def sample_batch(source: Union[ScoreSource, MixtureSpec], m: int, seed: int = 0) -> list[ScoreSample]:
    """One batch as ScoreSamples; ids are ``ref-<i>`` or ``alt-<i>`` by component."""
    b = draw_batches(source, 1, m, np.random.default_rng(seed))
    out = []
    for i in range(m):
        label = None if b.labels is None else int(b.labels[0, i])
        tag = "alt" if b.alternative[0, i] else "ref"
        out.append(ScoreSample(f"{tag}-{i}", float(b.confidences[0, i]), label))
    return out


# -- calibrated detectors ---------------------------------------------------------

@dataclass
class Calibration:
    """Calibration sample drawn from the within-specs source, with lazily built test models.

    ``test_source`` is what within-specs test batches are drawn from: the
    synthetic source itself, or the held-out part of a file pool.
    """

    confidences: np.ndarray
    labels: Optional[np.ndarray]
    test_source: ScoreSource
    seed: int = 0
    threshold_source: str = "auto"
    bootstrap: int = bl.DEFAULT_BOOTSTRAP
    jitter_eps: float = DEFAULT_JITTER_EPS
    _cache: dict = field(default_factory=dict, repr=False)

    def ks_model(self) -> CalibrationModel:
        if "ks" not in self._cache:
            self._cache["ks"] = build_calibration(self.confidences, self.jitter_eps, self.seed,
                                                  source="harness calibration")
        return self._cache["ks"]

    def mean_model(self, log_space: bool) -> bl.MeanTestModel:
        key = ("mean", log_space)
        if key not in self._cache:
            self._cache[key] = bl.fit_mean_model(self.confidences, log_space)
        return self._cache[key]

    def bootstrap_means(self, m: int, log_space: bool) -> np.ndarray:
        key = ("boot", m, log_space)
        if key not in self._cache:
            boot_seed = [self.seed, _CAL_STREAM, 1, m]
            self._cache[key] = bl.bootstrap_means(self.confidences, m, self.bootstrap,
                                                  np.random.SeedSequence(boot_seed), log_space)
        return self._cache[key]

    def label_model(self, classes: Optional[int] = None) -> bl.LabelFrequencyModel:
        if self.labels is None:
            raise InsufficientDataError("chi2 test needs labelled calibration scores")
        K = classes or getattr(self.test_source, "classes", 0) or int(self.labels.max()) + 1
        key = ("chi2", K)
        if key not in self._cache:
            self._cache[key] = bl.fit_label_model(self.labels, K)
        return self._cache[key]

    def detector(self, test: str, alpha: float, m: int) -> "Detector":
        if test == "ksconf":
            theta, _ = resolve_threshold(alpha, m, self.threshold_source)
            return KSDetector(self.ks_model(), theta)
        if test == "chi2":
            return Chi2Detector(self.label_model(), alpha)
        symmetric = test.startswith("sym-")
        variant = test[4:] if symmetric else test
        if variant not in bl.MEAN_VARIANTS:
            raise InvalidParameterError(f"unknown test {test!r}; expected one of {TESTS}")
        log_space = variant.startswith("log-")
        model = self.mean_model(log_space)
        if variant.endswith("z"):
            th = bl.z_threshold(model, alpha, m, symmetric)
        else:
            th = bl.thresholds_from_means(self.bootstrap_means(m, log_space), alpha, symmetric)
        lo, hi = th if symmetric else (th, None)
        return MeanDetector(log_space, lo, hi)


def calibrate(source: ScoreSource, size: int = DEFAULT_CALIBRATION_SIZE, seed: int = 0,
              holdout: float = 0.5, **settings) -> Calibration:
    """Draw a calibration sample. File pools are split so calibration and test never share a row."""
    rng = np.random.default_rng([seed, _CAL_STREAM])
    if isinstance(source, PoolSource):
        cal, test = source.split(holdout, np.random.default_rng([seed, _POOL_STREAM]))
        return Calibration(cal.confidences, cal.labels, test, seed=seed, **settings)
    if size < 2:
        raise InsufficientDataError("calibration size must be >= 2")
    conf, labels = source.draw(rng, size)
    return Calibration(conf, labels, source, seed=seed, **settings)


class Detector:
    needs_labels = False

    def decide_rows(self, batches: Batches) -> np.ndarray:
        raise NotImplementedError


@dataclass
class KSDetector(Detector):
    model: CalibrationModel
    theta: float

    def statistics(self, conf: np.ndarray) -> np.ndarray:
        return ks_statistic_rows(self.model.uniformize(conf))

    def decide_rows(self, batches):
        return self.statistics(batches.confidences) > self.theta


@dataclass
class MeanDetector(Detector):
    log_space: bool
    lower: float
    upper: Optional[float] = None

    def decide_rows(self, batches):
        x = batches.confidences
        means = (bl.to_log(x) if self.log_space else x).mean(axis=1)
        positive = means < self.lower
        if self.upper is not None:
            positive |= means > self.upper
        return positive


@dataclass
class Chi2Detector(Detector):
    model: bl.LabelFrequencyModel
    alpha: float
    needs_labels = True

    def decide_rows(self, batches):
        if batches.labels is None:
            raise InsufficientDataError("chi2 test needs labelled test batches")
        stat, df = bl.chi2_statistic(self.model, batches.labels)
        return bl.chi2_pvalue(stat, df) < self.alpha


# -- reports ------------------------------------------------------------------------

@dataclass(frozen=True)
class EvalRow:
    test: str
    alpha: float
    m: int
    rho: float
    rate: float
    stderr: float
    trials: int


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)

    COLUMNS = ("test", "alpha", "m", "rho", "rate", "stderr", "trials")

    def rate(self, test: str, alpha: float, m: int, rho: float = 0.0) -> EvalRow:
        for r in self.rows:
            if r.test == test and r.alpha == alpha and r.m == m and r.rho == rho:
                return r
        raise KeyError((test, alpha, m, rho))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for r in self.rows:
            w.writerow([r.test, fmt_float(r.alpha), r.m, fmt_float(r.rho),
                        fmt_float(r.rate), fmt_float(r.stderr), r.trials])
        return buf.getvalue()

    def to_long_csv(self) -> str:
        """One (metric, value) pair per line, convenient for plotting libraries."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["test", "alpha", "m", "rho", "metric", "value"])
        for r in self.rows:
            for metric in ("rate", "stderr", "trials"):
                value = getattr(r, metric)
                w.writerow([r.test, fmt_float(r.alpha), r.m, fmt_float(r.rho), metric,
                            value if metric == "trials" else fmt_float(value)])
        return buf.getvalue()


def binomial_stderr(p: float, n: int) -> float:
    return math.sqrt(p * (1 - p) / n) if n else float("nan")


# -- protocols ------------------------------------------------------------------------

def _rho_key(rho: float) -> int:
    return int(round(rho * 1_000_000))


def evaluate_grid(calibration: Calibration, tests: Sequence[str], alphas: Sequence[float],
                  batch_sizes: Sequence[int], rhos: Sequence[float] = (0.0,),
                  alternative: Optional[ScoreSource] = None,
                  trials: int = DEFAULT_TRIALS, seed: int = 0) -> EvalReport:
    """Positive rate of each test over ``trials`` batches for every (alpha, m, rho).

    At rho = 0 this is the false-positive rate; at rho > 0 it is the
    detection rate against the ``alternative`` source.
    """
    if trials < 1:
        raise InvalidParameterError("trials must be >= 1")
    if any(r > 0 for r in rhos) and alternative is None:
        raise InvalidParameterError("mixture proportions > 0 need an alternative source")
    report = EvalReport()
    for m in batch_sizes:
        detectors = {(t, a): calibration.detector(t, a, m) for t in tests for a in alphas}
        for rho in rhos:
            src = (calibration.test_source if rho == 0 else
                   MixtureSpec(calibration.test_source, alternative, rho))
            rng = np.random.default_rng([seed, _EVAL_STREAM, m, _rho_key(rho)])
            positives = {key: 0 for key in detectors}
            rows_per_chunk = max(1, _CHUNK_ELEMENTS // m)
            for start in range(0, trials, rows_per_chunk):
                batches = draw_batches(src, min(rows_per_chunk, trials - start), m, rng)
                for key, det in detectors.items():
                    positives[key] += int(det.decide_rows(batches).sum())
            for t in tests:
                for a in alphas:
                    p = positives[(t, a)] / trials
                    report.rows.append(EvalRow(t, a, m, rho, p, binomial_stderr(p, trials), trials))
    return report


def evaluate_fpr(test: str, calibration: Calibration, m: int, alpha: float,
                 trials: int = DEFAULT_TRIALS, seed: int = 0) -> EvalRow:
    return evaluate_grid(calibration, [test], [alpha], [m], trials=trials, seed=seed).rows[0]


def evaluate_tpr(test: str, calibration: Calibration, alternative: ScoreSource,
                 rhos: Sequence[float], m: int, alpha: float,
                 trials: int = DEFAULT_TRIALS, seed: int = 0) -> EvalReport:
    return evaluate_grid(calibration, [test], [alpha], [m], rhos, alternative, trials, seed)


def evaluate_filtering(calibration: Calibration, alternative: ScoreSource,
                       rhos: Sequence[float], m: int, w: int, alpha: float = 0.01,
                       trials: int = FAST_TRIALS, seed: int = 0,
                       positive_only: bool = True, max_draw_factor: int = 50) -> EvalReport:
    """Mean out-of-specs fraction in the w-subset chosen by each method.

    With ``positive_only`` only batches flagged by KS(conf) count toward
    ``trials``; the ``rate`` column then holds the mean subset fraction.
    """
    model = calibration.ks_model()
    theta, _ = resolve_threshold(alpha, m, calibration.threshold_source)
    det = KSDetector(model, theta)
    report = EvalReport()
    for rho in rhos:
        mix = MixtureSpec(calibration.test_source, alternative, rho)
        rng = np.random.default_rng([seed, _FILTER_STREAM, m, w, _rho_key(rho)])
        fractions = {k: [] for k in FILTER_METHODS}
        drawn = 0
        chunk = max(1, min(trials, _CHUNK_ELEMENTS // m))
        while len(fractions["random"]) < trials and drawn < max_draw_factor * trials:
            b = draw_batches(mix, chunk, m, rng)
            drawn += chunk
            u = model.uniformize(b.confidences)
            flagged = ks_statistic_rows(u) > theta if positive_only else np.ones(chunk, bool)
            for i in np.flatnonzero(flagged):
                if len(fractions["random"]) >= trials:
                    break
                alt = b.alternative[i]
                idx, *_ = select_indices(u[i], w, rng)
                fractions["ksconf-filter"].append(alt[idx].mean())
                low = np.argsort(b.confidences[i], kind="stable")[:w]
                fractions["lowest-confidence"].append(alt[low].mean())
                fractions["random"].append(alt[rng.choice(m, size=w, replace=False)].mean())
        for method in FILTER_METHODS:
            vals = np.asarray(fractions[method])
            n = vals.size
            mean = float(vals.mean()) if n else float("nan")
            se = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
            report.rows.append(EvalRow(method, alpha, m, rho, mean, se, n))
    return report


# -- declarative configs ------------------------------------------------------------

def source_from_config(spec: dict, base_dir: Optional[Path] = None) -> ScoreSource:
    """``{kind: beta, a, b, classes?, label_concentration?, label_seed?}`` or
    ``{kind: file, path, format?}``."""
    kind = spec.get("kind")
    if kind == "beta":
        return BetaSource(float(spec["a"]), float(spec["b"]), int(spec.get("classes", 0)),
                          spec.get("label_concentration"), int(spec.get("label_seed", 0)))
    if kind == "file":
        path = Path(spec["path"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return PoolSource.from_file(path, spec.get("format", "auto"))
    raise InvalidParameterError(f"unknown source kind {kind!r}; expected 'beta' or 'file'")


EXPERIMENTS = ("fpr", "tpr", "filtering")


def run_config(cfg: dict, base_dir: Optional[Path] = None) -> EvalReport:
    kind = cfg.get("experiment", "fpr")
    if kind not in EXPERIMENTS:
        raise InvalidParameterError(f"unknown experiment {kind!r}; expected one of {EXPERIMENTS}")
    seed = int(cfg.get("seed", 0))
    trials = int(cfg.get("trials", DEFAULT_TRIALS))
    reference = source_from_config(cfg["reference"], base_dir)
    alternative = source_from_config(cfg["alternative"], base_dir) if "alternative" in cfg else None
    cal = calibrate(reference, int(cfg.get("calibration_size", DEFAULT_CALIBRATION_SIZE)), seed,
                    holdout=float(cfg.get("holdout", 0.5)),
                    threshold_source=cfg.get("threshold_source", "auto"),
                    bootstrap=int(cfg.get("bootstrap", bl.DEFAULT_BOOTSTRAP)),
                    jitter_eps=float(cfg.get("jitter_eps", DEFAULT_JITTER_EPS)))
    alphas = [float(a) for a in cfg.get("alphas", [0.01])]
    ms = [int(m) for m in cfg.get("batch_sizes", [100])]
    if kind == "filtering":
        if alternative is None:
            raise InvalidParameterError("filtering experiments need an alternative source")
        report = EvalReport()
        for m in ms:
            for a in alphas:
                report.rows += evaluate_filtering(
                    cal, alternative, [float(r) for r in cfg.get("rhos", [0.1, 0.3, 0.5])], m,
                    int(cfg.get("subset_size", 10)), a, trials, seed,
                    bool(cfg.get("positive_only", True))).rows
        return report
    tests = list(cfg.get("tests", ["ksconf"]))
    rhos = [0.0] if kind == "fpr" else [float(r) for r in cfg.get("rhos", [0.0, 0.5, 1.0])]
    return evaluate_grid(cal, tests, alphas, ms, rhos, alternative, trials, seed)
