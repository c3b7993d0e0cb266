"""KS(conf): flag batches of classifier confidences that no longer match a
calibrated within-specs reference."""

__version__ = "0.1.0"

from .calibration import (CalibrationModel, ModelMeta, ScoreSample, build_calibration,
                          dedupe_jitter, uniformize)
from .errors import (DegenerateModelError, DomainError, FormatError, InsufficientDataError,
                     InvalidParameterError, KSConfError, NeedsCalibrationError, NotTabulatedError)
from .filtering import FilterResult, filter_suspicious, lowest_confidence_baseline
from .kstest import TestConfig, TestOutcome, batch_test, ks_statistic, threshold
from .sketch import QuantileSketch, sketch_insert, sketch_merge, sketch_to_model

__all__ = [
    "CalibrationModel", "ModelMeta", "ScoreSample", "build_calibration", "dedupe_jitter",
    "uniformize", "QuantileSketch", "sketch_insert", "sketch_merge", "sketch_to_model",
    "TestConfig", "TestOutcome", "batch_test", "ks_statistic", "threshold",
    "FilterResult", "filter_suspicious", "lowest_confidence_baseline",
    "KSConfError", "InvalidParameterError", "InsufficientDataError", "DomainError",
    "NotTabulatedError", "DegenerateModelError", "NeedsCalibrationError", "FormatError",
]
