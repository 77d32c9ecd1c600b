"""Score calibration and safety-constrained threshold selection.

A calibrated confidence of c means "correct about c of the time". The map is
fitted with pool-adjacent-violators (isotonic least squares), the assumption-
light monotone fit; reliability is summarized by ECE/MCE over equal-width
bins; autonomy thresholds are chosen on the observed-confidence grid under
either a point-estimate or a one-sided 95% Clopper-Pearson error bound.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import stats

from . import _kernels
from .errors import PreconditionError
from .model import AiAssessment, DiagnosisClass


@dataclass(frozen=True)
class CalibrationMap:
    """Right-continuous, non-decreasing step function on [0, 1].

    breakpoints: ordered (raw_score_upper_bound, calibrated_value) pairs; a raw
    score s maps to the value of the first breakpoint with upper bound >= s.
    """

    breakpoints: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if not self.breakpoints:
            raise PreconditionError("calibration map needs at least one breakpoint")
        ubs = [ub for ub, _ in self.breakpoints]
        vals = [v for _, v in self.breakpoints]
        if any(b >= a for a, b in zip(ubs[1:], ubs)):
            raise PreconditionError("breakpoint upper bounds must be strictly increasing")
        if ubs[-1] != 1.0:
            raise PreconditionError("last breakpoint upper bound must be 1.0")
        if any(b > a for a, b in zip(vals[1:], vals)):
            raise PreconditionError("calibrated values must be non-decreasing")
        if not all(0.0 <= v <= 1.0 for v in vals) or not all(0.0 <= u <= 1.0 for u in ubs):
            raise PreconditionError("breakpoints must lie in [0, 1]")

    def apply(self, raw_score: float) -> float:
        if not 0.0 <= raw_score <= 1.0:
            raise PreconditionError(f"raw score {raw_score} outside [0, 1]")
        ubs = [ub for ub, _ in self.breakpoints]
        return self.breakpoints[bisect.bisect_left(ubs, raw_score)][1]

    def apply_array(self, raw_scores: np.ndarray) -> np.ndarray:
        ubs = np.array([ub for ub, _ in self.breakpoints])
        vals = np.array([v for _, v in self.breakpoints])
        idx = np.searchsorted(ubs, raw_scores, side="left")
        return vals[idx]

    @classmethod
    def identity(cls, steps: int = 100) -> "CalibrationMap":
        """Fine step approximation of the identity (calibrated = raw)."""
        return cls(tuple((i / steps, i / steps) for i in range(1, steps + 1)))

    def to_json(self) -> str:
        return json.dumps({"breakpoints": [[ub, v] for ub, v in self.breakpoints]})

    @classmethod
    def from_json(cls, text: str) -> "CalibrationMap":
        data = json.loads(text)
        return cls(tuple((float(ub), float(v)) for ub, v in data["breakpoints"]))


def apply_calibration(calibration_map: CalibrationMap, raw_score: float) -> float:
    return calibration_map.apply(raw_score)


def fit_pav(scores: Sequence[float], correctness: Sequence[bool]) -> CalibrationMap:
    """Isotonic least-squares fit of correctness against score, as a step map.

    Ties in score are pooled before fitting; adjacent blocks with equal fitted
    values are merged in the output.
    """
    scores_arr = np.asarray(scores, dtype=np.float64)
    correct_arr = np.asarray(correctness, dtype=np.float64)
    if scores_arr.shape != correct_arr.shape:
        raise PreconditionError("scores and correctness must have equal length")
    if scores_arr.size < 2:
        raise PreconditionError("need at least 2 points to fit a calibration map")
    if scores_arr.min() < 0.0 or scores_arr.max() > 1.0:
        raise PreconditionError("scores must lie in [0, 1]")

    uniq, inverse, counts = np.unique(scores_arr, return_inverse=True, return_counts=True)
    sums = np.bincount(inverse, weights=correct_arr)
    means = sums / counts

    fitted = _kernels.pav_fit(means, counts.astype(np.float64))

    breakpoints: list[tuple[float, float]] = []
    for ub, val in zip(uniq, fitted):
        if breakpoints and breakpoints[-1][1] == val:
            breakpoints.pop()
        breakpoints.append((float(ub), float(val)))
    last_ub, last_val = breakpoints[-1]
    breakpoints[-1] = (1.0, last_val)
    return CalibrationMap(tuple(breakpoints))


def pav_fitted_values(scores: Sequence[float], correctness: Sequence[bool]) -> np.ndarray:
    """Per-point fitted values of the isotonic fit (exposed for exactness tests)."""
    scores_arr = np.asarray(scores, dtype=np.float64)
    correct_arr = np.asarray(correctness, dtype=np.float64)
    uniq, inverse, counts = np.unique(scores_arr, return_inverse=True, return_counts=True)
    sums = np.bincount(inverse, weights=correct_arr)
    fitted = _kernels.pav_fit(sums / counts, counts.astype(np.float64))
    return fitted[inverse]


@dataclass(frozen=True)
class ReliabilityBin:
    mean_confidence: float
    empirical_accuracy: float
    count: int


@dataclass(frozen=True)
class ReliabilityReport:
    """Equal-width reliability bins plus ECE/MCE. Empty bins are omitted
    (they contribute 0 to ECE and are excluded from MCE)."""

    bins: tuple[ReliabilityBin, ...]
    ece: float
    mce: float

    def to_dict(self) -> dict:
        return {
            "bins": [
                {
                    "mean_confidence": b.mean_confidence,
                    "empirical_accuracy": b.empirical_accuracy,
                    "count": b.count,
                }
                for b in self.bins
            ],
            "ece": self.ece,
            "mce": self.mce,
        }


def reliability(
    confidences: Sequence[float], correctness: Sequence[bool], n_bins: int = 10
) -> ReliabilityReport:
    conf = np.asarray(confidences, dtype=np.float64)
    correct = np.asarray(correctness, dtype=np.float64)
    if n_bins < 1:
        raise PreconditionError("n_bins must be >= 1")
    if conf.shape != correct.shape or conf.size == 0:
        raise PreconditionError("confidences and correctness must be equal-length, non-empty")
    if conf.min() < 0.0 or conf.max() > 1.0:
        raise PreconditionError("confidences must lie in [0, 1]")

    idx = np.minimum((conf * n_bins).astype(np.int64), n_bins - 1)
    total = conf.size
    bins = []
    ece = 0.0
    mce = 0.0
    for b in range(n_bins):
        mask = idx == b
        count = int(mask.sum())
        if count == 0:
            continue
        mean_conf = float(conf[mask].mean())
        acc = float(correct[mask].mean())
        gap = abs(acc - mean_conf)
        ece += (count / total) * gap
        mce = max(mce, gap)
        bins.append(ReliabilityBin(mean_conf, acc, count))
    return ReliabilityReport(tuple(bins), float(ece), float(mce))


@dataclass(frozen=True)
class ThresholdResult:
    """Smallest confidence cutoff meeting the error constraint for one class.

    feasible is False when no cutoff on the observed grid meets the constraint
    (the class must then not be auto-reported); tau is None in that case.
    """

    target_class: DiagnosisClass
    target_error: float
    method: str
    feasible: bool
    tau: Optional[float]
    achieved_error_bound: Optional[float]
    coverage: float
    n_class_predictions: int

    def to_dict(self) -> dict:
        return {
            "target_class": self.target_class.value,
            "target_error": self.target_error,
            "method": self.method,
            "feasible": self.feasible,
            "tau": self.tau,
            "achieved_error_bound": self.achieved_error_bound,
            "coverage": self.coverage,
            "n_class_predictions": self.n_class_predictions,
        }


THRESHOLD_METHODS = ("point_estimate", "binomial_upper_95")


def binomial_upper_95(errors: int, n: int) -> float:
    """One-sided 95% Clopper-Pearson upper bound on an error probability."""
    if n <= 0:
        raise PreconditionError("binomial bound needs n > 0")
    if errors >= n:
        return 1.0
    return float(stats.beta.ppf(0.95, errors + 1, n - errors))


def select_threshold(
    assessments: Iterable[tuple[AiAssessment, DiagnosisClass]],
    target_class: DiagnosisClass,
    target_error: float,
    method: str = "binomial_upper_95",
) -> ThresholdResult:
    """Smallest tau on the observed-confidence grid such that, among
    predictions of `target_class` with confidence >= tau, the error rate
    (or its one-sided 95% binomial upper bound) is <= target_error."""
    if method not in THRESHOLD_METHODS:
        raise PreconditionError(f"unknown method {method!r}; have {THRESHOLD_METHODS}")
    if not 0.0 <= target_error <= 1.0:
        raise PreconditionError("target_error must lie in [0, 1]")
    pairs = list(assessments)
    if not pairs:
        raise PreconditionError("assessments must be non-empty")

    confs = []
    wrong = []
    for ai, truth in pairs:
        if ai.predicted_class is not target_class:
            continue
        conf = ai.confidence
        if conf is None:
            continue
        confs.append(conf)
        wrong.append(ai.predicted_class is not truth)
    return select_threshold_from_scores(confs, wrong, target_class, target_error, method)


def select_threshold_from_scores(
    confidences: Sequence[float],
    wrong: Sequence[bool],
    target_class: DiagnosisClass,
    target_error: float,
    method: str = "binomial_upper_95",
) -> ThresholdResult:
    """Grid search over observed confidences of one class's predictions.

    `confidences`/`wrong` cover exactly the predictions of `target_class`.
    The objective is a step function of tau, so the observed grid is exact.
    """
    if method not in THRESHOLD_METHODS:
        raise PreconditionError(f"unknown method {method!r}; have {THRESHOLD_METHODS}")
    conf_arr = np.asarray(confidences, dtype=np.float64)
    wrong_arr = np.asarray(wrong, dtype=bool)
    n_class = conf_arr.size
    if n_class == 0:
        return ThresholdResult(target_class, target_error, method, False, None, None, 0.0, 0)

    order = np.argsort(conf_arr, kind="stable")
    conf_sorted = conf_arr[order]
    wrong_sorted = wrong_arr[order]
    # suffix error counts: errors among predictions with confidence >= conf_sorted[i]
    suffix_wrong = np.cumsum(wrong_sorted[::-1])[::-1]

    grid_idx = np.flatnonzero(np.diff(conf_sorted, prepend=-1.0) > 0)
    for i in grid_idx:
        n_at = n_class - i
        errors = int(suffix_wrong[i])
        if method == "point_estimate":
            bound = errors / n_at
        else:
            bound = binomial_upper_95(errors, n_at)
        if bound <= target_error:
            return ThresholdResult(
                target_class,
                target_error,
                method,
                True,
                float(conf_sorted[i]),
                float(bound),
                n_at / n_class,
                n_class,
            )
    return ThresholdResult(target_class, target_error, method, False, None, None, 0.0, n_class)
