"""Stochastic agent models: the AI tool and the clinician.

Both agents are immutable profiles; all randomness flows through a caller-
supplied numpy Generator, so identical (profile, case, seed) triples give
identical outputs. AI confidence scores are Beta-distributed conditional on
correctness, which keeps the closed-form means available as test oracles and
can express the overconfident out-of-scope regime.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .calibration import CalibrationMap
from .errors import ConfigurationError, ContractViolation
from .model import (
    AiAssessment,
    CaseRecord,
    CLASS_INDEX,
    CLASS_ORDER,
    DiagnosisClass,
    QualityStatus,
)

N_CLASSES = len(CLASS_ORDER)
_ROW_TOL = 1e-9

DISCLOSURE_MODES = ("always", "confident_abnormal_only")


@dataclass(frozen=True)
class InteractionConfig:
    """How AI output is surfaced on the clinician-and-AI pathway."""

    disclosure: str = "always"
    abnormal_confidence_cutoff: float = 0.9

    def __post_init__(self) -> None:
        if self.disclosure not in DISCLOSURE_MODES:
            raise ConfigurationError(f"unknown disclosure mode {self.disclosure!r}")
        if not 0.0 <= self.abnormal_confidence_cutoff <= 1.0:
            raise ConfigurationError("abnormal_confidence_cutoff must lie in [0, 1]")


def _check_confusion(matrix: np.ndarray, who: str) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape != (N_CLASSES, N_CLASSES):
        raise ConfigurationError(f"{who} confusion matrix must be {N_CLASSES}x{N_CLASSES}")
    if (matrix < 0).any():
        raise ConfigurationError(f"{who} confusion matrix has negative entries")
    if np.abs(matrix.sum(axis=1) - 1.0).max() > _ROW_TOL:
        raise ConfigurationError(f"{who} confusion matrix rows must sum to 1")
    return matrix


def _beta_pair(params, who: str) -> tuple[float, float]:
    a, b = float(params[0]), float(params[1])
    if a <= 0 or b <= 0:
        raise ConfigurationError(f"{who} Beta parameters must be > 0")
    return a, b


@dataclass(frozen=True)
class AiProfile:
    confusion: np.ndarray
    score_given_correct: tuple[float, float]
    score_given_incorrect: tuple[float, float]
    oos_overconfidence_prob: float
    qc_fail_prob_by_quality: Mapping[QualityStatus, float]
    failure_mode_tags: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "confusion", _check_confusion(self.confusion, "AI"))
        object.__setattr__(
            self, "score_given_correct", _beta_pair(self.score_given_correct, "score_given_correct")
        )
        object.__setattr__(
            self,
            "score_given_incorrect",
            _beta_pair(self.score_given_incorrect, "score_given_incorrect"),
        )
        ac, bc = self.score_given_correct
        ai_, bi = self.score_given_incorrect
        if ac / (ac + bc) <= ai_ / (ai_ + bi):
            raise ConfigurationError(
                "mean score for correct predictions must exceed the incorrect mean"
            )
        if not 0.0 <= self.oos_overconfidence_prob <= 1.0:
            raise ConfigurationError("oos_overconfidence_prob must lie in [0, 1]")
        for status, p in self.qc_fail_prob_by_quality.items():
            if not 0.0 <= p <= 1.0:
                raise ConfigurationError(f"qc detection probability for {status} outside [0, 1]")

    @classmethod
    def from_config(cls, data: Mapping) -> "AiProfile":
        return cls(
            confusion=np.array(data["confusion"], dtype=np.float64),
            score_given_correct=tuple(data["score_given_correct"]),
            score_given_incorrect=tuple(data["score_given_incorrect"]),
            oos_overconfidence_prob=float(data["oos_overconfidence_prob"]),
            qc_fail_prob_by_quality={
                QualityStatus.from_text(k): float(v)
                for k, v in data["qc_fail_prob_by_quality"].items()
            },
            failure_mode_tags=frozenset(data.get("failure_mode_tags", ())),
        )


@dataclass(frozen=True)
class ClinicianProfile:
    confusion: np.ndarray
    failure_mode_boosts: tuple[tuple[DiagnosisClass, DiagnosisClass, float], ...]
    anchoring_alpha_by_modality: Mapping[str, float]
    warning_compliance: float
    reread_miss_factor: float
    minutes_by_class: Mapping[DiagnosisClass, float]
    boosted_confusion: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        base = _check_confusion(self.confusion, "clinician")
        object.__setattr__(self, "confusion", base)
        boosted = base.copy()
        for true_cls, pred_cls, mass in self.failure_mode_boosts:
            if mass < 0:
                raise ConfigurationError("failure mode boost mass must be >= 0")
            boosted[CLASS_INDEX[true_cls], CLASS_INDEX[pred_cls]] += mass
        boosted /= boosted.sum(axis=1, keepdims=True)
        object.__setattr__(self, "boosted_confusion", boosted)
        for mode, alpha in self.anchoring_alpha_by_modality.items():
            if not 0.0 <= alpha <= 1.0:
                raise ConfigurationError(f"anchoring alpha for {mode!r} outside [0, 1]")
        if not 0.0 <= self.warning_compliance <= 1.0:
            raise ConfigurationError("warning_compliance must lie in [0, 1]")
        if not 0.0 <= self.reread_miss_factor <= 1.0:
            raise ConfigurationError("reread_miss_factor must lie in [0, 1]")
        missing = [c for c in CLASS_ORDER if c not in self.minutes_by_class]
        if missing:
            raise ConfigurationError(f"minutes_by_class missing {missing}")
        if any(m <= 0 for m in self.minutes_by_class.values()):
            raise ConfigurationError("minutes_by_class values must be > 0")

    def anchoring_alpha(self, mode: str) -> float:
        try:
            return self.anchoring_alpha_by_modality[mode]
        except KeyError:
            raise ConfigurationError(f"no anchoring alpha configured for mode {mode!r}") from None

    def reread_confusion(self) -> np.ndarray:
        """Boosted matrix with the normal (miss) column of abnormal rows scaled
        down by reread_miss_factor, rows renormalized. Used after a warning."""
        m = self.boosted_confusion.copy()
        normal = CLASS_INDEX[DiagnosisClass.NORMAL]
        for i, cls in enumerate(CLASS_ORDER):
            if cls is DiagnosisClass.NORMAL:
                continue
            m[i, normal] *= self.reread_miss_factor
            total = m[i].sum()
            if total <= 0:  # degenerate: was certain to miss; fall back to base row
                m[i] = self.boosted_confusion[i]
            else:
                m[i] /= total
        return m

    @classmethod
    def from_config(cls, data: Mapping) -> "ClinicianProfile":
        return cls(
            confusion=np.array(data["confusion"], dtype=np.float64),
            failure_mode_boosts=tuple(
                (DiagnosisClass.from_text(t), DiagnosisClass.from_text(p), float(m))
                for t, p, m in data.get("failure_mode_boosts", ())
            ),
            anchoring_alpha_by_modality=dict(data["anchoring_alpha_by_modality"]),
            warning_compliance=float(data["warning_compliance"]),
            reread_miss_factor=float(data["reread_miss_factor"]),
            minutes_by_class={
                DiagnosisClass.from_text(k): float(v) for k, v in data["minutes_by_class"].items()
            },
        )


def _sample_class(row: np.ndarray, rng: np.random.Generator) -> DiagnosisClass:
    u = rng.random()
    return CLASS_ORDER[int(np.searchsorted(np.cumsum(row), u, side="right"))]


def ai_assess(
    profile: AiProfile,
    case: CaseRecord,
    rng: np.random.Generator,
    calibration: Optional[CalibrationMap] = None,
) -> AiAssessment:
    """Run the AI on one case: QC detection, prediction, confidence score."""
    if case.quality is not QualityStatus.PASS:
        detect_p = profile.qc_fail_prob_by_quality.get(case.quality, 1.0)
        if rng.random() < detect_p:
            return AiAssessment(case.case_id, case.quality, None, 0.0)
        # undetected defect: the AI proceeds as if the slide were fine

    true_idx = CLASS_INDEX[case.true_label]
    ac, bc = profile.score_given_correct
    ai_, bi = profile.score_given_incorrect

    if case.oos_entity is not None:
        # outside trained scope: uniformly wrong prediction, possibly overconfident
        others = [c for c in CLASS_ORDER if c is not case.true_label]
        predicted = others[int(rng.integers(len(others)))]
        if rng.random() < profile.oos_overconfidence_prob:
            raw = float(rng.beta(ac, bc))
        else:
            raw = float(rng.beta(ai_, bi))
    else:
        predicted = _sample_class(profile.confusion[true_idx], rng)
        if predicted is case.true_label:
            raw = float(rng.beta(ac, bc))
        else:
            raw = float(rng.beta(ai_, bi))

    calibrated = calibration.apply(raw) if calibration is not None else None
    return AiAssessment(case.case_id, QualityStatus.PASS, predicted, raw, calibrated)


def clinician_read(
    profile: ClinicianProfile, case: CaseRecord, rng: np.random.Generator
) -> tuple[DiagnosisClass, float]:
    """Unaided read: label from the boosted confusion row, deterministic minutes."""
    label = _sample_class(profile.boosted_confusion[CLASS_INDEX[case.true_label]], rng)
    return label, profile.minutes_by_class[case.true_label]


def clinician_with_ai(
    profile: ClinicianProfile,
    case: CaseRecord,
    ai: AiAssessment,
    mode: str,
    disclosure: str,
    rng: np.random.Generator,
    abnormal_confidence_cutoff: float = 0.9,
) -> tuple[DiagnosisClass, float, int]:
    """Joint read: own read first, then AI disclosure / anchoring / warnings.

    In decision_referral mode the AI output is not shown; instead a warning
    fires when the clinician reads normal but the AI confidently predicts
    abnormal, and (with warning_compliance probability) triggers a re-read
    whose miss probability is scaled by reread_miss_factor.
    """
    if ai.predicted_class is None:
        raise ContractViolation("clinician_with_ai called without an AI prediction")
    own, minutes = clinician_read(profile, case, rng)
    warnings_fired = 0
    conf = ai.confidence or 0.0
    confident_abnormal = ai.predicted_class.is_abnormal and conf >= abnormal_confidence_cutoff

    if mode == "decision_referral":
        if confident_abnormal and own is DiagnosisClass.NORMAL:
            warnings_fired = 1
            if rng.random() < profile.warning_compliance:
                row = profile.reread_confusion()[CLASS_INDEX[case.true_label]]
                own = _sample_class(row, rng)
                minutes += profile.minutes_by_class[case.true_label]
        return own, minutes, warnings_fired

    disclosed = disclosure == "always" or confident_abnormal
    if disclosed and ai.predicted_class is not own:
        if rng.random() < profile.anchoring_alpha(mode):
            own = ai.predicted_class
    return own, minutes, warnings_fired
