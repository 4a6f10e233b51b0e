"""Presentation-attack-detection error rates over comparison scores.

Scores follow one fixed orientation: higher means attack (morph). A sample
scoring exactly at the threshold is classified as an attack, matching the
pipeline's decision rule, so APCER counts attacks strictly below the
threshold and BPCER counts bona fides at or above it.

The equal-error operating point is found by exhaustive sweep over every
distinct score, every midpoint between adjacent distinct scores, and the
two infinite sentinels; the step functions are therefore sampled at every
value they take. Among candidates the sweep minimizes the average error
rate (APCER+BPCER)/2, breaking ties toward the most balanced point and
then toward the lower threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyScores


@dataclass(frozen=True)
class ScoreSet:
    """Attack and bona fide score lists (higher-is-attack orientation)."""

    attack_scores: np.ndarray
    bonafide_scores: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.attack_scores, dtype=np.float64)
        b = np.asarray(self.bonafide_scores, dtype=np.float64)
        object.__setattr__(self, "attack_scores", a)
        object.__setattr__(self, "bonafide_scores", b)
        if a.size and not np.all(np.isfinite(a)):
            raise ValueError("attack scores must be finite")
        if b.size and not np.all(np.isfinite(b)):
            raise ValueError("bona fide scores must be finite")

    def require_nonempty(self, which="both"):
        if which in ("both", "attack") and self.attack_scores.size == 0:
            raise EmptyScores("no attack scores")
        if which in ("both", "bonafide") and self.bonafide_scores.size == 0:
            raise EmptyScores("no bona fide scores")


def apcer(scores: ScoreSet, tau: float) -> float:
    """Fraction of attacks misclassified as bona fide (score < tau)."""
    scores.require_nonempty("attack")
    a = scores.attack_scores
    return float(np.count_nonzero(a < tau) / a.size)


def bpcer(scores: ScoreSet, tau: float) -> float:
    """Fraction of bona fides misclassified as attack (score >= tau)."""
    scores.require_nonempty("bonafide")
    b = scores.bonafide_scores
    return float(np.count_nonzero(b >= tau) / b.size)


def candidate_thresholds(scores: ScoreSet) -> np.ndarray:
    """Every distinct score, adjacent midpoints, and -inf/+inf sentinels."""
    scores.require_nonempty()
    distinct = np.unique(
        np.concatenate([scores.attack_scores, scores.bonafide_scores])
    )
    mids = (distinct[:-1] + distinct[1:]) / 2.0
    return np.concatenate(([-np.inf], np.sort(np.concatenate([distinct, mids])), [np.inf]))


@dataclass(frozen=True)
class DetCurve:
    """Threshold sweep: (threshold, apcer, bpcer) sorted by threshold."""

    points: tuple  # of (tau, apcer, bpcer)


def _swept_rates(scores: ScoreSet, taus: np.ndarray):
    """APCER/BPCER at many thresholds via sorted-rank lookups."""
    a = np.sort(scores.attack_scores)
    b = np.sort(scores.bonafide_scores)
    apcers = np.searchsorted(a, taus, side="left") / a.size
    bpcers = (b.size - np.searchsorted(b, taus, side="left")) / b.size
    return apcers, bpcers


def det_curve(scores: ScoreSet) -> DetCurve:
    """One (apcer, bpcer) point per candidate threshold, ascending."""
    taus = candidate_thresholds(scores)
    apcers, bpcers = _swept_rates(scores, taus)
    return DetCurve(
        points=tuple(
            (float(t), float(a), float(b)) for t, a, b in zip(taus, apcers, bpcers)
        )
    )


def d_eer(scores: ScoreSet) -> tuple[float, float]:
    """Equal-error rate and its threshold.

    Returns (eer, threshold) where eer = (APCER + BPCER) / 2 at the swept
    optimum described in the module docstring.
    """
    taus = candidate_thresholds(scores)
    apcers, bpcers = _swept_rates(scores, taus)
    hter = (apcers + bpcers) / 2.0
    imbalance = np.abs(apcers - bpcers)
    best = min(range(taus.size), key=lambda i: (hter[i], imbalance[i], taus[i]))
    return float(hter[best]), float(taus[best])


@dataclass(frozen=True)
class BpcerAtApcer:
    """BPCER at the most permissive threshold keeping APCER within target."""

    rate: float
    threshold: float
    achievable: bool  # False would mean no candidate satisfied the target


def bpcer_at_apcer(scores: ScoreSet, target: float) -> BpcerAtApcer:
    """BPCER at the highest threshold whose APCER does not exceed target."""
    if not 0.0 < target < 1.0:
        raise ValueError("target APCER must lie in (0, 1)")
    taus = candidate_thresholds(scores)
    apcers, bpcers = _swept_rates(scores, taus)
    feasible = np.nonzero(apcers <= target)[0]
    if feasible.size:
        i = feasible[-1]  # taus ascend, so this is the most permissive one
        return BpcerAtApcer(rate=float(bpcers[i]), threshold=float(taus[i]), achievable=True)
    return BpcerAtApcer(rate=float(bpcers[-1]), threshold=float(taus[-1]), achievable=False)


@dataclass(frozen=True)
class MetricsReport:
    """Summary of one score set: D-EER, BPCER@APCER points, full DET curve."""

    d_eer: float
    eer_threshold: float
    bpcer_at_apcer: dict  # target rate -> BpcerAtApcer
    curve: DetCurve
    n_attack: int
    n_bonafide: int


DEFAULT_APCER_TARGETS = (0.05, 0.10)


def metrics_report(scores: ScoreSet, targets=DEFAULT_APCER_TARGETS) -> MetricsReport:
    """Compute the full report for one score set."""
    scores.require_nonempty()
    eer, tau = d_eer(scores)
    return MetricsReport(
        d_eer=eer,
        eer_threshold=tau,
        bpcer_at_apcer={t: bpcer_at_apcer(scores, t) for t in targets},
        curve=det_curve(scores),
        n_attack=int(scores.attack_scores.size),
        n_bonafide=int(scores.bonafide_scores.size),
    )


def report_to_dict(report: MetricsReport) -> dict:
    """JSON-ready dict mirroring MetricsReport (curve omitted; see DET CSV)."""
    return {
        "d_eer": report.d_eer,
        "eer_threshold": report.eer_threshold,
        "bpcer_at_apcer": {
            f"{target:g}": {
                "rate": point.rate,
                "threshold": point.threshold,
                "achievable": point.achievable,
            }
            for target, point in sorted(report.bpcer_at_apcer.items())
        },
        "n_attack": report.n_attack,
        "n_bonafide": report.n_bonafide,
    }
