"""End-to-end differential morph detection flow.

For each image of a pair: YCbCr decomposition, per-channel Laplacian
filtering, scattering features. The pair is summarized by the elementwise
absolute difference of the two feature vectors per channel; one kernel
discriminant per channel scores that difference, and the three channel
scores are fused by plain summation. A pair is called a morph when the
fused score reaches the model's stored threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import metrics
from .classifier import (
    DEFAULT_DELTA,
    KernelSpec,
    SrkdaModel,
    srkda_project,
    srkda_train,
)
from .errors import ConfigMismatch, DimensionMismatch, SingleClassError
from .imgproc import FaceCrop, filter_channels, rgb_to_ycbcr
from .scattering import FilterBank, feature_vector, scattering_transform

CHANNELS = ("y", "cb", "cr")

MORPH = "morph"
BONAFIDE = "bonafide"


@dataclass(frozen=True)
class PairFeatures:
    """Unsigned per-channel scattering-feature differences of one pair."""

    pair_id: str
    fd_y: np.ndarray
    fd_cb: np.ndarray
    fd_cr: np.ndarray
    config_hash: bytes

    def __post_init__(self):
        if not (self.fd_y.shape == self.fd_cb.shape == self.fd_cr.shape):
            raise DimensionMismatch("channel difference vectors differ in length")

    def channel(self, name: str) -> np.ndarray:
        return {"y": self.fd_y, "cb": self.fd_cb, "cr": self.fd_cr}[name]

    @property
    def length(self) -> int:
        return int(self.fd_y.size)


@dataclass(frozen=True)
class FusedScore:
    """Per-channel scores and their sum."""

    s1: float
    s2: float
    s3: float

    @property
    def fused(self) -> float:
        return self.s1 + self.s2 + self.s3


@dataclass(frozen=True)
class DmadModel:
    """Three trained channel discriminants plus the decision threshold."""

    channel_models: dict  # channel name -> SrkdaModel
    config_hash: bytes
    tau: float
    score_ranges: dict | None  # channel -> (min, max) when normalization is on
    metadata: dict

    def __post_init__(self):
        if set(self.channel_models) != set(CHANNELS):
            raise DimensionMismatch("need one model per channel (y, cb, cr)")
        if not np.isfinite(self.tau):
            raise ValueError("decision threshold must be finite")


def channel_feature_vectors(crop: FaceCrop, bank: FilterBank):
    """Scattering feature vectors of the Laplacian-filtered Y/Cb/Cr planes."""
    filtered = filter_channels(rgb_to_ycbcr(crop))
    out = []
    for plane in (filtered.ly, filtered.lcb, filtered.lcr):
        out.append(feature_vector(scattering_transform(plane, bank)).values)
    return tuple(out)


def extract_pair_features(
    suspicious: FaceCrop, trusted: FaceCrop, bank: FilterBank, pair_id: str = ""
) -> PairFeatures:
    """Absolute per-channel feature differences between the two crops."""
    ws = channel_feature_vectors(suspicious, bank)
    wt = channel_feature_vectors(trusted, bank)
    fd = [np.abs(a - b) for a, b in zip(ws, wt)]
    return PairFeatures(
        pair_id=pair_id,
        fd_y=fd[0],
        fd_cb=fd[1],
        fd_cr=fd[2],
        config_hash=bank.config.config_hash(),
    )


def _check_hash(expected: bytes, got: bytes, what: str):
    if expected != got:
        raise ConfigMismatch(f"{what} produced under a different scattering config")


def _raw_channel_scores(channel_models: dict, pf: PairFeatures):
    return tuple(
        srkda_project(channel_models[c], pf.channel(c)) for c in CHANNELS
    )


def _normalize(value: float, lo: float, hi: float) -> float:
    if hi > lo:
        return (value - lo) / (hi - lo)
    return 0.0


def score_pair(model: DmadModel, pf: PairFeatures) -> FusedScore:
    """Per-channel projections and their sum for one pair."""
    _check_hash(model.config_hash, pf.config_hash, "pair features")
    raw = _raw_channel_scores(model.channel_models, pf)
    if model.score_ranges is not None:
        raw = tuple(
            _normalize(v, *model.score_ranges[c]) for v, c in zip(raw, CHANNELS)
        )
    if not all(np.isfinite(raw)):
        raise ValueError(f"non-finite channel score for pair {pf.pair_id!r}")
    return FusedScore(s1=raw[0], s2=raw[1], s3=raw[2])


def decide(model: DmadModel, fs: FusedScore) -> str:
    """"morph" when the fused score reaches the threshold, else "bonafide"."""
    return MORPH if fs.fused >= model.tau else BONAFIDE


def train_dmad(
    pairs,
    kernel: KernelSpec | None = None,
    delta: float = DEFAULT_DELTA,
    threshold_policy="train-eer",
    normalize_scores: bool = False,
    metadata: dict | None = None,
) -> DmadModel:
    """Train the three channel discriminants and fix the fused threshold.

    ``pairs`` is a sequence of (PairFeatures, label) with labels
    "morph"/"bonafide"; both classes must be present. ``threshold_policy``
    is either "train-eer" (threshold at the fused-score equal-error point of
    the training set) or an explicit numeric threshold.
    """
    pairs = list(pairs)
    if not pairs:
        raise SingleClassError("no training pairs")
    hashes = {pf.config_hash for pf, _ in pairs}
    if len(hashes) != 1:
        raise ConfigMismatch("training pairs mix scattering configs")
    config_hash = hashes.pop()
    if len({pf.length for pf, _ in pairs}) != 1:
        raise DimensionMismatch("training pairs have inconsistent feature lengths")
    labels = [label for _, label in pairs]

    channel_models: dict[str, SrkdaModel] = {}
    for c in CHANNELS:
        X = np.stack([pf.channel(c) for pf, _ in pairs])
        channel_models[c] = srkda_train(X, labels, kernel=kernel, delta=delta)

    raw_scores = np.array(
        [_raw_channel_scores(channel_models, pf) for pf, _ in pairs]
    )
    score_ranges = None
    if normalize_scores:
        score_ranges = {
            c: (float(raw_scores[:, i].min()), float(raw_scores[:, i].max()))
            for i, c in enumerate(CHANNELS)
        }
        raw_scores = np.array(
            [
                [_normalize(v, *score_ranges[c]) for v, c in zip(row, CHANNELS)]
                for row in raw_scores
            ]
        )
    fused = raw_scores.sum(axis=1)

    if threshold_policy == "train-eer":
        is_morph = np.array([lab == MORPH for lab in labels])
        score_set = metrics.ScoreSet(
            attack_scores=fused[is_morph], bonafide_scores=fused[~is_morph]
        )
        _, tau = metrics.d_eer(score_set)
        if not np.isfinite(tau):  # degenerate all-equal training scores
            tau = float(fused.min()) if tau == -np.inf else float(fused.max() + 1.0)
    else:
        tau = float(threshold_policy)

    return DmadModel(
        channel_models=channel_models,
        config_hash=config_hash,
        tau=float(tau),
        score_ranges=score_ranges,
        metadata=dict(metadata or {}),
    )
