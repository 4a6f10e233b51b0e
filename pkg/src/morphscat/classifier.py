"""Two-class kernel discriminant scoring via spectral regression.

Training builds the kernel Gram matrix, forms the balanced class-indicator
response (mean-zero: +1/n_morph on morph rows, -1/n_bonafide on bona fide
rows), and solves the ridge-regularized kernel system
(K + delta * n * I) alpha = y with a Cholesky factorization. The projection
f(x) = sum_i alpha_i k(x, x_i) is the discriminant; a polarity sign learned
from the projected class means makes "higher score = morph" a hard contract
for everything downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as sla

from .errors import DimensionMismatch, SingleClassError, SolverError

MORPH = "morph"
BONAFIDE = "bonafide"

DEFAULT_DELTA = 0.01


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and bandwidth. bandwidth=None means the median heuristic."""

    kind: str = "gaussian"  # "gaussian" or "linear"
    bandwidth: float | None = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "linear"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValueError("explicit bandwidth must be positive")


def _as_matrix(features) -> np.ndarray:
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatch("expected a 2D (n_samples, n_features) array")
    return X


def pairwise_sq_dists(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances between rows of A and rows of B."""
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(
            f"feature lengths differ: {A.shape[1]} vs {B.shape[1]}"
        )
    aa = np.sum(A * A, axis=1)[:, None]
    bb = np.sum(B * B, axis=1)[None, :]
    d2 = aa + bb - 2.0 * (A @ B.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def median_pairwise_distance(X: np.ndarray) -> float:
    """Median of the strict upper-triangle pairwise distances."""
    X = _as_matrix(X)
    n = X.shape[0]
    if n < 2:
        raise DimensionMismatch("median heuristic needs at least two samples")
    d2 = pairwise_sq_dists(X, X)
    iu = np.triu_indices(n, k=1)
    return float(np.median(np.sqrt(d2[iu])))


def resolve_bandwidth(kernel: KernelSpec, X: np.ndarray) -> KernelSpec:
    """Replace a median-heuristic bandwidth with its concrete value."""
    if kernel.kind != "gaussian" or kernel.bandwidth is not None:
        return kernel
    med = median_pairwise_distance(X)
    if med == 0.0:
        med = 1.0  # all training vectors identical; any positive width works
    return replace(kernel, bandwidth=med)


def kernel_apply(kernel: KernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Kernel values k(a_i, b_j) as an (len(A), len(B)) matrix."""
    A, B = _as_matrix(A), _as_matrix(B)
    if kernel.kind == "linear":
        if A.shape[1] != B.shape[1]:
            raise DimensionMismatch("feature lengths differ")
        return A @ B.T
    if kernel.bandwidth is None:
        raise ValueError("gaussian kernel bandwidth not resolved")
    d2 = pairwise_sq_dists(A, B)
    return np.exp(-d2 / (2.0 * kernel.bandwidth**2))


def gram_matrix(features, kernel: KernelSpec) -> np.ndarray:
    """Symmetric kernel Gram matrix of a training set (n >= 2)."""
    X = _as_matrix(features)
    if X.shape[0] < 2:
        raise DimensionMismatch("gram matrix needs at least two samples")
    kernel = resolve_bandwidth(kernel, X)
    K = kernel_apply(kernel, X, X)
    # force exact symmetry against FP drift in the matmul path
    return (K + K.T) / 2.0


@dataclass(frozen=True)
class SrkdaModel:
    """Trained two-class kernel discriminant."""

    training_features: np.ndarray  # (n, d)
    alpha: np.ndarray              # (n,)
    kernel: KernelSpec             # bandwidth resolved
    polarity: int                  # +1/-1 so that higher projection = morph
    delta: float
    class_means: tuple[float, float]  # (morph, bonafide) raw projected means
    solver_residual: float

    @property
    def n_train(self) -> int:
        return self.training_features.shape[0]


def srkda_train(features, labels, kernel: KernelSpec | None = None,
                delta: float = DEFAULT_DELTA) -> SrkdaModel:
    """Fit the discriminant on labeled feature vectors.

    labels are "morph"/"bonafide" strings; both classes must be present and
    delta must be positive (it keeps the system positive definite even with
    duplicated rows).
    """
    X = _as_matrix(features)
    labels = list(labels)
    if len(labels) != X.shape[0]:
        raise DimensionMismatch("one label per feature vector required")
    if delta <= 0:
        raise ValueError("delta must be positive")
    is_morph = np.array([lab == MORPH for lab in labels])
    n_morph = int(is_morph.sum())
    n_bona = int((~is_morph).sum())
    if n_morph == 0 or n_bona == 0:
        raise SingleClassError(
            f"need both classes, got {n_morph} morph / {n_bona} bonafide"
        )

    kernel = resolve_bandwidth(kernel or KernelSpec(), X)
    K = gram_matrix(X, kernel)
    n = X.shape[0]
    y = np.where(is_morph, 1.0 / n_morph, -1.0 / n_bona)

    system = K + delta * n * np.eye(n)
    try:
        cho = sla.cho_factor(system, lower=True)
        alpha = sla.cho_solve(cho, y)
    except sla.LinAlgError as exc:  # pragma: no cover - delta > 0 keeps SPD
        raise SolverError(f"kernel system not positive definite: {exc}") from exc
    residual = float(np.max(np.abs(system @ alpha - y)))

    projections = K @ alpha
    morph_mean = float(projections[is_morph].mean())
    bona_mean = float(projections[~is_morph].mean())
    polarity = 1 if morph_mean >= bona_mean else -1

    return SrkdaModel(
        training_features=X,
        alpha=alpha,
        kernel=kernel,
        polarity=polarity,
        delta=float(delta),
        class_means=(morph_mean, bona_mean),
        solver_residual=residual,
    )


def srkda_project(model: SrkdaModel, x) -> float:
    """Signed discriminant score of one feature vector (higher = morph)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.training_features.shape[1]:
        raise DimensionMismatch(
            f"expected feature length {model.training_features.shape[1]}"
        )
    k_row = kernel_apply(model.kernel, x[None, :], model.training_features)[0]
    return float(model.polarity * (k_row @ model.alpha))


def srkda_project_batch(model: SrkdaModel, X) -> np.ndarray:
    """Vectorized projection of many feature vectors."""
    X = _as_matrix(X)
    if X.shape[1] != model.training_features.shape[1]:
        raise DimensionMismatch("feature length mismatch")
    K = kernel_apply(model.kernel, X, model.training_features)
    return model.polarity * (K @ model.alpha)
