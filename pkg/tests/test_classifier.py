import numpy as np
import pytest
from scipy.stats import spearmanr

from morphscat.classifier import (
    KernelSpec,
    SrkdaModel,
    gram_matrix,
    median_pairwise_distance,
    resolve_bandwidth,
    srkda_project,
    srkda_project_batch,
    srkda_train,
)
from morphscat.errors import DimensionMismatch, SingleClassError

import oracles


def two_gaussian_data(rng, n_per, dim=5, separation=1.5):
    X = np.vstack([
        rng.normal(-separation, 1.0, (n_per, dim)),
        rng.normal(separation, 1.0, (n_per, dim)),
    ])
    labels = ["bonafide"] * n_per + ["morph"] * n_per
    return X, labels


# ---------------------------------------------------------------------------
# gram matrix / kernels


def test_gaussian_gram_diagonal_is_one():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((6, 4))
    K = gram_matrix(X, KernelSpec("gaussian", bandwidth=1.3))
    assert np.allclose(np.diag(K), 1.0)
    assert np.array_equal(K, K.T)


def test_linear_gram_orthonormal_is_identity():
    X = np.eye(4)
    K = gram_matrix(X, KernelSpec("linear"))
    assert np.allclose(K, np.eye(4))


def test_gaussian_offdiagonal_formula():
    d, sigma = 3.0, 2.0
    X = np.array([[0.0, 0.0], [d, 0.0]])
    K = gram_matrix(X, KernelSpec("gaussian", bandwidth=sigma))
    assert K[0, 1] == pytest.approx(np.exp(-(d**2) / (2 * sigma**2)), rel=1e-12)


def test_gram_needs_two_samples():
    with pytest.raises(DimensionMismatch):
        gram_matrix(np.ones((1, 3)), KernelSpec())


@pytest.mark.parametrize("n", [5, 50, 200])
def test_median_heuristic_matches_brute_force(n):
    rng = np.random.default_rng(n)
    X = rng.standard_normal((n, 7))
    dists = [
        float(np.linalg.norm(X[i] - X[j]))
        for i in range(n)
        for j in range(i + 1, n)
    ]
    assert median_pairwise_distance(X) == pytest.approx(np.median(dists), rel=1e-12)


def test_resolve_bandwidth_identical_rows_falls_back():
    X = np.ones((4, 3))
    spec = resolve_bandwidth(KernelSpec(), X)
    assert spec.bandwidth == 1.0


def test_kernel_spec_validation():
    with pytest.raises(ValueError):
        KernelSpec("rbf")
    with pytest.raises(ValueError):
        KernelSpec("gaussian", bandwidth=-1.0)


# ---------------------------------------------------------------------------
# training basics


def test_two_sample_polarity_contract():
    X = np.array([[0.0, 1.0], [5.0, 2.0]])
    model = srkda_train(X, ["morph", "bonafide"])
    assert srkda_project(model, X[0]) > srkda_project(model, X[1])


def test_duplicated_feature_across_classes_trains():
    X = np.ones((4, 3))
    model = srkda_train(X, ["morph", "morph", "bonafide", "bonafide"])
    assert np.all(np.isfinite(model.alpha))
    assert model.solver_residual < 1e-8


def test_single_class_rejected():
    X = np.random.default_rng(1).standard_normal((4, 2))
    with pytest.raises(SingleClassError):
        srkda_train(X, ["morph"] * 4)


def test_solver_residual_bound():
    rng = np.random.default_rng(2)
    X, labels = two_gaussian_data(rng, 20)
    model = srkda_train(X, labels)
    assert model.solver_residual < 1e-8


def test_response_vector_mean_zero_reflected_in_alpha():
    # sum of the balanced responses is zero, so projections are centered:
    # alpha solves an SPD system against a mean-zero right-hand side.
    rng = np.random.default_rng(3)
    X, labels = two_gaussian_data(rng, 10)
    model = srkda_train(X, labels)
    m, b = model.class_means
    assert model.polarity * (m - b) >= 0


def test_permutation_invariance_of_scores():
    rng = np.random.default_rng(4)
    X, labels = two_gaussian_data(rng, 12)
    x_query = rng.standard_normal(X.shape[1])
    model = srkda_train(X, labels)
    perm = rng.permutation(len(labels))
    model_p = srkda_train(X[perm], [labels[i] for i in perm])
    assert srkda_project(model, x_query) == pytest.approx(
        srkda_project(model_p, x_query), abs=1e-10
    )
    assert np.allclose(model.alpha[perm], model_p.alpha, atol=1e-12)


def test_projection_deterministic_and_length_checked():
    rng = np.random.default_rng(5)
    X, labels = two_gaussian_data(rng, 8)
    model = srkda_train(X, labels)
    assert srkda_project(model, X[0]) == srkda_project(model, X[0].copy())
    with pytest.raises(DimensionMismatch):
        srkda_project(model, np.zeros(X.shape[1] + 1))


def test_zero_alpha_model_scores_zero():
    rng = np.random.default_rng(6)
    X, labels = two_gaussian_data(rng, 6)
    model = srkda_train(X, labels)
    degenerate = SrkdaModel(
        training_features=model.training_features,
        alpha=np.zeros_like(model.alpha),
        kernel=model.kernel,
        polarity=model.polarity,
        delta=model.delta,
        class_means=(0.0, 0.0),
        solver_residual=0.0,
    )
    assert srkda_project(degenerate, X[0]) == 0.0
    assert srkda_project(degenerate, np.full(X.shape[1], 1e6)) == 0.0


def test_separable_fixture_training_scores_ordered():
    rng = np.random.default_rng(7)
    morph = rng.normal(10.0, 0.5, (10, 4))
    bona = rng.normal(0.0, 0.5, (10, 4))
    X = np.vstack([morph, bona])
    labels = ["morph"] * 10 + ["bonafide"] * 10
    model = srkda_train(X, labels)
    scores = srkda_project_batch(model, X)
    assert scores[:10].min() > scores[10:].max()


def test_rank_order_stable_under_feature_scaling():
    # gaussian kernel + median heuristic rescales with the data, so ranks hold
    rng = np.random.default_rng(8)
    X, labels = two_gaussian_data(rng, 15)
    queries = rng.standard_normal((10, X.shape[1]))
    base = srkda_project_batch(srkda_train(X, labels), queries)
    scaled = srkda_project_batch(srkda_train(1000.0 * X, labels), 1000.0 * queries)
    assert np.array_equal(np.argsort(base), np.argsort(scaled))


# ---------------------------------------------------------------------------
# against the dense generalized-eigenproblem oracle


def test_scores_match_kda_eigen_oracle():
    rng = np.random.default_rng(42)
    n_per = 20
    X, labels = two_gaussian_data(rng, n_per)
    X_test = np.vstack([
        rng.normal(-1.5, 1.0, (10, 5)),
        rng.normal(1.5, 1.0, (10, 5)),
    ])
    model = srkda_train(X, labels, delta=0.01)
    ours = srkda_project_batch(model, X_test)
    is_attack = np.array([lab == "morph" for lab in labels])
    ref = oracles.kda_eigen_scores(
        X, is_attack, X_test,
        bandwidth=model.kernel.bandwidth,
        reg=0.01 * len(labels),
    )
    rho = spearmanr(ours, ref).statistic
    assert rho >= 0.999
