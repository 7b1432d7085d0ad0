import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import multivariate_normal

from ising_ssl.dataset import generate_blobs
from ising_ssl.similarity import (
    DiagonalGaussian,
    GaussianMixture,
    PruneWarning,
    ReciprocalDistance,
    coupling,
    knn_mask,
    model_from_dict,
    prune_connectivity,
    rescale,
    save_matrix_csv,
    similarity_matrix,
)


def random_S(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.random((n, n))
    S = A + A.T
    np.fill_diagonal(S, 0)
    return S


def test_reciprocal_coincident_points():
    S = similarity_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]), ReciprocalDistance(2.0, 1.0))
    assert S[0, 1] == 2.0


@pytest.mark.parametrize("model", [
    ReciprocalDistance(1.5, 0.5),
    GaussianMixture(np.eye(2)[None], np.array([1.0])),
    DiagonalGaussian(np.array([[1.0, 2.0], [0.5, 0.3]]), np.array([0.4, 0.6])),
])
def test_zero_diagonal_and_symmetry(model):
    X = np.random.default_rng(0).normal(size=(7, 2))
    S = similarity_matrix(X, model)
    assert np.all(np.diag(S) == 0)
    np.testing.assert_array_equal(S, S.T)
    assert np.all(S >= 0)


def test_gaussian_unit_distance_against_density():
    X = np.array([[0.0, 0.0], [0.6, 0.8]])
    S = similarity_matrix(X, GaussianMixture(np.eye(2)[None], np.array([1.0])))
    assert S[0, 1] == pytest.approx(math.exp(-0.5) / (2 * math.pi), rel=1e-14)


def test_gaussian_mixture_against_scipy():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(5, 3))
    covs = []
    for _ in range(2):
        A = rng.normal(size=(3, 3))
        covs.append(A @ A.T + np.eye(3))
    w = np.array([0.3, 0.7])
    S = similarity_matrix(X, GaussianMixture(np.array(covs), w))
    for i in range(5):
        for j in range(5):
            if i != j:
                ref = sum(w[k] * multivariate_normal(np.zeros(3), covs[k]).pdf(X[i] - X[j]) for k in range(2))
                assert S[i, j] == pytest.approx(ref, rel=1e-12)


def test_diagonal_gaussian_matches_general_form():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(6, 2))
    scales = np.array([[0.7, 1.3], [2.0, 0.4]])
    w = np.array([0.25, 0.75])
    covs = np.array([np.diag(s**2) for s in scales])
    np.testing.assert_allclose(
        similarity_matrix(X, DiagonalGaussian(scales, w)),
        similarity_matrix(X, GaussianMixture(covs, w)),
        rtol=1e-12,
    )


def test_diagonal_gaussian_with_correlation():
    X = np.random.default_rng(3).normal(size=(4, 2))
    model = DiagonalGaussian(np.array([[1.0, 2.0]]), np.array([1.0]), np.array([0.5]))
    cov = np.array([[1.0, 1.0], [1.0, 4.0]])
    ref = multivariate_normal(np.zeros(2), cov).pdf(X[0] - X[1])
    assert similarity_matrix(X, model)[0, 1] == pytest.approx(ref, rel=1e-12)


def test_diagonal_gaussian_gradient_finite_difference():
    X = np.random.default_rng(4).normal(size=(5, 2))
    model = DiagonalGaussian(np.array([[0.8, 1.1], [1.4, 0.6]]), np.array([0.5, 0.5]))
    g = model.pairwise_grad(X)
    theta = model.params()
    for j in range(theta.size):
        e = np.zeros_like(theta)
        e[j] = 1e-6
        fd = (model.with_params(theta + e).pairwise(X) - model.with_params(theta - e).pairwise(X)) / 2e-6
        np.testing.assert_allclose(g[j], fd, atol=1e-8)


def test_reciprocal_gradient_finite_difference():
    X = np.random.default_rng(6).normal(size=(5, 2))
    model = ReciprocalDistance(1.3, 0.7)
    g = model.pairwise_grad(X)
    for j in range(2):
        e = np.zeros(2)
        e[j] = 1e-6
        fd = (model.with_params(model.params() + e).pairwise(X) - model.with_params(model.params() - e).pairwise(X)) / 2e-6
        np.testing.assert_allclose(g[j], fd, atol=1e-8)


def test_not_positive_definite():
    with pytest.raises(ValueError, match="positive definite"):
        GaussianMixture(np.array([[[1.0, 2.0], [2.0, 1.0]]]), np.array([1.0]))
    with pytest.raises(ValueError):
        ReciprocalDistance(0.0, 1.0)
    with pytest.raises(ValueError):
        DiagonalGaussian(np.array([[1.0, -1.0]]), np.array([1.0]))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_reciprocal_monotone(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(3, 2))
    d = np.linalg.norm(X[0] - X[1:], axis=1)
    if abs(d[0] - d[1]) < 1e-9:
        return
    S = similarity_matrix(X, ReciprocalDistance(rng.uniform(0.1, 3), rng.uniform(0.1, 3)))
    assert (S[0, 1] > S[0, 2]) == (d[0] < d[1])


def test_model_dict_roundtrip():
    for model in (ReciprocalDistance(2.0, 3.0, 1.0),
                  GaussianMixture(np.eye(2)[None] * 2, np.array([1.0])),
                  DiagonalGaussian(np.array([[1.0, 2.0]]), np.array([1.0]))):
        back = model_from_dict(model.to_dict())
        assert back.to_dict() == model.to_dict()


def test_from_labeled_initialisation():
    ds = generate_blobs([[0, 0], [5, 5]], 20, 0.5, seed=0)
    dg = DiagonalGaussian.from_labeled(ds)
    assert dg.scales.shape == (2, 2)
    np.testing.assert_allclose(dg.weights, [0.5, 0.5])
    gm = GaussianMixture.from_labeled(ds)
    assert gm.covs.shape == (2, 2, 2)


def test_knn_full_mask():
    S = random_S(6, 0)
    M = knn_mask(S, 5)
    np.testing.assert_array_equal(M, 1 - np.eye(6, dtype=int))


def test_knn_three_points():
    S = np.array([[0, 3, 1], [3, 0, 2], [1, 2, 0]], dtype=float)
    M = knn_mask(S, 1)
    assert M[0, 1] == M[1, 0] == 1
    # point 3's nearest is point 2, so (1,3) stays empty
    assert M[0, 2] == 0 and M[1, 2] == 1


def test_knn_against_row_sort_oracle():
    S = random_S(8, 1)
    xi = 3
    Mp = np.zeros((8, 8), dtype=int)
    for i in range(8):
        others = sorted((j for j in range(8) if j != i), key=lambda j: (-S[i, j], j))
        for j in others[:xi]:
            Mp[i, j] = 1
    np.testing.assert_array_equal(knn_mask(S, xi), Mp | Mp.T)


def test_knn_ties_prefer_smaller_column():
    S = np.ones((4, 4)) - np.eye(4)
    M = knn_mask(S, 1)
    # every other row picks column 0, row 0 picks column 1
    np.testing.assert_array_equal(M[0], [0, 1, 1, 1])
    assert M[1, 2] == M[1, 3] == M[2, 3] == 0


@settings(max_examples=30, deadline=None)
@given(n=st.integers(3, 12), seed=st.integers(0, 1000), data=st.data())
def test_knn_row_budget(n, seed, data):
    xi = data.draw(st.integers(1, n - 1))
    S = random_S(n, seed)
    M = knn_mask(S, xi)
    assert np.all(M.sum(axis=1) >= xi)
    np.testing.assert_array_equal(M, M.T)
    assert np.all(np.diag(M) == 0)
    J = coupling(S, M)
    assert np.all(J <= S)


def test_knn_range():
    with pytest.raises(ValueError):
        knn_mask(random_S(4, 0), 4)
    with pytest.raises(ValueError):
        knn_mask(random_S(4, 0), 0)


def test_coupling_identities():
    S = random_S(5, 2)
    assert np.all(coupling(S, np.zeros((5, 5))) == 0)
    np.testing.assert_array_equal(coupling(S, 1 - np.eye(5)), S)
    with pytest.raises(ValueError, match="shape"):
        coupling(S, np.zeros((4, 4)))


def test_coupling_chain_hand_oracle():
    X = np.array([[0.0], [1.0], [3.0], [7.0]])
    S = similarity_matrix(X, ReciprocalDistance())
    J = coupling(S, knn_mask(S, 1))
    # nearest: 0->1, 1->0, 2->1, 3->2
    expected = {(0, 1), (1, 2), (2, 3)}
    got = {(i, j) for i in range(4) for j in range(i + 1, 4) if J[i, j] != 0}
    assert got == expected


def test_prune_noop():
    J = coupling(random_S(6, 0), knn_mask(random_S(6, 0), 2))
    deg = (J != 0).sum(axis=1).max()
    np.testing.assert_array_equal(prune_connectivity(J, deg), J)


def test_prune_star():
    J = np.zeros((6, 6))
    J[0, 1:] = J[1:, 0] = 1.0
    J[1, 2] = J[2, 1] = 1.0  # keep spokes removable without isolating
    out = prune_connectivity(J, 4, seed=0)
    assert (J != 0).sum() - (out != 0).sum() == 2  # one symmetric pair
    assert (out != 0).sum(axis=1).max() <= 4
    again = prune_connectivity(J, 4, seed=0)
    np.testing.assert_array_equal(out, again)


def _reaches_labeled(J, labeled):
    # union-find oracle
    parent = list(range(len(J)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in zip(*np.nonzero(J)):
        parent[find(i)] = find(j)
    roots = {find(i) for i in np.flatnonzero(labeled)}
    return np.array([find(i) in roots for i in range(len(J))])


@pytest.mark.parametrize("seed", range(5))
def test_prune_random_keeps_reachability(seed):
    X = np.random.default_rng(seed).normal(size=(10, 2))
    S = similarity_matrix(X, ReciprocalDistance())
    J = coupling(S, knn_mask(S, 5))
    labeled = np.arange(10) < 3
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        out = prune_connectivity(J, 3, seed=seed, labeled=labeled)
    np.testing.assert_array_equal(out, out.T)
    assert np.all(_reaches_labeled(out, labeled) >= _reaches_labeled(J, labeled))
    if not any(issubclass(w.category, PruneWarning) for w in caught):
        assert (out != 0).sum(axis=1).max() <= 3


def test_prune_warns_when_infeasible():
    # a star whose leaves depend on the center for reachability
    J = np.zeros((5, 5))
    J[0, 1:] = J[1:, 0] = 1.0
    with pytest.warns(PruneWarning):
        out = prune_connectivity(J, 2, labeled=np.array([True, False, False, False, False]))
    np.testing.assert_array_equal(out, J)


def test_rescale_and_csv(tmp_path):
    J = random_S(4, 3)
    assert np.abs(rescale(J, 2.0)).max() == pytest.approx(2.0)
    save_matrix_csv(tmp_path / "j.csv", J)
    np.testing.assert_array_equal(np.loadtxt(tmp_path / "j.csv", delimiter=","), J)
