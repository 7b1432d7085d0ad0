"""Similarity models, nearest-neighbour masks and coupling matrices.

Every model maps a point cloud to a dense symmetric similarity matrix with a
zero diagonal. Models with learnable parameters expose them as a flat
positive vector through ``params()`` / ``with_params()`` and provide the
derivative of ``S`` with respect to each one through ``pairwise_grad``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .dataset import Dataset

_LOG_2PI = np.log(2.0 * np.pi)


class PruneWarning(UserWarning):
    """Connectivity pruning stopped short of the degree budget."""


def _points(data) -> np.ndarray:
    if isinstance(data, Dataset):
        return data.points
    return np.atleast_2d(np.asarray(data, dtype=float))


def _zero_diag(S: np.ndarray) -> np.ndarray:
    np.fill_diagonal(S, 0.0)
    return S


def pairwise_distance(X: np.ndarray, p: float = 2) -> np.ndarray:
    diff = X[:, None, :] - X[None, :, :]
    return np.linalg.norm(diff, ord=p, axis=-1)


@dataclass(frozen=True)
class ReciprocalDistance:
    """``S_ij = beta1 / (beta2 + ||x_i - x_j||_p)``."""

    beta1: float = 1.0
    beta2: float = 1.0
    p: float = 2.0

    family = "reciprocal"
    param_names = ("beta1", "beta2")

    def __post_init__(self):
        if not (self.beta1 > 0 and self.beta2 > 0):
            raise ValueError("beta1 and beta2 must be positive")

    def params(self) -> np.ndarray:
        return np.array([self.beta1, self.beta2], dtype=float)

    def with_params(self, theta) -> "ReciprocalDistance":
        b1, b2 = (float(t) for t in theta)
        return replace(self, beta1=b1, beta2=b2)

    def pairwise(self, X: np.ndarray) -> np.ndarray:
        return _zero_diag(self.beta1 / (self.beta2 + pairwise_distance(X, self.p)))

    def pairwise_grad(self, X: np.ndarray) -> np.ndarray:
        denom = self.beta2 + pairwise_distance(X, self.p)
        g = np.stack([1.0 / denom, -self.beta1 / denom**2])
        for m in g:
            _zero_diag(m)
        return g

    def to_dict(self) -> dict:
        return {"family": self.family, "beta1": self.beta1, "beta2": self.beta2, "p": self.p}


def _gaussian_terms(X, covs, weights):
    """Per-component weighted densities of all pairwise differences, shape (K, n, n)."""
    diff = X[:, None, :] - X[None, :, :]
    d = X.shape[1]
    out = np.empty((len(weights),) + diff.shape[:2])
    for k, (B, w) in enumerate(zip(covs, weights)):
        try:
            L = np.linalg.cholesky(B)
        except np.linalg.LinAlgError:
            raise ValueError(f"covariance of component {k} is not positive definite") from None
        z = np.linalg.solve(L, diff.reshape(-1, d).T).T
        quad = np.einsum("ij,ij->i", z, z).reshape(diff.shape[:2])
        logdet = 2.0 * np.log(np.diag(L)).sum()
        out[k] = w * np.exp(-0.5 * (quad + logdet + d * _LOG_2PI))
    return out


@dataclass(frozen=True)
class GaussianMixture:
    """Mixture of zero-mean Gaussian densities of ``x_i - x_j``.

    ``covs[k]`` is the symmetric positive-definite matrix of component ``k``
    and ``weights[k]`` its label proportion ``n_k / l``. This family has no
    parameters for :mod:`ising_ssl.learning` to tune; build it from class
    covariances with :meth:`from_labeled`.
    """

    covs: np.ndarray
    weights: np.ndarray

    family = "gaussian"
    param_names = ()

    def __post_init__(self):
        covs = np.asarray(self.covs, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if covs.ndim != 3 or covs.shape[1] != covs.shape[2] or covs.shape[0] != weights.shape[0]:
            raise ValueError("covs must be (K, d, d) with one weight per component")
        if not np.allclose(covs, covs.transpose(0, 2, 1)):
            raise ValueError("covariance matrices must be symmetric")
        if np.any(weights < 0) or not np.isclose(weights.sum(), 1.0):
            raise ValueError("weights must be non-negative and sum to 1")
        for k, B in enumerate(covs):
            if np.linalg.eigvalsh(B).min() <= 0:
                raise ValueError(f"covariance of component {k} is not positive definite")
        object.__setattr__(self, "covs", covs)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_labeled(cls, dataset: Dataset, ridge: float = 1e-6) -> "GaussianMixture":
        counts = dataset.label_counts()
        covs = []
        for k in range(dataset.n_labels):
            pts = dataset.labeled_x[dataset.labeled_y == k]
            C = np.cov(pts.T, ddof=0).reshape(dataset.d, dataset.d) if len(pts) > 1 else np.zeros((dataset.d,) * 2)
            covs.append(C + ridge * max(1.0, np.trace(C) / dataset.d) * np.eye(dataset.d))
        return cls(np.array(covs), counts / counts.sum())

    def params(self) -> np.ndarray:
        return np.empty(0)

    def with_params(self, theta) -> "GaussianMixture":
        if len(theta):
            raise ValueError("GaussianMixture has no tunable parameters")
        return self

    def pairwise(self, X: np.ndarray) -> np.ndarray:
        return _zero_diag(_gaussian_terms(X, self.covs, self.weights).sum(axis=0))

    def pairwise_grad(self, X: np.ndarray) -> np.ndarray:
        return np.empty((0, X.shape[0], X.shape[0]))

    def to_dict(self) -> dict:
        return {"family": self.family, "covs": self.covs.tolist(), "weights": self.weights.tolist()}


@dataclass(frozen=True)
class DiagonalGaussian:
    """Gaussian mixture with per-label axis scales ``scales[k, m]``.

    Component ``k`` has covariance ``diag(scales[k]**2)``. In two dimensions
    a per-label correlation ``rho[k]`` may be supplied; it defaults to zero
    (appropriate for PCA-decorrelated data) and is never learned.
    """

    scales: np.ndarray
    weights: np.ndarray
    rho: Optional[np.ndarray] = None

    family = "diagonal_gaussian"

    def __post_init__(self):
        scales = np.atleast_2d(np.asarray(self.scales, dtype=float))
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if scales.shape[0] != weights.shape[0]:
            raise ValueError("one weight per component required")
        if np.any(scales <= 0):
            raise ValueError("scales must be positive")
        if np.any(weights < 0) or not np.isclose(weights.sum(), 1.0):
            raise ValueError("weights must be non-negative and sum to 1")
        rho = np.zeros(len(weights)) if self.rho is None else np.asarray(self.rho, dtype=float)
        if np.any(np.abs(rho) >= 1):
            raise ValueError("rho must lie in (-1, 1)")
        if np.any(rho != 0) and scales.shape[1] != 2:
            raise ValueError("correlation is only supported in two dimensions")
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "rho", rho)

    @classmethod
    def from_labeled(cls, dataset: Dataset, floor: float = 1e-3) -> "DiagonalGaussian":
        """Scales initialised from per-label coordinate standard deviations."""
        counts = dataset.label_counts()
        overall = dataset.labeled_x.std(axis=0) if dataset.l > 1 else np.ones(dataset.d)
        overall = np.where(overall > 0, overall, 1.0)
        scales = []
        for k in range(dataset.n_labels):
            pts = dataset.labeled_x[dataset.labeled_y == k]
            sd = pts.std(axis=0) if len(pts) > 1 else overall
            scales.append(np.maximum(sd, floor * overall))
        return cls(np.array(scales), counts / counts.sum())

    @property
    def param_names(self) -> tuple:
        K, d = self.scales.shape
        return tuple(f"scale[{k}][{m}]" for k in range(K) for m in range(d))

    def params(self) -> np.ndarray:
        return self.scales.reshape(-1).copy()

    def with_params(self, theta) -> "DiagonalGaussian":
        return replace(self, scales=np.asarray(theta, dtype=float).reshape(self.scales.shape))

    def covariances(self) -> np.ndarray:
        covs = np.array([np.diag(s**2) for s in self.scales])
        if np.any(self.rho != 0):
            covs[:, 0, 1] = covs[:, 1, 0] = self.rho * self.scales[:, 0] * self.scales[:, 1]
        return covs

    def _terms(self, X):
        if np.any(self.rho != 0):
            return _gaussian_terms(X, self.covariances(), self.weights)
        diff2 = (X[:, None, :] - X[None, :, :]) ** 2
        d = X.shape[1]
        quad = np.einsum("ijm,km->kij", diff2, 1.0 / self.scales**2)
        norm = self.weights / np.exp(0.5 * d * _LOG_2PI + np.log(self.scales).sum(axis=1))
        return norm[:, None, None] * np.exp(-0.5 * quad)

    def pairwise(self, X: np.ndarray) -> np.ndarray:
        return _zero_diag(self._terms(X).sum(axis=0))

    def pairwise_grad(self, X: np.ndarray) -> np.ndarray:
        if np.any(self.rho != 0):
            raise NotImplementedError("gradient is only available for rho = 0")
        terms = self._terms(X)
        diff2 = (X[:, None, :] - X[None, :, :]) ** 2
        K, d = self.scales.shape
        g = np.empty((K * d,) + terms.shape[1:])
        for k in range(K):
            for m in range(d):
                s = self.scales[k, m]
                g[k * d + m] = _zero_diag(terms[k] * (diff2[..., m] / s**3 - 1.0 / s))
        return g

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "scales": self.scales.tolist(),
            "weights": self.weights.tolist(),
            "rho": self.rho.tolist(),
        }


SimilarityModel = Union[ReciprocalDistance, GaussianMixture, DiagonalGaussian]


def model_from_dict(doc: dict) -> SimilarityModel:
    family = doc["family"]
    if family == "reciprocal":
        return ReciprocalDistance(doc["beta1"], doc["beta2"], doc.get("p", 2.0))
    if family == "gaussian":
        return GaussianMixture(np.array(doc["covs"]), np.array(doc["weights"]))
    if family == "diagonal_gaussian":
        return DiagonalGaussian(np.array(doc["scales"]), np.array(doc["weights"]), np.array(doc["rho"]))
    raise ValueError(f"unknown similarity family {family!r}")


def similarity_matrix(data, model: SimilarityModel) -> np.ndarray:
    """Dense ``S`` over all points of ``data`` (a Dataset or an ``(n, d)`` array)."""
    S = model.pairwise(_points(data))
    if not np.all(np.isfinite(S)) or np.any(S < 0):
        raise ValueError("similarity produced negative or non-finite entries")
    return 0.5 * (S + S.T)


def knn_mask(S: np.ndarray, xi: int) -> np.ndarray:
    """Symmetric 0/1 mask keeping each row's ``xi`` most similar entries.

    Ties prefer the smaller column index. The union with the transpose means
    a row may end up with more than ``xi`` ones, never fewer.
    """
    S = np.asarray(S, dtype=float)
    n = S.shape[0]
    if not 1 <= xi <= n - 1:
        raise ValueError(f"xi must lie in [1, {n - 1}], got {xi}")
    key = -S.copy()
    np.fill_diagonal(key, np.inf)
    top = np.argsort(key, axis=1, kind="stable")[:, :xi]
    M = np.zeros((n, n), dtype=np.int8)
    M[np.repeat(np.arange(n), xi), top.reshape(-1)] = 1
    M = M | M.T
    np.fill_diagonal(M, 0)
    return M


def coupling(S: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Elementwise ``J = M * S``."""
    S = np.asarray(S, dtype=float)
    M = np.asarray(M)
    if S.shape != M.shape:
        raise ValueError(f"shape mismatch: S {S.shape} vs M {M.shape}")
    return _zero_diag(S * M)


def rescale(J: np.ndarray, max_abs: float = 1.0) -> np.ndarray:
    """Scale ``J`` so its largest magnitude equals ``max_abs``."""
    peak = np.abs(J).max()
    return J if peak == 0 else J * (max_abs / peak)


def _n_components_with(J, labeled):
    _, comp = connected_components(csr_matrix(J != 0), directed=False)
    anchored = np.zeros(comp.max() + 1, dtype=bool)
    anchored[comp[labeled]] = True
    return anchored[comp]


def prune_connectivity(
    J: np.ndarray, xi: int, seed: int = 0, labeled: Optional[np.ndarray] = None
) -> np.ndarray:
    """Randomly drop couplings until no vertex has more than ``xi`` neighbours.

    Edges are removed from maximum-degree rows. An edge is skipped when its
    removal would cut some vertex off from every vertex flagged in
    ``labeled`` (a boolean mask; ``None`` treats every vertex as labeled).
    If the budget cannot be met, the partial result is returned and a
    :class:`PruneWarning` is issued.
    """
    if xi < 1:
        raise ValueError("xi must be >= 1")
    J = np.array(J, dtype=float)
    n = J.shape[0]
    labeled = np.ones(n, dtype=bool) if labeled is None else np.asarray(labeled, dtype=bool)
    rng = np.random.default_rng(seed)
    reached = _n_components_with(J, labeled)
    blocked = set()  # edges whose removal breaks reachability

    while True:
        nz = J != 0
        deg = nz.sum(axis=1)
        over = np.flatnonzero(deg > xi)
        if over.size == 0:
            return J
        top = deg[over].max()
        rows = over[deg[over] == top]
        candidates = [
            (min(i, j), max(i, j))
            for i in rows
            for j in np.flatnonzero(nz[i])
            if (min(i, j), max(i, j)) not in blocked
        ]
        candidates = sorted(set(candidates))
        if not candidates:
            # fall back to any offending row that still has a removable edge
            candidates = sorted(
                {(min(i, j), max(i, j)) for i in over for j in np.flatnonzero(nz[i])} - blocked
            )
        if not candidates:
            warnings.warn(
                f"could not reduce every row to {xi} couplings without disconnecting "
                "vertices from the labeled set",
                PruneWarning,
                stacklevel=2,
            )
            return J
        i, j = candidates[rng.integers(len(candidates))]
        saved = J[i, j]
        J[i, j] = J[j, i] = 0.0
        if np.any(reached & ~_n_components_with(J, labeled)):
            J[i, j] = J[j, i] = saved
            blocked.add((i, j))


def save_matrix_csv(path, M: np.ndarray) -> None:
    np.savetxt(path, np.asarray(M, dtype=float), delimiter=",", fmt="%.17g")
