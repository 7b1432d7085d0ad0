"""Datasets on the manifold: CSV ingestion, synthetic blobs, PCA and splits.

A :class:`Dataset` keeps labeled and unlabeled points apart. Labels are dense
integer ids ``0..K-1`` assigned in first-appearance order; the original label
strings live in ``label_names``. ``hidden_truth`` carries the true labels of
the unlabeled points when they are known (after :func:`split`), and is what
evaluation compares predictions against.
"""
from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


class ParseError(ValueError):
    """Raised for malformed CSV input; carries the 1-based row number."""

    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


def _as_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(1, -1) if x.size else x.reshape(0, 0)
    return x


@dataclass(frozen=True)
class Dataset:
    labeled_x: np.ndarray
    labeled_y: np.ndarray
    unlabeled_x: np.ndarray
    label_names: tuple
    hidden_truth: Optional[np.ndarray] = None
    _d: int = field(default=0, repr=False)

    def __post_init__(self):
        lx = _as_points(self.labeled_x)
        ux = _as_points(self.unlabeled_x)
        d = max(lx.shape[1], ux.shape[1], self._d)
        if lx.size == 0:
            lx = lx.reshape(0, d)
        if ux.size == 0:
            ux = ux.reshape(0, d)
        if lx.shape[1] != ux.shape[1]:
            raise ValueError("labeled and unlabeled points differ in dimension")
        if not (np.all(np.isfinite(lx)) and np.all(np.isfinite(ux))):
            raise ValueError("coordinates must be finite")
        ly = np.asarray(self.labeled_y, dtype=np.int64).reshape(-1)
        if ly.shape[0] != lx.shape[0]:
            raise ValueError("labeled_y length does not match labeled_x")
        names = tuple(str(n) for n in self.label_names)
        if ly.size and (ly.min() < 0 or ly.max() >= len(names)):
            raise ValueError("label id without a name")
        truth = self.hidden_truth
        if truth is not None:
            truth = np.asarray(truth, dtype=np.int64).reshape(-1)
            if truth.shape[0] != ux.shape[0] and truth.size:
                raise ValueError("hidden_truth must align with unlabeled points")
            if truth.size and (truth.min() < 0 or truth.max() >= len(names)):
                raise ValueError("hidden_truth contains an unknown label id")
        for name, value in (("labeled_x", lx), ("labeled_y", ly), ("unlabeled_x", ux)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        if truth is not None:
            truth.setflags(write=False)
        object.__setattr__(self, "hidden_truth", truth)
        object.__setattr__(self, "label_names", names)
        object.__setattr__(self, "_d", int(d))

    @property
    def l(self) -> int:
        return self.labeled_x.shape[0]

    @property
    def u(self) -> int:
        return self.unlabeled_x.shape[0]

    @property
    def n(self) -> int:
        return self.l + self.u

    @property
    def d(self) -> int:
        return self._d

    @property
    def n_labels(self) -> int:
        return len(self.label_names)

    @property
    def points(self) -> np.ndarray:
        """All points, labeled first; index ``i < l`` is a labeled point."""
        return np.vstack([self.labeled_x, self.unlabeled_x])

    def label_counts(self) -> np.ndarray:
        return np.bincount(self.labeled_y, minlength=self.n_labels)

    def has_truth(self) -> bool:
        return self.hidden_truth is not None and self.hidden_truth.shape[0] == self.u

    def fingerprint(self) -> str:
        """Stable hash of the point layout, used to match models to data."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.labeled_x, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.labeled_y, dtype="<i8").tobytes())
        h.update(np.ascontiguousarray(self.unlabeled_x, dtype="<f8").tobytes())
        h.update("\x1f".join(self.label_names).encode())
        return h.hexdigest()

    def merged(self) -> "Dataset":
        """Re-attach ``hidden_truth`` to the unlabeled points (inverse of split)."""
        if not self.has_truth():
            raise ValueError("dataset has no hidden truth to merge")
        return Dataset(
            np.vstack([self.labeled_x, self.unlabeled_x]),
            np.concatenate([self.labeled_y, self.hidden_truth]),
            np.empty((0, self.d)),
            self.label_names,
        )


def load_csv(path, has_labels: bool = True) -> Dataset:
    """Read rows ``x1,...,xd[,label]``.

    With ``has_labels`` the last column is the label; an empty label cell makes
    the row unlabeled. Raises :class:`ParseError` naming the offending row.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such data file: {path}")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh)]
    rows = [(i + 1, r) for i, r in enumerate(rows) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: empty data file")

    width = len(rows[0][1])
    names: dict = {}
    lx, ly, ux = [], [], []
    for rowno, row in rows:
        if len(row) != width:
            raise ParseError(rowno, f"expected {width} columns, found {len(row)}")
        cells = row[:-1] if has_labels else row
        if not cells:
            raise ParseError(rowno, "no coordinate columns")
        try:
            coords = [float(c) for c in cells]
        except ValueError:
            raise ParseError(rowno, "non-numeric coordinate") from None
        if not all(np.isfinite(coords)):
            raise ParseError(rowno, "non-finite coordinate")
        label = row[-1].strip() if has_labels else ""
        if label:
            ly.append(names.setdefault(label, len(names)))
            lx.append(coords)
        else:
            ux.append(coords)
    d = width - 1 if has_labels else width
    return Dataset(
        np.asarray(lx, dtype=float).reshape(-1, d),
        np.asarray(ly, dtype=np.int64),
        np.asarray(ux, dtype=float).reshape(-1, d),
        tuple(names),
    )


def fixture_path(name: str) -> Path:
    """Path of a bundled CSV fixture (``"iris"`` or ``"digits_2d"``)."""
    return Path(str(resources.files("ising_ssl") / "data" / f"{name}.csv"))


def load_iris() -> Dataset:
    """Fisher's Iris data, 150 points, 4 features, fully labeled."""
    return load_csv(fixture_path("iris"))


def load_digits_2d() -> Dataset:
    """200 handwritten digits (1, 8, 5, 6) already reduced to 2-D."""
    return load_csv(fixture_path("digits_2d"))


@dataclass(frozen=True)
class SplitSpec:
    unlabeled_fraction: float
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 <= self.unlabeled_fraction < 1.0:
            raise ValueError("unlabeled_fraction must lie in [0, 1)")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


def _stratified_quota(counts: np.ndarray, total: int) -> np.ndarray:
    # Largest-remainder allocation of `total` removals, keeping >= 1 per label.
    n = counts.sum()
    exact = counts * (total / n)
    quota = np.minimum(np.floor(exact).astype(np.int64), counts - 1)
    remainder = exact - quota
    while quota.sum() < total:
        room = quota < counts - 1
        if not room.any():
            raise ValueError("unlabeled fraction too high: a label would lose every labeled point")
        cand = np.where(room, remainder, -np.inf)
        k = int(np.argmax(cand))
        quota[k] += 1
        remainder[k] -= 1.0
    return quota


def split(dataset: Dataset, spec: SplitSpec) -> Dataset:
    """Move ``floor(fraction * N)`` labeled points to the unlabeled set.

    The moved points keep their labels in ``hidden_truth``. Surviving labeled
    and moved points both keep their original relative order.
    """
    if dataset.u:
        raise ValueError("split expects a fully labeled dataset")
    n = dataset.l
    total = int(np.floor(spec.unlabeled_fraction * n))
    counts = dataset.label_counts()
    present = counts > 0
    rng = np.random.default_rng(spec.seed)
    y = dataset.labeled_y

    if spec.stratified:
        quota = np.zeros_like(counts)
        quota[present] = _stratified_quota(counts[present], total)
        moved = []
        for k in range(dataset.n_labels):
            if quota[k]:
                members = np.flatnonzero(y == k)
                moved.append(rng.choice(members, size=quota[k], replace=False))
        moved = np.concatenate(moved) if moved else np.empty(0, dtype=np.int64)
    else:
        moved = rng.choice(n, size=total, replace=False)
        kept = np.bincount(np.delete(y, moved), minlength=dataset.n_labels)
        if np.any(kept[present] == 0):
            raise ValueError("unlabeled fraction too high: a label would lose every labeled point")

    mask = np.zeros(n, dtype=bool)
    mask[moved] = True
    return Dataset(
        dataset.labeled_x[~mask],
        y[~mask],
        dataset.labeled_x[mask],
        dataset.label_names,
        hidden_truth=y[mask],
    )


def pca_project(dataset: Dataset, target_dim: int, whiten: bool = False) -> Dataset:
    """Project labeled and unlabeled points jointly onto the top principal axes.

    Components are ordered by descending covariance eigenvalue; each
    eigenvector's sign is fixed so that its largest-magnitude entry is
    positive. With ``whiten`` every component is scaled to unit variance.
    """
    X = dataset.points
    if not 1 <= target_dim <= dataset.d:
        raise ValueError("target_dim must be between 1 and d")
    if X.shape[0] < target_dim + 1:
        raise ValueError("need at least target_dim + 1 points")
    centered = X - X.mean(axis=0)
    cov = centered.T @ centered / (X.shape[0] - 1)
    if np.trace(cov) <= 0.0:
        raise ValueError("data has zero total variance")
    vals, vecs = np.linalg.eigh(cov)
    scale = max(vals.max(), 1e-300)
    # Eigenvalues equal up to tolerance sort by the axis their vector leans on.
    lead = np.argmax(np.abs(vecs), axis=0)
    order = np.lexsort((lead, -np.round(vals / scale, 10)))[:target_dim]
    vecs = vecs[:, order]
    vecs = vecs * np.sign(vecs[np.argmax(np.abs(vecs), axis=0), np.arange(target_dim)])
    Z = centered @ vecs
    if whiten:
        sd = np.sqrt(np.maximum(vals[order], 1e-300))
        Z = Z / sd
    return Dataset(
        Z[: dataset.l],
        dataset.labeled_y,
        Z[dataset.l :],
        dataset.label_names,
        hidden_truth=dataset.hidden_truth,
    )


def generate_blobs(
    centers: Sequence[Sequence[float]], per_center: int, spread: float, seed: int = 0
) -> Dataset:
    """Isotropic Gaussian clusters, one label per center."""
    centers = np.asarray(centers, dtype=float)
    if centers.ndim != 2 or centers.shape[0] < 1:
        raise ValueError("centers must be a non-empty sequence of points")
    if per_center < 1 or spread <= 0:
        raise ValueError("per_center must be >= 1 and spread > 0")
    rng = np.random.default_rng(seed)
    pts = centers[:, None, :] + spread * rng.standard_normal((len(centers), per_center, centers.shape[1]))
    labels = np.repeat(np.arange(len(centers)), per_center)
    return Dataset(
        pts.reshape(-1, centers.shape[1]),
        labels,
        np.empty((0, centers.shape[1])),
        tuple(str(k) for k in range(len(centers))),
    )
