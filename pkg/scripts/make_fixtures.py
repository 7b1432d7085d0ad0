"""Regenerate the CSV fixtures bundled in ``ising_ssl/data``.

Iris is written verbatim (4 features + species name). The digits fixture
takes 50 images each of the digits 1, 8, 5, 6 from scikit-learn's 8x8 digits
set and reduces them to two dimensions with Isomap; only the 2-D coordinates
ship, the reduction itself is not part of the package.
"""
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits, load_iris
from sklearn.manifold import Isomap

OUT = Path(__file__).resolve().parents[1] / "src" / "ising_ssl" / "data"

DIGITS = (1, 8, 5, 6)
SUBSAMPLE_SEED = 1
ISOMAP_NEIGHBORS = 5


def write_iris():
    iris = load_iris()
    names = ["Setosa", "Versicolour", "Virginica"]
    with open(OUT / "iris.csv", "w") as fh:
        for row, target in zip(iris.data, iris.target):
            fh.write(",".join(f"{v:g}" for v in row) + f",{names[target]}\n")


def write_digits():
    digits = load_digits()
    rng = np.random.default_rng(SUBSAMPLE_SEED)
    idx = np.concatenate(
        [rng.choice(np.flatnonzero(digits.target == k), 50, replace=False) for k in DIGITS]
    )
    coords = Isomap(n_neighbors=ISOMAP_NEIGHBORS, n_components=2).fit_transform(digits.data[idx])
    with open(OUT / "digits_2d.csv", "w") as fh:
        for (x, y), target in zip(coords, digits.target[idx]):
            fh.write(f"{x:.6f},{y:.6f},{target}\n")


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    write_iris()
    write_digits()
