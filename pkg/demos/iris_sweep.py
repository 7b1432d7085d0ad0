"""
Iris: accuracy against the unlabeled fraction
=============================================

Project Iris onto its top two principal components, then hide a growing
share of the labels and let the Ising layers fill them in. One scatter SVG
per fraction is written next to this script.
"""
import pathlib

import numpy as np

from ising_ssl import TrainConfig, load_iris, pca_project, run_once, split, sweep, sweep_csv
from ising_ssl.dataset import SplitSpec
from ising_ssl.plotting import scatter_svg

out = pathlib.Path(__file__).with_name("iris_out")
out.mkdir(exist_ok=True)

# the codebook gives Virginica the doubled label, which sits at the end of the path
config = TrainConfig(family="diagonal_gaussian", xi=6, doubling="last")
iris = pca_project(load_iris(), 2)

# a single run first, to look at the learned model
model, result, report = run_once(split(iris, SplitSpec(0.3, 0)), config)
print("codebook:", {iris.label_names[k]: [''.join(map(str, c)) for c in model.codebook.label_to_codes[k]]
                    for k in model.codebook.order})
print("fitted theta:", np.round(model.fit_report.theta, 4))
print(f"accuracy at 30% unlabeled: {report.accuracy:.4f}")
print(report.confusion)

# now the sweep
fractions = [0.1, 0.3, 0.5, 0.7, 0.8, 0.9]
rows = sweep(iris, fractions, repeats=5, seed=0, config=config)
print(sweep_csv(rows))

for frac in fractions:
    part = pca_project(split(load_iris(), SplitSpec(frac, 0)), 2)
    _, result, report = run_once(part, config)
    svg = scatter_svg(part, result.labels, f"Iris, {frac:.0%} unlabeled, accuracy {report.accuracy:.3f}")
    (out / f"scatter_{frac:g}.svg").write_text(svg)
print("scatter plots in", out)
