"""Dependency-free SVG scatter plots of classified 2-D datasets."""
from __future__ import annotations

from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .dataset import Dataset

PALETTE = (
    "#2ca02c", "#d62728", "#1f77b4", "#ff7f0e", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)


def scatter_svg(dataset: Dataset, predictions: Sequence[int], title: str = "",
                size: int = 420, margin: int = 30) -> str:
    """Points coloured by label; labeled points are drawn as open circles.

    Labeled points use their given label and unlabeled points the predicted
    one. Only the first two coordinates are plotted.
    """
    X = dataset.points
    if X.shape[1] == 1:
        X = np.column_stack([X[:, 0], np.zeros(len(X))])
    labels = np.concatenate([dataset.labeled_y, np.asarray(predictions, dtype=np.int64)])
    lo, hi = X[:, :2].min(axis=0), X[:, :2].max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    inner = size - 2 * margin
    px = margin + (X[:, 0] - lo[0]) / span[0] * inner
    py = size - margin - (X[:, 1] - lo[1]) / span[1] * inner

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
        f'<rect x="{margin}" y="{margin}" width="{inner}" height="{inner}" fill="none" stroke="#999"/>',
    ]
    if title:
        parts.append(f'<text x="{size / 2:.1f}" y="{margin * 0.7:.1f}" font-family="sans-serif" '
                     f'font-size="13" text-anchor="middle">{escape(title)}</text>')
    for i in range(len(X)):
        color = PALETTE[labels[i] % len(PALETTE)]
        if i < dataset.l:
            parts.append(f'<circle cx="{px[i]:.2f}" cy="{py[i]:.2f}" r="4.5" fill="none" '
                         f'stroke="{color}" stroke-width="1.5"/>')
        else:
            parts.append(f'<circle cx="{px[i]:.2f}" cy="{py[i]:.2f}" r="3" fill="{color}"/>')
    for k, name in enumerate(dataset.label_names):
        y = size - margin + 16
        x = margin + 90 * k
        parts.append(f'<circle cx="{x + 5}" cy="{y - 4}" r="4" fill="{PALETTE[k % len(PALETTE)]}"/>'
                     f'<text x="{x + 13}" y="{y}" font-family="sans-serif" font-size="11">{escape(name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
