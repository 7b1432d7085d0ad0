"""Gray-code label codebooks ordered along the shortest barycenter path.

Labels are laid out along an open path through their barycenters and then
receive consecutive codewords of the reflected binary Gray code. Neighbouring
labels on the path therefore differ in a single bit. When ``K`` is not a power
of two, ``2**alpha - K`` labels own two adjacent codewords so that every
codeword decodes to some label.

Codes are tuples of bits, most significant (layer 0) first.
"""
from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numpy as np

from .dataset import Dataset

Code = Tuple[int, ...]

MAX_EXACT_LABELS = 10


def gray_code(alpha: int) -> list:
    """Reflected binary Gray sequence of ``alpha``-bit codes starting at 0...0."""
    out = []
    for i in range(2**alpha):
        g = i ^ (i >> 1)
        out.append(tuple((g >> (alpha - 1 - b)) & 1 for b in range(alpha)))
    return out


def code_str(code: Code) -> str:
    return "".join(str(b) for b in code)


def parse_code(text: str) -> Code:
    if not text or set(text) - {"0", "1"}:
        raise ValueError(f"not a binary code: {text!r}")
    return tuple(int(c) for c in text)


def hamming(a: Code, b: Code) -> int:
    return sum(x != y for x, y in zip(a, b))


def compute_barycenters(dataset: Dataset) -> Dict[int, np.ndarray]:
    """Mean labeled point of every label id in ``0..K-1``."""
    counts = dataset.label_counts()
    missing = [dataset.label_names[k] for k in range(dataset.n_labels) if counts[k] == 0]
    if missing:
        raise ValueError(f"labels without labeled points: {missing}")
    return {
        k: dataset.labeled_x[dataset.labeled_y == k].mean(axis=0)
        for k in range(dataset.n_labels)
    }


def _path_length(order, barys, p) -> float:
    return sum(
        float(np.linalg.norm(barys[a] - barys[b], ord=p)) for a, b in zip(order, order[1:])
    )


def _canonical(order: tuple) -> tuple:
    return order if order[0] < order[-1] else order[::-1]


def shortest_label_path(barys: Dict[int, np.ndarray], p: float = 2, heuristic: bool = False) -> list:
    """Open path through all barycenters with the smallest total ``p``-norm length.

    Exhaustive over permutations for ``K <= 10``. Equal-length paths resolve
    to the lexicographically smallest label sequence, and the returned
    direction starts at the smaller end label. With ``heuristic=True`` a
    greedy nearest-neighbour path is returned instead; it is not optimal.
    """
    labels = sorted(barys)
    K = len(labels)
    if K < 2:
        raise ValueError("need at least two labels")
    if heuristic:
        return _greedy_path(barys, p)
    if K > MAX_EXACT_LABELS:
        raise ValueError(
            f"exact path search supports at most {MAX_EXACT_LABELS} labels; "
            "pass heuristic=True for a greedy (non-optimal) path"
        )
    dist = {(a, b): float(np.linalg.norm(barys[a] - barys[b], ord=p)) for a in labels for b in labels}
    best_len, best = math.inf, None
    for perm in itertools.permutations(labels):
        if perm[0] > perm[-1]:
            continue
        length = sum(dist[a, b] for a, b in zip(perm, perm[1:]))
        # permutations() yields lexicographic order, so strict < keeps the first tie
        if length < best_len - 1e-12 * max(1.0, length):
            best_len, best = length, perm
    return list(_canonical(best))


def _greedy_path(barys, p) -> list:
    labels = sorted(barys)
    best = None
    for start in labels:
        order, left = [start], set(labels) - {start}
        while left:
            cur = order[-1]
            nxt = min(left, key=lambda k: (float(np.linalg.norm(barys[cur] - barys[k], ord=p)), k))
            order.append(nxt)
            left.remove(nxt)
        length = _path_length(order, barys, p)
        if best is None or length < best[0] - 1e-12:
            best = (length, tuple(order))
    warnings.warn("greedy label path is not guaranteed to be the shortest", stacklevel=3)
    return list(_canonical(best[1]))


@dataclass(frozen=True)
class LabelCodebook:
    alpha: int
    order: tuple
    label_to_codes: dict
    code_to_label: dict

    @property
    def n_labels(self) -> int:
        return len(self.order)

    def primary_code(self, label: int) -> Code:
        """The first code of a label in Gray order; used as its training target."""
        return self.label_to_codes[label][0]

    def spins(self, label: int) -> np.ndarray:
        """``+-1`` spin per layer for the label's primary code (bit 1 -> +1)."""
        return 2 * np.asarray(self.primary_code(label), dtype=np.int8) - 1

    def doubled_labels(self) -> list:
        return [k for k in self.order if len(self.label_to_codes[k]) == 2]

    def sequence(self) -> list:
        """All ``2**alpha`` codes in the order they were handed out."""
        return [c for k in self.order for c in self.label_to_codes[k]]

    def to_dict(self, label_names: Sequence[str] = ()) -> dict:
        doc = {
            "alpha": self.alpha,
            "order": list(self.order),
            "codes": {str(k): [code_str(c) for c in self.label_to_codes[k]] for k in self.order},
        }
        if label_names:
            doc["labels"] = list(label_names)
        return doc

    def to_json(self, label_names: Sequence[str] = ()) -> str:
        return json.dumps(self.to_dict(label_names), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, doc: dict) -> "LabelCodebook":
        alpha = int(doc["alpha"])
        order = tuple(int(k) for k in doc["order"])
        l2c = {int(k): tuple(parse_code(c) for c in v) for k, v in doc["codes"].items()}
        c2l = {c: k for k, codes in l2c.items() for c in codes}
        book = cls(alpha, order, l2c, c2l)
        _check_codebook(book)
        return book


def _check_codebook(book: LabelCodebook) -> None:
    if len(book.code_to_label) != 2**book.alpha:
        raise ValueError("codebook does not cover every code")
    for codes in book.label_to_codes.values():
        if not 1 <= len(codes) <= 2 or any(len(c) != book.alpha for c in codes):
            raise ValueError("each label must own one or two alpha-bit codes")
        if len(codes) == 2 and hamming(*codes) != 1:
            raise ValueError("doubled codes must be adjacent")


def build_codebook(order: Sequence[int], doubling: str = "first") -> LabelCodebook:
    """Hand out Gray codes to labels in path order.

    ``alpha = ceil(log2 K)``. The ``2**alpha - K`` labels that own two
    consecutive codes are the first ones on the path (``doubling="first"``)
    or the last ones (``doubling="last"``).
    """
    order = tuple(int(k) for k in order)
    K = len(order)
    if K < 2:
        raise ValueError("need at least two labels")
    if len(set(order)) != K:
        raise ValueError("order repeats a label")
    if doubling not in ("first", "last"):
        raise ValueError("doubling must be 'first' or 'last'")
    alpha = max(1, math.ceil(math.log2(K)))
    n_double = 2**alpha - K
    doubled = set(order[:n_double]) if doubling == "first" else set(order[K - n_double :])

    seq = iter(gray_code(alpha))
    l2c = {}
    for k in order:
        l2c[k] = (next(seq), next(seq)) if k in doubled else (next(seq),)
    c2l = {c: k for k, codes in l2c.items() for c in codes}
    return LabelCodebook(alpha, order, l2c, c2l)


def decode(code, codebook: LabelCodebook) -> int:
    """Label owning ``code``; accepts a bit tuple, a ``"0101"`` string or spins."""
    if isinstance(code, str):
        code = parse_code(code)
    else:
        code = tuple(int(b) for b in code)
        if any(b == -1 for b in code):
            code = tuple((b + 1) // 2 for b in code)
    if len(code) != codebook.alpha:
        raise ValueError(f"code length {len(code)} != alpha {codebook.alpha}")
    return codebook.code_to_label[code]


def decode_spins(spins: np.ndarray, codebook: LabelCodebook) -> np.ndarray:
    """Decode an ``(n, alpha)`` array of +-1 layer readouts into label ids."""
    spins = np.asarray(spins)
    bits = (spins > 0).astype(np.int64)
    return np.array([codebook.code_to_label[tuple(row)] for row in bits], dtype=np.int64)
