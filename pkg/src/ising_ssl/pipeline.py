"""Train, classify, evaluate and sweep.

``train`` turns a partially labeled :class:`~ising_ssl.dataset.Dataset` into a
:class:`TrainedModel`: a Gray codebook along the barycenter path, similarity
parameters fitted on the labeled points, and one coupling matrix over all
points shared by every layer. ``classify`` solves each layer with the labeled
spins pinned to their code bits and decodes the unlabeled spins.
"""
from __future__ import annotations

import io
import json
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import annealer
from .annealer import AnnealSchedule, LayerProblem, derive_seed
from .dataset import Dataset, SplitSpec, split
from .encoding import LabelCodebook, build_codebook, compute_barycenters, decode_spins, shortest_label_path
from .learning import FitReport, LearningProblem, fit
from .similarity import (
    DiagonalGaussian,
    GaussianMixture,
    ReciprocalDistance,
    coupling,
    knn_mask,
    model_from_dict,
    prune_connectivity,
    similarity_matrix,
)

logger = logging.getLogger(__name__)

FAMILIES = ("reciprocal", "diagonal_gaussian", "gaussian")
SOLVERS = ("sa", "exact", "pimc")


@dataclass(frozen=True)
class TrainConfig:
    family: str = "diagonal_gaussian"
    xi: int = 6
    p: float = 2.0
    beta1: float = 1.0
    beta2: float = 1.0
    doubling: str = "first"
    learn: bool = True
    budget: int = 20
    fit_method: str = "coordinate"
    block_size: int = 16
    fit_tol: float = 1e-4  # per-cycle nll gain and log-space bracket width
    solver: str = "sa"
    schedule: AnnealSchedule = AnnealSchedule()
    label_mode: str = "clamp"
    h_mag: Optional[float] = None
    prune: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}")
        if self.label_mode not in ("clamp", "bias"):
            raise ValueError("label_mode must be 'clamp' or 'bias'")
        if self.xi < 1:
            raise ValueError("xi must be >= 1")
        if self.h_mag is not None and not self.h_mag > 0:
            raise ValueError("h_mag must be positive")

    def to_dict(self) -> dict:
        doc = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "schedule"}
        doc["schedule"] = self.schedule.to_dict()
        return doc


@dataclass
class TrainedModel:
    codebook: LabelCodebook
    model: object
    xi: int
    coupling: np.ndarray
    clamp_plan: np.ndarray  # (alpha, l) of +-1
    config: TrainConfig
    label_names: tuple
    fingerprint: str
    fit_report: Optional[FitReport] = None

    @property
    def alpha(self) -> int:
        return self.codebook.alpha

    @property
    def n_labeled(self) -> int:
        return self.clamp_plan.shape[1]

    def layer_problem(self, a: int) -> LayerProblem:
        n = self.coupling.shape[0]
        clamps = np.zeros(n, dtype=np.int8)
        clamps[: self.n_labeled] = self.clamp_plan[a]
        problem = LayerProblem(self.coupling, None, clamps)
        if self.config.label_mode == "bias":
            problem = annealer.bias_mode(problem, self.config.h_mag)
        return problem

    def to_dict(self) -> dict:
        return {
            "codebook": self.codebook.to_dict(self.label_names),
            "similarity": self.model.to_dict(),
            "xi": self.xi,
            "coupling": self.coupling.tolist(),
            "clamp_plan": self.clamp_plan.astype(int).tolist(),
            "config": self.config.to_dict(),
            "label_names": list(self.label_names),
            "fingerprint": self.fingerprint,
            "fit": self.fit_report.to_dict() if self.fit_report else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainedModel":
        cfg = dict(doc["config"])
        cfg["schedule"] = AnnealSchedule(**cfg["schedule"])
        fit_doc = doc.get("fit")
        report = None
        if fit_doc:
            report = FitReport(
                np.array(fit_doc["theta"]), fit_doc["nll_trace"], fit_doc["converged"],
                fit_doc["scheme"], tuple(fit_doc["param_names"]), fit_doc["evaluations"],
            )
        return cls(
            LabelCodebook.from_dict(doc["codebook"]),
            model_from_dict(doc["similarity"]),
            int(doc["xi"]),
            np.array(doc["coupling"], dtype=float),
            np.array(doc["clamp_plan"], dtype=np.int8),
            TrainConfig(**cfg),
            tuple(doc["label_names"]),
            doc["fingerprint"],
            report,
        )


def initial_model(dataset: Dataset, config: TrainConfig):
    if config.family == "reciprocal":
        return ReciprocalDistance(config.beta1, config.beta2, config.p)
    if config.family == "diagonal_gaussian":
        return DiagonalGaussian.from_labeled(dataset)
    return GaussianMixture.from_labeled(dataset)


def train(dataset: Dataset, config: TrainConfig = TrainConfig()) -> TrainedModel:
    """Codebook, fitted similarity and coupling matrix for ``dataset``."""
    counts = dataset.label_counts()
    if dataset.l < 1 or np.any(counts == 0):
        missing = [dataset.label_names[k] for k in np.flatnonzero(counts == 0)]
        raise ValueError(f"every label needs a labeled point; missing {missing}")
    if dataset.n_labels < 2:
        raise ValueError("need at least two labels")
    if dataset.n < 2:
        raise ValueError("need at least two points")

    barys = compute_barycenters(dataset)
    order = shortest_label_path(barys, config.p, heuristic=dataset.n_labels > 10)
    codebook = build_codebook(order, config.doubling)

    model = initial_model(dataset, config)
    report = None
    if config.learn and model.params().size:
        problem = LearningProblem.from_dataset(
            dataset, codebook, model, config.xi, block_size=config.block_size, seed=config.seed
        )
        report = fit(problem, budget=config.budget, method=config.fit_method,
                     tol=config.fit_tol, xtol=config.fit_tol)
        model = model.with_params(report.theta)
        logger.info("fit %s: nll %.6g after %d evaluations", problem.scheme, report.nll, report.evaluations)

    S = similarity_matrix(dataset, model)
    xi = min(config.xi, dataset.n - 1)
    J = coupling(S, knn_mask(S, xi))
    if config.prune:
        labeled = np.arange(dataset.n) < dataset.l
        J = prune_connectivity(J, config.xi, derive_seed(config.seed, 1), labeled)

    plan = np.array([codebook.spins(k) for k in dataset.labeled_y], dtype=np.int8).reshape(dataset.l, codebook.alpha).T
    return TrainedModel(
        codebook, model, xi, J, plan, config, dataset.label_names, dataset.fingerprint(), report
    )


@dataclass
class Classification:
    labels: np.ndarray  # (u,) label ids of unlabeled points
    spins: np.ndarray  # (n, alpha) readout of every spin in every layer
    layer_stats: list = field(default_factory=list)

    @property
    def bits(self) -> np.ndarray:
        return (self.spins > 0).astype(np.int8)


def solve_layer(model: TrainedModel, a: int):
    """Readout spins of layer ``a`` and its solver statistics."""
    problem = model.layer_problem(a)
    cfg = model.config
    if cfg.solver == "exact":
        reads = annealer.exact_readset(problem)
    else:
        schedule = replace(cfg.schedule, kind=cfg.solver, seed=derive_seed(cfg.seed, cfg.schedule.seed, a))
        reads = annealer.solve(problem, schedule)
    return annealer.majority_readout(reads), reads.stats


def classify(model: TrainedModel, dataset: Dataset, layers: Optional[Sequence[int]] = None) -> Classification:
    """Label every unlabeled point of ``dataset``.

    ``layers`` fixes the order in which layers are solved; the result does
    not depend on it.
    """
    if dataset.fingerprint() != model.fingerprint:
        raise ValueError("model was trained on a different dataset")
    order = list(range(model.alpha)) if layers is None else list(layers)
    if sorted(order) != list(range(model.alpha)):
        raise ValueError("layers must be a permutation of range(alpha)")
    spins = np.zeros((dataset.n, model.alpha), dtype=np.int8)
    stats = [None] * model.alpha
    for a in order:
        spins[:, a], stats[a] = solve_layer(model, a)
    labels = decode_spins(spins[dataset.l :], model.codebook) if dataset.u else np.empty(0, dtype=np.int64)
    return Classification(labels, spins, stats)


@dataclass
class EvaluationReport:
    accuracy: float
    confusion: np.ndarray
    layer_bit_errors: np.ndarray
    runtime: float = 0.0
    seeds: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "confusion": self.confusion.astype(int).tolist(),
            "layer_bit_errors": [float(v) for v in self.layer_bit_errors],
            "runtime": self.runtime,
            "seeds": self.seeds,
        }


def evaluate(predictions, hidden_truth, codebook: Optional[LabelCodebook] = None,
             bits: Optional[np.ndarray] = None, n_labels: Optional[int] = None) -> EvaluationReport:
    """Accuracy, confusion counts and per-layer bit error rates.

    A layer bit is wrong when it differs from that bit in every code the
    true label owns. Bit error rates need ``codebook`` and ``bits``.
    """
    if hidden_truth is None:
        raise ValueError("evaluation needs the true labels")
    pred = np.asarray(predictions, dtype=np.int64)
    truth = np.asarray(hidden_truth, dtype=np.int64)
    if pred.shape != truth.shape:
        raise ValueError("predictions and truth are not aligned")
    K = n_labels or (codebook.n_labels if codebook else int(max(pred.max(initial=-1), truth.max(initial=-1)) + 1))
    confusion = np.zeros((K, K), dtype=np.int64)
    np.add.at(confusion, (truth, pred), 1)
    accuracy = float(np.mean(pred == truth)) if truth.size else float("nan")
    layer_err = np.zeros(0)
    if codebook is not None and bits is not None and truth.size:
        bits = np.asarray(bits).reshape(truth.size, codebook.alpha)
        wrong = np.array([
            [all(bits[i, a] != c[a] for c in codebook.label_to_codes[truth[i]]) for a in range(codebook.alpha)]
            for i in range(truth.size)
        ])
        layer_err = wrong.mean(axis=0)
    return EvaluationReport(accuracy, confusion, layer_err)


def run_once(dataset: Dataset, config: TrainConfig):
    """Train on ``dataset``, classify its unlabeled points and evaluate."""
    start = time.perf_counter()
    model = train(dataset, config)
    result = classify(model, dataset)
    report = evaluate(result.labels, dataset.hidden_truth, model.codebook,
                      result.bits[dataset.l :], dataset.n_labels)
    report.runtime = time.perf_counter() - start
    report.seeds = {"train": config.seed, "schedule": config.schedule.seed}
    return model, result, report


@dataclass
class SweepRow:
    fraction: float
    accuracies: list
    failed: bool = False
    error: str = ""

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies)) if self.accuracies else float("nan")

    @property
    def std(self) -> float:
        return float(np.std(self.accuracies)) if self.accuracies else float("nan")


def cell_seed(seed: int, fraction_index: int, repeat_index: int) -> int:
    return derive_seed(seed, fraction_index, repeat_index)


def sweep(dataset: Dataset, fractions: Sequence[float], repeats: int = 1, seed: int = 0,
          config: TrainConfig = TrainConfig(), on_cell=None) -> list:
    """Repeat split/train/classify/evaluate for every unlabeled fraction.

    Every cell uses a fresh stratified split seeded from ``(seed, fraction
    index, repeat index)``. A cell that fails marks its row as failed and the
    sweep moves on. ``on_cell(fraction_index, repeat_index, split, model,
    classification, report)`` is called after each successful cell.
    """
    if not fractions:
        raise ValueError("no fractions given")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    rows = []
    for fi, frac in enumerate(fractions):
        row = SweepRow(float(frac), [])
        for r in range(repeats):
            s = cell_seed(seed, fi, r)
            try:
                part = split(dataset, SplitSpec(float(frac), s, True))
                model, result, report = run_once(part, replace(config, seed=s))
            except (ValueError, ArithmeticError) as exc:
                logger.warning("sweep cell (%s, %d) failed: %s", frac, r, exc)
                row.failed, row.error = True, str(exc)
                continue
            row.accuracies.append(report.accuracy if part.u else 1.0)
            if on_cell is not None:
                on_cell(fi, r, part, model, result, report)
        rows.append(row)
    return rows


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    """``fraction,mean_accuracy,std,repeats``; failed cells read ``failed``."""
    out = io.StringIO()
    out.write("fraction,mean_accuracy,std,repeats\n")
    for row in rows:
        if row.failed:
            out.write(f"{row.fraction:g},failed,failed,{len(row.accuracies)}\n")
        else:
            out.write(f"{row.fraction:g},{row.mean:.6f},{row.std:.6f},{len(row.accuracies)}\n")
    return out.getvalue()
