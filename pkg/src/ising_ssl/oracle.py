"""Seeded SSL-style Ising instances and the annealer-vs-exact comparison."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .annealer import AnnealSchedule, LayerProblem, bias_mode, exact_ground_state, simulated_anneal
from .dataset import generate_blobs
from .learning import LearningProblem, default_bounds, nll
from .similarity import ReciprocalDistance, coupling, knn_mask, similarity_matrix


def ssl_instance(seed: int, n_free: int = 16, n_clamped: int = 4, xi: int = 3) -> LayerProblem:
    """One layer problem built like the classifier builds them.

    Points come from two Gaussian blobs; the first ``n_clamped`` are pinned to
    their blob's spin and the rest are free. Couplings are reciprocal-distance
    similarities under a ``xi``-nearest-neighbour mask.
    """
    rng = np.random.default_rng(seed)
    n = n_free + n_clamped
    blobs = generate_blobs([[0.0, 0.0], [rng.uniform(1.0, 3.0), 0.0]], -(-n // 2), 0.7, seed)
    order = rng.permutation(blobs.l)[:n]
    x, y = blobs.labeled_x[order], blobs.labeled_y[order]
    model = ReciprocalDistance(rng.uniform(0.5, 2.0), rng.uniform(0.05, 1.0))
    S = similarity_matrix(x, model)
    J = coupling(S, knn_mask(S, min(xi, n - 1)))
    clamps = np.zeros(n, dtype=np.int8)
    clamps[:n_clamped] = np.where(y[:n_clamped] == 1, 1, -1)
    return LayerProblem(J, None, clamps)


@dataclass
class OracleReport:
    instances: int
    matched: int
    misses: list

    @property
    def rate(self) -> float:
        return self.matched / self.instances


def oracle_check(instances: int = 100, seed: int = 0, schedule: AnnealSchedule = AnnealSchedule(),
                 n_free: int = 16, n_clamped: int = 4) -> OracleReport:
    """Count instances where the best simulated-annealing read hits the exact ground energy."""
    matched, misses = 0, []
    for k in range(instances):
        problem = ssl_instance(seed * 100003 + k, n_free, n_clamped)
        exact = exact_ground_state(problem).energy
        reads = simulated_anneal(problem, AnnealSchedule(**{**schedule.to_dict(), "seed": seed * 100003 + k}))
        best = reads.best().energy
        if best <= exact + 1e-9 * max(1.0, abs(exact)):
            matched += 1
        else:
            misses.append((k, exact, best))
    return OracleReport(instances, matched, misses)


def clamp_bias_agreement(instances: int = 50, seed: int = 0, n_spins: int = 20) -> int:
    """Instances (out of ``instances``) where default-bias and clamped ground states agree."""
    agree = 0
    for k in range(instances):
        n_clamped = 4 + k % 5
        problem = ssl_instance(10**6 + seed * 1009 + k, n_spins - n_clamped, n_clamped)
        clamped = exact_ground_state(problem).spins
        biased = exact_ground_state(bias_mode(problem)).spins
        agree += bool(np.array_equal(clamped, biased))
    return agree


def two_blob_learning(seed: int = 0, per_blob: int = 6, xi: int = 3) -> LearningProblem:
    """12-point, one-bit learning problem over two overlapping blobs."""
    ds = generate_blobs([[0.0, 0.0], [2.0, 0.0]], per_blob, 0.8, seed)
    bits = np.where(ds.labeled_y == 1, 1, -1)
    return LearningProblem(ds.labeled_x, bits, ReciprocalDistance(1.0, 1.0), xi, labels=ds.labeled_y)


def grid_nll_min(problem: LearningProblem, size: int = 50):
    """``(nll, theta)`` of the best point on a log-spaced grid over the fit bounds.

    Only for two-parameter models.
    """
    theta0 = problem.model.params()
    if theta0.size != 2:
        raise ValueError("grid oracle needs a two-parameter model")
    lo, hi = default_bounds(theta0)
    axes = [np.geomspace(lo[j], hi[j], size) for j in range(2)]
    best = (np.inf, None)
    for a in axes[0]:
        for b in axes[1]:
            v = nll(problem, [a, b])
            if v < best[0]:
                best = (v, np.array([a, b]))
    return best
