"""Boltzmann maximum-likelihood fitting of similarity parameters.

The labeled points form ``alpha`` independent, bias-free Ising layers that
share the coupling matrix ``J(theta)`` built from the similarity model and the
nearest-neighbour mask. Under the Boltzmann distribution at temperature ``T``
the negative log-likelihood of the observed label bits is::

    nll(theta) = sum_a [ log Z_layer(J) - sum_{i<j} J_ij b_ia b_ja / T ]

``Z_layer`` is computed exactly by Gray-code enumeration, which is feasible
up to about 20 labeled points. Larger labeled sets are cut into random
label-stratified blocks of at most ``block_size`` points and the per-block
exact nlls are summed (a composite likelihood).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numba
import numpy as np

from .dataset import Dataset
from .encoding import LabelCodebook
from .similarity import SimilarityModel, coupling, knn_mask

MAX_EXACT_SPINS = 20
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@numba.njit(cache=True, nogil=True)
def _log_partition_kernel(J, beta):
    # Gray-code walk over half the states (spin 0 stays -1); Z2 symmetry doubles it.
    n = J.shape[0]
    s = -np.ones(n)
    f = -(J @ np.ones(n))
    x = 0.5 * beta * np.sum(J)  # -E/T = beta/2 * s.J.s
    xmax = x
    total = 1.0
    for t in range(1, 1 << (n - 1)):
        b = 0
        while (t >> b) & 1 == 0:
            b += 1
        k = n - 1 - b
        x -= 2.0 * beta * s[k] * f[k]
        s[k] = -s[k]
        for j in range(n):
            f[j] += 2.0 * J[j, k] * s[k]
        if x > xmax:
            total = total * math.exp(xmax - x) + 1.0
            xmax = x
        else:
            total += math.exp(x - xmax)
    return math.log(2.0 * total) + xmax


@numba.njit(cache=True, nogil=True)
def _correlation_kernel(J, beta, logz):
    n = J.shape[0]
    s = -np.ones(n)
    f = -(J @ np.ones(n))
    x = 0.5 * beta * np.sum(J)
    corr = np.zeros((n, n))
    shift = logz - math.log(2.0)
    for t in range(0, 1 << (n - 1)):
        if t > 0:
            b = 0
            while (t >> b) & 1 == 0:
                b += 1
            k = n - 1 - b
            x -= 2.0 * beta * s[k] * f[k]
            s[k] = -s[k]
            for j in range(n):
                f[j] += 2.0 * J[j, k] * s[k]
        w = math.exp(x - shift)
        for i in range(n):
            for j in range(n):
                corr[i, j] += w * s[i] * s[j]
    return corr


def log_layer_partition(J: np.ndarray, T: float = 1.0, max_spins: int = MAX_EXACT_SPINS) -> float:
    """``log Z_layer = log sum_s exp(sum_{i<j} J_ij s_i s_j / T)``, computed exactly."""
    J = np.ascontiguousarray(J, dtype=float)
    n = J.shape[0]
    if T <= 0:
        raise ValueError("temperature must be positive")
    if n > max_spins:
        raise ValueError(f"{n} spins is too many for exact enumeration; use the block scheme")
    if n == 0:
        return 0.0
    return float(_log_partition_kernel(J, 1.0 / T))


def layer_partition(J: np.ndarray, T: float = 1.0, max_spins: int = MAX_EXACT_SPINS) -> float:
    return math.exp(log_layer_partition(J, T, max_spins))


def spin_correlations(J: np.ndarray, T: float = 1.0):
    """``(log Z, <s_i s_j>)`` under the bias-free Boltzmann distribution."""
    J = np.ascontiguousarray(J, dtype=float)
    if J.shape[0] > MAX_EXACT_SPINS:
        raise ValueError("too many spins for exact moments")
    if J.shape[0] == 0:
        return 0.0, np.zeros((0, 0))
    logz = float(_log_partition_kernel(J, 1.0 / T))
    return logz, _correlation_kernel(J, 1.0 / T, logz)


def boltzmann_log_prob(J: np.ndarray, bits: np.ndarray, T: float = 1.0) -> float:
    """Log-probability of an ``(l, alpha)`` array of +-1 label bits."""
    bits = np.asarray(bits, dtype=float).reshape(J.shape[0], -1)
    logz = log_layer_partition(J, T)
    return float(sum(0.5 * b @ J @ b / T - logz for b in bits.T))


def _stratified_blocks(labels: np.ndarray, block_size: int, seed: int) -> list:
    l = labels.shape[0]
    n_blocks = -(-l // block_size)
    rng = np.random.default_rng(seed)
    dealt = []
    for k in np.unique(labels):
        members = np.flatnonzero(labels == k)
        dealt.extend(rng.permutation(members).tolist())
    blocks = [sorted(dealt[b::n_blocks]) for b in range(n_blocks)]
    return [np.array(b, dtype=np.int64) for b in blocks]


@dataclass(frozen=True)
class LearningProblem:
    """Labeled points, their +-1 target bits and the model family to fit.

    ``bits[i, a]`` is bit ``a`` of the first code of point ``i``'s label.
    """

    x: np.ndarray
    bits: np.ndarray
    model: SimilarityModel
    xi: int
    labels: Optional[np.ndarray] = None
    T: float = 1.0
    block_size: int = 16
    exact_limit: int = MAX_EXACT_SPINS
    seed: int = 0
    blocks: list = field(init=False, repr=False)

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        bits = np.asarray(self.bits, dtype=float)
        if bits.ndim == 1:
            bits = bits[:, None]
        if bits.shape[0] != x.shape[0]:
            raise ValueError("one row of target bits per labeled point required")
        if not np.all(np.abs(bits) == 1):
            raise ValueError("target bits must be +-1")
        if self.xi < 1 or self.T <= 0:
            raise ValueError("xi must be >= 1 and T > 0")
        if not 1 <= self.block_size <= self.exact_limit <= 30:
            raise ValueError("need 1 <= block_size <= exact_limit <= 30")
        labels = np.zeros(x.shape[0], dtype=np.int64) if self.labels is None else np.asarray(self.labels)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "labels", labels)
        if x.shape[0] <= self.exact_limit:
            blocks = [np.arange(x.shape[0])]
        else:
            blocks = _stratified_blocks(labels, self.block_size, self.seed)
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def from_dataset(cls, dataset: Dataset, codebook: LabelCodebook, model: SimilarityModel, xi: int, **kw):
        bits = np.array([codebook.spins(k) for k in dataset.labeled_y]).reshape(dataset.l, codebook.alpha)
        return cls(dataset.labeled_x, bits, model, xi, labels=dataset.labeled_y, **kw)

    @property
    def l(self) -> int:
        return self.x.shape[0]

    @property
    def alpha(self) -> int:
        return self.bits.shape[1]

    @property
    def scheme(self) -> str:
        if len(self.blocks) == 1:
            return "exact"
        return f"blocks:{len(self.blocks)}x<={self.block_size}"

    def mask(self, theta) -> np.ndarray:
        if self.l < 2:
            return np.zeros((self.l, self.l), dtype=np.int8)
        S = self.model.with_params(theta).pairwise(self.x)
        return knn_mask(S, min(self.xi, self.l - 1))

    def couplings(self, theta) -> np.ndarray:
        """Masked coupling matrix over the labeled points at ``theta``."""
        _check_theta(self.model, theta)
        S = self.model.with_params(theta).pairwise(self.x)
        if self.l < 2:
            return np.zeros_like(S)
        return coupling(S, knn_mask(S, min(self.xi, self.l - 1)))


def _check_theta(model, theta):
    theta = np.asarray(theta, dtype=float)
    if theta.shape != model.params().shape:
        raise ValueError(f"expected {model.params().size} parameters, got {theta.size}")
    if np.any(~np.isfinite(theta)) or np.any(theta <= 0):
        raise ValueError("parameters must be finite and positive")


def nll(problem: LearningProblem, theta) -> float:
    """Negative log-likelihood of the target bits (summed over blocks)."""
    J = problem.couplings(theta)
    total = 0.0
    for b in problem.blocks:
        Jb = np.ascontiguousarray(J[np.ix_(b, b)])
        bits = problem.bits[b]
        logz = log_layer_partition(Jb, problem.T, problem.exact_limit)
        fit = 0.5 * np.einsum("ia,ij,ja->", bits, Jb, bits) / problem.T
        total += problem.alpha * logz - fit
    return float(total)


def nll_gradient(problem: LearningProblem, theta) -> np.ndarray:
    """Analytic gradient: model minus data expectations of the coupling derivatives.

    The nearest-neighbour mask is held at its value for ``theta``.
    """
    _check_theta(problem.model, theta)
    model = problem.model.with_params(theta)
    M = problem.mask(theta)
    G = model.pairwise_grad(problem.x) * M
    grad = np.zeros(G.shape[0])
    J = problem.couplings(theta)
    for b in problem.blocks:
        Jb = J[np.ix_(b, b)]
        _, corr = spin_correlations(Jb, problem.T)
        bits = problem.bits[b]
        data = bits @ bits.T
        for m in range(G.shape[0]):
            Gb = G[m][np.ix_(b, b)]
            grad[m] += 0.5 * (problem.alpha * np.sum(Gb * corr) - np.sum(Gb * data)) / problem.T
    return grad


def nll_gradient_check(problem: LearningProblem, theta, step: float = 1e-5) -> dict:
    """Compare :func:`nll_gradient` with central finite differences."""
    theta = np.asarray(theta, dtype=float)
    analytic = nll_gradient(problem, theta)
    numeric = np.empty_like(analytic)
    for j in range(theta.size):
        e = np.zeros_like(theta)
        e[j] = step
        numeric[j] = (nll(problem, theta + e) - nll(problem, theta - e)) / (2 * step)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    rel = np.abs(analytic - numeric) / denom
    return {
        "analytic": analytic,
        "numeric": numeric,
        "relative_error": rel,
        "max_relative_error": float(rel.max()) if rel.size else 0.0,
    }


@dataclass
class FitReport:
    theta: np.ndarray
    nll_trace: list
    converged: bool
    scheme: str
    param_names: tuple = ()
    evaluations: int = 0

    @property
    def nll(self) -> float:
        return self.nll_trace[-1]

    def to_dict(self) -> dict:
        return {
            "theta": [float(t) for t in self.theta],
            "param_names": list(self.param_names),
            "nll_trace": [float(v) for v in self.nll_trace],
            "converged": self.converged,
            "scheme": self.scheme,
            "evaluations": self.evaluations,
        }


def default_bounds(theta0: np.ndarray, span: float = 1e3):
    theta0 = np.asarray(theta0, dtype=float)
    return theta0 / span, theta0 * span


class _Objective:
    def __init__(self, problem):
        self.problem = problem
        self.calls = 0

    def __call__(self, theta):
        self.calls += 1
        return nll(self.problem, theta)


def _golden_1d(func, a, b, f_best, x_best, grid, tol, around=None):
    """Minimise ``func`` on ``[a, b]``: coarse grid, then golden-section refinement.

    ``around`` adds a second refinement bracket centred on that point.
    Returns ``(x, f)`` of the best point seen, starting from ``(x_best, f_best)``.
    """
    xs = np.linspace(a, b, grid)
    fs = [func(v) for v in xs]
    i = int(np.argmin(fs))
    if fs[i] < f_best:
        x_best, f_best = xs[i], fs[i]
    width = (b - a) / (grid - 1)
    brackets = [(xs[max(i - 1, 0)], xs[min(i + 1, grid - 1)])]
    if around is not None:
        brackets.append((max(a, around - width), min(b, around + width)))
    for lo_x, hi_x in brackets:
        x1 = hi_x - GOLDEN * (hi_x - lo_x)
        x2 = lo_x + GOLDEN * (hi_x - lo_x)
        f1, f2 = func(x1), func(x2)
        while hi_x - lo_x > tol:
            if f1 <= f2:
                hi_x, x2, f2 = x2, x1, f1
                x1 = hi_x - GOLDEN * (hi_x - lo_x)
                f1 = func(x1)
            else:
                lo_x, x1, f1 = x1, x2, f2
                x2 = lo_x + GOLDEN * (hi_x - lo_x)
                f2 = func(x2)
            for x, fx in ((x1, f1), (x2, f2)):
                if fx < f_best:
                    x_best, f_best = x, fx
    return x_best, f_best


def _coordinate_step(obj, theta, j, f0, lo, hi, grid, tol):
    def at(logv):
        t = theta.copy()
        t[j] = math.exp(logv)
        return t

    cur = math.log(theta[j])
    x, f = _golden_1d(lambda v: obj(at(v)), math.log(lo), math.log(hi), f0, cur, grid, tol, around=cur)
    return (at(x), f) if f < f0 else (theta, f0)


def _pattern_step(obj, origin, theta, f0, lo, hi, grid, tol):
    """Line search along the log-space move made by the last cycle."""
    base = np.log(theta)
    v = base - np.log(origin)
    if not np.any(v):
        return theta, f0
    # step range keeping every coordinate inside its bounds
    with np.errstate(divide="ignore", invalid="ignore"):
        t_hi = np.where(v > 0, (np.log(hi) - base) / v, np.where(v < 0, (np.log(lo) - base) / v, np.inf))
        t_lo = np.where(v > 0, (np.log(lo) - base) / v, np.where(v < 0, (np.log(hi) - base) / v, -np.inf))
    a, b = float(t_lo.max()), float(t_hi.min())
    if not b > a:
        return theta, f0

    def at(t):
        return np.clip(np.exp(base + t * v), lo, hi)

    t, f = _golden_1d(lambda t: obj(at(t)), a, b, f0, 0.0, grid, tol, around=0.0)
    return (at(t), f) if f < f0 else (theta, f0)


def fit(
    problem: LearningProblem,
    init=None,
    budget: int = 50,
    bounds=None,
    method: str = "coordinate",
    tol: float = 1e-8,
    grid: int = 12,
    xtol: float = 1e-6,
) -> FitReport:
    """Minimise the nll over the model parameters.

    ``method="coordinate"`` cycles through the parameters, minimising each in
    turn on a bounded log scale (coarse grid, then golden section), and ends
    each cycle with the same search along the cycle's net move.
    ``method="gradient"`` takes backtracking gradient steps in log space.
    Stops after ``budget`` cycles or when a cycle gains less than ``tol``.
    ``xtol`` is the golden-section bracket width in log space.
    """
    theta = problem.model.params() if init is None else np.asarray(init, dtype=float).copy()
    names = tuple(problem.model.param_names)
    obj = _Objective(problem)
    f = obj(theta)
    if not math.isfinite(f):
        raise ValueError("nll is not finite at the initial parameters")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if theta.size == 0:
        return FitReport(theta, [f], True, problem.scheme, names, obj.calls)
    lo, hi = default_bounds(theta) if bounds is None else (np.broadcast_to(bounds[0], theta.shape), np.broadcast_to(bounds[1], theta.shape))
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    if np.any(lo <= 0) or np.any(hi < lo) or np.any(theta < lo) or np.any(theta > hi):
        raise ValueError("bounds must be positive and contain the initial parameters")

    trace = [f]
    converged = False
    step = 1.0
    for _ in range(budget):
        start = f
        if method == "coordinate":
            origin = theta
            for j in range(theta.size):
                theta, f = _coordinate_step(obj, theta, j, f, lo[j], hi[j], grid, xtol)
            if theta.size > 1:
                theta, f = _pattern_step(obj, origin, theta, f, lo, hi, grid, xtol)
        elif method == "gradient":
            g = nll_gradient(problem, theta) * theta  # d nll / d log(theta)
            while step > 1e-12:
                cand = np.clip(theta * np.exp(-step * g), lo, hi)
                fc = obj(cand)
                if fc < f:
                    theta, f = cand, fc
                    step *= 2.0
                    break
                step *= 0.5
        else:
            raise ValueError(f"unknown method {method!r}")
        trace.append(f)
        if start - f < tol:
            converged = True
            break
    return FitReport(theta, trace, converged, problem.scheme, names, obj.calls)


def target_bits(labels: Sequence[int], codebook: LabelCodebook) -> np.ndarray:
    return np.array([codebook.spins(k) for k in labels]).reshape(len(labels), codebook.alpha)
