"""Single-layer Ising problems and the solvers that read them out.

Energy convention (each unordered pair counted once)::

    E(s) = -sum_i h_i s_i - sum_{i<j} J_ij s_i s_j

Labeled spins are either *clamped* (fixed to +-1 and removed from the search)
or *biased* (free, with a large field ``h_i``). Solvers work on the reduced
problem over free spins; clamps fold into effective fields.

Every read draws its randomness from ``SeedSequence([seed, read_index])``, so
a read set is the same whether reads run serially or on several threads.
"""
from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np

logger = logging.getLogger(__name__)

MAX_EXACT_FREE = 24
THREADS_ENV = "ISING_SSL_THREADS"


def thread_count() -> int:
    """Worker threads, capped by ``$ISING_SSL_THREADS`` when set."""
    n = os.cpu_count() or 1
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {cap!r}") from None
    return n


def derive_seed(*keys: int) -> int:
    """32-bit seed from a tuple of non-negative integers."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


@dataclass(frozen=True)
class LayerProblem:
    """One Ising instance: dense symmetric ``J``, biases ``h``, clamps.

    ``clamps[i]`` is +1 or -1 for a fixed spin and 0 for a free one. A spin
    may carry a bias or a clamp but not both.
    """

    J: np.ndarray
    h: Optional[np.ndarray] = None
    clamps: Optional[np.ndarray] = None

    def __post_init__(self):
        J = np.array(self.J, dtype=float)
        if J.ndim != 2 or J.shape[0] != J.shape[1]:
            raise ValueError("J must be a square matrix")
        if not np.allclose(J, J.T):
            raise ValueError("J must be symmetric")
        np.fill_diagonal(J, 0.0)
        n = J.shape[0]
        h = np.zeros(n) if self.h is None else np.array(self.h, dtype=float)
        c = np.zeros(n, dtype=np.int8) if self.clamps is None else np.array(self.clamps, dtype=np.int8)
        if h.shape != (n,) or c.shape != (n,):
            raise ValueError("h and clamps must have one entry per spin")
        if not np.all(np.isin(c, (-1, 0, 1))):
            raise ValueError("clamps must be -1, 0 or +1")
        if np.any((c != 0) & (h != 0)):
            raise ValueError("a spin cannot be both clamped and biased")
        for name, value in (("J", J), ("h", h), ("clamps", c)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @classmethod
    def from_couplings(cls, n: int, couplings: dict, biases: dict = None, clamps: dict = None):
        """Build from sparse maps ``{(i, j): J}``, ``{i: h}`` and ``{i: +-1}``."""
        J = np.zeros((n, n))
        for (i, j), v in couplings.items():
            if i == j or not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"bad coupling index ({i}, {j})")
            J[i, j] = J[j, i] = v
        h = np.zeros(n)
        for i, v in (biases or {}).items():
            h[i] = v
        c = np.zeros(n, dtype=np.int8)
        for i, v in (clamps or {}).items():
            c[i] = v
        return cls(J, h, c)

    @property
    def n(self) -> int:
        return self.J.shape[0]

    @property
    def free(self) -> np.ndarray:
        return np.flatnonzero(self.clamps == 0)

    def reduced(self):
        """``(free_idx, J_ff, h_eff, const)`` for the problem over free spins."""
        free = self.free
        fixed = np.flatnonzero(self.clamps != 0)
        c = self.clamps[fixed].astype(float)
        J_ff = self.J[np.ix_(free, free)]
        h_eff = self.h[free] + self.J[np.ix_(free, fixed)] @ c
        const = -self.h[fixed] @ c - 0.5 * c @ self.J[np.ix_(fixed, fixed)] @ c
        return free, J_ff, h_eff, float(const)

    def field_scale(self) -> float:
        """Largest local-field bound ``sum_j |J_ij| + |h_i|`` over free spins."""
        _, J_ff, h_eff, _ = self.reduced()
        if J_ff.shape[0] == 0:
            return 0.0
        return float((np.abs(J_ff).sum(axis=1) + np.abs(h_eff)).max())

    def to_dict(self) -> dict:
        iu, ju = np.nonzero(np.triu(self.J, 1))
        return {
            "n": self.n,
            "couplings": [[int(i), int(j), float(self.J[i, j])] for i, j in zip(iu, ju)],
            "biases": {str(i): float(self.h[i]) for i in np.flatnonzero(self.h)},
            "clamps": {str(i): int(self.clamps[i]) for i in np.flatnonzero(self.clamps)},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LayerProblem":
        return cls.from_couplings(
            int(doc["n"]),
            {(int(i), int(j)): v for i, j, v in doc["couplings"]},
            {int(i): v for i, v in doc.get("biases", {}).items()},
            {int(i): v for i, v in doc.get("clamps", {}).items()},
        )


@dataclass(frozen=True)
class SpinConfiguration:
    spins: np.ndarray
    energy: float


@dataclass(frozen=True)
class AnnealSchedule:
    """Solver settings. ``None`` temperatures are derived from the problem.

    Simulated annealing interpolates geometrically from ``t_hot`` (default:
    the largest local-field bound) to ``t_cold`` (default ``1e-3 * t_hot``).
    The path-integral solver runs at temperature ``t_cold`` (default
    ``0.05 * t_hot``) with ``trotter`` replicas while the transverse field
    falls linearly from ``gamma0`` (default ``3 * t_hot``) to zero.
    """

    kind: str = "sa"
    sweeps: int = 2000
    reads: int = 32
    seed: int = 0
    t_hot: Optional[float] = None
    t_cold: Optional[float] = None
    trotter: int = 16
    gamma0: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("sa", "pimc"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.sweeps < 1 or self.reads < 1:
            raise ValueError("sweeps and reads must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.t_hot is not None and self.t_cold is not None and not self.t_hot > self.t_cold > 0:
            raise ValueError("need t_hot > t_cold > 0")
        if self.kind == "pimc" and self.trotter < 2:
            raise ValueError("path-integral solver needs at least 2 Trotter slices")

    def temperatures(self, scale: float):
        t_hot = self.t_hot if self.t_hot is not None else (scale if scale > 0 else 1.0)
        t_cold = self.t_cold if self.t_cold is not None else 1e-3 * t_hot
        if not t_hot > t_cold > 0:
            raise ValueError("need t_hot > t_cold > 0")
        return t_hot, t_cold

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class ReadSet:
    """``spins[r]`` is read ``r``; ``energies[r]`` its energy."""

    spins: np.ndarray
    energies: np.ndarray
    stats: dict = field(default_factory=dict)

    def __len__(self):
        return self.spins.shape[0]

    def best(self) -> SpinConfiguration:
        r = int(np.argmin(self.energies))
        return SpinConfiguration(self.spins[r].copy(), float(self.energies[r]))

    def to_dict(self) -> dict:
        return {
            "spins": self.spins.astype(int).tolist(),
            "energies": [float(e) for e in self.energies],
            "stats": self.stats,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ReadSet":
        return cls(np.array(doc["spins"], dtype=np.int8), np.array(doc["energies"]), doc.get("stats", {}))


def energy(problem: LayerProblem, spins) -> float:
    s = np.asarray(spins)
    if s.shape != (problem.n,):
        raise ValueError(f"expected {problem.n} spins, got shape {s.shape}")
    if not np.all(np.abs(s) == 1):
        raise ValueError("spins must be +-1")
    fixed = problem.clamps != 0
    if np.any(s[fixed] != problem.clamps[fixed]):
        raise ValueError("spin configuration violates a clamp")
    s = s.astype(float)
    return float(-problem.h @ s - 0.5 * s @ problem.J @ s)


def _assemble(problem: LayerProblem, free: np.ndarray, free_spins: np.ndarray) -> np.ndarray:
    full = problem.clamps.copy()
    full[free] = free_spins
    return full


# ---------------------------------------------------------------------------
# exact enumeration


@numba.njit(cache=True, nogil=True)
def _exact_kernel(J, h, tol):
    n = h.shape[0]
    s = -np.ones(n)
    f = h - J @ np.ones(n)
    E = np.sum(h) - 0.5 * np.sum(J)
    best = E
    best_key = 0
    g = 0
    for t in range(1, 1 << n):
        b = 0
        while (t >> b) & 1 == 0:
            b += 1
        k = n - 1 - b
        E += 2.0 * s[k] * f[k]
        s[k] = -s[k]
        g ^= 1 << b
        for j in range(n):
            f[j] += 2.0 * J[j, k] * s[k]
        if E < best - tol:
            best = E
            best_key = g
        elif E <= best + tol and g < best_key:
            best_key = g
    out = np.empty(n, dtype=np.int8)
    for k in range(n):
        out[k] = 1 if (best_key >> (n - 1 - k)) & 1 else -1
    return out


def exact_ground_state(problem: LayerProblem, max_free: int = MAX_EXACT_FREE) -> SpinConfiguration:
    """Minimum-energy configuration by enumeration over the free spins.

    Among (numerically) tied minima, the lexicographically smallest spin
    vector wins, with -1 ordered before +1.
    """
    free, J_ff, h_eff, const = problem.reduced()
    if free.size > max_free:
        raise ValueError(f"{free.size} free spins exceeds the exact-solver limit of {max_free}")
    if free.size == 0:
        spins = problem.clamps.copy()
        return SpinConfiguration(spins, energy(problem, spins))
    tol = 1e-9 * (np.abs(J_ff).sum() + np.abs(h_eff).sum() + 1.0)
    best = _exact_kernel(np.ascontiguousarray(J_ff), np.ascontiguousarray(h_eff), tol)
    spins = _assemble(problem, free, best)
    return SpinConfiguration(spins, energy(problem, spins))


# ---------------------------------------------------------------------------
# simulated annealing


@numba.njit(cache=True, nogil=True)
def _sa_kernel(indptr, indices, data, h, betas, seed):
    np.random.seed(seed)
    n = h.shape[0]
    s = np.empty(n)
    for i in range(n):
        s[i] = 1.0 if np.random.random() < 0.5 else -1.0
    accepted = 0
    for t in range(betas.shape[0]):
        beta = betas[t]
        for i in range(n):
            f = h[i]
            for p in range(indptr[i], indptr[i + 1]):
                f += data[p] * s[indices[p]]
            dE = 2.0 * s[i] * f
            if dE <= 0.0 or np.random.random() < math.exp(-beta * dE):
                s[i] = -s[i]
                accepted += 1
    out = np.empty(n, dtype=np.int8)
    for i in range(n):
        out[i] = 1 if s[i] > 0 else -1
    return out, accepted


def _csr(J):
    nz = J != 0
    indptr = np.concatenate([[0], np.cumsum(nz.sum(axis=1))]).astype(np.int64)
    rows, cols = np.nonzero(nz)
    return indptr, cols.astype(np.int64), np.ascontiguousarray(J[rows, cols])


def _run_reads(problem, schedule, kernel):
    free, J_ff, h_eff, _ = problem.reduced()
    R = schedule.reads
    if free.size == 0:
        spins = np.tile(problem.clamps, (R, 1))
        e = energy(problem, problem.clamps)
        return ReadSet(spins, np.full(R, e), {"acceptance_rate": 0.0, "best_energy": e})
    seeds = [derive_seed(schedule.seed, r) for r in range(R)]
    work = kernel(J_ff, h_eff, problem.field_scale())
    workers = min(thread_count(), R)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(work, seeds))
    else:
        results = [work(sd) for sd in seeds]
    spins = np.array([_assemble(problem, free, r[0]) for r in results], dtype=np.int8)
    energies = np.array([energy(problem, s) for s in spins])
    stats = {
        "best_energy": float(energies.min()),
        "acceptance_rate": float(sum(r[1] for r in results) / max(1, sum(r[2] for r in results))),
    }
    logger.debug("%s: %d reads, best energy %.6g, acceptance %.3f", schedule.kind, R, stats["best_energy"], stats["acceptance_rate"])
    return ReadSet(spins, energies, stats)


def simulated_anneal(problem: LayerProblem, schedule: AnnealSchedule = AnnealSchedule()) -> ReadSet:
    """Independent single-spin-flip Metropolis reads with geometric cooling."""
    if schedule.kind != "sa":
        raise ValueError("simulated_anneal needs a schedule of kind 'sa'")

    def kernel(J_ff, h_eff, scale):
        t_hot, t_cold = schedule.temperatures(scale)
        if schedule.sweeps == 1:
            temps = np.array([t_cold])
        else:
            temps = t_hot * (t_cold / t_hot) ** (np.arange(schedule.sweeps) / (schedule.sweeps - 1))
        betas = 1.0 / temps
        indptr, indices, data = _csr(J_ff)
        h = np.ascontiguousarray(h_eff)
        attempts = schedule.sweeps * h.size

        def work(seed):
            out, acc = _sa_kernel(indptr, indices, data, h, betas, seed)
            return out, acc, attempts

        return work

    return _run_reads(problem, schedule, kernel)


# ---------------------------------------------------------------------------
# path-integral Monte Carlo


@numba.njit(cache=True, nogil=True)
def _pimc_kernel(indptr, indices, data, h, P, T, jperp, seed):
    np.random.seed(seed)
    n = h.shape[0]
    s = np.empty((P, n))
    for i in range(n):
        v = 1.0 if np.random.random() < 0.5 else -1.0
        for p in range(P):
            s[p, i] = v
    accepted = 0
    beta = 1.0 / T
    for t in range(jperp.shape[0]):
        jp = jperp[t]
        for p in range(P):
            up = s[(p + 1) % P]
            dn = s[(p - 1) % P]
            for i in range(n):
                f = h[i]
                for q in range(indptr[i], indptr[i + 1]):
                    f += data[q] * s[p, indices[q]]
                dE = 2.0 * s[p, i] * (f / P + jp * (up[i] + dn[i]))
                if dE <= 0.0 or np.random.random() < math.exp(-beta * dE):
                    s[p, i] = -s[p, i]
                    accepted += 1
        # global moves: flip one spin in every replica at once
        for i in range(n):
            dE = 0.0
            for p in range(P):
                f = h[i]
                for q in range(indptr[i], indptr[i + 1]):
                    f += data[q] * s[p, indices[q]]
                dE += 2.0 * s[p, i] * f / P
            if dE <= 0.0 or np.random.random() < math.exp(-beta * dE):
                for p in range(P):
                    s[p, i] = -s[p, i]
    out = np.empty(n, dtype=np.int8)
    for i in range(n):
        out[i] = 1 if s[0, i] > 0 else -1
    return out, accepted


def path_integral_anneal(
    problem: LayerProblem, schedule: AnnealSchedule = AnnealSchedule(kind="pimc", sweeps=500)
) -> ReadSet:
    """Simulated quantum annealing over ``trotter`` imaginary-time replicas.

    The annealing fraction ``s`` falls linearly from 1 to 0 and sets the
    transverse field ``gamma0 * s``; replica ``k`` couples to its neighbours
    with ``-(T/2) log tanh(gamma / (P T))``. The returned read is replica 0.
    """
    if schedule.kind != "pimc":
        raise ValueError("path_integral_anneal needs a schedule of kind 'pimc'")

    def kernel(J_ff, h_eff, scale):
        t_hot, t_cold = schedule.temperatures(scale)
        P = schedule.trotter
        T = t_cold if schedule.t_cold is not None else 0.05 * t_hot
        gamma0 = schedule.gamma0 if schedule.gamma0 is not None else 3.0 * t_hot
        frac = 1.0 - np.arange(schedule.sweeps) / max(1, schedule.sweeps - 1)
        gamma = gamma0 * np.maximum(frac, 1e-8)
        jperp = -0.5 * T * np.log(np.tanh(gamma / (P * T)))
        indptr, indices, data = _csr(J_ff)
        h = np.ascontiguousarray(h_eff)
        attempts = schedule.sweeps * h.size * P

        def work(seed):
            out, acc = _pimc_kernel(indptr, indices, data, h, P, T, jperp, seed)
            return out, acc, attempts

        return work

    return _run_reads(problem, schedule, kernel)


def solve(problem: LayerProblem, schedule: AnnealSchedule) -> ReadSet:
    if schedule.kind == "pimc":
        return path_integral_anneal(problem, schedule)
    return simulated_anneal(problem, schedule)


def exact_readset(problem: LayerProblem) -> ReadSet:
    gs = exact_ground_state(problem)
    return ReadSet(gs.spins[None, :].copy(), np.array([gs.energy]), {"best_energy": gs.energy})


# ---------------------------------------------------------------------------
# readout and bias mode


def majority_readout(reads: ReadSet) -> np.ndarray:
    """Per-spin sign of the read sum; ties take the lowest-energy read's value."""
    if len(reads) < 1:
        raise ValueError("empty read set")
    total = reads.spins.astype(np.int64).sum(axis=0)
    out = np.sign(total).astype(np.int8)
    tie = out == 0
    if tie.any():
        out[tie] = reads.spins[int(np.argmin(reads.energies))][tie]
    return out


def default_h_mag(problem: LayerProblem) -> float:
    """Ten times the largest row sum of ``|J|`` (1.0 when there are no couplings)."""
    row = np.abs(problem.J).sum(axis=1).max() if problem.n else 0.0
    return 10.0 * row if row > 0 else 1.0


def bias_mode(problem: LayerProblem, h_mag: Optional[float] = None) -> LayerProblem:
    """Replace clamps with finite biases ``h_mag * clamp``, freeing those spins."""
    if h_mag is None:
        h_mag = default_h_mag(problem)
    if not h_mag > 0:
        raise ValueError("h_mag must be positive")
    h = problem.h + h_mag * problem.clamps.astype(float)
    return LayerProblem(problem.J, h, np.zeros(problem.n, dtype=np.int8))


def problem_to_json(problem: LayerProblem) -> str:
    return json.dumps(problem.to_dict(), sort_keys=True)
