import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ising_ssl.annealer import (
    AnnealSchedule,
    LayerProblem,
    ReadSet,
    bias_mode,
    default_h_mag,
    derive_seed,
    energy,
    exact_ground_state,
    majority_readout,
    path_integral_anneal,
    problem_to_json,
    simulated_anneal,
    solve,
    thread_count,
)
from ising_ssl.dataset import SplitSpec, load_iris, pca_project, split
from ising_ssl.oracle import ssl_instance
from ising_ssl.similarity import DiagonalGaussian, coupling, knn_mask, similarity_matrix

FAST = AnnealSchedule(sweeps=300, reads=8)


def random_problem(n, seed, signed=True, bias=True):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n)) if signed else rng.random((n, n))
    J = np.triu(A, 1)
    J = J + J.T
    h = rng.normal(size=n) if bias else None
    return LayerProblem(J, h)


def naive_energy(J, h, s):
    e = 0.0
    n = len(s)
    for i in range(n):
        e -= h[i] * s[i]
        for j in range(i + 1, n):
            e -= J[i, j] * s[i] * s[j]
    return e


def brute_force(problem):
    free = problem.free
    best = None
    for bits in itertools.product((-1, 1), repeat=free.size):
        s = problem.clamps.astype(int).copy()
        s[free] = bits
        e = naive_energy(problem.J, problem.h, s)
        if best is None or e < best[0] - 1e-12:
            best = (e, s)
    return best


def chain():
    return LayerProblem.from_couplings(3, {(0, 1): 1.0, (1, 2): 1.0}, clamps={0: 1, 2: 1})


def test_energy_examples():
    assert energy(LayerProblem(np.zeros((1, 1)), [1.0]), [1]) == -1.0
    p = LayerProblem.from_couplings(2, {(0, 1): 1.0})
    assert energy(p, [1, 1]) == -1.0
    assert energy(p, [1, -1]) == 1.0


def test_energy_matches_naive_sum():
    p = random_problem(6, 0)
    rng = np.random.default_rng(1)
    for _ in range(20):
        s = rng.choice([-1, 1], size=6)
        assert energy(p, s) == pytest.approx(naive_energy(p.J, p.h, s), abs=1e-12)


def test_energy_rejects_clamp_violation():
    with pytest.raises(ValueError, match="clamp"):
        energy(chain(), [-1, 1, 1])


def test_problem_validation():
    with pytest.raises(ValueError):
        LayerProblem(np.array([[0, 1], [2, 0]]))
    with pytest.raises(ValueError, match="both"):
        LayerProblem(np.zeros((2, 2)), [1.0, 0.0], [1, 0])
    with pytest.raises(ValueError):
        LayerProblem.from_couplings(2, {(0, 2): 1.0})


def test_problem_json_roundtrip():
    p = LayerProblem.from_couplings(4, {(0, 1): 0.5, (2, 3): -1.5}, {1: 0.25}, {0: -1})
    back = LayerProblem.from_dict(json.loads(problem_to_json(p)))
    np.testing.assert_array_equal(back.J, p.J)
    np.testing.assert_array_equal(back.h, p.h)
    np.testing.assert_array_equal(back.clamps, p.clamps)


def test_exact_clamped_chain():
    gs = exact_ground_state(chain())
    assert gs.spins.tolist() == [1, 1, 1]
    assert gs.energy == -2.0


def test_exact_tie_break():
    gs = exact_ground_state(LayerProblem.from_couplings(2, {(0, 1): 1.0}))
    assert gs.spins.tolist() == [-1, -1]


@pytest.mark.parametrize("seed", range(6))
def test_exact_matches_brute_force(seed):
    p = random_problem(8, seed)
    e, s = brute_force(p)
    gs = exact_ground_state(p)
    assert gs.energy == pytest.approx(e, abs=1e-9)


def test_exact_lower_bound_random_sampling():
    p = random_problem(12, 3)
    gs = exact_ground_state(p)
    rng = np.random.default_rng(0)
    samples = rng.choice([-1, 1], size=(10_000, 12)).astype(float)
    e = -samples @ p.h - 0.5 * np.einsum("ri,ij,rj->r", samples, p.J, samples)
    assert gs.energy <= e.min() + 1e-12


def test_exact_too_many_free():
    with pytest.raises(ValueError, match="limit"):
        exact_ground_state(LayerProblem(np.zeros((25, 25))))


def test_sa_all_clamped():
    p = LayerProblem.from_couplings(2, {(0, 1): 1.0}, clamps={0: 1, 1: -1})
    reads = simulated_anneal(p, FAST)
    assert np.all(reads.spins == [1, -1])
    assert np.all(reads.energies == 1.0)


def test_sa_clamped_chain_every_read():
    reads = simulated_anneal(chain())
    assert np.all(reads.spins[:, 1] == 1)
    assert majority_readout(reads).tolist() == [1, 1, 1]


def test_sa_clamps_hold_in_every_read():
    p = ssl_instance(3)
    for reads in (simulated_anneal(p, FAST), path_integral_anneal(p, AnnealSchedule(kind="pimc", sweeps=50, reads=4))):
        fixed = p.clamps != 0
        assert np.all(reads.spins[:, fixed] == p.clamps[fixed])
        for s, e in zip(reads.spins, reads.energies):
            assert e == pytest.approx(energy(p, s))


def test_sa_deterministic_across_threads(monkeypatch):
    p = ssl_instance(5)
    monkeypatch.setenv("ISING_SSL_THREADS", "1")
    a = simulated_anneal(p, FAST)
    monkeypatch.setenv("ISING_SSL_THREADS", "4")
    b = simulated_anneal(p, FAST)
    np.testing.assert_array_equal(a.spins, b.spins)
    np.testing.assert_array_equal(a.energies, b.energies)


def test_thread_env_validation(monkeypatch):
    monkeypatch.setenv("ISING_SSL_THREADS", "many")
    with pytest.raises(ValueError):
        thread_count()
    monkeypatch.setenv("ISING_SSL_THREADS", "1")
    assert thread_count() == 1


def test_sa_oracle_small_suite():
    hits = 0
    for seed in range(20):
        p = ssl_instance(seed)
        hits += simulated_anneal(p).best().energy <= exact_ground_state(p).energy + 1e-9
    assert hits >= 19


def test_pimc_trivial_cases():
    sched = AnnealSchedule(kind="pimc", sweeps=100, reads=4)
    p = LayerProblem.from_couplings(2, {(0, 1): 1.0}, clamps={0: 1, 1: 1})
    assert np.all(path_integral_anneal(p, sched).spins == 1)
    one = LayerProblem(np.zeros((1, 1)), [0.5])
    assert np.all(path_integral_anneal(one, sched).spins == 1)


def test_pimc_finds_ground_states():
    sched = AnnealSchedule(kind="pimc", sweeps=300, reads=8)
    hits = 0
    for seed in range(10):
        p = ssl_instance(seed, n_free=12)
        hits += solve(p, sched).best().energy <= exact_ground_state(p).energy + 1e-9
    assert hits >= 8


def test_schedule_validation():
    with pytest.raises(ValueError):
        AnnealSchedule(sweeps=0)
    with pytest.raises(ValueError):
        AnnealSchedule(t_hot=1.0, t_cold=2.0)
    with pytest.raises(ValueError):
        AnnealSchedule(kind="pimc", trotter=1)
    with pytest.raises(ValueError):
        simulated_anneal(chain(), AnnealSchedule(kind="pimc"))


def test_majority_examples():
    single = ReadSet(np.array([[1, -1, 1]]), np.array([0.0]))
    assert majority_readout(single).tolist() == [1, -1, 1]
    three = ReadSet(np.array([[1, -1], [1, -1], [1, 1]]), np.zeros(3))
    assert majority_readout(three).tolist() == [1, -1]
    tie = ReadSet(np.array([[1, 1], [-1, 1]]), np.array([0.0, -1.0]))
    assert majority_readout(tie).tolist() == [-1, 1]


def test_bias_mode_matches_clamps():
    for seed in range(10):
        p = ssl_instance(seed, n_free=10, n_clamped=4)
        clamped = exact_ground_state(p).spins
        biased = exact_ground_state(bias_mode(p)).spins
        np.testing.assert_array_equal(clamped, biased)


def test_bias_mode_validation_and_limits():
    with pytest.raises(ValueError):
        bias_mode(chain(), 0.0)
    empty = LayerProblem(np.zeros((2, 2)), clamps=[1, -1])
    assert default_h_mag(empty) == 1.0
    weak = bias_mode(empty, 1e-12)
    assert weak.free.size == 2
    assert weak.h.tolist() == [1e-12, -1e-12]


def test_bias_mode_labeled_spins_on_iris_subsample():
    ds = pca_project(split(load_iris(), SplitSpec(0.0)), 2)
    rng = np.random.default_rng(0)
    idx = np.sort(rng.choice(ds.n, 20, replace=False))
    X = ds.points[idx]
    y = ds.labeled_y[idx]
    S = similarity_matrix(X, DiagonalGaussian(np.ones((1, 2)), np.ones(1)))
    J = coupling(S, knn_mask(S, 4))
    labeled = np.arange(20) < 8
    clamps = np.where(labeled, np.where(y == 0, 1, -1), 0)
    p = bias_mode(LayerProblem(J, None, clamps))
    reads = simulated_anneal(p, AnnealSchedule(reads=32))
    assert np.all(reads.spins[:, labeled] == clamps[labeled])


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_global_flip_symmetry(seed):
    p = random_problem(7, seed, bias=False)
    s = np.random.default_rng(seed).choice([-1, 1], size=7)
    assert energy(p, s) == pytest.approx(energy(p, -s))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), k=st.integers(0, 5))
def test_gauge_flip_preserves_spectrum(seed, k):
    p = random_problem(6, seed)
    J = p.J.copy()
    h = p.h.copy()
    J[k, :] *= -1
    J[:, k] *= -1
    h[k] *= -1
    q = LayerProblem(J, h)
    configs = np.array(list(itertools.product((-1, 1), repeat=6)))
    ep = sorted(energy(p, s) for s in configs)
    eq = sorted(energy(q, s) for s in configs)
    np.testing.assert_allclose(ep, eq, atol=1e-12)


def test_exact_bounds_every_solver():
    p = ssl_instance(7)
    gs = exact_ground_state(p)
    for reads in (simulated_anneal(p, FAST), path_integral_anneal(p, AnnealSchedule(kind="pimc", sweeps=50, reads=4))):
        assert gs.energy <= reads.energies.min() + 1e-9


def test_derive_seed_is_stable():
    assert derive_seed(1, 2) == derive_seed(1, 2)
    assert derive_seed(1, 2) != derive_seed(2, 1)
    assert 0 <= derive_seed(0) < 2**32


def test_readset_json_roundtrip():
    reads = simulated_anneal(chain(), FAST)
    back = ReadSet.from_dict(json.loads(json.dumps(reads.to_dict())))
    np.testing.assert_array_equal(back.spins, reads.spins)
    assert 0.0 <= reads.stats["acceptance_rate"] <= 1.0
