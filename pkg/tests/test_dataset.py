import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ising_ssl.dataset import (
    Dataset,
    ParseError,
    SplitSpec,
    generate_blobs,
    load_csv,
    load_digits_2d,
    load_iris,
    pca_project,
    split,
)


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_csv_labeled_and_unlabeled_rows(tmp_path):
    ds = load_csv(write(tmp_path, "0,0,A\n1,1,\n"))
    assert (ds.l, ds.u, ds.d) == (1, 1, 2)
    assert ds.label_names == ("A",)


def test_load_csv_names_in_first_appearance_order(tmp_path):
    ds = load_csv(write(tmp_path, "0,B\n1,A\n2,B\n"))
    assert ds.label_names == ("B", "A")
    assert ds.labeled_y.tolist() == [0, 1, 0]


def test_load_csv_non_numeric_names_row(tmp_path):
    with pytest.raises(ParseError) as err:
        load_csv(write(tmp_path, "x,1,A\n"))
    assert err.value.row == 1
    assert "row 1" in str(err.value)


def test_load_csv_ragged_row(tmp_path):
    with pytest.raises(ParseError) as err:
        load_csv(write(tmp_path, "0,0,A\n1,B\n"))
    assert err.value.row == 2


def test_load_csv_empty_and_missing(tmp_path):
    with pytest.raises(ValueError, match="empty"):
        load_csv(write(tmp_path, "\n\n"))
    with pytest.raises(FileNotFoundError, match="nope.csv"):
        load_csv(tmp_path / "nope.csv")


def test_load_csv_without_labels(tmp_path):
    ds = load_csv(write(tmp_path, "0,1\n2,3\n"), has_labels=False)
    assert (ds.l, ds.u, ds.d) == (0, 2, 2)


def test_iris_fixture():
    ds = load_iris()
    assert (ds.n, ds.d, ds.n_labels) == (150, 4, 3)
    assert ds.label_counts().tolist() == [50, 50, 50]


def test_digits_fixture():
    ds = load_digits_2d()
    assert (ds.n, ds.d, ds.n_labels) == (200, 2, 4)
    assert ds.label_names == ("1", "8", "5", "6")


def test_split_fraction_zero_is_identity():
    ds = load_iris()
    out = split(ds, SplitSpec(0.0, seed=3))
    np.testing.assert_array_equal(out.labeled_x, ds.labeled_x)
    np.testing.assert_array_equal(out.labeled_y, ds.labeled_y)
    assert out.u == 0 and out.hidden_truth.size == 0


def test_split_iris_eighty_percent():
    out = split(load_iris(), SplitSpec(0.8, seed=0))
    assert (out.l, out.u) == (30, 120)
    assert np.all(out.label_counts() >= 1)
    assert out.hidden_truth.shape == (120,)


def test_split_is_deterministic():
    ds = load_iris()
    a, b = split(ds, SplitSpec(0.5, 7)), split(ds, SplitSpec(0.5, 7))
    assert a.fingerprint() == b.fingerprint()
    np.testing.assert_array_equal(a.hidden_truth, b.hidden_truth)
    assert split(ds, SplitSpec(0.5, 8)).fingerprint() != a.fingerprint()


def test_split_rejects_starving_a_label():
    ds = Dataset(np.arange(4.0)[:, None], np.array([0, 0, 0, 1]), np.empty((0, 1)), ("a", "b"))
    with pytest.raises(ValueError, match="lose every labeled point"):
        split(ds, SplitSpec(0.9, 0))


def test_split_rejects_partially_labeled_input(tmp_path):
    ds = load_csv(write(tmp_path, "0,0,A\n1,1,\n"))
    with pytest.raises(ValueError):
        split(ds, SplitSpec(0.5))


def _multiset(x, y):
    return sorted(map(tuple, np.column_stack([x, y]).tolist()))


@settings(max_examples=30, deadline=None)
@given(frac=st.floats(0.0, 0.85), seed=st.integers(0, 2**31), stratified=st.booleans())
def test_split_merge_roundtrip_and_proportions(frac, seed, stratified):
    ds = generate_blobs([[0, 0], [5, 0], [0, 5]], 12, 0.5, seed=1)
    try:
        out = split(ds, SplitSpec(frac, seed, stratified))
    except ValueError:
        assert not stratified
        return
    assert out.u == int(np.floor(frac * ds.n))
    back = out.merged()
    assert _multiset(back.labeled_x, back.labeled_y) == _multiset(ds.labeled_x, ds.labeled_y)
    if stratified:
        removed = ds.label_counts() - out.label_counts()
        assert np.all(np.abs(removed - ds.label_counts() * out.u / ds.n) <= 1)
        assert np.all(out.label_counts() >= 1)


def test_pca_axis_aligned():
    x = np.array([[-2.0, 0.0], [-1.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    ds = Dataset(x, np.zeros(4, dtype=int), np.empty((0, 2)), ("a",))
    z = pca_project(ds, 1).labeled_x[:, 0]
    np.testing.assert_allclose(np.abs(z), np.abs(x[:, 0]))
    assert abs(z @ x[:, 0]) == pytest.approx(10.0)


def test_pca_diagonal_direction():
    x = np.array([[1.0, 1.0], [-1.0, -1.0], [2.0, 2.0], [-2.0, -2.0]])
    ds = Dataset(x, np.zeros(4, dtype=int), np.empty((0, 2)), ("a",))
    z = pca_project(ds, 1).labeled_x[:, 0]
    r2 = np.sqrt(2)
    np.testing.assert_allclose(np.abs(z), [r2, r2, 2 * r2, 2 * r2])


def test_pca_iris_against_dense_eigensolve():
    ds = split(load_iris(), SplitSpec(0.3, 0))
    out = pca_project(ds, 2)
    X = ds.points
    C = np.cov(X.T)
    w, V = np.linalg.eig(C)  # independent solver path
    V = np.real(V[:, np.argsort(-np.real(w))[:2]])
    oracle = (X - X.mean(axis=0)) @ V
    Z = out.points
    assert Z[:, 0].var() >= Z[:, 1].var()
    np.testing.assert_allclose(Z @ Z.T, oracle @ oracle.T, atol=1e-9)
    np.testing.assert_array_equal(out.labeled_y, ds.labeled_y)
    np.testing.assert_array_equal(out.hidden_truth, ds.hidden_truth)


def test_pca_zero_variance_and_bad_dim():
    ds = Dataset(np.ones((4, 2)), np.zeros(4, dtype=int), np.empty((0, 2)), ("a",))
    with pytest.raises(ValueError, match="zero total variance"):
        pca_project(ds, 1)
    with pytest.raises(ValueError):
        pca_project(load_iris(), 5)


def test_pca_tie_breaks_by_axis():
    # equal variance on both axes
    x = np.array([[1.0, 0], [-1, 0], [0, 1], [0, -1]])
    ds = Dataset(x, np.zeros(4, dtype=int), np.empty((0, 2)), ("a",))
    z = pca_project(ds, 2).labeled_x
    np.testing.assert_allclose(z, x, atol=1e-12)


def test_blobs_degenerate_spread():
    ds = generate_blobs([[1.0, 2.0]], 3, 1e-12, seed=0)
    assert ds.n_labels == 1 and ds.l == 3
    np.testing.assert_allclose(ds.labeled_x, [[1, 2]] * 3, atol=1e-9)


def test_blobs_barycenters_near_centers():
    centers = np.array([[0.0, 0.0], [100.0, 0.0]])
    ds = generate_blobs(centers, 50, 1.0, seed=4)
    for k in range(2):
        mean = ds.labeled_x[ds.labeled_y == k].mean(axis=0)
        assert np.linalg.norm(mean - centers[k]) < 1.0


def test_blobs_deterministic():
    a = generate_blobs([[0, 0], [3, 3]], 5, 0.4, seed=11)
    b = generate_blobs([[0, 0], [3, 3]], 5, 0.4, seed=11)
    assert a.labeled_x.tobytes() == b.labeled_x.tobytes()
