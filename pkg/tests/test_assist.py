import numpy as np
import pytest

from innospace.assist import align_countries, assist, assist_lagged, assist_values
from innospace.core import BinaryMatrix, TimeWindow
from innospace.errors import MatrixError, MissingDataError
from innospace.synth import CapabilityWorld, generate

from oracles import assist_triple_loop, markov_composition


def bm(A, layer="S", year=2000, rows=None, cols=None, span=1, pooling="sum"):
    return BinaryMatrix.from_dense(layer, TimeWindow(year, span, pooling), np.asarray(A), rows=rows, cols=cols)


def test_identity():
    B = assist(bm(np.eye(2)), bm(np.eye(2), "T"))
    assert B.values.tolist() == [[1.0, 0.0], [0.0, 1.0]]


def test_all_ones_gives_one_third():
    B = assist(bm(np.ones((2, 2))), bm(np.ones((2, 3)), "T"))
    assert np.all(B.values == 1.0 / 3.0)


def test_triple_loop_oracle(rng):
    for _ in range(30):
        M1 = (rng.random((10, 15)) < 0.4).astype(int)
        M2 = (rng.random((10, 12)) < 0.4).astype(int)
        B = assist(bm(M1), bm(M2, "T"))
        want = assist_triple_loop(M1, M2)
        keep = M1.sum(axis=0) > 0
        assert np.max(np.abs(B.values - want[keep])) <= 1e-15


def test_markov_composition(rng):
    M1 = (rng.random((9, 6)) < 0.5).astype(int)
    M2 = (rng.random((9, 7)) < 0.5).astype(int)
    B, u = assist_values(M1, M2)
    assert np.allclose(B, markov_composition(M1, M2), atol=1e-15)


def test_row_stochastic(rng):
    for _ in range(20):
        M1 = (rng.random((12, 8)) < 0.5).astype(int)
        M2 = (rng.random((12, 9)) < 0.5).astype(int)
        M2[M2.sum(axis=1) == 0, 0] = 1
        B = assist(bm(M1), bm(M2, "T"))
        assert np.all(np.abs(B.row_sums() - 1) <= 1e-12)
        assert np.all((B.values >= 0) & (B.values <= 1))


def test_zero_diversification_flags_substochastic():
    M1 = np.array([[1, 0], [1, 1]])
    M2 = np.array([[0, 0], [1, 0]])
    B = assist(bm(M1), bm(M2, "T"))
    assert B.substochastic_rows == ("a0",)
    assert B.row_sums()[0] == pytest.approx(0.5)
    assert B.row_sums()[1] == pytest.approx(1.0)


def test_zero_ubiquity_row_omitted():
    M1 = np.array([[1, 0], [1, 0]])
    B = assist(bm(M1), bm(np.eye(2), "T"))
    assert B.rows == ("a0",) and B.omitted_rows == ("a1",)


def test_alignment_by_intersection():
    m1 = bm(np.eye(3), rows=("FR", "IT", "US"))
    m2 = bm(np.ones((2, 2)), "T", rows=("US", "DE"))
    a1, a2, d1, d2 = align_countries(m1, m2)
    assert a1.rows == a2.rows == ("US",)
    assert d1 == ("FR", "IT") and d2 == ("DE",)
    with pytest.raises(MatrixError):
        assist(bm(np.eye(2), rows=("A", "B")), bm(np.eye(2), "T", rows=("C", "D")))


def test_permutation_equivariance(rng):
    M1 = (rng.random((8, 5)) < 0.5).astype(int)
    M2 = (rng.random((8, 6)) < 0.5).astype(int)
    M1[:, M1.sum(axis=0) == 0] = 1
    base = assist(bm(M1), bm(M2, "T"))
    perm_c = rng.permutation(8)
    rows = tuple(f"c{i}" for i in range(8))
    shuffled = assist(bm(M1[perm_c], rows=[rows[i] for i in perm_c]), bm(M2[perm_c], "T", rows=[rows[i] for i in perm_c]))
    assert np.allclose(base.values, shuffled.values, atol=1e-15)
    perm_a = rng.permutation(5)
    cols = [f"a{j}" for j in perm_a]
    B2 = assist(bm(M1[:, perm_a], cols=cols), bm(M2, "T"))
    assert np.allclose(B2.values, base.values[perm_a], atol=1e-15)


def test_stacked_rows_align_by_offset():
    m1 = bm(np.eye(2), rows=("IT@2000", "IT@2001"), span=2, pooling="stack")
    m2 = bm(np.eye(2), "T", year=2003, rows=("IT@2004", "IT@2003"), span=2, pooling="stack")
    a1, a2, _, _ = align_countries(m1, m2)
    assert a1.rows == a2.rows == ("IT@+0", "IT@+1")
    # IT@2000 pairs with IT@2003 (column 1 of m2), IT@2001 with IT@2004 (column 0)
    assert assist(m1, m2).values.tolist() == [[0.0, 1.0], [1.0, 0.0]]


@pytest.fixture(scope="module")
def synth_store():
    return generate(CapabilityWorld(n_years=8), seed=4).store


def test_lagged_manual_composition(synth_store):
    B = assist_lagged(synth_store, "S", "T", 2001, 2003)
    m1 = synth_store.binary("S", TimeWindow(2001))
    m2 = synth_store.binary("T", TimeWindow(2003))
    a1, a2, _, _ = align_countries(m1, m2)
    want = assist_triple_loop(a1.dense().astype(int), a2.dense().astype(int))
    assert B.dy == 2
    assert np.allclose(B.values, want[a1.ubiquity > 0], atol=1e-15)


def test_lagged_degenerate_lag(synth_store):
    m = synth_store.binary("S", TimeWindow(2002))
    B = assist_lagged(synth_store, "S", "S", 2002, 2002)
    assert np.array_equal(B.values, assist(m, m).values)


def test_lagged_reversed_years(synth_store):
    B = assist_lagged(synth_store, "S", "T", 2005, 2002)
    assert B.dy == -3
    want = assist(synth_store.binary("S", TimeWindow(2005)), synth_store.binary("T", TimeWindow(2002)))
    assert np.array_equal(B.values, want.values)


def test_lagged_missing(synth_store):
    with pytest.raises(MissingDataError) as exc:
        assist_lagged(synth_store, "S", "T", 2006, 2007, span=3)
    assert ("S", 2008) in exc.value.missing and ("T", 2009) in exc.value.missing
