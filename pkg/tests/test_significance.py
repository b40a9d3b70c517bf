import numpy as np
import pytest
from scipy import stats

from innospace.assist import assist, assist_values
from innospace.bicm import FREE, BicmModel, fit_model
from innospace.core import BinaryMatrix, TimeWindow
from innospace.errors import EnsembleSizeError
from innospace.rng import substream
from innospace.significance import (check_resolution, null_assist_ensemble, p_values, required_ensemble_size,
                                    resolution_message, validate_pair, validated_network)

from conftest import random_binary
from oracles import enumerate_null_mean


def product_model(P_rows, P_cols, x, y, layer="S"):
    return BicmModel(tuple(P_rows), tuple(P_cols), np.exp(x), np.exp(y), np.full(len(x), FREE),
                     np.full(len(y), FREE), layer=layer)


def pair_models(rng, n_c, n1, n2):
    rows = [f"c{i}" for i in range(n_c)]
    x = rng.normal(-0.5, 0.7, n_c)
    m1 = product_model(rows, [f"s{j}" for j in range(n1)], x, rng.normal(-0.3, 0.7, n1))
    m2 = product_model(rows, [f"t{j}" for j in range(n2)], x, rng.normal(-0.3, 0.7, n2), "T")
    return m1, m2


def bm(A, layer="S", rows=None, cols=None):
    return BinaryMatrix.from_dense(layer, TimeWindow(2000), A, rows=rows, cols=cols)


def test_resolution_rule():
    assert required_ensemble_size(0.99) == 99
    assert required_ensemble_size(0.999) == 999
    assert required_ensemble_size(0.95) == 19
    with pytest.raises(EnsembleSizeError, match="1000"):
        check_resolution(0.999, 100)
    assert check_resolution(0.999, 1000)
    with pytest.warns(UserWarning):
        assert not check_resolution(0.999, 100, strict=False)
    assert "999" in resolution_message(0.999, 100)


def test_single_sample_reproducible(rng):
    m1, m2 = pair_models(rng, 6, 3, 4)
    a = null_assist_ensemble(m1, m2, 1, seed=5)
    b = null_assist_ensemble(m1, m2, 1, seed=5)
    assert np.array_equal(a.samples, b.samples, equal_nan=True)


def test_point_mass_null_gives_p_one():
    # nested (Ferrers) matrices reduce completely, so the fitted pi equals M
    A1 = np.array([[1, 1, 1, 1], [1, 1, 1, 0], [1, 1, 0, 0], [1, 0, 0, 0], [1, 1, 0, 0], [1, 1, 1, 0]], bool)
    A2 = np.array([[1, 1, 1], [1, 1, 0], [1, 0, 0], [1, 0, 0], [1, 1, 1], [1, 1, 0]], bool)
    m1, m2 = bm(A1), bm(A2, "T")
    model1, model2 = fit_model(m1), fit_model(m2)
    assert np.array_equal(model1.probabilities, A1) and np.array_equal(model2.probabilities, A2)
    obs = assist(m1, m2)
    ens = null_assist_ensemble(model1, model2, 25, seed=1, observed=obs, keep_samples=True)
    assert np.all(ens.samples == obs.values[None])
    assert np.all(p_values(obs, ens).p == 1.0)


def test_ensemble_mean_matches_enumeration():
    gen = np.random.default_rng(8)
    m1, m2 = pair_models(gen, 2, 2, 2)
    exact = enumerate_null_mean(m1.probabilities, m2.probabilities)
    S = 20000
    ens = null_assist_ensemble(m1, m2, S, seed=3)
    mean = ens.mean()
    var = ens.total_sq / ens.defined[:, None] - mean**2
    se = np.sqrt(var / ens.defined[:, None])
    assert np.all(np.abs(mean - exact) <= 4 * se + 1e-12)


def test_extremes():
    gen = np.random.default_rng(0)
    m1, m2 = pair_models(gen, 10, 3, 3)
    S = 50
    B_above = np.full((3, 3), 2.0)   # B never exceeds 1
    B_below = np.full((3, 3), -1.0)
    ens_hi = null_assist_ensemble(m1, m2, S, 0, observed=B_above)
    ens_lo = null_assist_ensemble(m1, m2, S, 0, observed=B_below)
    assert np.all(ens_hi.exceed == 0)
    assert np.all(ens_lo.exceed == ens_lo.defined[:, None])


def test_worker_count_does_not_change_result(rng):
    m1, m2 = pair_models(rng, 15, 6, 7)
    obs = np.full((6, 7), 0.15)
    a = null_assist_ensemble(m1, m2, 64, 11, observed=obs, keep_samples=True)
    b = null_assist_ensemble(m1, m2, 64, 11, observed=obs, keep_samples=True, workers=3)
    assert np.array_equal(a.exceed, b.exceed)
    assert np.array_equal(a.samples, b.samples, equal_nan=True)


def test_streaming_equals_stored(rng):
    m1, m2 = pair_models(rng, 12, 5, 6)
    A1 = m1.draw(substream(0, "obs"))
    A2 = m2.draw(substream(0, "obs"))
    A1[:, A1.sum(axis=0) == 0] = True
    obs = assist(bm(A1, rows=m1.rows, cols=m1.cols), bm(A2, "T", rows=m2.rows, cols=m2.cols))
    streamed = p_values(obs, null_assist_ensemble(m1, m2, 80, 2, observed=obs))
    stored = p_values(obs, null_assist_ensemble(m1, m2, 80, 2))
    assert np.array_equal(streamed.exceed, stored.exceed)


def test_self_calibration_uniform_p():
    # one link per replicate so the p-values are independent
    gen = np.random.default_rng(21)
    m1, m2 = pair_models(gen, 40, 12, 12)
    S, reps = 99, 400
    ps = []
    for r in range(reps):
        g = substream(77, r)
        A1, A2 = m1.draw(g), m2.draw(g)
        B, u = assist_values(A1, A2)
        obs = np.where(u[:, None] > 0, B, np.inf)
        ens = null_assist_ensemble(m1, m2, S, 1000 + r, observed=obs)
        i, j = r % 12, (r // 12) % 12
        ps.append((1 + ens.exceed[i, j]) / (1 + S))
    ps = np.array(ps)
    for alpha in (0.05, 0.1, 0.25, 0.5):
        frac = np.mean(ps <= alpha + 1e-12)
        se = np.sqrt(alpha * (1 - alpha) / reps)
        assert abs(frac - alpha) <= 3 * se, (alpha, frac)
    # Kolmogorov-Smirnov distance to the uniform grid
    grid = np.arange(1, S + 2) / (S + 1)
    ecdf = np.searchsorted(np.sort(ps), grid, side="right") / reps
    assert np.max(np.abs(ecdf - grid)) <= stats.kstwo.ppf(0.999, reps)


def test_threshold_monotonicity_and_half(rng):
    m = random_binary(rng, 40, 15, 0.35)
    m2 = random_binary(rng, 40, 15, 0.35, layer="T")
    _, res = validate_pair(m, m2, 199, 4, thresholds=(0.5, 0.9, 0.99))
    s50, s90, s99 = (res.flags[t] for t in (0.5, 0.9, 0.99))
    assert np.all(s90 <= s50) and np.all(s99 <= s90)
    assert np.all(res.p > 0) and np.all(res.p <= 1)


def test_validated_network_resolution_and_degrees(rng):
    m = random_binary(rng, 30, 10, 0.4)
    m2 = random_binary(rng, 30, 12, 0.4, layer="T")
    _, res = validate_pair(m, m2, 99, 4)
    with pytest.raises(EnsembleSizeError):
        validated_network([res], 0.999)
    net = validated_network([res], 0.99)
    # at S = 99 and t = 0.99 only links above every sample validate
    assert all(e.p == pytest.approx(0.01) for e in net.edges)
    assert net.edges == tuple(e for e in net.edges if res.exceed[res.rows.index(e.source_code),
                                                                  res.cols.index(e.target_code)] == 0)
    for (layer, code), k in net.degrees.items():
        assert k == sum(1 for e in net.edges if (e.source_layer, e.source_code) == (layer, code)
                        or (e.target_layer, e.target_code) == (layer, code))
