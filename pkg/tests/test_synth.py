import itertools
import json

import numpy as np
import pytest

from innospace.core import TimeWindow
from innospace.rng import derive_seed
from innospace.significance import validate_pair
from innospace.synth import (CapabilityWorld, _planted_overlap_is_strict, generate, generate_null,
                             read_planted)


def test_zero_noise_perfect_cooccurrence():
    world = CapabilityWorld(planted=1, noise=0.0, lag=0, n_years=4)
    res = generate(world, seed=0)
    for y in world.years:
        S, T, P = (res.binary[(l, y)][:, 0] for l in "STP")
        assert np.array_equal(S, T) and np.array_equal(T, P)


def test_lag_shifts_cooccurrence():
    world = CapabilityWorld(planted=3, noise=0.0, lag=2, n_years=6)
    res = generate(world, seed=1)
    for y in range(2000, 2004):
        assert np.array_equal(res.binary[("S", y)][:, :3], res.binary[("T", y + 2)][:, :3])


def test_strict_overlap_and_planted_list():
    world = CapabilityWorld()
    res = generate(world, seed=3)
    assert _planted_overlap_is_strict(world, res.requirements)
    assert len(res.planted) == 6 * world.planted
    assert res.lag_for("S", "T") == 3 and res.lag_for("T", "S") == -3 and res.lag_for("T", "P") == 0


def test_determinism_and_files(tmp_path):
    world = CapabilityWorld(n_years=3)
    a = generate(world, seed=9, out_dir=tmp_path / "a")
    generate(world, seed=9, out_dir=tmp_path / "b")
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "planted_pairs.csv" in files and "world.json" in files and "S_2000.csv" in files
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert read_planted(tmp_path / "a" / "planted_pairs.csv") == list(a.planted)
    assert json.loads((tmp_path / "a" / "world.json").read_text())["seed"] == 9
    c = generate(world, seed=10)
    assert any(not np.array_equal(a.binary[k], c.binary[k]) for k in a.binary)


def test_unit_weights():
    res = generate(CapabilityWorld(n_years=2), seed=0)
    raw = res.store.raw("S", 2000)
    assert set(np.unique(raw.values.data)) == {1.0}


def test_nested_diversification_present():
    res = generate(CapabilityWorld(n_years=2, richness=(0.2, 0.95)), seed=0)
    d = res.binary[("P", 2001)].sum(axis=1)
    assert d.max() >= 3 * max(1, d.min())


def test_invalid_world():
    with pytest.raises(ValueError):
        CapabilityWorld(planted=30)
    with pytest.raises(ValueError):
        CapabilityWorld(noise=1.5)


def test_null_generator_is_poisson_product():
    store = generate_null(countries=20, activities=(6, 7), n_years=2, seed=1)
    assert [l.name for l in store.layers()] == ["S", "T"]
    assert store.raw("T", 2001).shape == (20, 7)


def _recall(world, seed, size=99, threshold=0.95):
    res = generate(world, seed)
    found = 0
    truth = 0
    for L1, L2 in itertools.permutations(world.layers, 2):
        lag = res.lag_for(L1, L2)
        y1 = world.first_year + max(0, -lag)
        m1 = res.store.binary(L1, TimeWindow(y1, 3, "stack"))
        m2 = res.store.binary(L2, TimeWindow(y1 + lag, 3, "stack"))
        _, r = validate_pair(m1, m2, size, derive_seed(seed, L1, L2))
        sig = r.significant(threshold)
        planted = res.planted_for(L1, L2)
        truth += len(planted)
        found += sum(1 for a, b in planted if sig[r.rows.index(a), r.cols.index(b)])
    return found / truth


@pytest.mark.slow
def test_recall_monotone_in_noise():
    low = np.mean([_recall(CapabilityWorld(noise=0.02, n_years=8), s) for s in range(3)])
    high = np.mean([_recall(CapabilityWorld(noise=0.25, n_years=8), s) for s in range(3)])
    assert low >= high


@pytest.mark.slow
def test_pure_noise_no_planted_signal():
    world = CapabilityWorld(noise=0.5, n_years=8)
    rates = [_recall(world, s, size=199, threshold=0.99) for s in range(3)]
    # 270 planted links tested at the 1% level
    n = 3 * 90
    assert np.mean(rates) <= 0.01 + 3 * np.sqrt(0.01 * 0.99 / n)
