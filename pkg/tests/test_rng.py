import numpy as np

from innospace.rng import derive_seed, substream


def test_substream_reproducible():
    a = substream(5, "null", 3).random(8)
    b = substream(5, "null", 3).random(8)
    assert np.array_equal(a, b)


def test_keys_distinct():
    draws = {tuple(substream(5, *k).integers(0, 2**32, 4)) for k in [(0,), (1,), ("a",), ("b",), (-1,), (1, 0)]}
    assert len(draws) == 6
    assert derive_seed(1, "x") != derive_seed(2, "x")
    assert derive_seed(1, "x") == derive_seed(1, "x")
    assert 0 <= derive_seed(1, -3) < 2**63
