import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nnreg.metrics import (DegenerateShapeError, aggregate_runs, auc_cdf, cdf_at,
                           classification_error, nrmse, nrmse_batch)


def scalar_nrmse(pred, truth, ref):
    n = len(pred) // 2
    i, j = ref
    d = math.hypot(truth[2 * i] - truth[2 * j], truth[2 * i + 1] - truth[2 * j + 1])
    total = 0.0
    for k in range(n):
        total += math.hypot(pred[2 * k] - truth[2 * k], pred[2 * k + 1] - truth[2 * k + 1])
    return total / (n * d)


def test_nrmse_examples():
    truth = [[0, 0], [1, 0]]
    assert nrmse(truth, truth) == 0.0
    assert nrmse([[0, 0.1], [1, 0]], truth, ref=(0, 1)) == pytest.approx(0.05, abs=1e-15)
    with pytest.raises(DegenerateShapeError):
        nrmse([[0, 0], [0, 0]], [[1, 1], [1, 1]])


def test_nrmse_matches_scalar_oracle():
    rng = np.random.default_rng(0)
    for _ in range(200):
        p, g = rng.normal(size=10), rng.normal(size=10)
        ref = tuple(rng.choice(5, 2, replace=False).tolist())
        assert abs(nrmse(p, g, ref) - scalar_nrmse(p.tolist(), g.tolist(), ref)) < 1e-12
    p, g = rng.normal(size=(30, 10)), rng.normal(size=(30, 10))
    batch = nrmse_batch(p, g, (1, 3))
    expected = [scalar_nrmse(a.tolist(), b.tolist(), (1, 3)) for a, b in zip(p, g)]
    np.testing.assert_allclose(batch, expected, rtol=0, atol=1e-12)


@given(st.integers(0, 2**31), st.floats(-5, 5), st.floats(0.1, 10))
def test_nrmse_translation_and_scale_invariance(seed, shift, scale):
    rng = np.random.default_rng(seed)
    p, g = rng.normal(size=(5, 2)), rng.normal(size=(5, 2))
    base = nrmse(p, g, (0, 2))
    assert nrmse(p + shift, g + shift, (0, 2)) == pytest.approx(base, rel=1e-9)
    assert nrmse(scale * p, scale * g, (0, 2)) == pytest.approx(base, rel=1e-9)


def test_cdf_examples():
    assert cdf_at([0.05, 0.2], 0.1) == 0.5
    assert cdf_at([0.05, 0.2], 0.0) == 0.0
    assert cdf_at([0.05, 0.2], 0.2) == 1.0
    with pytest.raises(ValueError):
        cdf_at([], 0.1)


def test_cdf_matches_counting_oracle():
    rng = np.random.default_rng(1)
    e = rng.uniform(0, 0.6, size=1000)
    for x in rng.uniform(0, 0.6, size=50):
        assert cdf_at(e, x) == sum(1 for v in e if v <= x) / 1000


def test_auc_examples():
    assert auc_cdf(np.zeros(10)) == 1.0
    assert auc_cdf(np.full(10, 0.51)) == 0.0
    assert auc_cdf([0.25]) == pytest.approx(251 / 501, abs=1e-15)


def test_auc_matches_counting_oracle():
    rng = np.random.default_rng(2)
    for _ in range(20):
        e = rng.uniform(0, 0.7, size=int(rng.integers(1, 60)))
        grid = [i / 1000 for i in range(501)]
        oracle = sum(sum(1 for v in e if v <= x) / e.size for x in grid) / 501
        assert abs(auc_cdf(e) - oracle) < 1e-12


def test_aggregate_examples():
    stats = aggregate_runs([1, 2, 3, 4, 5, 6, 7])
    assert stats.mean == 4.0
    assert stats.kept == (2.0, 3.0, 4.0, 5.0, 6.0)
    const = aggregate_runs([2.5] * 7)
    assert (const.mean, const.std) == (2.5, 0.0)
    with pytest.raises(ValueError):
        aggregate_runs([1, 2])
    with pytest.raises(ValueError):
        aggregate_runs([1, 2, 3], expected=7)


def test_aggregate_formatting():
    assert str(aggregate_runs([9.0, 9.4, 9.5, 9.6, 10.0])) == "9.50±0.082"


def test_aggregate_matches_sort_oracle():
    rng = np.random.default_rng(3)
    for _ in range(100):
        v = rng.normal(size=int(rng.integers(3, 12))).tolist()
        kept = sorted(v)[1:-1]
        mean = sum(kept) / len(kept)
        std = math.sqrt(sum((x - mean) ** 2 for x in kept) / len(kept))
        stats = aggregate_runs(v)
        assert abs(stats.mean - mean) < 1e-12 and abs(stats.std - std) < 1e-12


def test_classification_error():
    assert classification_error([1, 2, 3], [1, 2, 3]) == 0.0
    assert classification_error([1, 0, 1, 0], [1, 1, 1, 1]) == 50.0
    with pytest.raises(ValueError):
        classification_error([1], [1, 2])
    rng = np.random.default_rng(4)
    p, t = rng.integers(0, 3, 500), rng.integers(0, 3, 500)
    assert classification_error(p, t) == 100 * sum(int(a != b) for a, b in zip(p, t)) / 500
