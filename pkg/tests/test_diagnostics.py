import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from cylevy import seeding
from cylevy.config import build_model
from cylevy.diagnostics import (
    batch_mean_se,
    empirical_cf,
    image_measure_tail_probe,
    p_metric,
    tightness_radius,
)
from cylevy.hilbert import HSOperator


def test_tightness_radius_of_a_normal_sample():
    x = seeding.generator(1, 0).standard_normal(200_000)
    assert tightness_radius(x, 0.01) == pytest.approx(2.576, abs=0.05)


def test_tightness_radius_guards():
    with pytest.raises(ValueError):
        tightness_radius(np.zeros(10), 0.01)
    with pytest.raises(ValueError):
        tightness_radius(np.zeros(2000), 1.5)


def test_p_metric_is_bounded_and_zero_on_equal_samples():
    rng = seeding.generator(2, 0)
    x = rng.normal(size=(1000, 3))
    assert p_metric(x, x) == (0.0, 0.0)
    p, se = p_metric(x, x + 100.0)
    assert p == 1.0 and se == 0.0
    with pytest.raises(ValueError):
        p_metric(x[:50], x[:50])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32))
def test_p_metric_triangle_inequality_on_coupled_samples(seed):
    # 1 ^ |.|^2 is not a metric but its square root is, so sqrt(p) satisfies the triangle inequality
    rng = seeding.generator(seed, 1)
    x, y, z = (rng.normal(scale=0.7, size=(400, 2)) for _ in range(3))
    pxz = p_metric(x, z)[0]
    pxy, pyz = p_metric(x, y)[0], p_metric(y, z)[0]
    assert math.sqrt(pxz) <= math.sqrt(pxy) + math.sqrt(pyz) + 1e-12


def test_batch_mean_se_matches_iid_formula_for_iid_data():
    x = seeding.generator(3, 0).standard_normal(100_000)
    assert batch_mean_se(x) == pytest.approx(1 / math.sqrt(x.size), rel=0.15)


def test_empirical_cf_of_normal_sample():
    x = seeding.generator(4, 0).standard_normal(100_000)
    emp, se = empirical_cf(x, [1.0])
    assert abs(emp - math.exp(-0.5)) <= 3 * math.sqrt(2 / x.size)
    assert 0 < se < 0.01


def test_image_tail_probe_rank_one_gaussian():
    model = build_model({"family": "gaussian", "d_U": 3, "params": {}})
    K = [HSOperator.rank_one(2, 3, 0, 0, s) for s in (0.2, 0.5, 1.0)]
    rep = image_measure_tail_probe(model, K, 1.0, [0.5, 1.0, 2.0], 50_000, 5)
    want = [2 * stats.norm.sf(r) for r in (0.5, 1.0, 2.0)]
    assert np.allclose(rep.norm_tail, want, atol=0.01)
    assert rep.coord_tail[-1] == 0.0
    assert list(rep.norm_tail) == sorted(rep.norm_tail, reverse=True)
