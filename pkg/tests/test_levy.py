import math

import numpy as np
import pytest
from scipy import stats

from cylevy import seeding
from cylevy.config import build_model
from cylevy.diagnostics import empirical_cf
from cylevy.levy import (
    CanonicalStable,
    CompoundPoisson,
    UnsupportedSampler,
    generate_noise_panel,
    increment_cf,
    positive_stable_from_unit,
    radonify_increments,
)

GAUSS = {"family": "gaussian", "d_U": 4, "params": {}}
CP_RADEMACHER = {"family": "diagonal", "d_U": 4,
                 "params": {"law": "compound_poisson", "rate": 1.5, "jumps": "rademacher"}}
CP_NORMAL = {"family": "diagonal", "d_U": 4,
             "params": {"law": "compound_poisson", "rate": 1.5, "jumps": "normal"}}
STABLE = {"family": "stable", "d_U": 4, "params": {"alpha": 1.3, "c": 0.7}}
DIAG_STABLE = {"family": "diagonal", "d_U": 4, "params": {"law": "symmetric_stable", "alpha": 0.8}}


@pytest.mark.parametrize("cfg", [GAUSS, CP_RADEMACHER, CP_NORMAL, STABLE, DIAG_STABLE],
                         ids=["gaussian", "cp-rademacher", "cp-normal", "stable", "diag-stable"])
def test_increment_cf_matches_symbol(cfg):
    model = build_model(cfg)
    phi = seeding.generator(1, 1).normal(size=(2, 4)) / 2
    N = 50_000
    x = radonify_increments(model, phi, 0.5, N, seeding.generator(1, 2))
    for v in ([1.0, 0.0], [0.3, -0.8], [1.5, 1.0]):
        emp, _ = empirical_cf(x, v)
        assert abs(emp - increment_cf(model, phi, 0.5, v)) <= 3 * math.sqrt(2 / N)


def test_rademacher_zero_fraction_matches_exact_law():
    rate, dt, N = 1.5, 0.4, 200_000
    model = build_model(dict(CP_RADEMACHER, d_U=1))
    x = generate_noise_panel(model, [0.0, dt], N, 8).increments.ravel()
    mu = rate * dt
    # equal numbers of +1 and -1 jumps cancel
    exact = sum(stats.poisson.pmf(2 * k, mu) * math.comb(2 * k, k) / 4 ** k for k in range(40))
    assert exact > math.exp(-mu)
    frac = np.mean(x == 0.0)
    assert abs(frac - exact) <= 4 * math.sqrt(exact * (1 - exact) / N)


def test_normal_jump_zero_fraction_is_no_jump_probability():
    rate, dt, N = 1.5, 0.4, 200_000
    model = build_model(dict(CP_NORMAL, d_U=1))
    x = generate_noise_panel(model, [0.0, dt], N, 9).increments.ravel()
    p = math.exp(-rate * dt)
    assert abs(np.mean(x == 0.0) - p) <= 4 * math.sqrt(p * (1 - p) / N)


@pytest.mark.parametrize("beta", [0.3, 0.65, 0.9])
def test_positive_stable_laplace_transform(beta):
    rng = seeding.generator(4, int(beta * 100))
    u = seeding.unit_from_generator(rng, (2, 200_000))
    s = positive_stable_from_unit(beta, u[0], u[1])
    assert np.all(s > 0)
    for lam in (0.5, 1.0, 2.0):
        v = np.exp(-lam * s)
        assert abs(v.mean() - math.exp(-lam ** beta)) <= 4 * v.std() / math.sqrt(v.size)


def test_canonical_stable_has_no_panel():
    with pytest.raises(UnsupportedSampler):
        generate_noise_panel(build_model(STABLE), [0.0, 1.0], 10, 1)


def test_parameter_validation():
    with pytest.raises(ValueError):
        CanonicalStable(2.0)
    with pytest.raises(ValueError):
        CompoundPoisson(-1.0)
    with pytest.raises(ValueError):
        CompoundPoisson(1.0, "cauchy")


def test_gaussian_panel_covariance():
    model = build_model({"family": "gaussian", "d_U": 3, "params": {"cov": [[2, 1, 0], [1, 2, 0], [0, 0, 1]]}})
    x = generate_noise_panel(model, [0.0, 0.5], 100_000, 3).increments[:, 0, :]
    emp = np.cov(x, rowvar=False)
    assert np.max(np.abs(emp - 0.5 * np.array([[2, 1, 0], [1, 2, 0], [0, 0, 1]]))) < 0.03


def test_increment_cf_dimension_checks():
    model = build_model(GAUSS)
    with pytest.raises(ValueError):
        increment_cf(model, np.ones((2, 3)), 1.0, [1.0, 0.0])
    with pytest.raises(ValueError):
        increment_cf(model, np.ones((2, 4)), 0.0, [1.0, 0.0])
