import math

import numpy as np
import pytest

from cylevy.oracles import load_fixture
from cylevy.diagnostics import tightness_radius
from cylevy.tangent import (
    array_from_config,
    conditioning_test,
    deterministic_array,
    frequency_check,
    gaussian_weights_array,
    history_variance_array,
    iid_array,
    simulate,
    sticky_sign_array,
)


def test_runs_are_reproducible():
    arr = sticky_sign_array(0.8)
    a, b = simulate(arr, 16, 500, 3), simulate(arr, 16, 500, 3)
    assert np.array_equal(a.original, b.original) and np.array_equal(a.decoupled, b.decoupled)


def test_deterministic_array_decouples_to_itself():
    run = simulate(deterministic_array(0.5), 8, 100, 1)
    assert np.array_equal(run.original, run.decoupled)
    assert np.allclose(run.original, 0.5, rtol=0, atol=1e-15)


def test_decoupled_frequencies_follow_original_states():
    run = simulate(sticky_sign_array(0.8), 16, 20_000, 5)
    fc = frequency_check(run)
    assert fc.passes(3.0)
    assert fc.matches_table(3.0)
    # visits to the start state happen once per replica
    assert run.visits[0] == 20_000


def test_table_threshold_grows_with_cells():
    run = simulate(iid_array([-1.0, 1.0], [0.5, 0.5]), 4, 1000, 1)
    fc = frequency_check(run)
    assert fc.table_threshold(3.0) >= 3.0


def test_stopping_via_run_length():
    arr = sticky_sign_array(0.9, run_stop=2)
    run = simulate(arr, 64, 2000, 2)
    assert run.sigma.max() <= 64
    assert run.sigma.mean() < 64


@pytest.mark.parametrize("p", [0.8, 0.3])
def test_sticky_sign_radii_match_oracle_fixture(p):
    fx = load_fixture(f"sticky-sign-{p}")["values"]
    arr = sticky_sign_array(p)
    for n_text, want in fx.items():
        n = int(n_text)
        run = simulate(arr, n, 50_000, 77)
        # radii sit on a lattice of spacing 2/sqrt(n); allow one step plus 8 %
        for key, got in (("original", tightness_radius(run.original, 0.01)),
                         ("decoupled", tightness_radius(run.decoupled, 0.01))):
            ref = want[key]
            assert abs(got - ref) <= 2 / math.sqrt(n) + 0.08 * ref, (n, key, got, ref)


def test_gaussian_weights_products_are_exact():
    arr = gaussian_weights_array(1.0)
    rep = conditioning_test(arr, [0.5, 1.0], [8, 32], 2000, 4)
    for row in rep.rows:
        assert row.product_dev == pytest.approx(0.0, abs=1e-14)
        assert row.cf_dev <= 3 * math.sqrt(2 / 2000)


def test_history_dependent_products_converge():
    rep = conditioning_test(history_variance_array(0.5), [1.0], [4, 16, 64], 5000, 6)
    devs = [d for _, d, _ in rep.series(1.0)]
    assert devs[0] > devs[1] > devs[2]


def test_conditioning_needs_nonzero_limit():
    arr = gaussian_weights_array(1.0)
    with pytest.raises(ValueError):
        conditioning_test(arr, [1.0], [4], 100, 0, target=lambda b: 0.0)


def test_array_from_config():
    arr = array_from_config({"name": "sticky-sign", "p_stay": 0.3})
    assert arr.name == "sticky-sign" and arr.params["p_stay"] == 0.3
    with pytest.raises(ValueError):
        array_from_config({"name": "nope"})
