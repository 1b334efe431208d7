import math

import numpy as np
import pytest

from cylevy import seeding
from cylevy.config import build_model
from cylevy.hilbert import HSOperator
from cylevy.integrands import (
    AdaptedSignRule,
    ConstantRule,
    ExpDecayRule,
    NoiseClampRule,
    PathGrid,
    SimpleProcess,
    discretize,
    dyadic_partition,
    sample_path,
    skorokhod_distance_ub,
)
from cylevy.integrator import (
    AlignmentError,
    elementary_integral_probe,
    integrate_cadlag,
    integrate_direct,
    integrate_simple,
    integrate_simple_many,
    refine_and_integrate,
)
from cylevy.levy import UnsupportedSampler, generate_noise_panel

GAUSS = build_model({"family": "gaussian", "d_U": 3, "params": {}})
CP = build_model({"family": "diagonal", "d_U": 3,
                  "params": {"law": "compound_poisson", "rate": 2.0, "jumps": "normal"}})


def ops(seed, n, shape=(2, 3)):
    rng = seeding.generator(seed, 0)
    return [rng.normal(size=shape) for _ in range(n)]


def test_single_interval_is_operator_times_increment():
    phi = ops(1, 1)[0]
    panel = generate_noise_panel(GAUSS, [0.0, 0.5, 1.0], 50, 3)
    got = integrate_simple(GAUSS, SimpleProcess.from_operators([0.0, 1.0], [phi]), 1.0, panel).at()
    want = panel.increments.sum(axis=1) @ phi.T
    assert np.allclose(got, want, rtol=0, atol=1e-12)


@pytest.mark.parametrize("a,b", [(2.0, -0.5), (1e-3, 7.0), (-1.25, 0.0)])
def test_linearity(a, b):
    times = [0.0, 0.3, 0.7, 1.0]
    p1 = SimpleProcess.from_operators(times, ops(2, 3))
    p2 = SimpleProcess.from_operators(times, ops(3, 3))
    panel = generate_noise_panel(CP, times, 500, 4)
    lhs = integrate_simple(CP, p1.scaled(a) + p2.scaled(b), 1.0, panel).at()
    rhs = a * integrate_simple(CP, p1, 1.0, panel).at() + b * integrate_simple(CP, p2, 1.0, panel).at()
    scale = max(1.0, float(np.max(np.abs(rhs))))
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * scale


def test_gaussian_covariance_matches_closed_form():
    times = [0.0, 0.25, 1.0]
    phis = ops(5, 2)
    panel = generate_noise_panel(GAUSS, times, 40_000, 6)
    x = integrate_simple(GAUSS, SimpleProcess.from_operators(times, phis), 1.0, panel).at()
    oracle = 0.25 * phis[0] @ phis[0].T + 0.75 * phis[1] @ phis[1].T
    assert np.max(np.abs(np.cov(x, rowvar=False) - oracle)) < 5 * 3.0 / math.sqrt(40_000) * np.trace(oracle)


def test_direct_route_agrees_in_law_with_panel_route():
    times = [0.0, 0.5, 1.0]
    psi = SimpleProcess.from_operators(times, ops(7, 2))
    x = integrate_simple(GAUSS, psi, 1.0, generate_noise_panel(GAUSS, times, 40_000, 1)).at()
    y = integrate_direct(GAUSS, psi, 1.0, 40_000, 2).at()
    assert np.allclose(np.cov(x, rowvar=False), np.cov(y, rowvar=False), atol=0.1)


def test_integrate_direct_rejects_adapted_integrands():
    psi = discretize(NoiseClampRule(HSOperator(np.ones((2, 3)))), [0.0, 1.0])
    with pytest.raises(UnsupportedSampler):
        integrate_direct(GAUSS, psi, 1.0, 10, 0)


def test_partition_must_align_with_panel():
    psi = SimpleProcess.from_operators([0.0, 0.3, 1.0], ops(1, 2))
    panel = generate_noise_panel(GAUSS, [0.0, 0.5, 1.0], 10, 0)
    with pytest.raises(AlignmentError):
        integrate_simple(GAUSS, psi, 1.0, panel)


def test_panel_from_other_model_is_rejected():
    psi = SimpleProcess.from_operators([0.0, 1.0], ops(1, 1))
    panel = generate_noise_panel(CP, [0.0, 1.0], 10, 0)
    with pytest.raises(ValueError):
        integrate_simple(GAUSS, psi, 1.0, panel)


def test_integral_path_starts_at_zero_and_is_additive():
    times = dyadic_partition(1.0, 4)
    psi = SimpleProcess.from_operators(times, ops(8, 4))
    panel = generate_noise_panel(CP, times, 100, 9)
    path = integrate_simple_many(CP, psi, times, panel).values
    assert np.all(path[:, 0] == 0.0)
    inc = panel.increments[:, 2, :] @ psi.operators()[2].T
    assert np.allclose(path[:, 3] - path[:, 2], inc, atol=1e-12)


def test_cadlag_variant_lags_by_one_interval():
    times = dyadic_partition(1.0, 4)
    psi = SimpleProcess.from_operators(times, ops(8, 4))
    panel = generate_noise_panel(GAUSS, times, 50, 9)
    I = integrate_simple_many(GAUSS, psi, times, panel).values
    J = integrate_cadlag(GAUSS, psi, panel, times=[0.3, 0.5]).values
    assert np.array_equal(J[:, 0], I[:, 1])
    assert np.array_equal(J[:, 1], I[:, 2])


def test_adapted_rule_uses_left_endpoint_history():
    times = [0.0, 0.5, 1.0]
    panel = generate_noise_panel(GAUSS, times, 200, 11)
    psi = SimpleProcess(np.array(times), (AdaptedSignRule(3),) * 3)
    first, second = psi.operators(panel)
    assert np.all(first == np.eye(3))  # L(0) = 0 counts as +
    sign = np.where(panel.increments[:, 0, 0] >= 0, 1.0, -1.0)
    assert np.array_equal(second[:, 0, 0], sign)


def test_constant_rule_refinement_is_exact():
    phi = HSOperator(ops(12, 1)[0])
    rep = refine_and_integrate(CP, ConstantRule(phi), [4, 8, 16, 32], replicas=500, master_seed=3, block=100)
    assert rep.pairwise_p == (0.0, 0.0, 0.0)
    assert rep.final_p == (0.0, 0.0, 0.0, 0.0)


def test_refinement_is_independent_of_threads_and_blocks():
    rule = ExpDecayRule(1.0, HSOperator(ops(13, 1)[0]))
    a = refine_and_integrate(GAUSS, rule, [4, 8, 16], replicas=600, master_seed=4, block=200, threads=1)
    b = refine_and_integrate(GAUSS, rule, [4, 8, 16], replicas=600, master_seed=4, block=200, threads=3)
    assert a.to_csv() == b.to_csv()


def test_refinement_rejects_bad_levels():
    rule = ConstantRule(HSOperator(np.ones((1, 3))))
    with pytest.raises(ValueError):
        refine_and_integrate(GAUSS, rule, [4, 6])
    with pytest.raises(ValueError):
        refine_and_integrate(GAUSS, rule, [8, 4])


def test_boundedness_probe_checks_contractions():
    times = np.array([0.0, 0.5, 1.0])
    psi = SimpleProcess.from_operators(times, ops(1, 2, (3, 3)))
    panel = generate_noise_panel(GAUSS, times, 200, 5)
    big = SimpleProcess.from_operators(times, [2 * np.eye(3)] * 2)
    with pytest.raises(ValueError):
        elementary_integral_probe(GAUSS, psi, [big], panel)
    off = SimpleProcess.from_operators([0.0, 0.4, 1.0], [np.eye(3)] * 2)
    with pytest.raises(AlignmentError):
        elementary_integral_probe(GAUSS, psi, [off], panel)
    ident = SimpleProcess.from_operators(times, [np.eye(3)] * 2)
    rep = elementary_integral_probe(GAUSS, psi, [ident], panel)
    norms = np.linalg.norm(integrate_simple(GAUSS, psi, 1.0, panel).at(), axis=1)
    assert rep.quantiles[0] == pytest.approx(np.quantile(norms, 0.9, method="inverted_cdf"))


def test_skorokhod_bound_beats_sup_distance_for_shifted_jump():
    t = np.linspace(0, 1, 11)
    p = PathGrid(t, (np.arange(11) > 5).astype(float)[:, None, None])
    q = PathGrid(t, (np.arange(11) > 6).astype(float)[:, None, None])
    assert np.max(np.abs(p.values - q.values)) == 1.0
    d = skorokhod_distance_ub(p, q)
    assert d == pytest.approx(0.1)
    assert skorokhod_distance_ub(p, p) == 0.0


def test_sample_path_of_adapted_rule():
    times = [0.0, 0.5, 1.0]
    panel = generate_noise_panel(GAUSS, times, 3, 2)
    path = sample_path(NoiseClampRule(HSOperator(np.ones((1, 3))), cap=0.5), times, panel, replica=1)
    assert path.values.shape == (3, 1, 3)
    assert np.all(path.values[0] == 0.0)
    assert np.all(path.values <= 0.5)
