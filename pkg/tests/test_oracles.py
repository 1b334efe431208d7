import json
import math
from importlib import resources

import numpy as np
import pytest
from scipy import integrate, stats

from cylevy.levy import gauss_dom_constant
from cylevy.oracles import (
    BOUNDEDNESS_MODELS,
    BOUNDEDNESS_PSI,
    BOUNDEDNESS_TIMES,
    _fixture_specs,
    gauss_dom_constant_closed_form,
    load_fixture,
)


def test_constant_closed_form_vs_quadrature():
    closed = gauss_dom_constant_closed_form()
    inner, _ = integrate.quad(lambda x: x * x * stats.norm.pdf(x), -1.0, 1.0, epsabs=1e-14)
    e = inner + 2 * stats.norm.sf(1.0)
    assert closed["E_min_1_xi2"] == pytest.approx(e, rel=1e-12)
    assert gauss_dom_constant() == pytest.approx(closed["c"], rel=1e-13)


def test_published_rounded_constant_is_consistent():
    c = load_fixture("gauss-dom-constant")["values"]["c"]
    assert abs(1.93773 - c) / c < 1e-4


def test_fixtures_record_their_generating_config():
    specs = _fixture_specs()
    for name, (cfg, _) in specs.items():
        fx = load_fixture(name)
        assert fx["name"] == name
        assert fx["config"] == cfg


def test_boundedness_fixture_matches_bundled_configs():
    for name, model in BOUNDEDNESS_MODELS.items():
        cfg = json.loads(resources.files("cylevy.configs").joinpath(f"boundedness-{name}.json").read_text())
        assert cfg["model"] == model
        assert cfg["partition"]["times"] == BOUNDEDNESS_TIMES
        assert [np.reshape(op["entries"], op["shape"]).tolist() for op in cfg["operators"]] == BOUNDEDNESS_PSI


def test_gaussian_quantile_fixture_against_chi_law():
    # I(Psi)(T) is centred Gaussian; its norm quantile follows from the covariance spectrum
    dts = np.diff(BOUNDEDNESS_TIMES)
    C = sum(dt * np.asarray(op) @ np.asarray(op).T for op, dt in zip(BOUNDEDNESS_PSI, dts))
    lam = np.linalg.eigvalsh(C)
    rng = np.random.default_rng(1)
    z = rng.standard_normal((400_000, lam.size))
    norms = np.sqrt((z * z) @ lam)
    q = np.quantile(norms, 0.99)
    assert load_fixture("boundedness-gaussian")["values"]["0.99"] == pytest.approx(q, rel=0.01)
    assert math.isfinite(q)
