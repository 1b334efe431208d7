"""Acceptance criteria 1-9, each run at its stated tolerance.

Every test records a verdict through the ``criterion`` fixture and the
terminal summary prints one PASS/FAIL line per criterion.
"""

import json
import math
import re
import time
from importlib import resources

import numpy as np
import pytest

from cylevy import seeding
from cylevy.config import build_model, build_operator_list
from cylevy.experiments import report_json, run_experiment, table_csv
from cylevy.hilbert import hs_norm
from cylevy.integrands import SimpleProcess
from cylevy.integrator import integrate_simple
from cylevy.levy import generate_noise_panel
from cylevy.oracles import load_fixture

ROUNDED_C = 1.93773


def bundled(name: str) -> dict:
    return json.loads(resources.files("cylevy.configs").joinpath(f"{name}.json").read_text())


def all_bundled() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("cylevy.configs").iterdir() if p.name.endswith(".json"))


def failures(report: dict) -> list[str]:
    return [f"{report['name']}: {a['name']} value={a['value']} bound={a['bound']}"
            for a in report["assertions"] if not a["passed"]]


def run_all(names, criterion_no, criterion, extra=""):
    bad, count = [], 0
    reports = {}
    for name in names:
        report, _ = run_experiment(bundled(name))
        reports[name] = report
        bad += failures(report)
        count += len(report["assertions"])
    detail = f"{count} assertions" + (f", {extra}" if extra else "")
    if bad:
        detail += "; first failure: " + bad[0]
    criterion(criterion_no, not bad, detail)
    assert not bad, "\n".join(bad)
    return reports


def test_criterion_1_conditional_cf(criterion):
    start = time.perf_counter()
    reports = {}
    for family in ("gaussian", "compound-poisson", "stable"):
        reports[family], _ = run_experiment(bundled(f"cf-{family}"))
    elapsed = time.perf_counter() - start
    for r in reports.values():
        cfg = r["config"]
        assert cfg["model"]["d_U"] == 8 and cfg["dt"] == [0.25, 1.0] and cfg["probes"] == 5
        assert cfg["replicas"] == 100_000
    bad = [f for r in reports.values() for f in failures(r)]
    worst = max(r["estimates"]["max_deviation"] for r in reports.values())
    tol = 3 * math.sqrt(2 / 100_000)
    ok = not bad and elapsed <= 60.0
    criterion(1, ok, f"max deviation {worst:.2e} <= {tol:.2e}, runtime {elapsed:.1f} s")
    assert not bad, "\n".join(bad)
    assert elapsed <= 60.0


def test_criterion_2_gaussian_covariance(criterion):
    d_U, d_V, N = 4, 3, 100_000
    model = build_model({"family": "gaussian", "d_U": d_U, "params": {}})
    rng = seeding.generator(2024, 2)
    phi1, phi2 = rng.normal(size=(d_V, d_U)), rng.normal(size=(d_V, d_U))
    times = [0.0, 0.4, 1.0]
    psi = SimpleProcess.from_operators(times, [phi1, phi2])
    panel = generate_noise_panel(model, times, N, master_seed=22)
    x = integrate_simple(model, psi, 1.0, panel).at()
    emp = np.cov(x, rowvar=False, ddof=1)
    d1, d2 = 0.4, 0.6
    oracle = d1 * phi1 @ phi1.T + d2 * phi2 @ phi2.T
    err = float(np.max(np.abs(emp - oracle)))
    tol = 5 * (d1 * hs_norm(phi1) ** 2 + d2 * hs_norm(phi2) ** 2) / math.sqrt(N)
    criterion(2, err <= tol, f"max entry error {err:.3e} <= {tol:.3e}")
    assert err <= tol


def test_criterion_3_refinement(criterion):
    reports = run_all(["refine-exp-decay", "refine-constant"], 3, criterion)
    exp = reports["refine-exp-decay"]["estimates"]
    assert exp["levels"] == [8, 16, 32, 64, 128, 256, 512]
    assert exp["pairwise_p"][-1] <= 1e-3
    assert all(p == 0.0 for p in reports["refine-constant"]["estimates"]["pairwise_p"])


def test_criterion_4_gauss_domination(criterion):
    names = ["gauss-dom-gaussian", "gauss-dom-compound-poisson", "gauss-dom-stable"]
    fixture = load_fixture("gauss-dom-constant")["values"]["c"]
    rel = abs(ROUNDED_C - fixture) / fixture
    # the committed constant is the exact one; the rounded figure must agree and pass as well
    margins = []
    for name in names:
        cfg = bundled(name)
        assert len(build_operator_list(cfg["operators"])) == 5 and cfg["replicas"] == 100_000
        _, tables = run_experiment(cfg)
        for row in tables["gauss_dom.csv"]:
            rhs_rounded = row["rhs"] * ROUNDED_C / row["c"]
            se = math.hypot(row["lhs_se"], row["rhs_se"])
            margins.append(rhs_rounded + 3 * se - row["lhs"])
    reports = run_all(names, 4, criterion,
                      f"c={fixture:.10f} vs {ROUNDED_C} (rel {rel:.1e}), min margin {min(margins):.3e}")
    assert rel <= 1e-4
    assert min(margins) >= 0
    assert len(reports) == 3


def test_criterion_5_prokhorov(criterion):
    reports = run_all(["prokhorov-suite"], 5, criterion)
    cfg = reports["prokhorov-suite"]["config"]
    assert cfg["cases"] == 50 and cfg["max_atoms"] <= 8


def test_criterion_6_decoupling(criterion):
    names = ["decouple-sticky-0.8", "decouple-sticky-0.3", "decouple-iid", "decouple-deterministic"]
    run_all(names, 6, criterion)


def test_criterion_7_conditioning(criterion):
    reports = run_all(["conditioning-gaussian", "conditioning-history"], 7, criterion)
    assert set(reports["conditioning-history"]["config"]["betas"]) == {0.5, 1.0, 2.0}


def test_criterion_8_boundedness(criterion):
    details = []
    for name in ("gaussian", "compound-poisson"):
        report, tables = run_experiment(bundled(f"boundedness-{name}"))
        assert report["config"]["family"]["size"] == 64
        q = report["estimates"]["quantiles"]["0.99"]
        ref = load_fixture(f"boundedness-{name}")["values"]["0.99"]
        details.append((name, q, ref, failures(report)))
    ok = all(abs(q / ref - 1) <= 0.10 and not bad for _, q, ref, bad in details)
    criterion(8, ok, ", ".join(f"{n} q99 {q:.4f} vs {ref:.4f}" for n, q, ref, _ in details))
    for name, q, ref, bad in details:
        assert not bad, bad
        assert abs(q / ref - 1) <= 0.10, name


_STAMP = re.compile(r'^\s*"generated_at": .*\n', re.MULTILINE)


def _artifacts(cfg: dict, threads: int) -> dict:
    report, tables = run_experiment(cfg, threads=threads)
    out = {"report.json": _STAMP.sub("", report_json(report))}
    out.update({name: table_csv(rows) for name, rows in tables.items()})
    return out


@pytest.mark.slow
def test_criterion_9_determinism(criterion):
    diffs = []
    names = all_bundled()
    for name in names:
        cfg = bundled(name)
        a = _artifacts(cfg, threads=1)
        b = _artifacts(cfg, threads=1)
        c = _artifacts(cfg, threads=4)
        for key in a:
            if not (a[key] == b[key] == c[key]):
                diffs.append(f"{name}/{key}")
    criterion(9, not diffs, f"{len(names)} configs x (rerun, threads 1 vs 4)"
              + (f"; differing: {diffs}" if diffs else ""))
    assert not diffs
