"""Config-driven experiment kinds and the report they produce.

Every runner takes a validated config and returns an :class:`Outcome` holding
named assertions, headline estimates, derived seeds and CSV detail tables.  All
randomness flows from ``master_seed`` through counter-derived child seeds, and
``threads`` only splits fixed work units, so numerics never depend on it.
"""

from __future__ import annotations

import csv
import datetime as _dt
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import special

from . import seeding
from .config import (
    build_model,
    build_operator_list,
    build_partition,
    build_rule,
    check_capabilities,
    require_valid,
)
from .diagnostics import empirical_cf, image_measure_tail_probe, tightness_radius
from .integrands import AdaptedSignRule, ConstantRule, SignPatternRule, SimpleProcess, discretize
from .integrator import elementary_integral_probe, refine_and_integrate
from .levy import NoisePanel, gauss_dom_check, generate_noise_panel, increment_cf_many, radonify_increments
from .oracles import load_fixture
from .prokhorov import EmpiricalMeasure, prokhorov_coupling, prokhorov_exact
from .tangent import array_from_config, conditioning_test, frequency_check, simulate

REPORT_SCHEMA_VERSION = 1
TIMESTAMP_KEY = "generated_at"

DEFAULT_TOLERANCES = {
    "cf_k": 3.0,
    "gauss_dom_k": 3.0,
    "pairwise_last": 1e-3,
    "monotone_k": 2.0,
    "radius_factor": 10.0,
    "frequency_k": 3.0,
    "fixture_rel": 0.10,
    "metric_slack": 1e-12,
}


@dataclass
class Outcome:
    assertions: list = field(default_factory=list)
    estimates: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)  # file name -> list of row dicts

    def check(self, name: str, passed: bool, value=None, bound=None, detail: str = "") -> None:
        self.assertions.append({
            "name": name,
            "passed": bool(passed),
            "value": value,
            "bound": bound,
            "detail": detail,
        })


def _map(fn: Callable, items: list, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _probe_vectors(spec, d_V: int, seed: int) -> np.ndarray:
    if isinstance(spec, list):
        return np.asarray(spec, dtype=np.float64)
    rng = seeding.generator(seed, 0xC0FFEE)
    return rng.standard_normal((int(spec), d_V)) / math.sqrt(d_V)


# -- cf-test ------------------------------------------------------------------

def run_cf_test(cfg: dict, tol: dict, threads: int) -> Outcome:
    out = Outcome()
    model = build_model(cfg["model"])
    ops = build_operator_list(cfg["operators"])
    N, seed = cfg["replicas"], cfg["master_seed"]
    probes = _probe_vectors(cfg["probes"], ops[0].d_V, seed)
    bound = tol["cf_k"] * math.sqrt(2.0 / N)
    tasks = [(i, j) for i in range(len(ops)) for j in range(len(cfg["dt"]))]

    def task(ij):
        i, j = ij
        dt = cfg["dt"][j]
        x = radonify_increments(model, ops[i], dt, N, seeding.generator(seed, i, j))
        target = increment_cf_many(model, ops[i], dt, probes)
        rows = []
        for v, want in zip(probes, target):
            emp, se = empirical_cf(x, v)
            rows.append({"operator": i, "dt": dt, "probe": v.tolist(), "cf_re": emp.real, "cf_im": emp.imag,
                         "target_re": want.real, "target_im": want.imag, "deviation": abs(emp - want), "se": se})
        return rows

    results = _map(task, tasks, threads)
    rows = [r for block in results for r in block]
    for (i, j), block in zip(tasks, results):
        dev = max(r["deviation"] for r in block)
        out.check(f"cf[op={i},dt={cfg['dt'][j]}]", dev <= bound, dev, bound,
                  "max |empirical CF - exp(dt S(phi* v))| over probes")
        if model.is_symmetric():
            im = max(abs(r["cf_im"]) for r in block)
            out.check(f"cf-imag[op={i},dt={cfg['dt'][j]}]", im <= bound, im, bound,
                      "symmetric model: imaginary part of the empirical CF")
        out.seeds[f"op={i},dt_index={j}"] = seeding.child_seed(seed, i, j)
    out.estimates["max_deviation"] = max(r["deviation"] for r in rows)
    out.estimates["tolerance"] = bound
    out.tables["cf.csv"] = rows
    return out


# -- refine -------------------------------------------------------------------

def run_refine(cfg: dict, tol: dict, threads: int) -> Outcome:
    out = Outcome()
    model = build_model(cfg["model"])
    rule = build_rule(cfg["integrand"])
    rep = refine_and_integrate(model, rule, cfg["levels"], replicas=cfg["replicas"],
                               master_seed=cfg["master_seed"], T=cfg.get("horizon", 1.0),
                               block=cfg.get("block", 1000), threads=threads)
    k = tol["monotone_k"]
    for i in range(len(rep.levels) - 1):
        a, b = rep.final_p[i], rep.final_p[i + 1]
        slack = k * math.hypot(rep.final_se[i], rep.final_se[i + 1])
        ok = (a == 0.0 and b == 0.0) or b < a + slack
        out.check(f"final_p decreasing {rep.levels[i]}->{rep.levels[i + 1]}", ok, b, a + slack,
                  f"final_p must drop up to {k} standard errors")
    last = rep.pairwise_p[-1]
    out.check("pairwise_p at the finest pair", last <= tol["pairwise_last"], last, tol["pairwise_last"])
    if isinstance(rule, ConstantRule):
        worst = max(rep.pairwise_p)
        out.check("constant rule pairwise_p exactly zero", worst == 0.0, worst, 0.0)
    out.estimates.update(rep.to_json())
    out.seeds["panel_master"] = cfg["master_seed"]
    out.tables["refine.csv"] = rep.to_rows()
    return out


# -- gauss-dom ----------------------------------------------------------------

def run_gauss_dom(cfg: dict, tol: dict, threads: int) -> Outcome:
    out = Outcome()
    model = build_model(cfg["model"])
    ops = build_operator_list(cfg["operators"])
    N, seed = cfg["replicas"], cfg["master_seed"]
    tasks = [(i, j) for i in range(len(ops)) for j in range(len(cfg["dt"]))]

    def task(ij):
        i, j = ij
        return gauss_dom_check(model, ops[i], cfg["dt"][j], N, seeding.child_seed(seed, i, j))

    rows = []
    for (i, j), r in zip(tasks, _map(task, tasks, threads)):
        dt = cfg["dt"][j]
        bound = r.rhs + tol["gauss_dom_k"] * r.combined_se
        out.check(f"gauss-dom[op={i},dt={dt}]", r.lhs <= bound, r.lhs, bound,
                  "p(phi Z) <= c * Gaussian-averaged p + k * combined se")
        out.seeds[f"op={i},dt_index={j}"] = seeding.child_seed(seed, i, j)
        rows.append({"operator": i, "dt": dt, "lhs": r.lhs, "rhs": r.rhs, "lhs_se": r.lhs_se,
                     "rhs_se": r.rhs_se, "c": r.c})
    out.estimates["c"] = rows[0]["c"]
    out.tables["gauss_dom.csv"] = rows
    return out


# -- decouple -----------------------------------------------------------------

def run_decouple(cfg: dict, tol: dict, threads: int) -> Outcome:
    out = Outcome()
    array = array_from_config(cfg["array"])
    N, seed = cfg["replicas"], cfg["master_seed"]
    rows_n = cfg["rows"]
    runs = _map(lambda n: simulate(array, n, N, seed), rows_n, threads)
    probes = np.atleast_2d(np.asarray(cfg.get("betas", [0.5, 1.0, 2.0]), dtype=np.float64)).T
    cf_bound = tol["cf_k"] * math.sqrt(2.0 / N)
    table = []
    for n, run in zip(rows_n, runs):
        fc = frequency_check(run)
        k = tol["frequency_k"]
        out.check(f"decoupled vs original frequencies n={n}", fc.passes(k), fc.z_difference, k,
                  "largest binomial z over (history state, outcome) cells")
        limit = fc.table_threshold(k)
        out.check(f"frequencies vs exact conditional table n={n}", fc.matches_table(k),
                  max(fc.z_original, fc.z_decoupled), limit,
                  f"family-wise {k}-sigma level over {2 * fc.cells} cells")
        row = {"n": n, "z_original": fc.z_original, "z_decoupled": fc.z_decoupled,
               "z_difference": fc.z_difference, "table_threshold": limit,
               "mean_sigma": float(run.sigma.mean())}
        if N >= 1000:
            r_o = tightness_radius(run.original, 0.01)
            r_d = tightness_radius(run.decoupled, 0.01)
            bound = tol["radius_factor"] * r_d
            out.check(f"tightness radius n={n}", r_o <= bound, r_o, bound,
                      "radius(original, 0.01) <= factor * radius(decoupled, 0.01)")
            row.update(radius_original=r_o, radius_decoupled=r_d)
        if array.name == "iid":
            devs = []
            for v in probes:
                a, _ = empirical_cf(run.original, v)
                b, _ = empirical_cf(run.decoupled, v)
                devs.append(abs(a - b))
            out.check(f"two-sample CF n={n}", max(devs) <= cf_bound, max(devs), cf_bound)
            row["cf_two_sample"] = max(devs)
        if array.name == "deterministic":
            same = bool(np.array_equal(run.original, run.decoupled))
            out.check(f"decoupled equals original n={n}", same, float(same), 1.0)
        table.append(row)
        out.seeds[f"n={n}"] = {"original": seeding.child_seed(seed, n, 0),
                               "decoupled": seeding.child_seed(seed, n, 1)}
    out.tables["decouple.csv"] = table
    return out


# -- conditioning -------------------------------------------------------------

def run_conditioning(cfg: dict, tol: dict, threads: int) -> Outcome:
    out = Outcome()
    array = array_from_config(cfg["array"])
    N, seed = cfg["replicas"], cfg["master_seed"]
    betas, rows_n = cfg["betas"], cfg["rows"]
    reports = _map(lambda n: conditioning_test(array, betas, [n], N, seed), rows_n, threads)
    rows = [r for rep in reports for r in rep.rows]
    bound = tol["cf_k"] * math.sqrt(2.0 / N)
    expect = cfg.get("expect", "decreasing")
    for beta in betas:
        series = [r for r in rows if r.beta == beta]
        if expect == "exact":
            for r in series:
                out.check(f"product deviation n={r.n} beta={beta}", r.product_dev <= bound, r.product_dev, bound)
                out.check(f"CF deviation n={r.n} beta={beta}", r.cf_dev <= bound, r.cf_dev, bound)
            continue
        k = tol["monotone_k"]
        for attr in ("product", "cf"):
            for a, b in zip(series, series[1:]):
                va, vb = getattr(a, f"{attr}_dev"), getattr(b, f"{attr}_dev")
                slack = k * math.hypot(getattr(a, f"{attr}_se"), getattr(b, f"{attr}_se")) + tol["metric_slack"]
                out.check(f"{attr} deviation decreasing beta={beta} n={a.n}->{b.n}", vb <= va + slack,
                          vb, va + slack)
    out.tables["conditioning.csv"] = [
        {"n": r.n, "beta": r.beta, "target_re": r.target.real, "target_im": r.target.imag,
         "product_dev": r.product_dev, "product_se": r.product_se, "cf_dev": r.cf_dev, "cf_se": r.cf_se}
        for r in rows
    ]
    for n in rows_n:
        out.seeds[f"n={n}"] = seeding.child_seed(seed, n, 0)
    return out


# -- prokhorov-suite ----------------------------------------------------------

def _random_measure(rng: np.random.Generator, max_atoms: int, dim: int) -> EmpiricalMeasure:
    n = int(rng.integers(1, max_atoms + 1))
    atoms = np.round(rng.normal(scale=0.6, size=(n, dim)), 3)
    # dyadic weights keep every subset mass exact in binary floating point
    w = rng.integers(1, 9, size=n).astype(np.float64)
    total = 2 ** math.ceil(math.log2(w.sum()))
    w[-1] += total - w.sum()
    return EmpiricalMeasure(atoms, w / total)


def run_prokhorov_suite(cfg: dict, tol: dict, threads: int) -> Outcome:
    out = Outcome()
    seed = cfg["master_seed"]
    max_atoms = cfg.get("max_atoms", 8)
    slack = tol["metric_slack"]
    dim = cfg.get("dims", {}).get("d_V", 2)
    table = []
    failures = {"symmetry": 0, "triangle": 0, "identity": 0, "separation": 0, "routes": 0}
    worst_route = 0.0
    for case in range(cfg["cases"]):
        rng = seeding.generator(seed, case)
        mu, nu, rho = (_random_measure(rng, max_atoms, dim) for _ in range(3))
        d_mn, d_nm = prokhorov_exact(mu, nu), prokhorov_exact(nu, mu)
        d_nr, d_mr = prokhorov_exact(nu, rho), prokhorov_exact(mu, rho)
        d_mm = prokhorov_exact(mu, mu)
        failures["symmetry"] += d_mn != d_nm
        failures["triangle"] += d_mr > d_mn + d_nr + slack
        failures["identity"] += d_mm != 0.0
        failures["separation"] += (d_mn == 0.0) != (mu == nu)
        lp = prokhorov_coupling(mu, nu)
        worst_route = max(worst_route, abs(lp - d_mn))
        failures["routes"] += abs(lp - d_mn) > 1e-9
        table.append({"case": case, "atoms": [mu.size, nu.size, rho.size], "d_mu_nu": d_mn, "d_nu_mu": d_nm,
                      "d_nu_rho": d_nr, "d_mu_rho": d_mr, "d_mu_nu_coupling": lp})
    out.check("symmetry (exact)", failures["symmetry"] == 0, failures["symmetry"], 0)
    out.check("triangle inequality", failures["triangle"] == 0, failures["triangle"], 0,
              f"violations beyond {slack}")
    out.check("d(mu, mu) = 0 (exact)", failures["identity"] == 0, failures["identity"], 0)
    out.check("zero iff equal", failures["separation"] == 0, failures["separation"], 0)
    out.check("enumeration and coupling routes agree", failures["routes"] == 0, worst_route, 1e-9)
    x = 0.3
    v = prokhorov_exact(EmpiricalMeasure([[0.0]], [1.0]), EmpiricalMeasure([[x]], [1.0]))
    out.check("delta_0 vs delta_x, |x| = 0.3", v == min(x, 1.0), v, min(x, 1.0))
    v = prokhorov_exact(EmpiricalMeasure([[0.0]], [1.0]), EmpiricalMeasure([[3.0]], [1.0]))
    out.check("delta_0 vs delta_x, |x| = 3", v == 1.0, v, 1.0)
    v = prokhorov_exact(EmpiricalMeasure([[0.0], [2.0]], [0.5, 0.5]), EmpiricalMeasure([[0.0]], [1.0]))
    out.check("half mass moved by 2", v == 0.5, v, 0.5)
    out.tables["prokhorov.csv"] = table
    out.seeds["cases"] = [seeding.child_seed(seed, c) for c in range(cfg["cases"])]
    return out


# -- probe-image --------------------------------------------------------------

def run_probe_image(cfg: dict, tol: dict, threads: int) -> Outcome:
    out = Outcome()
    model = build_model(cfg["model"])
    ops = build_operator_list(cfg["operators"])
    dt = cfg["dt"][0]
    N, seed = cfg["replicas"], cfg["master_seed"]
    r_grid = sorted(cfg["r_grid"])
    rep = image_measure_tail_probe(model, ops, dt, r_grid, N, seed)
    tails = np.asarray(rep.norm_tail)
    out.check("norm tail nonincreasing in r", bool(np.all(np.diff(tails) <= 0)), float(np.max(np.diff(tails), initial=0.0)), 0.0)
    coord = np.asarray(rep.coord_tail)
    out.check("coordinate tail nonincreasing in N'", bool(np.all(np.diff(coord) <= 0)),
              float(np.max(np.diff(coord), initial=0.0)), 0.0)
    out.check("coordinate tail beyond d_V is zero", coord[-1] == 0.0, float(coord[-1]), 0.0)
    grids = [op.entries for op in ops]
    rank_one = all(np.count_nonzero(g) <= 1 for g in grids)
    unit_q = model.family == "gaussian" and np.array_equal(model.spec.gaussian_cov.entries, np.eye(model.d_U))
    if rank_one and unit_q and not np.any(model.spec.drift):
        c = max(float(np.max(np.abs(g))) for g in grids)
        worst = 0.0
        for r, p, se in zip(r_grid, rep.norm_tail, rep.norm_tail_se):
            want = 0.0 if c == 0 else float(2.0 * special.ndtr(-r / (c * math.sqrt(dt))))
            band = 3.0 * math.sqrt(max(want * (1 - want), 1e-300) / N)
            worst = max(worst, abs(p - want) / band if band > 0 else (0.0 if p == want else math.inf))
        out.check("rank-one Gaussian tail oracle", worst <= 1.0, worst, 1.0,
                  "|empirical - 2(1 - Phi(r / (c sqrt(dt))))| in units of 3 binomial se")
    out.tables["probe_image_norm.csv"] = [
        {"r": r, "tail": p, "se": s} for r, p, s in zip(rep.r_grid, rep.norm_tail, rep.norm_tail_se)]
    out.tables["probe_image_coord.csv"] = [
        {"N_prime": n, "tail": p, "se": s} for n, p, s in zip(rep.N_grid, rep.coord_tail, rep.coord_tail_se)]
    out.seeds["stream"] = seeding.child_seed(seed, 0)
    return out


# -- boundedness --------------------------------------------------------------

def contraction_family(times: np.ndarray, size: int, d_V: int, d_U: int, seed: int) -> list[SimpleProcess]:
    """Half deterministic +-identity sign patterns, half adapted sign rules with patterns."""
    rng = seeding.generator(seed, 0xFA)
    n_int = times.size - 1
    fam = []
    for m in range(size):
        signs = tuple(int(s) for s in rng.choice([-1, 1], size=n_int))
        if m % 2 == 0:
            rule = SignPatternRule(times, signs, d_V)
        else:
            rule = AdaptedSignRule(d_V, coord=(m // 2) % d_U, flip=bool((m // 2) % 2),
                                   times=tuple(times.tolist()), pattern=signs)
        fam.append(SimpleProcess(times, (rule,) * times.size))
    return fam


def _panel_blocks(model, grid, replicas: int, seed: int, block: int, threads: int) -> NoisePanel:
    starts = list(range(0, replicas, block))
    parts = _map(lambda s: generate_noise_panel(model, grid, min(block, replicas - s), seed, s), starts, threads)
    inc = np.concatenate([p.increments for p in parts], axis=0)
    return NoisePanel(inc, grid, seed, 0, model.to_config())


def run_boundedness(cfg: dict, tol: dict, threads: int) -> Outcome:
    out = Outcome()
    model = build_model(cfg["model"])
    times = build_partition(cfg["partition"])
    if "operators" in cfg:
        psi = SimpleProcess.from_operators(times, build_operator_list(cfg["operators"]))
    else:
        psi = discretize(build_rule(cfg["integrand"]), times)
    d_V, d_U = psi.shape
    fam_seed = cfg["family"].get("seed", cfg["master_seed"])
    thetas = contraction_family(times, cfg["family"]["size"], d_V, d_U, fam_seed)
    panel = _panel_blocks(model, times, cfg["replicas"], cfg["master_seed"], cfg.get("block", 1000), threads)
    rep = elementary_integral_probe(model, psi, thetas, panel)
    quant = {str(1.0 - e): q for e, q in zip(rep.eps, rep.quantiles)}
    out.estimates["quantiles"] = quant
    out.estimates["growth"] = [{"family_size": m, "quantiles": list(q)} for m, q in rep.growth]
    if "fixture" in cfg:
        fx = load_fixture(cfg["fixture"])
        fcfg = fx["config"]
        same = (fcfg["model"] == cfg["model"]
                and np.allclose(np.asarray(fcfg["times"]), times, rtol=0, atol=1e-15)
                and "operators" in cfg
                and all(np.array_equal(np.asarray(a), op.entries)
                        for a, op in zip(fcfg["operators"], build_operator_list(cfg["operators"]))))
        out.check("fixture matches config", same, float(same), 1.0,
                  "the oracle fixture must describe the same model, integrand and partition")
        rel = tol["fixture_rel"]
        for level, want in sorted(fx["values"].items()):
            got = quant.get(level)
            if got is None:
                continue
            out.check(f"{level}-quantile vs oracle fixture", abs(got - want) <= rel * want, got,
                      [want * (1 - rel), want * (1 + rel)])
        out.estimates["fixture"] = {"name": cfg["fixture"], "values": fx["values"]}
    out.tables["boundedness_growth.csv"] = [
        {"family_size": m, **{f"q{1.0 - e}": v for e, v in zip(rep.eps, q)}} for m, q in rep.growth]
    out.seeds["panel_master"] = cfg["master_seed"]
    out.seeds["family"] = seeding.child_seed(fam_seed, 0xFA)
    return out


RUNNERS = {
    "cf-test": run_cf_test,
    "refine": run_refine,
    "gauss-dom": run_gauss_dom,
    "decouple": run_decouple,
    "conditioning": run_conditioning,
    "prokhorov-suite": run_prokhorov_suite,
    "probe-image": run_probe_image,
    "boundedness": run_boundedness,
}


# -- reports ------------------------------------------------------------------

def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def code_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def run_experiment(cfg: dict, threads: int = 1, seed: int | None = None) -> tuple[dict, dict]:
    """Validate and execute ``cfg``; returns ``(report, csv_tables)``."""
    cfg = json.loads(json.dumps(cfg))
    if seed is not None:
        cfg["master_seed"] = int(seed)
    require_valid(cfg)
    check_capabilities(cfg)
    tol = dict(DEFAULT_TOLERANCES, **cfg.get("tolerances", {}))
    outcome = RUNNERS[cfg["kind"]](cfg, tol, max(1, int(threads)))
    failed = [a["name"] for a in outcome.assertions if not a["passed"]]
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "code_version": code_version(),
        "kind": cfg["kind"],
        "name": cfg.get("name", cfg["kind"]),
        "config": cfg,
        "tolerances": tol,
        "seeds": {"master_seed": cfg["master_seed"], **outcome.seeds},
        "assertions": outcome.assertions,
        "estimates": outcome.estimates,
        "passed": not failed,
        "failed": failed,
        TIMESTAMP_KEY: _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    return _clean(report), outcome.tables


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, allow_nan=False) + "\n"


def table_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    fields = list(dict.fromkeys(k for r in rows for k in r))
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else
                        json.dumps(_clean(v)) if isinstance(v, (list, tuple)) else v)
                    for k, v in r.items()})
    return buf.getvalue()


def write_outputs(report: dict, tables: dict, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [out_dir / "report.json"]
    paths[0].write_text(report_json(report))
    for name, rows in sorted(tables.items()):
        p = out_dir / name
        p.write_text(table_csv(rows))
        paths.append(p)
    return paths
