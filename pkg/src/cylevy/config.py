"""Experiment configs: schema validation with JSON-path errors and builders for
models, operators, integrands and partitions."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import seeding
from .hilbert import HSOperator, SOperator
from .integrands import ConstantRule, ExpDecayRule, IntegrandRule, NoiseClampRule, PolyRule
from .levy import (
    Brownian,
    CanonicalStable,
    CompoundPoisson,
    DiagonalLevy,
    LevyModel,
    SymbolSpec,
    SymmetricStable,
)

STATISTICAL_KINDS = frozenset(
    {"cf-test", "refine", "gauss-dom", "decouple", "conditioning", "probe-image", "boundedness"}
)


class ConfigError(ValueError):
    """A config failed validation; ``errors`` lists every field problem."""

    def __init__(self, errors: list["FieldError"]):
        self.errors = errors
        super().__init__("; ".join(str(e) for e in errors))


class CapabilityError(ValueError):
    """The config is well formed but asks for an unsupported combination."""


@dataclass(frozen=True)
class FieldError:
    path: str
    message: str

    def __str__(self):
        return f"{self.path}: {self.message}"


@lru_cache(maxsize=1)
def schema() -> dict:
    return json.loads(resources.files("cylevy").joinpath("experiment.schema.json").read_text())


def _json_path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def _schema_errors(cfg) -> list[FieldError]:
    validator = jsonschema.Draft202012Validator(schema())
    out = []
    for err in validator.iter_errors(cfg):
        # descend into the most specific failure of composite keywords
        leaves = [err]
        while any(e.context for e in leaves):
            leaves = [c for e in leaves for c in (e.context or [e])]
        for e in leaves:
            path = list(e.absolute_path)
            if e.validator == "required" and isinstance(e.instance, dict):
                missing = [k for k in e.validator_value if k not in e.instance]
                for k in missing:
                    out.append(FieldError(_json_path(path + [k]), "required field is missing"))
                continue
            out.append(FieldError(_json_path(path), e.message))
    uniq = sorted(set(out), key=lambda f: (f.path, f.message))
    return uniq


def _semantic_errors(cfg: dict) -> list[FieldError]:
    errs = []
    model = cfg.get("model")
    d_U = model.get("d_U") if isinstance(model, dict) else None
    if isinstance(model, dict):
        p = model.get("params", {})
        for key in ("drift", "scales", "cov_diag"):
            if key in p and len(p[key]) != d_U:
                errs.append(FieldError(f"$.model.params.{key}", f"length must equal d_U={d_U}"))
        if "cov" in p:
            cov = np.asarray(p["cov"], dtype=float)
            if cov.shape != (d_U, d_U):
                errs.append(FieldError("$.model.params.cov", f"must be a {d_U}x{d_U} matrix"))
    ops = []
    if "operators" in cfg:
        ops = [("$.operators[%d]" % i, o) for i, o in enumerate(cfg["operators"])]
    if "integrand" in cfg:
        ops.append(("$.integrand.operator", cfg["integrand"]["operator"]))
    d_V = None
    for path, op in ops:
        shape = _operator_shape(op)
        if "entries" in op and len(op["entries"]) != shape[0] * shape[1]:
            errs.append(FieldError(path + ".entries", "entry count does not match shape"))
        if d_U is not None and shape[1] != d_U:
            errs.append(FieldError(path, f"operator domain {shape[1]} differs from model d_U={d_U}"))
        if d_V is not None and shape[0] != d_V:
            errs.append(FieldError(path, "operators must share one range dimension"))
        d_V = shape[0] if d_V is None else d_V
    dims = cfg.get("dims", {})
    if "d_U" in dims and d_U is not None and dims["d_U"] != d_U:
        errs.append(FieldError("$.dims.d_U", "disagrees with $.model.d_U"))
    if "d_V" in dims and d_V is not None and dims["d_V"] != d_V:
        errs.append(FieldError("$.dims.d_V", "disagrees with the operator range dimension"))
    if isinstance(model, dict) and "d_V" in model and d_V is not None and model["d_V"] != d_V:
        errs.append(FieldError("$.model.d_V", "disagrees with the operator range dimension"))
    levels = cfg.get("levels")
    if levels:
        if any(n & (n - 1) for n in levels):
            errs.append(FieldError("$.levels", "levels must be powers of two"))
        if any(b <= a for a, b in zip(levels, levels[1:])):
            errs.append(FieldError("$.levels", "levels must be strictly increasing"))
    if "probes" in cfg and isinstance(cfg["probes"], list) and d_V is not None:
        for i, v in enumerate(cfg["probes"]):
            if len(v) != d_V:
                errs.append(FieldError(f"$.probes[{i}]", f"probe length must equal d_V={d_V}"))
    part = cfg.get("partition", {})
    if "times" in part:
        t = part["times"]
        if t[0] != 0 or any(b <= a for a, b in zip(t, t[1:])):
            errs.append(FieldError("$.partition.times", "must start at 0 and increase strictly"))
    arr = cfg.get("array", {})
    if "values" in arr or "probs" in arr:
        if len(arr.get("values", [])) != len(arr.get("probs", [])) or not arr.get("probs"):
            errs.append(FieldError("$.array", "values and probs must have equal nonzero length"))
        elif abs(sum(arr["probs"]) - 1.0) > 1e-12:
            errs.append(FieldError("$.array.probs", "probabilities must sum to one"))
    return errs


def validate_config(cfg) -> list[FieldError]:
    """All field errors of ``cfg``; empty when it is runnable."""
    errs = _schema_errors(cfg)
    if errs:
        return errs
    errs = _semantic_errors(cfg)
    if errs:
        return errs
    try:
        check_capabilities(cfg)
    except CapabilityError as exc:
        return [FieldError("$.model", f"capability: {exc}")]
    return []


def load_config(path) -> dict:
    """Read a JSON config; raises OSError / json.JSONDecodeError on unreadable input."""
    return json.loads(Path(path).read_text())


def require_valid(cfg: dict) -> dict:
    errs = validate_config(cfg)
    if errs:
        raise ConfigError(errs)
    return cfg


# builders -------------------------------------------------------------------

def _operator_shape(spec: dict) -> tuple[int, int]:
    if "shape" in spec:
        return tuple(spec["shape"])
    return spec["d_V"], spec["d_U"]


def build_operators(spec: dict) -> list[HSOperator]:
    """One operator, or several for a ``random`` preset with ``count``."""
    if "entries" in spec:
        d_V, d_U = spec["shape"]
        return [HSOperator(np.asarray(spec["entries"], dtype=np.float64).reshape(d_V, d_U))]
    d_V, d_U = spec["d_V"], spec["d_U"]
    preset = spec["preset"]
    if preset == "diagonal":
        vals = spec.get("values", [1.0] * min(d_V, d_U))
        g = np.zeros((d_V, d_U))
        for i, v in enumerate(vals[: min(d_V, d_U)]):
            g[i, i] = v
        return [HSOperator(g)]
    if preset == "rank-one":
        i, k = spec.get("index", [0, 0])
        return [HSOperator.rank_one(d_V, d_U, i, k, spec.get("scale", 1.0))]
    rng = seeding.generator(spec.get("seed", 0), 0)
    scale = spec.get("scale", 1.0) / math.sqrt(d_U)
    return [HSOperator(scale * rng.standard_normal((d_V, d_U))) for _ in range(spec.get("count", 1))]


def build_operator_list(specs: list) -> list[HSOperator]:
    return [op for s in specs for op in build_operators(s)]


def build_model(cfg: dict) -> LevyModel:
    family, d_U, p = cfg["family"], cfg["d_U"], cfg.get("params", {})
    drift = np.asarray(p.get("drift", np.zeros(d_U)), dtype=np.float64)
    cov = None
    if "cov" in p:
        cov = SOperator(np.asarray(p["cov"], dtype=np.float64))
    elif "cov_diag" in p:
        cov = SOperator.diagonal(p["cov_diag"])
    elif family == "gaussian":
        cov = SOperator.identity(d_U)
    jumps = None
    if family == "diagonal":
        law = p["law"]
        if law == "brownian":
            one = Brownian()
        elif law == "compound_poisson":
            one = CompoundPoisson(p["rate"], p.get("jumps", "rademacher"))
        else:
            one = SymmetricStable(p["alpha"])
        jumps = DiagonalLevy(np.asarray(p.get("scales", np.ones(d_U)), dtype=np.float64), one)
    elif family == "stable":
        jumps = CanonicalStable(p["alpha"], p.get("c", 1.0))
    return LevyModel(SymbolSpec(drift, cov, jumps), name=family)


def build_rule(spec: dict) -> IntegrandRule:
    (phi,) = build_operators(spec["operator"])
    p = spec.get("params", {})
    rule = spec["rule"]
    if rule == "constant":
        return ConstantRule(phi)
    if rule == "poly(t)":
        return PolyRule(tuple(p.get("coeffs", [1.0])), phi)
    if rule == "exp-decay":
        return ExpDecayRule(p.get("rate", 1.0), phi)
    return NoiseClampRule(phi, p.get("cap", 1.0))


def build_partition(spec: dict) -> np.ndarray:
    if "times" in spec:
        return np.asarray(spec["times"], dtype=np.float64)
    return np.linspace(0.0, spec.get("horizon", 1.0), spec["steps"] + 1)


def check_capabilities(cfg: dict) -> None:
    """Reject combinations that need a coordinate noise panel for the canonical stable model."""
    model = cfg.get("model")
    if not isinstance(model, dict) or model.get("family") != "stable":
        return
    kind = cfg.get("kind")
    if kind == "refine":
        raise CapabilityError("refine needs a coordinate noise panel; canonical stable noise has none")
    if kind == "boundedness":
        raise CapabilityError("boundedness needs a coordinate noise panel; canonical stable noise has none")
