"""Stochastic integrals of simple processes and the coupled refinement driver.

All integrals over a :class:`~cylevy.levy.NoisePanel` are evaluated in
summation-by-parts form

    sum_j Phi_j (L(s_{j+1}) - L(s_j))
        = Phi_m L(s_{m+1}) - Phi_1 L(s_1) - sum_{j=2..m} (Phi_j - Phi_{j-1}) L(s_j)

with ``L`` the cumulative panel noise at grid points.  The two forms agree
algebraically; this one makes partitions that share operator values agree bit
for bit, because equal consecutive operators contribute an exact zero.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import seeding
from .diagnostics import BATCH, p_metric
from .hilbert import operator_norm
from .integrands import IntegrandRule, SimpleProcess, discretize
from .levy import LevyModel, NoisePanel, UnsupportedSampler, generate_noise_panel, radonify_increments


class AlignmentError(ValueError):
    """A partition or observation time is not a grid point of the noise panel."""


@dataclass(frozen=True, eq=False)
class IntegralSample:
    values: np.ndarray  # (replicas, observation times, d_V)
    observation_times: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        t = np.asarray(self.observation_times, dtype=np.float64)
        if v.ndim != 3 or v.shape[1] != t.size:
            raise ValueError("values must have shape (replicas, observation times, d_V)")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "observation_times", t)

    @property
    def replicas(self) -> int:
        return self.values.shape[0]

    def at(self, i: int = -1) -> np.ndarray:
        """Samples at the i-th observation time, shape ``(replicas, d_V)``."""
        return self.values[:, i, :]


def _apply(op: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Apply one operator (or a replica stack of them) to coordinate rows ``x[r]``."""
    if op.ndim == 2:
        return x @ op.T
    return np.einsum("rvu,ru->rv", op, x)


def _grid_index(panel_times: np.ndarray, t: float) -> int:
    i = int(np.searchsorted(panel_times, t))
    tol = 1e-12 * max(1.0, float(panel_times[-1]))
    for j in (i - 1, i):
        if 0 <= j < panel_times.size and abs(panel_times[j] - t) <= tol:
            return j
    raise AlignmentError(f"time {t!r} is not a grid point of the noise panel")


def _check_panel(model: LevyModel, panel: NoisePanel) -> None:
    if not model.coordinate_representable:
        raise UnsupportedSampler("canonical stable noise has no coordinate panel; use integrate_direct")
    if panel.model_config is not None and panel.model_config != model.to_config():
        raise ValueError("noise panel was generated from a different model")
    if panel.d_U != model.d_U:
        raise ValueError("panel dimension does not match the model")


def _abel_sum(ops: Sequence[np.ndarray], L: np.ndarray) -> np.ndarray:
    """``sum_j ops[j] (L[:, j+1] - L[:, j])`` by parts; ``L`` has ``len(ops) + 1`` points."""
    m = len(ops)
    out = _apply(ops[m - 1], L[:, m]) - _apply(ops[0], L[:, 0])
    if m > 1:
        if all(op.ndim == 2 for op in ops):
            dphi = np.diff(np.stack(ops), axis=0)  # (m-1, d_V, d_U)
            out -= np.einsum("jvu,rju->rv", dphi, L[:, 1:m])
        else:
            for j in range(1, m):
                d = ops[j] - ops[j - 1]
                if np.any(d):
                    out -= _apply(d, L[:, j])
    return out


def _integrals_on_cumulative(ops, psi_times: np.ndarray, cum: np.ndarray, grid: np.ndarray, obs: Sequence[float]) -> np.ndarray:
    """``I(Psi)(t)`` for every ``t`` in ``obs`` given operator values and cumulative noise."""
    idx = np.array([_grid_index(grid, float(s)) for s in psi_times])
    R = cum.shape[0]
    d_V = ops[0].shape[-2]
    out = np.zeros((R, len(obs), d_V))
    for n, t in enumerate(obs):
        it = _grid_index(grid, float(t))
        m = int(np.searchsorted(idx, it, side="left"))  # intervals with left end < t
        if m == 0:
            continue
        pts = np.append(idx[:m], it)  # s_j = t ^ t_j for the active intervals
        out[:, n, :] = _abel_sum(ops[:m], cum[:, pts, :])
    return out


def _operators_for(psi: SimpleProcess, panel: NoisePanel) -> list[np.ndarray]:
    ops = psi.operators(panel)
    return [op if op.ndim == 2 else np.asarray(op) for op in ops]


def _provenance(model, psi, panel: NoisePanel, kind: str) -> dict:
    return {
        "kind": kind,
        "model_id": model.model_id,
        "integrand_id": _integrand_id(psi),
        "partition": psi.times.tolist(),
        "master_seed": panel.master_seed,
        "replica_offset": panel.replica_offset,
    }


def _integrand_id(psi: SimpleProcess) -> str:
    blob = json.dumps([r.to_config() for r in psi.rules], sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def integrate_simple_many(model: LevyModel, psi: SimpleProcess, times: Sequence[float], panel: NoisePanel) -> IntegralSample:
    """``I(Psi)(t)`` at several observation times on one panel."""
    _check_panel(model, panel)
    if psi.horizon > panel.times[-1] + 1e-12:
        raise AlignmentError("simple process extends past the panel horizon")
    times = [float(t) for t in times]
    for t in times:
        if not 0.0 <= t <= psi.horizon + 1e-12:
            raise ValueError(f"observation time {t} outside [0, T]")
    ops = _operators_for(psi, panel)
    vals = _integrals_on_cumulative(ops, psi.times, panel.cumulative(), panel.times, times)
    return IntegralSample(vals, np.asarray(times), _provenance(model, psi, panel, "I"))


def integrate_simple(model: LevyModel, psi: SimpleProcess, t: float, panel: NoisePanel) -> IntegralSample:
    """``I(Psi)(t) = sum_j Phi_j (L(t ^ t_{j+1}) - L(t ^ t_j))`` per replica."""
    return integrate_simple_many(model, psi, [t], panel)


def integrate_cadlag(model: LevyModel, psi: SimpleProcess, panel: NoisePanel, times: Optional[Sequence[float]] = None) -> IntegralSample:
    """The right-continuous step variant: zero before ``t_2``, then the partial sum up to the
    last partition point at or before ``t``.  Defaults to observing every partition point."""
    times = psi.times.tolist() if times is None else [float(t) for t in times]
    anchors = []
    for t in times:
        k = int(np.searchsorted(psi.times, t + 1e-12, side="right")) - 1
        anchors.append(float(psi.times[max(k, 0)]))
    sample = integrate_simple_many(model, psi, anchors, panel)
    prov = dict(sample.provenance, kind="I~")
    return IntegralSample(sample.values, np.asarray(times), prov)


def integrate_direct(model: LevyModel, psi: SimpleProcess, t: float, replicas: int, master_seed: int) -> IntegralSample:
    """``I(Psi)(t)`` for a deterministic simple process without a coordinate panel.

    Each interval contributes an independent exact radonified increment, so
    this works for every model family including the canonical stable one.
    """
    if not psi.deterministic:
        raise UnsupportedSampler("history-dependent integrands need a coordinate noise panel")
    ops = psi.operators(None)
    out = np.zeros((replicas, ops[0].shape[0]))
    for j, op in enumerate(ops):
        a, b = float(psi.times[j]), float(min(psi.times[j + 1], t))
        if b <= a:
            break
        out += radonify_increments(model, op, b - a, replicas, seeding.generator(master_seed, j))
    prov = {"kind": "I-direct", "model_id": model.model_id, "integrand_id": _integrand_id(psi),
            "partition": psi.times.tolist(), "master_seed": master_seed}
    return IntegralSample(out[:, None, :], np.asarray([t]), prov)


# ---------------------------------------------------------------------------
# coupled refinement
# ---------------------------------------------------------------------------

def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class RefinementReport:
    levels: tuple[int, ...]
    pairwise_p: tuple[float, ...]
    pairwise_se: tuple[float, ...]
    final_p: tuple[float, ...]
    final_se: tuple[float, ...]
    t: float
    replicas: int
    master_seed: int
    provenance: dict = field(default_factory=dict)

    def to_rows(self) -> list[dict]:
        rows = []
        for i, lvl in enumerate(self.levels):
            has_pair = i < len(self.pairwise_p)
            rows.append({
                "level": lvl,
                "pairwise_p": self.pairwise_p[i] if has_pair else "",
                "pairwise_se": self.pairwise_se[i] if has_pair else "",
                "final_p": self.final_p[i],
                "final_se": self.final_se[i],
            })
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=["level", "pairwise_p", "pairwise_se", "final_p", "final_se"], lineterminator="\n")
        w.writeheader()
        for row in self.to_rows():
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "levels": list(self.levels),
            "pairwise_p": list(self.pairwise_p),
            "pairwise_se": list(self.pairwise_se),
            "final_p": list(self.final_p),
            "final_se": list(self.final_se),
            "t": self.t,
            "replicas": self.replicas,
            "master_seed": self.master_seed,
            "provenance": self.provenance,
        }


def _run_blocks(fn, starts: Sequence[int], threads: int) -> list:
    if threads <= 1 or len(starts) <= 1:
        return [fn(s) for s in starts]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, starts))


def refine_and_integrate(
    model: LevyModel,
    rule: IntegrandRule,
    levels: Sequence[int],
    t: Optional[float] = None,
    replicas: int = 1000,
    master_seed: int = 0,
    T: float = 1.0,
    block: int = 1000,
    threads: int = 1,
) -> RefinementReport:
    """Integrate the left-endpoint discretisations of ``rule`` on dyadic partitions,
    all driven by one shared finest-level noise panel."""
    levels = tuple(int(n) for n in levels)
    if not levels or not all(_is_pow2(n) for n in levels):
        raise ValueError("levels must be powers of two")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be strictly increasing")
    if block % BATCH:
        raise ValueError(f"block must be a multiple of {BATCH}")
    finest = levels[-1]
    grid = np.linspace(0.0, T, finest + 1)
    t = T if t is None else float(t)
    _grid_index(grid, t)
    procs = [discretize(rule, grid[:: finest // n]) for n in levels]

    def run(start: int) -> np.ndarray:
        size = min(block, replicas - start)
        panel = generate_noise_panel(model, grid, size, master_seed, replica_offset=start)
        cum = panel.cumulative()
        out = np.empty((size, len(levels), rule.shape[0]))
        for i, psi in enumerate(procs):
            out[:, i, :] = _integrals_on_cumulative(_operators_for(psi, panel), psi.times, cum, grid, [t])[:, 0, :]
        return out

    starts = list(range(0, replicas, block))
    vals = np.concatenate(_run_blocks(run, starts, threads), axis=0)
    pair, pair_se, fin, fin_se = [], [], [], []
    for i in range(len(levels) - 1):
        p, se = p_metric(vals[:, i], vals[:, i + 1])
        pair.append(p)
        pair_se.append(se)
    for i in range(len(levels)):
        p, se = p_metric(vals[:, i], vals[:, -1])
        fin.append(p)
        fin_se.append(se)
    prov = {"model_id": model.model_id, "rule": rule.to_config(), "T": T, "block": block}
    return RefinementReport(tuple(levels), tuple(pair), tuple(pair_se), tuple(fin), tuple(fin_se), t, replicas, master_seed, prov)


# ---------------------------------------------------------------------------
# elementary integrals against contraction-valued simple processes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundednessReport:
    eps: tuple[float, ...]
    quantiles: tuple[float, ...]  # pooled (1 - eps)-quantile of the norm over family x replicas
    growth: tuple[tuple[int, tuple[float, ...]], ...]  # (family prefix size, quantiles)
    family_size: int
    replicas: int


def _check_contraction(op: np.ndarray) -> None:
    if op.ndim == 2:
        norm = operator_norm(op)
    else:
        norm = float(np.max(np.linalg.norm(op, 2, axis=(1, 2))))
    if norm > 1.0 + 1e-9:
        raise ValueError(f"integrand value has operator norm {norm:.6g} > 1")


def elementary_integral_probe(
    model: LevyModel,
    psi: SimpleProcess,
    thetas: Sequence[SimpleProcess],
    panel: NoisePanel,
    eps: Sequence[float] = (0.1, 0.01),
) -> BoundednessReport:
    """Norm quantiles of ``sum_k Gamma_k (I(Psi)(s_{k+1}) - I(Psi)(s_k))`` over a family of
    contraction-valued simple processes ``Theta``."""
    if not thetas:
        raise ValueError("the contraction family must be nonempty")
    for th in thetas:
        for s in th.times:
            if not np.any(np.abs(psi.times - s) <= 1e-12):
                raise AlignmentError("Theta partition must be a sub-partition of Psi's partition")
    obs = sorted({float(s) for th in thetas for s in th.times})
    where = {s: i for i, s in enumerate(obs)}
    I = integrate_simple_many(model, psi, obs, panel).values
    norms = []
    for th in thetas:
        acc = np.zeros((panel.replicas, I.shape[2]))
        for k, gamma in enumerate(th.operators(panel)):
            _check_contraction(gamma)
            inc = I[:, where[float(th.times[k + 1])]] - I[:, where[float(th.times[k])]]
            acc += _apply(gamma, inc)
        norms.append(np.sqrt(np.einsum("ij,ij->i", acc, acc)))
    norms = np.stack(norms)  # (family, replicas)
    levels = [1.0 - e for e in eps]

    def q(block: np.ndarray) -> tuple[float, ...]:
        return tuple(float(x) for x in np.quantile(block.ravel(), levels, method="inverted_cdf"))

    growth = []
    m = 1
    while m < len(thetas):
        growth.append((m, q(norms[:m])))
        m *= 2
    growth.append((len(thetas), q(norms)))
    return BoundednessReport(tuple(eps), q(norms), tuple(growth), len(thetas), panel.replicas)
