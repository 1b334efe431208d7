"""Finite-state tangent arrays, their decoupled versions and the
conditioning-product diagnostic.

An array row ``n`` is driven by a Markov state: step ``k`` draws ``X_{n,k}``
from a law that depends only on the state after step ``k - 1``, and the draw
determines the next state.  Row sums stop at ``sigma_n``, the first step after
which the state enters a stopping set (or the row length ``K_n``).

The decoupled draw ``X*_{n,k}`` comes from the same conditional law evaluated
along the *original* path, using an independent stream; this is the standard
construction of a decoupled tangent sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import special

from . import seeding
from .diagnostics import batch_mean_se, empirical_cf


@dataclass(frozen=True, eq=False)
class DiscreteLaw:
    """Per state ``s``: outcome ``j`` has value ``values[s, j]``, probability
    ``probs[s, j]`` and moves the chain to ``next_state[s, j]``."""

    values: np.ndarray  # (S, m, d)
    probs: np.ndarray  # (S, m)
    next_state: np.ndarray  # (S, m)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 2:
            v = v[..., None]
        p = np.asarray(self.probs, dtype=np.float64)
        nxt = np.asarray(self.next_state, dtype=np.int64)
        if p.shape != v.shape[:2] or nxt.shape != p.shape:
            raise ValueError("values, probs and next_state disagree in shape")
        if np.any(p < 0) or not np.allclose(p.sum(axis=1), 1.0, atol=1e-12):
            raise ValueError("each state's outcome probabilities must sum to one")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "next_state", nxt)
        object.__setattr__(self, "_cum", np.cumsum(p, axis=1))

    @property
    def n_outcomes(self) -> int:
        return self.probs.shape[1]

    def sample(self, states: np.ndarray, u: np.ndarray):
        cum = self._cum[states]
        j = np.minimum((u[:, :1] >= cum).sum(axis=1), self.n_outcomes - 1)
        return self.values[states, j], self.next_state[states, j], j

    def outcome_probs(self, states: np.ndarray) -> np.ndarray:
        return self.probs[states]

    def cf(self, states: np.ndarray, beta: float) -> np.ndarray:
        return np.sum(self.probs[states] * np.exp(1j * beta * self.values[states, :, 0]), axis=1)


@dataclass(frozen=True, eq=False)
class GaussianLaw:
    """Per state: ``N(mean[s], std[s]^2 I)``; the next state is
    ``next_state[s, 0]`` for a negative first coordinate and ``next_state[s, 1]`` otherwise."""

    mean: np.ndarray  # (S, d)
    std: np.ndarray  # (S,)
    next_state: np.ndarray  # (S, 2)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        if mean.ndim == 1:
            mean = mean[:, None]
        std = np.asarray(self.std, dtype=np.float64)
        nxt = np.asarray(self.next_state, dtype=np.int64)
        if std.shape != mean.shape[:1] or nxt.shape != (mean.shape[0], 2) or np.any(std < 0):
            raise ValueError("malformed Gaussian law")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)
        object.__setattr__(self, "next_state", nxt)

    n_outcomes = 2

    def sample(self, states: np.ndarray, u: np.ndarray):
        d = self.mean.shape[1]
        x = self.mean[states] + self.std[states, None] * special.ndtri(u[:, :d])
        j = (x[:, 0] >= 0).astype(np.int64)
        return x, self.next_state[states, j], j

    def outcome_probs(self, states: np.ndarray) -> np.ndarray:
        m, s = self.mean[states, 0], self.std[states]
        with np.errstate(divide="ignore", invalid="ignore"):
            up = np.where(s > 0, special.ndtr(m / np.where(s > 0, s, 1.0)), (m >= 0).astype(float))
        return np.stack([1.0 - up, up], axis=1)

    def cf(self, states: np.ndarray, beta: float) -> np.ndarray:
        m, s = self.mean[states, 0], self.std[states]
        return np.exp(1j * beta * m - 0.5 * (beta * s) ** 2)


@dataclass(frozen=True, eq=False)
class TangentArray:
    """A triangular array given row by row through ``law(n, k)``, ``k = 1..length(n)``."""

    name: str
    n_states: int
    law: Callable[[int, int], DiscreteLaw | GaussianLaw]
    length: Callable[[int], int] = lambda n: n
    initial_state: int = 0
    stop_states: frozenset = frozenset()
    dim: int = 1
    target: Callable[[float], complex] | None = None
    params: dict = field(default_factory=dict)

    def to_config(self) -> dict:
        return {"name": self.name, **self.params}


@dataclass(frozen=True, eq=False)
class TangentRun:
    """Row-``n`` replicas: stopped sums of the original and decoupled arrays."""

    n: int
    original: np.ndarray  # (R, d)
    decoupled: np.ndarray  # (R, d)
    sigma: np.ndarray  # (R,)
    visits: np.ndarray  # (S,) active replica-steps per state
    counts_original: np.ndarray  # (S, m) outcome counts
    counts_decoupled: np.ndarray  # (S, m)
    expected: np.ndarray  # (S, m) expected outcome counts
    products: np.ndarray | None  # (R, n_beta) conditional CF products
    master_seed: int


def simulate(array: TangentArray, n: int, replicas: int, master_seed: int,
             betas: Sequence[float] = ()) -> TangentRun:
    """Run row ``n`` of ``array`` and its decoupled version on ``replicas`` paths."""
    if replicas < 1:
        raise ValueError("replicas must be positive")
    rng = seeding.generator(master_seed, n, 0)
    rng_star = seeding.generator(master_seed, n, 1)
    R, d, S = replicas, array.dim, array.n_states
    state = np.full(R, array.initial_state, dtype=np.int64)
    active = np.ones(R, dtype=bool)
    total = np.zeros((R, d))
    total_star = np.zeros((R, d))
    sigma = np.zeros(R, dtype=np.int64)
    stops = np.array(sorted(array.stop_states), dtype=np.int64)
    prods = np.ones((R, len(betas)), dtype=np.complex128) if len(betas) else None
    visits = np.zeros(S)
    counts, counts_star, expected = None, None, None
    for k in range(1, array.length(n) + 1):
        if not active.any():
            break
        law = array.law(n, k)
        if counts is None:
            m = law.n_outcomes
            counts, counts_star, expected = np.zeros((S, m)), np.zeros((S, m)), np.zeros((S, m))
        x, nxt, j = law.sample(state, seeding.unit_from_generator(rng, (R, d)))
        xs, _, js = law.sample(state, seeding.unit_from_generator(rng_star, (R, d)))
        a = active
        total[a] += x[a]
        total_star[a] += xs[a]
        sigma[a] = k
        sa = state[a]
        np.add.at(visits, sa, 1)
        np.add.at(counts, (sa, j[a]), 1)
        np.add.at(counts_star, (sa, js[a]), 1)
        np.add.at(expected, sa, law.outcome_probs(sa))
        if prods is not None:
            for b, beta in enumerate(betas):
                prods[a, b] *= law.cf(sa, beta)
        state = np.where(a, nxt, state)
        active = a & ~np.isin(state, stops)
    if counts is None:
        counts = counts_star = expected = np.zeros((S, 1))
    return TangentRun(n, total, total_star, sigma, visits, counts, counts_star, expected,
                      prods, master_seed)


def decoupled_tangent(array: TangentArray, n: int, replicas: int, master_seed: int) -> TangentRun:
    return simulate(array, n, replicas, master_seed)


@dataclass(frozen=True)
class FrequencyCheck:
    """Largest binomial z-scores of the per-state outcome frequencies."""

    z_original: float  # original draws vs the exact conditional table
    z_decoupled: float  # decoupled draws vs the exact conditional table
    z_difference: float  # decoupled vs original
    cells: int  # (state, outcome) cells compared per series

    def passes(self, k: float = 3.0) -> bool:
        """Decoupled and original tables agree within ``k`` binomial standard errors."""
        return self.z_difference <= k

    def table_threshold(self, k: float = 3.0) -> float:
        """Per-cell z threshold holding the family-wise level of one ``k``-sigma test
        over every cell of both series."""
        level = special.ndtr(-k) / max(2 * self.cells, 1)
        return float(-special.ndtri(level))

    def matches_table(self, k: float = 3.0) -> bool:
        return max(self.z_original, self.z_decoupled) <= self.table_threshold(k)


def frequency_check(run: TangentRun) -> FrequencyCheck:
    n = run.visits[:, None]
    seen = n[:, 0] > 0
    if not seen.any():
        return FrequencyCheck(0.0, 0.0, 0.0, 0)
    n = n[seen]
    p = run.expected[seen] / n
    f, fs = run.counts_original[seen] / n, run.counts_decoupled[seen] / n
    var = p * (1 - p) / n

    def z(diff, v):
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(v > 0, np.abs(diff) / np.sqrt(v), np.where(np.abs(diff) > 1e-12, np.inf, 0.0))
        return float(out.max())

    return FrequencyCheck(z(f - p, var), z(fs - p, var), z(f - fs, 2 * var), int(p.size))


@dataclass(frozen=True)
class ConditioningRow:
    n: int
    beta: float
    target: complex
    product_dev: float  # mean |prod_k Delta_{n,k}(beta) - c(beta)|
    product_se: float
    cf_dev: float  # |E exp(i beta S_n) - c(beta)|
    cf_se: float


@dataclass(frozen=True)
class ConditioningReport:
    rows: tuple[ConditioningRow, ...]
    replicas: int
    master_seed: int

    def series(self, beta: float, attr: str = "product_dev") -> list[tuple[int, float, float]]:
        se = attr.replace("dev", "se")
        return [(r.n, getattr(r, attr), getattr(r, se)) for r in self.rows if r.beta == beta]


def conditioning_test(array: TangentArray, betas: Sequence[float], rows: Sequence[int],
                      replicas: int, master_seed: int,
                      target: Callable[[float], complex] | None = None) -> ConditioningReport:
    """Track ``prod_k E[exp(i beta X_{n,k}) | F_{n,k-1}]`` against ``c(beta)`` along rows."""
    target = target or array.target
    if target is None:
        raise ValueError("a limiting characteristic function c(beta) is required")
    betas = [float(b) for b in betas]
    cs = [complex(target(b)) for b in betas]
    if any(c == 0 for c in cs):
        raise ValueError("c(beta) must be nonzero on the probe grid")
    if array.dim != 1:
        raise ValueError("the conditioning test is for real-valued arrays")
    out = []
    for n in rows:
        run = simulate(array, n, replicas, master_seed, betas)
        for b, (beta, c) in enumerate(zip(betas, cs)):
            dev = np.abs(run.products[:, b] - c)
            emp, emp_se = empirical_cf(run.original, [beta])
            out.append(ConditioningRow(n, beta, c, float(dev.mean()), batch_mean_se(dev),
                                       abs(emp - c), emp_se))
    return ConditioningReport(tuple(out), replicas, master_seed)


# fixture arrays ---------------------------------------------------------

def iid_array(values: Sequence[float], probs: Sequence[float], scale_power: float = 0.5) -> TangentArray:
    """Rows of i.i.d. draws ``value * n**-scale_power``."""
    v = np.asarray(values, dtype=np.float64)[None, :]
    p = np.asarray(probs, dtype=np.float64)[None, :]
    nxt = np.zeros_like(p, dtype=np.int64)

    def law(n, k):
        return DiscreteLaw(v * n ** -scale_power, p, nxt)

    return TangentArray("iid", 1, law,
                        params={"values": v[0].tolist(), "probs": p[0].tolist(),
                                "scale_power": scale_power})


def deterministic_array(value: float = 1.0) -> TangentArray:
    """``X_{n,k} = value / n``; decoupling changes nothing."""
    def law(n, k):
        return DiscreteLaw([[[value / n]]], [[1.0]], [[0]])

    return TangentArray("deterministic", 1, law, params={"value": value})


def sticky_sign_array(p_stay: float = 0.8, run_stop: int | None = None) -> TangentArray:
    """``X_{n,k} = +-1/sqrt(n)``; the sign repeats the previous one with probability ``p_stay``.

    State 0 is the start (fair coin), then the state records the last sign and
    the current run length (capped at ``run_stop``).  With ``run_stop`` set, the
    row stops as soon as a run of that many equal signs completes.
    """
    r = run_stop or 1
    # states: 0 start; 1..r runs of +; r+1..2r runs of -
    S = 1 + 2 * r

    def plus(run):
        return min(run, r)

    def minus(run):
        return r + min(run, r)

    probs = np.zeros((S, 2))
    nxt = np.zeros((S, 2), dtype=np.int64)
    probs[0] = (0.5, 0.5)
    nxt[0] = (plus(1), minus(1))
    for run in range(1, r + 1):
        probs[plus(run)] = (p_stay, 1 - p_stay)
        nxt[plus(run)] = (plus(run + 1), minus(1))
        probs[minus(run)] = (1 - p_stay, p_stay)
        nxt[minus(run)] = (plus(1), minus(run + 1))
    signs = np.tile([1.0, -1.0], (S, 1))
    stops = frozenset({plus(r), minus(r)}) if run_stop else frozenset()

    def law(n, k):
        return DiscreteLaw(signs / math.sqrt(n), probs, nxt)

    return TangentArray("sticky-sign", S, law, stop_states=stops,
                        params={"p_stay": p_stay, "run_stop": run_stop})


def gaussian_weights_array(power: float = 1.0) -> TangentArray:
    """Independent ``N(0, w_k)`` with ``w_k`` proportional to ``k**power`` and summing to one."""
    def law(n, k):
        w = np.arange(1, n + 1, dtype=np.float64) ** power
        return GaussianLaw([[0.0]], [math.sqrt(w[k - 1] / w.sum())], [[0, 0]])

    return TangentArray("gaussian-weights", 1, law, target=lambda b: math.exp(-0.5 * b * b),
                        params={"power": power})


def history_variance_array(delta: float = 0.5) -> TangentArray:
    """Gaussian steps with variance ``(1 + delta * s) / n``, ``s`` the sign of the previous step (0 at the start)."""
    if not 0 <= delta < 1:
        raise ValueError("delta must lie in [0, 1)")
    std = np.array([1.0, math.sqrt(1 - delta), math.sqrt(1 + delta)])
    nxt = np.array([[1, 2]] * 3)

    def law(n, k):
        return GaussianLaw(np.zeros((3, 1)), std / math.sqrt(n), nxt)

    return TangentArray("history-variance", 3, law, target=lambda b: math.exp(-0.5 * b * b),
                        params={"delta": delta})


ARRAYS = {
    "iid": iid_array,
    "deterministic": deterministic_array,
    "sticky-sign": sticky_sign_array,
    "gaussian-weights": gaussian_weights_array,
    "history-variance": history_variance_array,
}


def array_from_config(cfg: dict) -> TangentArray:
    cfg = dict(cfg)
    name = cfg.pop("name")
    if name not in ARRAYS:
        raise ValueError(f"unknown array {name!r}")
    return ARRAYS[name](**cfg)
