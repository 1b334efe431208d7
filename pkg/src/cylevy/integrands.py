"""Adapted operator-valued integrands.

An :class:`IntegrandRule` maps ``(t, history)`` to an operator grid.  ``history``
only exposes the noise increments on steps that end at or before ``t``, which
makes every rule adapted by construction.  Rules are vectorised over replicas:
a deterministic rule returns one ``(d_V, d_U)`` grid, a random one returns
``(R, d_V, d_U)``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .hilbert import HSOperator, as_grid
from .levy import NoisePanel, validate_partition

_TIME_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class History:
    """Read-only view of the noise prefix up to (and including) time ``t``."""

    t: float
    times: np.ndarray  # grid points 0 = s_0 < ... < s_m <= t
    increments: np.ndarray  # (R, m, d_U)

    @property
    def replicas(self) -> int:
        return self.increments.shape[0]

    def running(self) -> np.ndarray:
        """Coordinates of ``L(s_m)`` per replica."""
        return self.increments.sum(axis=1)


def history_at(panel: Optional[NoisePanel], t: float) -> Optional[History]:
    if panel is None:
        return None
    m = int(np.searchsorted(panel.times, t + _TIME_TOL, side="right")) - 1
    m = max(0, min(m, panel.steps))
    inc = panel.increments[:, :m, :]
    return History(float(t), panel.times[: m + 1], inc)


class IntegrandRule:
    """Base class; subclasses set ``shape`` and ``deterministic`` and implement ``__call__``."""

    name = "rule"
    deterministic = True
    shape: tuple[int, int]

    def __call__(self, t: float, history: Optional[History]) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> dict:
        return {}

    def to_config(self) -> dict:
        return {"rule": self.name, "params": self.params()}


def _need_history(history: Optional[History], name: str) -> History:
    if history is None:
        raise ValueError(f"rule {name!r} depends on the noise history; pass a panel")
    return history


@dataclass(frozen=True, eq=False)
class ConstantRule(IntegrandRule):
    phi: HSOperator
    name = "constant"

    @property
    def shape(self):
        return self.phi.shape

    def __call__(self, t, history=None):
        return self.phi.entries

    def params(self):
        return {"phi": self.phi.to_json()}


@dataclass(frozen=True, eq=False)
class PolyRule(IntegrandRule):
    """``(c_0 + c_1 t + ... + c_m t^m) * phi``."""

    coeffs: tuple[float, ...]
    phi: HSOperator
    name = "poly(t)"

    @property
    def shape(self):
        return self.phi.shape

    def __call__(self, t, history=None):
        return float(np.polynomial.polynomial.polyval(t, self.coeffs)) * self.phi.entries

    def params(self):
        return {"coeffs": list(self.coeffs), "phi": self.phi.to_json()}


@dataclass(frozen=True, eq=False)
class ExpDecayRule(IntegrandRule):
    """``exp(-rate * t) * phi``."""

    rate: float
    phi: HSOperator
    name = "exp-decay"

    @property
    def shape(self):
        return self.phi.shape

    def __call__(self, t, history=None):
        return float(np.exp(-self.rate * t)) * self.phi.entries

    def params(self):
        return {"rate": self.rate, "phi": self.phi.to_json()}


@dataclass(frozen=True, eq=False)
class NoiseClampRule(IntegrandRule):
    """``min(cap, ||L(t)||) * phi`` where ``L(t)`` is the running coordinate noise."""

    phi: HSOperator
    cap: float = 1.0
    name = "noise-adapted-clamp"
    deterministic = False

    @property
    def shape(self):
        return self.phi.shape

    def __call__(self, t, history=None):
        h = _need_history(history, self.name)
        level = np.minimum(self.cap, np.linalg.norm(h.running(), axis=-1))
        return level[:, None, None] * self.phi.entries

    def params(self):
        return {"cap": self.cap, "phi": self.phi.to_json()}


@dataclass(frozen=True, eq=False)
class LinearCombination(IntegrandRule):
    """``sum_i a_i * rule_i`` for rules of one shape."""

    terms: tuple[tuple[float, IntegrandRule], ...]
    name = "combination"

    def __post_init__(self):
        shapes = {r.shape for _, r in self.terms}
        if len(shapes) != 1:
            raise ValueError("combined rules must share one output shape")

    @property
    def shape(self):
        return self.terms[0][1].shape

    @property
    def deterministic(self):
        return all(r.deterministic for _, r in self.terms)

    def __call__(self, t, history=None):
        out = None
        for a, rule in self.terms:
            term = a * rule(t, history)
            out = term if out is None else out + term
        return out

    def params(self):
        return {"terms": [[a, r.to_config()] for a, r in self.terms]}


@dataclass(frozen=True, eq=False)
class FrozenRule(IntegrandRule):
    """The value of ``base`` at the fixed time ``at``; ignores the query time."""

    base: IntegrandRule
    at: float
    name = "frozen"

    @property
    def shape(self):
        return self.base.shape

    @property
    def deterministic(self):
        return self.base.deterministic

    def __call__(self, t, history=None):
        if history is not None and history.t + _TIME_TOL < self.at:
            raise ValueError("frozen rule queried before its evaluation time")
        if history is not None and history.t > self.at + _TIME_TOL:
            keep = int(np.searchsorted(history.times, self.at + _TIME_TOL, side="right")) - 1
            history = History(self.at, history.times[: keep + 1], history.increments[:, :keep, :])
        return self.base(self.at, history)

    def params(self):
        return {"at": self.at, "base": self.base.to_config()}


# -- contraction-valued rules (V -> V) used as elementary integrands -----------

@dataclass(frozen=True, eq=False)
class SignPatternRule(IntegrandRule):
    """``signs[k] * identity`` on the k-th interval of ``times``."""

    times: np.ndarray
    signs: tuple[int, ...]
    dim: int
    name = "sign-pattern"

    @property
    def shape(self):
        return (self.dim, self.dim)

    def __call__(self, t, history=None):
        k = int(np.searchsorted(self.times, t + _TIME_TOL, side="right")) - 1
        k = min(max(k, 0), len(self.signs) - 1)
        return float(self.signs[k]) * np.eye(self.dim)

    def params(self):
        return {"signs": list(self.signs), "dim": self.dim}


@dataclass(frozen=True, eq=False)
class AdaptedSignRule(IntegrandRule):
    """``sign(<L(t), e_coord>) * identity`` (zero counts as +); an adapted contraction.

    An optional deterministic ``pattern`` of signs on the intervals of ``times``
    multiplies the adapted sign.
    """

    dim: int
    coord: int = 0
    flip: bool = False
    times: tuple[float, ...] = ()
    pattern: tuple[int, ...] = ()
    name = "adapted-sign"
    deterministic = False

    @property
    def shape(self):
        return (self.dim, self.dim)

    def __call__(self, t, history=None):
        h = _need_history(history, self.name)
        s = np.where(h.running()[:, self.coord] >= 0.0, 1.0, -1.0)
        if self.flip:
            s = -s
        if self.pattern:
            k = int(np.searchsorted(self.times, t + _TIME_TOL, side="right")) - 1
            s = s * self.pattern[min(max(k, 0), len(self.pattern) - 1)]
        return s[:, None, None] * np.eye(self.dim)

    def params(self):
        return {"dim": self.dim, "coord": self.coord, "flip": self.flip, "pattern": list(self.pattern)}


# -- simple processes ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SimpleProcess:
    """``Phi_0 1_{0} + sum_j Phi_j 1_{(t_j, t_{j+1}]}`` on a deterministic partition.

    ``rules[0]`` gives the value at time 0 and ``rules[j + 1]`` the value on
    ``(times[j], times[j + 1]]``; the latter is evaluated with the history up
    to ``times[j]`` only.
    """

    times: np.ndarray
    rules: tuple[IntegrandRule, ...]

    def __post_init__(self):
        t = validate_partition(self.times).copy()
        t.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "rules", tuple(self.rules))
        if len(self.rules) != t.size:
            raise ValueError("a simple process needs one rule per partition point")
        if len({r.shape for r in self.rules}) != 1:
            raise ValueError("all rules of a simple process must share one shape")

    @classmethod
    def from_operators(cls, times, operators: Sequence, initial=None) -> "SimpleProcess":
        """Deterministic simple process with ``operators[j]`` on the j-th interval."""
        ops = [HSOperator(as_grid(op)) for op in operators]
        first = ops[0] if initial is None else HSOperator(as_grid(initial))
        return cls(np.asarray(times, dtype=np.float64), tuple(ConstantRule(op) for op in [first] + ops))

    @property
    def intervals(self) -> int:
        return self.times.size - 1

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def shape(self) -> tuple[int, int]:
        return self.rules[0].shape

    @property
    def deterministic(self) -> bool:
        return all(r.deterministic for r in self.rules)

    def interval_value(self, j: int, panel: Optional[NoisePanel]) -> np.ndarray:
        """``Phi`` on the j-th interval ``(times[j], times[j+1]]``, zero-based."""
        t = float(self.times[j])
        return np.asarray(self.rules[j + 1](t, history_at(panel, t)))

    def operators(self, panel: Optional[NoisePanel] = None) -> list[np.ndarray]:
        return [self.interval_value(j, panel) for j in range(self.intervals)]

    def value_at(self, t: float, panel: Optional[NoisePanel] = None) -> np.ndarray:
        if t <= 0.0:
            return np.asarray(self.rules[0](0.0, history_at(panel, 0.0)))
        j = int(np.searchsorted(self.times, t - _TIME_TOL, side="left")) - 1
        j = min(max(j, 0), self.intervals - 1)
        return self.interval_value(j, panel)

    def scaled(self, a: float) -> "SimpleProcess":
        return SimpleProcess(self.times, tuple(LinearCombination(((a, r),)) for r in self.rules))

    def __add__(self, other: "SimpleProcess") -> "SimpleProcess":
        if not np.array_equal(self.times, other.times):
            raise ValueError("simple processes must share a partition to be added")
        rules = tuple(LinearCombination(((1.0, r), (1.0, s))) for r, s in zip(self.rules, other.rules))
        return SimpleProcess(self.times, rules)


def discretize(rule: IntegrandRule, partition) -> SimpleProcess:
    """Left-endpoint discretisation: ``Phi_j = rule(t_j)`` on ``(t_j, t_{j+1}]``."""
    times = validate_partition(partition)
    rules = [FrozenRule(rule, 0.0)] + [FrozenRule(rule, float(t)) for t in times[:-1]]
    return SimpleProcess(times, tuple(rules))


def dyadic_partition(T: float, n: int) -> np.ndarray:
    return np.linspace(0.0, T, n + 1)


# -- sampled paths and the Skorokhod distance ---------------------------------

@dataclass(frozen=True, eq=False)
class PathGrid:
    """A caglad trajectory sampled on a grid: ``values[i]`` is the path at ``times[i]``.

    Between grid points the path is read as left-continuous and piecewise
    constant: on ``(times[i-1], times[i]]`` it equals ``values[i]``.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.array(self.times, dtype=np.float64)
        v = np.array(self.values, dtype=np.float64)
        if t.ndim != 1 or t.size < 1 or (t.size > 1 and not np.all(np.diff(t) > 0)):
            raise ValueError("PathGrid times must be strictly increasing")
        if v.ndim != 3 or v.shape[0] != t.size:
            raise ValueError("PathGrid values must have shape (n, d_V, d_U)")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def at(self, s: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.times, s, side="left")
        return self.values[np.clip(idx, 0, self.times.size - 1)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        d_V, d_U = self.values.shape[1:]
        w.writerow(["time"] + [f"e{i}_{k}" for i in range(d_V) for k in range(d_U)])
        for t, v in zip(self.times, self.values):
            w.writerow([repr(float(t))] + [repr(float(x)) for x in v.ravel()])
        return buf.getvalue()


def _pick_replica(value: np.ndarray, replica: int) -> np.ndarray:
    return value[replica] if value.ndim == 3 else value


def sample_path(source, grid, panel: Optional[NoisePanel] = None, replica: int = 0) -> PathGrid:
    """Evaluate a rule or a simple process pointwise on ``grid`` for one replica."""
    grid = np.asarray(grid, dtype=np.float64)
    if panel is not None:
        if grid[-1] > panel.times[-1] + _TIME_TOL or grid[0] < 0.0:
            raise ValueError("grid leaves the panel horizon")
        panel = NoisePanel(
            panel.increments[replica : replica + 1],
            panel.times,
            panel.master_seed,
            panel.replica_offset + replica,
            panel.model_config,
        )
        replica = 0
    if isinstance(source, SimpleProcess):
        vals = [_pick_replica(source.value_at(float(t), panel), replica) for t in grid]
    else:
        vals = [_pick_replica(np.asarray(source(float(t), history_at(panel, float(t)))), replica) for t in grid]
    return PathGrid(grid, np.stack(vals))


def _cost(p: PathGrid, q: PathGrid, a: np.ndarray, b: np.ndarray) -> float:
    """``max(sup_t ||p(t) - q(j(t))||, sup_t |t - j(t)|)`` for the piecewise-linear ``j`` with knots (a, b)."""
    pulled = np.interp(q.times, b, a)
    cuts = np.unique(np.concatenate([[0.0], p.times, pulled]))
    mids = 0.5 * (cuts[:-1] + cuts[1:])
    ts = np.concatenate([[0.0], mids])
    diff = p.at(ts) - q.at(np.interp(ts, a, b))
    sup = float(np.sqrt(np.max(np.sum(diff * diff, axis=(1, 2)))))
    return max(sup, float(np.max(np.abs(a - b))))


def skorokhod_distance_ub(p: PathGrid, q: PathGrid, knot_budget: int = 4) -> float:
    """Upper bound on the Skorokhod J1 distance between two sampled caglad paths.

    Greedily inserts up to ``knot_budget`` interior knots ``(a, b)`` taken from
    the merged grid into a piecewise-linear time change, keeping an insertion
    only when it lowers the cost.  Starts from the identity, so the result never
    exceeds the sup-norm distance.
    """
    if p.values.shape[1:] != q.values.shape[1:]:
        raise ValueError("paths must share one operator shape")
    T = p.horizon
    if abs(q.horizon - T) > _TIME_TOL or p.times[0] != 0.0 or q.times[0] != 0.0:
        raise ValueError("paths must live on the same horizon [0, T]")
    a = np.array([0.0, T])
    b = np.array([0.0, T])
    best = _cost(p, q, a, b)
    merged = np.unique(np.concatenate([p.times, q.times]))
    cand = merged[(merged > 0.0) & (merged < T)]
    for _ in range(max(0, int(knot_budget))):
        if best == 0.0 or cand.size == 0:
            break
        top = (best, None)
        for x in cand:
            pos = int(np.searchsorted(a, x))
            if pos == 0 or pos >= a.size or a[pos] == x:
                continue
            lo, hi = b[pos - 1], b[pos]
            ys = cand[(cand > lo) & (cand < hi) & (np.abs(cand - x) < top[0])]
            for y in ys:
                a2 = np.insert(a, pos, x)
                b2 = np.insert(b, pos, y)
                c = _cost(p, q, a2, b2)
                if c < top[0]:
                    top = (c, (a2, b2))
        if top[1] is None:
            break
        best, (a, b) = top
    return best
