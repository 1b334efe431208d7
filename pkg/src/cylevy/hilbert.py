"""Truncated Hilbert-space linear algebra.

Vectors and operators are stored as dense coefficient arrays with respect to the
coordinate bases ``{e_k}`` of U and ``{f_i}`` of V.  Truncation error is never
hidden: :func:`tail_energy` reports what a finite basis leaves out.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class HVector:
    """Element of a truncated separable Hilbert space."""

    coeffs: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.coeffs)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("HVector needs a nonempty 1-d coefficient array")
        if not np.all(np.isfinite(arr)):
            raise ValueError("HVector coefficients must be finite")
        object.__setattr__(self, "coeffs", arr)

    @property
    def dim(self) -> int:
        return self.coeffs.size

    def norm(self) -> float:
        return float(np.sqrt(np.dot(self.coeffs, self.coeffs)))

    @classmethod
    def zeros(cls, dim: int) -> "HVector":
        return cls(np.zeros(dim))

    @classmethod
    def basis(cls, dim: int, k: int) -> "HVector":
        """The k-th basis vector, zero-based."""
        c = np.zeros(dim)
        c[k] = 1.0
        return cls(c)

    def __eq__(self, other):
        return isinstance(other, HVector) and np.array_equal(self.coeffs, other.coeffs)

    def to_json(self) -> dict:
        return {"shape": [self.dim], "entries": self.coeffs.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "HVector":
        shape = obj["shape"]
        entries = np.asarray(obj["entries"], dtype=np.float64)
        if len(shape) != 1 or entries.size != shape[0]:
            raise ValueError(f"entries do not match shape {shape}")
        return cls(entries)


@dataclass(frozen=True, eq=False)
class HSOperator:
    """Truncated Hilbert-Schmidt operator U -> V.

    ``entries[i, k] = <phi e_k, f_i>``, so the grid has shape ``(d_V, d_U)``.
    """

    entries: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.entries)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("HSOperator needs a nonempty 2-d grid")
        if not np.all(np.isfinite(arr)):
            raise ValueError("HSOperator entries must be finite")
        object.__setattr__(self, "entries", arr)

    @property
    def d_V(self) -> int:
        return self.entries.shape[0]

    @property
    def d_U(self) -> int:
        return self.entries.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    @classmethod
    def zeros(cls, d_V: int, d_U: int) -> "HSOperator":
        return cls(np.zeros((d_V, d_U)))

    @classmethod
    def identity(cls, d: int) -> "HSOperator":
        return cls(np.eye(d))

    @classmethod
    def rank_one(cls, d_V: int, d_U: int, i: int, k: int, scale: float = 1.0) -> "HSOperator":
        """``scale * (f_i (x) e_k)``, mapping e_k to scale*f_i (zero-based indices)."""
        g = np.zeros((d_V, d_U))
        g[i, k] = scale
        return cls(g)

    def apply(self, u) -> np.ndarray:
        """Apply to a vector or a batch of U-coefficient rows."""
        u = u.coeffs if isinstance(u, HVector) else np.asarray(u, dtype=np.float64)
        if u.shape[-1] != self.d_U:
            raise ValueError(f"dimension mismatch: operator expects {self.d_U}, got {u.shape[-1]}")
        return u @ self.entries.T

    def __call__(self, u: HVector) -> HVector:
        return HVector(self.apply(u))

    def __add__(self, other: "HSOperator") -> "HSOperator":
        return HSOperator(self.entries + other.entries)

    def __sub__(self, other: "HSOperator") -> "HSOperator":
        return HSOperator(self.entries - other.entries)

    def __mul__(self, a: float) -> "HSOperator":
        return HSOperator(a * self.entries)

    __rmul__ = __mul__

    def __eq__(self, other):
        return isinstance(other, HSOperator) and np.array_equal(self.entries, other.entries)

    def to_json(self) -> dict:
        return {"shape": [self.d_V, self.d_U], "entries": self.entries.ravel().tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "HSOperator":
        shape = tuple(obj["shape"])
        entries = np.asarray(obj["entries"], dtype=np.float64)
        if len(shape) != 2 or entries.size != shape[0] * shape[1]:
            raise ValueError(f"entries do not match shape {list(shape)}")
        return cls(entries.reshape(shape))


def as_grid(phi) -> np.ndarray:
    return phi.entries if isinstance(phi, HSOperator) else np.asarray(phi, dtype=np.float64)


def hs_norm(phi) -> float:
    g = as_grid(phi)
    return float(np.sqrt(np.sum(g * g)))


def adjoint(phi: HSOperator) -> HSOperator:
    return HSOperator(as_grid(phi).T)


def compose(theta, phi: HSOperator) -> HSOperator:
    """``theta o phi`` for a bounded ``theta: V -> V`` given as a d_V x d_V grid."""
    return HSOperator(as_grid(theta) @ as_grid(phi))


def operator_norm(theta) -> float:
    """Spectral norm of a bounded operator grid."""
    return float(np.linalg.norm(as_grid(theta), 2))


def column_energy(phi) -> np.ndarray:
    """``||phi e_k||^2`` for every basis vector e_k of U."""
    g = as_grid(phi)
    return np.sum(g * g, axis=0)


def tail_energy(phi, N: int) -> float:
    """``sum_{k > N} ||phi e_k||^2`` with N counted from one, as in the basis {e_1, e_2, ...}."""
    g = as_grid(phi)
    d_U = g.shape[1]
    if not 0 <= N <= d_U:
        raise IndexError(f"N={N} outside [0, {d_U}]")
    return float(np.sum(column_energy(g)[N:]))


@dataclass(frozen=True)
class CompactnessReport:
    bound: float
    N_schedule: tuple[int, ...]
    tail_curve: tuple[float, ...]


def compactness_probe(family: Sequence[HSOperator], N_schedule: Iterable[int]) -> CompactnessReport:
    """Uniform boundedness and uniform tail decay of an operator family.

    A family is relatively compact in L2(U, V) exactly when it is bounded and the
    supremum of tail energies vanishes as N grows; at finite truncation we can only
    report the curve and let the caller judge the trend.
    """
    grids = [as_grid(phi) for phi in family]
    if not grids:
        raise ValueError("compactness_probe needs a nonempty family")
    shape = grids[0].shape
    if any(g.shape != shape for g in grids):
        raise ValueError("family members must share one shape")
    schedule = tuple(int(n) for n in N_schedule)
    energies = np.stack([column_energy(g) for g in grids])  # (members, d_U)
    # tails[m, N] = sum over columns >= N (zero-based) = sum over k > N (one-based)
    tails = np.concatenate([np.cumsum(energies[:, ::-1], axis=1)[:, ::-1], np.zeros((len(grids), 1))], axis=1)
    for n in schedule:
        if not 0 <= n <= shape[1]:
            raise IndexError(f"N={n} outside [0, {shape[1]}]")
    curve = tuple(float(np.max(tails[:, n])) for n in schedule)
    bound = max(hs_norm(g) for g in grids)
    return CompactnessReport(bound=bound, N_schedule=schedule, tail_curve=curve)


@dataclass(frozen=True, eq=False)
class SOperator:
    """Nonnegative symmetric trace-class operator on a truncated space."""

    entries: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.entries)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
            raise ValueError("SOperator needs a square grid")
        if not np.all(np.isfinite(arr)):
            raise ValueError("SOperator entries must be finite")
        if not np.array_equal(arr, arr.T):
            raise ValueError("SOperator must be symmetric")
        diag = np.diag(arr)
        if np.any(diag < 0):
            raise ValueError("SOperator diagonal must be nonnegative")
        trace = float(np.sum(diag))
        smallest = float(np.linalg.eigvalsh(arr)[0])
        if smallest < -1e-10 * trace:
            raise ValueError(f"SOperator is not nonnegative definite (smallest eigenvalue {smallest:.3e})")
        object.__setattr__(self, "entries", arr)
        object.__setattr__(self, "_trace", trace)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def trace(self) -> float:
        return self._trace

    @classmethod
    def identity(cls, d: int) -> "SOperator":
        return cls(np.eye(d))

    @classmethod
    def diagonal(cls, values) -> "SOperator":
        return cls(np.diag(np.asarray(values, dtype=np.float64)))

    @classmethod
    def from_factor(cls, phi) -> "SOperator":
        """``phi phi*``, symmetrised against rounding."""
        g = as_grid(phi)
        m = g @ g.T
        return cls(0.5 * (m + m.T))

    def quadratic(self, u) -> np.ndarray:
        """``<T u, u>`` for a vector or a batch of rows."""
        u = u.coeffs if isinstance(u, HVector) else np.asarray(u, dtype=np.float64)
        return np.einsum("...i,ij,...j->...", u, self.entries, u)

    def sqrt(self) -> np.ndarray:
        """Symmetric square root grid."""
        w, q = np.linalg.eigh(self.entries)
        return (q * np.sqrt(np.clip(w, 0.0, None))) @ q.T

    def to_json(self) -> dict:
        return {"shape": [self.dim, self.dim], "entries": self.entries.ravel().tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "SOperator":
        d0, d1 = obj["shape"]
        return cls(np.asarray(obj["entries"], dtype=np.float64).reshape(d0, d1))


def s_operator_tail(T: SOperator, N: int) -> float:
    """``sum_{k > N} <T f_k, f_k>``."""
    if not 0 <= N <= T.dim:
        raise IndexError(f"N={N} outside [0, {T.dim}]")
    return float(np.sum(np.diag(T.entries)[N:]))


def dumps(obj) -> str:
    """JSON text for an HVector, HSOperator or SOperator."""
    return json.dumps(obj.to_json())
