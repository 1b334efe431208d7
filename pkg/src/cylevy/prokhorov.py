"""Prokhorov distance between finitely supported probability measures.

Two independent routes:

* subset enumeration (each support <= 12 atoms): checks the defining
  domination condition on every subset of each support, which is exact because
  for an atomic measure only closed sets made of its own atoms can bind;
* coupling (combined support <= 200 atoms): by Strassen's theorem the distance
  is the least eps admitting a coupling with ``P(|X - Y| > eps) <= eps``; the
  largest coupling mass within distance eps is a transport LP.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize, sparse

from .hilbert import HVector

EXACT_LIMIT = 12
SUPPORT_LIMIT = 200
_MASS_TOL = 1e-12


class RegimeError(ValueError):
    """Support too large for the requested computation."""


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Finite atomic measure; coincident atoms are merged and null atoms dropped."""

    atoms: np.ndarray  # (n, d)
    weights: np.ndarray  # (n,)

    def __post_init__(self):
        a = np.asarray(
            [x.coeffs if isinstance(x, HVector) else x for x in self.atoms], dtype=np.float64
        )
        if a.ndim == 1:
            a = a[:, None]
        w = np.asarray(self.weights, dtype=np.float64)
        if a.ndim != 2 or w.shape != (a.shape[0],):
            raise ValueError("atoms must be (n, d) with one weight per atom")
        if np.any(w < 0) or not np.all(np.isfinite(w)) or not np.all(np.isfinite(a)):
            raise ValueError("weights must be finite and nonnegative")
        keep = w > 0
        a, w = a[keep], w[keep]
        uniq, inv = np.unique(a, axis=0, return_inverse=True)
        merged = np.zeros(uniq.shape[0])
        np.add.at(merged, inv.ravel(), w)
        uniq.setflags(write=False)
        merged.setflags(write=False)
        object.__setattr__(self, "atoms", uniq)
        object.__setattr__(self, "weights", merged)

    @property
    def total(self) -> float:
        return float(np.sum(self.weights))

    @property
    def size(self) -> int:
        return self.weights.size

    def is_probability(self) -> bool:
        return abs(self.total - 1.0) <= 1e-12

    @classmethod
    def from_samples(cls, samples) -> "EmpiricalMeasure":
        x = np.asarray(samples, dtype=np.float64)
        return cls(x, np.full(x.shape[0], 1.0 / x.shape[0]))

    def __eq__(self, other):
        return (
            isinstance(other, EmpiricalMeasure)
            and np.array_equal(self.atoms, other.atoms)
            and np.array_equal(self.weights, other.weights)
        )


def _distances(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> np.ndarray:
    diff = mu.atoms[:, None, :] - nu.atoms[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def _one_direction(w_mu: np.ndarray, w_nu: np.ndarray, D: np.ndarray) -> float:
    """Least eps with ``mu(A) <= nu(A^eps) + eps`` for every subset A of mu's atoms."""
    n = w_mu.size
    n_sub = 1 << n
    dist = np.full((n_sub, w_nu.size), np.inf)
    mass = np.zeros(n_sub)
    for mask in range(1, n_sub):
        low = (mask & -mask).bit_length() - 1
        rest = mask & (mask - 1)
        dist[mask] = np.minimum(dist[rest], D[low])
        mass[mask] = mass[rest] + w_mu[low]
    dist, mass = dist[1:], mass[1:]
    order = np.argsort(dist, axis=1, kind="stable")
    d_sorted = np.take_along_axis(dist, order, axis=1)
    covered = np.cumsum(w_nu[order], axis=1)
    rows = dist.shape[0]
    # piece k is (lo_k, hi_k] on which nu(A^eps) equals cov_k
    lo = np.concatenate([np.zeros((rows, 1)), d_sorted], axis=1)
    hi = np.concatenate([d_sorted, np.full((rows, 1), np.inf)], axis=1)
    cov = np.concatenate([np.zeros((rows, 1)), covered], axis=1)
    excess = mass[:, None] - cov
    excess[excess <= _MASS_TOL] = 0.0
    cand = np.maximum(lo, excess)
    cand[cand > hi] = np.inf
    return float(np.max(np.min(cand, axis=1)))


def prokhorov_exact(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    """Subset-enumeration route; exact when each support has at most ``EXACT_LIMIT`` atoms."""
    _check(mu, nu)
    if max(mu.size, nu.size) > EXACT_LIMIT:
        raise RegimeError(f"subset enumeration is limited to {EXACT_LIMIT} atoms per measure")
    D = _distances(mu, nu)
    return max(
        _one_direction(mu.weights, nu.weights, D),
        _one_direction(nu.weights, mu.weights, D.T),
    )


def _coupled_mass(w_mu: np.ndarray, w_nu: np.ndarray, D: np.ndarray, eps: float) -> float:
    """Largest total mass of a sub-coupling supported on pairs at distance <= eps."""
    i, j = np.nonzero(D <= eps)
    if i.size == 0:
        return 0.0
    n, m = D.shape
    k = i.size
    cols = np.arange(k)
    A = sparse.vstack([
        sparse.csr_matrix((np.ones(k), (i, cols)), shape=(n, k)),
        sparse.csr_matrix((np.ones(k), (j, cols)), shape=(m, k)),
    ])
    b = np.concatenate([w_mu, w_nu])
    res = optimize.linprog(-np.ones(k), A_ub=A, b_ub=b, bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(-res.fun)


def prokhorov_coupling(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    """Coupling route (Strassen); exact up to LP solver tolerance."""
    _check(mu, nu)
    if mu.size + nu.size > SUPPORT_LIMIT:
        raise RegimeError(f"combined support exceeds {SUPPORT_LIMIT} atoms")
    D = _distances(mu, nu)
    # eps = 1 is always feasible, so the answer lies in [0, 1]
    levels = np.unique(np.concatenate([[0.0, 1.0], D.ravel()]))
    levels = levels[levels <= 1.0]
    cache: dict[int, float] = {}

    def mass(k: int) -> float:
        if k not in cache:
            cache[k] = _coupled_mass(mu.weights, nu.weights, D, levels[k])
        return cache[k]

    def feasible(k: int) -> bool:
        return 1.0 - mass(k) <= levels[k] + _MASS_TOL

    if feasible(0):
        return 0.0
    lo, hi = 0, levels.size - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    # on [levels[lo], levels[hi]) the coupled mass is mass(lo)
    inside = 1.0 - mass(lo)
    if inside < levels[hi]:
        return max(float(levels[lo]), inside)
    return float(levels[hi])


def _check(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> None:
    if not (mu.is_probability() and nu.is_probability()):
        raise ValueError("both measures must be probability measures")
    if mu.atoms.shape[1] != nu.atoms.shape[1]:
        raise ValueError("measures live in spaces of different dimension")


def prokhorov_distance(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    """Subset enumeration up to 12 atoms per measure, otherwise the coupling LP
    (up to 200 atoms in total)."""
    if max(mu.size, nu.size) <= EXACT_LIMIT:
        return prokhorov_exact(mu, nu)
    return prokhorov_coupling(mu, nu)
