"""Closed-form cylindrical Levy families, exact samplers and the increment law.

Three jump families are supported: none (pure drift plus Gaussian), a diagonal
model whose coordinates ``L(t)e_k`` are independent scaled one-dimensional Levy
processes, and the canonical rotation-invariant stable model with symbol
``-c ||u||^alpha``.  The last one has no coordinate representation; its
radonified increments are sampled by Gaussian subordination.
"""

from __future__ import annotations

import functools
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import integrate, special

from . import seeding
from .hilbert import HVector, SOperator, as_grid


class UnsupportedSampler(ValueError):
    """Requested sampler does not exist for this model family."""


# ---------------------------------------------------------------------------
# one-dimensional laws
# ---------------------------------------------------------------------------

def _poisson_inv(u: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Inverse CDF of Poisson(mu), elementwise."""
    u, mu = np.broadcast_arrays(u, mu)
    p = np.exp(-mu)
    F = p.copy()
    k = np.zeros(u.shape, dtype=np.int64)
    j = 0
    while True:
        above = u > F
        if not above.any():
            break
        j += 1
        if j > 10 and np.all(p[above] < 1e-18 * F[above]):
            # F has saturated below u in floating point; these are far tail draws
            k += above
            break
        k += above
        p = p * mu / j
        F = F + p
    return k


def _binomial_half_inv(u: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Inverse CDF of Binomial(n, 1/2), elementwise with integer n >= 0."""
    n = np.asarray(n, dtype=np.int64)
    p = np.ldexp(1.0, -n)
    F = p.copy()
    k = np.zeros(n.shape, dtype=np.int64)
    top = int(n.max()) if n.size else 0
    for j in range(top):
        live = j < n
        k += (u > F) & live
        p = np.where(live, p * (n - j) / (j + 1), 0.0)
        F = F + p
    return k


def symmetric_stable_from_unit(alpha: float, u0: np.ndarray, u1: np.ndarray) -> np.ndarray:
    """Chambers-Mallows-Stuck draw with characteristic function exp(-|x|^alpha)."""
    v = np.pi * (u0 - 0.5)
    w = -np.log(u1)
    if alpha == 1.0:
        return np.tan(v)
    return (np.sin(alpha * v) / np.cos(v) ** (1.0 / alpha)) * (
        np.cos((1.0 - alpha) * v) / w
    ) ** ((1.0 - alpha) / alpha)


def positive_stable_from_unit(beta: float, u0: np.ndarray, u1: np.ndarray) -> np.ndarray:
    """Totally skewed beta-stable draw (0 < beta < 1) with Laplace transform exp(-s^beta)."""
    v = np.pi * u0
    w = -np.log(u1)
    return (np.sin(beta * v) / np.sin(v) ** (1.0 / beta)) * (
        np.sin((1.0 - beta) * v) / w
    ) ** ((1.0 - beta) / beta)


@dataclass(frozen=True)
class Brownian:
    tag = "brownian"
    slots = 1

    def symbol(self, x):
        return -0.5 * np.square(x) + 0j

    def sample(self, dt, u0, u1):
        return np.sqrt(dt) * special.ndtri(u0)

    def to_config(self) -> dict:
        return {"law": "brownian"}


@dataclass(frozen=True)
class CompoundPoisson:
    rate: float
    jumps: str = "rademacher"  # or "normal"
    tag = "compound_poisson"
    slots = 2

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("compound Poisson rate must be positive")
        if self.jumps not in ("rademacher", "normal"):
            raise ValueError(f"unknown jump law {self.jumps!r}")

    def symbol(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.jumps == "rademacher":
            return self.rate * (np.cos(x) - 1.0) + 0j
        return self.rate * (np.exp(-0.5 * x * x) - 1.0) + 0j

    def sample(self, dt, u0, u1):
        counts = _poisson_inv(u0, self.rate * np.asarray(dt, dtype=np.float64))
        if self.jumps == "rademacher":
            heads = _binomial_half_inv(u1, counts)
            return (2 * heads - counts).astype(np.float64)
        return np.sqrt(counts) * special.ndtri(u1)

    def to_config(self) -> dict:
        return {"law": "compound_poisson", "rate": self.rate, "jumps": self.jumps}


@dataclass(frozen=True)
class SymmetricStable:
    alpha: float
    tag = "symmetric_stable"
    slots = 2

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise ValueError("stable index must lie in (0, 2)")

    def symbol(self, x):
        return -np.abs(x) ** self.alpha + 0j

    def sample(self, dt, u0, u1):
        return np.asarray(dt, dtype=np.float64) ** (1.0 / self.alpha) * symmetric_stable_from_unit(self.alpha, u0, u1)

    def to_config(self) -> dict:
        return {"law": "symmetric_stable", "alpha": self.alpha}


OneDimLaw = Union[Brownian, CompoundPoisson, SymmetricStable]


@dataclass(frozen=True, eq=False)
class DiagonalLevy:
    """Independent coordinates ``L(t)e_k = sigma_k * ell_k(t)`` with a shared 1-d law."""

    scales: np.ndarray
    law: OneDimLaw

    def __post_init__(self):
        s = np.array(self.scales, dtype=np.float64)
        if s.ndim != 1 or not np.all(s > 0) or not np.all(np.isfinite(s)):
            raise ValueError("diagonal scales must be positive and finite")
        s.setflags(write=False)
        object.__setattr__(self, "scales", s)

    def symbol(self, u: np.ndarray) -> np.ndarray:
        return np.sum(self.law.symbol(u * self.scales), axis=-1)


@dataclass(frozen=True)
class CanonicalStable:
    """Rotation-invariant stable jumps with symbol ``-c ||u||^alpha``."""

    alpha: float
    c: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise ValueError("stable index must lie in (0, 2)")
        if not self.c > 0:
            raise ValueError("stable scale c must be positive")

    def symbol(self, u: np.ndarray) -> np.ndarray:
        return -self.c * np.linalg.norm(u, axis=-1) ** self.alpha + 0j


@dataclass(frozen=True, eq=False)
class SymbolSpec:
    """Drift functional, Gaussian covariance Q and a closed-form jump family."""

    drift: np.ndarray
    gaussian_cov: Optional[SOperator] = None
    jumps: Optional[Union[DiagonalLevy, CanonicalStable]] = None

    def __post_init__(self):
        d = np.array(self.drift, dtype=np.float64)
        if d.ndim != 1 or d.size < 1 or not np.all(np.isfinite(d)):
            raise ValueError("drift must be a finite vector")
        d.setflags(write=False)
        object.__setattr__(self, "drift", d)
        if self.gaussian_cov is not None and self.gaussian_cov.dim != d.size:
            raise ValueError("gaussian_cov dimension does not match drift")
        if isinstance(self.jumps, DiagonalLevy) and self.jumps.scales.size != d.size:
            raise ValueError("diagonal scales dimension does not match drift")

    @property
    def d_U(self) -> int:
        return self.drift.size

    def symbol(self, u) -> np.ndarray:
        """Vectorised symbol over the last axis of ``u``."""
        u = u.coeffs if isinstance(u, HVector) else np.asarray(u, dtype=np.float64)
        if u.shape[-1] != self.d_U:
            raise ValueError(f"dimension mismatch: symbol expects {self.d_U}, got {u.shape[-1]}")
        out = 1j * (u @ self.drift)
        if self.gaussian_cov is not None:
            out = out - 0.5 * self.gaussian_cov.quadratic(u)
        if self.jumps is not None:
            out = out + self.jumps.symbol(u)
        return out


def evaluate_symbol(spec: SymbolSpec, u: HVector) -> complex:
    return complex(spec.symbol(u))


@dataclass(frozen=True, eq=False)
class LevyModel:
    spec: SymbolSpec
    name: str = ""
    _qsqrt: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.spec.gaussian_cov is not None:
            object.__setattr__(self, "_qsqrt", self.spec.gaussian_cov.sqrt())
        jumps = self.spec.jumps
        if isinstance(jumps, DiagonalLevy) and isinstance(jumps.law, Brownian):
            # construction-time check that the closed form and the coordinate sampler agree
            probe = np.linspace(-1.0, 1.0, self.d_U)
            got = jumps.symbol(probe)
            want = -0.5 * np.sum((jumps.scales * probe) ** 2)
            if not np.isclose(got.real, want, rtol=1e-12, atol=0.0) or got.imag != 0.0:
                raise ValueError("diagonal Brownian symbol inconsistent with sampler")

    @property
    def d_U(self) -> int:
        return self.spec.d_U

    @property
    def family(self) -> str:
        jumps = self.spec.jumps
        if jumps is None:
            return "gaussian"
        if isinstance(jumps, CanonicalStable):
            return "stable"
        return "diagonal"

    @property
    def sampler_kind(self) -> str:
        return "subordinated" if self.family == "stable" else "coordinate"

    @property
    def coordinate_representable(self) -> bool:
        return self.sampler_kind == "coordinate"

    def symbol(self, u) -> np.ndarray:
        return self.spec.symbol(u)

    def is_symmetric(self) -> bool:
        return not np.any(self.spec.drift)

    def to_config(self) -> dict:
        spec = self.spec
        params: dict = {}
        if np.any(spec.drift):
            params["drift"] = spec.drift.tolist()
        if spec.gaussian_cov is not None:
            params["cov"] = spec.gaussian_cov.entries.tolist()
        jumps = spec.jumps
        if isinstance(jumps, DiagonalLevy):
            params["scales"] = jumps.scales.tolist()
            params.update(jumps.law.to_config())
        elif isinstance(jumps, CanonicalStable):
            params["alpha"] = jumps.alpha
            params["c"] = jumps.c
        return {"family": self.family, "d_U": self.d_U, "params": params}

    @property
    def model_id(self) -> str:
        blob = json.dumps(self.to_config(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    # -- coordinate sampler ------------------------------------------------

    def coordinate_increments(self, dt, unit: np.ndarray) -> np.ndarray:
        """Map uniforms ``unit[slot, ..., d_U]`` to coordinate increments over ``dt``.

        ``dt`` broadcasts against ``unit[0]``.  Slot 0 feeds the Gaussian part,
        slots 1 and 2 the jump part.
        """
        if not self.coordinate_representable:
            raise UnsupportedSampler("canonical stable noise has no coordinate representation")
        dt = np.asarray(dt, dtype=np.float64)
        out = np.broadcast_to(dt * self.spec.drift, unit.shape[1:]).copy()
        if self._qsqrt is not None:
            out += np.sqrt(dt) * (special.ndtri(unit[0]) @ self._qsqrt)
        jumps = self.spec.jumps
        if isinstance(jumps, DiagonalLevy):
            out += jumps.scales * jumps.law.sample(dt, unit[1], unit[2])
        return out


# ---------------------------------------------------------------------------
# characteristic function of a radonified increment
# ---------------------------------------------------------------------------

def increment_cf(model: LevyModel, phi, dt: float, v) -> complex:
    """``E exp(i <phi(L(t) - L(s)), v>) = exp((t - s) S(phi* v))`` for deterministic phi."""
    g = as_grid(phi)
    v = v.coeffs if isinstance(v, HVector) else np.asarray(v, dtype=np.float64)
    if g.shape[1] != model.d_U or v.shape[-1] != g.shape[0]:
        raise ValueError("dimension mismatch between model, operator and probe vector")
    if not dt > 0:
        raise ValueError("dt must be positive")
    return complex(np.exp(dt * model.symbol(v @ g)))


def increment_cf_many(model: LevyModel, phi, dt: float, vs: np.ndarray) -> np.ndarray:
    g = as_grid(phi)
    return np.exp(dt * model.symbol(np.asarray(vs, dtype=np.float64) @ g))


# ---------------------------------------------------------------------------
# noise panel
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NoisePanel:
    """Coordinate increments ``increments[r, j, k]`` on a strictly increasing time grid."""

    increments: np.ndarray
    times: np.ndarray
    master_seed: int
    replica_offset: int = 0
    model_config: Optional[dict] = None

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=np.float64)
        t = np.array(self.times, dtype=np.float64)
        if inc.ndim != 3 or inc.shape[1] != t.size - 1:
            raise ValueError("increments must have shape replicas x steps x d_U matching the grid")
        inc.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "increments", inc)
        object.__setattr__(self, "times", t)

    @property
    def replicas(self) -> int:
        return self.increments.shape[0]

    @property
    def steps(self) -> int:
        return self.increments.shape[1]

    @property
    def d_U(self) -> int:
        return self.increments.shape[2]

    def cumulative(self) -> np.ndarray:
        """Coordinates of ``L(t_i)`` for every grid point, shape ``(R, M + 1, d_U)``."""
        out = np.zeros((self.replicas, self.steps + 1, self.d_U))
        np.cumsum(self.increments, axis=1, out=out[:, 1:])
        return out

    def __eq__(self, other):
        return (
            isinstance(other, NoisePanel)
            and np.array_equal(self.increments, other.increments)
            and np.array_equal(self.times, other.times)
            and self.master_seed == other.master_seed
            and self.replica_offset == other.replica_offset
        )


def validate_partition(times) -> np.ndarray:
    t = np.asarray(times, dtype=np.float64)
    if t.ndim != 1 or t.size < 2:
        raise ValueError("a partition needs at least two points")
    if t[0] != 0.0:
        raise ValueError("a partition must start at 0")
    if not np.all(np.diff(t) > 0):
        raise ValueError("partition times must be strictly increasing")
    return t


def generate_noise_panel(
    model: LevyModel,
    partition,
    replicas: int,
    master_seed: int,
    replica_offset: int = 0,
) -> NoisePanel:
    """Coordinate increments for replicas ``replica_offset .. replica_offset + replicas - 1``."""
    if not model.coordinate_representable:
        raise UnsupportedSampler(
            "canonical stable noise has no coordinate panel; sample radonified increments directly"
        )
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    times = validate_partition(partition)
    steps = times.size - 1
    keys = seeding.cell_keys(
        master_seed,
        np.arange(replica_offset, replica_offset + replicas),
        np.arange(steps),
        np.arange(model.d_U),
    )
    shape = keys.shape
    unit = np.full((3,) + shape, 0.5)
    if model.spec.gaussian_cov is not None:
        unit[0] = seeding.words_to_unit(seeding.draw_words(keys, 0))
    if model.spec.jumps is not None:
        unit[1] = seeding.words_to_unit(seeding.draw_words(keys, 1))
        if model.spec.jumps.law.slots > 1:
            unit[2] = seeding.words_to_unit(seeding.draw_words(keys, 2))
    dt = np.diff(times)[None, :, None]
    inc = model.coordinate_increments(dt, unit)
    return NoisePanel(inc, times, master_seed, replica_offset, model.to_config())


# ---------------------------------------------------------------------------
# radonified increments
# ---------------------------------------------------------------------------

def radonify_increments(model: LevyModel, phi, dt: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` independent exact draws of ``phi(L(t) - L(s))`` with ``t - s = dt``; shape ``(n, d_V)``."""
    g = as_grid(phi)
    if g.shape[1] != model.d_U:
        raise ValueError("operator domain does not match the model dimension")
    if not dt > 0:
        raise ValueError("dt must be positive")
    d_U = model.d_U
    if model.coordinate_representable:
        unit = seeding.unit_from_generator(rng, (3, n, d_U))
        return model.coordinate_increments(dt, unit) @ g.T
    spec = model.spec
    jumps: CanonicalStable = spec.jumps
    out = np.broadcast_to(dt * (g @ spec.drift), (n, g.shape[0])).copy()
    unit = seeding.unit_from_generator(rng, (3, n))
    normals = special.ndtri(seeding.unit_from_generator(rng, (2, n, d_U)))
    if spec.gaussian_cov is not None:
        out += np.sqrt(dt) * (normals[0] @ model._qsqrt) @ g.T
    beta = 0.5 * jumps.alpha
    mix = positive_stable_from_unit(beta, unit[0], unit[1])
    s = 2.0 * (jumps.c * dt) ** (2.0 / jumps.alpha)
    out += np.sqrt(s * mix)[:, None] * (normals[1] @ g.T)
    return out


def radonify_increment(model: LevyModel, phi, dt: float, rng: np.random.Generator) -> HVector:
    return HVector(radonify_increments(model, phi, dt, 1, rng)[0])


def sample_pairings(model: LevyModel, u_rows: np.ndarray, dt: float, rng: np.random.Generator) -> np.ndarray:
    """One draw of the real random variable ``(L(t) - L(s)) u_i`` per row ``u_i``."""
    u_rows = np.asarray(u_rows, dtype=np.float64)
    n = u_rows.shape[0]
    if model.coordinate_representable:
        unit = seeding.unit_from_generator(rng, (3, n, model.d_U))
        return np.einsum("ij,ij->i", model.coordinate_increments(dt, unit), u_rows)
    spec = model.spec
    jumps: CanonicalStable = spec.jumps
    out = dt * (u_rows @ spec.drift)
    unit = seeding.unit_from_generator(rng, (3, n))
    if spec.gaussian_cov is not None:
        out = out + np.sqrt(dt * spec.gaussian_cov.quadratic(u_rows)) * special.ndtri(unit[2])
    scale = (jumps.c * dt) ** (1.0 / jumps.alpha) * np.linalg.norm(u_rows, axis=1)
    return out + scale * symmetric_stable_from_unit(jumps.alpha, unit[0], unit[1])


# ---------------------------------------------------------------------------
# Gauss domination
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def gauss_dom_constant() -> float:
    """``1 / E[1 ^ xi^2]`` for a standard normal xi, by adaptive quadrature."""
    dens = lambda x: math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    inner, _ = integrate.quad(lambda x: x * x * dens(x), -1.0, 1.0, epsabs=1e-14, epsrel=1e-14)
    tail, _ = integrate.quad(dens, 1.0, np.inf, epsabs=1e-14, epsrel=1e-14)
    return 1.0 / (inner + 2.0 * tail)


@dataclass(frozen=True)
class GaussDomResult:
    lhs: float
    rhs: float
    c: float
    lhs_se: float
    rhs_se: float

    @property
    def combined_se(self) -> float:
        return math.hypot(self.lhs_se, self.rhs_se)

    def holds(self, k: float = 3.0) -> bool:
        return self.lhs <= self.rhs + k * self.combined_se


def gauss_dom_check(model: LevyModel, phi, dt: float, N: int, master_seed: int) -> GaussDomResult:
    """Monte Carlo sides of ``p(phi Z) <= c * int p(Zu) (gamma o (phi*)^-1)(du)``.

    ``rhs_se`` already includes the factor ``c``.
    """
    if N < 10_000:
        raise ValueError("gauss_dom_check needs N >= 10^4")
    g = as_grid(phi)
    c = gauss_dom_constant()
    x = radonify_increments(model, g, dt, N, seeding.generator(master_seed, 0))
    a = np.minimum(1.0, np.einsum("ij,ij->i", x, x))
    gauss = special.ndtri(seeding.unit_from_generator(seeding.generator(master_seed, 1), (N, g.shape[0])))
    z = sample_pairings(model, gauss @ g, dt, seeding.generator(master_seed, 2))
    b = np.minimum(1.0, z * z)
    sq = math.sqrt(N)
    return GaussDomResult(
        lhs=float(a.mean()),
        rhs=float(c * b.mean()),
        c=c,
        lhs_se=float(a.std(ddof=1) / sq) if N > 1 else 0.0,
        rhs_se=float(c * b.std(ddof=1) / sq) if N > 1 else 0.0,
    )
