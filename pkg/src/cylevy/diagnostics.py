"""Statistical estimators: the L0 metric, empirical characteristic functions,
tightness radii and the image-measure tail probe.

Convergence in probability is always measured through a bounded transform, so
standard errors never rely on moment assumptions.  Standard errors use batch
means over consecutive replica blocks of ``BATCH`` replicas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import seeding
from .hilbert import HVector, as_grid
from .levy import LevyModel, radonify_increments

BATCH = 100


def _rows(samples) -> np.ndarray:
    if isinstance(samples, np.ndarray):
        arr = samples.astype(np.float64, copy=False)
    else:
        arr = np.asarray([s.coeffs if isinstance(s, HVector) else s for s in samples], dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


def batch_mean_se(x: np.ndarray, batch: int = BATCH) -> float:
    """Standard error of ``x.mean()`` from means over consecutive blocks of ``batch``.

    Falls back to the i.i.d. formula when fewer than two full blocks exist.
    """
    x = np.asarray(x, dtype=np.float64)
    n_blocks = x.size // batch
    if n_blocks >= 2:
        means = x[: n_blocks * batch].reshape(n_blocks, batch).mean(axis=1)
        return float(means.std(ddof=1) / math.sqrt(n_blocks))
    if x.size < 2:
        return 0.0
    return float(x.std(ddof=1) / math.sqrt(x.size))


def p_metric(samples_X, samples_Y) -> tuple[float, float]:
    """Estimate ``E[1 ^ ||X - Y||^2]`` for coupled samples, with a batch-means standard error."""
    x = _rows(samples_X)
    y = _rows(samples_Y)
    if x.shape != y.shape:
        raise ValueError(f"sample shapes differ: {x.shape} vs {y.shape}")
    if x.shape[0] < 100:
        raise ValueError("p_metric needs at least 100 coupled samples")
    d = x - y
    vals = np.minimum(1.0, np.einsum("ij,ij->i", d, d))
    return float(vals.mean()), batch_mean_se(vals)


def empirical_cf(samples, v) -> tuple[complex, float]:
    """Mean of ``exp(i <X, v>)`` and its standard error."""
    x = _rows(samples)
    v = v.coeffs if isinstance(v, HVector) else np.atleast_1d(np.asarray(v, dtype=np.float64))
    if x.shape[0] < 1:
        raise ValueError("empirical_cf needs at least one sample")
    phase = x @ v
    c, s = np.cos(phase), np.sin(phase)
    est = complex(c.mean(), s.mean())
    n = x.shape[0]
    if n < 2:
        return est, math.sqrt(2.0)
    se = math.sqrt((c.var(ddof=1) + s.var(ddof=1)) / n)
    return est, se


def cf_tolerance(n: int, k: float = 3.0) -> float:
    """``k * sqrt(2 / n)``, the default acceptance band for empirical characteristic functions."""
    return k * math.sqrt(2.0 / n)


def tightness_radius(samples, eps: float) -> float:
    """Radius of the centred ball holding a ``1 - eps`` fraction of the samples."""
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    x = _rows(samples)
    if x.shape[0] < 1000:
        raise ValueError("tightness_radius needs at least 1000 samples")
    norms = np.sqrt(np.einsum("ij,ij->i", x, x))
    return float(np.quantile(norms, 1.0 - eps, method="inverted_cdf"))


@dataclass(frozen=True)
class ImageTailReport:
    r_grid: tuple[float, ...]
    norm_tail: tuple[float, ...]  # sup over K of P(||phi(Z)|| >= r)
    norm_tail_se: tuple[float, ...]
    N_grid: tuple[int, ...]
    coord_tail: tuple[float, ...]  # sup over K of P(sum_{k>N} <phi(Z), f_k>^2 >= r_tail)
    coord_tail_se: tuple[float, ...]
    r_tail: float
    replicas: int


def image_measure_tail_probe(
    model: LevyModel,
    K: Sequence,
    dt: float,
    r_grid: Sequence[float],
    N: int,
    master_seed: int,
    N_grid: Sequence[int] | None = None,
    r_tail: float = 0.01,
) -> ImageTailReport:
    """The two uniform-smallness diagnostics behind relative compactness of ``{law of phi(Z): phi in K}``.

    The same noise stream (same seed) drives every member of ``K``.
    """
    grids = [as_grid(phi) for phi in K]
    if not grids:
        raise ValueError("K must be nonempty")
    d_V = grids[0].shape[0]
    N_grid = tuple(range(d_V + 1)) if N_grid is None else tuple(int(n) for n in N_grid)
    for n in N_grid:
        if not 0 <= n <= d_V:
            raise IndexError(f"N'={n} outside [0, {d_V}]")
    r_grid = tuple(float(r) for r in r_grid)
    norm_best = np.zeros(len(r_grid))
    norm_se = np.zeros(len(r_grid))
    coord_best = np.zeros(len(N_grid))
    coord_se = np.zeros(len(N_grid))
    for g in grids:
        x = radonify_increments(model, g, dt, N, seeding.generator(master_seed, 0))
        sq = x * x
        norms = np.sqrt(sq.sum(axis=1))
        tails = np.concatenate([np.cumsum(sq[:, ::-1], axis=1)[:, ::-1], np.zeros((N, 1))], axis=1)
        for i, r in enumerate(r_grid):
            p = float(np.mean(norms >= r))
            if p > norm_best[i]:
                norm_best[i], norm_se[i] = p, math.sqrt(p * (1 - p) / N)
        for i, n in enumerate(N_grid):
            p = float(np.mean(tails[:, n] >= r_tail))
            if p > coord_best[i]:
                coord_best[i], coord_se[i] = p, math.sqrt(p * (1 - p) / N)
    return ImageTailReport(
        r_grid=r_grid,
        norm_tail=tuple(norm_best.tolist()),
        norm_tail_se=tuple(norm_se.tolist()),
        N_grid=N_grid,
        coord_tail=tuple(coord_best.tolist()),
        coord_tail_se=tuple(coord_se.tolist()),
        r_tail=r_tail,
        replicas=N,
    )
