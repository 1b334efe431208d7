"""Independent reference computations behind the committed fixtures.

Nothing here reuses the library samplers: Gaussian integrals come from their
closed-form covariance, compound Poisson integrals from numpy's own Poisson and
binomial generators, and the sign arrays from a direct Markov-chain loop.
Run ``python3 -m cylevy.oracles [--out DIR]`` to regenerate every fixture.
"""

from __future__ import annotations

import argparse
import json
import math
from importlib import resources
from pathlib import Path

import numpy as np

FIXTURE_PACKAGE = "cylevy.fixtures"


def gauss_dom_constant_closed_form() -> dict:
    # E[1 ^ xi^2] = P(|xi| > 1) + E[xi^2; |xi| <= 1] = 1 - 2 * pdf(1)
    e = 1.0 - math.sqrt(2.0 / math.pi) * math.exp(-0.5)
    return {"E_min_1_xi2": e, "c": 1.0 / e}


def _direct_integral(model_cfg: dict, operators: list, dts: list, N: int, rng) -> np.ndarray:
    """``sum_j phi_j (L(t_{j+1}) - L(t_j))`` drawn directly, shape ``(N, d_V)``."""
    family, p = model_cfg["family"], model_cfg["params"]
    d_U = model_cfg["d_U"]
    ops = [np.asarray(op, dtype=np.float64) for op in operators]
    d_V = ops[0].shape[0]
    if family == "gaussian":
        Q = np.asarray(p.get("cov", np.eye(d_U)), dtype=np.float64)
        C = sum(dt * op @ Q @ op.T for op, dt in zip(ops, dts))
        w, U = np.linalg.eigh(C)
        root = U * np.sqrt(np.clip(w, 0.0, None))
        return rng.standard_normal((N, d_V)) @ root.T
    if family == "diagonal" and p["law"] == "compound_poisson":
        scales = np.asarray(p.get("scales", np.ones(d_U)), dtype=np.float64)
        out = np.zeros((N, d_V))
        for op, dt in zip(ops, dts):
            counts = rng.poisson(p["rate"] * dt, size=(N, d_U))
            if p.get("jumps", "rademacher") == "normal":
                jumps = rng.standard_normal((N, d_U)) * np.sqrt(counts)
            else:
                jumps = 2.0 * rng.binomial(counts, 0.5) - counts
            out += (jumps * scales) @ op.T
        return out
    raise ValueError(f"no direct oracle for {family}/{p.get('law')}")


def boundedness_quantiles(model: dict, operators: list, times: list, eps: list,
                          N: int, seed: int) -> dict:
    """Norm quantiles of ``I(Psi)(T)``.

    For symmetric noise an adapted +-identity integrand leaves the law of each
    increment unchanged, so every member of a +-identity family has this law.
    """
    rng = np.random.default_rng(seed)
    dts = np.diff(np.asarray(times, dtype=np.float64)).tolist()
    x = _direct_integral(model, operators, dts, N, rng)
    norms = np.linalg.norm(x, axis=1)
    return {str(1.0 - e): float(np.quantile(norms, 1.0 - e, method="inverted_cdf")) for e in eps}


def sticky_sign_radii(p_stay: float, rows: list, eps: float, N: int, seed: int) -> dict:
    """0.99-radii of the original and decoupled row sums of the sticky-sign array."""
    rng = np.random.default_rng(seed)
    out = {}
    for n in rows:
        prev = np.where(rng.random(N) < 0.5, 1.0, -1.0)
        # first decoupled draw: fair coin, independent of everything
        star = np.where(rng.random(N) < 0.5, 1.0, -1.0)
        total = prev.copy()
        for _ in range(n - 1):
            star += np.where(rng.random(N) < p_stay, prev, -prev)
            prev = np.where(rng.random(N) < p_stay, prev, -prev)
            total += prev
        q = lambda s: float(np.quantile(np.abs(s) / math.sqrt(n), 1.0 - eps, method="inverted_cdf"))
        out[str(n)] = {"original": q(total), "decoupled": q(star)}
    return out


# fixture definitions ------------------------------------------------------

BOUNDEDNESS_PSI = [
    [[1.0, 0.5, 0.0, 0.0], [0.0, 1.0, 0.5, 0.0], [0.0, 0.0, 1.0, 0.5]],
    [[0.5, 0.0, 0.0, 0.0], [0.0, 0.5, 0.0, 0.0], [0.0, 0.0, 0.5, 1.0]],
    [[0.0, 0.0, 1.0, 0.0], [1.0, 0.0, 0.0, 0.0], [0.0, 0.7, 0.0, 0.0]],
    [[0.3, 0.3, 0.3, 0.3], [0.0, 0.8, 0.0, 0.0], [0.0, 0.0, 0.0, 0.9]],
]
BOUNDEDNESS_TIMES = [0.0, 0.25, 0.5, 0.75, 1.0]
BOUNDEDNESS_MODELS = {
    "gaussian": {"family": "gaussian", "d_U": 4, "params": {}},
    "compound-poisson": {"family": "diagonal", "d_U": 4,
                         "params": {"law": "compound_poisson", "rate": 3.0, "jumps": "normal"}},
}


def _fixture_specs() -> dict:
    specs = {
        "gauss-dom-constant": ({"method": "closed-form 1 - sqrt(2/pi) exp(-1/2)"},
                               gauss_dom_constant_closed_form),
    }
    for name, model in BOUNDEDNESS_MODELS.items():
        cfg = {"model": model, "operators": BOUNDEDNESS_PSI, "times": BOUNDEDNESS_TIMES,
               "eps": [0.1, 0.01], "N": 1_000_000, "seed": 20240611}
        specs[f"boundedness-{name}"] = (cfg, lambda c=cfg: boundedness_quantiles(**c))
    for p in (0.8, 0.3):
        cfg = {"p_stay": p, "rows": [4, 16, 64, 256], "eps": 0.01, "N": 200_000, "seed": 515}
        specs[f"sticky-sign-{p}"] = (cfg, lambda c=cfg: sticky_sign_radii(**c))
    return specs


def regenerate(out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, (cfg, fn) in _fixture_specs().items():
        path = out_dir / f"{name}.json"
        blob = {"name": name, "config": cfg, "values": fn()}
        path.write_text(json.dumps(blob, indent=2, sort_keys=True) + "\n")
        written.append(path)
    return written


def load_fixture(name: str) -> dict:
    text = resources.files(FIXTURE_PACKAGE).joinpath(f"{name}.json").read_text()
    return json.loads(text)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description="Regenerate oracle fixtures.")
    ap.add_argument("--out", type=Path, default=Path(str(resources.files(FIXTURE_PACKAGE))))
    args = ap.parse_args(argv)
    for path in regenerate(args.out):
        print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
