"""White-noise sequence observations, log-likelihoods and KL divergences.

Observations are ``Y_i = (A f)_i + n^{-1/2} Z_i``.  Noise comes from a
counter-based Philox stream keyed by ``(seed, replicate)`` and consumed in
coordinate order, so coordinate ``i`` receives the same ``Z_i`` whatever the
observation window ``J_obs``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .operators import ForwardOperator
from .scales import as_coeffs

__all__ = [
    "Observation",
    "TruncationLossError",
    "noise_stream",
    "simulate",
    "loglik",
    "kl",
    "save_observation",
    "load_observation",
]


class TruncationLossError(ValueError):
    """``A f`` has mass outside the observed coordinates."""


@dataclass(frozen=True)
class Observation:
    y: np.ndarray
    n: float
    seed: int
    op_label: str
    replicate: int = 0

    @property
    def J_obs(self) -> int:
        return int(self.y.size)


def noise_stream(seed: int, replicate: int = 0) -> np.random.Generator:
    """Philox generator whose 128-bit key is ``(seed, replicate)``; the counter starts at 0."""
    key = np.array([int(seed) & 0xFFFFFFFFFFFFFFFF, int(replicate) & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _fit(v: np.ndarray, size: int) -> np.ndarray:
    if v.size > size:
        if v[size:].any():
            raise TruncationLossError(
                f"image has support beyond J_obs={size}; enlarge the observation window"
            )
        return v[:size]
    out = np.zeros(size)
    out[: v.size] = v
    return out


def simulate(op: ForwardOperator, f0, n: float, J_obs: int, seed: int, replicate: int = 0) -> Observation:
    """Draw ``Y = A f0 + n^{-1/2} Z`` on the first ``J_obs`` coordinates."""
    if n <= 0:
        raise ValueError("noise level n must be positive")
    if J_obs < 1:
        raise ValueError("J_obs must be >= 1")
    signal = _fit(op.apply(as_coeffs(f0)), J_obs)
    z = noise_stream(seed, replicate).standard_normal(J_obs)
    y = signal + z / np.sqrt(n)
    y.setflags(write=False)
    return Observation(y=y, n=float(n), seed=int(seed), op_label=op.label, replicate=int(replicate))


def loglik(obs: Observation, f, op: ForwardOperator) -> float:
    """``log dP_f / dP_0 (Y) = n <A f, Y> - (n/2) ||A f||^2``."""
    af = _fit(op.apply(as_coeffs(f)), obs.J_obs)
    return float(obs.n * af @ obs.y - 0.5 * obs.n * af @ af)


def kl(f, f0, op: ForwardOperator, n: float) -> float:
    """``KL(P_{f0} || P_f) = n ||A f - A f0||^2 / 2``."""
    a, b = op.apply(as_coeffs(f)), op.apply(as_coeffs(f0))
    diff = np.zeros(max(a.size, b.size))
    diff[: a.size] += a
    diff[: b.size] -= b
    return float(0.5 * n * diff @ diff)


def save_observation(obs: Observation, path) -> Path:
    """Write ``index,y`` CSV plus a JSON sidecar (``<path>.json``)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "y"])
        for i, v in enumerate(obs.y, start=1):
            w.writerow([i, repr(float(v))])
    sidecar = path.with_suffix(path.suffix + ".json")
    sidecar.write_text(json.dumps({"n": obs.n, "seed": obs.seed, "op_label": obs.op_label,
                                   "J_obs": obs.J_obs, "replicate": obs.replicate}, indent=2) + "\n")
    return path


def load_observation(path) -> Observation:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    y = np.array([float(r["y"]) for r in rows])
    if y.size != int(meta["J_obs"]):
        raise ValueError(f"{path}: {y.size} rows but sidecar says J_obs={meta['J_obs']}")
    y.setflags(write=False)
    return Observation(y=y, n=float(meta["n"]), seed=int(meta["seed"]), op_label=meta["op_label"],
                       replicate=int(meta.get("replicate", 0)))
