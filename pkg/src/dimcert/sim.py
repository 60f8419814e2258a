"""Synthetic coincidence counts for the OAM prepare-and-measure experiment.

Each prepared superposition passes a crosstalk channel before projection:
``rho' = (1 - L) |psi><psi| + L * leak(psi)`` where ``leak`` moves the
population of every charge ``l`` evenly to ``l - 1`` and ``l + 1`` (leakage
outside the truncated window is lost).  ``L = 2 eps / (1 + 2 eps)`` makes the
spiral-bandwidth metric of the noiseless-Poisson limit equal ``eps``.
The expected count of a cell is ``N * (<m|rho'|m> + dark)``; each run
draws Poisson counts with a per-cell seed derived from the master seed and
the cell coordinates.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InputError, ParameterError
from .ingest import LMAX, CountMatrix, Superposition, all_labels, parse_label

DEFAULT_COUNTS = 10_000
DEFAULT_RUNS = 50


@dataclass(frozen=True)
class NoiseModel:
    crosstalk: float = 0.0
    counts: float = DEFAULT_COUNTS
    dark: float = 0.0
    runs: int = DEFAULT_RUNS
    seed: int = 0
    analytic: bool = False
    lmax: int = LMAX

    def __post_init__(self):
        if not 0 <= self.crosstalk < 1 or not 0 <= self.dark < 1:
            raise ParameterError("crosstalk and dark fractions must lie in [0, 1)")
        if not self.counts > 0 or not np.isfinite(self.counts):
            raise ParameterError("counts per setting must be positive")
        if self.runs < 1:
            raise ParameterError("need at least one run")
        if self.lmax < 1:
            raise ParameterError("charge window must contain neighbors")

    @property
    def leak(self) -> float:
        return 2 * self.crosstalk / (1 + 2 * self.crosstalk)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def _sp(s, lmax) -> Superposition:
    return parse_label(s, lmax) if isinstance(s, str) else s


def ideal_overlap(prep, meas, lmax: int = LMAX) -> float:
    """``|<meas|prep>|^2`` in the orthonormal charge basis."""
    a = _sp(prep, lmax).amplitudes(lmax)
    b = _sp(meas, lmax).amplitudes(lmax)
    return float(abs(a @ b) ** 2)


def _leak_populations(amp: np.ndarray) -> np.ndarray:
    pop = amp**2
    out = np.zeros_like(pop)
    out[1:] += 0.5 * pop[:-1]
    out[:-1] += 0.5 * pop[1:]
    return out


def expected_probabilities(labels, noise: NoiseModel) -> np.ndarray:
    """Per-cell detection probability ``<m|rho'|m> + dark``."""
    amps = np.array([_sp(s, noise.lmax).amplitudes(noise.lmax) for s in labels])
    ideal = (amps @ amps.T) ** 2
    if noise.crosstalk == 0:
        return ideal + noise.dark
    leak = np.array([_leak_populations(a) for a in amps])  # diagonal leaked states
    cross = leak @ (amps**2).T
    return (1 - noise.leak) * ideal + noise.leak * cross + noise.dark


def simulate_counts(labels=None, noise: NoiseModel | None = None) -> CountMatrix:
    """Mean counts over ``runs`` and their standard error, per (prep, meas) cell."""
    noise = noise or NoiseModel()
    labels = list(all_labels(noise.lmax) if labels is None else labels)
    names = [s if isinstance(s, str) else format_label(s) for s in labels]
    lam = noise.counts * expected_probabilities(labels, noise)
    n = lam.shape[0]
    meta = {"noise_model": asdict(noise), "std_convention": "standard error of the mean over runs"}
    if noise.analytic:
        std = np.sqrt(lam / noise.runs)
        return CountMatrix(tuple(names), lam, std, noise.runs, meta, noise.lmax)
    mean = np.empty_like(lam)
    std = np.empty_like(lam)
    for i in range(n):
        for j in range(n):
            rng = np.random.default_rng(np.random.SeedSequence(noise.seed, spawn_key=(i, j)))
            k = rng.poisson(lam[i, j], noise.runs).astype(float)
            mean[i, j] = k.mean()
            std[i, j] = k.std(ddof=1) / np.sqrt(noise.runs) if noise.runs > 1 else np.sqrt(k[0])
    return CountMatrix(tuple(names), mean, std, noise.runs, meta, noise.lmax)


def format_label(sp) -> str:
    from .ingest import format_label as fl

    return fl(sp)


def spiral_bandwidth_metric(counts: CountMatrix) -> float:
    """Mean of the four nearest-neighbor cells around ``(l=0, l=0)`` over that cell."""

    def idx(q):
        sp = Superposition(((q, 1),))
        if not counts.has(sp):
            raise InputError(f"single-charge label {q:+d} missing")
        return counts.index(sp)

    c = idx(0)
    nb = [idx(-1), idx(1)]
    diag = counts.mean[c, c]
    if diag <= 0:
        raise InputError("central diagonal cell has no counts")
    cells = [counts.mean[c, k] for k in nb] + [counts.mean[k, c] for k in nb]
    return float(np.mean(cells) / diag)
