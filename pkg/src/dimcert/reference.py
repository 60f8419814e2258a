"""Published reference data for the convex protocol at d = 3, 5, 7.

``states_d*.txt`` hold one preparation per line as ``weight*ket`` terms,
where a ket is ``k`` or ``i+j`` / ``i-j``.  The d=3 list writes the
superposition terms as unnormalized dyads of trace 2 (header
``dyad_trace=2``); parsing converts every mixture to weights on normalized
projectors so that all weights sum to one.

``pmatrix_d*.csv`` hold the printed communication matrices (2-3 decimals).
"""
from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources

import numpy as np

from .errors import InputError
from .protocol import canonical_modes

REFERENCE_DIMENSIONS = (3, 5, 7)
_KET = re.compile(r"^(\d+)(?:([+-])(\d+))?$")


def parse_ket(text: str):
    m = _KET.match(text.strip())
    if not m:
        raise InputError(f"bad ket {text!r}")
    if m.group(2) is None:
        return ((int(m.group(1)), 1),)
    return canonical_modes([(int(m.group(1)), 1), (int(m.group(3)), 1 if m.group(2) == "+" else -1)])


def parse_mixture(text: str, dyad_trace: float = 1.0):
    """``"0.4*0 + 0.3*1-2"`` -> list of (modes, normalized weight)."""
    out = []
    for term in text.split(" + "):
        w, ket = term.split("*")
        modes = parse_ket(ket)
        scale = dyad_trace if len(modes) > 1 else 1.0
        out.append((modes, float(w) * scale))
    return out


def _read(name: str) -> str:
    return resources.files("dimcert.data").joinpath(name).read_text()


@lru_cache(maxsize=None)
def reference_mixtures(d: int) -> dict:
    """``{x: [(modes, weight), ...]}`` with weights on normalized projectors."""
    if d not in REFERENCE_DIMENSIONS:
        raise KeyError(d)
    dyad_trace = 1.0
    out = {}
    for line in _read(f"states_d{d}.txt").splitlines():
        if line.startswith("#"):
            m = re.search(r"dyad_trace=([0-9.]+)", line)
            if m:
                dyad_trace = float(m.group(1))
            continue
        if not line.strip():
            continue
        x, body = line.split(":", 1)
        out[int(x)] = parse_mixture(body.strip(), dyad_trace)
    return out


@lru_cache(maxsize=None)
def printed_matrix(d: int) -> np.ndarray:
    rows = [[float(v) for v in ln.split(",")] for ln in _read(f"pmatrix_d{d}.csv").splitlines() if ln.strip()]
    a = np.array(rows)
    a.setflags(write=False)
    return a


def printed_decimals(d: int) -> int:
    return 2 if d == 7 else 3


# Published certification benchmarks: (variant, d) -> row.  ``sigma`` maps a
# singular-value index r to its reported value; ``e_norm`` / ``e_std`` are the
# measured deviations ``||E||_2`` with their uncertainty.
BENCHMARKS = {
    ("convex", 3): {"n": 9, "d_exp": 6, "sigma": {6: 0.200, 7: 9e-17}, "e_norm": 6.57e-2, "e_std": 0.29e-2},
    ("convex", 5): {"n": 15, "d_exp": 8, "sigma": {8: 0.124, 9: 0.0400}, "e_norm": 5.87e-2, "e_std": 0.13e-2},
    ("convex", 7): {"n": 21, "d_exp": 12, "sigma": {12: 0.0810, 13: 0.0200}, "e_norm": 6.41e-2, "e_std": 0.12e-2},
    ("maximal", 3): {"n": 9, "d_exp": 6, "sigma": {6: 6.67e-2, 7: 2e-17}, "e_norm": 2.21e-2, "e_std": 0.09e-2},
    ("maximal", 5): {"n": 25, "d_exp": 15, "sigma": {15: 1.44e-2, 16: 2e-17}, "e_norm": 1.22e-2, "e_std": 0.02e-2},
    ("maximal", 7): {"n": 49, "d_exp": 28, "sigma": {28: 1.061e-2, 29: 2e-17}, "e_norm": 1.045e-2, "e_std": 0.007e-2},
}
# d=5 convex after permutation averaging
PERMUTED_BENCHMARK = {"n": 15, "d_exp": 10, "sigma": {10: 0.0400, 11: 7e-17}, "e_norm": 2.49e-2, "e_std": 0.16e-2}
MACHINE_ZERO = 1e-12
