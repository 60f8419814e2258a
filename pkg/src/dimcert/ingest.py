"""Raw coincidence counts -> experimental communication matrix ``P'``.

Count matrices are labeled by superposition strings on OAM charges:
``"+1"`` is the single mode ``l=+1``; ``"+1+-2"`` is ``(|+1> + |-2>)/sqrt(2)``
and ``"+3--3"`` is ``(|+3> - |-3>)/sqrt(2)``.  Rows index prepared
projectors and columns measured projectors.

A :class:`LabelMap` assigns a charge to each qudit index.  Reconstruction
normalizes each prepared component by its counts over the computational
basis, applies the POVM weights and mixes with the preparation weights,
then renormalizes each row.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numerics
from ._parallel import parallel_map
from .errors import InputError
from .pmatrix import ProbMatrix
from .protocol import Povm, outcome_permutations

LMAX = 3
_LABEL = re.compile(r"^([+-]\d+)(?:([+-])([+-]\d+))?$")


@dataclass(frozen=True)
class Superposition:
    """Equal-weight superposition: ``modes`` is a tuple of (charge, sign)."""

    modes: tuple

    @property
    def key(self) -> tuple:
        ms = sorted(self.modes)
        s0 = ms[0][1]
        return tuple((q, s * s0) for q, s in ms)

    @property
    def charges(self) -> tuple:
        return tuple(q for q, _ in self.modes)

    def amplitudes(self, lmax: int = LMAX) -> np.ndarray:
        v = np.zeros(2 * lmax + 1)
        for q, s in self.modes:
            if abs(q) > lmax:
                raise InputError(f"charge {q} outside [-{lmax}, {lmax}]")
            v[q + lmax] = s / np.sqrt(len(self.modes))
        return v


def _fmt_charge(q: int) -> str:
    return f"{q:+d}"


def format_label(sp: Superposition) -> str:
    """Inverse of :func:`parse_label`; pairs are written larger charge first."""
    ms = sorted(sp.modes, key=lambda m: -m[0])
    if len(ms) == 1:
        return _fmt_charge(ms[0][0])
    (q1, s1), (q2, s2) = ms
    return _fmt_charge(q1) + ("+" if s1 * s2 > 0 else "-") + _fmt_charge(q2)


def parse_label(text: str, lmax: int = LMAX) -> Superposition:
    m = _LABEL.match(text.strip())
    if not m:
        raise InputError(f"malformed superposition label {text!r}")
    q1 = int(m.group(1))
    modes = [(q1, 1)]
    if m.group(2) is not None:
        q2 = int(m.group(3))
        if q2 == q1:
            raise InputError(f"label {text!r} repeats a charge")
        modes.append((q2, 1 if m.group(2) == "+" else -1))
    for q, _ in modes:
        if abs(q) > lmax:
            raise InputError(f"charge {q} in {text!r} outside [-{lmax}, {lmax}]")
    return Superposition(tuple(modes))


def all_labels(lmax: int = LMAX) -> list:
    """Every single charge plus both superpositions of every charge pair."""
    qs = list(range(-lmax, lmax + 1))
    out = [Superposition(((q, 1),)) for q in qs]
    for i, j in itertools.combinations(qs, 2):
        out.append(Superposition(((j, 1), (i, 1))))
        out.append(Superposition(((j, 1), (i, -1))))
    return [format_label(s) for s in out]


# ----------------------------------------------------------------- counts


@dataclass(frozen=True, eq=False)
class CountMatrix:
    labels: tuple
    mean: np.ndarray
    std: np.ndarray | None
    runs: int = 1
    metadata: dict = field(default_factory=dict)
    lmax: int = LMAX

    def __post_init__(self):
        n = len(self.labels)
        mean = np.asarray(self.mean, dtype=float)
        std = np.zeros_like(mean) if self.std is None else np.asarray(self.std, dtype=float)
        if mean.shape != (n, n) or std.shape != (n, n):
            raise InputError("count matrix must be square and match its labels")
        if np.any(mean < 0) or np.any(std < 0) or not np.all(np.isfinite(mean)):
            raise InputError("counts and stds must be finite and non-negative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)
        object.__setattr__(self, "labels", tuple(self.labels))
        index = {parse_label(lab, self.lmax).key: i for i, lab in enumerate(self.labels)}
        if len(index) != n:
            raise InputError("duplicate superposition labels")
        object.__setattr__(self, "_index", index)

    def index(self, sp: Superposition) -> int:
        return self._index[sp.key]

    def has(self, sp: Superposition) -> bool:
        return sp.key in self._index

    def scaled(self, k: float) -> "CountMatrix":
        return CountMatrix(self.labels, self.mean * k, self.std * k, self.runs, dict(self.metadata), self.lmax)


def _write_grid(labels, values, path):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["prep\\meas", *labels])
    for lab, row in zip(labels, values):
        w.writerow([lab, *(repr(float(v)) for v in row)])
    Path(path).write_text(buf.getvalue())


def std_path_for(path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + ".std" + p.suffix)


def write_counts_csv(cm: CountMatrix, path) -> tuple:
    """Writes ``path`` (means), ``<name>.std.csv`` and ``<name>.json`` metadata."""
    path = Path(path)
    _write_grid(cm.labels, cm.mean, path)
    sp = std_path_for(path)
    _write_grid(cm.labels, cm.std, sp)
    meta = dict(cm.metadata, runs=cm.runs, std_convention="standard error of the mean over runs")
    mp = path.with_suffix(".json")
    mp.write_text(json.dumps(meta, indent=2, sort_keys=True))
    return path, sp, mp


def _read_grid(path):
    try:
        rows = [r for r in csv.reader(io.StringIO(Path(path).read_text())) if r]
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if len(rows) < 2:
        raise InputError(f"{path}: empty count file")
    cols = [c.strip() for c in rows[0][1:]]
    labels = [r[0].strip() for r in rows[1:]]
    if labels != cols:
        raise InputError(f"{path}: row and column labels differ")
    cells = [[c.strip() for c in r[1:]] for r in rows[1:]]
    if any(len(r) != len(cols) for r in cells):
        raise InputError(f"{path}: ragged rows")
    return labels, cells


def read_counts_csv(path, std_path=None, runs: int | None = None, lmax: int = LMAX) -> CountMatrix:
    """Read means (cells ``mean`` or ``mean;std``) plus an optional sibling std file."""
    labels, cells = _read_grid(path)
    n = len(labels)
    mean, std = np.zeros((n, n)), np.zeros((n, n))
    try:
        for i, row in enumerate(cells):
            for j, c in enumerate(row):
                if ";" in c:
                    a, b = c.split(";", 1)
                    mean[i, j], std[i, j] = float(a), float(b)
                else:
                    mean[i, j] = float(c)
    except ValueError as exc:
        raise InputError(f"{path}: non-numeric cell") from exc
    sp = Path(std_path) if std_path else std_path_for(path)
    if std_path or sp.exists():
        slabels, scells = _read_grid(sp)
        if slabels != labels:
            raise InputError("std file labels differ from the count file")
        try:
            std = np.array([[float(c) for c in r] for r in scells])
        except ValueError as exc:
            raise InputError(f"{sp}: non-numeric cell") from exc
    meta = {}
    mp = Path(path).with_suffix(".json")
    if mp.exists():
        try:
            meta = json.loads(mp.read_text())
        except json.JSONDecodeError:
            meta = {}
    if runs is None:
        runs = int(meta.get("runs", 1))
    return CountMatrix(tuple(labels), mean, std, runs, meta, lmax)


# -------------------------------------------------------------- label maps


@dataclass(frozen=True)
class LabelMap:
    charges: tuple

    def __post_init__(self):
        ch = tuple(int(c) for c in self.charges)
        if len(set(ch)) != len(ch):
            raise InputError(f"label map {ch} is not injective")
        if any(abs(c) > LMAX for c in ch):
            raise InputError(f"label map {ch} leaves the charge range")
        object.__setattr__(self, "charges", ch)

    def superposition(self, modes) -> Superposition:
        return Superposition(tuple((self.charges[q], s) for q, s in modes))

    def compose(self, qudit_map) -> "LabelMap":
        """Map ``k -> charges[qudit_map[k]]``."""
        return LabelMap(tuple(self.charges[int(q)] for q in qudit_map))

    def __str__(self) -> str:
        return ",".join(_fmt_charge(c) for c in self.charges)

    @classmethod
    def parse(cls, text: str) -> "LabelMap":
        try:
            return cls(tuple(int(t) for t in text.replace("(", "").replace(")", "").split(",")))
        except ValueError as exc:
            raise InputError(f"bad label map {text!r}") from exc


def natural_map(d: int) -> LabelMap:
    """Qudit k -> charge k - (d-1)/2, i.e. the centred charge window."""
    return LabelMap(tuple(k - (d - 1) // 2 for k in range(d)))


def _plan(counts: CountMatrix, povm: Povm, lmap: LabelMap):
    cols = []
    for e in povm.elements:
        sp = lmap.superposition(e.modes)
        if not counts.has(sp):
            raise InputError(f"measurement {format_label(sp)} missing from the count labels")
        cols.append(counts.index(sp))
    basis = []
    for k in range(povm.d):
        sp = Superposition(((lmap.charges[k], 1),))
        if not counts.has(sp):
            raise InputError(f"basis label {format_label(sp)} missing from the count labels")
        basis.append(counts.index(sp))
    return np.array(cols), np.array(basis)


def reconstruct(counts: CountMatrix, povm: Povm, states, lmap: LabelMap, with_std: bool = True):
    """Return ``(P', std)``: experimental matrix and first-order per-cell std.

    The std accounts for the basis totals and the row renormalization.  With
    ``with_std=False`` the std matrix is returned as ``None``.
    """
    if len(lmap.charges) != povm.d:
        raise InputError("label map length differs from the dimension")
    cols, basis = _plan(counts, povm, lmap)
    w = povm.weights
    C, S = counts.mean, counts.std
    n = povm.n
    P = np.zeros((len(states), n))
    V = np.zeros_like(P)
    for x, st in enumerate(states):
        rows = np.array([cols[i] for i in st.components])  # prepared projectors use the same labels
        lam = np.asarray(st.weights)
        T = C[np.ix_(rows, basis)].sum(axis=1)
        if np.any(T <= 0):
            raise InputError(f"zero basis counts for a component of preparation {x}")
        Cb = C[np.ix_(rows, cols)]  # (k, n)
        q = w * ((lam / T) @ Cb)
        tot = q.sum()
        if tot <= 0:
            raise InputError(f"preparation {x} has no counts")
        P[x] = q / tot
        if not with_std:
            continue
        # Jacobian of P[x, :] with respect to every count cell (row r_i, column c)
        uniq = np.unique(np.r_[cols, basis])
        ci = {c: j for j, c in enumerate(uniq)}
        var = np.zeros(n)
        for i, r in enumerate(rows):
            Jq = np.zeros((n, uniq.size))
            for b in range(n):
                Jq[b, ci[cols[b]]] += lam[i] * w[b] / T[i]
            dT = -lam[i] * w * Cb[i] / T[i] ** 2
            for c in basis:
                Jq[:, ci[c]] += dT
            Jp = (Jq - np.outer(P[x], Jq.sum(axis=0))) / tot
            var += (Jp**2) @ (S[r, uniq] ** 2)
        V[x] = var
    labels = tuple(povm.names)
    pm = ProbMatrix(P, labels[: len(states)], labels,
                    {"dimension": povm.d, "variant": povm.variant, "map": str(lmap)})
    return pm, (np.sqrt(V) if with_std else None)


def _candidate_maps(d: int, lmax: int = LMAX):
    return (LabelMap(c) for c in itertools.permutations(range(-lmax, lmax + 1), d))


def _mixture_matrix(states, n: int) -> np.ndarray:
    L = np.zeros((len(states), n))
    for x, st in enumerate(states):
        L[x, list(st.components)] = st.weights
    return L


def _fast_matrix(C, cols, basis, L, w):
    T = C[np.ix_(cols, basis)].sum(axis=1)
    if np.any(T[L.any(axis=0)] <= 0):
        return None
    Q = (L / np.where(T > 0, T, 1.0)) @ C[np.ix_(cols, cols)] * w
    tot = Q.sum(axis=1, keepdims=True)
    if np.any(tot <= 0):
        return None
    return Q / tot


def _norm_lower_bound(E: np.ndarray, steps: int = 12) -> float:
    """Rigorous lower bound ``||E x|| / ||x|| <= ||E||_2`` from power iteration."""
    x = np.abs(E).sum(axis=0) + 1e-3
    best = 0.0
    for _ in range(steps):
        nx = np.linalg.norm(x)
        if nx == 0:
            break
        x = x / nx
        y = E @ x
        best = max(best, float(np.linalg.norm(y)))
        x = E.T @ y
    return best


def optimize_label_map(counts: CountMatrix, povm: Povm, states, target):
    """Exhaustive injective search minimizing ``||P' - P||_2``.

    Returns ``(map, e_norm)``.  Candidates are visited in lexicographic charge
    order and a later map replaces the incumbent only if it is better by more
    than ``1e-12``, so exact ties resolve to the lexicographically first map.
    A candidate is scored exactly (Jacobi SVD) only when a power-iteration
    lower bound on its norm does not already rule it out, which leaves the
    result identical to scoring every candidate.
    """
    T = target.values if isinstance(target, ProbMatrix) else np.asarray(target, dtype=float)
    maps = list(_candidate_maps(povm.d, min(counts.lmax, LMAX)))
    L = _mixture_matrix(states, povm.n)
    w = povm.weights

    def error(m):
        try:
            cols, basis = _plan(counts, povm, m)
        except InputError:
            return None
        P = _fast_matrix(counts.mean, cols, basis, L, w)
        return None if P is None else P - T

    errs = parallel_map(error, maps)
    bounds = [np.inf if E is None else _norm_lower_bound(E) for E in errs]
    best, best_e = None, np.inf
    for m, E, lb in zip(maps, errs, bounds):
        if E is None or lb >= best_e - 1e-12:
            continue
        e = numerics.spectral_norm(E)
        if e < best_e - 1e-12:
            best, best_e = m, e
    if best is None:
        raise InputError("no label map is compatible with the count labels")
    return best, float(best_e)


def symmetric_maps(povm: Povm, lmap: LabelMap) -> list:
    """``lmap`` composed with every qudit symmetry of the protocol."""
    return [lmap.compose(g.qudit_map) for g in outcome_permutations(povm)]


def permuted_reconstructions(counts: CountMatrix, povm: Povm, states, lmap: LabelMap) -> list:
    return [reconstruct(counts, povm, states, m) for m in symmetric_maps(povm, lmap)]


def permutation_average(reconstructions):
    """``P_avg = mean_pi P^(pi)``; ``sigma_ag = sqrt(sum_pi sigma^(pi)^2)`` (no 1/m)."""
    recs = list(reconstructions)
    if not recs:
        raise InputError("need at least one reconstruction")
    mats = [r[0].values if isinstance(r[0], ProbMatrix) else np.asarray(r[0], dtype=float) for r in recs]
    stds = [np.asarray(r[1], dtype=float) for r in recs]
    if len({m.shape for m in mats + stds}) != 1:
        raise InputError("reconstructions differ in shape")
    avg = np.mean(mats, axis=0)
    sag = np.sqrt(np.sum(np.square(stds), axis=0))
    first = recs[0][0]
    if isinstance(first, ProbMatrix):
        avg = ProbMatrix(avg, first.row_labels, first.col_labels, first.descriptor)
    return avg, sag
