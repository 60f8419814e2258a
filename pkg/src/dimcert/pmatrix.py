"""Communication matrices ``P[x, b] = tr(rho_x M_b)`` and their diagnostics."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numerics
from ._parallel import parallel_map
from .errors import InputError, ProtocolError
from .protocol import Povm

ROW_SUM_TOL = 1e-9
DIAG_TOL = 1e-12
NMF_FOUND_TOL = 1e-6


@dataclass(frozen=True)
class ProbMatrix:
    values: np.ndarray
    row_labels: tuple
    col_labels: tuple
    descriptor: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape != (len(self.row_labels), len(self.col_labels)):
            raise InputError("label count does not match the matrix shape")
        if not np.all(np.isfinite(v)):
            raise InputError("matrix has non-finite entries")
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape

    def invariant_violations(self, check_diagonal: bool = True) -> list:
        """Empty list when ``P`` is row-stochastic with (optionally) zero diagonal."""
        v = self.values
        out = []
        if v.min() < -DIAG_TOL or v.max() > 1 + DIAG_TOL:
            out.append("entries outside [0, 1]")
        if np.abs(v.sum(axis=1) - 1).max() > ROW_SUM_TOL:
            out.append("rows do not sum to 1")
        if check_diagonal and v.shape[0] == v.shape[1] and np.abs(np.diag(v)).max() > DIAG_TOL:
            out.append("non-zero diagonal")
        return out

    def relabel(self, perm) -> "ProbMatrix":
        from .protocol import apply_permutation

        return ProbMatrix(apply_permutation(self.values, perm), self.row_labels, self.col_labels, self.descriptor)


def assemble(states, povm: Povm) -> ProbMatrix:
    """``P[x, b] = tr(rho_x M_b)`` for every preparation and outcome."""
    rows = []
    for s in states:
        rho = s.density
        if rho.shape != (povm.d, povm.d):
            raise InputError("state and POVM dimensions differ")
        ev = np.einsum("bi,ij,bj->b", povm.vectors.conj(), rho, povm.vectors).real
        rows.append(povm.weights * ev)
    P = np.clip(np.array(rows), 0.0, None)
    names = tuple(povm.names)
    desc = {"dimension": povm.d, "variant": povm.variant, "p": povm.p, "layout": povm.layout}
    pm = ProbMatrix(P, names[: len(rows)], names, desc)
    bad = pm.invariant_violations()
    if bad:
        raise ProtocolError("assembled matrix violates: " + ", ".join(bad))
    return pm


def _values(p) -> np.ndarray:
    return p.values if isinstance(p, ProbMatrix) else numerics.as_matrix(p)


def singular_spectrum(p) -> np.ndarray:
    return numerics.singular_values(_values(p))


def classical_dimension_lower_bound(p, tol: float = numerics.RANK_TOL) -> int:
    """``rank(P)`` lower-bounds the non-negative rank, i.e. the classical dimension."""
    return numerics.numerical_rank(_values(p), tol)


# ------------------------------------------------------------------- NMF


@dataclass(frozen=True)
class NmfResult:
    rank: int
    residual: float
    found: bool
    W: np.ndarray = field(repr=False)
    H: np.ndarray = field(repr=False)


def _nmf_run(V, W, H, iterations):
    eps = 1e-300
    prev = np.inf
    for it in range(iterations):
        H *= (W.T @ V) / (W.T @ W @ H + eps)
        W *= (V @ H.T) / (W @ H @ H.T + eps)
        if it % 50 == 49:
            res = np.linalg.norm(V - W @ H)
            if res < 1e-12 or prev - res < 1e-15 * max(prev, 1.0):
                break
            prev = res
    return W, H, float(np.linalg.norm(V - W @ H))


def nnrank_upper_bound(p, r: int, restarts: int = 50, seed: int = 0, iterations: int = 5000) -> NmfResult:
    """Best Frobenius residual of a rank-``r`` non-negative factorization.

    Multiplicative updates (Lee-Seung) from ``restarts`` seeded random starts.
    When ``r`` reaches a matrix dimension the trivial factorization is tried
    first.  Heuristic only: a large residual does not prove ``rank_+ > r``.
    """
    if r < 1:
        raise InputError("target rank must be >= 1")
    V = np.clip(_values(p), 0.0, None)
    n, m = V.shape
    scale = np.sqrt(V.mean() / r) if V.mean() > 0 else 1.0
    children = np.random.SeedSequence(seed).spawn(restarts)

    def run(k):
        rng = np.random.default_rng(children[k])
        W = rng.random((n, r)) * scale + 1e-3 * scale
        H = rng.random((r, m)) * scale + 1e-3 * scale
        return _nmf_run(V, W, H, iterations)

    results = []
    if r >= min(n, m):
        if r >= n:
            W = np.zeros((n, r)); W[:, :n] = np.eye(n)
            H = np.zeros((r, m)); H[:n] = V
        else:
            W = np.zeros((n, r)); W[:, :m] = V
            H = np.zeros((r, m)); H[:m, :] = np.eye(m)
        results.append(_nmf_run(V, W, H, 1))
    results += parallel_map(run, range(restarts))
    W, H, res = min(results, key=lambda t: t[2])
    return NmfResult(rank=r, residual=res, found=res <= NMF_FOUND_TOL, W=W, H=H)


# ------------------------------------------------------------------- CSV


def write_csv(p: ProbMatrix, path=None, corner: str = "x\\b") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([corner, *p.col_labels])
    for lab, row in zip(p.row_labels, p.values):
        w.writerow([lab, *(repr(float(v)) for v in row)])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_csv(path_or_text, descriptor: dict | None = None) -> ProbMatrix:
    text = str(path_or_text)
    if "\n" not in text:
        try:
            text = Path(text).read_text()
        except OSError as exc:
            raise InputError(f"cannot read {path_or_text}: {exc}") from exc
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if len(rows) < 2:
        raise InputError("CSV needs a header row and at least one data row")
    cols = tuple(c.strip() for c in rows[0][1:])
    labels, vals = [], []
    for r in rows[1:]:
        if len(r) != len(cols) + 1:
            raise InputError(f"row {r[0]!r} has {len(r) - 1} values, expected {len(cols)}")
        labels.append(r[0].strip())
        try:
            vals.append([float(v) for v in r[1:]])
        except ValueError as exc:
            raise InputError(f"non-numeric cell in row {r[0]!r}") from exc
    return ProbMatrix(np.array(vals), tuple(labels), cols, descriptor)
