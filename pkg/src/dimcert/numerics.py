"""Dense linear algebra and small linear programs.

Everything here is deterministic and self-contained: a one-sided Jacobi SVD
(Hestenes) and a dense two-phase tableau simplex with Bland's rule.  Problem
sizes in this package never exceed ~50x50 matrices and ~200 LP variables, so
the emphasis is on accuracy and reproducibility rather than speed.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np

from .errors import InputError, NumericalError, ParameterError

JACOBI_TOL = 1e-14
RANK_TOL = 1e-10
_MAX_SWEEPS = 80


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD ``m = U @ diag(s) @ V.T`` with ``s`` non-increasing."""

    U: np.ndarray
    s: np.ndarray
    V: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.s) @ self.V.T


def as_matrix(m) -> np.ndarray:
    a = np.array(m, dtype=float, copy=True)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise InputError(f"expected a non-empty 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InputError("matrix has non-finite entries")
    return a


@lru_cache(maxsize=None)
def _round_robin(n: int) -> tuple:
    """Disjoint column pairings covering every pair once (circle method)."""
    m = n + (n % 2)
    ring = list(range(m))
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for i in range(m // 2):
            p, q = ring[i], ring[m - 1 - i]
            if p < n and q < n:
                ps.append(min(p, q))
                qs.append(max(p, q))
        rounds.append((np.array(ps, dtype=int), np.array(qs, dtype=int)))
        ring = [ring[0]] + [ring[-1]] + ring[1:-1]
    return tuple(rounds)


def _jacobi(a: np.ndarray, want_v: bool):
    """Orthogonalize the columns of ``a`` (shape ``(m, n)`` or ``(B, m, n)``) in place.

    Returns ``(a, V)``.  For a stack every matrix receives exactly the
    rotations it would receive on its own; converged members are left alone.
    """
    single = a.ndim == 2
    if single:
        a = a[None]
    cols = a.shape[2]
    v = np.broadcast_to(np.eye(cols), (a.shape[0], cols, cols)).copy() if want_v else None
    rounds = _round_robin(cols)
    for _ in range(_MAX_SWEEPS):
        rotated = False
        for ps, qs in rounds:
            if ps.size == 0:
                continue
            ap, aq = a[:, :, ps], a[:, :, qs]
            alpha = np.einsum("bij,bij->bj", ap, ap)
            beta = np.einsum("bij,bij->bj", aq, aq)
            gamma = np.einsum("bij,bij->bj", ap, aq)
            act = (np.abs(gamma) > JACOBI_TOL * np.sqrt(alpha) * np.sqrt(beta)) & (np.abs(gamma) > 1e-280)
            if not act.any():
                continue
            rotated = True
            g = np.where(act, gamma, 1.0)
            zeta = (beta - alpha) / (2.0 * g)
            sgn = np.where(zeta >= 0, 1.0, -1.0)
            t = sgn / (np.abs(zeta) + np.hypot(1.0, zeta))
            c = np.where(act, 1.0 / np.sqrt(1.0 + t * t), 1.0)[:, None, :]
            s = np.where(act, t / np.sqrt(1.0 + t * t), 0.0)[:, None, :]
            a[:, :, ps] = c * ap - s * aq
            a[:, :, qs] = s * ap + c * aq
            if want_v:
                vp, vq = v[:, :, ps], v[:, :, qs]
                v[:, :, ps] = c * vp - s * vq
                v[:, :, qs] = s * vp + c * vq
        if not rotated:
            if single:
                return a[0], (v[0] if want_v else None)
            return a, v
    raise NumericalError("Jacobi SVD did not converge")


def _complete_basis(u: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Replace columns not in ``keep`` by an orthonormal complement."""
    rows, k = u.shape
    good = u[:, keep]
    if good.shape[1] == k:
        return u
    # Gram-Schmidt of the standard basis against the kept columns (twice for stability)
    out = u.copy()
    basis = [good[:, j] for j in range(good.shape[1])]
    fill = np.flatnonzero(~keep)
    e = 0
    for j in fill:
        while True:
            cand = np.zeros(rows)
            cand[e % rows] = 1.0
            e += 1
            for _ in range(2):
                for b in basis:
                    cand -= (b @ cand) * b
            nrm = np.linalg.norm(cand)
            if nrm > 1e-8:
                break
            if e > 4 * rows:
                raise NumericalError("could not complete orthonormal basis")
        cand /= nrm
        basis.append(cand)
        out[:, j] = cand
    return out


def svd(m) -> SvdResult:
    """One-sided Jacobi SVD (thin).  Deterministic for a fixed input."""
    a = as_matrix(m)
    flip = a.shape[0] < a.shape[1]
    if flip:
        a = a.T.copy()
    w, v = _jacobi(a, want_v=True)
    s = np.sqrt(np.einsum("ij,ij->j", w, w))
    order = np.argsort(-s, kind="stable")
    s, w, v = s[order], w[:, order], v[:, order]
    cut = max(s[0], 1.0) * w.shape[0] * np.finfo(float).eps
    keep = s > cut
    u = np.zeros_like(w)
    u[:, keep] = w[:, keep] / s[keep]
    u = _complete_basis(u, keep)
    if flip:
        u, v = v, u
    return SvdResult(U=u, s=s, V=v)


def singular_values(m) -> np.ndarray:
    a = as_matrix(m)
    if a.shape[0] < a.shape[1]:
        a = a.T.copy()
    w, _ = _jacobi(a, want_v=False)
    return np.sort(np.sqrt(np.einsum("ij,ij->j", w, w)))[::-1]


def batch_singular_values(stack) -> np.ndarray:
    """Singular values of every matrix in a ``(B, m, n)`` stack, shape ``(B, min(m, n))``."""
    a = np.array(stack, dtype=float, copy=True)
    if a.ndim != 3 or 0 in a.shape:
        raise InputError(f"expected a non-empty (B, m, n) stack, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InputError("stack has non-finite entries")
    if a.shape[1] < a.shape[2]:
        a = np.ascontiguousarray(a.transpose(0, 2, 1))
    w, _ = _jacobi(a, want_v=False)
    return -np.sort(-np.sqrt(np.einsum("bij,bij->bj", w, w)), axis=1)


def spectral_norm(m) -> float:
    """Largest singular value, i.e. the operator 2-norm."""
    return float(singular_values(m)[0])


def numerical_rank(m, tol: float = RANK_TOL) -> int:
    if not tol > 0:
        raise ParameterError("rank tolerance must be positive")
    return int(np.count_nonzero(singular_values(m) > tol))


# ---------------------------------------------------------------- simplex


@dataclass(frozen=True)
class LPResult:
    x: np.ndarray
    fun: float
    pivots: int


_LP_EPS = 1e-11


def _pivot(tab: np.ndarray, r: int, c: int) -> None:
    tab[r] /= tab[r, c]
    col = tab[:, c].copy()
    col[r] = 0.0
    tab -= np.outer(col, tab[r])


def _run_simplex(tab: np.ndarray, basis: list, allowed: np.ndarray, max_pivots: int) -> int:
    """Minimize the objective stored in the last row; Bland's rule throughout."""
    pivots = 0
    nrows = tab.shape[0] - 1
    while True:
        red = tab[-1, :-1]
        cand = np.flatnonzero((red < -_LP_EPS) & allowed)
        if cand.size == 0:
            return pivots
        c = int(cand[0])
        col = tab[:nrows, c]
        pos = np.flatnonzero(col > _LP_EPS)
        if pos.size == 0:
            raise NumericalError("linear program is unbounded")
        ratios = tab[pos, -1] / col[pos]
        best = ratios.min()
        ties = pos[ratios <= best + _LP_EPS * max(1.0, abs(best))]
        r = int(min(ties, key=lambda i: basis[i]))
        _pivot(tab, r, c)
        basis[r] = c
        pivots += 1
        if pivots > max_pivots:
            raise NumericalError("simplex pivot limit exceeded")


def linprog(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, max_pivots: int = 50_000) -> LPResult:
    """Minimize ``c @ x`` subject to ``A_ub x <= b_ub``, ``A_eq x = b_eq``, ``x >= 0``.

    Dense two-phase tableau simplex with Bland's anti-cycling rule, so the
    returned vertex is a deterministic function of the input ordering.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, dtype=float))
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).ravel()
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
    mu, me = A_ub.shape[0], A_eq.shape[0]
    m = mu + me
    # columns: x (n) | slacks (mu) | artificials (m) | rhs
    tab = np.zeros((m + 1, n + mu + m + 1))
    tab[:mu, :n] = A_ub
    tab[:mu, n:n + mu] = np.eye(mu)
    tab[:mu, -1] = b_ub
    tab[mu:m, :n] = A_eq
    tab[mu:m, -1] = b_eq
    neg = tab[:m, -1] < 0
    tab[:m][neg] *= -1.0
    basis = []
    art0 = n + mu
    for i in range(m):
        if i < mu and not neg[i]:
            basis.append(n + i)
        else:
            tab[i, art0 + i] = 1.0
            basis.append(art0 + i)
    arts = [i for i in range(m) if basis[i] >= art0]
    # phase 1: minimize the sum of artificials
    tab[-1, :] = 0.0
    for i in arts:
        tab[-1] -= tab[i]
        tab[-1, art0 + i] = 0.0
    allowed = np.ones(n + mu + m, dtype=bool)
    pivots = _run_simplex(tab, basis, allowed, max_pivots)
    scale = max(1.0, float(np.abs(tab[:m, -1]).max(initial=0.0)))
    if -tab[-1, -1] > 1e-9 * scale:
        raise NumericalError("linear program is infeasible")
    # drive remaining artificials out of the basis; drop redundant rows
    keep = np.ones(m + 1, dtype=bool)
    for i in range(m):
        if basis[i] >= art0:
            row = tab[i, :art0]
            nz = np.flatnonzero(np.abs(row) > 1e-9)
            if nz.size:
                _pivot(tab, i, int(nz[0]))
                basis[i] = int(nz[0])
                pivots += 1
            else:
                keep[i] = False
    tab = tab[keep]
    basis = [b for b, k in zip(basis, keep[:-1]) if k]
    tab = np.delete(tab, np.s_[art0:art0 + m], axis=1)
    # phase 2
    tab[-1, :] = 0.0
    tab[-1, :n] = c
    for i, b in enumerate(basis):
        if tab[-1, b] != 0.0:
            tab[-1] -= tab[-1, b] * tab[i]
    allowed = np.ones(n + mu, dtype=bool)
    pivots += _run_simplex(tab, basis, allowed, max_pivots)
    x = np.zeros(n + mu)
    for i, b in enumerate(basis):
        x[b] = tab[i, -1]
    x = x[:n]
    return LPResult(x=x, fun=float(c @ x), pivots=pivots)


def lp_maximin(constraint_rows) -> tuple[np.ndarray, float]:
    """Solve ``max t`` s.t. ``A lam >= t``, ``sum(lam) = 1``, ``lam >= 0``.

    Returns the optimal vertex (Bland tie-breaking) and the optimal ``t``.
    """
    A = as_matrix(constraint_rows)
    nb, nl = A.shape
    # variables: lam (nl), t+ , t-
    c = np.zeros(nl + 2)
    c[nl], c[nl + 1] = -1.0, 1.0
    A_ub = np.hstack([-A, np.ones((nb, 1)), -np.ones((nb, 1))])
    A_eq = np.zeros((1, nl + 2))
    A_eq[0, :nl] = 1.0
    res = linprog(c, A_ub, np.zeros(nb), A_eq, [1.0])
    lam = np.clip(res.x[:nl], 0.0, None)
    lam /= lam.sum()
    return lam, float(res.x[nl] - res.x[nl + 1])


def maximin_by_vertex_enumeration(constraint_rows) -> float:
    """Brute-force oracle for :func:`lp_maximin` on small instances.

    Enumerates every basic solution of the standard-form system and keeps the
    best feasible one.  Exponential; intended for tests with <= 8 variables.
    """
    A = as_matrix(constraint_rows)
    nb, nl = A.shape
    # inequality form over z = (lam, t):  -A lam + t <= 0, -lam <= 0, sum lam = 1
    G = np.vstack([np.hstack([-A, np.ones((nb, 1))]), np.hstack([-np.eye(nl), np.zeros((nl, 1))])])
    h = np.zeros(nb + nl)
    eq = np.r_[np.ones(nl), 0.0]
    best = -np.inf
    for rows in combinations(range(G.shape[0]), nl):
        M = np.vstack([G[list(rows)], eq])
        rhs = np.r_[h[list(rows)], 1.0]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        z = np.linalg.solve(M, rhs)
        if np.all(G @ z <= 1e-9):
            best = max(best, z[-1])
    return float(best)
