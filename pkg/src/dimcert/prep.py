"""Optimal state preparations under weak exclusion.

Each preparation ``rho_x`` is a mixture of the normalized projectors that are
orthogonal to ``M_x`` (so ``tr(rho_x M_x) = 0`` exactly).  The mixture weights
solve the maximin LP  ``max t  s.t.  tr(rho_x M_b) >= t  for all b != x``.

The protocol value is the common worst-case ``t* = min_x t_x``.  For the
symmetric protocols the set of mixtures reaching ``t*`` is a polytope (the
optimal face), and the communication matrix depends on which point of the
face is returned.  ``selection`` fixes that choice:

``reference``
    the point of the optimal face closest in L1 to the published mixture
    (available for the convex protocol at d = 3, 5, 7).  Published mixtures
    that are already optimal are returned unchanged.
``center``
    the analytic center of the optimal face (unique, symmetric, smooth in
    the protocol parameters).
``vertex``
    the per-row Bland vertex of the row's own LP, symmetrized over the
    row's stabilizer.
``auto``
    ``reference`` when published data exist, else ``center``.

Rows related by a protocol symmetry are computed once and transported.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .errors import NumericalError, ParameterError, ProtocolError
from .protocol import Povm, canonical_modes, outcome_permutations
from .reference import REFERENCE_DIMENSIONS, reference_mixtures

EXCLUSION_TOL = 1e-12
SELECTIONS = ("auto", "reference", "center", "vertex")
_FACE_RELAX = 1e-11  # relative


@dataclass(frozen=True)
class PreparedState:
    x: int
    components: tuple
    weights: np.ndarray
    vectors: np.ndarray = field(repr=False)

    @property
    def density(self) -> np.ndarray:
        return density_matrix(self)

    def to_dict(self) -> dict:
        return {"x": self.x, "components": list(self.components),
                "weights": [float(w) for w in self.weights]}


def density_matrix(state: PreparedState) -> np.ndarray:
    V = state.vectors
    return (V.T * state.weights) @ V.conj()


def orthogonal_support(povm: Povm, x: int, tol: float = EXCLUSION_TOL) -> tuple:
    ov = povm.overlaps()[x]
    return tuple(int(b) for b in np.flatnonzero(ov <= tol))


def constraint_matrix(povm: Povm, x: int, support=None) -> np.ndarray:
    """Rows b != x, columns over the support: ``A[b, i] = w_b |<v_b|v_i>|^2``."""
    support = orthogonal_support(povm, x) if support is None else support
    others = [b for b in range(povm.n) if b != x]
    O = povm.overlaps()
    return povm.weights[others, None] * O[np.ix_(others, support)]


# ------------------------------------------------------------- selections


def _l1_projection(A, t, ref) -> np.ndarray:
    """argmin ||lam - ref||_1 over {A lam >= t, sum lam = 1, lam >= 0}."""
    nb, m = A.shape
    # variables: lam, u, v >= 0 with lam - u + v = ref
    c = np.r_[np.zeros(m), np.ones(2 * m)]
    A_ub = np.hstack([-A, np.zeros((nb, 2 * m))])
    b_ub = -np.full(nb, t)
    A_eq = np.vstack([
        np.hstack([np.eye(m), -np.eye(m), np.eye(m)]),
        np.r_[np.ones(m), np.zeros(2 * m)][None],
    ])
    b_eq = np.r_[ref, 1.0]
    res = numerics.linprog(c, A_ub, b_ub, A_eq, b_eq)
    return res.x[:m]


def _null_space(C: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    r, m = C.shape
    if r <= m:
        sq = np.zeros((m, m))
        sq[:, :r] = C.T
    else:
        sq = C.T @ C
    res = numerics.svd(sq)
    small = res.s <= tol * max(res.s[0], 1.0)
    return res.U[:, small]


def analytic_center(A: np.ndarray, t: float, cap: float = 1e9) -> np.ndarray:
    """Analytic center of ``{A lam >= t, sum lam = 1, lam >= 0}``.

    Constraints that are tight on the whole face are detected with one
    homogenized LP and enforced as equalities; the log-barrier of the
    remaining slacks is minimized by equality-constrained Newton steps.
    """
    nb, m = A.shape
    G = np.vstack([A, np.eye(m)])
    h = np.r_[np.full(nb, t), np.zeros(m)]
    scale = np.abs(G).max(axis=1)
    scale[scale == 0] = 1.0
    G, h = G / scale[:, None], h / scale
    K = G.shape[0]
    # variables y (m), alpha, z (K); maximize sum z
    c = np.r_[np.zeros(m + 1), -np.ones(K)]
    rows = [np.hstack([-G, h[:, None], np.eye(K)])]
    rhs = [np.zeros(K)]
    rows.append(np.r_[np.zeros(m), -1.0, np.zeros(K)][None])
    rhs.append([-1.0])
    rows.append(np.r_[np.zeros(m), 1.0, np.zeros(K)][None])
    rhs.append([cap])
    rows.append(np.hstack([np.zeros((K, m + 1)), np.eye(K)]))
    rhs.append(np.ones(K))
    A_eq = np.r_[np.ones(m), -1.0, np.zeros(K)][None]
    res = numerics.linprog(c, np.vstack(rows), np.concatenate([np.ravel(r) for r in rhs]), A_eq, [0.0])
    y, alpha, z = res.x[:m], res.x[m], res.x[m + 1:]
    free = z > 0.5
    lam = y / alpha
    C = np.vstack([np.ones((1, m)), G[~free]])
    e = np.r_[1.0, h[~free]]
    lam = lam + np.linalg.lstsq(C, e - C @ lam, rcond=None)[0]
    N = _null_space(C)
    Gf, hf = G[free], h[free]
    if N.shape[1] == 0 or not free.any():
        return _clean(lam)

    def barrier(l):
        s = Gf @ l - hf
        return np.inf if np.any(s <= 0) else -np.log(s).sum()

    if not np.all(Gf @ lam - hf > 0):
        raise NumericalError("no strictly feasible start for the analytic center")
    f = barrier(lam)
    GN = Gf @ N
    for _ in range(200):
        s = Gf @ lam - hf
        g = -GN.T @ (1.0 / s)
        H = (GN.T * (1.0 / s**2)) @ GN
        du = np.linalg.solve(H, -g)
        dec2 = float(-g @ du)
        if dec2 < 1e-24:
            break
        step = 1.0
        while step >= 1e-14:
            cand = lam + step * (N @ du)
            fc = barrier(cand)
            if fc <= f - 0.25 * step * dec2:
                break
            step *= 0.5
        else:
            break  # no sufficient decrease: at the center to working precision
        lam, f = cand, fc
    return _clean(lam)


def _clean(lam: np.ndarray) -> np.ndarray:
    lam = np.where(np.abs(lam) < 1e-15, 0.0, lam)
    lam = np.clip(lam, 0.0, None)
    return lam / lam.sum()


# ------------------------------------------------------------------ driver


def has_reference(povm: Povm) -> bool:
    from .protocol import default_layout

    return (povm.variant == "convex" and povm.d in REFERENCE_DIMENSIONS and povm.p is not None
            and abs(povm.p - 1 / 3) < 1e-9 and povm.layout == default_layout(povm.d))


def _reference_weights(povm: Povm, x: int, support: tuple) -> np.ndarray:
    mix = reference_mixtures(povm.d)[x]
    pos = {povm.elements[b].modes: i for i, b in enumerate(support)}
    ref = np.zeros(len(support))
    for modes, w in mix:
        key = canonical_modes(modes)
        if key not in pos:
            raise ProtocolError(f"reference component {key} of row {x} violates exclusion")
        ref[pos[key]] += w
    return ref


def _orbits(povm: Povm):
    try:
        perms = outcome_permutations(povm)
    except ProtocolError:
        perms = []
    rep_of = {}
    for x in range(povm.n):
        if x in rep_of:
            continue
        rep_of[x] = (x, None)
        for g in perms:
            y = int(g.perm[x])
            if y not in rep_of:
                rep_of[y] = (x, g)
    return rep_of, perms


def row_optima(povm: Povm) -> np.ndarray:
    """Per-row LP optimum ``t_x`` (each row optimized on its own)."""
    rep_of, _ = _orbits(povm)
    cache = {}
    out = np.empty(povm.n)
    for x in range(povm.n):
        rep = rep_of[x][0]
        if rep not in cache:
            cache[rep] = numerics.lp_maximin(constraint_matrix(povm, rep))[1]
        out[x] = cache[rep]
    return out


def optimize_preparations(povm: Povm, selection: str = "auto"):
    """Return ``(states, t)`` with ``t`` the common worst-case maximin value."""
    if selection not in SELECTIONS:
        raise ParameterError(f"selection must be one of {SELECTIONS}")
    if povm.completeness_error() > 1e-9:
        raise ProtocolError("POVM is not complete")
    if selection == "auto":
        selection = "reference" if has_reference(povm) else "center"
    if selection == "reference" and not has_reference(povm):
        raise ParameterError("no reference preparations for this protocol")
    rep_of, perms = _orbits(povm)
    reps = sorted({r for r, _ in rep_of.values()})
    supports, mats, lp = {}, {}, {}
    for r in reps:
        supports[r] = orthogonal_support(povm, r)
        if not supports[r]:
            raise ProtocolError(f"preparation {r} has an empty orthogonal support")
        mats[r] = constraint_matrix(povm, r, supports[r])
        lp[r] = numerics.lp_maximin(mats[r])
    t_star = min(v[1] for v in lp.values())
    t_face = t_star * (1.0 - _FACE_RELAX)
    full = {}
    for r in reps:
        if selection == "vertex":
            lam = lp[r][0]
        elif selection == "center":
            lam = analytic_center(mats[r], t_face)
        else:
            lam = _l1_projection(mats[r], t_face, _reference_weights(povm, r, supports[r]))
            lam = _clean(lam)
        vec = np.zeros(povm.n)
        vec[list(supports[r])] = lam
        stab = [g for g in perms if g.perm[r] == r]
        if stab:
            acc = np.zeros(povm.n)
            for g in stab:
                acc[g.perm] += vec
            vec = acc / len(stab)
        full[r] = vec
    V = povm.vectors
    states = []
    for x in range(povm.n):
        r, g = rep_of[x]
        vec = full[r]
        if g is not None:
            moved = np.zeros(povm.n)
            moved[g.perm] = vec
            vec = moved
        comps = tuple(int(i) for i in np.flatnonzero(vec > 0))
        states.append(PreparedState(x=x, components=comps, weights=vec[list(comps)], vectors=V[list(comps)]))
    return states, float(t_star)


def states_to_json(states, t: float, povm: Povm) -> str:
    doc = {"t": t, "variant": povm.variant, "dimension": povm.d,
           "states": [s.to_dict() for s in states]}
    return json.dumps(doc, indent=2, sort_keys=True)
