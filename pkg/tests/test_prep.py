import numpy as np
import pytest

from conftest import theory
from dimcert import numerics
from dimcert.errors import ParameterError
from dimcert.pmatrix import assemble
from dimcert.prep import (analytic_center, constraint_matrix, optimize_preparations, orthogonal_support,
                          row_optima)
from dimcert.protocol import VARIANTS, apply_permutation, build_variant, canonical_modes, outcome_permutations
from dimcert.reference import reference_mixtures


@pytest.mark.parametrize("d", (3, 5, 7))
@pytest.mark.parametrize("variant", VARIANTS)
def test_weak_exclusion_and_common_value(d, variant):
    povm, states, t, P = theory(d, variant)
    assert np.abs(np.diag(P.values)).max() <= 1e-12
    off = P.values[~np.eye(povm.n, dtype=bool)]
    assert off.min() >= t * (1 - 1e-9)
    assert t == pytest.approx(row_optima(povm).min(), rel=1e-12)
    for s in states:
        assert s.weights.sum() == pytest.approx(1, abs=1e-12)
        assert np.all(s.weights > 0)
        assert set(s.components) <= set(orthogonal_support(povm, s.x))
        rho = s.density
        assert np.allclose(rho, rho.conj().T)
        assert np.trace(rho).real == pytest.approx(1, abs=1e-12)


@pytest.mark.parametrize("d,inv", [(3, 12), (5, 18), (7, 24)])
def test_convex_common_value(d, inv):
    assert 1 / theory(d)[2] == pytest.approx(inv, abs=1e-9)


@pytest.mark.parametrize("d", (3, 5, 7))
def test_reference_selection_reproduces_published_mixtures(d):
    povm, states, _, _ = theory(d)
    ref = reference_mixtures(d)
    worst = 0.0
    for s in states:
        ours = {povm.elements[c].modes: w for c, w in zip(s.components, s.weights)}
        theirs = {}
        for m, w in ref[s.x]:
            theirs[canonical_modes(m)] = theirs.get(canonical_modes(m), 0) + w
        worst = max(worst, max(abs(ours.get(k, 0) - theirs.get(k, 0)) for k in set(ours) | set(theirs)))
    assert worst <= 5e-4


@pytest.mark.parametrize("selection", ["center", "vertex", "reference"])
@pytest.mark.parametrize("d", (3, 5))
def test_selections_share_value_and_symmetry(selection, d):
    povm = build_variant(d, "convex")
    states, t = optimize_preparations(povm, selection=selection)
    P = assemble(states, povm).values
    assert t == pytest.approx(theory(d)[2], rel=1e-12)
    for g in outcome_permutations(povm):
        assert np.abs(apply_permutation(P, g.perm) - P).max() <= 1e-12


def test_vertex_rows_match_oracle():
    povm = build_variant(3, "convex")
    for x in range(povm.n):
        A = constraint_matrix(povm, x)
        assert numerics.lp_maximin(A)[1] == pytest.approx(numerics.maximin_by_vertex_enumeration(A), abs=1e-12)


def test_grid_search_never_beats_lp(rng):
    povm = build_variant(3, "convex")
    A = constraint_matrix(povm, 0)
    t = numerics.lp_maximin(A)[1]
    lam = rng.dirichlet(np.ones(A.shape[1]), size=20000)
    assert (lam @ A.T).min(axis=1).max() <= t + 1e-12


def test_analytic_center_known_polytopes():
    # lam_1 >= 0 appears twice, so the barrier weights it twice: center ~ (2, 1, 1)
    assert np.allclose(analytic_center(np.array([[1.0, 0, 0]]), 0.0), [0.5, 0.25, 0.25], atol=1e-9)
    assert np.allclose(analytic_center(np.array([[0.0, 0, 0]]), 0.0), np.full(3, 1 / 3), atol=1e-9)
    assert np.allclose(analytic_center(np.array([[1.0, 1, 0]]), 1.0), [0.5, 0.5, 0], atol=1e-9)
    assert np.allclose(analytic_center(np.array([[1.0, 0, 0]]), 1.0), [1, 0, 0], atol=1e-12)


def test_unknown_selection():
    with pytest.raises(ParameterError):
        optimize_preparations(build_variant(3), selection="best")
    with pytest.raises(ParameterError):
        optimize_preparations(build_variant(3, "coherent"), selection="reference")


@pytest.mark.parametrize("variant,weight", [("convex", None), ("coherent", None), ("maximal", None),
                                            ("maximal", 0.72124)])
def test_general_states_never_beat_ansatz_d3(variant, weight, rng):
    """Random complex density matrices orthogonal to M_x stay below the mixture optimum."""
    povm = build_variant(3, variant, weight=weight)
    V, w, opt = povm.vectors, povm.weights, row_optima(povm)
    for x in range(povm.n):
        Q, _ = np.linalg.qr(np.c_[V[x], rng.standard_normal((3, 2))])
        B = Q[:, 1:]
        W = B @ (rng.standard_normal((3000, 2, 2)) + 1j * rng.standard_normal((3000, 2, 2)))
        rho = W @ np.conj(np.transpose(W, (0, 2, 1)))
        rho /= np.trace(rho, axis1=1, axis2=2).real[:, None, None]
        ev = np.delete(np.einsum("bi,nij,bj->nb", V.conj(), rho, V).real * w, x, axis=1)
        assert ev.min(axis=1).max() <= opt[x] + 1e-12
