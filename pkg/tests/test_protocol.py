from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dimcert.errors import ParameterError, ProtocolError
from dimcert.protocol import (VARIANTS, apply_permutation, build_maximal_povm, build_strategy,
                              build_target_povm, build_variant, exact_effective_weights,
                              mix_strategies, outcome_permutations, povm_from_dict)

DIMS = (3, 5, 7, 9)


@pytest.mark.parametrize("d", DIMS)
@pytest.mark.parametrize("variant", VARIANTS)
def test_complete_and_sized(d, variant):
    povm = build_variant(d, variant)
    assert povm.completeness_error() < 1e-12
    assert povm.n == (d * d if variant == "maximal" else 3 * d)
    assert np.all(povm.weights >= 0)


@pytest.mark.parametrize("d", DIMS)
def test_strategy_bases_are_orthonormal(d):
    for which in "AB":
        for basis in build_strategy(d, which).bases:
            assert len(basis.modes) == d
            total = sum(basis.projectors(d))
            assert np.allclose(total, np.eye(d), atol=1e-14)


@pytest.mark.parametrize("d", DIMS)
def test_exact_rational_weights(d):
    wa = exact_effective_weights(build_strategy(d, "A"))
    wb = exact_effective_weights(build_strategy(d, "B"))
    povm = build_target_povm(d)
    for e in povm.elements:
        mixed = Fraction(1, 3) * wa.get(e.label, 0) + Fraction(2, 3) * wb.get(e.label, 0)
        assert mixed == Fraction(1, 3)  # p = 1/3 and (1 - p)/2 = 1/3
        inc = Fraction(d - 2, d) if len(e.modes) == 1 else Fraction(1, d)
        coh = Fraction(1, d) if len(e.modes) == 1 else Fraction(d - 1, 2 * d)
        assert wa[e.label] == inc and wb[e.label] == coh


def test_convex_mix_equals_target():
    for d in (3, 5, 7):
        mix = mix_strategies(build_strategy(d, "A"), build_strategy(d, "B"), 1 / 3)
        tgt = build_target_povm(d)
        assert mix.p == pytest.approx(1 / 3)
        assert np.allclose(mix.weights, tgt.weights, atol=1e-15)
        assert mix.names == tgt.names


def test_coherent_weight_at_d7():
    povm = build_variant(7, "coherent")
    assert povm.p == pytest.approx(1 / 7)


def test_d5_first_basis_labels():
    assert sorted(build_strategy(5, "A").bases[0].labels) == [0, 1, 2, 8, 13]
    assert sorted(build_strategy(5, "B").bases[0].labels) == [0, 6, 8, 11, 13]


@pytest.mark.parametrize("d", [0, 1, 2, 4, 6, -3])
def test_bad_dimensions(d):
    with pytest.raises(ProtocolError):
        build_target_povm(d)


def test_bad_parameters():
    with pytest.raises(ParameterError):
        build_variant(3, "nonsense")
    with pytest.raises(ParameterError):
        build_maximal_povm(3, 1.5)
    with pytest.raises(ParameterError):
        build_strategy(3, "C")


@pytest.mark.parametrize("d", (3, 5, 7))
@pytest.mark.parametrize("variant", VARIANTS)
def test_symmetry_group(d, variant):
    povm = build_variant(d, variant)
    perms = outcome_permutations(povm)
    assert len(perms) == 2 * d
    assert len({tuple(g.perm) for g in perms}) == 2 * d
    O = povm.overlaps()
    for g in perms:
        assert sorted(g.perm) == list(range(povm.n))
        assert np.allclose(apply_permutation(O, g.perm), O, atol=1e-15)
        assert np.allclose(povm.weights[g.perm], povm.weights)
    # closed under composition
    keys = {tuple(g.perm) for g in perms}
    for g in perms:
        for h in perms:
            assert tuple(g.perm[h.perm]) in keys


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([3, 5, 7]), st.floats(0, 1))
def test_maximal_complete_for_any_weight(d, a):
    povm = build_maximal_povm(d, a)
    assert povm.completeness_error() < 1e-12
    assert povm.n == d * d


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([3, 5, 7]), st.floats(0, 1))
def test_target_complete_for_any_p(d, p):
    povm = build_target_povm(d, p)
    assert povm.completeness_error() < 1e-12


@pytest.mark.parametrize("variant", VARIANTS)
def test_json_round_trip(variant):
    import json

    povm = build_variant(5, variant)
    back = povm_from_dict(json.loads(povm.to_json()))
    assert back.names == povm.names
    assert np.allclose(back.weights, povm.weights)
    assert np.allclose(back.vectors, povm.vectors)
