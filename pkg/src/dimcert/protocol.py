"""Target POVMs, their projective decompositions and outcome symmetries.

Every measurement element is a weighted rank-1 projector onto a vector that
is either a computational-basis state ``|k>`` or an equal two-mode
superposition ``(|i> +/- |j>)/sqrt(2)`` with ``i < j``.  Such vectors are
described by their *modes*: a tuple of ``(qudit, amplitude sign)`` pairs.

Two outcome layouts are supported for the 3d-outcome family:

``blocked``
    ``M_k = p|k><k|``, ``M_{d+k}`` the ``+`` superposition of ``(k, k+1)``
    and ``M_{2d+k}`` the ``-`` superposition of the same pair.
``grouped``
    outcome ``3k`` is ``|k>`` and ``3k+1``/``3k+2`` are the ``+``/``-``
    superpositions of ``(k+1, k+2)``, i.e. one full basis per block.  This is
    the ordering used for the d=3 reference data and is the default there.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import InputError, ParameterError, ProtocolError

VARIANTS = ("convex", "coherent", "incoherent", "maximal")
COMPLETENESS_TOL = 1e-12

Modes = tuple  # tuple[tuple[int, int], ...]


def canonical_modes(modes) -> Modes:
    """Sort by qudit and fix the global sign so the first amplitude is +."""
    ms = sorted((int(q), 1 if s >= 0 else -1) for q, s in modes)
    if len({q for q, _ in ms}) != len(ms):
        raise InputError(f"repeated mode in {modes!r}")
    s0 = ms[0][1]
    return tuple((q, s * s0) for q, s in ms)


def modes_vector(modes, d: int) -> np.ndarray:
    v = np.zeros(d, dtype=complex)
    amp = 1.0 / np.sqrt(len(modes))
    for q, s in modes:
        if not 0 <= q < d:
            raise InputError(f"qudit index {q} outside [0, {d})")
        v[q] = s * amp
    return v


def modes_label(modes) -> str:
    """Human label: ``"3"``, ``"0+1"`` or ``"2-4"``."""
    out = str(modes[0][0])
    for q, s in modes[1:]:
        out += ("+" if s > 0 else "-") + str(q)
    return out


@dataclass(frozen=True)
class PovmElement:
    modes: Modes
    weight: float
    label: int
    vector: np.ndarray = field(compare=False, repr=False)

    @property
    def projector(self) -> np.ndarray:
        return np.outer(self.vector, self.vector.conj())

    @property
    def operator(self) -> np.ndarray:
        return self.weight * self.projector

    @property
    def name(self) -> str:
        return modes_label(self.modes)


def _element(modes, weight, label, d) -> PovmElement:
    m = canonical_modes(modes)
    return PovmElement(modes=m, weight=float(weight), label=int(label), vector=modes_vector(m, d))


@dataclass(frozen=True)
class Povm:
    d: int
    elements: tuple
    variant: str
    p: float | None = None
    layout: str = "blocked"

    @property
    def n(self) -> int:
        return len(self.elements)

    @property
    def vectors(self) -> np.ndarray:
        return np.array([e.vector for e in self.elements])

    @property
    def weights(self) -> np.ndarray:
        return np.array([e.weight for e in self.elements])

    @property
    def names(self) -> list:
        return [e.name for e in self.elements]

    def overlaps(self) -> np.ndarray:
        """``O[i, b] = |<v_i|v_b>|^2`` between normalized projectors."""
        V = self.vectors
        return np.abs(V.conj() @ V.T) ** 2

    def completeness_error(self) -> float:
        tot = sum(e.operator for e in self.elements)
        return float(np.abs(tot - np.eye(self.d)).max())

    def index_of(self, modes) -> int:
        key = canonical_modes(modes)
        for e in self.elements:
            if e.modes == key:
                return e.label
        raise KeyError(key)

    def to_dict(self) -> dict:
        return {
            "dimension": self.d,
            "variant": self.variant,
            "p": self.p,
            "layout": self.layout,
            "outcome_labels": self.names,
            "elements": [
                {
                    "label": e.label,
                    "name": e.name,
                    "weight": e.weight,
                    "vector": [[float(z.real), float(z.imag)] for z in e.vector],
                }
                for e in self.elements
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def povm_from_dict(doc: dict) -> Povm:
    """Inverse of :meth:`Povm.to_dict` (modes are recovered from the vectors)."""
    d = int(doc["dimension"])
    els = []
    for e in doc["elements"]:
        v = np.array([complex(re, im) for re, im in e["vector"]])
        nz = np.flatnonzero(np.abs(v) > 1e-9)
        modes = tuple((int(q), 1 if v[q].real >= 0 else -1) for q in nz)
        els.append(_element(modes, e["weight"], e["label"], d))
    return Povm(d=d, elements=tuple(els), variant=doc["variant"], p=doc.get("p"),
                layout=doc.get("layout", "blocked"))


def _check_d(d: int) -> int:
    if int(d) != d or d < 3:
        raise ProtocolError(f"dimension must be an odd integer >= 3, got {d!r}")
    if d % 2 == 0:
        raise ProtocolError(f"even dimension d={d} is not supported (neighbour-pair bases need odd d)")
    return int(d)


def default_layout(d: int) -> str:
    return "grouped" if d == 3 else "blocked"


def target_modes(d: int, layout: str | None = None) -> list:
    """Modes of the 3d outcomes in the requested layout."""
    d = _check_d(d)
    layout = layout or default_layout(d)
    if layout == "blocked":
        inc = [((k, 1),) for k in range(d)]
        plus = [((k, 1), ((k + 1) % d, 1)) for k in range(d)]
        minus = [((k, 1), ((k + 1) % d, -1)) for k in range(d)]
        return inc + plus + minus
    if layout == "grouped":
        out = []
        for k in range(d):
            i, j = (k + 1) % d, (k + 2) % d
            out += [((k, 1),), ((i, 1), (j, 1)), ((i, 1), (j, -1))]
        return out
    raise ParameterError(f"unknown layout {layout!r}")


def build_target_povm(d: int, p: float = 1 / 3, layout: str | None = None) -> Povm:
    """3d-outcome POVM: weight ``p`` on ``|k>``, ``(1-p)/2`` on each neighbour superposition."""
    d = _check_d(d)
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"p must lie in [0, 1], got {p}")
    layout = layout or default_layout(d)
    els = []
    for b, m in enumerate(target_modes(d, layout)):
        w = p if len(m) == 1 else (1.0 - p) / 2.0
        els.append(_element(m, w, b, d))
    return Povm(d=d, elements=tuple(els), variant="convex", p=float(p), layout=layout)


# ----------------------------------------------------------- decompositions


@dataclass(frozen=True)
class PvmBasis:
    """Orthonormal basis; ``labels[i]`` is the global outcome of ``modes[i]``."""

    modes: tuple
    labels: tuple

    def projectors(self, d: int) -> list:
        return [np.outer(modes_vector(m, d), modes_vector(m, d).conj()) for m in self.modes]


@dataclass(frozen=True)
class MeasurementStrategy:
    d: int
    which: str
    bases: tuple
    probabilities: tuple
    layout: str = "blocked"


def build_strategy(d: int, which: str, layout: str | None = None) -> MeasurementStrategy:
    """Strategy A: d-2 incoherent projectors + one pair per basis.
    Strategy B: one incoherent projector + (d-1)/2 pairs per basis.
    """
    d = _check_d(d)
    layout = layout or default_layout(d)
    which = which.upper()
    lookup = {canonical_modes(m): b for b, m in enumerate(target_modes(d, layout))}
    bases = []
    for k in range(d):
        if which == "A":
            inc = [((k + i) % d,) for i in range(d - 2)]
            pairs = [((k + d - 2) % d, (k + d - 1) % d)]
        elif which == "B":
            inc = [(k,)]
            pairs = [((k + 2 * i + 1) % d, (k + 2 * i + 2) % d) for i in range((d - 1) // 2)]
        else:
            raise ParameterError(f"strategy must be 'A' or 'B', got {which!r}")
        ms = [((q, 1),) for (q,) in inc]
        for i, j in pairs:
            ms += [((i, 1), (j, 1)), ((i, 1), (j, -1))]
        ms = [canonical_modes(m) for m in ms]
        bases.append(PvmBasis(modes=tuple(ms), labels=tuple(lookup[m] for m in ms)))
    return MeasurementStrategy(d=d, which=which, bases=tuple(bases),
                               probabilities=tuple([1.0 / d] * d), layout=layout)


def _strategy_weights(strategy: MeasurementStrategy, exact: bool = False) -> dict:
    w = {}
    d = strategy.d
    for basis, prob in zip(strategy.bases, strategy.probabilities):
        pr = Fraction(1, d) if exact else prob
        for lab in basis.labels:
            w[lab] = w.get(lab, 0) + pr
    return w


def _povm_from_weights(d, layout, weights: dict, variant: str) -> Povm:
    modes = target_modes(d, layout)
    els = tuple(_element(modes[b], float(weights.get(b, 0.0)), b, d) for b in range(len(modes)))
    incs = np.array([float(weights.get(b, 0.0)) for b, m in enumerate(modes) if len(m) == 1])
    p = float(incs.mean()) if np.ptp(incs) < 1e-12 else None
    return Povm(d=d, elements=els, variant=variant, p=p, layout=layout)


def effective_povm(strategy: MeasurementStrategy) -> Povm:
    """POVM with the same statistics as picking a basis at random."""
    variant = {"A": "incoherent", "B": "coherent"}[strategy.which]
    return _povm_from_weights(strategy.d, strategy.layout, _strategy_weights(strategy), variant)


def mix_strategies(a: MeasurementStrategy, b: MeasurementStrategy, alpha: float) -> Povm:
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError(f"alpha must lie in [0, 1], got {alpha}")
    if a.d != b.d or a.layout != b.layout:
        raise ProtocolError("strategies act on different spaces")
    wa, wb = _strategy_weights(a), _strategy_weights(b)
    w = {k: alpha * wa.get(k, 0.0) + (1 - alpha) * wb.get(k, 0.0) for k in set(wa) | set(wb)}
    return _povm_from_weights(a.d, a.layout, w, "convex")


def exact_effective_weights(strategy: MeasurementStrategy) -> dict:
    """Outcome weights as exact fractions (for rational-arithmetic checks)."""
    return _strategy_weights(strategy, exact=True)


# ------------------------------------------------------------------ maximal


def build_maximal_povm(d: int, incoherent_weight: float | None = None) -> Povm:
    """d^2 outcomes: all ``|k>`` (weight a) and ``+``/``-`` superpositions of every pair (weight c).

    ``a + c (d-1) = 1`` keeps the POVM complete; the default is ``a = c = 1/d``.
    """
    d = _check_d(d)
    a = 1.0 / d if incoherent_weight is None else float(incoherent_weight)
    if not 0.0 <= a <= 1.0:
        raise ParameterError(f"incoherent weight must lie in [0, 1], got {a}")
    c = (1.0 - a) / (d - 1)
    modes = [((k, 1),) for k in range(d)]
    pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
    modes += [((i, 1), (j, 1)) for i, j in pairs]
    modes += [((i, 1), (j, -1)) for i, j in pairs]
    els = tuple(_element(m, a if len(m) == 1 else c, b, d) for b, m in enumerate(modes))
    return Povm(d=d, elements=els, variant="maximal", p=a, layout="maximal")


def build_variant(d: int, variant: str = "convex", p: float | None = None,
                  weight: float | None = None) -> Povm:
    """Convenience constructor keyed by the CLI variant names."""
    if variant == "convex":
        if p is None:
            return mix_strategies(build_strategy(d, "A"), build_strategy(d, "B"), 1 / 3)
        return build_target_povm(d, p)
    if variant == "incoherent":
        return effective_povm(build_strategy(d, "A"))
    if variant == "coherent":
        return effective_povm(build_strategy(d, "B"))
    if variant == "maximal":
        return build_maximal_povm(d, weight)
    raise ParameterError(f"unknown variant {variant!r}; choose from {VARIANTS}")


# ------------------------------------------------------------- symmetries


@dataclass(frozen=True)
class OutcomePermutation:
    perm: np.ndarray
    kind: str  # "cyclic" or "mirror"
    shift: int
    qudit_map: np.ndarray = field(repr=False)

    def apply(self, matrix) -> np.ndarray:
        return apply_permutation(matrix, self.perm)


def apply_permutation(matrix, perm: Sequence[int]) -> np.ndarray:
    """Return ``Q`` with ``Q[perm[x], perm[b]] = matrix[x, b]``."""
    m = np.asarray(matrix)
    perm = np.asarray(perm)
    out = np.empty_like(m)
    out[np.ix_(perm, perm)] = m
    return out


def outcome_permutations(povm: Povm) -> list:
    """The 2d permutations induced by ``k -> k+s`` and ``k -> s-k`` on qudit labels."""
    d = povm.d
    lookup = {e.modes: e.label for e in povm.elements}
    out = []
    for kind in ("cyclic", "mirror"):
        for s in range(d):
            qmap = np.array([(s + k) % d if kind == "cyclic" else (s - k) % d for k in range(d)])
            perm = np.empty(povm.n, dtype=int)
            for e in povm.elements:
                key = canonical_modes([(qmap[q], sg) for q, sg in e.modes])
                if key not in lookup:
                    raise ProtocolError(f"{kind} shift {s} does not preserve the outcome set")
                tgt = lookup[key]
                if abs(povm.elements[tgt].weight - e.weight) > 1e-12:
                    raise ProtocolError(f"{kind} shift {s} does not preserve the weights")
                perm[e.label] = tgt
            out.append(OutcomePermutation(perm=perm, kind=kind, shift=s, qudit_map=qmap))
    return out
