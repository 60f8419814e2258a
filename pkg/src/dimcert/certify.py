"""Rank-stability certification of the classical dimension.

With ``E = P' - P``, Weyl's inequality gives ``sigma_r(P') >= sigma_r(P) - ||E||_2``,
so ``||E||_2 < sigma_r(P)`` certifies ``rank(P') >= r``.  The certified
dimension is the largest such ``r``.  The uncertainty of ``||E||_2`` is
propagated to first order through its gradient ``u1 v1^T``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .errors import InputError, ParameterError
from .pmatrix import ProbMatrix, assemble, singular_spectrum

TIE_TOL = 1e-15
GAP_TOL = 1e-12
CALIBRATION_TOL = 0.01


def _vals(p):
    return p.values if isinstance(p, ProbMatrix) else numerics.as_matrix(p)


def error_matrix(observed, target) -> np.ndarray:
    if isinstance(observed, ProbMatrix) and isinstance(target, ProbMatrix):
        if observed.row_labels != target.row_labels or observed.col_labels != target.col_labels:
            raise InputError("observed and target matrices carry different labels")
    o, t = _vals(observed), _vals(target)
    if o.shape != t.shape:
        raise InputError(f"shape mismatch {o.shape} vs {t.shape}")
    return o - t


def dimension_certification(target, e_norm: float) -> int:
    """Largest ``r`` with ``e_norm < sigma_r(P)`` (strict; ties are not certified)."""
    if e_norm < 0:
        raise ParameterError("error norm must be non-negative")
    s = singular_spectrum(target)
    ok = np.flatnonzero(s - e_norm > TIE_TOL)
    return int(ok[-1] + 1) if ok.size else 0


@dataclass(frozen=True)
class RankCertificate:
    certified: bool
    r: int
    e_norm: float
    sigma_target: float
    sigma_observed: float

    def __bool__(self) -> bool:
        return self.certified


def rank_stability_check(target, observed, r: int) -> RankCertificate:
    E = error_matrix(observed, target)
    e = numerics.spectral_norm(E)
    st = singular_spectrum(target)
    so = singular_spectrum(observed)
    if not 1 <= r <= st.size:
        raise ParameterError(f"rank index {r} out of range")
    ok = st[r - 1] - e > TIE_TOL
    if ok and not so[r - 1] >= st[r - 1] - e - 1e-12:
        raise AssertionError("Weyl bound violated; numerical failure")
    return RankCertificate(bool(ok), r, e, float(st[r - 1]), float(so[r - 1]))


def rank_stability_batch(target, observed_stack, r: int) -> dict:
    """Vectorized :func:`rank_stability_check` over a ``(B, n, m)`` stack of observed matrices.

    Returns arrays ``certified``, ``e_norm`` and the full observed spectra.
    """
    T = _vals(target)
    O = np.asarray(observed_stack, dtype=float)
    if O.ndim != 3 or O.shape[1:] != T.shape:
        raise InputError("observed stack must have shape (B, *target.shape)")
    st = singular_spectrum(T)
    if not 1 <= r <= st.size:
        raise ParameterError(f"rank index {r} out of range")
    e = numerics.batch_singular_values(O - T)[:, 0]
    so = numerics.batch_singular_values(O)
    ok = st[r - 1] - e > TIE_TOL
    if np.any(ok & ~(so[:, r - 1] >= st[r - 1] - e - 1e-12)):
        raise AssertionError("Weyl bound violated; numerical failure")
    return {"certified": ok, "e_norm": e, "sigma_observed": so, "sigma_target": st}


def norm_gradient(e) -> tuple[np.ndarray, float]:
    """Gradient ``u1 v1^T`` of ``||E||_2`` and the gap ``sigma_1 - sigma_2``."""
    r = numerics.svd(_vals(e))
    gap = r.s[0] - (r.s[1] if r.s.size > 1 else 0.0)
    return np.outer(r.U[:, 0], r.V[:, 0]), float(gap)


def _mc_std(E, s, samples, seed) -> float:
    rng = np.random.default_rng(seed)
    vals = np.empty(samples)
    for k in range(samples):
        vals[k] = numerics.spectral_norm(E + rng.standard_normal(E.shape) * s)
    return float(vals.std(ddof=1))


def propagate_std_details(e, s, *, seed: int = 0, samples: int = 10_000) -> tuple[float, str]:
    E = _vals(e)
    S = np.asarray(s, dtype=float)
    if S.shape != E.shape:
        raise InputError("uncertainty matrix shape differs from E")
    if np.any(S < 0) or not np.all(np.isfinite(S)):
        raise InputError("uncertainties must be finite and non-negative")
    grad, gap = norm_gradient(E)
    if gap <= GAP_TOL:
        return _mc_std(E, S, samples, seed), "monte-carlo"
    return float(np.sqrt(np.sum(grad**2 * S**2))), "first-order"


def propagate_std(e, s, *, seed: int = 0, samples: int = 10_000) -> float:
    """First-order std of ``||E||_2`` given independent per-cell stds ``s``.

    Falls back to a seeded Monte-Carlo estimate when ``sigma_1(E)`` is degenerate.
    """
    return propagate_std_details(e, s, seed=seed, samples=samples)[0]


def significance(target, r: int, e_norm: float, std: float) -> float:
    """``z = (sigma_r(P) - ||E||_2) / std``."""
    sig = target if np.isscalar(target) else singular_spectrum(target)[r - 1]
    margin = float(sig) - e_norm
    if std < 0:
        raise ParameterError("std must be non-negative")
    if std == 0:
        return math.copysign(math.inf, margin) if margin != 0 else math.nan
    return margin / std


@dataclass(frozen=True)
class CertReport:
    n: int
    d_q: int | None
    spectrum: np.ndarray
    e_norm: float
    e_std: float | None
    std_method: str | None
    d_exp: int
    margins: np.ndarray
    z_scores: np.ndarray | None
    metadata: dict = field(default_factory=dict)

    @property
    def sigma_dexp(self) -> float:
        return float(self.spectrum[self.d_exp - 1]) if self.d_exp else math.nan

    @property
    def sigma_next(self) -> float:
        return float(self.spectrum[self.d_exp]) if self.d_exp < self.spectrum.size else 0.0

    def to_dict(self) -> dict:
        def f(x):
            return None if x is None or (isinstance(x, float) and not math.isfinite(x)) else float(x)

        return {
            "n": self.n,
            "d_q": self.d_q,
            "d_exp": self.d_exp,
            "sigma_dexp": f(self.sigma_dexp),
            "sigma_next": f(self.sigma_next),
            "e_norm": self.e_norm,
            "e_std": self.e_std,
            "std_method": self.std_method,
            "spectrum": [float(v) for v in self.spectrum],
            "margins": [float(v) for v in self.margins],
            "z_scores": None if self.z_scores is None else [f(z) for z in self.z_scores],
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table(self) -> str:
        std = f" +/- {self.e_std:.2e}" if self.e_std is not None else ""
        nxt = self.sigma_next
        nxt_s = "<= 1e-12" if nxt <= 1e-12 else f"{nxt:.3e}"
        head = f"{'n':>4} {'d_Q':>4} {'d_exp':>6} {'sigma_dexp':>11} {'||E||_2':>24} {'sigma_next':>11}"
        row = (f"{self.n:>4} {self.d_q if self.d_q is not None else '-':>4} {self.d_exp:>6} "
               f"{self.sigma_dexp:>11.3e} {f'{self.e_norm:.3e}{std}':>24} {nxt_s:>11}")
        return head + "\n" + row


def certify(target, observed=None, *, e_norm: float | None = None, std=None, d_q: int | None = None,
            seed: int = 0, metadata: dict | None = None) -> CertReport:
    """Full report from either an observed matrix or an injected ``||E||_2``."""
    spec = singular_spectrum(target)
    e_std, method = None, None
    if observed is not None:
        E = error_matrix(observed, target)
        e_norm = numerics.spectral_norm(E)
        if std is not None:
            e_std, method = propagate_std_details(E, std, seed=seed)
    elif e_norm is None:
        raise InputError("need an observed matrix or an error norm")
    elif std is not None:
        e_std, method = float(std), "given"
    margins = spec - e_norm
    z = None
    if e_std is not None:
        z = np.array([significance(float(s), 0, e_norm, e_std) for s in spec])
    return CertReport(
        n=_vals(target).shape[0], d_q=d_q, spectrum=spec, e_norm=float(e_norm), e_std=e_std,
        std_method=method, d_exp=dimension_certification(target, e_norm), margins=margins,
        z_scores=z, metadata=dict(metadata or {}),
    )


# --------------------------------------------------------------- calibration


@dataclass(frozen=True)
class Calibration:
    d: int
    target_sigma: float
    weight: float
    sigma: float
    residual: float
    resolved: bool
    method: str
    evaluations: tuple = field(repr=False, default=())


def maximal_sigma(d: int, weight: float | None = None, selection: str = "center") -> tuple[float, float]:
    """``(sigma_r, sigma_{r+1})`` of the maximal protocol at ``r = d(d+1)/2``."""
    from .prep import optimize_preparations
    from .protocol import build_maximal_povm

    povm = build_maximal_povm(d, weight)
    states, _ = optimize_preparations(povm, selection=selection)
    s = singular_spectrum(assemble(states, povm))
    r = d * (d + 1) // 2
    return float(s[r - 1]), float(s[r])


def calibrate_maximal_weight(d: int, table_sigma: float, *, selection: str = "center",
                             grid: int = 17, tol: float = 1e-7) -> Calibration:
    """Fit the incoherent weight so that ``sigma_{d(d+1)/2}`` matches ``table_sigma``.

    The equal-trace default ``1/d`` is tried first.  Otherwise a grid scan
    brackets the best point and golden-section search refines the relative
    residual ``|sigma(a) - target| / target``.
    """
    if table_sigma <= 0:
        raise ParameterError("target sigma must be positive")
    log = []

    def resid(a):
        s = maximal_sigma(d, a, selection)[0]
        log.append((float(a), s))
        return abs(s - table_sigma) / table_sigma, s

    a0 = 1.0 / d
    r0, s0 = resid(a0)
    if r0 <= CALIBRATION_TOL:
        return Calibration(d, table_sigma, a0, s0, r0, True, "default", tuple(log))
    lo_a, hi_a = 0.01, 0.99
    xs = np.linspace(lo_a, hi_a, grid)
    rs = [resid(a)[0] for a in xs]
    k = int(np.argmin(rs))
    lo, hi = xs[max(k - 1, 0)], xs[min(k + 1, grid - 1)]
    g = (math.sqrt(5) - 1) / 2
    c, e = hi - g * (hi - lo), lo + g * (hi - lo)
    fc, fe = resid(c)[0], resid(e)[0]
    while hi - lo > tol:
        if fc < fe:
            hi, e, fe = e, c, fc
            c = hi - g * (hi - lo)
            fc = resid(c)[0]
        else:
            lo, c, fc = c, e, fe
            e = lo + g * (hi - lo)
            fe = resid(e)[0]
    a = (lo + hi) / 2
    r, s = resid(a)
    return Calibration(d, table_sigma, float(a), s, r, r <= CALIBRATION_TOL, "golden-section", tuple(log))
