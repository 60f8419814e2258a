"""From a POVM to a certified classical dimension, without any data.

Builds the 3d-outcome convex protocol, optimizes the preparations, prints the
singular spectrum of P and shows how an error norm turns into a certified
dimension.  Ends with the heuristic non-negative factorization check for d=3.
"""
from dimcert.certify import certify
from dimcert.pmatrix import assemble, classical_dimension_lower_bound, nnrank_upper_bound, singular_spectrum
from dimcert.prep import optimize_preparations
from dimcert.protocol import build_variant

matrices = {}
for d in (3, 5, 7):
    povm = build_variant(d, "convex")
    states, t = optimize_preparations(povm)
    P = assemble(states, povm)
    matrices[d] = P
    s = singular_spectrum(P)
    print(f"d={d}: {povm.n} outcomes, worst-case overlap t = 1/{1 / t:.0f}, "
          f"rank(P) = {classical_dimension_lower_bound(P)}, sigma_2d = {s[2 * d - 1]:.4f}")
    print(certify(P, e_norm=0.06, d_q=d).table())
    print()

P3 = matrices[3]
for r in (5, 6, 9):
    res = nnrank_upper_bound(P3, r, restarts=10, iterations=2000)
    print(f"d=3 non-negative factorization at rank {r}: residual {res.residual:.2e} "
          f"({'found' if res.found else 'not found'})")
