"""How much does correlated selection beat independent coin flips?

Feed the same pair (u, v) to a selector k times.  With fair independent
coins, u is never picked with probability (1/2)^k.  The two-way selector
links consecutive pairs so that a linked receiver opposes its sender, which
pushes the never-picked probability strictly below that.  Exhaustive
enumeration over all coin assignments gives the exact value; a seeded Monte
Carlo run should land on it.

Run:  python demos/selectors_vs_independent_coins.py
"""

from fractions import Fraction

from ocskit import oracle
from ocskit.bounds import eta_sum, zeta_product
from ocskit.oracle import SubsequenceSpec

print("two-way selector, element 0 offered in k identical pairs")
print(f"{'k':>2} {'exact':>12} {'bound':>12} {'independent':>12} {'MC 99.9% CI':>26}")
for k in range(1, 7):
    pairs = [(0, 1)] * k
    spec = SubsequenceSpec(0, ((0, k),))
    exact = oracle.exact_two_way_never(pairs, spec)
    bound = zeta_product(k, Fraction(1, 16))
    mc = oracle.mc_never(pairs, spec, 200_000, master_seed=k)
    print(f"{k:>2} {float(exact):12.6f} {float(bound):12.6f} {0.5 ** k:12.6f} "
          f"   [{mc.lower:.6f}, {mc.upper:.6f}]")

# Triples: a pair selector picks from one of three sub-pairs, a second one
# settles the winner against the element that was left out.
print("\nthree-way selector, element 0 offered in k identical triples")
for k in range(1, 4):
    triples = [(0, 1, 2)] * k
    exact = oracle.exact_three_way_never(triples, SubsequenceSpec(0, ((0, k),)))
    bound = eta_sum(k, Fraction(1, 16), Fraction(1, 16))
    print(f"  k={k}: exact {float(exact):.6f}  bound {float(bound):.6f}  "
          f"independent {(2 / 3) ** k:.6f}")
