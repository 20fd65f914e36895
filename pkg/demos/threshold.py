"""Divergence of the resolvent at the bottom of the band.

For an attractive point mass the quadratic form of (H0 + mu^2)^{-1}
grows like 1/mu in d = 1, like log(1/mu) in d = 2, and stays bounded
for d >= 3.  This is why arbitrarily weak attractive potentials bind in
low dimensions, while in d = 3 a threshold coupling is needed.
"""

from bslattice import PointMass
from bslattice.birman_schwinger import bs_bound_states
from bslattice.counterexamples import threshold_divergence

for d in (1, 2, 3):
    origin = (0,) * d
    ser = threshold_divergence(d, PointMass(origin, -1.0), {origin: 1.0})
    print(f"d={d}: {ser.classification:12s} last value {ser.values[-1]:.4f}")

for d, lam in ((1, 0.1), (2, 1.0), (3, 1.0), (3, 5.0)):
    E = bs_bound_states(PointMass((0,) * d, -1.0), lam, d)
    print(f"d={d}, lambda={lam}: bound states {[f'{e:.3e}' for e in E]}")
