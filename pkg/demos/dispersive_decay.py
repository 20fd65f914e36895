"""Decay of the free lattice evolution of a point datum.

The sup norm of exp(-itH0) delta_0 decays like t^(-d/3), slower than
the continuum rate t^(-d/2), because of degenerate critical points of
the symbol.  The fit below recovers the exponent in d = 1, 2, 3.
"""

from bslattice.dynamics import dispersive_fit

for d in (1, 2, 3):
    fit = dispersive_fit(d, t_range=(1e2, 1e3), samples=9)
    print(f"d={d}: slope {fit.slope:+.4f}  predicted {-d / 3:+.4f}  residual {fit.residual:.2e}")
