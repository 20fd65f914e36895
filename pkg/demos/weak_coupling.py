"""Weak coupling margin for a fast-decaying potential in four dimensions.

Sweeps the Birman-Schwinger norm over the energy shell, reads off the
verdict, and turns a bounded sweep into a coupling margin that is then
checked against box eigenvalues.  Runs in a few seconds.
"""

from bslattice import LatticeBox, PowerDecay
from bslattice.birman_schwinger import bs_sup_sweep, weak_coupling_margin

V = PowerDecay(3.0)
sweep = bs_sup_sweep(V, LatticeBox(4, 3), eps_ladder=(0.1, 10 ** -1.5, 0.01))
print(sweep.verdict_table())

lam = weak_coupling_margin(V, sweep)
print(f"\nno embedded eigenvalues for |lambda| < {lam:.4f}")
