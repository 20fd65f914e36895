"""Flat band at the energy 4 in two dimensions.

On the level set of energy 4 the symbol is flat along the diagonal, so
the weighted spectral measure does not decay in that direction.  The
kernel table shows the factorisation and the profile shows the
1/sqrt(s) blow-up that rules out a uniform weighted bound.
"""

from bslattice.counterexamples import flatband_J, flatband_kernel, flatband_weighted_blowup

table = flatband_kernel(x_range=4)
print(f"max ||I(x1, x2)| - |J(x1 - x2)|| on |x| <= 4: {table.factor_residual:.2e}")
print("|J(t)| for t = 0, 5, 10, 20:", [f"{abs(flatband_J(t)):.3e}" for t in (0, 5, 10, 20)])

blow = flatband_weighted_blowup({(0, 0): 1.0}, s_max=400)
print(f"blow-up slope {blow.slope:+.4f} (predicted -0.5), partial l2 sums grow like c log s, c = "
      f"{blow.log_slope:.3e}")
