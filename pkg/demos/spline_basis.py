"""
Quadratic B-spline basis on a three-interval grid
==================================================

Every KAN edge is a weighted sum of these five bumps.
"""

import numpy as np

from kanppo import KnotGrid, basis_derivatives, basis_values, eval_spline

grid = KnotGrid(k=2, g=3)
print("knots:", grid.knots)
print("basis functions per edge:", grid.n_basis)

# sample the basis on a few points; each row sums to one
x = np.linspace(-1, 1, 7)
B = basis_values(grid, x)
for xi, row in zip(x, B):
    print(f"x={xi:+.3f}  " + " ".join(f"{b:.3f}" for b in row) + f"  sum={row.sum():.3f}")

# outside the domain inputs are clamped and the slope is zero
print("B(1.5) == B(1.0):", np.array_equal(basis_values(grid, 1.5), basis_values(grid, 1.0)))
print("dB/dx at 1.5:", basis_derivatives(grid, np.array([1.5]))[0])

# quadratic splines reproduce x**2 exactly: interpolate at five points and
# compare at others
pts = np.linspace(-1, 1, 5)
c = np.linalg.solve(basis_values(grid, pts), pts**2)
xs = np.array([-0.9, -0.2, 0.45, 0.8])
print("coefficients:", np.round(c, 4))
print("spline(x) - x**2:", eval_spline(c, grid, xs) - xs**2)
