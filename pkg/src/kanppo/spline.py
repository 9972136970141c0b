"""Uniform B-spline grids and vectorized Cox-de Boor evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class KnotGrid:
    """Uniform knots over ``[lo, hi]`` with ``k`` extra knots past each end.

    ``k`` is the polynomial degree and ``g`` the number of intervals inside
    the domain, giving ``g + k`` basis functions.
    """

    k: int = 2
    g: int = 3
    lo: float = -1.0
    hi: float = 1.0
    knots: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("spline degree k must be >= 0")
        if self.g < 1:
            raise ValueError("grid size g must be >= 1")
        if not self.lo < self.hi:
            raise ValueError("need lo < hi")
        h = (self.hi - self.lo) / self.g
        knots = self.lo + np.arange(-self.k, self.g + self.k + 1, dtype=np.float64) * h
        # pin the domain ends exactly so clamped inputs land on a knot
        knots[self.k] = self.lo
        knots[self.g + self.k] = self.hi
        knots.flags.writeable = False
        object.__setattr__(self, "knots", knots)

    @property
    def n_basis(self) -> int:
        return self.g + self.k

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / self.g


def _basis_up_to(grid: KnotGrid, x: np.ndarray, degree: int) -> np.ndarray:
    """Basis of the given degree over all knot spans; x must lie in [lo, hi].

    Returns shape ``x.shape + (len(knots) - 1 - degree,)``.
    """
    t = grid.knots
    n_spans = t.size - 1
    # span index with the last in-domain span closed on the right so x == hi
    # still has a support span (matters only for degree 0)
    span = np.searchsorted(t, x, side="right") - 1
    span = np.clip(span, grid.k, grid.g + grid.k - 1)
    B = np.zeros(x.shape + (n_spans,))
    np.put_along_axis(B, span[..., None], 1.0, axis=-1)
    xe = x[..., None]
    for d in range(1, degree + 1):
        n = n_spans - d
        left = (xe - t[:n]) / (t[d : d + n] - t[:n])
        right = (t[d + 1 : d + 1 + n] - xe) / (t[d + 1 : d + 1 + n] - t[1 : 1 + n])
        B = left * B[..., :n] + right * B[..., 1 : n + 1]
    return B


def clamp_to_domain(grid: KnotGrid, x) -> np.ndarray:
    return np.clip(np.asarray(x, dtype=np.float64), grid.lo, grid.hi)


def basis_values(grid: KnotGrid, x) -> np.ndarray:
    """B-spline basis ``N_{i,k}(x)`` for ``i = 0 .. g+k-1``.

    ``x`` may be a scalar or an array; the result gains a trailing axis of
    length ``g + k``. Inputs outside the domain are clamped to it first.
    """
    xc = clamp_to_domain(grid, x)
    return _basis_up_to(grid, xc, grid.k)


def basis_derivatives(grid: KnotGrid, x) -> np.ndarray:
    """``dN_{i,k}/dx``, zero wherever ``x`` was clamped."""
    if grid.k == 0:
        raise ValueError("degree-0 basis has no derivative at breakpoints")
    x = np.asarray(x, dtype=np.float64)
    xc = np.clip(x, grid.lo, grid.hi)
    k, t = grid.k, grid.knots
    lower = _basis_up_to(grid, xc, k - 1)  # g + k + 1 functions
    n = grid.n_basis
    a = k / (t[k : k + n] - t[:n])
    b = k / (t[k + 1 : k + 1 + n] - t[1 : 1 + n])
    d = a * lower[..., :n] - b * lower[..., 1 : n + 1]
    outside = (x < grid.lo) | (x > grid.hi)
    if np.any(outside):
        d = np.where(outside[..., None], 0.0, d)
    return d


def eval_spline(coeffs, grid: KnotGrid, x) -> np.ndarray | float:
    """``sum_i c_i N_{i,k}(x)``; derivative w.r.t. ``c_i`` is ``N_{i,k}(x)``."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape[-1] != grid.n_basis:
        raise ValueError(f"expected {grid.n_basis} coefficients, got {coeffs.shape[-1]}")
    out = basis_values(grid, x) @ coeffs
    return float(out) if np.ndim(out) == 0 else out
