"""Uniform extended-knot B-splines.

A grid with ``G`` intervals on ``[lo, hi]`` and degree ``k`` carries
``G + 2k + 1`` knots (the uniform knots of the domain extended ``k`` steps
past each end) and ``G + k`` basis functions, all of which sum to one on the
domain. Inputs outside the domain are evaluated on the extended knots as is.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffcore import Tensor, _lift, einsum
from .errors import ConfigError, DimensionError


@dataclass(frozen=True)
class SplineGrid:
    grid_size: int
    order: int
    lo: float = -2.0
    hi: float = 2.0
    knots: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.grid_size) != self.grid_size or self.grid_size < 1:
            raise ConfigError(f"grid size must be a positive integer, got {self.grid_size}")
        if int(self.order) != self.order or self.order < 0:
            raise ConfigError(f"spline order must be a non-negative integer, got {self.order}")
        if not self.lo < self.hi:
            raise ConfigError(f"spline domain needs lo < hi, got [{self.lo}, {self.hi}]")
        k = np.arange(-self.order, self.grid_size + self.order + 1, dtype=np.float64)
        knots = self.lo + k * self.spacing
        # Pin the domain ends exactly; accumulated rounding would otherwise shift them by an ulp.
        knots[self.order] = self.lo
        knots[self.order + self.grid_size] = self.hi
        knots.setflags(write=False)
        object.__setattr__(self, "knots", knots)

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / self.grid_size

    @property
    def num_basis(self) -> int:
        return self.grid_size + self.order


def make_grid(grid_size: int, order: int, lo: float = -2.0, hi: float = 2.0) -> SplineGrid:
    return SplineGrid(grid_size, order, float(lo), float(hi))


def _cox_de_boor(knots: np.ndarray, order: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
    """Basis values of degree ``order`` and ``order - 1`` at ``x``.

    Returns arrays with a trailing basis axis of length ``len(knots) - 1 - p``.
    The final knot interval is closed on the right so that a degree-0 grid
    still covers its upper domain endpoint.
    """
    x = x[..., None]
    left, right = knots[:-1], knots[1:]
    basis = ((x >= left) & (x < right)).astype(np.float64)
    basis[..., -1] = np.where((x[..., 0] >= left[-1]) & (x[..., 0] <= right[-1]), 1.0, 0.0)
    prev = None
    for p in range(1, order + 1):
        prev = basis
        t_i = knots[: -(p + 1)]
        t_ip = knots[p:-1]
        t_i1 = knots[1:-p]
        t_ip1 = knots[p + 1 :]
        basis = (x - t_i) / (t_ip - t_i) * prev[..., :-1] + (t_ip1 - x) / (t_ip1 - t_i1) * prev[..., 1:]
    return basis, prev


def basis_values(grid: SplineGrid, x) -> np.ndarray:
    """Plain-array basis evaluation; output shape is ``x.shape + (num_basis,)``."""
    basis, _ = _cox_de_boor(grid.knots, grid.order, np.asarray(x, dtype=np.float64))
    return basis


def basis_eval(grid: SplineGrid, x) -> Tensor:
    """Differentiable basis evaluation with respect to ``x``.

    Uses the uniform-knot derivative ``dB_i,k/dx = (B_i,k-1 - B_i+1,k-1) / h``.
    """
    xt = _lift(x)
    basis, lower = _cox_de_boor(grid.knots, grid.order, xt.value)
    if lower is None:
        deriv = np.zeros_like(basis)
    else:
        deriv = (lower[..., :-1] - lower[..., 1:]) / grid.spacing

    def vjp(g):
        return ((g * deriv).sum(axis=-1),)

    return Tensor.from_op(basis, (xt,), vjp, "bspline_basis")


def spline_eval(grid: SplineGrid, coeffs, x) -> Tensor:
    """Evaluate ``sum_i coeffs[i] * B_i(x)`` for every element of 1-D ``x``."""
    c, xt = _lift(coeffs), _lift(x)
    if c.shape != (grid.num_basis,):
        raise DimensionError(f"expected {grid.num_basis} spline coefficients", c.shape)
    if xt.ndim != 1:
        raise DimensionError("spline_eval expects a 1-D input", xt.shape)
    return einsum("nb,b->n", basis_eval(grid, xt), c)
