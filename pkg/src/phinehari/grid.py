"""Uniform tensor grids on the unit cube with zero Dirichlet boundary.

Nodal fields live on ``n^dim`` nodes; weights and every integrand live on the
``(n-1)^dim`` cells.  The gradient on a cell is constant: along axis ``i`` it
is the mean of the forward differences over the cell's edges parallel to
``i``, divided by ``h``.  Nodal values enter the zeroth-order terms through
their cell average, so every integral is a plain midpoint sum.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq

from .errors import ConfigError, IllConditionedError
from .nfunction import NFunction

__all__ = [
    "Grid",
    "Field",
    "Weight",
    "build_grid",
    "cell_gradients",
    "cell_gradient",
    "gradient_transpose",
    "cell_average",
    "average_transpose",
    "integrate",
    "gradient_matrices",
    "luxemburg_norm",
    "sobolev_norm",
    "lp_integral",
]


@dataclass(frozen=True)
class Grid:
    dim: int
    nodes_per_axis: int

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ConfigError(f"dim must be 1, 2 or 3, got {self.dim}")
        if int(self.nodes_per_axis) != self.nodes_per_axis or self.nodes_per_axis < 3:
            raise ConfigError(f"nodes_per_axis must be an integer >= 3, got {self.nodes_per_axis}")

    @property
    def h(self) -> float:
        return 1.0 / (self.nodes_per_axis - 1)

    @property
    def shape(self) -> tuple:
        return (self.nodes_per_axis,) * self.dim

    @property
    def cell_shape(self) -> tuple:
        return (self.nodes_per_axis - 1,) * self.dim

    @property
    def n_nodes(self) -> int:
        return self.nodes_per_axis**self.dim

    @property
    def n_cells(self) -> int:
        return (self.nodes_per_axis - 1) ** self.dim

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    def node_coords(self):
        x = np.linspace(0.0, 1.0, self.nodes_per_axis)
        return np.meshgrid(*([x] * self.dim), indexing="ij")

    def cell_centers(self):
        x = (np.arange(self.nodes_per_axis - 1) + 0.5) * self.h
        return np.meshgrid(*([x] * self.dim), indexing="ij")

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for axis in range(self.dim):
            sl = [slice(None)] * self.dim
            sl[axis] = 0
            mask[tuple(sl)] = True
            sl[axis] = -1
            mask[tuple(sl)] = True
        return mask

    def interior_mask(self) -> np.ndarray:
        return ~self.boundary_mask()

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)


def build_grid(dim: int, nodes_per_axis: int) -> Grid:
    for name, v in (("dim", dim), ("nodes_per_axis", nodes_per_axis)):
        if int(v) != v:
            raise ConfigError(f"{name} must be an integer, got {v}")
    return Grid(int(dim), int(nodes_per_axis))


def _readonly(arr):
    arr = np.array(arr, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Field:
    """Nodal scalar function; boundary values are exactly zero."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise ConfigError(f"field shape {vals.shape} != grid shape {self.grid.shape}")
        vals[self.grid.boundary_mask()] = 0.0
        object.__setattr__(self, "values", _readonly(vals))

    def __mul__(self, c):
        return Field(self.grid, self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.grid, -self.values)

    def __abs__(self):
        return Field(self.grid, np.abs(self.values))

    def __add__(self, other):
        return Field(self.grid, self.values + _vals(other))

    def __sub__(self, other):
        return Field(self.grid, self.values - _vals(other))


@dataclass(frozen=True, eq=False)
class Weight:
    """Cell-wise coefficient (``a`` or ``b``), sampled at cell centres."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.broadcast_to(np.asarray(self.values, dtype=float), self.grid.cell_shape)
        if not np.all(np.isfinite(vals)):
            raise ConfigError("weight values must be finite")
        object.__setattr__(self, "values", _readonly(vals))

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "Weight":
        return cls(grid, np.full(grid.cell_shape, float(c)))

    def positive_part(self) -> np.ndarray:
        return np.maximum(self.values, 0.0)

    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())


def _vals(u) -> np.ndarray:
    return u.values if isinstance(u, (Field, Weight)) else np.asarray(u, dtype=float)


# ---------------------------------------------------------------------------
# discrete operators


def _avg_axis(a, axis):
    lo = [slice(None)] * a.ndim
    hi = [slice(None)] * a.ndim
    lo[axis] = slice(None, -1)
    hi[axis] = slice(1, None)
    return 0.5 * (a[tuple(lo)] + a[tuple(hi)])


def _avg_axis_t(a, axis):
    pad = [(0, 0)] * a.ndim
    pad[axis] = (1, 1)
    p = np.pad(a, pad)
    lo = [slice(None)] * a.ndim
    hi = [slice(None)] * a.ndim
    lo[axis] = slice(None, -1)
    hi[axis] = slice(1, None)
    return 0.5 * (p[tuple(lo)] + p[tuple(hi)])


def cell_gradients(grid: Grid, u) -> np.ndarray:
    """All cell gradients, shape ``(dim,) + cell_shape``."""
    u = _vals(u)
    out = np.empty((grid.dim,) + grid.cell_shape)
    for i in range(grid.dim):
        d = np.diff(u, axis=i)
        for j in range(grid.dim):
            if j != i:
                d = _avg_axis(d, j)
        out[i] = d / grid.h
    return out


def cell_gradient(u: Field, cell) -> np.ndarray:
    """Gradient vector on one cell (``cell`` is a tuple of cell indices)."""
    cell = tuple(np.atleast_1d(cell).tolist())
    return cell_gradients(u.grid, u)[(slice(None),) + cell]


def gradient_transpose(grid: Grid, flux: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`cell_gradients`: cell vectors to a nodal covector."""
    out = np.zeros(grid.shape)
    for i in range(grid.dim):
        d = flux[i] / grid.h
        for j in range(grid.dim):
            if j != i:
                d = _avg_axis_t(d, j)
        pad = [(0, 0)] * grid.dim
        pad[i] = (1, 1)
        p = np.pad(d, pad)
        lo = [slice(None)] * grid.dim
        hi = [slice(None)] * grid.dim
        lo[i] = slice(None, -1)
        hi[i] = slice(1, None)
        out += p[tuple(lo)] - p[tuple(hi)]
    return out


def cell_average(grid: Grid, u) -> np.ndarray:
    a = _vals(u)
    for j in range(grid.dim):
        a = _avg_axis(a, j)
    return a


def average_transpose(grid: Grid, c: np.ndarray) -> np.ndarray:
    a = np.asarray(c, dtype=float)
    for j in range(grid.dim):
        a = _avg_axis_t(a, j)
    return a


@lru_cache(maxsize=16)
def gradient_matrices(grid: Grid) -> tuple:
    """Sparse ``(n_cells, n_nodes)`` matrices of :func:`cell_gradients`, one per axis."""
    n = grid.nodes_per_axis
    diff = sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n)) / grid.h
    avg = sp.diags([0.5 * np.ones(n - 1), 0.5 * np.ones(n - 1)], [0, 1], shape=(n - 1, n))
    mats = []
    for i in range(grid.dim):
        m = sp.identity(1, format="csr")
        for j in range(grid.dim):
            m = sp.kron(m, diff if j == i else avg, format="csr")
        mats.append(m)
    return tuple(mats)


def integrate(grid: Grid, cell_values) -> float:
    """Midpoint rule: sum of cell values times the cell volume."""
    vals = np.broadcast_to(np.asarray(cell_values, dtype=float), grid.cell_shape)
    return float(vals.sum() * grid.cell_volume)


# ---------------------------------------------------------------------------
# norms


def _modular(f: NFunction, mags: np.ndarray, vol: float, k: float) -> float:
    return float(np.sum(f.big_phi(mags / k)) * vol)


def luxemburg_norm(
    f: NFunction, u: Union[Field, np.ndarray], grid: Grid = None, tol: float = 1e-10
) -> float:
    """``inf{k > 0 : int Phi(|u|/k) <= 1}``.

    ``u`` is either a :class:`Field` (evaluated at cell centres through the
    cell average) or an array of per-cell magnitudes together with ``grid``.
    The modular is strictly decreasing in ``k``; the root is bracketed by
    doubling and refined with Brent's method.
    """
    if isinstance(u, Field):
        grid = u.grid
        mags = np.abs(cell_average(grid, u))
    else:
        if grid is None:
            raise ConfigError("luxemburg_norm on raw cell values needs the grid")
        mags = np.abs(np.asarray(u, dtype=float))
    vol = grid.cell_volume
    mags = mags[mags > 0]
    if mags.size == 0:
        return 0.0

    def resid(k):
        return _modular(f, mags, vol, k) - 1.0

    lo = hi = float(mags.max())
    for _ in range(1024):
        if resid(hi) <= 0:
            break
        lo, hi = hi, 2.0 * hi
    for _ in range(1024):
        if resid(lo) >= 0:
            break
        lo, hi = 0.5 * lo, lo
    if resid(lo) == 0:
        return lo
    k = brentq(resid, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=300)
    if abs(resid(k)) > tol:  # pragma: no cover - Brent converges well inside tol
        raise IllConditionedError(f"Luxemburg norm residual {resid(k):.3e} above {tol}")
    return float(k)


def sobolev_norm(f: NFunction, u: Field, kind: str = "sum") -> float:
    """Orlicz-Sobolev norm of a field.

    ``kind="sum"``: ``||u||_Phi + sum_i ||d_i u||_Phi`` (the standard norm).
    ``kind="gradient"``: ``|| |grad u| ||_Phi``, the equivalent norm on the
    zero-trace space in which the modular bounds hold exactly.
    """
    grid = u.grid
    grads = cell_gradients(grid, u)
    if kind == "gradient":
        return luxemburg_norm(f, np.sqrt(np.sum(grads**2, axis=0)), grid)
    if kind != "sum":
        raise ConfigError(f"unknown norm kind {kind!r}")
    total = luxemburg_norm(f, u)
    for i in range(grid.dim):
        total += luxemburg_norm(f, np.abs(grads[i]), grid)
    return total


def lp_integral(u: Field, w: Weight, s: float) -> float:
    """``int w |u|^s`` with ``u`` averaged to cell centres."""
    if not s > 1:
        raise ConfigError(f"exponent must exceed 1, got {s}")
    ubar = np.abs(cell_average(u.grid, u))
    return float(np.sum(_vals(w) * ubar**s) * u.grid.cell_volume)
