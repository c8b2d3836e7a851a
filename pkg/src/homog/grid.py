"""Tensor-product multilinear finite elements and sparse solvers.

Grids are rectilinear: each axis carries its own sorted node coordinates.
Grids built on triadic cubes are uniform with ``res`` nodes per unit length,
so element faces fall on unit-cell faces and the checkerboard coefficient is
constant on every element.  All element integrals are exact.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import CompatibilityError, SolverError
from .field import CoefficientField, TriadicCube

# 1-d reference matrices on an element of length h:
#   stiffness  S/h,  mass  h*M,  mixed  D with D[a, c] = int phi_a' phi_c
_S = np.array([[1.0, -1.0], [-1.0, 1.0]])
_M = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
_D = np.array([[-0.5, -0.5], [0.5, 0.5]])

RTOL = 1e-12
RESIDUAL_LIMIT = 1e-10


def _kron_all(mats):
    out = np.ones((1, 1))
    for m in mats:
        out = np.kron(out, m)
    return out


class Grid:
    """Rectilinear grid of nodes ``axes[0] x ... x axes[d-1]`` (C order)."""

    def __init__(self, axes, cube: TriadicCube | None = None, res: int | None = None):
        self.axes = tuple(np.asarray(a, dtype=float) for a in axes)
        for a in self.axes:
            if a.ndim != 1 or a.size < 2 or np.any(np.diff(a) <= 0):
                raise ValueError("grid axes must be strictly increasing with at least two nodes")
        self.cube = cube
        self.res = res

    @classmethod
    def for_cube(cls, cube: TriadicCube, res: int) -> "Grid":
        """Uniform grid with ``res`` nodes per unit length on ``cube``.

        Coordinates are formed as exact ratios so that grids on nested cubes
        share node coordinates bit for bit.
        """
        if res < 1:
            raise ValueError("res must be positive")
        count = res * cube.side
        axes = [(2 * res * o - count + 2 * np.arange(count + 1)) / (2.0 * res) for o in cube.offset]
        return cls(axes, cube, res)

    @classmethod
    def for_box(cls, lower, upper, h: float, breaks=()) -> "Grid":
        """Grid on ``[lower, upper]`` whose axes include every breakpoint.

        ``breaks[k]`` lists coordinates on axis ``k`` that must be nodes (for
        example coefficient discontinuities); each gap is split evenly into
        ``max(1, ceil(gap / h - 1e-9))`` elements.
        """
        lower, upper = np.atleast_1d(lower).astype(float), np.atleast_1d(upper).astype(float)
        axes = []
        for k in range(lower.size):
            pts = [lower[k], upper[k]]
            if len(breaks) > k:
                pts += [b for b in breaks[k] if lower[k] < b < upper[k]]
            pts = np.unique(np.asarray(pts))
            pieces = [pts[:1]]
            for a, b in zip(pts[:-1], pts[1:]):
                m = max(1, math.ceil((b - a) / h - 1e-9))
                pieces.append(a + (b - a) * np.arange(1, m + 1) / m)
            ax = np.concatenate(pieces)
            ax[-1] = upper[k]
            axes.append(ax)
        return cls(axes)

    # -- geometry ------------------------------------------------------
    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(a.size for a in self.axes)

    @property
    def element_shape(self) -> tuple:
        return tuple(a.size - 1 for a in self.axes)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def n_elements(self) -> int:
        return int(np.prod(self.element_shape))

    @property
    def lower(self) -> np.ndarray:
        return np.array([a[0] for a in self.axes])

    @property
    def upper(self) -> np.ndarray:
        return np.array([a[-1] for a in self.axes])

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    @cached_property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(n_nodes, d)``."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @cached_property
    def widths(self) -> tuple:
        return tuple(np.diff(a) for a in self.axes)

    @cached_property
    def element_centers(self) -> np.ndarray:
        """Element midpoints, shape ``element_shape + (d,)``."""
        mids = [0.5 * (a[1:] + a[:-1]) for a in self.axes]
        return np.stack(np.meshgrid(*mids, indexing="ij"), axis=-1)

    @cached_property
    def element_volumes(self) -> np.ndarray:
        out = np.ones(self.element_shape)
        for k, w in enumerate(self.widths):
            shape = [1] * self.dim
            shape[k] = w.size
            out = out * w.reshape(shape)
        return out

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for k in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[k] = 0
            mask[tuple(idx)] = True
            idx[k] = -1
            mask[tuple(idx)] = True
        return mask.ravel()

    @cached_property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_mask)

    @cached_property
    def boundary(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_mask)

    @cached_property
    def element_nodes(self) -> np.ndarray:
        """Global node indices of each element's ``2^d`` corners (C order)."""
        idx = np.arange(self.n_nodes).reshape(self.shape)
        cols = []
        for corner in itertools.product((0, 1), repeat=self.dim):
            sl = tuple(slice(c, c + n) for c, n in zip(corner, self.element_shape))
            cols.append(idx[sl].ravel())
        return np.stack(cols, axis=-1)

    def node_index(self, coords) -> np.ndarray:
        """Flat indices of nodes located exactly at ``coords`` (shape (..., d))."""
        coords = np.atleast_2d(np.asarray(coords, float))
        flat = np.zeros(coords.shape[0], dtype=np.int64)
        for k, ax in enumerate(self.axes):
            i = np.searchsorted(ax, coords[:, k])
            i = np.clip(i, 0, ax.size - 1)
            if not np.array_equal(ax[i], coords[:, k]):
                raise ValueError("coordinates are not nodes of this grid")
            flat = flat * ax.size + i
        return flat

    def contains_grid(self, other: "Grid") -> bool:
        try:
            for a, b in zip(self.axes, other.axes):
                i = np.searchsorted(a, b)
                if np.any(i >= a.size) or not np.array_equal(a[i], b):
                    return False
                if np.any(np.diff(i) != 1):
                    return False
        except ValueError:
            return False
        return True

    def interpolate(self, fn) -> "GridFunction":
        """Nodal interpolant of ``fn(coords) -> values``."""
        return GridFunction(self, np.asarray(fn(self.coords), dtype=float).reshape(self.n_nodes))

    def affine(self, p) -> "GridFunction":
        return GridFunction(self, self.coords @ np.asarray(p, float).reshape(self.dim))

    def zeros(self) -> "GridFunction":
        return GridFunction(self, np.zeros(self.n_nodes))

    def __eq__(self, other):
        return isinstance(other, Grid) and all(
            a.shape == b.shape and np.array_equal(a, b) for a, b in zip(self.axes, other.axes)
        ) and self.dim == other.dim

    def __hash__(self):
        return hash(tuple(a.tobytes() for a in self.axes))

    def __repr__(self):
        if self.cube is not None:
            return f"Grid(cube={self.cube}, res={self.res})"
        return f"Grid(shape={self.shape}, lower={self.lower.tolist()}, upper={self.upper.tolist()})"

    # -- element operators ---------------------------------------------
    def element_gradients(self, values) -> np.ndarray:
        """Element-averaged gradient, shape ``element_shape + (d,)``.

        For a multilinear function the average of ``d_k u`` over an element
        equals the difference along axis ``k`` averaged over the other axes.
        """
        u = np.asarray(values, float).reshape(self.shape)
        out = []
        for k in range(self.dim):
            g = np.diff(u, axis=k)
            shape = [1] * self.dim
            shape[k] = -1
            g = g / self.widths[k].reshape(shape)
            for j in range(self.dim):
                if j != k:
                    g = 0.5 * (np.take(g, range(0, g.shape[j] - 1), axis=j)
                               + np.take(g, range(1, g.shape[j]), axis=j))
            out.append(g)
        return np.stack(out, axis=-1)

    def element_means(self, values) -> np.ndarray:
        """Element averages of a multilinear nodal function."""
        u = np.asarray(values, float).reshape(self.shape)
        for j in range(self.dim):
            u = 0.5 * (np.take(u, range(0, u.shape[j] - 1), axis=j) + np.take(u, range(1, u.shape[j]), axis=j))
        return u

    @cached_property
    def mass_matrix(self) -> sp.csr_matrix:
        """``M[i, j] = int phi_i phi_j``."""
        local = _kron_all([_M] * self.dim)
        scale = self.element_volumes.ravel()
        return self._assemble(scale[:, None, None] * local[None])

    @cached_property
    def node_weights(self) -> np.ndarray:
        """``int phi_j`` for every node."""
        return np.asarray(self.mass_matrix.sum(axis=1)).ravel()

    @cached_property
    def gradient_loads(self) -> np.ndarray:
        """``G[k, j] = int d_k phi_j`` (shape (d, n_nodes))."""
        return np.stack([self.flux_load(np.eye(self.dim)[k]) for k in range(self.dim)])

    def flux_load(self, flux) -> np.ndarray:
        """Load vector ``b_j = int F . grad phi_j`` for an element-wise constant flux ``F``.

        ``flux`` is a constant vector or an array ``element_shape + (d,)``.
        """
        flux = np.asarray(flux, float)
        if flux.shape == (self.dim,):
            flux = np.broadcast_to(flux, self.element_shape + (self.dim,))
        flux = flux.reshape(self.n_elements, self.dim)
        vol = self.element_volumes.ravel()
        data = np.zeros((self.n_elements, 2 ** self.dim))
        for k in range(self.dim):
            # int d_k phi_local over the element
            vecs = [np.array([0.5, 0.5])] * self.dim
            vecs = list(vecs)
            vecs[k] = np.array([-1.0, 1.0])
            local = _kron_all([v[:, None] for v in vecs]).ravel()
            data += (flux[:, k] * vol / self.widths_flat(k))[:, None] * local[None]
        out = np.zeros(self.n_nodes)
        np.add.at(out, self.element_nodes.ravel(), data.ravel())
        return out

    def widths_flat(self, k: int) -> np.ndarray:
        shape = [1] * self.dim
        shape[k] = -1
        return np.broadcast_to(self.widths[k].reshape(shape), self.element_shape).ravel()

    def _assemble(self, data: np.ndarray) -> sp.csr_matrix:
        nodes = self.element_nodes
        nloc = nodes.shape[1]
        rows = np.repeat(nodes, nloc, axis=1).ravel()
        cols = np.tile(nodes, (1, nloc)).ravel()
        mat = sp.coo_matrix((data.ravel(), (rows, cols)), shape=(self.n_nodes, self.n_nodes)).tocsr()
        mat.sum_duplicates()
        mat = ((mat + mat.T) * 0.5).tocsr()
        mat.sort_indices()
        return mat


@dataclass(eq=False)
class GridFunction:
    """Nodal values of a continuous multilinear function."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(self.grid.n_nodes)

    def __add__(self, other):
        if isinstance(other, GridFunction):
            self._check(other)
            return GridFunction(self.grid, self.values + other.values)
        return GridFunction(self.grid, self.values + other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, GridFunction):
            self._check(other)
            return GridFunction(self.grid, self.values - other.values)
        return GridFunction(self.grid, self.values - other)

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def __mul__(self, t):
        return GridFunction(self.grid, self.values * t)

    __rmul__ = __mul__

    def _check(self, other):
        if other.grid is not self.grid and other.grid != self.grid:
            raise ValueError("grid functions live on different grids")

    def restrict(self, sub: Grid) -> "GridFunction":
        """Values on the nodes of a sub-grid whose nodes are nodes of this grid."""
        idx = self.grid.node_index(sub.coords)
        return GridFunction(sub, self.values[idx])

    def extend(self, big: Grid) -> "GridFunction":
        """Extension by zero to a grid containing this grid's nodes."""
        idx = big.node_index(self.grid.coords)
        out = np.zeros(big.n_nodes)
        out[idx] = self.values
        return GridFunction(big, out)

    def mean(self) -> float:
        return float(self.grid.node_weights @ self.values) / self.grid.volume

    def gradients(self) -> np.ndarray:
        return self.grid.element_gradients(self.values)

    def mean_gradient(self) -> np.ndarray:
        g = self.gradients().reshape(-1, self.grid.dim)
        return self.grid.element_volumes.ravel() @ g / self.grid.volume

    def reshaped(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)


def element_coefficients(grid: Grid, coef) -> np.ndarray:
    """Per-element coefficient: scalar array, or ``element_shape + (d, d)``.

    ``coef`` may be a :class:`CoefficientField` (evaluated at element
    centres), a scalar, a constant ``d x d`` matrix or an explicit array.
    """
    if isinstance(coef, CoefficientField):
        return coef.values_at(grid.element_centers)
    arr = np.asarray(coef, dtype=float)
    if arr.ndim == 0:
        return np.full(grid.element_shape, float(arr))
    if arr.shape == (grid.dim, grid.dim):
        return np.broadcast_to(arr, grid.element_shape + (grid.dim, grid.dim)).copy()
    if arr.shape in (grid.element_shape, grid.element_shape + (grid.dim, grid.dim)):
        return arr
    raise ValueError(f"coefficient array of shape {arr.shape} does not fit grid {grid}")


@dataclass(eq=False)
class StiffnessOperator:
    """Symmetric stiffness matrix ``K[i, j] = int grad phi_i . a grad phi_j``."""

    matrix: sp.csr_matrix
    grid: Grid
    coefficients: np.ndarray
    symmetric: bool = True

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def isotropic(self) -> bool:
        return self.coefficients.shape == self.grid.element_shape

    def flux(self, values) -> np.ndarray:
        """Element-averaged flux ``a grad u`` (exact since ``a`` is constant per element)."""
        g = self.grid.element_gradients(values)
        if self.isotropic:
            return self.coefficients[..., None] * g
        return np.einsum("...ij,...j->...i", self.coefficients, g)

    def mean_flux(self, values) -> np.ndarray:
        f = self.flux(values).reshape(-1, self.grid.dim)
        return self.grid.element_volumes.ravel() @ f / self.grid.volume

    def coefficient_times(self, vec) -> np.ndarray:
        """Element-wise ``a e`` for a constant vector ``e``."""
        vec = np.asarray(vec, float)
        if self.isotropic:
            return self.coefficients[..., None] * vec
        return np.einsum("...ij,j->...i", self.coefficients, vec)

    def energy(self, u) -> float:
        u = u.values if isinstance(u, GridFunction) else np.asarray(u, float)
        return float(0.5 * u @ (self.matrix @ u))

    @cached_property
    def interior_block(self) -> sp.csr_matrix:
        idx = self.grid.interior
        return self.matrix[idx][:, idx].tocsr()

    @cached_property
    def interior_boundary_block(self) -> sp.csr_matrix:
        return self.matrix[self.grid.interior][:, self.grid.boundary].tocsr()


def assemble_stiffness(grid: Grid, coef) -> StiffnessOperator:
    """Exact stiffness matrix for a coefficient constant on each element."""
    a = element_coefficients(grid, coef)
    d = grid.dim
    n_el = grid.n_elements
    widths = [grid.widths_flat(k) for k in range(d)]
    iso = a.shape == grid.element_shape
    flat = a.reshape(n_el) if iso else a.reshape(n_el, d, d)
    data = np.zeros((n_el, 2 ** d, 2 ** d))
    for i in range(d):
        for j in range(d):
            if iso and i != j:
                continue
            coef_ij = flat if iso else flat[:, i, j]
            if not np.any(coef_ij):
                continue
            mats, scale = [], np.ones(n_el)
            for k in range(d):
                if k == i == j:
                    mats.append(_S)
                    scale = scale / widths[k]
                elif k == i:
                    mats.append(_D)
                elif k == j:
                    mats.append(_D.T)
                else:
                    mats.append(_M)
                    scale = scale * widths[k]
            data += (coef_ij * scale)[:, None, None] * _kron_all(mats)[None]
    return StiffnessOperator(grid._assemble(data), grid, a)


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------


def iteration_cap(n: int) -> int:
    return int(50 * math.sqrt(n) + 1000)


def pcg(A, b, *, rtol: float = RTOL, maxiter: int | None = None, project_mean: np.ndarray | None = None):
    """Jacobi-preconditioned conjugate gradients.

    ``project_mean`` (a weight vector ``w``) removes the component along the
    constant vector after every update, for singular systems whose kernel is
    spanned by constants.  Returns ``(x, iterations, relative_residual)``.
    """
    b = np.asarray(b, float)
    n = b.size
    maxiter = iteration_cap(n) if maxiter is None else maxiter
    bnorm = float(np.linalg.norm(b))
    x = np.zeros(n)
    if bnorm == 0.0:
        return x, 0, 0.0
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise SolverError("matrix has a nonpositive diagonal entry")
    dinv = 1.0 / diag
    r = b.copy()
    z = dinv * r
    p = z.copy()
    rz = float(r @ z)
    target = rtol * bnorm
    it = 0
    rnorm = bnorm
    while it < maxiter:
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0:
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        it += 1
        rnorm = float(np.linalg.norm(r))
        if rnorm <= target:
            break
        z = dinv * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    if project_mean is not None:
        x -= (project_mean @ x) / project_mean.sum()
    true = float(np.linalg.norm(b - A @ x)) / bnorm
    if true > max(RESIDUAL_LIMIT, 10 * rtol):
        raise SolverError(f"conjugate gradients stopped at relative residual {true:.3e} "
                          f"after {it} iterations", residual=true, iterations=it)
    return x, it, true


def solve_dirichlet(K: StiffnessOperator, boundary, rhs=None, *, rtol: float = RTOL) -> GridFunction:
    """Solve ``K u = rhs`` on interior nodes with ``u = boundary`` on the boundary.

    ``boundary`` is a :class:`GridFunction` (only boundary nodes are read) or
    a callable of coordinates; ``rhs`` is an assembled load vector.
    """
    grid = K.grid
    if callable(boundary):
        boundary = grid.interpolate(boundary)
    g = boundary.values if isinstance(boundary, GridFunction) else np.asarray(boundary, float)
    u = np.zeros(grid.n_nodes)
    u[grid.boundary] = g[grid.boundary]
    b = -(K.interior_boundary_block @ u[grid.boundary])
    if rhs is not None:
        rv = rhs.values if isinstance(rhs, GridFunction) else np.asarray(rhs, float)
        b = b + rv[grid.interior]
    if grid.interior.size:
        x, _, _ = pcg(K.interior_block, b, rtol=rtol)
        u[grid.interior] = x
    return GridFunction(grid, u)


def solve_neumann_free(K: StiffnessOperator, load, *, rtol: float = RTOL) -> GridFunction:
    """Mean-zero solution of the pure Neumann system ``K u = load``."""
    grid = K.grid
    b = load.values if isinstance(load, GridFunction) else np.asarray(load, float)
    total = math.fsum(b)
    scale = float(np.linalg.norm(b))
    if abs(total) > 1e-8 * max(scale, 1e-300) and scale > 0:
        raise CompatibilityError(f"load has nonzero total {total:.3e}; Neumann problem is incompatible")
    b = b - total / b.size
    x, _, _ = pcg(K.matrix, b, rtol=rtol, project_mean=grid.node_weights)
    return GridFunction(grid, x)


def residual_dirichlet(K: StiffnessOperator, u: GridFunction, rhs=None) -> float:
    """Relative 2-norm of the interior residual."""
    r = (K.matrix @ u.values)[K.grid.interior]
    b = np.zeros_like(r) if rhs is None else np.asarray(getattr(rhs, "values", rhs), float)[K.grid.interior]
    num = float(np.linalg.norm(b - r))
    scale = max(float(np.linalg.norm(b)), float(np.linalg.norm(K.interior_boundary_block @ u.values[K.grid.boundary])))
    return num / scale if scale > 0 else num
