"""Independent reference computations used by the tests.

Nothing here reuses the package's assembly or solvers: stiffness matrices
are built element by element with Gauss quadrature and solved densely, the
multiscale sum is re-evaluated with a different loop order, and the 1-d
harmonic-mean error is enumerated over every configuration.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
import scipy.linalg as sla

from homog.cell import CellProblem
from homog.field import MarginalLaw, TriadicCube, sample_field
from homog.grid import Grid, GridFunction

GAUSS = (np.array([-1.0, 1.0]) / math.sqrt(3.0) + 1.0) / 2.0  # on [0, 1], weights 1/2


def _shape_grads(xi, h):
    """Gradients of the 2^d multilinear shape functions at reference point ``xi``."""
    d = len(xi)
    out = []
    for corner in itertools.product((0, 1), repeat=d):
        g = np.empty(d)
        for k in range(d):
            prod = 1.0
            for j in range(d):
                if j == k:
                    continue
                prod *= xi[j] if corner[j] else 1.0 - xi[j]
            g[k] = (1.0 if corner[k] else -1.0) / h[k] * prod
        out.append(g)
    return np.array(out)


def dense_stiffness(grid: Grid, coef) -> tuple[np.ndarray, np.ndarray]:
    """Dense stiffness matrix and the load ``int q . grad phi`` columns for unit ``q``.

    ``coef`` maps an element centre to a scalar or a d x d matrix.
    """
    d = grid.dim
    shape = grid.shape
    K = np.zeros((grid.n_nodes, grid.n_nodes))
    loads = np.zeros((grid.n_nodes, d))
    strides = np.array([int(np.prod(shape[k + 1:])) for k in range(d)])
    for idx in itertools.product(*[range(s - 1) for s in shape]):
        lo = np.array([grid.axes[k][idx[k]] for k in range(d)])
        h = np.array([grid.axes[k][idx[k] + 1] - grid.axes[k][idx[k]] for k in range(d)])
        a = np.asarray(coef(lo + h / 2), float)
        A = a * np.eye(d) if a.ndim == 0 else a
        nodes = [int(np.dot(np.array(idx) + np.array(c), strides)) for c in itertools.product((0, 1), repeat=d)]
        Ke = np.zeros((2 ** d, 2 ** d))
        Le = np.zeros((2 ** d, d))
        w = np.prod(h) / 2 ** d
        for xi in itertools.product(GAUSS, repeat=d):
            G = _shape_grads(np.array(xi), h)
            Ke += w * G @ A @ G.T
            Le += w * G
        K[np.ix_(nodes, nodes)] += Ke
        loads[nodes] += Le
    return K, loads


def dense_dirichlet(K: np.ndarray, grid: Grid, boundary_values: np.ndarray) -> np.ndarray:
    bmask = grid.boundary_mask.ravel()
    inner = ~bmask
    u = np.where(bmask, boundary_values, 0.0)
    rhs = -K[np.ix_(inner, bmask)] @ u[bmask]
    u[inner] = sla.lu_solve(sla.lu_factor(K[np.ix_(inner, inner)]), rhs)
    return u


def dense_neumann(K: np.ndarray, load: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Saddle-point solve with the constraint ``weights . u = 0``."""
    n = K.shape[0]
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = K
    M[:n, n] = weights
    M[n, :n] = weights
    rhs = np.concatenate([load, [0.0]])
    return sla.lu_solve(sla.lu_factor(M), rhs)[:n]


def lumped_weights(grid: Grid) -> np.ndarray:
    """``int phi_j`` from the tensor-product trapezoid weights."""
    ws = []
    for ax in grid.axes:
        h = np.diff(ax)
        w = np.zeros(ax.size)
        w[:-1] += h / 2
        w[1:] += h / 2
        ws.append(w)
    out = ws[0]
    for w in ws[1:]:
        out = np.multiply.outer(out, w)
    return out.ravel()


def brute_force_omega(field, n: int, abar_ref, res: int) -> float:
    """Reverse loop order, no caching and no constant-cube shortcut."""
    abar_ref = np.asarray(abar_ref, float)
    d = field.dim
    cube = TriadicCube.centered(n, d)
    terms = {}
    for m in reversed(range(n + 1)):
        subs = list(reversed(cube.subcubes(m)))
        acc = []
        for sub in subs:
            a = CellProblem(field, sub, res).matrices().a_U
            acc.append(float(np.max(np.abs(np.linalg.eigvalsh(a - abar_ref)))))
        acc.sort()
        terms[m] = 3.0 ** (-(n - m)) * math.sqrt(3.0 ** (-(n - m) * d) * math.fsum(acc))
    return math.fsum(terms[m] for m in range(n + 1)) ** 2


def enumerated_harmonic_error(a1: float, a2: float, prob: float, n: int) -> float:
    """``E|h - H|^2`` by summing over all ``2^(3^n)`` cell configurations."""
    N = 3 ** n
    h = 1.0 / (prob / a1 + (1 - prob) / a2)
    total = []
    for cfg in itertools.product((0, 1), repeat=N):
        k = sum(cfg)
        weight = prob ** k * (1 - prob) ** (N - k)
        H = N / (k / a1 + (N - k) / a2)
        total.append(weight * (H - h) ** 2)
    return math.fsum(total)


# ---------------------------------------------------------------------------
# deterministic inputs for the norm diagnostics
# ---------------------------------------------------------------------------


def mpi_inputs(count: int = 100, res: int = 4):
    """``count`` functions on triadic cubes, alternating 1-d (n=3) and 2-d (n=2)."""
    grids = {1: Grid.for_cube(TriadicCube.centered(3, 1), res), 2: Grid.for_cube(TriadicCube.centered(2, 2), res)}
    rng = np.random.default_rng(20240)
    out = []
    for k in range(count):
        d = 1 + k % 2
        g = grids[d]
        n = 3 if d == 1 else 2
        kind = (k // 2) % 4
        if kind == 0:
            v = rng.normal(size=g.n_nodes)
        elif kind == 1:
            freq, phase, amp = rng.uniform(0, 3), rng.uniform(0, 6), rng.uniform(0.1, 3)
            v = amp * np.cos(freq * g.coords[:, 0] + phase)
        elif kind == 2:
            v = rng.normal(size=g.n_nodes) + 3 * rng.normal()
        else:
            v = np.cumsum(rng.normal(size=g.shape), axis=0).ravel()
        if (k // 8) % 2:
            v = v.copy()
            v[g.boundary] = 0.0
        out.append((GridFunction(g, v), n))
    return out


def caccioppoli_inputs(count: int = 100, res: int = 4):
    """``count`` discrete a-harmonic functions on ``(-3r, 3r)^d`` for random two-phase fields."""
    from homog.grid import assemble_stiffness
    from homog.norms import caccioppoli_grid
    import scipy.sparse.linalg as spla

    law = MarginalLaw.two_point(1.0, 4.0, 0.5)
    out = []
    for s in range(count):
        d = 1 + s % 2
        r = (0.5, 1.0, 1.5)[s % 3]
        fld = sample_field(law, 1000 + s, TriadicCube.centered(2, d))
        g = caccioppoli_grid(r, d, res)
        K = assemble_stiffness(g, fld)
        rng = np.random.default_rng(s)
        if s % 4 < 2:
            B = rng.normal(size=g.boundary.size)
        else:
            B = np.cos(rng.uniform(0, 4) * g.coords[g.boundary, 0] + rng.uniform(0, 6))
        u = np.zeros(g.n_nodes)
        u[g.boundary] = B
        u[g.interior] = spla.spsolve(K.interior_block.tocsc(), -(K.interior_boundary_block @ B))
        out.append((fld, r, GridFunction(g, u)))
    return out
