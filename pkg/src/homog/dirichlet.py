"""Dirichlet problems with rapidly oscillating coefficients.

For ``eps = 3^-n`` the oscillating problem uses the coefficient
``a(x / eps)`` on a box ``U`` inside the unit cube; its grid has a node on
every eps-cell interface so the coefficient is constant on each element.
The homogenized problem replaces ``a(x / eps)`` by a constant matrix, and
the two-scale expansion adds eps-scaled correctors of the cube problem on
``box_n``, localized away from the boundary by a cutoff.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .cell import CellProblem
from .errors import ConfigError, ResolutionError, SolverError
from .field import CoefficientField, MarginalLaw, TriadicCube, sample_field, sample_seed
from .grid import (RESIDUAL_LIMIT, Grid, GridFunction, assemble_stiffness, residual_dirichlet,
                   solve_dirichlet)
from .norms import dual_norm, grad_l2, h1, l2
from .pool import ordered_map
from .stats import closed_form_abar, compute_omega, run_scale_study

MIN_COLLAR_NODES = 4
DEFAULT_R_GRID = (0.05, 0.1, 0.2, 0.4)


# ---------------------------------------------------------------------------
# boundary data and domains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundaryDatum:
    """Boundary function from a small closed-form catalog.

    ``affine``: ``p . x``; ``quadratic``: ``p . x + x^T Q x``;
    ``sine``: ``prod_k sin(pi x_k)``.
    """

    kind: str
    p: tuple = ()
    Q: tuple = ()

    @classmethod
    def affine(cls, p) -> "BoundaryDatum":
        return cls("affine", tuple(float(t) for t in np.atleast_1d(p)))

    @classmethod
    def quadratic(cls, p, Q) -> "BoundaryDatum":
        p = np.atleast_1d(np.asarray(p, float))
        Q = np.asarray(Q, float).reshape(p.size, p.size)
        return cls("quadratic", tuple(p.tolist()), tuple(map(tuple, Q.tolist())))

    @classmethod
    def sine(cls, dim: int) -> "BoundaryDatum":
        return cls("sine", (0.0,) * dim)

    @property
    def dim(self) -> int:
        return len(self.p)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        if self.kind == "affine":
            return x @ np.asarray(self.p)
        if self.kind == "quadratic":
            Q = np.asarray(self.Q)
            return x @ np.asarray(self.p) + np.einsum("...i,ij,...j->...", x, Q, x)
        return np.prod(np.sin(np.pi * x), axis=-1)

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        if self.kind == "affine":
            return np.broadcast_to(np.asarray(self.p), x.shape).copy()
        if self.kind == "quadratic":
            Q = np.asarray(self.Q)
            return np.asarray(self.p) + x @ (Q + Q.T).T
        s, c = np.sin(np.pi * x), np.cos(np.pi * x)
        out = np.empty_like(x)
        for k in range(x.shape[-1]):
            others = np.prod(np.delete(s, k, axis=-1), axis=-1)
            out[..., k] = np.pi * c[..., k] * others
        return out

    @property
    def is_affine(self) -> bool:
        return self.kind == "affine"

    def spec(self) -> str:
        if self.kind == "affine":
            return "affine:" + ",".join(repr(t) for t in self.p)
        if self.kind == "quadratic":
            q = [t for row in self.Q for t in row]
            return "quadratic:" + ",".join(repr(t) for t in self.p) + ";Q=" + ",".join(repr(t) for t in q)
        return f"sine:{self.dim}"

    @classmethod
    def parse(cls, text: str, dim: int) -> "BoundaryDatum":
        """``affine:1,0``, ``quadratic:1,0;Q=0,1,1,0``, ``sine``."""
        text = text.strip()
        kind, _, rest = text.partition(":")
        kind = kind.strip().lower()
        try:
            if kind == "affine":
                p = [float(t) for t in rest.split(",")] if rest else [1.0] + [0.0] * (dim - 1)
                out = cls.affine(p)
            elif kind == "quadratic":
                head, _, q = rest.partition(";")
                p = [float(t) for t in head.split(",")]
                q = q.strip()
                if not q.startswith("Q="):
                    raise ValueError("missing Q=")
                out = cls.quadratic(p, [float(t) for t in q[2:].split(",")])
            elif kind == "sine":
                out = cls.sine(dim)
            else:
                raise ValueError(f"unknown boundary datum kind {kind!r}")
        except ValueError as exc:
            raise ConfigError(f"invalid boundary datum {text!r}: {exc}") from exc
        if out.dim != dim:
            raise ConfigError(f"boundary datum {text!r} has dimension {out.dim}, expected {dim}")
        return out


@dataclass(frozen=True)
class Box:
    """Axis-aligned open box ``(lower, upper)`` inside the unit cube."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo, hi = np.asarray(self.lower, float), np.asarray(self.upper, float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ConfigError("box corners must be vectors of equal length")
        if np.any(lo >= hi):
            raise ConfigError("box must have positive side lengths")
        if np.any(lo < -0.5 - 1e-12) or np.any(hi > 0.5 + 1e-12):
            raise ConfigError("box must lie inside the unit cube (-1/2, 1/2)^d")

    @classmethod
    def symmetric(cls, half: float, dim: int) -> "Box":
        return cls((-half,) * dim, (half,) * dim)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(np.asarray(self.upper) - np.asarray(self.lower)))

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper)}


def default_domain(dim: int) -> Box:
    return Box.symmetric(0.45, dim)


def scale_of(eps: float) -> int:
    """``n`` with ``eps = 3^-n``; other values are rejected."""
    if not (0 < eps <= 1):
        raise ConfigError("eps must lie in (0, 1]")
    n = int(round(-math.log(eps, 3)))
    if abs(3.0 ** -n - eps) > 1e-12 * eps:
        raise ConfigError(f"eps = {eps} is not a power of 1/3")
    return n


def oscillating_grid(eps: float, U: Box, res: int) -> Grid:
    """Grid on ``U`` with spacing at most ``eps / res`` and a node on each eps-cell face."""
    if res < 1:
        raise ResolutionError("res must be at least 1")
    scale_of(eps)
    breaks = []
    for lo, hi in zip(U.lower, U.upper):
        k = np.arange(math.floor(lo / eps) - 1, math.ceil(hi / eps) + 1)
        breaks.append(((k + 0.5) * eps).tolist())
    return Grid.for_box(U.lower, U.upper, eps / res, breaks)


def _check_resolution(grid: Grid, eps: float, res: int) -> None:
    for k, ax in enumerate(grid.axes):
        if np.max(np.diff(ax)) > eps / res * (1 + 1e-9):
            raise ResolutionError(f"axis {k}: grid spacing exceeds eps/res = {eps / res:.3e}")
        faces = (np.arange(math.floor(ax[0] / eps), math.ceil(ax[-1] / eps)) + 0.5) * eps
        faces = faces[(faces > ax[0]) & (faces < ax[-1])]
        if faces.size and np.min(np.abs(ax[None, :] - faces[:, None]), axis=1).max() > 1e-12:
            raise ResolutionError(f"axis {k}: eps-cell interfaces are not grid nodes")


# ---------------------------------------------------------------------------
# solves
# ---------------------------------------------------------------------------


def _dirichlet(K, f: BoundaryDatum) -> GridFunction:
    u = solve_dirichlet(K, f)
    res = residual_dirichlet(K, u)
    if res > RESIDUAL_LIMIT:
        raise SolverError(f"Dirichlet residual {res:.2e} above {RESIDUAL_LIMIT:.0e}", residual=res)
    return u


def solve_oscillating(field: CoefficientField, eps: float, U: Box, f: BoundaryDatum, res: int = 4,
                      grid: Grid | None = None) -> GridFunction:
    """``u^eps`` solving ``-div a(x/eps) grad u = 0`` in ``U`` with ``u = f`` on the boundary."""
    grid = oscillating_grid(eps, U, res) if grid is None else grid
    _check_resolution(grid, eps, res)
    coef = field.values_at(grid.element_centers / eps)
    return _dirichlet(assemble_stiffness(grid, coef), f)


def solve_homogenized(abar, U: Box, f: BoundaryDatum, res: int = 4, grid: Grid | None = None,
                      h: float | None = None) -> GridFunction:
    """``u`` solving ``-div abar grad u = 0`` in ``U`` with ``u = f`` on the boundary."""
    abar = np.asarray(abar, float)
    if abar.ndim == 0:
        abar = float(abar) * np.eye(U.dim)
    if abar.shape != (U.dim, U.dim) or np.any(np.linalg.eigvalsh(0.5 * (abar + abar.T)) <= 0):
        raise ConfigError("homogenized matrix must be SPD of the domain's dimension")
    if grid is None:
        grid = Grid.for_box(U.lower, U.upper, h if h is not None else 1.0 / (9 * res))
    return _dirichlet(assemble_stiffness(grid, abar), f)


# ---------------------------------------------------------------------------
# correctors and the two-scale expansion
# ---------------------------------------------------------------------------


@dataclass
class Corrector:
    """``phi = v(., box_n, e_i) - e_i . x`` on the grid of ``box_n``."""

    direction: int
    n: int
    phi: GridFunction
    flux: np.ndarray  # element-wise a (e_i + grad phi)
    _interp: RegularGridInterpolator | None = dc_field(default=None, repr=False)

    def __call__(self, y) -> np.ndarray:
        if self._interp is None:
            g = self.phi.grid
            self._interp = RegularGridInterpolator(tuple(g.axes), self.phi.reshaped(), method="linear")
        y = np.asarray(y, float)
        return self._interp(y.reshape(-1, y.shape[-1])).reshape(y.shape[:-1])

    @property
    def boundary_max(self) -> float:
        g = self.phi.grid
        return float(np.max(np.abs(self.phi.values[g.boundary]))) if g.boundary.size else 0.0


def compute_correctors(field: CoefficientField, n: int, res: int = 4,
                       problem: CellProblem | None = None) -> list[Corrector]:
    prob = problem or CellProblem(field, TriadicCube.centered(n, field.dim), res)
    out = []
    for i in range(field.dim):
        e = np.zeros(field.dim)
        e[i] = 1.0
        v = prob.dirichlet_minimizer(e)
        phi = v - prob.grid.affine(e)
        out.append(Corrector(i, n, phi, prob.K.flux(v.values)))
    return out


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t ** 3 * (10.0 - 15.0 * t + 6.0 * t * t)


def cutoff(grid: Grid, r: float, lower=None, upper=None) -> GridFunction:
    """Product of quintic ramps: 0 within ``r`` of the boundary, 1 beyond ``2r``."""
    lower = grid.lower if lower is None else np.asarray(lower, float)
    upper = grid.upper if upper is None else np.asarray(upper, float)
    x = grid.coords
    eta = np.ones(grid.n_nodes)
    for k in range(grid.dim):
        eta *= _smoothstep((x[:, k] - lower[k] - r) / r) * _smoothstep((upper[k] - x[:, k] - r) / r)
    return GridFunction(grid, eta)


def _check_collar(grid: Grid, r: float) -> None:
    if not (0.0 < r < 1.0):
        raise ConfigError("cutoff radius must lie in (0, 1)")
    for k, ax in enumerate(grid.axes):
        lo, hi = ax[0], ax[-1]
        left = np.count_nonzero((ax >= lo + r - 1e-12) & (ax <= lo + 2 * r + 1e-12))
        right = np.count_nonzero((ax >= hi - 2 * r - 1e-12) & (ax <= hi - r + 1e-12))
        if min(left, right) < MIN_COLLAR_NODES:
            raise ResolutionError(f"cutoff collar of width {r} holds fewer than {MIN_COLLAR_NODES} nodes on axis {k}")


def nodal_gradient(u: GridFunction) -> np.ndarray:
    """Centred differences inside, one-sided on the boundary; shape ``(n_nodes, d)``."""
    g = u.grid
    vals = u.reshaped()
    if g.dim == 1:
        parts = [np.gradient(vals, g.axes[0], edge_order=1)]
    else:
        parts = np.gradient(vals, *g.axes, edge_order=1)
    return np.stack([p.ravel() for p in parts], axis=-1)


def two_scale_expansion(u: GridFunction, correctors: list[Corrector], eps: float, r: float) -> GridFunction:
    """``w = u + eps eta_r sum_i d_i u phi_i(x / eps)``."""
    grid = u.grid
    n = scale_of(eps)
    if any(c.n != n for c in correctors):
        raise ConfigError("corrector scale does not match eps")
    if len(correctors) != grid.dim:
        raise ConfigError("need one corrector per coordinate direction")
    _check_collar(grid, r)
    eta = cutoff(grid, r).values
    du = nodal_gradient(u)
    y = grid.coords / eps
    corr = np.zeros(grid.n_nodes)
    for c in correctors:
        corr += du[:, c.direction] * c(y)
    return GridFunction(grid, u.values + eps * eta * corr)


# ---------------------------------------------------------------------------
# error diagnostics
# ---------------------------------------------------------------------------


def psi_value(correctors: list[Corrector], abar, eps: float) -> float:
    """``sum_i (eps ||phi_i||_L2 + eps ||a(e_i + grad phi_i) - abar e_i||_H^-1)^2`` on ``box_n``.

    Norms are the normalized ones on ``box_n``; the factor ``eps`` carries
    them to ``eps box_n``.
    """
    abar = np.asarray(abar, float)
    total = 0.0
    for c in correctors:
        g = c.phi.grid
        resid = c.flux - abar[:, c.direction]
        total += (eps * l2(c.phi) + eps * dual_norm(g, resid, underline=True)) ** 2
    return total


def phi_value(Lam: float, lam: float, eps: float, omega: float) -> float:
    return (math.sqrt((Lam ** 3 + Lam) / lam) * eps
            + (math.sqrt((Lam ** 2 + 1.0) / lam) + 1.0) * math.sqrt(max(omega, 0.0)))


def gradient_norm(f: BoundaryDatum, grid: Grid, exponent: float = 3.0) -> float:
    """Normalized ``L^exponent`` norm of ``grad f`` by the element-centre rule."""
    g = f.gradient(grid.element_centers).reshape(grid.n_elements, -1)
    w = grid.element_volumes.ravel() / grid.volume
    return float(w @ np.linalg.norm(g, axis=1) ** exponent) ** (1.0 / exponent)


def rhs_shape(Lam: float, lam: float, grad_f: float, r: float, Phi: float, dim: int, b: float = 0.5) -> float:
    """Right side of the error bound without its constant."""
    return (Lam + 1.0) / lam * grad_f * (r ** b + r ** -(2.0 + dim / 2.0) * Phi)


@dataclass
class DirichletReport:
    sample: int
    seed: int
    eps: float
    n: int
    r: float
    domain: Box
    datum: str
    l2_error: float
    h1_error: float
    h1_two_scale: float
    grad_two_scale: float
    psi: float
    phi: float
    omega: float
    rhs: float
    lam: float
    Lam: float
    runtime_ms: float

    def row(self) -> dict:
        return {"seed": self.seed, "eps": self.eps, "r": self.r, "l2_error": self.l2_error,
                "h1_error": self.h1_error, "h1_two_scale": self.h1_two_scale,
                "grad_two_scale": self.grad_two_scale, "psi": self.psi, "phi": self.phi,
                "omega": self.omega, "rhs": self.rhs, "lam": self.lam, "Lam": self.Lam,
                "runtime_ms": self.runtime_ms}


def _sample_case(args) -> list[DirichletReport]:
    (law, dim, U, f_spec, n, n_max, r_grid, res, master_seed, index, abar, with_omega, b, collar_skip) = args
    t0 = time.perf_counter()
    seed = sample_seed(master_seed, index)
    fld = sample_field(law, seed, TriadicCube.centered(n_max, dim))
    f = BoundaryDatum.parse(f_spec, dim)
    eps = 3.0 ** -n
    grid = oscillating_grid(eps, U, res)
    ueps = solve_oscillating(fld, eps, U, f, res, grid)
    u = solve_homogenized(abar, U, f, res, grid)
    cube = TriadicCube.centered(n, dim)
    prob = CellProblem(fld, cube, res)
    correctors = compute_correctors(fld, n, res, prob)
    psi = psi_value(correctors, abar, eps)
    omega = compute_omega(fld, n, abar, res) if with_omega else math.nan
    Phi = phi_value(prob.Lam, prob.lam, eps, omega) if with_omega else math.nan
    gf = gradient_norm(f, grid)
    diff = ueps - u
    l2e, h1e = l2(diff), h1(diff)
    base_ms = (time.perf_counter() - t0) * 1e3
    out = []
    for r in r_grid:
        t1 = time.perf_counter()
        try:
            w = two_scale_expansion(u, correctors, eps, r)
            h1w, gw = h1(ueps - w), grad_l2(ueps - w)
        except ResolutionError:
            if not collar_skip:
                raise
            h1w = gw = math.nan
        rhs = rhs_shape(prob.Lam, prob.lam, gf, r, Phi, dim, b) if with_omega else math.nan
        out.append(DirichletReport(index, seed, eps, n, r, U, f.spec(), l2e, h1e, h1w, gw, psi, Phi, omega, rhs,
                                   prob.lam, prob.Lam, base_ms + (time.perf_counter() - t1) * 1e3))
    return out


@dataclass
class ErrorAggregate:
    n: int
    eps: float
    N: int
    mean_l2: float
    mean_l2_sq: float
    se_l2_sq: float
    moment_p1: float
    moment_p2: float
    mean_h1: float
    two_scale_ratio_median: dict
    two_scale_pass_fraction: dict


@dataclass
class ExperimentResult:
    reports: list
    aggregates: list
    abar: np.ndarray
    abar_source: str
    decreasing: list
    non_increasing: bool
    strictly_decreasing: bool

    def rows(self) -> list[dict]:
        return [rep.row() for rep in self.reports]


def _mean(x) -> float:
    return math.fsum(x) / len(x)


def _se(x) -> float:
    x = np.asarray(x, float)
    return float(np.std(x, ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.nan


def resolve_abar(law: MarginalLaw, dim: int, res: int, master_seed: int, abar=None) -> tuple[np.ndarray, str]:
    if abar is not None:
        a = np.asarray(abar, float)
        return (float(a) * np.eye(dim) if a.ndim == 0 else a), "given"
    a = closed_form_abar(law, dim)
    if a is not None:
        return a, "closed_form"
    st = run_scale_study(law, 2, 20, res, master_seed ^ 0xABA, dim)
    return 0.5 * (st.mean_a + st.mean_a.T), "scale_study_n2"


def error_experiment(law: MarginalLaw, U: Box | None, f: BoundaryDatum | str, n_range, r_grid=DEFAULT_R_GRID,
                     N: int = 30, res: int = 4, master_seed: int = 0, dim: int = 2, abar=None,
                     workers: int = 1, with_omega: bool = True, b: float = 0.5,
                     improvement: float = 0.5) -> ExperimentResult:
    """Homogenization error over samples, scales ``eps = 3^-n`` and cutoff radii."""
    if N < 2:
        raise ConfigError("N must be at least 2")
    U = default_domain(dim) if U is None else U
    if U.dim != dim:
        raise ConfigError("domain dimension differs from dim")
    f_spec = f.spec() if isinstance(f, BoundaryDatum) else BoundaryDatum.parse(f, dim).spec()
    n_range = sorted(int(n) for n in n_range)
    if not n_range or n_range[0] < 0:
        raise ConfigError("n_range must hold nonnegative scales")
    r_grid = tuple(float(r) for r in r_grid)
    abar_m, source = resolve_abar(law, dim, res, master_seed, abar)
    n_max = n_range[-1]
    tasks = [(law, dim, U, f_spec, n, n_max, r_grid, res, master_seed, i, abar_m, with_omega, b, True)
             for n in n_range for i in range(N)]
    chunks = ordered_map(_sample_case, tasks, workers)
    reports = [rep for chunk in chunks for rep in chunk]

    aggregates, per_n = [], []
    for k, n in enumerate(n_range):
        block = chunks[k * N:(k + 1) * N]
        e = np.array([c[0].l2_error for c in block])
        per_n.append(e)
        ratio_med, pass_frac = {}, {}
        for j, r in enumerate(r_grid):
            ratios = np.array([c[j].h1_two_scale / c[j].h1_error if c[j].h1_error > 0 else 0.0 for c in block])
            ok = ratios[np.isfinite(ratios)]
            ratio_med[r] = float(np.median(ok)) if ok.size else math.nan
            pass_frac[r] = float(np.mean(ok <= improvement)) if ok.size else math.nan
        aggregates.append(ErrorAggregate(
            n, 3.0 ** -n, N, _mean(e), _mean(e ** 2), _se(e ** 2), _mean(e), math.sqrt(_mean(e ** 2)),
            _mean([c[0].h1_error for c in block]), ratio_med, pass_frac))
    decreasing, non_inc = [], True
    for a, b2 in zip(per_n[:-1], per_n[1:]):
        d = a ** 2 - b2 ** 2
        m, se = _mean(d), _se(d)
        decreasing.append(bool(m > 0))
        if m < -2.0 * se:
            non_inc = False
    return ExperimentResult(reports, aggregates, abar_m, source, decreasing, non_inc, all(decreasing))


# ---------------------------------------------------------------------------
# one-dimensional closed form
# ---------------------------------------------------------------------------


def closed_form_1d(field: CoefficientField, eps: float, U: Box, f: BoundaryDatum):
    """Exact 1-d solution: breakpoints and values (piecewise linear between them)."""
    lo, hi = float(U.lower[0]), float(U.upper[0])
    k = np.arange(math.floor(lo / eps) - 1, math.ceil(hi / eps) + 1)
    faces = (k + 0.5) * eps
    x = np.unique(np.concatenate([[lo, hi], faces[(faces > lo) & (faces < hi)]]))
    mids = 0.5 * (x[:-1] + x[1:]) / eps
    a = field.values_at(mids[:, None]).astype(float)
    R = np.diff(x) / a
    flo, fhi = float(f(np.array([lo]))), float(f(np.array([hi])))
    c = (fhi - flo) / math.fsum(R)
    vals = flo + c * np.concatenate([[0.0], np.cumsum(R)])
    vals[-1] = fhi
    return x, vals


def closed_form_1d_error(field: CoefficientField, eps: float, U: Box, f: BoundaryDatum) -> float:
    """Exact normalized ``L2`` distance between ``u^eps`` and the homogenized 1-d solution.

    In one dimension any constant coefficient gives the linear interpolant
    of the boundary values, so the homogenized matrix does not enter.
    """
    x, ue = closed_form_1d(field, eps, U, f)
    lin = ue[0] + (ue[-1] - ue[0]) * (x - x[0]) / (x[-1] - x[0])
    d = ue - lin
    h = np.diff(x)
    total = math.fsum(h * (d[:-1] ** 2 + d[:-1] * d[1:] + d[1:] ** 2) / 3.0)
    return math.sqrt(total / (x[-1] - x[0]))
