"""Subadditive energies of a coefficient field on a cube.

For a bounded box ``U`` and vectors ``p, q``:

* ``mu(U, p)``: minimal Dirichlet energy density ``avg 1/2 grad v . a grad v``
  over ``v`` with boundary values ``p . x``;
* ``mu_star(U, q)``: ``sup avg(-1/2 grad u . a grad u + q . grad u)`` over
  a-harmonic ``u`` (attained by the mean-zero Neumann solution with flux
  data ``q``);
* ``J(U, p, q) = mu + mu_star - p . q``, the duality defect.

Both energies are quadratic forms, ``mu = 1/2 p . a(U) p`` and
``mu_star = 1/2 q . a_*(U)^{-1} q``.  Everything is computed on nested
multilinear grids, where the algebraic identities (quadratic form
structure, subadditivity over a partition, quadratic response) hold exactly
up to solver tolerance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import cached_property

import numpy as np
import scipy.sparse.linalg as sla

from .errors import ConfigError, ConsistencyError
from .field import CoefficientField, TriadicCube, lambda_extremes
from .grid import (Grid, GridFunction, StiffnessOperator, assemble_stiffness,
                   solve_dirichlet, solve_neumann_free)

FLUX_SYMMETRY_TOL = 1e-8
CROSS_CHECK_TOL = 1e-6


def _direction(v, dim: int) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size == 1 and dim > 1:
        raise ConfigError(f"direction must have {dim} components")
    if v.size != dim:
        raise ConfigError(f"direction must have {dim} components, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise ConfigError("directions must be finite")
    return v


def _key(v: np.ndarray) -> tuple:
    return tuple(float(x) for x in v)


@dataclass(eq=False)
class Optimizer:
    """An optimizer of one of the variational problems on a cube."""

    kind: str
    p: np.ndarray
    q: np.ndarray
    u: GridFunction


@dataclass(frozen=True, eq=False)
class QuadraticReport:
    """``a(U)`` and ``a_*(U)`` of one sample, with evaluators for the energies."""

    cube: TriadicCube
    res: int
    a_U: np.ndarray
    a_star_U: np.ndarray
    lam: float
    Lam: float

    @cached_property
    def a_star_inv(self) -> np.ndarray:
        inv = np.linalg.inv(self.a_star_U)
        return 0.5 * (inv + inv.T)

    def mu(self, p) -> float:
        p = np.asarray(p, float)
        return 0.5 * float(p @ self.a_U @ p)

    def mu_star(self, q) -> float:
        q = np.asarray(q, float)
        return 0.5 * float(q @ self.a_star_inv @ q)

    def J(self, p, q) -> float:
        return self.mu(p) + self.mu_star(q) - float(np.dot(p, q))

    def to_json(self) -> dict:
        return {"cube": self.cube.to_dict(), "res": self.res, "a": self.a_U.tolist(),
                "a_star": self.a_star_U.tolist(), "lam": self.lam, "Lam": self.Lam}

    @classmethod
    def from_json(cls, doc) -> "QuadraticReport":
        return cls(TriadicCube.from_dict(doc["cube"]), int(doc["res"]), np.array(doc["a"]),
                   np.array(doc["a_star"]), float(doc["lam"]), float(doc["Lam"]))


class CellProblem:
    """Assembled operator of ``field`` on ``cube`` with cached solves."""

    def __init__(self, field: CoefficientField, cube: TriadicCube, res: int = 4):
        if cube.dim != field.dim:
            raise ConfigError("cube and field dimensions differ")
        self.field = field
        self.cube = cube
        self.res = res
        self.Lam, self.lam = lambda_extremes(field, cube)
        self.grid = Grid.for_cube(cube, res)
        self.K: StiffnessOperator = assemble_stiffness(self.grid, field)
        self._dirichlet: dict = {}
        self._neumann: dict = {}

    @property
    def dim(self) -> int:
        return self.cube.dim

    @property
    def volume(self) -> float:
        return self.grid.volume

    # -- optimizers ----------------------------------------------------
    def dirichlet_minimizer(self, p) -> GridFunction:
        """``v(., U, p)``: the a-harmonic function with boundary values ``p . x``."""
        p = _direction(p, self.dim)
        key = _key(p)
        if key not in self._dirichlet:
            if not np.any(p):
                self._dirichlet[key] = self.grid.zeros()
            else:
                self._dirichlet[key] = solve_dirichlet(self.K, self.grid.affine(p))
        return self._dirichlet[key]

    def dual_maximizer(self, q) -> GridFunction:
        """Mean-zero maximizer of the dual problem for the slope ``q``."""
        q = _direction(q, self.dim)
        key = _key(q)
        if key not in self._neumann:
            if not np.any(q):
                self._neumann[key] = self.grid.zeros()
            else:
                self._neumann[key] = solve_neumann_free(self.K, self.grid.flux_load(q))
        return self._neumann[key]

    def j_maximizer(self, p, q) -> Optimizer:
        """``v(., U, p, q) = (dual maximizer for q) - v(., U, p)``."""
        p, q = _direction(p, self.dim), _direction(q, self.dim)
        u = self.dual_maximizer(q) - self.dirichlet_minimizer(p)
        return Optimizer("j_maximizer", p, q, u)

    # -- energies ------------------------------------------------------
    def mu(self, p) -> tuple[float, Optimizer]:
        p = _direction(p, self.dim)
        v = self.dirichlet_minimizer(p)
        value = self.K.energy(v) / self.volume if np.any(p) else 0.0
        return value, Optimizer("dirichlet_minimizer", p, np.zeros(self.dim), v)

    def mu_star(self, q) -> tuple[float, Optimizer]:
        q = _direction(q, self.dim)
        u = self.dual_maximizer(q)
        if not np.any(q):
            value = 0.0
        else:
            value = (-self.K.energy(u) + float(self.grid.flux_load(q) @ u.values)) / self.volume
        return value, Optimizer("dual_maximizer", np.zeros(self.dim), q, u)

    def J(self, p, q) -> float:
        p, q = _direction(p, self.dim), _direction(q, self.dim)
        return self.mu(p)[0] + self.mu_star(q)[0] - float(p @ q)

    def J_energy(self, p, q) -> float:
        """``avg 1/2 grad v . a grad v`` for ``v = v(., U, p, q)``."""
        return self.K.energy(self.j_maximizer(p, q).u) / self.volume

    # -- matrices ------------------------------------------------------
    def _polarize(self, energy) -> np.ndarray:
        d = self.dim
        e = np.eye(d)
        out = np.zeros((d, d))
        for i in range(d):
            out[i, i] = 2.0 * energy(e[i])
        for i in range(d):
            for j in range(i + 1, d):
                diag = (e[i] + e[j]) / math.sqrt(2.0)
                out[i, j] = out[j, i] = 2.0 * energy(diag) - 0.5 * (out[i, i] + out[j, j])
        return out

    def flux_matrix(self) -> np.ndarray:
        """Columns ``avg a grad v(., U, e_i)``; equals ``a(U)``."""
        e = np.eye(self.dim)
        return np.stack([self.K.mean_flux(self.dirichlet_minimizer(e[i]).values) for i in range(self.dim)], axis=1)

    def gradient_matrix(self) -> np.ndarray:
        """Columns ``avg grad v(., U, 0, e_i)``; equals ``a_*(U)^{-1}``."""
        e = np.eye(self.dim)
        return np.stack([self.dual_maximizer(e[i]).mean_gradient() for i in range(self.dim)], axis=1)

    def matrices(self, cross_check: bool = True) -> QuadraticReport:
        a = self._polarize(lambda p: self.mu(p)[0])
        a_star_inv = self._polarize(lambda q: self.mu_star(q)[0])
        if cross_check:
            scale_a = max(self.Lam, 1.0)
            scale_s = max(1.0 / self.lam, 1.0)
            for name, direct, poly, scale in (("a(U)", self.flux_matrix(), a, scale_a),
                                              ("a_*(U)^-1", self.gradient_matrix(), a_star_inv, scale_s)):
                asym = float(np.max(np.abs(direct - direct.T)))
                if asym > FLUX_SYMMETRY_TOL * scale:
                    raise ConsistencyError(f"averaged-flux matrix for {name} is asymmetric by {asym:.3e}")
                gap = float(np.max(np.abs(direct - poly)))
                if gap > CROSS_CHECK_TOL * scale:
                    raise ConsistencyError(f"{name}: polarization and flux average differ by {gap:.3e}")
        a_star = np.linalg.inv(a_star_inv)
        a_star = 0.5 * (a_star + a_star.T)
        return QuadraticReport(self.cube, self.res, a, a_star, self.lam, self.Lam)

    # -- harmonic functions --------------------------------------------
    @cached_property
    def _interior_lu(self):
        return sla.splu(self.K.interior_block.tocsc())

    def harmonic_extension(self, boundary_values: np.ndarray) -> np.ndarray:
        """Discrete a-harmonic extensions of boundary data (columns of a matrix)."""
        g = self.grid
        B = np.atleast_2d(np.asarray(boundary_values, float).T).T
        if B.shape[0] != g.boundary.size:
            raise ValueError("boundary data must have one row per boundary node")
        out = np.zeros((g.n_nodes, B.shape[1]))
        out[g.boundary] = B
        if g.interior.size:
            rhs = -(self.K.interior_boundary_block @ B)
            out[g.interior] = self._interior_lu.solve(np.asarray(rhs))
        return out


def mu(field, cube, p, res: int = 4):
    return CellProblem(field, cube, res).mu(p)


def mu_star(field, cube, q, res: int = 4):
    return CellProblem(field, cube, res).mu_star(q)


def J(field, cube, p, q, res: int = 4) -> float:
    return CellProblem(field, cube, res).J(p, q)


def j_maximizer(field, cube, p, q, res: int = 4) -> Optimizer:
    return CellProblem(field, cube, res).j_maximizer(p, q)


def matrices(field, cube, res: int = 4) -> QuadraticReport:
    return CellProblem(field, cube, res).matrices()


# ---------------------------------------------------------------------------
# lemma diagnostics
# ---------------------------------------------------------------------------

MATRIX_DISTANCE_C = math.sqrt(2.0)


def default_probes(dim: int, count: int = 6, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Fixed axis probes followed by random pairs in the unit ball."""
    e = np.eye(dim)
    probes = [(e[0], np.zeros(dim)), (np.zeros(dim), e[0]), (e[0], e[0]), (e[-1], 0.5 * e[0])]
    rng = np.random.default_rng(seed)
    while len(probes) < count:
        p, q = rng.normal(size=dim), rng.normal(size=dim)
        p *= rng.uniform() / np.linalg.norm(p)
        q *= rng.uniform() / np.linalg.norm(q)
        probes.append((p, q))
    return probes[:count]


@dataclass
class LemmaDiagnostics:
    cube: TriadicCube
    res: int
    probes: list
    subadditivity_slack: list
    quadratic_response_lhs: list
    quadratic_response_rhs: list
    quadratic_response_residual: list
    matrix_distance_lhs: float
    matrix_distance_rhs: float
    matrix_distance_C: float
    first_variation_residual: float
    first_variation_tests: int
    extra: dict = dc_field(default_factory=dict)

    def passed(self, slack_tol=1e-6, qr_tol=1e-5, fv_tol=1e-6) -> bool:
        return (min(self.subadditivity_slack) >= -slack_tol
                and max(self.quadratic_response_residual) <= qr_tol
                and self.matrix_distance_lhs <= self.matrix_distance_rhs + 1e-10
                and self.first_variation_residual <= fv_tol)


def sup_J_along(report: QuadraticReport, a_tilde) -> tuple[float, np.ndarray]:
    """``sup_{|p| <= 1} J(U, p, a_tilde p)`` and a maximizing ``p``.

    ``J(U, p, A p) = 1/2 p . (a + A a_*^{-1} A - 2A) p`` for symmetric ``A``,
    so the supremum is half the top eigenvalue (or 0 if it is negative).
    """
    A = np.asarray(a_tilde, float)
    form = report.a_U + A @ report.a_star_inv @ A - 2.0 * A
    w, v = np.linalg.eigh(0.5 * (form + form.T))
    return max(0.5 * float(w[-1]), 0.0), v[:, -1]


def first_variation_residual(prob: CellProblem, p, q, max_tests: int | None = 64, seed: int = 0) -> tuple[float, int]:
    """Relative defect of the first-variation identity on discrete a-harmonic tests.

    For each test ``w`` (harmonic extension of a boundary nodal basis
    function) compare ``avg grad w . a grad v`` with
    ``avg(-p . a grad w + q . grad w)``.
    """
    g = prob.grid
    nb = g.boundary.size
    if max_tests is None or nb <= max_tests:
        pick = np.arange(nb)
    else:
        pick = np.sort(np.random.default_rng(seed).choice(nb, size=max_tests, replace=False))
    B = np.zeros((nb, pick.size))
    B[pick, np.arange(pick.size)] = 1.0
    W = prob.harmonic_extension(B)
    v = prob.j_maximizer(p, q).u.values
    lhs = W.T @ (prob.K.matrix @ v)
    q = np.asarray(q, float)
    p = np.asarray(p, float)
    t_p = -(prob.K.matrix @ g.affine(p).values) @ W
    t_q = g.flux_load(q) @ W
    rhs = t_p + t_q
    # relative to the terms that cancel, so exact cancellation is not noise / noise
    scale = max(float(np.max(np.abs(lhs))), float(np.max(np.abs(t_p))), float(np.max(np.abs(t_q))), 1e-300)
    if not np.any(p) and not np.any(q):
        return float(np.max(np.abs(lhs))), pick.size
    return float(np.max(np.abs(lhs - rhs))) / scale, pick.size


def verify_lemma_properties(field, cube: TriadicCube, res: int = 4, probes=None,
                            a_tilde=None, fv_tests: int | None = 64) -> LemmaDiagnostics:
    """Check subadditivity, quadratic response, the matrix-distance bound and
    the first variation on ``cube`` and its children."""
    if cube.scale < 1:
        raise ConfigError("lemma diagnostics need a cube of scale >= 1")
    parent = CellProblem(field, cube, res)
    children = [CellProblem(field, c, res) for c in cube.children()]
    weights = [c.volume / parent.volume for c in children]
    probes = default_probes(cube.dim) if probes is None else probes
    slack, lhs_list, rhs_list, resid = [], [], [], []
    for p, q in probes:
        Jp = parent.J(p, q)
        vU = parent.j_maximizer(p, q).u
        Jc, lhs = [], 0.0
        for w, child in zip(weights, children):
            Jc.append(child.J(p, q))
            diff = vU.restrict(child.grid) - child.j_maximizer(p, q).u
            lhs += w * child.K.energy(diff) / child.volume
        mean_child = math.fsum(w * j for w, j in zip(weights, Jc))
        rhs = mean_child - Jp
        slack.append(rhs)
        lhs_list.append(lhs)
        rhs_list.append(rhs)
        # mu + mu* of the probe sets the scale; J itself may vanish identically
        p_, q_ = np.asarray(p, float), np.asarray(q, float)
        scale = max(abs(lhs), abs(rhs), abs(Jp), abs(mean_child),
                    0.5 * parent.Lam * float(p_ @ p_) + 0.5 * float(q_ @ q_) / parent.lam)
        resid.append(abs(lhs - rhs) / scale if scale > 0 else 0.0)
    report = parent.matrices()
    a_tilde = report.a_U if a_tilde is None else np.asarray(a_tilde, float)
    sup_j, _ = sup_J_along(report, a_tilde)
    dist = float(np.linalg.norm(report.a_U - a_tilde, 2))
    bound = MATRIX_DISTANCE_C * math.sqrt(report.Lam) * math.sqrt(sup_j)
    fv = 0.0
    tests = 0
    for p, q in probes:
        r, tests = first_variation_residual(parent, p, q, fv_tests)
        fv = max(fv, r)
    return LemmaDiagnostics(cube, res, [(np.asarray(p).tolist(), np.asarray(q).tolist()) for p, q in probes],
                            slack, lhs_list, rhs_list, resid, dist, bound, MATRIX_DISTANCE_C, fv, tests,
                            {"a_U": report.a_U.tolist(), "a_star_U": report.a_star_U.tolist()})


# ---------------------------------------------------------------------------
# per-probe identity and inequality checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LemmaCheck:
    """One identity or inequality at one probe: ``value <= bound`` (or ``|value| <= bound``)."""

    name: str
    value: float
    bound: float

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.bound)


LEMMA_NAMES = ("nonnegative_defect", "ellipticity_ordering", "subadditivity", "quadratic_response",
               "first_variation", "defect_energy", "mu_bounds", "mu_star_bounds", "gradient_bound")


def lemma_checks(parent: CellProblem, children: list[CellProblem], p, q,
                 rel_tol: float = 1e-8, qr_tol: float = 1e-5, fv_tol: float = 1e-6,
                 fv_tests: int | None = 64) -> list[LemmaCheck]:
    """All per-probe checks for the cube of ``parent`` partitioned into ``children``.

    Inequalities are checked with slack ``rel_tol`` times the probe's energy
    scale ``Lam|p|^2/2 + |q|^2/(2 lam)``; identities report a relative
    residual against the stated tolerance.
    """
    p, q = _direction(p, parent.dim), _direction(q, parent.dim)
    lam, Lam = parent.lam, parent.Lam
    pp, qq, pq = float(p @ p), float(q @ q), float(p @ q)
    scale = max(0.5 * Lam * pp + 0.5 * qq / lam, 1e-300)
    slack = rel_tol * scale
    out = []

    mu_p, _ = parent.mu(p)
    mu_q, _ = parent.mu_star(q)
    J = mu_p + mu_q - pq
    J_en = parent.J_energy(p, q)
    out.append(LemmaCheck("nonnegative_defect", -J, slack))

    rep = parent.matrices()
    ev_a = np.linalg.eigvalsh(rep.a_U)
    ev_s = np.linalg.eigvalsh(rep.a_star_U)
    gap = np.linalg.eigvalsh(rep.a_U - rep.a_star_U)
    order = max(lam - ev_s[0], -gap[0], ev_a[-1] - Lam)
    out.append(LemmaCheck("ellipticity_ordering", order, rel_tol * max(Lam, 1.0)))

    weights = [c.volume / parent.volume for c in children]
    mean_child = math.fsum(w * c.J(p, q) for w, c in zip(weights, children))
    out.append(LemmaCheck("subadditivity", J - mean_child, slack))

    vU = parent.j_maximizer(p, q).u
    lhs = 0.0
    for w, child in zip(weights, children):
        diff = vU.restrict(child.grid) - child.j_maximizer(p, q).u
        lhs += w * child.K.energy(diff) / child.volume
    rhs = mean_child - J
    out.append(LemmaCheck("quadratic_response", abs(lhs - rhs) / max(abs(lhs), abs(rhs), scale), qr_tol))

    fv, _ = first_variation_residual(parent, p, q, fv_tests)
    out.append(LemmaCheck("first_variation", fv, fv_tol))

    out.append(LemmaCheck("defect_energy", abs(J - J_en) / scale, rel_tol))

    mu_lo, mu_hi = 0.5 * lam * pp, 0.5 * Lam * pp
    out.append(LemmaCheck("mu_bounds", max(mu_lo - mu_p, mu_p - mu_hi), slack))
    ms_lo, ms_hi = 0.5 * qq / Lam, 0.5 * qq / lam
    out.append(LemmaCheck("mu_star_bounds", max(ms_lo - mu_q, mu_q - ms_hi), slack))

    lap = _laplacian_of(parent.grid)
    grad2 = float(vU.values @ (lap @ vU.values)) / parent.volume
    bound = Lam / lam * pp + qq / lam ** 2 + math.sqrt(pp * qq) / lam
    out.append(LemmaCheck("gradient_bound", grad2 - bound, slack))
    return out


def _laplacian_of(grid: Grid):
    return assemble_stiffness(grid, 1.0).matrix


def lemma_suite(field: CoefficientField, cube: TriadicCube, probes, res: int = 4, **tols) -> list[list[LemmaCheck]]:
    """``lemma_checks`` for each ``(p, q)`` in ``probes`` on one field."""
    if cube.scale < 1:
        raise ConfigError("lemma checks need a cube of scale >= 1")
    parent = CellProblem(field, cube, res)
    children = [CellProblem(field, c, res) for c in cube.children()]
    return [lemma_checks(parent, children, p, q, **tols) for p, q in probes]
