"""Monte Carlo estimation of expected coarse-grained coefficients.

Every sample ``i`` of a study is an independent checkerboard field with seed
``sample_seed(master_seed, i)``.  Studies over several scales reuse each
sample's field on the nested centred cubes (coupled samples), which makes
scale-to-scale differences much less noisy.  All reductions run in sample
index order with compensated summation, so results are bit-identical
regardless of how many workers produced the per-sample values.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import integrate

from .cell import CellProblem
from .errors import ConfigError, LawUnsuitableError, StudyInconsistencyError
from .field import (CoefficientField, MarginalLaw, TriadicCube, derive_seed, hash_to_uniform, sample_field,
                    sample_seed)
from .pool import ordered_map


# ---------------------------------------------------------------------------
# per-sample work
# ---------------------------------------------------------------------------


@dataclass
class SampleResult:
    index: int
    seed: int
    scales: tuple
    a: np.ndarray            # (len(scales), d, d)
    a_star_inv: np.ndarray   # (len(scales), d, d)
    Lam: np.ndarray
    lam: np.ndarray
    omega: np.ndarray | None = None


def _sample_task(args) -> SampleResult:
    law, dim, scales, res, master_seed, index, omega_ref = args
    seed = sample_seed(master_seed, index)
    top = max(scales)
    fld = sample_field(law, seed, TriadicCube.centered(top, dim))
    a, s, Lam, lam = [], [], [], []
    cache = {}
    for n in scales:
        cube = TriadicCube.centered(n, dim)
        rep = CellProblem(fld, cube, res).matrices()
        cache[(n, cube.offset)] = rep.a_U
        a.append(rep.a_U)
        s.append(rep.a_star_inv)
        Lam.append(rep.Lam)
        lam.append(rep.lam)
    omega = None
    if omega_ref is not None:
        omega = np.array([compute_omega(fld, n, omega_ref, res, cache=cache) for n in scales])
    return SampleResult(index, seed, tuple(scales), np.array(a), np.array(s), np.array(Lam), np.array(lam), omega)


def _fsum_mean(x: np.ndarray) -> np.ndarray:
    """Index-ordered compensated mean over the first axis."""
    x = np.asarray(x, float)
    flat = x.reshape(x.shape[0], -1)
    out = np.array([math.fsum(flat[:, k]) for k in range(flat.shape[1])]) / x.shape[0]
    return out.reshape(x.shape[1:])


def _stderr(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, float)
    m = _fsum_mean(x)
    dev = (x - m) ** 2
    return np.sqrt(_fsum_mean(dev) * x.shape[0] / (x.shape[0] - 1) / x.shape[0])


def run_samples(law: MarginalLaw, dim: int, scales, N: int, res: int, master_seed: int,
                workers: int = 1, omega_ref=None) -> list[SampleResult]:
    tasks = [(law, dim, tuple(scales), res, master_seed, i,
              None if omega_ref is None else np.asarray(omega_ref, float)) for i in range(N)]
    return ordered_map(_sample_task, tasks, workers)


# ---------------------------------------------------------------------------
# scale studies
# ---------------------------------------------------------------------------


@dataclass
class ScaleStudy:
    """Expectation-level statistics of ``a(box_n)`` and ``a_*(box_n)``."""

    n: int
    N: int
    res: int
    dim: int
    law: MarginalLaw
    master_seed: int
    mean_a: np.ndarray
    se_a: np.ndarray
    mean_a_star_inv: np.ndarray
    se_a_star_inv: np.ndarray
    abar_n: np.ndarray
    mean_Lam: float
    mean_inv_lam: float
    a_samples: np.ndarray
    a_star_inv_samples: np.ndarray
    seeds: list
    coupled: bool = False
    err2: float = math.nan
    err2_se: float = math.nan
    tau: float = math.nan
    omega_mean: float = math.nan
    omega_se: float = math.nan
    wall_time: float = 0.0

    def mean_mu(self, p) -> tuple[float, float]:
        p = np.asarray(p, float)
        vals = 0.5 * np.einsum("i,kij,j->k", p, self.a_samples, p)
        return float(_fsum_mean(vals)), float(_stderr(vals))

    def mean_mu_star(self, q) -> tuple[float, float]:
        q = np.asarray(q, float)
        vals = 0.5 * np.einsum("i,kij,j->k", q, self.a_star_inv_samples, q)
        return float(_fsum_mean(vals)), float(_stderr(vals))

    def mean_J(self, p, q) -> tuple[float, float]:
        p, q = np.asarray(p, float), np.asarray(q, float)
        vals = (0.5 * np.einsum("i,kij,j->k", p, self.a_samples, p)
                + 0.5 * np.einsum("i,kij,j->k", q, self.a_star_inv_samples, q) - float(p @ q))
        return float(_fsum_mean(vals)), float(_stderr(vals))

    def summary(self) -> dict:
        return {
            "n": self.n, "N": self.N, "res": self.res, "dim": self.dim, "coupled": self.coupled,
            "mean_a": self.mean_a.tolist(), "se_a": self.se_a.tolist(),
            "mean_a_star_inv": self.mean_a_star_inv.tolist(), "se_a_star_inv": self.se_a_star_inv.tolist(),
            "abar_n": self.abar_n.tolist(), "mean_Lam": self.mean_Lam, "mean_inv_lam": self.mean_inv_lam,
            "err2": _num(self.err2), "err2_se": _num(self.err2_se), "tau": _num(self.tau),
            "omega_mean": _num(self.omega_mean), "omega_se": _num(self.omega_se),
        }


def _num(x):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else x


def _study_from_samples(law, dim, res, master_seed, samples: list[SampleResult], k: int,
                        coupled: bool, elapsed: float) -> ScaleStudy:
    a = np.stack([s.a[k] for s in samples])
    si = np.stack([s.a_star_inv[k] for s in samples])
    mean_si = _fsum_mean(si)
    abar_n = np.linalg.inv(mean_si)
    st = ScaleStudy(
        n=samples[0].scales[k], N=len(samples), res=res, dim=dim, law=law, master_seed=master_seed,
        mean_a=_fsum_mean(a), se_a=_stderr(a), mean_a_star_inv=mean_si, se_a_star_inv=_stderr(si),
        abar_n=0.5 * (abar_n + abar_n.T),
        mean_Lam=float(_fsum_mean(np.array([s.Lam[k] for s in samples]))),
        mean_inv_lam=float(_fsum_mean(np.array([1.0 / s.lam[k] for s in samples]))),
        a_samples=a, a_star_inv_samples=si, seeds=[s.seed for s in samples], coupled=coupled,
        wall_time=elapsed,
    )
    if samples[0].omega is not None:
        om = np.array([s.omega[k] for s in samples])
        st.omega_mean, st.omega_se = float(_fsum_mean(om)), float(_stderr(om))
    return st


def studies_from_samples(law: MarginalLaw, dim: int, res: int, master_seed: int,
                         samples: list[SampleResult], elapsed: float = 0.0) -> list[ScaleStudy]:
    """Coupled studies at every scale stored in ``samples`` (as returned by :func:`run_samples`)."""
    if len(samples) < 2:
        raise ConfigError("N must be at least 2")
    scales = samples[0].scales
    studies = [_study_from_samples(law, dim, res, master_seed, samples, k, len(scales) > 1, elapsed / len(scales))
               for k in range(len(scales))]
    for a, b in zip(studies[:-1], studies[1:]):
        if b.n == a.n + 1:
            a.tau = estimate_tau(a, b).tau
    return studies


def run_scale_study(law: MarginalLaw, n: int, N: int, res: int = 4, master_seed: int = 0,
                    dim: int = 2, workers: int = 1) -> ScaleStudy:
    """Statistics of ``a(box_n)`` over ``N`` independent samples."""
    return run_multiscale_study(law, [n], N, res, master_seed, dim, workers)[0]


def run_multiscale_study(law: MarginalLaw, n_values, N: int, res: int = 4, master_seed: int = 0,
                         dim: int = 2, workers: int = 1, omega_ref=None) -> list[ScaleStudy]:
    """Coupled studies: sample ``i`` uses one field for every scale in ``n_values``."""
    if N < 2:
        raise ConfigError("N must be at least 2")
    n_values = sorted(int(n) for n in n_values)
    if not n_values or n_values[0] < 0:
        raise ConfigError("scales must be nonnegative")
    t0 = time.perf_counter()
    samples = run_samples(law, dim, n_values, N, res, master_seed, workers, omega_ref)
    return studies_from_samples(law, dim, res, master_seed, samples, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# homogenized matrix
# ---------------------------------------------------------------------------


@dataclass
class AbarEstimate:
    abar: np.ndarray
    se: np.ndarray
    scale: int
    basic_bracket: tuple
    refined_bracket: tuple
    eigenvalues: np.ndarray
    slack: float


def law_brackets(law: MarginalLaw) -> tuple[tuple[float, float], tuple[float, float]]:
    """``(E[lam(box_0)^-1]^-1, E[Lam(box_0)])`` and ``(E[avg|a^-1|]^-1, E[avg|a|])``.

    The unit cube meets a single cell whose value is scalar, so both pairs
    equal ``(1/E[1/b], E[b])``.
    """
    inv = 1.0 / law.expect(lambda t: 1.0 / t)
    mean = law.expect(lambda t: t)
    return (inv, mean), (inv, mean)


def estimate_abar(studies: list[ScaleStudy], law: MarginalLaw | None = None, slack_se: float = 3.0) -> AbarEstimate:
    """``abar`` as the mean of ``a(box_n)`` at the largest scale, checked against the brackets."""
    if not studies:
        raise ConfigError("no studies given")
    top = max(studies, key=lambda s: s.n)
    law = law or top.law
    basic, refined = law_brackets(law)
    abar = 0.5 * (top.mean_a + top.mean_a.T)
    eig = np.linalg.eigvalsh(abar)
    slack = slack_se * float(np.max(top.se_a))
    lo = max(basic[0], refined[0])
    hi = min(basic[1], refined[1])
    if eig[0] < lo - slack - 1e-12 * lo or eig[-1] > hi + slack + 1e-12 * hi:
        raise StudyInconsistencyError(
            f"estimated abar eigenvalues {eig.tolist()} leave the bracket [{lo}, {hi}] by more than {slack:.3e}")
    return AbarEstimate(abar, top.se_a, top.n, basic, refined, eig, slack)


def closed_form_abar(law: MarginalLaw, dim: int) -> np.ndarray | None:
    """Exact homogenized matrix when one is known, else ``None``.

    Constant laws; any law in one dimension (harmonic mean); and the
    symmetric two-phase checkerboard in two dimensions, whose effective
    conductivity is the geometric mean of the phases by Keller-Dykhne
    duality.
    """
    if law.kind == "constant":
        return law.params[0] * np.eye(dim)
    if dim == 1:
        return np.array([[1.0 / law.expect(lambda t: 1.0 / t)]])
    if dim == 2 and law.kind == "two_point" and law.params[2] == 0.5:
        return math.sqrt(law.params[0] * law.params[1]) * np.eye(2)
    if dim == 2 and law.kind == "bounded_log_uniform":
        # log b is symmetric about 0, so b and 1/b have the same law
        return np.eye(2)
    return None


# ---------------------------------------------------------------------------
# tau
# ---------------------------------------------------------------------------


@dataclass
class TauEstimate:
    n: int
    tau: float
    mu_part_raw: float
    mu_star_part_raw: float
    clamped: bool
    coupled: bool
    se: float


def estimate_tau(study_n: ScaleStudy, study_n1: ScaleStudy) -> TauEstimate:
    """``1/2 lmax(E a_n - E a_{n+1}) + 1/2 lmax(E a*^-1_n - E a*^-1_{n+1})``.

    Negative parts are clamped at zero; raw values are reported.
    """
    if study_n1.n != study_n.n + 1:
        raise ConfigError("tau needs consecutive scales")
    da = study_n.mean_a - study_n1.mean_a
    ds = study_n.mean_a_star_inv - study_n1.mean_a_star_inv
    mu_raw = 0.5 * float(np.linalg.eigvalsh(0.5 * (da + da.T))[-1])
    st_raw = 0.5 * float(np.linalg.eigvalsh(0.5 * (ds + ds.T))[-1])
    coupled = study_n.seeds == study_n1.seeds
    if coupled:
        se_a = _stderr(study_n.a_samples - study_n1.a_samples)
        se_s = _stderr(study_n.a_star_inv_samples - study_n1.a_star_inv_samples)
    else:
        se_a = np.hypot(study_n.se_a, study_n1.se_a)
        se_s = np.hypot(study_n.se_a_star_inv, study_n1.se_a_star_inv)
    se = 0.5 * float(np.linalg.norm(se_a, 2)) + 0.5 * float(np.linalg.norm(se_s, 2))
    tau = max(mu_raw, 0.0) + max(st_raw, 0.0)
    return TauEstimate(study_n.n, tau, mu_raw, st_raw, mu_raw < 0 or st_raw < 0, coupled, se)


# ---------------------------------------------------------------------------
# Omega
# ---------------------------------------------------------------------------


def subcube_matrix(field: CoefficientField, cube: TriadicCube, res: int, cache: dict | None = None) -> np.ndarray:
    """``a(cube)``; exact ``b Id`` when the field is constant on the cube."""
    key = (cube.scale, cube.offset)
    if cache is not None and key in cache:
        return cache[key]
    vals = field.cells_meeting(cube)
    if np.all(vals == vals.flat[0]):
        a = float(vals.flat[0]) * np.eye(cube.dim)
    else:
        a = CellProblem(field, cube, res).matrices().a_U
    if cache is not None:
        cache[key] = a
    return a


def compute_omega(field: CoefficientField, n: int, abar_ref, res: int = 4, cube: TriadicCube | None = None,
                  cache: dict | None = None) -> float:
    """``(sum_m 3^{-(n-m)} (3^{-(n-m)d} sum_z |a(z+box_m) - abar|)^{1/2})^2``."""
    cube = TriadicCube.centered(n, field.dim) if cube is None else cube
    abar_ref = np.asarray(abar_ref, float)
    if np.any(np.linalg.eigvalsh(0.5 * (abar_ref + abar_ref.T)) <= 0):
        raise ConfigError("reference matrix must be positive definite")
    d = cube.dim
    total = 0.0
    for m in range(n + 1):
        dists = [float(np.linalg.norm(subcube_matrix(field, sub, res, cache) - abar_ref, 2))
                 for sub in cube.subcubes(m)]
        total += 3.0 ** (-(n - m)) * math.sqrt(3.0 ** (-(n - m) * d) * math.fsum(dists))
    return total * total


# ---------------------------------------------------------------------------
# suppressive sequences
# ---------------------------------------------------------------------------


@dataclass
class SuppressiveProfile:
    beta_p: float
    gamma_p: float
    dim: int
    n: list
    delta: list
    M: list
    moment: list
    parts: list
    L: float
    scaled: list
    trend_consistent: bool


def suppressive_exponents(beta: float, gamma: float, alpha: float | None = None) -> tuple[float, float, float]:
    """``(beta', gamma', alpha)`` with ``beta' = 1/beta + (alpha - 1/beta - 1/gamma)/2``.

    ``alpha`` defaults to the midpoint of ``(1/beta + 1/gamma, 1/3)``.
    """
    s = 1.0 / beta + 1.0 / gamma
    if alpha is None:
        if s >= 1.0 / 3.0:
            raise LawUnsuitableError("need 1/beta + 1/gamma < 1/3")
        alpha = 0.5 * (s + 1.0 / 3.0)
    gap = 0.5 * (alpha - s)
    return 1.0 / beta + gap, 1.0 / gamma + gap, alpha


def _bound(law: MarginalLaw, t: float) -> tuple[float, float]:
    """``(F(t-), P(b >= t))`` for a continuous law."""
    return float(law.cdf(t)), float(law.sf(t))


def _prob_integral(law: MarginalLaw, fn, lo: tuple, hi: tuple, points=()) -> float:
    """``int fn(u, v, x) du`` over ``u`` between the bounds ``lo`` and ``hi``.

    Bounds are ``(u, v)`` pairs with ``v = 1 - u`` known accurately.  The
    lower half of the range is integrated in ``u`` with ``x = ppf(u)``; the
    upper half in ``v`` with ``x = isf(v)``.
    """
    total = 0.0
    a, b = lo[0], min(hi[0], 0.5)
    if a < b:
        pts = [p for p in points if a < p < b]
        total += _quad(lambda u: fn(u, 1.0 - u, float(law.ppf(np.array(u)))), a, b, pts)
    a, b = hi[1], min(lo[1], 0.5)
    if a < b:
        pts = [p for p in points if a < p < b]
        total += _quad(lambda v: fn(1.0 - v, v, float(law.isf(np.array(v)))), a, b, pts)
    return total


def _quad(fn, a, b, points) -> float:
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, _ = integrate.quad(fn, a, b, points=points or None, limit=500, epsabs=0.0, epsrel=1e-10)
        except integrate.IntegrationWarning:
            try:
                val, _ = integrate.quad(fn, a, b, points=points or None, limit=2000, epsabs=1e-300, epsrel=1e-8)
            except integrate.IntegrationWarning as exc:
                raise LawUnsuitableError(f"order-statistic quadrature did not converge: {exc}") from exc
    if not math.isfinite(val):
        raise LawUnsuitableError("order-statistic quadrature returned a non-finite value")
    return float(val)


def _pow(log_base: float, k: float) -> float:
    return math.exp(k * log_base) if k > 0 else 1.0


def truncated_moment(law: MarginalLaw, cells: int, delta: float, M: float) -> tuple[float, dict]:
    """``E[lam^-3 + Lam^3 ; {lam <= delta} U {Lam >= M}]`` for the min/max of ``cells`` i.i.d. values."""
    N = int(cells)
    if law.is_discrete:
        return _truncated_moment_discrete(law, N, delta, M)
    if delta > M:
        raise ConfigError("need delta <= M")
    k = N - 1
    dl = _bound(law, delta)
    Mb = _bound(law, M)
    zero, one = (0.0, 1.0), (1.0, 0.0)
    hint = [min(0.5, 1.0 / N), min(0.5, 10.0 / N)]

    def log1m(x):
        return math.log1p(-x) if x < 1 else -math.inf

    # E[lam^-3 ; lam <= delta]
    t1 = _prob_integral(law, lambda u, v, x: x ** -3 * N * _pow(math.log(v), k) if v > 0 else 0.0,
                        zero, dl, hint)

    # E[Lam^3 ; lam <= delta]
    def f5(u, v, x):
        if u <= 0:
            return 0.0
        base = N * x ** 3 * _pow(math.log(u), k)
        if u <= dl[0]:
            return base
        return base * -math.expm1(k * log1m(dl[0] / u)) if k > 0 else 0.0
    t5 = _prob_integral(law, f5, zero, one, hint)

    # E[Lam^3 ; lam > delta, Lam >= M]
    def f3(u, v, x):
        rest = v - dl[1] + 0.0  # F(x) - F(delta) = (1 - v) - dl[0]
        rest = (1.0 - v) - dl[0] if v > 0.5 else u - dl[0]
        if rest <= 0:
            return 0.0
        return N * x ** 3 * _pow(math.log(rest), k)
    t3 = _prob_integral(law, f3, Mb, one, hint)

    # E[lam^-3 ; lam > delta, Lam >= M]
    def f4(u, v, x):
        if v <= 0:
            return 0.0
        base = N * x ** -3 * _pow(math.log(v), k)
        if v <= Mb[1]:
            return base
        return base * -math.expm1(k * log1m(Mb[1] / v)) if k > 0 else 0.0
    t4 = _prob_integral(law, f4, dl, one, hint)
    parts = {"lam_inv3_low": t1, "Lam3_low": t5, "Lam3_high_only": t3, "lam_inv3_high_only": t4}
    return t1 + t5 + t3 + t4, parts


def _truncated_moment_discrete(law: MarginalLaw, N: int, delta: float, M: float) -> tuple[float, dict]:
    vals, probs = law.atoms()
    keep = probs > 0
    vals, probs = vals[keep], probs[keep]
    K = vals.size
    cum = np.concatenate([[0.0], np.cumsum(probs)])

    def G(i, j):  # P(min index >= i, max index <= j)
        if i > j:
            return 0.0
        return (cum[j + 1] - cum[i]) ** N

    total = 0.0
    lam_part = Lam_part = 0.0
    for i in range(K):
        for j in range(i, K):
            pm = G(i, j) - G(i + 1, j) - G(i, j - 1) + G(i + 1, j - 1)
            if pm <= 0:
                continue
            if vals[i] <= delta or vals[j] >= M:
                lam_part += pm * vals[i] ** -3
                Lam_part += pm * vals[j] ** 3
    total = lam_part + Lam_part
    return total, {"lam_inv3": lam_part, "Lam3": Lam_part}


def truncated_moment_mc(law: MarginalLaw, cells: int, delta: float, M: float, samples: int,
                        seed: int = 0, chunk: int = 50000) -> tuple[float, float]:
    """Monte Carlo cross-check of :func:`truncated_moment` (mean, standard error)."""
    vals = []
    for start in range(0, samples, chunk):
        stop = min(samples, start + chunk)
        i, j = np.meshgrid(np.arange(start, stop), np.arange(cells), indexing="ij")
        x = law.ppf(hash_to_uniform(derive_seed(seed, np.stack([i, j], axis=-1))))
        lo, hi = x.min(axis=1), x.max(axis=1)
        bad = (lo <= delta) | (hi >= M)
        vals.append(np.where(bad, lo ** -3.0 + hi ** 3.0, 0.0))
    vals = np.concatenate(vals)
    return math.fsum(vals) / samples, float(np.std(vals, ddof=1)) / math.sqrt(samples)


def suppressive_profile(law: MarginalLaw, beta_p: float, gamma_p: float, n_max: int, dim: int = 2) -> SuppressiveProfile:
    """Truncated moments for ``delta_n = (n+1)^-gamma'`` and ``M_n = (n+1)^beta'``."""
    if beta_p <= 0 or gamma_p <= 0:
        raise ConfigError("beta' and gamma' must be positive")
    ns = list(range(n_max + 1))
    delta = [(n + 1.0) ** -gamma_p for n in ns]
    M = [(n + 1.0) ** beta_p for n in ns]
    moments, parts = [], []
    for n, dn, Mn in zip(ns, delta, M):
        val, part = truncated_moment(law, 3 ** (n * dim), dn, Mn)
        moments.append(val)
        parts.append(part)
    scaled = [m * math.exp(n) for n, m in zip(ns, moments)]
    L = max(scaled)
    tail = scaled[len(scaled) // 2:]
    trend = all(b <= a * (1 + 1e-9) + 1e-300 for a, b in zip(tail[:-1], tail[1:])) or L == 0.0
    return SuppressiveProfile(beta_p, gamma_p, dim, ns, delta, M, moments, parts, L, scaled, trend)


# ---------------------------------------------------------------------------
# convergence study
# ---------------------------------------------------------------------------


@dataclass
class ConvergenceReport:
    studies: list
    abar_ref: np.ndarray
    abar_source: str
    n: list
    err2: list
    err2_se: list
    diff_se: list
    decreasing: list
    strictly_decreasing: bool
    alpha: float
    slope_stretched: float
    slope_power: float
    flags: list = dc_field(default_factory=list)


def implied_alpha(law: MarginalLaw) -> float:
    s = 1.0 / law.beta + 1.0 / law.gamma
    if s >= 1.0 / 3.0:
        raise LawUnsuitableError("law tails too heavy for the rate exponent (need 1/beta + 1/gamma < 1/3)")
    return 0.5 * (s + 1.0 / 3.0)


def _fit_slope(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = y > 0
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(x[ok], np.log(y[ok]), 1)[0])


def convergence_study(law: MarginalLaw, n_range, N: int, res: int = 4, master_seed: int = 0, dim: int = 2,
                      workers: int = 1, abar_ref=None, studies: list[ScaleStudy] | None = None,
                      min_N: int = 30) -> ConvergenceReport:
    """``E|abar_ref - a(box_n)|^2`` over coupled samples, with decay diagnostics."""
    if N < min_N:
        raise ConfigError(f"N must be at least {min_N} for a convergence study")
    n_range = sorted(int(n) for n in n_range)
    if studies is None:
        studies = run_multiscale_study(law, n_range, N, res, master_seed, dim, workers)
    else:
        studies = [s for s in studies if s.n in n_range]
        if not studies:
            raise ConfigError("no supplied study matches n_range")
        dim = studies[0].dim
    source = "given"
    if abar_ref is None:
        abar_ref = closed_form_abar(law, dim)
        source = "closed_form"
        if abar_ref is None:
            abar_ref = estimate_abar(studies, law).abar
            source = "largest_scale"
    abar_ref = np.asarray(abar_ref, float)
    per_sample = []
    for st in studies:
        e = np.array([np.linalg.norm(abar_ref - a, 2) ** 2 for a in st.a_samples])
        st.err2, st.err2_se = float(_fsum_mean(e)), float(_stderr(e))
        per_sample.append(e)
    decreasing, diff_se = [], []
    for k in range(len(studies) - 1):
        diff = per_sample[k] - per_sample[k + 1]
        se = float(_stderr(diff))
        diff_se.append(se)
        decreasing.append(bool(float(_fsum_mean(diff)) > 2.0 * se))
    alpha = implied_alpha(law) if not (math.isinf(law.beta) and math.isinf(law.gamma)) else 1.0 / 6.0
    ns = [s.n for s in studies]
    errs = [s.err2 for s in studies]
    flags = [f"non-monotone between n={ns[k]} and n={ns[k + 1]}" for k, ok in enumerate(decreasing) if not ok]
    return ConvergenceReport(
        studies=studies, abar_ref=abar_ref, abar_source=source, n=ns, err2=errs,
        err2_se=[s.err2_se for s in studies], diff_se=diff_se, decreasing=decreasing,
        strictly_decreasing=all(decreasing), alpha=alpha,
        slope_stretched=_fit_slope(np.asarray(ns, float) ** (1.0 - 3.0 * alpha), errs),
        slope_power=_fit_slope(np.log(np.asarray(ns, float) + 1.0), errs), flags=flags)


# ---------------------------------------------------------------------------
# one-dimensional references
# ---------------------------------------------------------------------------


def harmonic_mean_error_exact(law: MarginalLaw, n: int) -> float:
    """Exact ``E|h - H_N|^2`` for the harmonic mean ``H_N`` of ``N = 3^n`` two-point cells."""
    from scipy.stats import binom

    if law.kind == "constant":
        return 0.0
    if law.kind != "two_point":
        raise ConfigError("exact harmonic-mean error is implemented for two-point laws")
    a1, a2, p = law.params
    N = 3 ** n
    h = 1.0 / law.expect(lambda t: 1.0 / t)
    k = np.arange(N + 1)
    H = N / (k / a1 + (N - k) / a2)
    return float(np.sum(binom.pmf(k, N, p) * (H - h) ** 2))


def harmonic_mean_error_delta(law: MarginalLaw, n: int) -> float:
    """First-order (delta method) value ``h^4 Var(1/b) / 3^n``."""
    m1 = law.expect(lambda t: 1.0 / t)
    m2 = law.expect(lambda t: 1.0 / t ** 2)
    h = 1.0 / m1
    return h ** 4 * (m2 - m1 ** 2) / 3 ** n
