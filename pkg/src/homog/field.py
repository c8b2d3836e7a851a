"""Random checkerboard coefficient fields on Z^d.

A field assigns to every unit cell ``z + [-1/2, 1/2)^d`` a conductivity
drawn from a :class:`MarginalLaw`.  Cell values are a deterministic
function of ``(master_seed, z)`` through a fixed integer hash, so that
enlarging the sampling window or shifting the field never changes the value
already attached to a lattice point.

Seed derivation
---------------
``h = splitmix64(master_seed)``, then for each coordinate ``z_k`` (as a
two's-complement 64-bit word) ``h = splitmix64(h ^ z_k)``.  The cell value
is ``law.ppf(((h >> 11) + 0.5) * 2**-53)``.  Per-sample seeds in Monte Carlo
studies use the same rule applied to ``master_seed ^ SAMPLE_DOMAIN`` and the
sample index.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np
from scipy import integrate

from .errors import CoverageError, LawUnsuitableError

_MASK = 0xFFFFFFFFFFFFFFFF
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
SAMPLE_DOMAIN = 0x5A4D504C45534545


def splitmix64(x) -> np.ndarray:
    """Vectorized splitmix64 finalizer on uint64 words (wrapping arithmetic)."""
    z = np.atleast_1d(np.asarray(x, dtype=np.uint64)) + _GOLDEN
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _as_words(values) -> np.ndarray:
    return np.asarray(values, dtype=np.int64).view(np.uint64)


def derive_seed(master_seed: int, coords) -> np.ndarray:
    """Hash ``master_seed`` with integer coordinates ``coords`` of shape (..., k)."""
    coords = np.asarray(coords, dtype=np.int64)
    if coords.ndim == 0:
        coords = coords[None]
    shape = coords.shape[:-1]
    h = np.full(shape, splitmix64(master_seed & _MASK)[0], dtype=np.uint64)
    words = _as_words(np.ascontiguousarray(coords))
    for k in range(coords.shape[-1]):
        h = splitmix64(h ^ words[..., k])
    return h.reshape(shape)


def sample_seed(master_seed: int, index: int) -> int:
    """Seed of the ``index``-th independent sample of a study."""
    return int(derive_seed((master_seed ^ SAMPLE_DOMAIN) & _MASK, [index])[()])


def hash_to_uniform(h) -> np.ndarray:
    """Map 64-bit words to uniforms in the open interval (0, 1)."""
    return ((np.asarray(h, dtype=np.uint64) >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


# ---------------------------------------------------------------------------
# marginal laws
# ---------------------------------------------------------------------------

KINDS = ("constant", "two_point", "bounded_log_uniform", "weibull_tail")


@dataclass(frozen=True)
class MarginalLaw:
    """Distribution of the conductivity of a single cell.

    ``beta`` and ``gamma`` are the exponents in the exponential moment
    condition ``E exp(Lambda^beta) + E exp(lambda^-gamma) < inf``; they are
    infinite for laws with compact support in (0, inf).
    """

    kind: str
    params: tuple
    beta: float = math.inf
    gamma: float = math.inf

    @classmethod
    def constant(cls, c: float) -> "MarginalLaw":
        if not c > 0:
            raise ValueError("constant law needs c > 0")
        return cls("constant", (float(c),))

    @classmethod
    def two_point(cls, a1: float, a2: float, prob: float = 0.5) -> "MarginalLaw":
        """``P(b = a1) = prob`` and ``P(b = a2) = 1 - prob``."""
        if not (a1 > 0 and a2 > 0):
            raise ValueError("two_point values must be positive")
        if not 0.0 <= prob <= 1.0:
            raise ValueError("two_point probability must lie in [0, 1]")
        return cls("two_point", (float(a1), float(a2), float(prob)))

    @classmethod
    def bounded_log_uniform(cls, s: float) -> "MarginalLaw":
        """``log b`` uniform on ``[-s, s]``."""
        if not s >= 0:
            raise ValueError("bounded_log_uniform needs s >= 0")
        return cls("bounded_log_uniform", (float(s),))

    @classmethod
    def weibull_tail(cls, k_upper, k_lower, floor=1.0, scale=0.5, beta=None, gamma=None):
        """Two-sided law with stretched-exponential tails.

        With probability 1/2 the value is ``floor + scale * E**(1/k_upper)``
        and otherwise ``1 / (floor + scale * E**(1/k_lower))`` for a standard
        exponential ``E``.  Hence for ``t >= floor``
        ``P(b > t) = exp(-((t - floor)/scale)**k_upper) / 2`` and the
        reciprocal has the mirror tail with exponent ``k_lower``.
        """
        k_upper, k_lower, floor, scale = map(float, (k_upper, k_lower, floor, scale))
        if not (k_upper > 0 and k_lower > 0 and scale > 0):
            raise ValueError("weibull_tail needs positive exponents and scale")
        if floor < 1.0:
            raise ValueError("weibull_tail needs floor >= 1 so the two branches do not overlap")
        beta = max(k_upper / 2, k_upper - 2) if beta is None else float(beta)
        gamma = max(k_lower / 2, k_lower - 2) if gamma is None else float(gamma)
        if not (0 < beta < k_upper and 0 < gamma < k_lower):
            raise ValueError("need 0 < beta < k_upper and 0 < gamma < k_lower")
        return cls("weibull_tail", (k_upper, k_lower, floor, scale), beta, gamma)

    @classmethod
    def parse(cls, text: str) -> "MarginalLaw":
        """Parse ``kind:p1,p2,...`` with optional ``;beta=..;gamma=..`` suffixes."""
        head, *extras = [t.strip() for t in text.strip().split(";")]
        kind, _, args = head.partition(":")
        kind = kind.strip()
        aliases = {"log_uniform": "bounded_log_uniform", "weibull": "weibull_tail"}
        kind = aliases.get(kind, kind)
        if kind not in KINDS:
            raise ValueError(f"unknown law kind {kind!r}")
        values = [float(v) for v in args.split(",") if v.strip()]
        kw = {}
        for extra in extras:
            key, _, val = extra.partition("=")
            if key.strip() not in ("beta", "gamma"):
                raise ValueError(f"unknown law option {key!r}")
            kw[key.strip()] = float(val)
        if kind == "weibull_tail":
            return cls.weibull_tail(*values, **kw)
        if kw:
            raise ValueError("beta/gamma only apply to weibull_tail")
        return getattr(cls, kind)(*values)

    def spec(self) -> str:
        args = ",".join(repr(p) for p in self.params)
        text = f"{self.kind}:{args}"
        if self.kind == "weibull_tail":
            text += f";beta={self.beta!r};gamma={self.gamma!r}"
        return text

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": list(self.params),
                "beta": _json_float(self.beta), "gamma": _json_float(self.gamma)}

    @classmethod
    def from_dict(cls, doc: dict) -> "MarginalLaw":
        return cls(doc["kind"], tuple(float(p) for p in doc["params"]),
                   _from_json_float(doc.get("beta")), _from_json_float(doc.get("gamma")))

    # -- distribution ---------------------------------------------------
    @property
    def is_discrete(self) -> bool:
        return self.kind in ("constant", "two_point")

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        """Sorted support points and probabilities of a discrete law."""
        if self.kind == "constant":
            return np.array([self.params[0]]), np.array([1.0])
        if self.kind == "two_point":
            a1, a2, p = self.params
            if a1 == a2:
                return np.array([a1]), np.array([1.0])
            vals, probs = np.array([a1, a2]), np.array([p, 1.0 - p])
            order = np.argsort(vals)
            return vals[order], probs[order]
        raise ValueError(f"{self.kind} law is not discrete")

    @property
    def support(self) -> tuple[float, float]:
        if self.is_discrete:
            vals, probs = self.atoms()
            vals = vals[probs > 0]
            return float(vals[0]), float(vals[-1])
        if self.kind == "bounded_log_uniform":
            s = self.params[0]
            return math.exp(-s), math.exp(s)
        return 0.0, math.inf

    def ppf(self, u) -> np.ndarray:
        """Generalized inverse ``Q(u) = inf{t : F(t) >= u}`` for u in (0, 1)."""
        u = np.asarray(u, dtype=np.float64)
        if self.is_discrete:
            vals, probs = self.atoms()
            edges = np.cumsum(probs)[:-1]
            return vals[np.searchsorted(edges, u, side="left")]
        if self.kind == "bounded_log_uniform":
            s = self.params[0]
            return np.exp(-s + 2.0 * s * u)
        ku, kl, floor, scale = self.params
        out = np.empty_like(u)
        low = u < 0.5
        with np.errstate(divide="ignore"):
            out[low] = 1.0 / (floor + scale * (-np.log(2.0 * u[low])) ** (1.0 / kl))
            out[~low] = floor + scale * (-np.log(2.0 * (1.0 - u[~low]))) ** (1.0 / ku)
        return out

    def cdf(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        if self.is_discrete:
            vals, probs = self.atoms()
            cum = np.concatenate([[0.0], np.cumsum(probs)])
            return np.minimum(cum[np.searchsorted(vals, t, side="right")], 1.0)
        if self.kind == "bounded_log_uniform":
            s = self.params[0]
            if s == 0:
                return (t >= 1.0).astype(float)
            with np.errstate(divide="ignore"):
                return np.clip((np.log(np.maximum(t, 0.0)) + s) / (2 * s), 0.0, 1.0)
        ku, kl, floor, scale = self.params
        out = np.full_like(t, 0.5)
        with np.errstate(divide="ignore", invalid="ignore"):
            low = t < 1.0 / floor
            tl = np.where(low & (t > 0), t, 1.0)
            out = np.where(low, 0.5 * np.exp(-(np.maximum(1.0 / tl - floor, 0.0) / scale) ** kl), out)
            out = np.where(t <= 0, 0.0, out)
            high = t >= floor
            out = np.where(high, 1.0 - 0.5 * np.exp(-(np.maximum(t - floor, 0.0) / scale) ** ku), out)
        return out

    def sf(self, t) -> np.ndarray:
        """Survival function ``P(b > t)`` without cancellation in the upper tail."""
        t = np.asarray(t, dtype=np.float64)
        if self.kind != "weibull_tail":
            return 1.0 - self.cdf(t)
        ku, kl, floor, scale = self.params
        with np.errstate(divide="ignore", invalid="ignore"):
            tl = np.where(t > 0, t, 1.0)
            out = np.where(t < 1.0 / floor, 1.0 - 0.5 * np.exp(-(np.maximum(1.0 / tl - floor, 0.0) / scale) ** kl), 0.5)
            out = np.where(t <= 0, 1.0, out)
            out = np.where(t >= floor, 0.5 * np.exp(-(np.maximum(t - floor, 0.0) / scale) ** ku), out)
        return out

    def isf(self, v) -> np.ndarray:
        """Inverse survival function, ``isf(v) = ppf(1 - v)`` evaluated accurately for small ``v``."""
        v = np.asarray(v, dtype=np.float64)
        if self.kind == "weibull_tail":
            ku, kl, floor, scale = self.params
            out = np.empty_like(v)
            hi = v < 0.5
            with np.errstate(divide="ignore"):
                out[hi] = floor + scale * (-np.log(2.0 * v[hi])) ** (1.0 / ku)
                out[~hi] = 1.0 / (floor + scale * (-np.log(2.0) - np.log1p(-v[~hi])) ** (1.0 / kl))
            return out
        if self.kind == "bounded_log_uniform":
            s = self.params[0]
            return np.exp(s - 2.0 * s * v)
        return self.ppf(1.0 - v)

    def sample(self, u) -> np.ndarray:
        return self.ppf(u)

    def expect(self, g: Callable[[np.ndarray], np.ndarray]) -> float:
        """``E[g(b)]`` by exact summation or adaptive quadrature.

        Raises :class:`LawUnsuitableError` when the quadrature diverges.
        """
        if self.is_discrete:
            vals, probs = self.atoms()
            keep = probs > 0
            return float(np.sum(probs[keep] * g(vals[keep])))
        if self.kind == "bounded_log_uniform":
            s = self.params[0]
            if s == 0:
                return float(g(np.array(1.0)))
            parts = [(lambda y: float(g(np.exp(y))) / (2 * s), -s, s)]
        else:
            ku, kl, floor, scale = self.params
            parts = [
                (lambda e: 0.5 * float(g(floor + scale * e ** (1.0 / ku))) * math.exp(-e), 0.0, math.inf),
                (lambda e: 0.5 * float(g(1.0 / (floor + scale * e ** (1.0 / kl)))) * math.exp(-e), 0.0, math.inf),
            ]
        total = 0.0
        for fn, a, b in parts:
            total += _quad(fn, a, b)
        return total

    def expect_exp(self, h: Callable[[np.ndarray], np.ndarray]) -> float:
        """``E[exp(h(b))]`` with the exponential folded into the integrand.

        The change of variables to the underlying exponential variable ``e``
        turns the integrand into ``exp(h(b(e)) - e) / 2`` which stays finite
        whenever the moment exists.
        """
        if self.kind != "weibull_tail":
            return self.expect(lambda t: np.exp(h(t)))
        ku, kl, floor, scale = self.params
        parts = (
            lambda e: 0.5 * math.exp(float(h(floor + scale * e ** (1.0 / ku))) - e),
            lambda e: 0.5 * math.exp(float(h(1.0 / (floor + scale * e ** (1.0 / kl)))) - e),
        )
        return sum(_quad(fn, 0.0, math.inf) for fn in parts)

    def exp_moment(self) -> float:
        """``M = E exp(b^beta) + E exp(b^-gamma)`` (finite only for unbounded tails)."""
        if math.isinf(self.beta) or math.isinf(self.gamma):
            raise LawUnsuitableError("exp_moment needs finite beta and gamma")
        return (self.expect_exp(lambda t: t ** self.beta)
                + self.expect_exp(lambda t: t ** (-self.gamma)))


def _quad(fn, a, b, **kw) -> float:
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            with np.errstate(over="raise", invalid="raise"):
                val, err = integrate.quad(fn, a, b, limit=400, epsabs=0.0, epsrel=1e-11, **kw)
        except (integrate.IntegrationWarning, FloatingPointError, OverflowError) as exc:
            raise LawUnsuitableError(f"quadrature failed: {exc}") from exc
    if not math.isfinite(val):
        raise LawUnsuitableError("quadrature returned a non-finite value")
    return float(val)


def _from_json_float(x) -> float:
    return math.inf if x is None else float(x)


def _json_float(x: float):
    return None if math.isinf(x) else x


# ---------------------------------------------------------------------------
# triadic cubes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TriadicCube:
    """The cube ``offset + (-3^scale/2, 3^scale/2)^d``."""

    scale: int
    offset: tuple

    def __post_init__(self):
        if self.scale < 0:
            raise ValueError("cube scale must be nonnegative")
        object.__setattr__(self, "offset", tuple(int(z) for z in self.offset))

    @classmethod
    def centered(cls, scale: int, dim: int) -> "TriadicCube":
        return cls(scale, (0,) * dim)

    @property
    def dim(self) -> int:
        return len(self.offset)

    @property
    def side(self) -> int:
        return 3 ** self.scale

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.offset, float) - self.side / 2

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.offset, float) + self.side / 2

    @property
    def volume(self) -> float:
        return float(self.side ** self.dim)

    def subcubes(self, m: int) -> list["TriadicCube"]:
        """The ``3^{(n-m)d}`` cubes ``z + box_m`` tiling this cube, in C order."""
        if not 0 <= m <= self.scale:
            raise ValueError("subcube scale must lie in [0, scale]")
        h = (3 ** (self.scale - m) - 1) // 2
        ks = range(-h, h + 1)
        step = 3 ** m
        out = []
        for k in np.ndindex(*(len(ks),) * self.dim):
            out.append(TriadicCube(m, tuple(o + step * (i - h) for o, i in zip(self.offset, k))))
        return out

    def children(self) -> list["TriadicCube"]:
        return self.subcubes(self.scale - 1)

    def shifted(self, z) -> "TriadicCube":
        return TriadicCube(self.scale, tuple(o + int(zi) for o, zi in zip(self.offset, z)))

    def contains(self, other: "TriadicCube") -> bool:
        return bool(np.all(other.lower >= self.lower) and np.all(other.upper <= self.upper))

    def cell_range(self) -> tuple[np.ndarray, np.ndarray]:
        """Inclusive lattice index bounds of the unit cells in this cube."""
        h = (self.side - 1) // 2
        off = np.asarray(self.offset, dtype=np.int64)
        return off - h, off + h

    def to_dict(self) -> dict:
        return {"scale": self.scale, "offset": list(self.offset)}

    @classmethod
    def from_dict(cls, doc) -> "TriadicCube":
        return cls(int(doc["scale"]), tuple(doc["offset"]))


def _box(U) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(U, TriadicCube):
        return U.lower, U.upper
    lo, hi = U
    return np.asarray(lo, float), np.asarray(hi, float)


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------


class CoefficientField:
    """Piecewise-constant scalar conductivity (times the identity)."""

    dim: int

    def extent_box(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def values_at(self, points) -> np.ndarray:
        raise NotImplementedError

    def cells_meeting(self, U) -> np.ndarray:
        """Values of all cells whose interior meets the open box ``U``."""
        raise NotImplementedError

    def shift(self, z) -> "CoefficientField":
        raise NotImplementedError

    def covers(self, U, tol: float = 1e-12) -> bool:
        lo, hi = _box(U)
        elo, ehi = self.extent_box()
        return bool(np.all(lo >= elo - tol) and np.all(hi <= ehi + tol))

    def _require(self, U):
        if not self.covers(U):
            lo, hi = _box(U)
            raise CoverageError(f"domain {lo.tolist()}..{hi.tolist()} is outside the field extent")

    def __call__(self, points) -> np.ndarray:
        return self.values_at(points)


class CheckerboardField(CoefficientField):
    """I.i.d. checkerboard: cell ``z`` carries ``law.ppf(u(master_seed, z + translation))``."""

    def __init__(self, law: MarginalLaw, master_seed: int, extent: TriadicCube, translation=None):
        self.law = law
        self.master_seed = int(master_seed) & _MASK
        self.extent = extent
        self.dim = extent.dim
        self.translation = tuple(int(t) for t in (translation if translation is not None else (0,) * self.dim))
        self._lo, hi = extent.cell_range()
        grids = np.meshgrid(*[np.arange(a, b + 1) for a, b in zip(self._lo, hi)], indexing="ij")
        lattice = np.stack(grids, axis=-1) + np.asarray(self.translation, dtype=np.int64)
        self.table = law.ppf(hash_to_uniform(derive_seed(self.master_seed, lattice)))
        self.table.setflags(write=False)

    def extent_box(self):
        return self.extent.lower, self.extent.upper

    def cell_value(self, z) -> float:
        idx = np.asarray(z, dtype=np.int64) - self._lo
        if np.any(idx < 0) or np.any(idx >= self.table.shape[0]):
            raise CoverageError(f"cell {tuple(z)} is outside the field extent")
        return float(self.table[tuple(idx)])

    def cells(self) -> Iterator[tuple[tuple, float]]:
        for idx in np.ndindex(*self.table.shape):
            yield tuple(int(i + lo) for i, lo in zip(idx, self._lo)), float(self.table[idx])

    def values_at(self, points) -> np.ndarray:
        points = np.asarray(points, float)
        z = np.floor(points + 0.5).astype(np.int64)
        idx = z - self._lo
        if np.any(idx < 0) or np.any(idx >= self.table.shape[0]):
            raise CoverageError("evaluation point outside the field extent")
        return self.table[tuple(np.moveaxis(idx, -1, 0))]

    def cells_meeting(self, U) -> np.ndarray:
        self._require(U)
        lo, hi = _box(U)
        zmin = np.floor(lo - 0.5).astype(np.int64) + 1
        zmax = np.ceil(hi + 0.5).astype(np.int64) - 1
        sl = tuple(slice(a - l, b - l + 1) for a, b, l in zip(zmin, zmax, self._lo))
        return self.table[sl]

    def shift(self, z) -> "CheckerboardField":
        """``(T_z a)(x) = a(x + z)`` sampled on the same extent."""
        t = tuple(a + int(b) for a, b in zip(self.translation, z))
        return CheckerboardField(self.law, self.master_seed, self.extent, t)

    def restricted(self, extent: TriadicCube) -> "CheckerboardField":
        return CheckerboardField(self.law, self.master_seed, extent, self.translation)

    def __eq__(self, other):
        if not isinstance(other, CheckerboardField):
            return NotImplemented
        return (self.law == other.law and self.extent == other.extent
                and np.array_equal(self.table, other.table))

    def __repr__(self):
        return (f"CheckerboardField({self.law.spec()!r}, seed={self.master_seed}, "
                f"extent={self.extent}, translation={self.translation})")

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "law": self.law.to_dict(),
            "master_seed": self.master_seed,
            "extent": self.extent.to_dict(),
            "translation": list(self.translation),
            "cells": [[*z, v] for z, v in self.cells()],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "CheckerboardField":
        """Regenerate a field from its fixture and check the stored cells."""
        fld = cls(MarginalLaw.from_dict(doc["law"]), doc["master_seed"],
                  TriadicCube.from_dict(doc["extent"]), doc.get("translation"))
        for row in doc.get("cells", []):
            *z, v = row
            if fld.cell_value(z) != v:
                raise ValueError(f"stored cell {z} = {v} disagrees with regenerated value")
        return fld


class PiecewiseField(CoefficientField):
    """Deterministic piecewise-constant field on a tensor product of intervals.

    ``values[i_1, ..., i_d]`` is the conductivity on the box with lower corner
    ``lower + i * widths``.  Used for laminates, hand-built two-phase
    configurations and other oracle cases.
    """

    def __init__(self, values, lower, widths=None):
        self.values = np.array(values, dtype=float)
        self.dim = self.values.ndim
        self.lower = np.asarray(lower, float).reshape(self.dim)
        self.widths = np.ones(self.dim) if widths is None else np.asarray(widths, float).reshape(self.dim)
        if np.any(self.values <= 0) or not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite and positive")
        self.values.setflags(write=False)

    @classmethod
    def from_cells(cls, values, lower_cell) -> "PiecewiseField":
        """Unit-cell table whose first entry is the cell centred at ``lower_cell``."""
        return cls(values, np.asarray(lower_cell, float) - 0.5)

    def extent_box(self):
        return self.lower, self.lower + self.widths * np.array(self.values.shape)

    def values_at(self, points) -> np.ndarray:
        points = np.asarray(points, float)
        idx = np.floor((points - self.lower) / self.widths).astype(np.int64)
        shape = np.array(self.values.shape)
        if np.any(idx < 0) or np.any(idx >= shape):
            raise CoverageError("evaluation point outside the field extent")
        return self.values[tuple(np.moveaxis(idx, -1, 0))]

    def cells_meeting(self, U) -> np.ndarray:
        self._require(U)
        lo, hi = _box(U)
        a = np.floor((lo - self.lower) / self.widths + 1e-12).astype(int)
        b = np.ceil((hi - self.lower) / self.widths - 1e-12).astype(int)
        return self.values[tuple(slice(max(i, 0), j) for i, j in zip(a, b))]

    def shift(self, z) -> "PiecewiseField":
        return PiecewiseField(self.values, self.lower - np.asarray(z, float), self.widths)

    def __eq__(self, other):
        if not isinstance(other, PiecewiseField):
            return NotImplemented
        return (np.array_equal(self.values, other.values) and np.array_equal(self.lower, other.lower)
                and np.array_equal(self.widths, other.widths))


def sample_field(law: MarginalLaw, master_seed: int, extent: TriadicCube) -> CheckerboardField:
    if extent.scale < 0:
        raise ValueError("extent scale must be nonnegative")
    return CheckerboardField(law, master_seed, extent)


def lambda_extremes(field: CoefficientField, U) -> tuple[float, float]:
    """``(Lambda(U), lambda(U))``: largest and smallest cell value meeting ``U``."""
    vals = field.cells_meeting(U)
    return float(np.max(vals)), float(np.min(vals))


def shift(field: CoefficientField, z) -> CoefficientField:
    return field.shift(z)


def constant_field(c: float, extent: TriadicCube) -> CheckerboardField:
    return CheckerboardField(MarginalLaw.constant(c), 0, extent)


def save_field(field: CheckerboardField, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(field.to_json(), fh, indent=1)
        fh.write("\n")


def load_field(path) -> CheckerboardField:
    with open(path, encoding="utf-8") as fh:
        return CheckerboardField.from_json(json.load(fh))
