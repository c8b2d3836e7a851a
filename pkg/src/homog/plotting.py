"""Report figures.

Each function takes the rows written to the report CSV and renders one PNG
with the Agg backend.  PNG metadata is stripped so identical data give
identical files.
"""
from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.4),
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "homog",
}


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def _col(rows, key) -> np.ndarray:
    return np.array([np.nan if r.get(key) is None else float(r[key]) for r in rows])


def plot_cell_study(rows: list[dict], path) -> None:
    """Diagonal entries of mean a(box_n) with standard errors, against n."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        n = _col(rows, "n")
        dim = int(round(math.sqrt(sum(1 for k in rows[0] if k.startswith("a_")))))
        for i in range(dim):
            ax.errorbar(n, _col(rows, f"a_{i}{i}"), yerr=_col(rows, f"se_{i}{i}"), marker="o",
                        capsize=3, label=f"mean a_{i}{i}")
        ax.set_xlabel("scale n")
        ax.set_ylabel("coarse-grained coefficient")
        ax.set_xticks(n)
        ax.legend(frameon=False)
        _save(fig, path)


def plot_convergence(rows: list[dict], path) -> None:
    """Mean squared distance to the reference matrix on a log scale."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        n, e, se = _col(rows, "n"), _col(rows, "err2"), _col(rows, "err2_se")
        ax.errorbar(n, e, yerr=2 * se, marker="o", capsize=3, label="estimate (2 s.e.)")
        for key, label in (("delta_method", "first-order variance"), ("exact", "exact variance")):
            ref = _col(rows, key)
            if np.any(np.isfinite(ref)):
                ax.plot(n, ref, ls="--", marker="x", label=label)
        ax.set_yscale("log")
        ax.set_xlabel("scale n")
        ax.set_ylabel("E |abar_ref - a(box_n)|^2")
        ax.set_xticks(n)
        ax.legend(frameon=False)
        _save(fig, path)


def plot_dirichlet(aggregates: list[dict], path) -> None:
    """Aggregate homogenization error against eps."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        eps = _col(aggregates, "eps")
        ax.errorbar(eps, _col(aggregates, "mean_l2_sq"), yerr=2 * _col(aggregates, "se_l2_sq"),
                    marker="o", capsize=3, label="E ||u - u_eps||^2")
        ax.plot(eps, _col(aggregates, "mean_h1"), marker="s", ls=":", label="E ||u - u_eps||_H1")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.invert_xaxis()
        ax.set_xlabel("eps")
        ax.legend(frameon=False)
        _save(fig, path)


def plot_suppressive(rows: list[dict], path) -> None:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        n = _col(rows, "n")
        m = _col(rows, "moment")
        pos = m > 0
        ax.semilogy(n[pos], m[pos], marker="o", label="truncated moment")
        ax.semilogy(n, _col(rows, "L_bound"), ls="--", label="L exp(-n)")
        ax.set_xlabel("scale n")
        ax.set_xticks(n)
        ax.legend(frameon=False)
        _save(fig, path)


def plot_max_moment(rows: list[dict], path) -> None:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for p in sorted({r["p"] for r in rows}):
            sub = [r for r in rows if r["p"] == p]
            c = _col(sub, "count")
            ax.loglog(c, _col(sub, "lhs"), marker="o", label=f"E max^p, p={p:g}")
            ax.loglog(c, _col(sub, "rhs"), ls="--", label=f"bound, p={p:g}")
        ax.set_xlabel("number of variables")
        ax.legend(frameon=False)
        _save(fig, path)


def plot_invariants(rows: list[dict], path) -> None:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        idx = np.arange(len(rows))
        ax.plot(idx, _col(rows, "min_subadditivity_slack"), marker="o", ls="", label="subadditivity slack")
        ax.plot(idx, _col(rows, "max_qr_residual"), marker="x", ls="", label="quadratic response residual")
        ax.set_yscale("symlog", linthresh=1e-14)
        ax.set_xlabel("sample")
        ax.legend(frameon=False)
        _save(fig, path)
