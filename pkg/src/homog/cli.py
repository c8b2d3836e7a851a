"""Command line front end.

Usage::

    homog <command> [--config FILE] [key=value | --key value | --key=value ...]

The configuration is a flat ``key = value`` text file; values given on the
command line override the file (with a warning).  Every command writes
``<stem>.csv``, ``<stem>.json`` and ``<stem>.png`` into ``out``.  Failures
exit with a nonzero status and print ``{"error": {"category": ..., "message":
...}}`` on stderr.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, HomogError, OutputError

log = logging.getLogger("homog")

COMMANDS = ("check-invariants", "study-cell", "study-convergence", "study-dirichlet",
            "suppressive-profile", "max-moment")

EXIT_CODES = {"config": 2, "coverage": 3, "solver": 4, "statistics": 5, "io": 6}

DEFAULT_N_RANGE = {
    "check-invariants": (1,),
    "study-cell": (0, 1, 2),
    "study-convergence": (0, 1, 2, 3),
    "study-dirichlet": (1, 2, 3),
    "suppressive-profile": (),
    "max-moment": (),
}

ALIASES = {"master_seed": "seed", "n": "n_range", "threads": "threads", "output": "out"}


@dataclass
class ExperimentConfig:
    command: str
    law: str = "two_point:1,4,0.5"
    dim: int = 2
    n_range: tuple = ()
    N: int = 100
    res: int = 4
    seed: int = 0
    out: str = "homog_out"
    threads: int = 1
    domain: float = 0.45
    datum: str = "affine"
    r_grid: tuple = (0.05, 0.1, 0.2, 0.4)
    abar: tuple = ()
    omega: bool = False
    beta_p: float = math.nan
    gamma_p: float = math.nan
    n_max: int = 4
    powers: tuple = (1.0, 3.0)
    counts: tuple = (1, 9, 81)
    samples: int = 100000
    probes: int = 6
    plots: bool = True
    timings: bool = True

    def canonical(self) -> str:
        """``key=value`` lines in field order; parsing them back gives an equal config."""
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(_fmt(t) for t in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            else:
                v = _fmt(v)
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: (list(v) if isinstance(v, tuple) else _jsonable(v)) for k, v in d.items()}


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


# ---------------------------------------------------------------------------
# parsing and validation
# ---------------------------------------------------------------------------


def _to_bool(key, text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


def _to_int(key, text):
    try:
        f = float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None
    if not f.is_integer():
        raise ConfigError(f"{key}: expected an integer, got {text!r}")
    return int(f)


def _to_float(key, text):
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}") from None


def _to_list(key, text, conv):
    text = str(text).strip()
    if not text:
        return ()
    if conv is _to_int and "-" in text and "," not in text and not text.startswith("-"):
        lo, hi = text.split("-", 1)
        return tuple(range(_to_int(key, lo), _to_int(key, hi) + 1))
    return tuple(conv(key, t.strip()) for t in text.split(","))


CONVERTERS = {
    "command": lambda k, v: str(v).strip(),
    "law": lambda k, v: str(v).strip(),
    "dim": _to_int, "N": _to_int, "res": _to_int, "seed": _to_int, "threads": _to_int,
    "n_max": _to_int, "samples": _to_int, "probes": _to_int,
    "out": lambda k, v: str(v).strip(),
    "datum": lambda k, v: str(v).strip(),
    "domain": _to_float, "beta_p": _to_float, "gamma_p": _to_float,
    "n_range": lambda k, v: _to_list(k, v, _to_int),
    "r_grid": lambda k, v: _to_list(k, v, _to_float),
    "abar": lambda k, v: _to_list(k, v, _to_float),
    "powers": lambda k, v: _to_list(k, v, _to_float),
    "counts": lambda k, v: _to_list(k, v, _to_int),
    "omega": _to_bool, "plots": _to_bool, "timings": _to_bool,
}


def read_config_file(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from exc
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def parse_flags(tokens) -> dict:
    """``key=value``, ``--key=value`` and ``--key value`` tokens."""
    out, i = {}, 0
    tokens = list(tokens)
    while i < len(tokens):
        tok = tokens[i]
        if tok.startswith("--"):
            tok = tok[2:]
            if "=" not in tok:
                if i + 1 >= len(tokens):
                    raise ConfigError(f"{tok}: missing value")
                tok = f"{tok}={tokens[i + 1]}"
                i += 1
        if "=" not in tok:
            raise ConfigError(f"unexpected argument {tok!r}; use key=value")
        k, v = tok.split("=", 1)
        out[k.strip().replace("-", "_")] = v
        i += 1
    return out


def _canon_key(k: str) -> str:
    k = ALIASES.get(k, k)
    if k not in CONVERTERS:
        raise ConfigError(f"{k}: unknown configuration key")
    return k


def parse_config(path=None, flags: dict | None = None, command: str | None = None) -> ExperimentConfig:
    """Merge a config file and flags (flags win), fill defaults and validate."""
    raw = {}
    if path is not None:
        raw = {_canon_key(k): v for k, v in read_config_file(path).items()}
    for k, v in (flags or {}).items():
        k = _canon_key(k)
        if k in raw and str(raw[k]).strip() != str(v).strip():
            log.warning("%s: command line value %r overrides config file value %r", k, v, raw[k])
        raw[k] = v
    if command is not None:
        if "command" in raw and raw["command"] != command:
            log.warning("command: %r overrides config file value %r", command, raw["command"])
        raw["command"] = command
    if "command" not in raw:
        raw["command"] = ""
    if "threads" not in raw:
        env = os.environ.get("HOMOG_THREADS", "").strip()
        if env:
            raw["threads"] = env
    values = {k: CONVERTERS[k](k, v) for k, v in raw.items()}
    cfg = ExperimentConfig(**values)
    if not cfg.n_range and cfg.command in DEFAULT_N_RANGE:
        cfg.n_range = DEFAULT_N_RANGE[cfg.command]
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    from .dirichlet import BoundaryDatum
    from .field import MarginalLaw

    def need(ok, key, msg):
        if not ok:
            raise ConfigError(f"{key}: {msg}")

    need(cfg.command in COMMANDS, "command", f"must be one of {', '.join(COMMANDS)}")
    try:
        MarginalLaw.parse(cfg.law)
    except (ValueError, HomogError) as exc:
        raise ConfigError(f"law: {exc}") from exc
    need(cfg.dim in (1, 2, 3), "dim", "must be 1, 2 or 3")
    need(2 <= cfg.N <= 10 ** 6, "N", "must lie in [2, 1000000]")
    need(1 <= cfg.res <= 64, "res", "must lie in [1, 64]")
    need(0 <= cfg.seed < 2 ** 63, "seed", "must lie in [0, 2^63)")
    need(1 <= cfg.threads <= 256, "threads", "must lie in [1, 256]")
    need(all(0 <= n <= 6 for n in cfg.n_range), "n_range", "scales must lie in [0, 6]")
    need(list(cfg.n_range) == sorted(set(cfg.n_range)), "n_range", "must be strictly ascending")
    need(0 < cfg.domain <= 0.5, "domain", "half width must lie in (0, 0.5]")
    need(len(cfg.r_grid) > 0 and all(0 < r < 1 for r in cfg.r_grid), "r_grid", "radii must lie in (0, 1)")
    need(len(cfg.abar) in (0, 1, cfg.dim ** 2), "abar", "give a scalar or dim*dim entries")
    need(math.isnan(cfg.beta_p) or cfg.beta_p > 0, "beta_p", "must be positive")
    need(math.isnan(cfg.gamma_p) or cfg.gamma_p > 0, "gamma_p", "must be positive")
    need(0 <= cfg.n_max <= 12, "n_max", "must lie in [0, 12]")
    need(len(cfg.powers) > 0 and all(p >= 1 for p in cfg.powers), "powers", "must be >= 1")
    need(len(cfg.counts) > 0 and all(c >= 1 for c in cfg.counts), "counts", "must be >= 1")
    need(2 <= cfg.samples <= 10 ** 8, "samples", "must lie in [2, 10^8]")
    need(1 <= cfg.probes <= 1000, "probes", "must lie in [1, 1000]")
    need(bool(cfg.out), "out", "must be a path")
    try:
        BoundaryDatum.parse(cfg.datum, cfg.dim)
    except ConfigError as exc:
        raise ConfigError(f"datum: {exc}") from exc
    if cfg.command == "study-convergence":
        need(cfg.N >= 30, "N", "must be at least 30 for a convergence study")
    if cfg.command == "check-invariants":
        need(min(cfg.n_range, default=0) >= 1, "n_range", "invariant checks need scales >= 1")
    if cfg.command in ("study-cell", "study-convergence", "study-dirichlet", "check-invariants"):
        need(len(cfg.n_range) > 0, "n_range", "must not be empty")


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "" if math.isnan(v) else repr(v)
    return str(v)


def write_csv(path: Path, rows: list[dict]) -> None:
    cols = list(rows[0]) if rows else []
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in rows:
                w.writerow([_cell(r.get(c)) for c in cols])
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def write_json(path: Path, doc: dict) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(_jsonable(doc), fh, indent=2, sort_keys=True, allow_nan=False)
            fh.write("\n")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise OutputError(f"output directory {out} is not writable")
    return out


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _law(cfg):
    from .field import MarginalLaw

    return MarginalLaw.parse(cfg.law)


def _abar(cfg):
    if not cfg.abar:
        return None
    a = np.asarray(cfg.abar, float)
    return a[0] * np.eye(cfg.dim) if a.size == 1 else a.reshape(cfg.dim, cfg.dim)


def _clock(cfg, t0) -> float:
    return time.perf_counter() - t0 if cfg.timings else 0.0


def cmd_check_invariants(cfg):
    from .cell import default_probes, verify_lemma_properties
    from .field import TriadicCube, sample_field, sample_seed

    law = _law(cfg)
    rows = []
    for n in cfg.n_range:
        for i in range(cfg.N):
            seed = sample_seed(cfg.seed, i)
            cube = TriadicCube.centered(n, cfg.dim)
            fld = sample_field(law, seed, cube)
            diag = verify_lemma_properties(fld, cube, cfg.res, default_probes(cfg.dim, cfg.probes, seed=i))
            rows.append({
                "sample": i, "seed": seed, "n": n,
                "min_subadditivity_slack": min(diag.subadditivity_slack),
                "max_qr_residual": max(diag.quadratic_response_residual),
                "fv_residual": diag.first_variation_residual,
                "matrix_distance_lhs": diag.matrix_distance_lhs,
                "matrix_distance_rhs": diag.matrix_distance_rhs,
                "passed": diag.passed(),
            })
    summary = {"samples": len(rows), "passed": sum(r["passed"] for r in rows)}
    return rows, summary, "plot_invariants"


def cmd_study_cell(cfg):
    from .stats import closed_form_abar, run_multiscale_study

    law = _law(cfg)
    ref = _abar(cfg)
    if cfg.omega and ref is None:
        ref = closed_form_abar(law, cfg.dim)
        if ref is None:
            raise ConfigError("abar: Omega needs a reference matrix for this law")
    studies = run_multiscale_study(law, cfg.n_range, cfg.N, cfg.res, cfg.seed, cfg.dim, cfg.threads,
                                   omega_ref=ref if cfg.omega else None)
    rows = []
    d = cfg.dim
    for st in studies:
        row = {"n": st.n, "N": st.N, "res": st.res}
        for i in range(d):
            for j in range(d):
                row[f"a_{i}{j}"] = float(st.mean_a[i, j])
        for i in range(d):
            for j in range(d):
                row[f"se_{i}{j}"] = float(st.se_a[i, j])
        for i in range(d):
            for j in range(d):
                row[f"abarn_{i}{j}"] = float(st.abar_n[i, j])
        row.update({"tau": st.tau, "omega_mean": st.omega_mean, "mean_Lam": st.mean_Lam,
                    "mean_inv_lam": st.mean_inv_lam,
                    "wall_time": st.wall_time if cfg.timings else 0.0})
        rows.append(row)
    summary = {"studies": [st.summary() for st in studies]}
    return rows, summary, "plot_cell_study"


def cmd_study_convergence(cfg):
    from .stats import convergence_study, harmonic_mean_error_delta, harmonic_mean_error_exact

    law = _law(cfg)
    rep = convergence_study(law, cfg.n_range, cfg.N, cfg.res, cfg.seed, cfg.dim, cfg.threads,
                            abar_ref=_abar(cfg))
    rows = []
    oned = cfg.dim == 1 and law.kind in ("two_point", "constant")
    for k, n in enumerate(rep.n):
        rows.append({
            "n": n, "N": cfg.N, "res": cfg.res, "err2": rep.err2[k], "err2_se": rep.err2_se[k],
            "decrease_to_next": rep.decreasing[k] if k < len(rep.decreasing) else None,
            "diff_se": rep.diff_se[k] if k < len(rep.diff_se) else None,
            "delta_method": harmonic_mean_error_delta(law, n) if cfg.dim == 1 else None,
            "exact": harmonic_mean_error_exact(law, n) if oned else None,
        })
    summary = {"abar_ref": rep.abar_ref, "abar_source": rep.abar_source,
               "strictly_decreasing": rep.strictly_decreasing, "alpha": rep.alpha,
               "slope_stretched": rep.slope_stretched, "slope_power": rep.slope_power, "flags": rep.flags}
    return rows, summary, "plot_convergence"


def cmd_study_dirichlet(cfg):
    from .dirichlet import Box, error_experiment

    law = _law(cfg)
    res = error_experiment(law, Box.symmetric(cfg.domain, cfg.dim), cfg.datum, cfg.n_range, cfg.r_grid,
                           cfg.N, cfg.res, cfg.seed, cfg.dim, _abar(cfg), cfg.threads, with_omega=cfg.omega)
    rows = res.rows()
    if not cfg.timings:
        for r in rows:
            r["runtime_ms"] = 0.0
    aggs = [{**asdict(a), "two_scale_ratio_median": {repr(k): v for k, v in a.two_scale_ratio_median.items()},
             "two_scale_pass_fraction": {repr(k): v for k, v in a.two_scale_pass_fraction.items()}}
            for a in res.aggregates]
    summary = {"abar": res.abar, "abar_source": res.abar_source, "aggregates": aggs,
               "decreasing": res.decreasing, "non_increasing": res.non_increasing,
               "strictly_decreasing": res.strictly_decreasing}
    return rows, summary, "plot_dirichlet"


def cmd_suppressive(cfg):
    from .stats import suppressive_exponents, suppressive_profile

    law = _law(cfg)
    bp, gp = cfg.beta_p, cfg.gamma_p
    if math.isnan(bp) or math.isnan(gp):
        if math.isinf(law.beta) or math.isinf(law.gamma):
            raise ConfigError("beta_p: required for laws without tail exponents")
        dbp, dgp, _ = suppressive_exponents(law.beta, law.gamma)
        bp = dbp if math.isnan(bp) else bp
        gp = dgp if math.isnan(gp) else gp
    prof = suppressive_profile(law, bp, gp, cfg.n_max, cfg.dim)
    rows = [{"n": n, "cells": 3 ** (n * cfg.dim), "delta": prof.delta[n], "M": prof.M[n],
             "moment": float(prof.moment[n]), "scaled": float(prof.scaled[n]),
             "L_bound": prof.L * math.exp(-n)} for n in prof.n]
    summary = {"beta_p": bp, "gamma_p": gp, "L": float(prof.L), "trend_consistent": prof.trend_consistent,
               "parts": prof.parts}
    return rows, summary, "plot_suppressive"


def cmd_max_moment(cfg):
    from .norms import check_max_moment

    law = _law(cfg)
    rows = []
    for p in cfg.powers:
        for c in cfg.counts:
            rec = check_max_moment(law, c, p, cfg.samples, seed=cfg.seed)
            rows.append({"count": c, "p": p, "samples": rec.samples, "lhs": rec.lhs, "stderr": rec.stderr,
                         "rhs": rec.rhs, "sharp_rhs": rec.sharp_rhs, "margin": rec.margin, "holds": rec.holds})
    summary = {"all_hold": all(r["holds"] for r in rows)}
    return rows, summary, "plot_max_moment"


HANDLERS = {
    "check-invariants": cmd_check_invariants,
    "study-cell": cmd_study_cell,
    "study-convergence": cmd_study_convergence,
    "study-dirichlet": cmd_study_dirichlet,
    "suppressive-profile": cmd_suppressive,
    "max-moment": cmd_max_moment,
}


def run(cfg: ExperimentConfig, stream=None) -> dict:
    """Execute ``cfg``; returns the paths written."""
    from . import plotting

    stream = sys.stdout if stream is None else stream
    out = _out_dir(cfg)
    stem = cfg.command.replace("-", "_")
    t0 = time.perf_counter()
    rows, summary, plot_name = HANDLERS[cfg.command](cfg)
    t_compute = _clock(cfg, t0)
    paths = {"csv": out / f"{stem}.csv", "json": out / f"{stem}.json"}
    write_csv(paths["csv"], rows)
    results = {"rows": rows, "summary": summary}
    if cfg.command == "study-dirichlet":
        paths["aggregate_csv"] = out / f"{stem}_aggregate.csv"
        write_csv(paths["aggregate_csv"], [{k: v for k, v in a.items() if not isinstance(v, dict)}
                                           for a in summary["aggregates"]])
    t1 = time.perf_counter()
    if cfg.plots:
        paths["png"] = out / f"{stem}.png"
        try:
            if cfg.command == "study-dirichlet":
                plotting.plot_dirichlet(summary["aggregates"], paths["png"])
            else:
                getattr(plotting, plot_name)(rows, paths["png"])
        except OSError as exc:
            raise OutputError(f"cannot write {paths['png']}: {exc}") from exc
    # the thread budget never changes results, so it is reported with the timings
    timings = {"compute_s": t_compute, "plot_s": _clock(cfg, t1), "threads": cfg.threads if cfg.timings else 0}
    config = cfg.to_dict()
    del config["threads"]
    write_json(paths["json"], {"config": config, "results": results, "timings": timings})
    _print_summary(cfg, rows, summary, paths, stream)
    return paths


def _print_summary(cfg, rows, summary, paths, stream) -> None:
    print(f"homog {cfg.command}: law={cfg.law} dim={cfg.dim} N={cfg.N} res={cfg.res} seed={cfg.seed}", file=stream)
    keys = [k for k in (rows[0] if rows else {}) if k not in ("seed",)][:8]
    print("  " + "  ".join(f"{k:>12}" for k in keys), file=stream)
    for r in rows[:20]:
        print("  " + "  ".join(f"{_short(r.get(k)):>12}" for k in keys), file=stream)
    if len(rows) > 20:
        print(f"  ... {len(rows) - 20} more rows", file=stream)
    for k, v in summary.items():
        if isinstance(v, (bool, int, float, str)):
            print(f"  {k}: {v}", file=stream)
    for k, p in paths.items():
        print(f"  wrote {k}: {p}", file=stream)


def _short(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.5g}"
    return str(v)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="homog: %(levelname)s: %(message)s")
    ap = argparse.ArgumentParser(prog="homog", description="Coarse-grained coefficient experiments.")
    ap.add_argument("command", nargs="?", help="one of: " + ", ".join(COMMANDS))
    ap.add_argument("--config", help="flat key=value configuration file")
    args, rest = ap.parse_known_args(argv)
    try:
        cfg = parse_config(args.config, parse_flags(rest), args.command)
        run(cfg)
    except HomogError as exc:
        return _fail(exc.category, str(exc))
    except OSError as exc:
        return _fail("io", str(exc))
    return 0


def _fail(category: str, message: str) -> int:
    print(json.dumps({"error": {"category": category, "message": message}}), file=sys.stderr)
    return EXIT_CODES.get(category, 1)


if __name__ == "__main__":
    sys.exit(main())
