"""Command-line front end.

``stokeshs <command> --config <path> [--out <dir>] [--threads <n>]``

Commands read a JSON configuration, write CSV results into the output
directory and exit with 0 when every check passes, 1 when a certification
or tolerance check fails and 2 on usage or configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from . import certification as cert
from .errors import ConfigError, StokesError
from .fields import Field, Grid, _fmt, atomic_write, field_from_csv, field_to_csv, lq_norm
from .kernel_op import KernelSpec, LogGrid, apply_kernel, extremal_family, kernel_constant
from .kernel_op import lq_norm as kernel_lq_norm
from .kernel_op import random_profiles
from .problems import manufactured, mms_levels, one_mode_data
from .solver import HalfSpaceData, estimate_ratio, residual, solve_resolvent
from .spectral_core import BCKind, SectorSpec

COMMANDS = ("certify", "solve", "sweep", "kernel", "convergence", "mms")
CERT_FAMILIES = ("es", "es2", "decomposed", "appendixA")

DEFAULT_TOLERANCES = {
    "residual": 1e-8,
    "mms": 1e-6,
    "convergence_ratio": 8.0,
    "sweep_spread": 10.0,
    "kernel_constant": 1e-6,
    "kernel_slack": 1e-4,
    "extremal_fraction": 0.9,
}


# ---------------------------------------------------------------------------
# configuration

def _complex(v, what: str) -> complex:
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, dict) and set(v) <= {"re", "im"}:
        return complex(float(v.get("re", 0.0)), float(v.get("im", 0.0)))
    raise ConfigError(f"{what} must be a number, [re, im] or {{re, im}}, got {v!r}")


def _bc(d: Any) -> BCKind:
    if isinstance(d, str):
        d = {"kind": d}
    if not isinstance(d, dict) or "kind" not in d:
        raise ConfigError(f"boundary condition needs a 'kind', got {d!r}")
    kind = str(d["kind"]).lower()
    if kind == "dirichlet":
        return BCKind.dirichlet()
    if kind == "neumann":
        return BCKind.neumann()
    if kind == "robin":
        return BCKind.robin(float(d.get("alpha", 0.0)), float(d.get("beta", 0.0)))
    raise ConfigError(f"unknown boundary condition {kind!r}")


@dataclass
class RunConfig:
    """Parsed run configuration; see the README for the JSON schema."""

    command: str
    sector: SectorSpec = field(default_factory=lambda: SectorSpec(0.3, 0.05))
    dim: int = 2
    grid: Optional[Grid] = None
    bcs: list = field(default_factory=lambda: [BCKind.dirichlet()])
    lambdas: list = field(default_factory=lambda: [1.0 + 0j])
    families: tuple = CERT_FAMILIES
    xN_grid: np.ndarray = field(default_factory=lambda: cert.DEFAULT_XN.copy())
    data: dict = field(default_factory=dict)
    corrector: str = "direct"
    q: float = 2.0
    sweep: dict = field(default_factory=dict)
    kernel: dict = field(default_factory=dict)
    levels: int = 4
    seed: Optional[int] = None
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))

    @classmethod
    def from_dict(cls, command: str, d: dict, base_dir: str = ".") -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
        if "command" in d and d["command"] != command:
            raise ConfigError(f"config is for {d['command']!r}, not {command!r}")
        cfg = cls(command)
        if "sector" in d:
            cfg.sector = SectorSpec(**d["sector"])
        cfg.dim = int(d.get("dim", 2))
        if cfg.dim not in (2, 3):
            raise ConfigError(f"dim must be 2 or 3, got {cfg.dim}")
        if "grid" in d:
            g = dict(d["grid"])
            g.setdefault("dim", cfg.dim)
            cfg.grid = Grid.from_dict(g)
        if "bcs" in d:
            cfg.bcs = [_bc(b) for b in d["bcs"]]
        elif "bc" in d:
            cfg.bcs = [_bc(d["bc"])]
        if "lambdas" in d:
            cfg.lambdas = [_complex(v, "lambda") for v in d["lambdas"]]
        elif "lambda" in d:
            cfg.lambdas = [_complex(d["lambda"], "lambda")]
        if "families" in d:
            fam = tuple(d["families"])
            bad = [f for f in fam if f not in CERT_FAMILIES]
            if bad:
                raise ConfigError(f"unknown certification families {bad}")
            cfg.families = fam
        if "xN_grid" in d:
            x = d["xN_grid"]
            cfg.xN_grid = np.geomspace(float(x["min"]), float(x["max"]), int(x["n"]))
        cfg.data = dict(d.get("data", {}))
        for key in ("f", "g", "h"):
            if key in cfg.data:
                path = os.path.join(base_dir, cfg.data[key])
                if not os.path.isfile(path):
                    raise ConfigError(f"data file for {key} not found: {path}")
                cfg.data[key] = path
        cfg.corrector = d.get("corrector", "direct")
        if cfg.corrector not in ("direct", "volevich"):
            raise ConfigError(f"unknown corrector {cfg.corrector!r}")
        cfg.q = float(d.get("q", 2.0))
        cfg.sweep = dict(d.get("sweep", {}))
        cfg.kernel = dict(d.get("kernel", {}))
        cfg.levels = int(d.get("levels", 4))
        cfg.seed = d.get("seed")
        tol = dict(DEFAULT_TOLERANCES)
        for k, v in d.get("tolerances", {}).items():
            if k not in tol:
                raise ConfigError(f"unknown tolerance {k!r}")
            if not float(v) > 0:
                raise ConfigError(f"tolerance {k} must be positive, got {v}")
            tol[k] = float(v)
        cfg.tolerances = tol
        if command in ("solve", "sweep", "mms", "convergence") and cfg.grid is None:
            cfg.grid = Grid(dim=cfg.dim)
        if command in ("mms", "convergence") and cfg.dim != 2:
            raise ConfigError("manufactured solutions are two-dimensional")
        if command == "convergence" and cfg.levels < 2:
            raise ConfigError("convergence needs at least 2 levels")
        return cfg


def load_config(command: str, path: str) -> RunConfig:
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    try:
        return RunConfig.from_dict(command, d, os.path.dirname(os.path.abspath(path)))
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"bad config entry: {exc}") from exc


# ---------------------------------------------------------------------------
# output helpers

def _csv_text(header: list, rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def _write_csv(out: str, name: str, header: list, rows: list) -> str:
    path = os.path.join(out, name)
    atomic_write(path, _csv_text(header, rows))
    return path


def _slug(text: str) -> str:
    return "".join(c if c.isalnum() else "_" for c in text).strip("_")


def _report_rows(reports) -> tuple[list, list]:
    xis = [tuple(r.argmin_point["xi"]) + ((r.argmin_point["xiN"],) if "xiN" in r.argmin_point else ())
           for r in reports]
    n = max((len(x) for x in xis), default=0)
    header = ["inequality_id", "n_samples", "empirical_constant", "argmin_lambda_re",
              "argmin_lambda_im"]
    for j in range(n):
        header += [f"argmin_xi{j + 1}_re", f"argmin_xi{j + 1}_im"]
    header += ["argmin_xN", "passed"]
    rows = []
    for r, xi in zip(reports, xis):
        lam = complex(r.argmin_point["lam"])
        row = [r.inequality_id, r.samples_tested, float(r.empirical_constant), lam.real, lam.imag]
        for j in range(n):
            row += [complex(xi[j]).real, complex(xi[j]).imag] if j < len(xi) else ["", ""]
        xN = r.argmin_point.get("xN")
        row += ["" if xN is None else float(xN), "true" if r.passed else "false"]
        rows.append(row)
    return header, rows


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# commands

def run_certify(cfg: RunConfig, out: str, threads: int) -> bool:
    ok = True
    jobs = []
    if "es" in cfg.families:
        jobs.append(("certify_es.csv", lambda: cert.certify_lemma_es(cfg.sector, dim=cfg.dim,
                                                                    xN_grid=cfg.xN_grid)))
    if "es2" in cfg.families:
        jobs.append(("certify_es2.csv", lambda: [cert.certify_es2(cfg.sector, dim=cfg.dim)]))
    if "decomposed" in cfg.families:
        for bc in cfg.bcs:
            flat = not (bc.tag.value == "robin" and bc.alpha > 0)
            jobs.append((f"certify_decomposed_{_slug(bc.label)}.csv",
                         lambda bc=bc, flat=flat: cert.certify_decomposed(
                             bc, cfg.sector, cfg.xN_grid, dim=cfg.dim, check_flatness=flat)))
    if "appendixA" in cfg.families:
        jobs.append(("certify_appendixA.csv", lambda: cert.certify_appendixA(cfg.sector, cfg.dim)))
    with ThreadPoolExecutor(max_workers=threads) as ex:
        results = list(ex.map(lambda j: j[1](), jobs))
    for (name, _), reports in zip(jobs, results):
        header, rows = _report_rows(reports)
        _write_csv(out, name, header, rows)
        for r in reports:
            if not r.passed:
                ok = False
                _log(f"FAIL {r.inequality_id}: {r.empirical_constant:.6g}")
    return ok


def _load_data(cfg: RunConfig, bc: BCKind, lam: complex) -> HalfSpaceData:
    grid = cfg.grid
    if "family" in cfg.data:
        if cfg.data["family"] != "one_mode":
            raise ConfigError(f"unknown data family {cfg.data['family']!r}")
        return one_mode_data(grid, bc, lam, cfg.data.get("parts", "fgh"))
    fields = {}
    for key, comps in (("f", grid.dim), ("g", 1), ("h", grid.dim)):
        if key in cfg.data:
            with open(cfg.data[key]) as fh:
                fields[key] = field_from_csv(grid, fh.read())
        else:
            shape = (comps, grid.K) + grid.lattice_shape
            fields[key] = Field(grid, np.zeros(shape))
    return HalfSpaceData(bc, lam, fields["f"], fields["g"], fields["h"])


def _residual_rows(res, extra=()) -> list:
    rows = [[k, float(getattr(res, k))] for k in ("pde", "div", "bc", "f_norm", "g_norm", "h_norm")]
    return rows + [[k, float(v)] for k, v in extra]


def _residual_ok(res, tol: float) -> bool:
    scale = max(res.f_norm, res.g_norm, res.h_norm, 1e-300)
    return max(res.pde, res.div, res.bc) <= tol * scale


def run_solve(cfg: RunConfig, out: str, threads: int) -> bool:
    ok = True
    multi = len(cfg.bcs) * len(cfg.lambdas) > 1
    for bc in cfg.bcs:
        for i, lam in enumerate(cfg.lambdas):
            data = _load_data(cfg, bc, lam)
            sol = solve_resolvent(data, cfg.corrector)
            res = residual(data, sol, cfg.q)
            extra = []
            if res.f_norm + res.g_norm + res.h_norm > 0:
                extra.append(("estimate_ratio", estimate_ratio(data, sol, cfg.q)))
            tag = f"_{_slug(bc.label)}_{i}" if multi else ""
            atomic_write(os.path.join(out, f"u{tag}.csv"), field_to_csv(sol.u))
            atomic_write(os.path.join(out, f"pi{tag}.csv"), field_to_csv(sol.pi))
            _write_csv(out, f"residual{tag}.csv", ["quantity", "value"], _residual_rows(res, extra))
            if not _residual_ok(res, cfg.tolerances["residual"]):
                ok = False
                _log(f"FAIL residual {bc.label} lambda={lam}: {res}")
    return ok


def run_mms(cfg: RunConfig, out: str, threads: int) -> bool:
    ok = True
    multi = len(cfg.lambdas) > 1
    for i, lam in enumerate(cfg.lambdas):
        data, u = manufactured(cfg.grid, lam)
        sol = solve_resolvent(data, cfg.corrector)
        err = lq_norm(sol.u - u) / lq_norm(u)
        res = residual(data, sol, cfg.q)
        tag = f"_{i}" if multi else ""
        atomic_write(os.path.join(out, f"u{tag}.csv"), field_to_csv(sol.u))
        atomic_write(os.path.join(out, f"pi{tag}.csv"), field_to_csv(sol.pi))
        _write_csv(out, f"residual{tag}.csv", ["quantity", "value"],
                   _residual_rows(res, [("relative_error", err)]))
        if not err <= cfg.tolerances["mms"]:
            ok = False
            _log(f"FAIL mms lambda={lam}: relative error {err:.3e}")
    return ok


def run_convergence(cfg: RunConfig, out: str, threads: int) -> bool:
    x_max = cfg.grid.x_max
    levels = mms_levels(cfg.levels, x_max)
    ok = True
    multi = len(cfg.lambdas) > 1
    for i, lam in enumerate(cfg.lambdas):
        errs = []
        for g in levels:
            data, u = manufactured(g, lam)
            errs.append(lq_norm(solve_resolvent(data, cfg.corrector).u - u) / lq_norm(u))
        tag = f"_{i}" if multi else ""
        _write_csv(out, f"convergence{tag}.csv", ["level", "error"],
                   [[k, float(e)] for k, e in enumerate(errs)])
        for k in range(1, len(errs)):
            # once the error sits at roundoff the ratio carries no information
            if errs[k] > 1e-13 and errs[k - 1] / errs[k] < cfg.tolerances["convergence_ratio"]:
                ok = False
                _log(f"FAIL convergence lambda={lam}: ratio {errs[k - 1] / errs[k]:.3g} at level {k}")
    return ok


def sweep_points(sw: dict, eps: float) -> list:
    r_min, r_max = float(sw.get("r_min", 1e-2)), float(sw.get("r_max", 1e2))
    n = int(sw.get("n", 30))
    if not 0 < r_min <= r_max or n < 1:
        raise ConfigError("sweep needs 0 < r_min <= r_max and n >= 1")
    angles = sw.get("angles", [0.0, math.pi - eps, -(math.pi - eps)])
    return [(float(r), float(a)) for a in angles for r in np.geomspace(r_min, r_max, n)]


def run_sweep(cfg: RunConfig, out: str, threads: int) -> bool:
    pts = sweep_points(cfg.sweep, cfg.sector.epsilon)
    parts = cfg.sweep.get("parts", "fgh")
    ok = True
    for bc in cfg.bcs:
        def one(p, bc=bc):
            lam = p[0] * complex(math.cos(p[1]), math.sin(p[1]))
            data = one_mode_data(cfg.grid, bc, lam, parts)
            return estimate_ratio(data, solve_resolvent(data, cfg.corrector), cfg.q)

        with ThreadPoolExecutor(max_workers=threads) as ex:
            ratios = np.array(list(ex.map(one, pts)))
        _write_csv(out, f"sweep_{_slug(bc.label)}.csv", ["abs_lambda", "arg_lambda", "ratio"],
                   [[r, a, float(v)] for (r, a), v in zip(pts, ratios)])
        med = float(np.median(ratios))
        spread = max(ratios.max() / med, med / ratios.min())
        if not spread <= cfg.tolerances["sweep_spread"]:
            ok = False
            _log(f"FAIL sweep {bc.label}: spread {spread:.3g} about median {med:.3g}")
    return ok


def run_kernel(cfg: RunConfig, out: str, threads: int) -> bool:
    kc = cfg.kernel
    qs = [float(q) for q in kc.get("q", [4 / 3, 1.5, 2.0, 3.0, 4.0])]
    n_random = int(kc.get("n_random", 100))
    decades = float(kc.get("decades", 12.0))
    seed = 0 if cfg.seed is None else int(cfg.seed)
    grid = LogGrid(**kc["grid"]) if "grid" in kc else LogGrid()
    tol = cfg.tolerances

    def one(q):
        spec = KernelSpec(q=q, grid=grid)
        A = kernel_constant(spec)
        fs = random_profiles(spec, n_random, seed)
        ratios = kernel_lq_norm(spec, apply_kernel(spec, fs)) / kernel_lq_norm(spec, fs)
        ext = extremal_family(spec, decades)
        ext_ratio = kernel_lq_norm(spec, apply_kernel(spec, ext)) / kernel_lq_norm(spec, ext)
        return A, float(ratios.max()), float(ext_ratio)

    with ThreadPoolExecutor(max_workers=threads) as ex:
        results = list(ex.map(one, qs))
    ok = True
    rows = []
    for q, (A, mx, ext) in zip(qs, results):
        rows.append([q, A, mx])
        exact = math.pi / math.sin(math.pi / q)
        checks = {"constant": abs(A - exact) <= tol["kernel_constant"] * exact,
                  "bound": mx <= A * (1 + tol["kernel_slack"]),
                  "extremal": ext >= tol["extremal_fraction"] * A}
        for name, good in checks.items():
            if not good:
                ok = False
                _log(f"FAIL kernel q={q:g}: {name}")
    _write_csv(out, "kernel.csv", ["q", "A_q", "max_ratio"], rows)
    return ok


RUNNERS = {"certify": run_certify, "solve": run_solve, "sweep": run_sweep,
           "kernel": run_kernel, "convergence": run_convergence, "mms": run_mms}


def run(cfg: RunConfig, out: str, threads: int = 1) -> int:
    """Execute a parsed configuration; returns the exit status."""
    os.makedirs(out, exist_ok=True)
    return 0 if RUNNERS[cfg.command](cfg, out, threads) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stokeshs",
                                description="Half-space Stokes resolvent solver and certifier.")
    sub = p.add_subparsers(dest="command", metavar="command", required=True)
    helps = {"certify": "sampled certification of the symbol inequalities",
             "solve": "solve one or more resolvent problems",
             "sweep": "estimate ratio over a lambda sweep",
             "kernel": "kernel operator constants and bounds",
             "convergence": "manufactured-solution refinement study",
             "mms": "manufactured-solution error on one grid"}
    for name in COMMANDS:
        s = sub.add_parser(name, help=helps[name])
        s.add_argument("--config", required=True, help="JSON run configuration")
        s.add_argument("--out", default=".", help="output directory (default: .)")
        s.add_argument("--threads", type=int, default=1, help="worker threads (default: 1)")
    return p


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        _log("error: --threads must be >= 1")
        return 2
    try:
        cfg = load_config(args.command, args.config)
        return run(cfg, args.out, args.threads)
    except (ConfigError, ValueError) as exc:
        _log(f"error: {exc}")
        return 2
    except StokesError as exc:
        _log(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
