"""Command-line front end.

Subcommands: ``weights``, ``symbol``, ``solve``, ``experiment`` and
``consistency``.  Options may also come from a config file (``key=value``
lines or a JSON object); command-line flags take precedence.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .problems import (
    ResultRow, SolverConfig, consistency_order, example, run,
    run_experiment, table_plans,
)
from .stencil import make_params, tempered_stencil
from .symbol import SymbolSpec, smoothing_bound, symbol_scan

CSV_FIELDS = ("lambda", "alpha", "beta", "M", "N", "omega", "solver", "precond",
              "avg_iters", "cpu_seconds", "final_relres", "error_inf", "error_l2")
_ROW_ATTR = {"lambda": "lam"}


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class RunConfig:
    problem: int = 1
    alpha: float | None = None
    beta: float | None = None
    lambda1: float | None = None
    lambda2: float | None = None
    gamma3: float | None = None
    M: int | None = None
    N: int | None = None
    T: float | None = None
    solver: str = "mg"
    precond: str = "none"
    omega: str = "auto"
    coarsening: str = "galerkin"
    min_size: int = 1
    nu1: int = 1
    nu2: int = 1
    tol: float = 1e-7
    maxit: int = 1000
    output: str | None = None

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.omega != "auto":
            float(self.omega)

    @classmethod
    def from_mapping(cls, data: dict) -> RunConfig:
        known = {f.name: f for f in fields(cls)}
        kw = {}
        for key, value in data.items():
            key = key.replace("-", "_")
            if key not in known:
                raise ValueError(f"unknown config key {key!r}")
            kw[key] = _coerce(key, value)
        return cls(**kw)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is not None:
                lines.append(f"{f.name}={v!r}" if isinstance(v, float) else f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    def overrides(self) -> dict:
        o = {}
        for src, dst in (("alpha", "alpha"), ("beta", "beta"), ("lambda1", "lam"),
                         ("lambda2", "lam2"), ("gamma3", "gamma3"), ("M", "M"), ("N", "N"),
                         ("T", "T")):
            v = getattr(self, src)
            if v is not None:
                o[dst] = v
        return o

    def solver_config(self, omega: float | None) -> SolverConfig:
        return SolverConfig(self.solver, self.precond, omega, self.nu1, self.nu2,
                            self.coarsening, self.min_size, self.tol, self.maxit)


_INT_KEYS = {"problem", "M", "N", "min_size", "nu1", "nu2", "maxit"}
_FLOAT_KEYS = {"alpha", "beta", "lambda1", "lambda2", "gamma3", "T", "tol"}


def _coerce(key: str, value):
    if value is None:
        return None
    if key in _INT_KEYS:
        return int(value)
    if key in _FLOAT_KEYS:
        return float(value)
    if key == "omega":
        return "auto" if str(value).strip().lower() == "auto" else repr(float(value))
    return str(value)


def parse_config_text(text: str) -> dict:
    """Parse either a JSON object or ``key=value`` lines (``#`` comments)."""
    stripped = text.strip()
    if stripped.startswith("{"):
        data = json.loads(stripped)
        if not isinstance(data, dict):
            raise ValueError("config must be a JSON object")
        return data
    data = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"config line {n}: expected key=value")
        data[key.strip()] = value.strip()
    return data


def resolve_omega(cfg: RunConfig, spec) -> float:
    if cfg.omega == "auto":
        return spec.omega_star()
    return float(cfg.omega)


# ---------------------------------------------------------------------------
# tables


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def emit_table(rows: list[ResultRow], format: str = "csv") -> str:
    """Render result rows as CSV or as an aligned plain-text table."""
    records = [[_fmt(getattr(r, _ROW_ATTR.get(k, k))) for k in CSV_FIELDS] for r in rows]
    if format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        w.writerows(records)
        return buf.getvalue()
    if format == "pretty":
        short = [[_short(getattr(r, _ROW_ATTR.get(k, k))) for k in CSV_FIELDS] for r in rows]
        widths = [max([len(h)] + [len(rec[i]) for rec in short]) for i, h in enumerate(CSV_FIELDS)]
        lines = ["  ".join(h.rjust(w) for h, w in zip(CSV_FIELDS, widths))]
        lines += ["  ".join(c.rjust(w) for c, w in zip(rec, widths)) for rec in short]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {format!r}")


def _short(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def parse_csv(text: str) -> list[ResultRow]:
    """Inverse of :func:`emit_table` with ``format='csv'``."""
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_FIELDS:
        raise ValueError("unexpected CSV header")
    rows = []
    for rec in reader:
        def num(k, cast=float):
            return cast(rec[k]) if rec[k] != "" else None
        rows.append(ResultRow(0, num("lambda"), num("alpha"), num("beta"), num("M", int),
                              num("N", int), num("omega"), rec["solver"], rec["precond"],
                              num("avg_iters"), num("cpu_seconds"), num("final_relres"),
                              num("error_inf"), num("error_l2")))
    return rows


# ---------------------------------------------------------------------------
# subcommands


def _out(args, text: str):
    if getattr(args, "output", None):
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_weights(args) -> int:
    p = make_params(args.alpha, args.gamma3, args.lam)
    h = args.h if args.h is not None else 1.0 / (args.M + 1)
    st = tempered_stencil(p, h, args.K)
    lines = [f"# alpha={p.alpha!r} lambda={p.lam!r} gamma3={p.gamma3!r} h={h!r} phi={float(st.phi)!r}",
             "k omega_k g_k"]
    lines += [f"{k} {float(w)!r} {float(g)!r}" for k, (w, g) in enumerate(zip(st.omega, st.g))]
    _out(args, "\n".join(lines) + "\n")
    return 0


def cmd_symbol(args) -> int:
    spec = SymbolSpec(args.alpha, args.gamma3, beta=args.beta)
    sb = smoothing_bound(spec, 2 if args.beta is not None else 1)
    text = ""
    if args.scan:
        p = make_params(args.alpha, args.gamma3, args.lam)
        data = symbol_scan(p, None, args.M, args.points)
        cols = "x f" if args.M is None else "x f_M f"
        buf = io.StringIO()
        np.savetxt(buf, data, fmt="%.17g", header=cols)
        text += buf.getvalue()
    beta = "" if args.beta is None else f" beta={args.beta!r}"
    text += (f"# alpha={args.alpha!r}{beta} gamma3={args.gamma3!r} xi={sb.xi!r} "
             f"omega_star={sb.omega_star!r} ({sb.omega_star:.2f})\n")
    _out(args, text)
    return 0


def _load_config(args) -> RunConfig:
    data = parse_config_text(Path(args.config).read_text()) if args.config else {}
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            data[f.name] = v
    return RunConfig.from_mapping(data)


def cmd_solve(args) -> int:
    cfg = _load_config(args)
    spec = example(cfg.problem, **cfg.overrides())
    omega = resolve_omega(cfg, spec)
    res = run(spec, cfg.solver_config(omega))
    row = ResultRow(spec.id, spec.lam, spec.alpha, spec.beta, spec.M, spec.N, omega,
                    cfg.solver_config(omega).label, cfg.precond, res.avg_iterations,
                    res.cpu_seconds, res.final_relres, res.error_inf, res.error_l2)
    text = emit_table([row], args.format)
    text += f"# iterations per solve: {res.iterations}\n"
    _out(args, text)
    return 0


def _floats(text):
    return tuple(float(x) for x in text.split(",")) if text else None


def _ints(text):
    return tuple(int(x) for x in text.split(",")) if text else None


def cmd_experiment(args) -> int:
    plans = table_plans(args.table, _ints(args.sizes), _floats(args.lambdas), _floats(args.alphas))
    rows = []
    for plan in plans:
        rows += run_experiment(plan, args.workers)
    text = emit_table(rows, args.format)
    failed = [r for r in rows if r.error]
    for r in failed:
        text += f"# failed: lambda={r.lam} alpha={r.alpha} M={r.M} {r.solver} {r.precond}: {r.error}\n"
    _out(args, text)
    return 0


def cmd_consistency(args) -> int:
    p = make_params(args.alpha, args.gamma3, args.lam)
    slope, hs, errs = consistency_order(p, args.side, args.p, _ints(args.sizes))
    lines = ["h error"] + [f"{float(h)!r} {float(e)!r}" for h, e in zip(hs, errs)]
    lines.append(f"# observed order {slope:.4f}")
    _out(args, "\n".join(lines) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tfmg", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--output", "-o")
        return p

    p = common(sub.add_parser("weights", help="dump Grünwald and stencil coefficients"))
    p.add_argument("--alpha", type=float, default=1.5)
    p.add_argument("--gamma3", type=float, default=0.0)
    p.add_argument("--lam", type=float, default=0.0)
    p.add_argument("--M", type=int, default=64)
    p.add_argument("--h", type=float)
    p.add_argument("--K", type=int, default=10)
    p.set_defaults(func=cmd_weights)

    p = common(sub.add_parser("symbol", help="smoothing bound and symbol scans"))
    p.add_argument("--alpha", type=float, default=1.5)
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma3", type=float, default=0.0)
    p.add_argument("--lam", type=float, default=0.0)
    p.add_argument("--M", type=int, help="include the partial sum of this order")
    p.add_argument("--points", type=int, default=2048)
    p.add_argument("--scan", action="store_true")
    p.set_defaults(func=cmd_symbol)

    p = common(sub.add_parser("solve", help="one run of a model problem"))
    p.add_argument("--config")
    p.add_argument("--problem", type=int)
    for name in ("alpha", "beta", "lambda1", "lambda2", "gamma3", "T", "tol"):
        p.add_argument(f"--{name}", type=float)
    for name in ("M", "N", "min-size", "nu1", "nu2", "maxit"):
        p.add_argument(f"--{name}", type=int, dest=name.replace("-", "_"))
    p.add_argument("--solver", choices=("mg", "cg", "gmres"))
    p.add_argument("--precond")
    p.add_argument("--omega")
    p.add_argument("--coarsening", choices=("geometric", "galerkin"))
    p.add_argument("--format", choices=("csv", "pretty"), default="pretty")
    p.set_defaults(func=cmd_solve)

    p = common(sub.add_parser("experiment", help="reproduce an iteration table"))
    p.add_argument("--table", type=int, required=True, choices=(1, 2, 3, 4, 5))
    p.add_argument("--sizes")
    p.add_argument("--lambdas")
    p.add_argument("--alphas")
    p.add_argument("--workers", type=int)
    p.add_argument("--format", choices=("csv", "pretty"), default="csv")
    p.set_defaults(func=cmd_experiment)

    p = common(sub.add_parser("consistency", help="observed order of the stencil"))
    p.add_argument("--alpha", type=float, default=1.5)
    p.add_argument("--lam", type=float, default=2.0)
    p.add_argument("--gamma3", type=float, default=0.01)
    p.add_argument("--side", choices=("left", "right"), default="left")
    p.add_argument("--p", type=float, default=4.0)
    p.add_argument("--sizes", default="31,63,127,255,511")
    p.set_defaults(func=cmd_consistency)
    return ap


def run_command(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValueError, ArithmeticError, OSError, json.JSONDecodeError) as exc:
        print(f"tfmg: error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"tfmg: run failed: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
