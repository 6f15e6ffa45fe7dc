"""Model problems, forcing construction, time marching and experiment runs.

The iteration tables are driven by discretely manufactured forcing: the
right-hand side is built so that the samples of the exact solution satisfy
the discrete scheme exactly.  Iteration counts depend on the operator only,
and the marched solution can be checked against the exact samples to solver
tolerance.
"""

from __future__ import annotations

import itertools
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.special import gammaln

from .krylov import PrecondSpec, build_preconditioner, cg, gmres
from .multigrid import ConvergenceError, CycleConfig, SolveReport, build_hierarchy, mg_solve
from .stencil import (
    DiffusionField1D, DiffusionField2D, Grid1D, Operator1D, Operator2D, TimeGrid,
    cn_operator, make_params, mesh, operator_2d, operator_boundary_rhs, steady_operator,
    tempered_stencil, toeplitz_B,
)
from .symbol import omega_star

WORKERS_ENV = "TFMG_WORKERS"


# ---------------------------------------------------------------------------
# problem catalogue


@dataclass(frozen=True)
class ProblemSpec:
    """Fully specified model problem.

    ``exact`` takes ``(x, t)`` in 1D, ``(x, y, t)`` in 2D and ``x`` alone for
    steady problems.  ``T is None`` marks a steady problem.
    """

    id: int
    dim: int
    domain: tuple[tuple[float, float], ...]
    alpha: float
    lam: float
    gamma3: float
    coefficients: DiffusionField1D | DiffusionField2D
    exact: Callable | None
    M: int
    N: int | None = None
    T: float | None = None
    beta: float | None = None
    lam2: float | None = None
    forcing: str = "discrete_manufactured"

    @property
    def steady(self) -> bool:
        return self.T is None

    def params(self):
        return make_params(self.alpha, self.gamma3, self.lam)

    def params_y(self):
        return make_params(self.beta, self.gamma3, self.lam2 if self.lam2 is not None else self.lam)

    def grids(self) -> tuple[Grid1D, ...]:
        return tuple(Grid1D(a, b, self.M) for a, b in self.domain)

    def time_grid(self) -> TimeGrid:
        if self.steady:
            raise ValueError("steady problem has no time grid")
        return TimeGrid(self.T, self.N)

    def initial(self) -> np.ndarray:
        if self.steady:
            raise ValueError("steady problems have no initial condition")
        return self.exact_samples(0.0)

    def exact_samples(self, t: float | None = None) -> np.ndarray:
        if self.exact is None:
            raise ValueError("problem has no exact solution")
        if self.dim == 1:
            x = self.grids()[0].interior
            return np.asarray(self.exact(x) if self.steady else self.exact(x, t), dtype=float)
        X, Y = mesh(*self.grids())
        return np.asarray(self.exact(X, Y, t), dtype=float).ravel()

    def omega_star(self) -> float:
        return omega_star(self.alpha, self.gamma3, self.beta if self.dim == 2 else None)

    def operator(self):
        if self.dim == 2:
            gx, gy = self.grids()
            return operator_2d(self.params(), self.params_y(), gx, gy,
                               self.time_grid().tau, self.coefficients)
        grid = self.grids()[0]
        if self.steady:
            return steady_operator(self.params(), grid, self.coefficients)
        return cn_operator(self.params(), grid, self.time_grid().tau, self.coefficients)


_OVERRIDES = {"alpha", "beta", "lam", "lam2", "gamma3", "M", "N", "T", "forcing"}


def _ex1_exact(x, t):
    return np.exp(-t) * x ** 3 * (1 - x) ** 3


def _ex23_exact(x):
    return (1 - x) ** 3 - np.exp(3 * x) * (1 - x)


def _ex4_exact(x, y, t):
    return 16 * np.exp(-t) * x ** 2 * y ** 2 * (2 - x) ** 2 * (2 - y) ** 2


@dataclass(frozen=True)
class _Ex5Exact:
    lam1: float
    lam2: float

    def __call__(self, x, y, t):
        return np.exp(-t - self.lam1 * x - self.lam2 * y) * x ** 4 * y ** 4 * (1 - x) * (1 - y)


@dataclass(frozen=True)
class _Ex4Coefficient:
    order: float
    px: float
    py: float
    mirrored: bool

    def __call__(self, x, y):
        if self.mirrored:
            x, y = 3 - x, 3 - y
        else:
            x, y = 1 + x, 1 + y
        return math.gamma(3 - self.order) * x ** self.px * y ** self.py


def example(id: int, **overrides) -> ProblemSpec:
    """One of the five model problems, with optional parameter overrides."""
    bad = set(overrides) - _OVERRIDES
    if bad:
        raise ValueError(f"unknown override(s): {sorted(bad)}")
    o = dict(overrides)
    if id == 1:
        M = o.get("M", 64)
        spec = ProblemSpec(1, 1, ((0.0, 1.0),), o.get("alpha", 1.5), o.get("lam", 0.0),
                           o.get("gamma3", 0.01), DiffusionField1D(1.0, 1.0), _ex1_exact,
                           M, o.get("N", M), o.get("T", 1.0))
    elif id in (2, 3):
        field_ = DiffusionField1D(0.5, 0.5) if id == 2 else DiffusionField1D(0.3, 0.7)
        spec = ProblemSpec(id, 1, ((0.0, 1.0),), o.get("alpha", 1.4), o.get("lam", 3.0),
                           o.get("gamma3", 0.00235), field_, _ex23_exact, o.get("M", 128))
    elif id in (4, 5):
        a, b = o.get("alpha", 1.8), o.get("beta", 1.6)
        lam1 = o.get("lam", 0.0)
        lam2 = o.get("lam2", lam1)
        M = o.get("M", 16)
        if id == 4:
            fields = DiffusionField2D(_Ex4Coefficient(a, a, 2, False), _Ex4Coefficient(a, a, 2, True),
                                      _Ex4Coefficient(b, 2, b, False), _Ex4Coefficient(b, 2, b, True))
            dom, T, exact = ((0.0, 2.0), (0.0, 2.0)), o.get("T", 2.0), _ex4_exact
        else:
            fields = DiffusionField2D(1.0, 0.0, 1.0, 0.0)
            dom, T, exact = ((0.0, 1.0), (0.0, 1.0)), o.get("T", 1.0), _Ex5Exact(lam1, lam2)
        spec = ProblemSpec(id, 2, dom, a, lam1, o.get("gamma3", 0.0235), fields, exact,
                           M, o.get("N", M), T, b, lam2)
    else:
        raise ValueError(f"unknown example id {id}")
    if "forcing" in o:
        spec = replace(spec, forcing=o["forcing"])
    return spec


# ---------------------------------------------------------------------------
# forcing


def _boundary_values(spec: ProblemSpec, t: float | None) -> tuple[float, float]:
    (a, b), = spec.domain
    ends = np.array([a, b])
    vals = spec.exact(ends) if spec.steady else spec.exact(ends, t)
    return float(vals[0]), float(vals[1])


def boundary_share(spec: ProblemSpec, op, j: int | None = None) -> np.ndarray | float:
    """Dirichlet contribution to the right-hand side (1D only; zero in 2D).

    Time-dependent problems use the boundary values at steps ``j`` and
    ``j + 1``; the result is scaled like ``F`` (not yet times ``tau``).
    """
    if spec.dim != 1 or spec.exact is None:
        return 0.0
    if spec.steady:
        uL, uR = _boundary_values(spec, None)
    else:
        tg = spec.time_grid()
        l0, r0 = _boundary_values(spec, tg.times[j])
        l1, r1 = _boundary_values(spec, tg.times[j + 1])
        uL, uR = l0 + l1, r0 + r1
    if not (uL or uR):
        return 0.0
    return operator_boundary_rhs(op, uL, uR)


def forcing_discrete(spec: ProblemSpec, op, j: int | None = None) -> np.ndarray:
    """Forcing ``F`` that makes the exact samples solve the discrete system.

    Time-dependent problems return ``F^{j+1}`` with
    ``tau F = A u^{j+1} - (I + M) u^j`` minus the boundary share; steady
    problems return ``A u - boundary``.  2D problems assume homogeneous
    Dirichlet data, which holds for both 2D examples.
    """
    if spec.exact is None:
        raise ValueError("discrete forcing needs an exact solution")
    if spec.steady:
        F = op.matvec(spec.exact_samples())
    else:
        tg = spec.time_grid()
        u0 = spec.exact_samples(tg.times[j])
        u1 = spec.exact_samples(tg.times[j + 1])
        F = (op.matvec(u1) - op.explicit_matvec(u0)) / tg.tau
    return F - boundary_share(spec, op, j)


def rl_tempered_series(p: float, lam: float, alpha: float, x, side: str = "left",
                       b: float = 1.0, damped: bool = False, trunc_tol: float = 1e-16,
                       max_terms: int = 10_000) -> np.ndarray:
    """Tempered Riemann-Liouville derivative of a power function.

    Left side, ``damped=True``: ``u = e^{-lam x} x^p`` with the closed form
    ``e^{-lam x} Gamma(p+1)/Gamma(p+1-alpha) x^{p-alpha}``.  Left side,
    ``damped=False``: ``u = x^p`` through the termwise series
    ``e^{-lam x} sum_n lam^n/n! Gamma(p+n+1)/Gamma(p+n+1-alpha) x^{p+n-alpha}``.
    The right side is the mirror image in ``s = b - x``.
    """
    if p <= alpha - 1:
        raise ValueError("power must exceed alpha - 1")
    x = np.asarray(x, dtype=float)
    if side == "left":
        s = x
    elif side == "right":
        s = b - x
    else:
        raise ValueError("side must be 'left' or 'right'")
    if np.any(s <= 0):
        raise ValueError("evaluation points must lie inside the domain")
    base = np.exp(gammaln(p + 1) - gammaln(p + 1 - alpha)) * s ** (p - alpha)
    if damped or lam == 0:
        return np.exp(-lam * s) * base if damped else base
    total = np.zeros_like(s)
    ls = np.log(lam * s)
    for n in range(max_terms):
        term = np.exp(n * ls - gammaln(n + 1) + gammaln(p + n + 1) - gammaln(p + n + 1 - alpha)
                      + (p - alpha) * np.log(s))
        total += term
        if n > np.max(lam * s) and np.all(term <= trunc_tol * np.abs(total)):
            return np.exp(-lam * s) * total
    raise ArithmeticError("tempered series did not converge")


def twsgd_apply(params, u: Callable, M: int, side: str = "left",
                a: float = 0.0, b: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Shifted Grünwald approximation of the boldface tempered derivative.

    Returns interior nodes and ``h^{-alpha} (sum_k g_k u(x_{i-k+1}) - phi u(x_i))``
    (left) or its mirror image (right), using the boundary values of ``u``.
    """
    grid = Grid1D(a, b, M)
    nodes = grid.nodes
    U = u(nodes)
    B = toeplitz_B(tempered_stencil(params, grid.h, M + 3), M + 2)
    if side == "right":
        B = B.transpose()
    vals = B.matvec(U)[1:-1] / grid.h ** params.alpha
    return grid.interior, vals


def consistency_order(params, side: str = "left", p: float = 4.0,
                      M_list=(31, 63, 127, 255, 511)) -> tuple[float, np.ndarray, np.ndarray]:
    """Observed order of the stencil on ``u = e^{-lam x} x^p``.

    The right side uses the mirrored function ``e^{-lam (1-x)} (1-x)^p``.
    Returns the least-squares slope of ``log err`` against ``log h``, the
    step sizes and the max-norm errors.
    """
    lam, alpha = params.lam, params.alpha

    def u(x):
        s = x if side == "left" else 1.0 - x
        return np.exp(-lam * s) * s ** p

    hs, errs = [], []
    for M in M_list:
        x, approx = twsgd_apply(params, u, M, side)
        exact = rl_tempered_series(p, lam, alpha, x, side, damped=True) - lam ** alpha * u(x)
        hs.append(1.0 / (M + 1))
        errs.append(np.max(np.abs(approx - exact)))
    hs, errs = np.array(hs), np.array(errs)
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    return float(slope), hs, errs


# ---------------------------------------------------------------------------
# solver configuration and drivers


@dataclass(frozen=True)
class SolverConfig:
    """``method`` is ``mg`` (stand-alone V-cycles), ``cg`` or ``gmres``."""

    method: str = "mg"
    precond: str = "none"
    omega: float | None = None
    nu1: int = 1
    nu2: int = 1
    coarsening: str = "galerkin"
    min_size: int = 1
    tol: float = 1e-7
    maxit: int = 1000

    def __post_init__(self):
        if self.method not in ("mg", "cg", "gmres"):
            raise ValueError(f"unknown method {self.method!r}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        PrecondSpec.parse(self.precond)

    @property
    def label(self) -> str:
        if self.method == "mg":
            return f"mg:{self.nu1},{self.nu2}"
        return self.method


def make_solver(op, cfg: SolverConfig, omega: float):
    """Prepare the solver once; returns ``solve(b, x0) -> (x, report)``."""
    if cfg.method == "mg":
        hier = build_hierarchy(op, CycleConfig(cfg.nu1, cfg.nu2, omega, cfg.min_size),
                               cfg.coarsening)
        return lambda b, x0: mg_solve(hier, b, cfg.tol, cfg.maxit, x0)
    P = build_preconditioner(cfg.precond, op, omega=omega, coarsening=cfg.coarsening,
                             min_size=cfg.min_size)
    krylov = cg if cfg.method == "cg" else gmres
    return lambda b, x0: krylov(op, P, b, x0, cfg.tol, cfg.maxit)


def error_norms(u: np.ndarray, exact: np.ndarray, h: float) -> tuple[float, float]:
    """Max norm and the grid ``L2`` norm ``sqrt(h sum d^2)`` of ``u - exact``."""
    u, exact = np.asarray(u, dtype=float), np.asarray(exact, dtype=float)
    if u.shape != exact.shape:
        raise ValueError("size mismatch")
    d = u - exact
    if d.size == 0:
        return 0.0, 0.0
    return float(np.max(np.abs(d))), float(np.sqrt(h * np.sum(d * d)))


def _cell_size(spec: ProblemSpec) -> float:
    return float(np.prod([g.h for g in spec.grids()]))


@dataclass
class RunResult:
    u: np.ndarray
    reports: list[SolveReport]
    omega: float
    cpu_seconds: float
    error_inf: float | None = None
    error_l2: float | None = None

    @property
    def iterations(self) -> list[int]:
        return [r.iterations for r in self.reports]

    @property
    def avg_iterations(self) -> float:
        return float(np.mean(self.iterations)) if self.reports else 0.0

    @property
    def final_relres(self) -> float:
        return self.reports[-1].final_relres if self.reports else 0.0


def _forcing(spec: ProblemSpec, op, j: int | None) -> np.ndarray:
    if spec.forcing == "discrete_manufactured":
        return forcing_discrete(spec, op, j)
    if spec.forcing == "zero":
        return np.zeros(op.size)
    if spec.forcing == "analytic_series" and spec.id == 1:
        tg = spec.time_grid()
        return example1_forcing(spec, 0.5 * (tg.times[j] + tg.times[j + 1]))
    raise ValueError(f"forcing mode {spec.forcing!r} not available for example {spec.id}")


def cn_march(spec: ProblemSpec, cfg: SolverConfig, omega: float | None = None) -> RunResult:
    """Crank-Nicolson march with the previous step as initial guess."""
    if spec.steady:
        raise ValueError("cn_march needs a time-dependent problem")
    t0 = time.process_time()
    op = spec.operator()
    omega = omega if omega is not None else (cfg.omega if cfg.omega is not None else spec.omega_star())
    solve = make_solver(op, cfg, omega)
    tg = spec.time_grid()
    u = spec.initial() if spec.exact is not None else np.zeros(op.size)
    reports = []
    for j in range(tg.N):
        rhs = op.explicit_matvec(u) + tg.tau * (_forcing(spec, op, j) + boundary_share(spec, op, j))
        try:
            u, rep = solve(rhs, u)
        except ConvergenceError as exc:
            raise ConvergenceError(f"time step {j + 1}: {exc}", exc.report) from exc
        reports.append(rep)
    res = RunResult(u, reports, omega, time.process_time() - t0)
    if spec.exact is not None:
        res.error_inf, res.error_l2 = error_norms(u, spec.exact_samples(tg.T), _cell_size(spec))
    return res


def steady_solve(spec: ProblemSpec, cfg: SolverConfig, omega: float | None = None) -> RunResult:
    """Single solve of a steady problem from the zero initial guess."""
    if not spec.steady:
        raise ValueError("steady_solve needs a steady problem")
    t0 = time.process_time()
    op = spec.operator()
    omega = omega if omega is not None else (cfg.omega if cfg.omega is not None else spec.omega_star())
    solve = make_solver(op, cfg, omega)
    u, rep = solve(_forcing(spec, op, None) + boundary_share(spec, op, None), None)
    res = RunResult(u, [rep], omega, time.process_time() - t0)
    if spec.exact is not None:
        res.error_inf, res.error_l2 = error_norms(u, spec.exact_samples(), _cell_size(spec))
    return res


def run(spec: ProblemSpec, cfg: SolverConfig, omega: float | None = None) -> RunResult:
    return steady_solve(spec, cfg, omega) if spec.steady else cn_march(spec, cfg, omega)


# ---------------------------------------------------------------------------
# analytic forcing for the first example


def _poly_tempered(coeffs: np.ndarray, lam: float, alpha: float, s: np.ndarray) -> np.ndarray:
    # tempered RL derivative of sum_p coeffs[p] s^p (coeffs[p] = 0 for p < 2)
    out = np.zeros_like(s)
    for p, c in enumerate(coeffs):
        if c:
            out += c * rl_tempered_series(p, lam, alpha, s, "left")
    return out


def example1_forcing(spec: ProblemSpec, t: float) -> np.ndarray:
    """Continuous forcing of the first example from the series oracle."""
    x = spec.grids()[0].interior
    a, lam = spec.alpha, spec.lam
    P = np.polynomial.Polynomial([0, 0, 0, 1, -3, 3, -1])  # x^3 (1-x)^3
    Q = P(np.polynomial.Polynomial([1, -1]))  # same polynomial in s = 1 - x
    pos = P(x)
    dP = P.deriv()(x)
    c_l, c_r = spec.coefficients.sample(x)
    left = _poly_tempered(P.coef, lam, a, x) - lam ** a * pos
    right = _poly_tempered(Q.coef, lam, a, 1 - x) - lam ** a * pos
    adv = a * lam ** (a - 1) * dP if lam else 0.0
    space = c_l * (left - adv) + c_r * (right + adv)
    e = math.exp(-t)
    return -e * pos - e * space


# ---------------------------------------------------------------------------
# experiments


@dataclass(frozen=True)
class RunSpec:
    """One point of a plan: problem parameters plus a solver."""

    problem: int
    alpha: float
    lam: float
    M: int
    solver: SolverConfig
    beta: float | None = None
    gamma3: float | None = None
    omega: float | None = None

    def problem_spec(self) -> ProblemSpec:
        o = dict(alpha=self.alpha, lam=self.lam, M=self.M)
        if self.problem in (1, 4, 5):
            o["N"] = self.M
        if self.beta is not None:
            o["beta"] = self.beta
        if self.gamma3 is not None:
            o["gamma3"] = self.gamma3
        return example(self.problem, **o)


@dataclass(frozen=True)
class ExperimentPlan:
    """Cartesian lattice of problem parameters and solvers."""

    problem: int
    alphas: tuple[float, ...]
    lambdas: tuple[float, ...]
    sizes: tuple[int, ...]
    solvers: tuple[SolverConfig, ...]
    omegas: tuple[float | None, ...] = (None,)
    beta: float | None = None
    gamma3: float | None = None
    repetitions: int = 1

    def runs(self) -> list[RunSpec]:
        out = []
        for lam, alpha, M, solver, om in itertools.product(
                self.lambdas, self.alphas, self.sizes, self.solvers, self.omegas):
            out.append(RunSpec(self.problem, alpha, lam, M, solver, self.beta, self.gamma3, om))
        return out


@dataclass
class ResultRow:
    problem: int
    lam: float
    alpha: float
    beta: float | None
    M: int
    N: int | None
    omega: float | None
    solver: str
    precond: str
    avg_iters: float | None = None
    cpu_seconds: float | None = None
    final_relres: float | None = None
    error_inf: float | None = None
    error_l2: float | None = None
    error: str = ""

    def as_dict(self) -> dict:
        return asdict(self)


def execute(rs: RunSpec, repetitions: int = 1) -> ResultRow:
    spec = rs.problem_spec()
    cfg = rs.solver
    row = ResultRow(rs.problem, rs.lam, rs.alpha, spec.beta, spec.M, spec.N, None,
                    cfg.label, cfg.precond)
    try:
        omega = rs.omega if rs.omega is not None else cfg.omega
        if omega is None and (cfg.method == "mg" or PrecondSpec.parse(cfg.precond).kind == "mg"):
            omega = spec.omega_star()
        times = []
        for _ in range(max(1, repetitions)):
            res = run(spec, cfg, omega if omega is not None else 0.8)
            times.append(res.cpu_seconds)
        row.omega = omega
        row.avg_iters = res.avg_iterations
        row.cpu_seconds = min(times)
        row.final_relres = res.final_relres
        row.error_inf, row.error_l2 = res.error_inf, res.error_l2
    except (ConvergenceError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        row.error = f"{type(exc).__name__}: {exc}"
    return row


def _execute_packed(args):
    return execute(*args)


def run_experiment(plan: ExperimentPlan, workers: int | None = None) -> list[ResultRow]:
    """Execute every run of the plan; failures are recorded in the rows."""
    runs = plan.runs()
    if not runs:
        return []
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    jobs = [(rs, plan.repetitions) for rs in runs]
    if workers <= 1:
        return [_execute_packed(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_execute_packed, jobs))


# table layouts of the reference experiments
OMEGAS_T1 = (0.5, 0.6, 0.7, 0.8, 0.9, None)


def table_plans(table: int, sizes: tuple[int, ...] | None = None,
                lambdas: tuple[float, ...] | None = None,
                alphas: tuple[float, ...] | None = None) -> list[ExperimentPlan]:
    """Plans reproducing the layout of the five iteration tables."""
    if table == 1:
        return [ExperimentPlan(1, alphas or (1.2, 1.5, 1.8), lambdas or (0.0, 2.0, 10.0),
                               sizes or (64, 128, 256, 512), (SolverConfig("mg"),), OMEGAS_T1)]
    if table in (2, 3):
        sizes = sizes or (128, 256, 512, 1024)
        alphas = alphas or (1.4, 1.7, 1.9)
        lam = lambdas or (3.0,)
        plans = []
        if table == 2:
            plans.append(ExperimentPlan(2, alphas, lam, sizes, (SolverConfig("cg"),)))
            plans.append(ExperimentPlan(2, alphas, lam, sizes, (SolverConfig("mg"),),
                                        (0.5, 0.6, 0.7, 0.8, 0.9, None)))
            plans.append(ExperimentPlan(2, alphas, lam, sizes, (
                SolverConfig("mg", nu1=0, nu2=1),
                SolverConfig("cg", "mg:1,1"),
                SolverConfig("cg", "circulant"),
                SolverConfig("cg", "laplacian"))))
        else:
            plans.append(ExperimentPlan(3, alphas, lam, sizes, (
                SolverConfig("gmres"),
                SolverConfig("mg"),
                SolverConfig("mg", nu1=0, nu2=1),
                SolverConfig("gmres", "mg:1,1"),
                SolverConfig("gmres", "mg:0,1"),
                SolverConfig("gmres", "circulant"),
                SolverConfig("gmres", "laplacian"))))
        return plans
    if table in (4, 5):
        return [ExperimentPlan(table, alphas or (1.8,), lambdas or (0.0, 1.0, 5.0),
                               sizes or (16, 32), (
                                   SolverConfig("gmres"),
                                   SolverConfig("gmres", "laplacian"),
                                   SolverConfig("gmres", "laplacian-inner:1"),
                                   SolverConfig("gmres", "laplacian-inner:2"),
                                   SolverConfig("gmres", "mg:1,1", coarsening="galerkin"),
                                   SolverConfig("gmres", "mg:1,1", coarsening="geometric"),
                                   SolverConfig("gmres", "circulant")), beta=1.6)]
    raise ValueError(f"unknown table {table}")
