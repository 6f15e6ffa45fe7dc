"""Weighted-Jacobi V-cycles with linear/bilinear transfer.

Coarse levels come either from rediscretizing the PDE (``geometric``) or
from the projection ``P^T A P`` (``galerkin``).  Restriction is always the
transpose of prolongation; in geometric mode the rediscretized coarse
operator is scaled by ``2^d`` so that it approximates ``P^T A P``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .fastlinalg import materialize_dense

#: Galerkin coarsening materializes ``A P``; fine sizes above this are refused.
GALERKIN_CAP_1D = 1 << 12
GALERKIN_CAP_2D = 1 << 6  # per dimension


class MatrixOperator:
    """Explicit (dense or sparse) matrix with the operator interface."""

    def __init__(self, A):
        self.A = A if sp.issparse(A) else np.asarray(A, dtype=float)
        if sp.issparse(self.A):
            self.A = self.A.tocsr()
        self.size = self.A.shape[0]
        d = self.A.diagonal()
        self.diagonal = np.asarray(d, dtype=float)

    def matvec(self, v):
        return self.A @ v


class ScaledOperator:
    def __init__(self, op, factor: float):
        self.op = op
        self.factor = factor
        self.size = op.size
        self.diagonal = factor * np.asarray(op.diagonal)

    def matvec(self, v):
        return self.factor * self.op.matvec(v)


def prolongation_1d(M: int) -> sp.csr_matrix:
    """Linear interpolation from ``M // 2`` coarse to ``M`` fine points.

    Coarse point ``i`` (1-based) sits on fine point ``2 i``; the stencil
    ``[1/2, 1, 1/2]`` is truncated at the boundary.
    """
    m = M // 2
    if m < 1:
        raise ValueError(f"cannot coarsen size {M}")
    rows, cols, vals = [], [], []
    for j in range(m):
        c = 2 * j + 1  # 0-based fine index of fine node 2(j+1)
        for off, w in ((-1, 0.5), (0, 1.0), (1, 0.5)):
            r = c + off
            if 0 <= r < M:
                rows.append(r)
                cols.append(j)
                vals.append(w)
    return sp.csr_matrix((vals, (rows, cols)), shape=(M, m))


@dataclass(frozen=True, eq=False)
class TransferOp:
    """Prolongation ``P`` and restriction ``P^T`` between two levels."""

    fine_shape: tuple[int, ...]
    coarse_shape: tuple[int, ...]
    P: sp.csr_matrix = field(repr=False)

    @classmethod
    def build(cls, fine_shape: tuple[int, ...]) -> TransferOp:
        fine_shape = tuple(int(n) for n in fine_shape)
        parts = [prolongation_1d(n) for n in fine_shape]
        # x-fastest ordering: the x factor is the rightmost Kronecker factor
        P = parts[0]
        for Pk in parts[1:]:
            P = sp.kron(Pk, P, format="csr")
        return cls(fine_shape, tuple(n // 2 for n in fine_shape), P.tocsr())

    @cached_property
    def PT(self) -> sp.csr_matrix:
        return self.P.T.tocsr()

    @property
    def fine_size(self) -> int:
        return self.P.shape[0]

    @property
    def coarse_size(self) -> int:
        return self.P.shape[1]

    @property
    def dim(self) -> int:
        return len(self.fine_shape)

    def prolong(self, v_coarse: np.ndarray) -> np.ndarray:
        if v_coarse.shape[0] != self.coarse_size:
            raise ValueError("size mismatch in prolongation")
        return self.P @ v_coarse

    def restrict(self, v_fine: np.ndarray) -> np.ndarray:
        if v_fine.shape[0] != self.fine_size:
            raise ValueError("size mismatch in restriction")
        return self.PT @ v_fine


def prolong(t: TransferOp, v_coarse: np.ndarray) -> np.ndarray:
    return t.prolong(v_coarse)


def restrict(t: TransferOp, v_fine: np.ndarray) -> np.ndarray:
    return t.restrict(v_fine)


@dataclass(frozen=True)
class CycleConfig:
    nu1: int = 1
    nu2: int = 1
    omega: float = 2.0 / 3.0
    min_size: int = 16

    def __post_init__(self):
        if self.nu1 < 0 or self.nu2 < 0 or self.nu1 + self.nu2 == 0:
            raise ValueError("need nu1, nu2 >= 0 and not both zero")
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        if self.min_size < 1:
            raise ValueError("min_size must be >= 1")


@dataclass(eq=False)
class Level:
    op: object
    inv_diag: np.ndarray
    transfer: TransferOp | None = None


@dataclass(eq=False)
class Hierarchy:
    levels: list[Level]
    config: CycleConfig
    mode: str
    coarse_lu: tuple = field(repr=False, default=None)

    @property
    def sizes(self) -> list[int]:
        return [lev.op.size for lev in self.levels]

    @property
    def omega(self) -> float:
        return self.config.omega


class ZeroDiagonalError(ZeroDivisionError):
    pass


def _inv_diag(op) -> np.ndarray:
    d = np.asarray(op.diagonal, dtype=float)
    if np.any(d == 0):
        raise ZeroDiagonalError(f"zero diagonal entry at index {int(np.flatnonzero(d == 0)[0])}")
    return 1.0 / d


def jacobi_sweep(op, u: np.ndarray, b: np.ndarray, omega: float, count: int = 1,
                 inv_diag: np.ndarray | None = None) -> np.ndarray:
    """``count`` sweeps of ``u <- u + omega D^{-1} (b - A u)``."""
    if inv_diag is None:
        inv_diag = _inv_diag(op)
    w = omega * inv_diag
    if np.ndim(b) == 2:
        w = w[:, None]
    for _ in range(count):
        u = u + w * (b - op.matvec(u))
    return u


def _shape_of(op) -> tuple[int, ...]:
    if hasattr(op, "M1"):
        return (op.M1, op.M2)
    return (op.size,)


def _galerkin(op, P: sp.csr_matrix):
    if isinstance(op, MatrixOperator) and sp.issparse(op.A):
        return MatrixOperator((P.T @ op.A @ P).tocsr())
    if isinstance(op, MatrixOperator):
        return MatrixOperator(P.T @ (op.A @ P))
    Pd = P.toarray()
    try:
        AP = op.matvec(Pd)
    except ValueError:
        AP = np.column_stack([op.matvec(Pd[:, j]) for j in range(Pd.shape[1])])
    return MatrixOperator(P.T @ AP)


def build_hierarchy(op, config: CycleConfig, mode: str = "geometric",
                    shape: tuple[int, ...] | None = None) -> Hierarchy:
    """Multigrid levels down to ``config.min_size`` unknowns.

    Geometric mode calls ``op.rediscretize`` on each coarse grid; Galerkin
    mode forms ``P^T A P``.  The coarsest operator is LU-factorized.
    """
    if mode not in ("geometric", "galerkin"):
        raise ValueError(f"unknown coarsening mode {mode!r}")
    shape = tuple(shape) if shape is not None else _shape_of(op)
    if mode == "galerkin" and not (isinstance(op, MatrixOperator) and sp.issparse(op.A)):
        cap = GALERKIN_CAP_1D if len(shape) == 1 else GALERKIN_CAP_2D
        if max(shape) > cap:
            raise ValueError(f"galerkin coarsening refused above size {cap} per dimension")
    d = len(shape)
    levels = []
    cur = op
    while True:
        if cur.size <= config.min_size or min(shape) < 2:
            levels.append(Level(cur, _inv_diag(cur)))
            break
        t = TransferOp.build(shape)
        levels.append(Level(cur, _inv_diag(cur), t))
        shape = t.coarse_shape
        if mode == "galerkin":
            cur = _galerkin(cur, t.P)
        else:
            base = cur.op if isinstance(cur, ScaledOperator) else cur
            factor = (cur.factor if isinstance(cur, ScaledOperator) else 1.0) * 2.0 ** d
            cur = ScaledOperator(base.rediscretize(*shape), factor)
    lu = scipy.linalg.lu_factor(materialize_dense(levels[-1].op, cap=1 << 14))
    return Hierarchy(levels, config, mode, lu)


def v_cycle(hier: Hierarchy, u: np.ndarray, b: np.ndarray, level: int = 0) -> np.ndarray:
    """One V(nu1, nu2) cycle; with two levels this is the two-grid method."""
    cfg = hier.config
    lev = hier.levels[level]
    if level == len(hier.levels) - 1:
        return scipy.linalg.lu_solve(hier.coarse_lu, b)
    A = lev.op
    if cfg.nu1:
        u = jacobi_sweep(A, u, b, cfg.omega, cfg.nu1, lev.inv_diag)
    r = b - A.matvec(u)
    rc = lev.transfer.restrict(r)
    ec = v_cycle(hier, np.zeros_like(rc), rc, level + 1)
    u = u + lev.transfer.prolong(ec)
    if cfg.nu2:
        u = jacobi_sweep(A, u, b, cfg.omega, cfg.nu2, lev.inv_diag)
    return u


@dataclass
class SolveReport:
    iterations: int = 0
    history: list[float] = field(default_factory=list)
    elapsed: float = 0.0
    converged: bool = False
    final_relres: float = float("nan")
    message: str = ""


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, report: SolveReport):
        super().__init__(message)
        self.report = report


def mg_solve(hier: Hierarchy, b: np.ndarray, tol: float = 1e-7, maxit: int = 200,
             x0: np.ndarray | None = None, raise_on_fail: bool = True):
    """Stand-alone V-cycle iteration until ``||r|| / ||r0|| < tol``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    t0 = time.perf_counter()
    A = hier.levels[0].op
    b = np.asarray(b, dtype=float)
    u = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r0 = np.linalg.norm(b - A.matvec(u))
    rep = SolveReport(history=[1.0])
    if r0 == 0.0:
        rep.converged, rep.final_relres = True, 0.0
        rep.elapsed = time.perf_counter() - t0
        return u, rep
    for k in range(1, maxit + 1):
        u = v_cycle(hier, u, b)
        rel = np.linalg.norm(b - A.matvec(u)) / r0
        rep.history.append(rel)
        rep.iterations = k
        if rel < tol:
            rep.converged = True
            break
        if not np.isfinite(rel):
            break
    rep.final_relres = rep.history[-1]
    rep.elapsed = time.perf_counter() - t0
    if not rep.converged:
        rep.message = f"V-cycle iteration did not reach tol={tol} in {rep.iterations} cycles"
        if raise_on_fail:
            raise ConvergenceError(rep.message, rep)
    return u, rep
