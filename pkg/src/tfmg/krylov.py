"""Preconditioned CG and GMRES plus the preconditioners compared in the tables.

Preconditioners expose ``apply(v)`` returning an approximation of
``A^{-1} v``.  CG stops on the true residual relative to the initial one
(the recursive residual triggers a check against ``b - A x``); GMRES is full
(no restart), left preconditioned, and stops on the preconditioned residual.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fastlinalg import (
    CirculantDescriptor, TridiagonalFactor, chan_circulant, circulant_solve,
    check_spectrum,
)
from .multigrid import (
    ConvergenceError, CycleConfig, Hierarchy, MatrixOperator, SolveReport,
    build_hierarchy, v_cycle,
)
from .stencil import Operator1D, Operator2D, make_params, tempered_stencil, toeplitz_B


class BreakdownError(ConvergenceError):
    pass


# ---------------------------------------------------------------------------
# preconditioners


class Preconditioner:
    kind = "identity"

    def apply(self, v: np.ndarray) -> np.ndarray:
        return np.array(v, dtype=float)

    def __call__(self, v):
        return self.apply(v)


class IdentityPreconditioner(Preconditioner):
    pass


class MultigridPreconditioner(Preconditioner):
    """``cycles`` V-cycles from a zero initial guess."""

    kind = "mg"

    def __init__(self, hier: Hierarchy, cycles: int = 1):
        self.hier = hier
        self.cycles = cycles

    def apply(self, v):
        u = np.zeros_like(v, dtype=float)
        for _ in range(self.cycles):
            u = v_cycle(self.hier, u, v)
        return u


class CirculantPreconditioner(Preconditioner):
    kind = "circulant"

    def __init__(self, C: CirculantDescriptor):
        self.C = C
        check_spectrum(C.spectrum)

    def apply(self, v):
        return circulant_solve(self.C, v)


class Circulant2DPreconditioner(Preconditioner):
    """Two-level circulant inverted by 2D FFT diagonalization."""

    kind = "circulant"

    def __init__(self, eigenvalues: np.ndarray):
        check_spectrum(eigenvalues.ravel())
        self.eigenvalues = eigenvalues  # shape (M2, M1)

    def apply(self, v):
        M2, M1 = self.eigenvalues.shape
        V = np.asarray(v, dtype=float).reshape(M2, M1)
        return np.fft.ifft2(np.fft.fft2(V) / self.eigenvalues).real.ravel()


class TridiagonalPreconditioner(Preconditioner):
    kind = "laplacian"

    def __init__(self, factor: TridiagonalFactor):
        self.factor = factor

    def apply(self, v):
        return self.factor.solve(v)


class SparseLUPreconditioner(Preconditioner):
    kind = "laplacian"

    def __init__(self, A: sp.spmatrix):
        self.A = A.tocsc()
        self.lu = spla.splu(self.A)

    def apply(self, v):
        return self.lu.solve(np.asarray(v, dtype=float))


def laplacian_matrix(M: int) -> sp.csr_matrix:
    """``tridiag{1, -2, 1}`` assembled from the alpha=2, lam=0 stencil."""
    B = toeplitz_B(tempered_stencil(make_params(2.0, 0.0, 0.0), 1.0, max(M + 1, 2)), M)
    lo, d, up = B.first_col[1] if M > 1 else 0.0, B.first_col[0], B.first_row[1] if M > 1 else 0.0
    return sp.diags([np.full(M - 1, lo), np.full(M, d), np.full(M - 1, up)], [-1, 0, 1],
                    format="csr")


def laplacian_system_1d(op: Operator1D) -> sp.csr_matrix:
    L = laplacian_matrix(op.size)
    S = sp.diags(op.c_l) @ L + sp.diags(op.c_r) @ L.T
    return (op.identity_weight * sp.identity(op.size) - op.diff_scale * S).tocsr()


def laplacian_system_2d(op: Operator2D) -> sp.csr_matrix:
    """``P_2 = I - (P_x + P_y)`` without advection terms."""
    Lx, Ly = laplacian_matrix(op.M1), laplacian_matrix(op.M2)
    Ix, Iy = sp.identity(op.M1), sp.identity(op.M2)
    Cl, Cr, El, Er = (sp.diags(c.ravel()) for c in op.coeffs)
    Px = op.r1 * (Cl @ sp.kron(Iy, Lx) + Cr @ sp.kron(Iy, Lx.T))
    Py = op.r2 * (El @ sp.kron(Ly, Ix) + Er @ sp.kron(Ly.T, Ix))
    return (sp.identity(op.size) - Px - Py).tocsr()


def _chan_advection(n: int) -> np.ndarray:
    """First column of the Chan circulant of ``tridiag{-1, 0, 1}``."""
    h = np.zeros(n)
    if n > 2:
        h[1] -= (n - 1) / n
        h[-1] += (n - 1) / n
    return h


def circulant_1d(op: Operator1D) -> CirculantDescriptor:
    """Chan circulant of ``op`` with coefficients replaced by their means."""
    cl, cr = float(np.mean(op.c_l)), float(np.mean(op.c_r))
    CB = chan_circulant(op.B)
    CBt = CB.transpose()
    col = -op.diff_scale * (cl * CB.first_col + cr * CBt.first_col)
    col[0] += op.identity_weight
    if op.adv_scale and cl != cr:
        col += op.adv_scale * (cl - cr) * _chan_advection(op.size)
    return CirculantDescriptor(col)


def circulant_2d_eigenvalues(op: Operator2D) -> np.ndarray:
    """Eigenvalues (shape ``(M2, M1)``) of the two-level Chan circulant.

    Each coefficient is replaced by its grid mean.  With equal left and right
    means this is ``I - r1 c+ (C + C^T) - r2 e+ (C + C^T)`` in the respective
    directions; otherwise the one-sided parts and the advection terms keep
    their own weights, as in the 1D preconditioner.
    """
    cl, cr, el, er = (float(np.mean(c)) for c in op.coeffs)
    mx = chan_circulant(op.Bx).spectrum
    my = chan_circulant(op.By).spectrum
    ex = cl * mx + cr * np.conj(mx)
    ey = el * my + er * np.conj(my)
    hx = np.fft.fft(_chan_advection(op.M1))
    hy = np.fft.fft(_chan_advection(op.M2))
    ev = 1.0 - (op.r1 * ex[None, :] + op.r2 * ey[:, None]) \
        + op.s1 * (cl - cr) * hx[None, :] + op.s2 * (el - er) * hy[:, None]
    return ev


@dataclass(frozen=True)
class PrecondSpec:
    """Parsed preconditioner request.

    ``kind`` is one of ``none``, ``mg``, ``circulant``, ``laplacian`` (exact
    inversion) and ``laplacian-inner`` (``nu`` V(0,1) cycles on the Laplacian
    system).
    """

    kind: str = "none"
    nu1: int = 1
    nu2: int = 1
    nu: int = 1

    @classmethod
    def parse(cls, text: str) -> PrecondSpec:
        text = (text or "none").strip().lower()
        name, _, arg = text.partition(":")
        if name in ("none", "identity"):
            return cls("none")
        if name == "mg":
            nu1, nu2 = (int(x) for x in (arg or "1,1").split(","))
            return cls("mg", nu1, nu2)
        if name == "circulant":
            return cls("circulant")
        if name == "laplacian":
            return cls("laplacian")
        if name == "laplacian-inner":
            return cls("laplacian-inner", nu=int(arg or 1))
        raise ValueError(f"unknown preconditioner {text!r}")

    def __str__(self):
        if self.kind == "mg":
            return f"mg:{self.nu1},{self.nu2}"
        if self.kind == "laplacian-inner":
            return f"laplacian-inner:{self.nu}"
        return self.kind


def build_preconditioner(kind: str | PrecondSpec, op, *, omega: float | None = None,
                         coarsening: str = "galerkin", min_size: int = 1,
                         inner_omega: float = 0.8, hierarchy: Hierarchy | None = None
                         ) -> Preconditioner:
    """Prepare one of the preconditioners for the system operator ``op``."""
    spec = kind if isinstance(kind, PrecondSpec) else PrecondSpec.parse(kind)
    two_d = isinstance(op, Operator2D)
    if spec.kind == "none":
        return IdentityPreconditioner()
    if spec.kind == "mg":
        if hierarchy is None:
            if omega is None:
                raise ValueError("multigrid preconditioner needs omega")
            cfg = CycleConfig(spec.nu1, spec.nu2, omega, min_size)
            hierarchy = build_hierarchy(op, cfg, coarsening)
        return MultigridPreconditioner(hierarchy)
    if spec.kind == "circulant":
        if two_d:
            return Circulant2DPreconditioner(circulant_2d_eigenvalues(op))
        if isinstance(op, Operator1D):
            return CirculantPreconditioner(circulant_1d(op))
        raise TypeError("circulant preconditioner needs a structured operator")
    if spec.kind in ("laplacian", "laplacian-inner"):
        if two_d:
            P2 = laplacian_system_2d(op)
            if spec.kind == "laplacian":
                return SparseLUPreconditioner(P2)
            cfg = CycleConfig(0, 1, inner_omega, min_size)
            hier = build_hierarchy(MatrixOperator(P2), cfg, "galerkin", shape=(op.M1, op.M2))
            return MultigridPreconditioner(hier, cycles=spec.nu)
        P2 = laplacian_system_1d(op)
        if spec.kind == "laplacian":
            n = op.size
            d = P2.diagonal()
            lo = P2.diagonal(-1) if n > 1 else np.zeros(0)
            up = P2.diagonal(1) if n > 1 else np.zeros(0)
            return TridiagonalPreconditioner(TridiagonalFactor.factor(lo, d, up))
        cfg = CycleConfig(0, 1, inner_omega, min_size)
        hier = build_hierarchy(MatrixOperator(P2), cfg, "galerkin", shape=(op.size,))
        return MultigridPreconditioner(hier, cycles=spec.nu)
    raise ValueError(f"unknown preconditioner kind {spec.kind!r}")


# ---------------------------------------------------------------------------
# Krylov solvers


def _finish(rep: SolveReport, t0: float, op, b, x, tol, raise_on_fail, name):
    rb = np.linalg.norm(b - op.matvec(x))
    rep.elapsed = time.perf_counter() - t0
    rep.final_relres = rb / rep._r0 if rep._r0 else 0.0
    if not rep.converged:
        rep.message = f"{name} did not reach tol={tol} in {rep.iterations} iterations"
        if raise_on_fail:
            raise ConvergenceError(rep.message, rep)
    return x, rep


def cg(op, precond: Preconditioner | None, b: np.ndarray, x0: np.ndarray | None = None,
       tol: float = 1e-7, maxit: int = 1000, raise_on_fail: bool = True):
    """Preconditioned conjugate gradients."""
    t0 = time.perf_counter()
    M = precond or IdentityPreconditioner()
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - op.matvec(x)
    r0 = np.linalg.norm(r)
    rep = SolveReport(history=[1.0])
    rep._r0 = r0
    if r0 == 0.0:
        rep.converged = True
        return _finish(rep, t0, op, b, x, tol, raise_on_fail, "CG")
    z = M.apply(r)
    p = z.copy()
    rz = r @ z
    for k in range(1, maxit + 1):
        Ap = op.matvec(p)
        pAp = p @ Ap
        if not pAp > 0:
            rep.message = f"nonpositive curvature {pAp:.3e} at iteration {k}"
            raise BreakdownError(rep.message, rep)
        a = rz / pAp
        x += a * p
        r -= a * Ap
        rel = np.linalg.norm(r) / r0
        rep.history.append(rel)
        rep.iterations = k
        if rel < tol:
            # confirm on the true residual; resume from it if drift is visible
            r = b - op.matvec(x)
            rel = np.linalg.norm(r) / r0
            rep.history[-1] = rel
            if rel < tol:
                rep.converged = True
                break
        z = M.apply(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return _finish(rep, t0, op, b, x, tol, raise_on_fail, "CG")


def gmres(op, precond: Preconditioner | None, b: np.ndarray, x0: np.ndarray | None = None,
          tol: float = 1e-7, maxit: int = 1000, raise_on_fail: bool = True):
    """Full GMRES, modified Gram-Schmidt, left preconditioning."""
    t0 = time.perf_counter()
    M = precond or IdentityPreconditioner()
    b = np.asarray(b, dtype=float)
    n = b.size
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r_true = b - op.matvec(x)
    rep = SolveReport(history=[1.0])
    rep._r0 = np.linalg.norm(r_true)
    r = M.apply(r_true)
    beta = np.linalg.norm(r)
    if beta == 0.0:
        rep.converged = True
        return _finish(rep, t0, op, b, x, tol, raise_on_fail, "GMRES")
    m = min(maxit, n)
    V = np.zeros((m + 1, n))
    Hm = np.zeros((m + 1, m))
    cs, sn = np.zeros(m), np.zeros(m)
    g = np.zeros(m + 1)
    g[0] = beta
    V[0] = r / beta
    k = 0
    for k in range(1, m + 1):
        j = k - 1
        w = M.apply(op.matvec(V[j]))
        for i in range(k):
            Hm[i, j] = w @ V[i]
            w -= Hm[i, j] * V[i]
        Hm[k, j] = np.linalg.norm(w)
        for i in range(j):
            t = cs[i] * Hm[i, j] + sn[i] * Hm[i + 1, j]
            Hm[i + 1, j] = -sn[i] * Hm[i, j] + cs[i] * Hm[i + 1, j]
            Hm[i, j] = t
        denom = np.hypot(Hm[j, j], Hm[k, j])
        cs[j], sn[j] = (Hm[j, j] / denom, Hm[k, j] / denom) if denom else (1.0, 0.0)
        Hm[j, j] = denom
        Hm[k, j] = 0.0
        g[k] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]
        rel = abs(g[k]) / beta
        rep.history.append(rel)
        rep.iterations = k
        happy = Hm[j, j] != 0 and np.linalg.norm(w) <= 1e-14 * beta
        if rel < tol or happy:
            rep.converged = True
            break
        V[k] = w / np.linalg.norm(w)
    y = np.linalg.solve(np.triu(Hm[:k, :k]), g[:k]) if k else np.zeros(0)
    x += V[:k].T @ y
    return _finish(rep, t0, op, b, x, tol, raise_on_fail, "GMRES")
