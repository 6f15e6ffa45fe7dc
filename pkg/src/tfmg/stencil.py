"""Tempered shifted Grünwald stencils and the discrete CN/steady operators.

The spatial discretization of ``c_l D_left + c_r D_right`` on a uniform grid
uses the tempered weighted-and-shifted Grünwald difference with shifts
``{1, 0, -1}``.  All operators here are matrix-free: they store Toeplitz
descriptors and coefficient samples and apply themselves with FFTs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Union

import numpy as np

from .fastlinalg import ToeplitzDescriptor, toeplitz_matvec

Coefficient = Union[float, Callable[..., np.ndarray]]


class GammaIntervalWarning(UserWarning):
    """gamma3 lies outside the interval that guarantees the stencil sign pattern."""


def _check_order(alpha: float, allow_two: bool = True) -> None:
    hi_ok = alpha <= 2.0 if allow_two else alpha < 2.0
    if not (alpha > 1.0 and hi_ok):
        raise ValueError(f"fractional order must lie in (1, 2], got {alpha}")


def grunwald_weights(alpha: float, K: int) -> np.ndarray:
    """Grünwald weights ``(-1)^k binom(alpha, k)`` for ``k = 0..K``."""
    _check_order(alpha)
    if K < 0:
        raise ValueError("K must be nonnegative")
    w = np.empty(K + 1)
    w[0] = 1.0
    if K:
        k = np.arange(1, K + 1)
        w[1:] = np.cumprod(1.0 - (alpha + 1.0) / k)
    return w


def gamma3_interval(alpha: float) -> tuple[float, float]:
    """Admissible ``gamma3`` range for the sign pattern of the stencil."""
    a = alpha
    lo = max((2 - a) * (a * a + a - 8) / (2 * (a * a + 3 * a + 2)),
             (1 - a) * (a * a + 2 * a) / (2 * (a * a + 3 * a + 4)))
    hi = (2 - a) * (a * a + 2 * a - 3) / (2 * (a * a + 3 * a + 2))
    return lo, hi


@dataclass(frozen=True)
class FractionalParams:
    alpha: float
    lam: float
    gamma3: float
    gamma1: float
    gamma2: float
    valid: bool


def make_params(alpha: float, gamma3: float = 0.0, lam: float = 0.0,
                warn: bool = True) -> FractionalParams:
    """Shift weights for the second-order scheme at a fixed ``gamma3``.

    ``alpha = 2`` is accepted for building the Laplacian stencil.  A ``gamma3``
    outside the admissible interval only clears the ``valid`` flag.
    """
    _check_order(alpha)
    if lam < 0:
        raise ValueError(f"tempering parameter must be >= 0, got {lam}")
    gamma1 = alpha / 2 + gamma3
    gamma2 = (2 - alpha) / 2 - 2 * gamma3
    lo, hi = gamma3_interval(alpha)
    valid = lo <= gamma3 <= hi
    if not valid and warn:
        warnings.warn(f"gamma3={gamma3} outside [{lo:.6g}, {hi:.6g}] for alpha={alpha}; "
                      "sign guarantees of the stencil do not apply", GammaIntervalWarning,
                      stacklevel=2)
    return FractionalParams(alpha, lam, gamma3, gamma1, gamma2, valid)


def phi_value(params: FractionalParams, h: float) -> float:
    if h <= 0:
        raise ValueError("h must be positive")
    hl = h * params.lam
    return ((params.gamma1 * math.exp(hl) + params.gamma2 + params.gamma3 * math.exp(-hl))
            * (-math.expm1(-hl)) ** params.alpha)


@dataclass(frozen=True, eq=False)
class TemperedStencil:
    params: FractionalParams
    h: float
    g: np.ndarray
    phi: float
    omega: np.ndarray

    @property
    def K(self) -> int:
        return self.g.size - 1


def tempered_stencil(params: FractionalParams, h: float, K: int) -> TemperedStencil:
    """Coefficients ``g_0..g_K`` of the tempered shifted Grünwald stencil."""
    if K < 2:
        raise ValueError("K must be at least 2")
    w = grunwald_weights(params.alpha, K)
    g1, g2, g3 = params.gamma1, params.gamma2, params.gamma3
    hl = h * params.lam
    g = np.empty(K + 1)
    g[0] = g1 * w[0] * math.exp(hl)
    g[1] = g1 * w[1] + g2 * w[0]
    k = np.arange(2, K + 1)
    g[2:] = (g1 * w[2:] + g2 * w[1:-1] + g3 * w[:-2]) * np.exp(-(k - 1) * hl)
    g.flags.writeable = False
    w.flags.writeable = False
    return TemperedStencil(params, h, g, phi_value(params, h), w)


def toeplitz_B(stencil: TemperedStencil, M: int) -> ToeplitzDescriptor:
    """Lower-Hessenberg Toeplitz matrix of the left operator (times ``h^alpha``)."""
    if M < 1:
        raise ValueError("M must be positive")
    if stencil.K < M:
        raise ValueError(f"stencil has {stencil.K + 1} coefficients, need {M + 1}")
    g = stencil.g
    col = np.array(g[1:M + 1], dtype=float)
    col[0] -= stencil.phi
    row = np.zeros(M)
    row[0] = col[0]
    if M > 1:
        row[1] = g[0]
    return ToeplitzDescriptor(col, row)


def advection_matvec(v: np.ndarray, axis: int = -1) -> np.ndarray:
    """``tridiag{-1, 0, 1} @ v`` along ``axis``."""
    v = np.moveaxis(np.asarray(v, dtype=float), axis, -1)
    y = np.zeros_like(v)
    y[..., :-1] += v[..., 1:]
    y[..., 1:] -= v[..., :-1]
    return np.moveaxis(y, -1, axis)


@dataclass(frozen=True)
class Grid1D:
    a: float
    b: float
    M: int

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if not self.b > self.a:
            raise ValueError("need b > a")

    @property
    def h(self) -> float:
        return (self.b - self.a) / (self.M + 1)

    @property
    def nodes(self) -> np.ndarray:
        x = self.a + self.h * np.arange(self.M + 2)
        x[-1] = self.b
        return x

    @property
    def interior(self) -> np.ndarray:
        return self.nodes[1:-1]

    def coarsen(self) -> Grid1D:
        """Uniform grid of ``M // 2`` interior nodes on the same interval.

        For odd ``M`` these are the even-indexed fine nodes (spacing ``2h``);
        for even ``M`` the spacing is ``(b - a) / (M // 2 + 1)``, slightly
        below ``2h``, so the domain is kept on every level.
        """
        return Grid1D(self.a, self.b, self.M // 2)


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    def __post_init__(self):
        if self.N < 1 or self.T <= 0:
            raise ValueError("need N >= 1 and T > 0")

    @property
    def tau(self) -> float:
        return self.T / self.N

    @property
    def times(self) -> np.ndarray:
        return self.tau * np.arange(self.N + 1)


def _sample(c: Coefficient, *xs: np.ndarray) -> np.ndarray:
    if callable(c):
        out = np.broadcast_to(np.asarray(c(*xs), dtype=float), np.broadcast(*xs).shape)
    else:
        out = np.full(np.broadcast(*xs).shape, float(c))
    if np.any(out < 0):
        raise ValueError("diffusion coefficients must be nonnegative")
    return np.array(out)


@dataclass(frozen=True)
class DiffusionField1D:
    """Left/right diffusion coefficients, constants or callables ``c(x)``."""

    c_l: Coefficient = 1.0
    c_r: Coefficient = 1.0

    def sample(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _sample(self.c_l, x), _sample(self.c_r, x)

    @property
    def is_constant(self) -> bool:
        return not callable(self.c_l) and not callable(self.c_r)


@dataclass(frozen=True, eq=False)
class Operator1D:
    """Matrix-free ``A v = w v - k_d (C_l B + C_r B^T) v + k_a (C_l - C_r) H v``.

    CN mode: ``w = 1``, ``k_d = tau / (2 h^alpha)``,
    ``k_a = alpha tau lam^(alpha-1) / (4 h)``.  Steady mode: ``w = 0``,
    ``k_d = 1 / h^alpha``, ``k_a = alpha lam^(alpha-1) / (2 h)``.
    """

    params: FractionalParams
    grid: Grid1D
    field: DiffusionField1D
    identity_weight: float
    diff_scale: float
    adv_scale: float
    B: ToeplitzDescriptor
    c_l: np.ndarray
    c_r: np.ndarray
    tau: float | None = None

    @property
    def size(self) -> int:
        return self.grid.M

    @property
    def mode(self) -> str:
        return "cn" if self.identity_weight else "steady"

    @cached_property
    def Bt(self) -> ToeplitzDescriptor:
        return self.B.transpose()

    @cached_property
    def _adv(self) -> np.ndarray:
        return self.adv_scale * (self.c_l - self.c_r)

    @cached_property
    def has_advection(self) -> bool:
        return bool(np.any(self._adv != 0))

    @cached_property
    def diagonal(self) -> np.ndarray:
        d = self.identity_weight - self.diff_scale * (self.c_l + self.c_r) * self.B.diagonal_value
        d = np.broadcast_to(d, (self.size,)).copy()
        d.flags.writeable = False
        return d

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.size:
            raise ValueError(f"size mismatch: operator {self.size}, vector {v.shape[0]}")
        cl = self.c_l if v.ndim == 1 else self.c_l[:, None]
        cr = self.c_r if v.ndim == 1 else self.c_r[:, None]
        y = toeplitz_matvec(self.B, v, axis=0) * cl + toeplitz_matvec(self.Bt, v, axis=0) * cr
        y *= -self.diff_scale
        if self.identity_weight:
            y += self.identity_weight * v
        if self.has_advection:
            adv = self._adv if v.ndim == 1 else self._adv[:, None]
            y += adv * advection_matvec(v, axis=0)
        return y

    def explicit_matvec(self, v: np.ndarray) -> np.ndarray:
        """``(I + M) v`` for a CN operator ``A = I - M``."""
        return 2.0 * v - self.matvec(v)

    def rediscretize(self, M: int | None = None) -> Operator1D:
        """Same continuous problem on the next coarser grid."""
        grid = self.grid.coarsen()
        if M is not None and M != grid.M:
            raise ValueError(f"coarse size {M} does not match {grid.M}")
        if self.identity_weight:
            return cn_operator(self.params, grid, self.tau, self.field)
        return steady_operator(self.params, grid, self.field)


def _assemble_1d(params, grid, field, identity_weight, diff_scale, adv_scale, tau):
    stencil = tempered_stencil(params, grid.h, max(grid.M + 1, 2))
    B = toeplitz_B(stencil, grid.M)
    c_l, c_r = field.sample(grid.interior)
    for c in (c_l, c_r):
        c.flags.writeable = False
    return Operator1D(params, grid, field, identity_weight, diff_scale, adv_scale,
                      B, c_l, c_r, tau)


def _tempered_power(params: FractionalParams) -> float:
    return params.lam ** (params.alpha - 1) if params.lam > 0 else 0.0


def cn_operator(params: FractionalParams, grid: Grid1D, tau: float,
                field: DiffusionField1D) -> Operator1D:
    """Crank-Nicolson system matrix ``I - M`` at one time level."""
    h, a = grid.h, params.alpha
    r = tau / (2 * h ** a)
    s = a * tau * _tempered_power(params) / (4 * h)
    return _assemble_1d(params, grid, field, 1.0, r, s, tau)


def steady_operator(params: FractionalParams, grid: Grid1D,
                    field: DiffusionField1D) -> Operator1D:
    """Steady operator ``-(c_l D_left + c_r D_right)`` without identity term."""
    h, a = grid.h, params.alpha
    return _assemble_1d(params, grid, field, 0.0, 1 / h ** a,
                        a * _tempered_power(params) / (2 * h), None)


def boundary_rhs(stencil: TemperedStencil, grid: Grid1D, coeffs: tuple[np.ndarray, np.ndarray],
                 u_left: float, u_right: float, scale: float,
                 adv_scale: float = 0.0) -> np.ndarray:
    """Contribution of the Dirichlet values to the interior equations.

    Row ``i`` of the left operator reaches ``u_0`` through ``g_{i+1}``; row
    ``i`` of the right operator reaches ``u_{M+1}`` through ``g_{M-i+2}``.
    """
    M = grid.M
    if stencil.K < M + 1:
        raise ValueError(f"stencil needs {M + 2} coefficients")
    c_l, c_r = (np.broadcast_to(np.asarray(c, dtype=float), (M,)) for c in coeffs)
    g = stencil.g
    i = np.arange(1, M + 1)
    left = c_l * g[i + 1]
    left[0] += c_r[0] * g[0]
    right = c_r * g[M - i + 2]
    right[-1] += c_l[-1] * g[0]
    out = scale * (u_left * left + u_right * right)
    if adv_scale:
        out[0] += adv_scale * (c_l[0] - c_r[0]) * u_left
        out[-1] -= adv_scale * (c_l[-1] - c_r[-1]) * u_right
    return out


def operator_boundary_rhs(op: Operator1D, u_left: float, u_right: float) -> np.ndarray:
    """Boundary part of the right-hand side matching the scalings of ``op``.

    For a CN operator pass the *sums* of the boundary values at the two time
    levels; the result is the boundary share of ``F`` (not yet times ``tau``).
    """
    stencil = tempered_stencil(op.params, op.grid.h, op.grid.M + 1)
    t = op.tau if op.identity_weight else 1.0
    return boundary_rhs(stencil, op.grid, (op.c_l, op.c_r), u_left, u_right,
                        op.diff_scale / t, op.adv_scale / t)


def cn_rhs(op_prev: Operator1D, u_prev: np.ndarray, forcing_midpoint: np.ndarray | float,
           boundary_contrib: np.ndarray | float, tau: float) -> np.ndarray:
    """``(I + M^j) u^j + tau F`` where ``F`` is forcing plus boundary terms."""
    u_prev = np.asarray(u_prev, dtype=float)
    if u_prev.shape != (op_prev.size,):
        raise ValueError("size mismatch")
    return op_prev.explicit_matvec(u_prev) + tau * (forcing_midpoint + boundary_contrib)


# ---------------------------------------------------------------------------
# 2D


@dataclass(frozen=True)
class DiffusionField2D:
    """Coefficients ``C_l, C_r`` (x-direction) and ``E_l, E_r`` (y-direction)."""

    C_l: Coefficient = 1.0
    C_r: Coefficient = 1.0
    E_l: Coefficient = 1.0
    E_r: Coefficient = 1.0

    def sample(self, X: np.ndarray, Y: np.ndarray) -> tuple[np.ndarray, ...]:
        return tuple(_sample(c, X, Y) for c in (self.C_l, self.C_r, self.E_l, self.E_r))


def mesh(gx: Grid1D, gy: Grid1D) -> tuple[np.ndarray, np.ndarray]:
    """Interior node coordinates as ``(M2, M1)`` arrays, x varying fastest."""
    return np.meshgrid(gx.interior, gy.interior, indexing="xy")


@dataclass(frozen=True, eq=False)
class Operator2D:
    """Matrix-free ``A = I - M_x - M_y`` on an ``M1 x M2`` grid (x-fastest)."""

    px: FractionalParams
    py: FractionalParams
    gx: Grid1D
    gy: Grid1D
    tau: float
    field: DiffusionField2D
    Bx: ToeplitzDescriptor
    By: ToeplitzDescriptor
    r1: float
    r2: float
    s1: float
    s2: float
    coeffs: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray] = field(repr=False)

    @property
    def M1(self) -> int:
        return self.gx.M

    @property
    def M2(self) -> int:
        return self.gy.M

    @property
    def size(self) -> int:
        return self.M1 * self.M2

    @cached_property
    def _transposes(self):
        return self.Bx.transpose(), self.By.transpose()

    @cached_property
    def diagonal(self) -> np.ndarray:
        Cl, Cr, El, Er = self.coeffs
        d = (1.0 - self.r1 * (Cl + Cr) * self.Bx.diagonal_value
             - self.r2 * (El + Er) * self.By.diagonal_value)
        d = np.broadcast_to(d, (self.M2, self.M1)).ravel().copy()
        d.flags.writeable = False
        return d

    def spatial_matvec(self, u: np.ndarray) -> np.ndarray:
        """``(M_x + M_y) u``."""
        u = np.asarray(u, dtype=float)
        if u.shape != (self.size,):
            raise ValueError(f"size mismatch: operator {self.size}, vector {u.shape}")
        U = u.reshape(self.M2, self.M1)
        Cl, Cr, El, Er = self.coeffs
        Bxt, Byt = self._transposes
        Y = self.r1 * (Cl * toeplitz_matvec(self.Bx, U, axis=1)
                       + Cr * toeplitz_matvec(Bxt, U, axis=1))
        Y += self.r2 * (El * toeplitz_matvec(self.By, U, axis=0)
                        + Er * toeplitz_matvec(Byt, U, axis=0))
        if self.s1:
            Y -= self.s1 * (Cl - Cr) * advection_matvec(U, axis=1)
        if self.s2:
            Y -= self.s2 * (El - Er) * advection_matvec(U, axis=0)
        return Y.ravel()

    def matvec(self, u: np.ndarray) -> np.ndarray:
        return np.asarray(u, dtype=float) - self.spatial_matvec(u)

    def explicit_matvec(self, u: np.ndarray) -> np.ndarray:
        return np.asarray(u, dtype=float) + self.spatial_matvec(u)

    def rediscretize(self, M1: int | None = None, M2: int | None = None) -> Operator2D:
        gx, gy = self.gx.coarsen(), self.gy.coarsen()
        if (M1, M2) != (None, None) and (M1, M2) != (gx.M, gy.M):
            raise ValueError("coarse sizes do not match the halved grid")
        return operator_2d(self.px, self.py, gx, gy, self.tau, self.field)


def operator_2d(params_x: FractionalParams, params_y: FractionalParams, grid_x: Grid1D,
                grid_y: Grid1D, tau: float, fields: DiffusionField2D) -> Operator2D:
    """CN system matrix of the 2D problem with Kronecker-structured parts."""
    hx, hy = grid_x.h, grid_y.h
    a, b = params_x.alpha, params_y.alpha
    Bx = toeplitz_B(tempered_stencil(params_x, hx, max(grid_x.M + 1, 2)), grid_x.M)
    By = toeplitz_B(tempered_stencil(params_y, hy, max(grid_y.M + 1, 2)), grid_y.M)
    X, Y = mesh(grid_x, grid_y)
    coeffs = fields.sample(X, Y)
    for c in coeffs:
        c.flags.writeable = False
    return Operator2D(
        params_x, params_y, grid_x, grid_y, tau, fields, Bx, By,
        r1=tau / (2 * hx ** a), r2=tau / (2 * hy ** b),
        s1=a * tau * _tempered_power(params_x) / (4 * hx),
        s2=b * tau * _tempered_power(params_y) / (4 * hy),
        coeffs=coeffs,
    )


__all__ = [
    "FractionalParams", "Grid1D", "TimeGrid", "TemperedStencil", "DiffusionField1D",
    "DiffusionField2D", "Operator1D", "Operator2D", "GammaIntervalWarning",
    "grunwald_weights", "gamma3_interval", "make_params", "phi_value",
    "tempered_stencil", "toeplitz_B", "cn_operator", "steady_operator",
    "boundary_rhs", "operator_boundary_rhs", "cn_rhs", "operator_2d", "mesh",
    "advection_matvec",
]
