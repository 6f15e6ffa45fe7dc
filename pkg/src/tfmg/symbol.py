"""Generating function of the stencil matrix and the quantities derived from it.

The symbol is written for the symmetrized matrix ``(B + B^T) / 2``.  It does
not depend on the tempering parameter, so everything here except the
partial sums takes only ``alpha`` and ``gamma3``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .stencil import (
    DiffusionField1D, FractionalParams, Grid1D, cn_operator, tempered_stencil, toeplitz_B,
)

SCAN_POINTS = 2048


def f_symbol(alpha: float, gamma3: float, x) -> np.ndarray:
    """``f(alpha; x)``, extended evenly to negative ``x``."""
    x = np.abs(np.asarray(x, dtype=float))
    a = alpha
    t = 0.5 * a * (x - np.pi)
    z = 0.5 * a * np.cos(t - x) + 0.5 * (2 - a) * np.cos(t)
    return (2 * np.sin(x / 2)) ** a * (z + 2 * gamma3 * np.cos(t) * (np.cos(x) - 1))


def partial_symbol(params: FractionalParams, h: float, M: int, x) -> np.ndarray:
    """Symmetrized partial sum ``sum_{k<=M} g_k cos((k-1) x) - phi``."""
    if M < 2:
        raise ValueError("M must be at least 2")
    st = tempered_stencil(params, h, M)
    x = np.asarray(x, dtype=float)
    out = np.full(x.shape, -st.phi)
    k = np.arange(M + 1) - 1.0
    flat = out.reshape(-1)
    xs = x.reshape(-1)
    for start in range(0, xs.size, 256):
        sl = slice(start, start + 256)
        flat[sl] += np.cos(np.outer(xs[sl], k)) @ st.g
    return out


@dataclass(frozen=True)
class SymbolSpec:
    alpha: float
    gamma3: float
    c: float = 1.0
    beta: float | None = None
    e: float = 1.0

    def __post_init__(self):
        for o in (self.alpha, self.beta):
            if o is not None and not 1.0 < o < 2.0:
                raise ValueError(f"orders must lie in (1, 2), got {o}")
        if self.c <= 0 or (self.beta is not None and self.e <= 0):
            raise ValueError("coefficient scalars must be positive")


@dataclass(frozen=True)
class SmoothingBound:
    xi: float
    omega_star: float
    zeroth_coeff: float
    inf_norm: float


def _zeroth(alpha: float, gamma3: float) -> float:
    # zeroth Fourier coefficient of -f(alpha; .)
    return alpha * (alpha + 1) / 2 + gamma3 * (alpha + 2) - 1


def _endpoint(alpha: float, gamma3: float) -> float:
    # |f(alpha; pi)|; the maximum of |f| when f is monotone on [0, pi]
    return 2 ** alpha * (alpha - 1 + 4 * gamma3)


def _checked_max(alpha: float, gamma3: float) -> float:
    closed = _endpoint(alpha, gamma3)
    sampled = float(np.max(np.abs(f_symbol(alpha, gamma3, np.linspace(0, np.pi, SCAN_POINTS)))))
    if sampled > closed * (1 + 1e-12):
        warnings.warn(f"|f| peaks inside (0, pi) for alpha={alpha}, gamma3={gamma3}; "
                      "using the sampled maximum", RuntimeWarning, stacklevel=3)
        return sampled
    return closed


def smoothing_bound(spec: SymbolSpec, dims: int = 1) -> SmoothingBound:
    """Jacobi weight bound ``xi`` and the recommended weight ``omega_star``.

    The ``h^alpha / tau`` contribution to the diagonal is neglected.
    """
    if dims == 1:
        a0 = spec.c * _zeroth(spec.alpha, spec.gamma3)
        norm = spec.c * _checked_max(spec.alpha, spec.gamma3)
        factor = 2.0 / 3.0
    elif dims == 2:
        if spec.beta is None:
            raise ValueError("2D bound needs beta")
        a0 = spec.c * _zeroth(spec.alpha, spec.gamma3) + spec.e * _zeroth(spec.beta, spec.gamma3)
        norm = (spec.c * _checked_max(spec.alpha, spec.gamma3)
                + spec.e * _checked_max(spec.beta, spec.gamma3))
        factor = 4.0 / 5.0
    else:
        raise ValueError("dims must be 1 or 2")
    xi = 2 * a0 / norm if norm > 0 else float("nan")
    if not xi > 0:
        raise ValueError(f"degenerate symbol: xi = {xi}")
    return SmoothingBound(xi, factor * xi, a0, norm)


def omega_star(alpha: float, gamma3: float, beta: float | None = None) -> float:
    dims = 1 if beta is None else 2
    return smoothing_bound(SymbolSpec(alpha, gamma3, beta=beta), dims).omega_star


def stability_check(params: FractionalParams, grid: Grid1D, tau: float, c: float = 1.0) -> float:
    """Spectral radius of ``(I - M)^{-1} (I + M)`` for constant coefficient ``c``."""
    if grid.M > 512:
        raise ValueError("dense check limited to M <= 512")
    op = cn_operator(params, grid, tau, DiffusionField1D(c, c))
    eye = np.eye(grid.M)
    A = op.matvec(eye)
    G = np.linalg.solve(A, 2 * eye - A)
    return float(np.max(np.abs(np.linalg.eigvals(G))))


def szego_sampling_check(params: FractionalParams, M: int, c: float = 1.0,
                         tau: float | None = None, a: float = 0.0, b: float = 1.0) -> float:
    """Largest deviation between sorted eigenvalues and sorted symbol samples.

    Compares ``(h^alpha / tau) A_M`` with ``h^alpha / tau - c f`` sampled at
    ``j pi / (M + 1)``.  ``tau = None`` drops the identity part.
    """
    if M > 512:
        raise ValueError("dense check limited to M <= 512")
    h = (b - a) / (M + 1)
    B = toeplitz_B(tempered_stencil(params, h, M + 1), M).dense()
    shift = 0.0 if tau is None else h ** params.alpha / tau
    S = shift * np.eye(M) - c * (B + B.T) / 2
    eig = np.sort(np.linalg.eigvalsh(S))
    xs = np.arange(1, M + 1) * np.pi / (M + 1)
    samples = np.sort(shift - c * f_symbol(params.alpha, params.gamma3, xs))
    return float(np.max(np.abs(eig - samples)))


def symbol_scan(params: FractionalParams, h: float | None, M: int | None,
                points: int = SCAN_POINTS) -> np.ndarray:
    """Columns ``(x, f_M, f)`` on ``[-pi, pi]``; ``f_M`` is omitted when ``M`` is None."""
    x = np.linspace(-np.pi, np.pi, points)
    f = f_symbol(params.alpha, params.gamma3, x)
    if M is None:
        return np.column_stack([x, f])
    if h is None:
        h = 1.0 / (M + 1)
    return np.column_stack([x, partial_symbol(params, h, M, x), f])


def xi_table(alphas, gamma3: float) -> np.ndarray:
    """Rows ``(alpha, xi, omega_star)`` of the 1D bound."""
    rows = []
    for a in alphas:
        sb = smoothing_bound(SymbolSpec(float(a), gamma3), 1)
        rows.append((a, sb.xi, sb.omega_star))
    return np.array(rows)
