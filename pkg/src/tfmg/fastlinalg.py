"""FFT-backed structured linear algebra.

Toeplitz and BTTB products through circulant embedding, Chan circulant
approximations, circulant solves, sparse tridiagonal factorization and the dense
materialization used as a test oracle everywhere else in the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


def _embed_length(n: int, policy: str = "pow2") -> int:
    """Circulant embedding length for an ``n x n`` Toeplitz block."""
    if policy == "pow2":
        return 1 << max(0, (2 * n - 2).bit_length())
    if policy == "minimal":
        return max(1, 2 * n - 1)
    raise ValueError(f"unknown padding policy {policy!r}")


@dataclass(frozen=True, eq=False)
class ToeplitzDescriptor:
    """Square Toeplitz matrix given by its first column and first row.

    ``first_col[k]`` is the k-th subdiagonal value and ``first_row[k]`` the
    k-th superdiagonal value.
    """

    first_col: np.ndarray
    first_row: np.ndarray

    def __post_init__(self):
        col = np.asarray(self.first_col, dtype=float).copy()
        row = np.asarray(self.first_row, dtype=float).copy()
        if col.ndim != 1 or row.shape != col.shape or col.size == 0:
            raise ValueError("first_col and first_row must be 1D of equal nonzero length")
        if col[0] != row[0]:
            raise ValueError("first_col[0] and first_row[0] must agree")
        col.flags.writeable = False
        row.flags.writeable = False
        object.__setattr__(self, "first_col", col)
        object.__setattr__(self, "first_row", row)

    @property
    def size(self) -> int:
        return self.first_col.size

    @property
    def diagonal_value(self) -> float:
        return float(self.first_col[0])

    def transpose(self) -> ToeplitzDescriptor:
        return ToeplitzDescriptor(self.first_row, self.first_col)

    def embedding(self, policy: str = "pow2") -> np.ndarray:
        n = self.size
        L = _embed_length(n, policy)
        c = np.zeros(L)
        c[:n] = self.first_col
        if n > 1:
            c[L - n + 1:] = self.first_row[:0:-1]
        return c

    @cached_property
    def _spectrum(self) -> np.ndarray:
        return np.fft.rfft(self.embedding("pow2"))

    def spectrum(self, policy: str = "pow2") -> np.ndarray:
        if policy == "pow2":
            return self._spectrum
        return np.fft.rfft(self.embedding(policy))

    def dense(self) -> np.ndarray:
        n = self.size
        i = np.arange(n)
        d = i[:, None] - i[None, :]
        return np.where(d >= 0, self.first_col[np.abs(d)], self.first_row[np.abs(d)])

    def matvec(self, v: np.ndarray, axis: int = -1) -> np.ndarray:
        return toeplitz_matvec(self, v, axis=axis)


def toeplitz_matvec(T: ToeplitzDescriptor, v: np.ndarray, axis: int = -1,
                    policy: str = "pow2") -> np.ndarray:
    """Exact product ``T @ v`` via circulant embedding.

    ``v`` may carry extra dimensions; the product is taken along ``axis``.
    """
    v = np.asarray(v, dtype=float)
    n = T.size
    if v.shape[axis] != n:
        raise ValueError(f"size mismatch: operator {n}, vector {v.shape[axis]}")
    if n == 1:
        return T.first_col[0] * v
    L = _embed_length(n, policy)
    spec = T.spectrum(policy)
    shape = [1] * v.ndim
    shape[axis] = spec.size
    vf = np.fft.rfft(v, n=L, axis=axis)
    y = np.fft.irfft(vf * spec.reshape(shape), n=L, axis=axis)
    return np.take(y, np.arange(n), axis=axis)


@dataclass(frozen=True, eq=False)
class CirculantDescriptor:
    first_col: np.ndarray

    def __post_init__(self):
        col = np.asarray(self.first_col, dtype=float).copy()
        col.flags.writeable = False
        object.__setattr__(self, "first_col", col)

    @property
    def size(self) -> int:
        return self.first_col.size

    @cached_property
    def spectrum(self) -> np.ndarray:
        return np.fft.fft(self.first_col)

    def dense(self) -> np.ndarray:
        n = self.size
        i = np.arange(n)
        return self.first_col[(i[:, None] - i[None, :]) % n]

    def transpose(self) -> CirculantDescriptor:
        c = self.first_col
        return CirculantDescriptor(np.concatenate([c[:1], c[:0:-1]]))

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return circulant_matvec(self, v)


def circulant_matvec(C: CirculantDescriptor, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != C.size:
        raise ValueError("size mismatch")
    return np.fft.ifft(np.fft.fft(v, axis=-1) * C.spectrum, axis=-1).real


class SingularCirculantError(ZeroDivisionError):
    def __init__(self, mode: int, value: complex):
        super().__init__(f"circulant eigenvalue {value!r} at mode {mode} is numerically zero")
        self.mode = mode
        self.value = value


def check_spectrum(spec: np.ndarray, rtol: float = 1e-14) -> None:
    scale = np.max(np.abs(spec)) if spec.size else 0.0
    bad = np.flatnonzero(np.abs(spec) <= rtol * scale) if scale > 0 else np.arange(spec.size)
    if bad.size:
        raise SingularCirculantError(int(bad[0]), complex(spec.flat[bad[0]]))


def circulant_solve(C: CirculantDescriptor, v: np.ndarray) -> np.ndarray:
    """Return ``C^{-1} v`` by pointwise division in Fourier space."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != C.size:
        raise ValueError("size mismatch")
    check_spectrum(C.spectrum)
    return np.fft.ifft(np.fft.fft(v, axis=-1) / C.spectrum, axis=-1).real


def chan_circulant(T: ToeplitzDescriptor) -> CirculantDescriptor:
    """Frobenius-optimal (T. Chan) circulant approximation of ``T``."""
    n = T.size
    k = np.arange(n)
    t_pos = T.first_col
    # t_{k-n} is the (n-k)-th superdiagonal value
    t_neg = np.zeros(n)
    t_neg[1:] = T.first_row[n - k[1:]]
    return CirculantDescriptor(((n - k) * t_pos + k * t_neg) / n)


@dataclass(frozen=True, eq=False)
class BTTBDescriptor:
    """Block Toeplitz matrix with Toeplitz blocks.

    ``coeffs[k1 + M1 - 1, k2 + M2 - 1]`` multiplies ``u[j1, j2]`` into
    ``y[j1 + k1, j2 + k2]``; vectors are x-fastest, ``u[i1 + M1 * i2]``.
    """

    coeffs: np.ndarray
    M1: int
    M2: int

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (2 * self.M1 - 1, 2 * self.M2 - 1):
            raise ValueError(f"coefficient array shape {c.shape} does not match "
                             f"({2 * self.M1 - 1}, {2 * self.M2 - 1})")
        object.__setattr__(self, "coeffs", c)

    @property
    def size(self) -> int:
        return self.M1 * self.M2

    @cached_property
    def _spectrum(self) -> tuple[tuple[int, int], np.ndarray]:
        L1, L2 = _embed_length(self.M1), _embed_length(self.M2)
        emb = np.zeros((L2, L1))
        k1 = np.arange(1 - self.M1, self.M1) % L1
        k2 = np.arange(1 - self.M2, self.M2) % L2
        emb[np.ix_(k2, k1)] = self.coeffs.T
        return (L2, L1), np.fft.rfft2(emb)

    def dense(self) -> np.ndarray:
        M1, M2 = self.M1, self.M2
        i1, i2 = np.meshgrid(np.arange(M1), np.arange(M2), indexing="xy")
        i1, i2 = i1.ravel(), i2.ravel()
        d1 = i1[:, None] - i1[None, :] + M1 - 1
        d2 = i2[:, None] - i2[None, :] + M2 - 1
        return self.coeffs[d1, d2]

    def matvec(self, u: np.ndarray) -> np.ndarray:
        return bttb_matvec(self, u)


def bttb_matvec(B: BTTBDescriptor, u: np.ndarray) -> np.ndarray:
    """Exact BTTB product through a 2D circulant embedding."""
    u = np.asarray(u, dtype=float)
    if u.shape != (B.size,):
        raise ValueError(f"size mismatch: operator {B.size}, vector {u.shape}")
    shape, spec = B._spectrum
    U = u.reshape(B.M2, B.M1)
    Y = np.fft.irfft2(np.fft.rfft2(U, s=shape) * spec, s=shape)
    return Y[:B.M2, :B.M1].ravel()


def kron_sum_bttb(Tx: ToeplitzDescriptor, Ty: ToeplitzDescriptor,
                  wx: float = 1.0, wy: float = 1.0) -> BTTBDescriptor:
    """BTTB form of ``wx (I ⊗ Tx) + wy (Ty ⊗ I)`` in x-fastest ordering."""
    M1, M2 = Tx.size, Ty.size
    c = np.zeros((2 * M1 - 1, 2 * M2 - 1))
    c[M1 - 1:, M2 - 1] += wx * Tx.first_col
    c[M1 - 1::-1, M2 - 1] += wx * Tx.first_row
    c[M1 - 1, M2 - 1] -= wx * Tx.first_col[0]
    c[M1 - 1, M2 - 1:] += wy * Ty.first_col
    c[M1 - 1, M2 - 1::-1] += wy * Ty.first_row
    c[M1 - 1, M2 - 1] -= wy * Ty.first_col[0]
    return BTTBDescriptor(c, M1, M2)


class OversizeError(ValueError):
    pass


def materialize_dense(op, cap: int = 4096) -> np.ndarray:
    """Dense matrix of a linear operator, built column by column.

    ``op`` is anything with ``size`` and ``matvec``, a ``(n, n)`` array, or a
    scipy sparse matrix.
    """
    if isinstance(op, np.ndarray):
        return np.array(op, dtype=float)
    if hasattr(op, "toarray"):
        return op.toarray()
    n = op.size
    if n > cap:
        raise OversizeError(f"operator size {n} exceeds cap {cap}")
    out = np.empty((n, n))
    e = np.zeros(n)
    for j in range(n):
        e[j] = 1.0
        out[:, j] = op.matvec(e)
        e[j] = 0.0
    return out


class ZeroPivotError(ZeroDivisionError):
    pass


@dataclass(frozen=True, eq=False)
class TridiagonalFactor:
    """Reusable sparse LU factors of a tridiagonal matrix.

    ``lower[i]`` sits at ``(i+1, i)`` and ``upper[i]`` at ``(i, i+1)``.
    """

    lu: object = field(repr=False)
    n: int

    @classmethod
    def factor(cls, lower, diag, upper) -> TridiagonalFactor:
        diag = np.array(diag, dtype=float)
        n = diag.size
        lower = np.broadcast_to(np.asarray(lower, dtype=float), (max(n - 1, 0),))
        upper = np.broadcast_to(np.asarray(upper, dtype=float), (max(n - 1, 0),))
        A = sp.diags([lower, diag, upper], [-1, 0, 1], shape=(n, n), format="csc")
        try:
            lu = spla.splu(A)
        except RuntimeError as exc:
            raise ZeroPivotError(f"singular tridiagonal matrix: {exc}") from exc
        return cls(lu, n)

    def solve(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.n:
            raise ValueError("size mismatch")
        return self.lu.solve(v)


def tridiag_solve(lower, diag, upper, v) -> np.ndarray:
    """Solve a tridiagonal system by elimination without pivoting."""
    return TridiagonalFactor.factor(lower, diag, upper).solve(v)
