"""Dense real-matrix kernel for small problems (dimension up to ~64).

Matrices are plain 2-D ``float64`` numpy arrays.  The heavy loops live in the
kernel backend (compiled when available, see :mod:`tnfr._backend`).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import kernels


@dataclass(frozen=True)
class NumericPolicy:
    """Every tolerance used across the package, in one place."""

    entrywise: float = 1e-10
    spectral: float = 1e-10
    marginal_band: float = 1e-9
    blowup: float = 1e8
    max_condition: float = 1e12
    qr_iterations: int = 30
    max_dim: int = 64


POLICY = NumericPolicy()


class SingularMatrixError(ValueError):
    """Raised when a matrix is singular or too ill-conditioned to invert."""

    def __init__(self, message: str, pivot: float, condition: float = np.inf):
        super().__init__(message)
        self.pivot = pivot
        self.condition = condition


class SpectrumError(ArithmeticError):
    """The eigenvalue iteration did not converge."""


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray  # complex, one per dimension
    radius: float

    @classmethod
    def from_eigenvalues(cls, eigenvalues) -> "Spectrum":
        ev = np.asarray(eigenvalues, dtype=complex)
        radius = float(np.max(np.abs(ev))) if ev.size else 0.0
        return cls(ev, radius)

    def pairs(self) -> list[list[float]]:
        return [[float(z.real), float(z.imag)] for z in self.eigenvalues]


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    m = np.ascontiguousarray(np.atleast_2d(np.asarray(a, dtype=float)))
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    return m


def _square(a, name: str = "matrix") -> np.ndarray:
    m = as_matrix(a, name)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    return m


def identity(n: int) -> np.ndarray:
    return np.eye(n)


def mat_mul(a, b) -> np.ndarray:
    a = as_matrix(a, "left operand")
    b = np.asarray(b, dtype=float)
    vector = b.ndim == 1
    b = as_matrix(b.reshape(-1, 1) if vector else b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} @ {b.shape}")
    out = kernels.matmul(a, b)
    return out[:, 0] if vector else out


def mat_inverse(a, policy: NumericPolicy = POLICY) -> np.ndarray:
    """Inverse by Gauss-Jordan elimination.

    Raises :class:`SingularMatrixError` carrying the smallest pivot when the
    matrix is singular, and the 1-norm condition estimate when it exceeds
    ``policy.max_condition``.
    """
    m = _square(a)
    if not np.all(np.isfinite(m)):
        raise SingularMatrixError("matrix has non-finite entries", pivot=np.nan)
    n = m.shape[0]
    if n == 0:
        return m.copy()
    inv, pivot = kernels.inverse(m)
    scale = float(np.max(np.abs(m)))
    if pivot == 0.0 or pivot <= n * np.finfo(float).eps * scale:
        raise SingularMatrixError(f"matrix is singular (pivot magnitude {pivot:.3e})", pivot=pivot)
    cond = float(np.max(np.sum(np.abs(m), axis=0)) * np.max(np.sum(np.abs(inv), axis=0)))
    if not cond < policy.max_condition:
        raise SingularMatrixError(
            f"matrix is ill-conditioned (condition estimate {cond:.3e}, pivot {pivot:.3e})",
            pivot=pivot,
            condition=cond,
        )
    return inv


def mat_power(a, t: int) -> np.ndarray:
    """``a**t`` by repeated squaring; ``a**0`` is the identity.

    Overflow is not an error: the result simply carries non-finite entries,
    which callers treat as a divergence signal (see :func:`is_divergent`).
    """
    m = _square(a)
    if t < 0:
        raise ValueError("power must be non-negative")
    result = identity(m.shape[0])
    base = m
    with np.errstate(over="ignore", invalid="ignore"):
        while t:
            if t & 1:
                result = kernels.matmul(result, base)
            t >>= 1
            if t:
                base = kernels.matmul(base, base)
    return result


def is_divergent(a) -> bool:
    return not bool(np.all(np.isfinite(a)))


def spectrum(a, policy: NumericPolicy = POLICY, name: str = "matrix") -> Spectrum:
    """All eigenvalues and the spectral radius.

    Closed-form roots for dimension <= 2, Jacobi rotations for symmetric
    input, balanced Hessenberg shifted-QR otherwise.
    """
    m = _square(a, name)
    n = m.shape[0]
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    if n > policy.max_dim:
        raise ValueError(f"{name} has dimension {n} > {policy.max_dim}")
    if n == 0:
        return Spectrum(np.zeros(0, dtype=complex), 0.0)
    if n == 1:
        return Spectrum.from_eigenvalues([m[0, 0]])
    if n == 2:
        return Spectrum.from_eigenvalues(_eig2(m))
    if np.array_equal(m, m.T):
        ev, status = kernels.symmetric_eigvals(m)
        if status != 0:
            raise SpectrumError(f"Jacobi iteration did not converge for {name}:\n{m!r}")
        return Spectrum.from_eigenvalues(ev)
    wr, wi, status = kernels.general_eigvals(m, policy.qr_iterations)
    if status != 0:
        raise SpectrumError(f"QR iteration did not converge for {name}:\n{m!r}")
    return Spectrum.from_eigenvalues(wr + 1j * wi)


def _eig2(m: np.ndarray) -> list[complex]:
    a, b = m[0]
    c, d = m[1]
    half = 0.5 * (a - d)
    disc = half * half + b * c
    mid = 0.5 * (a + d)
    if disc >= 0.0:
        root = np.sqrt(disc)
        # avoid cancellation: take the larger-magnitude root first
        big = mid + root if mid >= 0.0 else mid - root
        det = a * d - b * c
        small = det / big if big != 0.0 else mid - root if mid >= 0.0 else mid + root
        return [complex(big), complex(small)]
    root = np.sqrt(-disc)
    return [complex(mid, root), complex(mid, -root)]


def spectral_radius(a, policy: NumericPolicy = POLICY) -> float:
    m = as_matrix(a)
    if is_divergent(m):
        return float("inf")
    return spectrum(m, policy).radius
