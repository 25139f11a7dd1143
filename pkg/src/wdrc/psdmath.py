"""Symmetric positive semidefinite matrix primitives.

Provides square roots, the squared Bures distance between covariance
matrices, and the squared Gelbrich distance between mean/covariance
pairs.  All decompositions of symmetric matrices go through
``numpy.linalg.eigh``; eigenvalues within a scale-aware tolerance of
zero are clamped to zero instead of being rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, NotPSD

__all__ = [
    "MomentPair",
    "symmetrize",
    "psd_tolerance",
    "require_square",
    "min_eigenvalue",
    "is_psd",
    "require_psd",
    "psd_sqrt",
    "trace_sqrt_product",
    "transport_map",
    "bures_sq",
    "gelbrich_dist_sq",
]


def symmetrize(m: np.ndarray) -> np.ndarray:
    """Return the symmetric part ``(m + m.T) / 2`` as a new array."""
    m = np.asarray(m, dtype=float)
    require_square(m)
    return (m + m.T) / 2.0


def require_square(m: np.ndarray, name: str = "matrix") -> None:
    """Raise :class:`DimMismatch` unless ``m`` is a square 2-D array."""
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimMismatch(f"{name} must be square, got shape {m.shape}")


def psd_tolerance(m: np.ndarray) -> float:
    """Scale-aware eigenvalue tolerance ``1e-9 * (1 + max |diag|)``."""
    diag = np.abs(np.diagonal(m))
    peak = float(diag.max()) if diag.size else 0.0
    return 1e-9 * (1.0 + peak)


def min_eigenvalue(m: np.ndarray) -> float:
    """Smallest eigenvalue of the symmetric part of ``m``."""
    return float(np.linalg.eigvalsh(symmetrize(m))[0])


def is_psd(m: np.ndarray) -> bool:
    """True when every eigenvalue of ``m`` is above ``-psd_tolerance(m)``."""
    m = symmetrize(m)
    return min_eigenvalue(m) >= -psd_tolerance(m)


def require_psd(m: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Validate that ``m`` is symmetric PSD and return its symmetric part.

    Args:
        m: Candidate matrix.
        name: Label used in the error message.

    Returns:
        The symmetrized copy of ``m``.

    Raises:
        NotPSD: If an eigenvalue falls below the scale-aware tolerance.
        DimMismatch: If ``m`` is not square.
    """
    sym = symmetrize(m)
    lo = min_eigenvalue(sym)
    if lo < -psd_tolerance(sym):
        raise NotPSD(f"{name} has eigenvalue {lo:.6g} below tolerance")
    return sym


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition.

    Eigenvalues in ``[-tol, 0)`` are clamped to zero; anything below
    ``-tol`` raises :class:`NotPSD`.

    Args:
        m: Symmetric PSD matrix.

    Returns:
        Symmetric PSD matrix ``s`` with ``s @ s`` equal to ``m`` up to
        floating point error.
    """
    sym = symmetrize(m)
    vals, vecs = np.linalg.eigh(sym)
    tol = psd_tolerance(sym)
    if vals[0] < -tol:
        raise NotPSD(f"matrix has eigenvalue {vals[0]:.6g} below tolerance")
    vals = np.clip(vals, 0.0, None)
    root = (vecs * np.sqrt(vals)) @ vecs.T
    return symmetrize(root)


def _clamped_det2(m: np.ndarray) -> float:
    """Determinant of a 2x2 PSD matrix, clamped at zero for roundoff."""
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    return max(float(det), 0.0)


def trace_sqrt_product(a: np.ndarray, b: np.ndarray) -> float:
    """Compute ``tr[(a^{1/2} b a^{1/2})^{1/2}]`` for PSD ``a``, ``b``.

    The value equals the sum of square roots of the eigenvalues of
    ``a @ b``, which gives closed forms in one and two dimensions; the
    general case falls back to eigendecompositions.
    """
    if a.shape != b.shape:
        raise DimMismatch(f"shape mismatch {a.shape} vs {b.shape}")
    n = a.shape[0]
    if n == 1:
        return math.sqrt(max(a[0, 0] * b[0, 0], 0.0))
    if n == 2:
        cross = float(np.trace(a @ b))
        gm = math.sqrt(_clamped_det2(a) * _clamped_det2(b))
        return math.sqrt(max(cross + 2.0 * gm, 0.0))
    root = psd_sqrt(a)
    inner = psd_sqrt(root @ b @ root)
    return float(np.trace(inner))


def transport_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Optimal transport factor ``a^{-1/2}(a^{1/2} b a^{1/2})^{1/2} a^{-1/2}``.

    Requires ``a`` positive definite.  The result ``t`` is the symmetric
    PSD matrix satisfying ``t @ a @ t == b``; it is the gradient of
    ``tr[(a^{1/2} b a^{1/2})^{1/2}]`` with respect to ``a`` up to a
    factor of one half.
    """
    if a.shape != b.shape:
        raise DimMismatch(f"shape mismatch {a.shape} vs {b.shape}")
    n = a.shape[0]
    if n == 1:
        if a[0, 0] <= 0.0:
            raise NotPSD("transport map requires positive definite input")
        return np.array([[math.sqrt(max(b[0, 0], 0.0) / a[0, 0])]])
    if n == 2:
        scale = trace_sqrt_product(a, b)
        if scale <= 0.0:
            return np.zeros_like(a)
        det_a = _clamped_det2(a)
        if det_a <= 0.0:
            raise NotPSD("transport map requires positive definite input")
        gm = math.sqrt(det_a * _clamped_det2(b))
        inv_a = np.array(
            [[a[1, 1], -a[0, 1]], [-a[1, 0], a[0, 0]]]
        ) / det_a
        return symmetrize((b + gm * inv_a) / scale)
    root = psd_sqrt(a)
    vals, vecs = np.linalg.eigh(root)
    tol = psd_tolerance(root)
    if vals[0] <= tol:
        raise NotPSD("transport map requires positive definite input")
    inv_root = (vecs / vals) @ vecs.T
    inner = psd_sqrt(root @ b @ root)
    return symmetrize(inv_root @ inner @ inv_root)


def bures_sq(a: np.ndarray, b: np.ndarray) -> float:
    """Squared Bures distance between PSD matrices.

    ``tr[a] + tr[b] - 2 tr[(a^{1/2} b a^{1/2})^{1/2}]``, clamped at zero
    to absorb roundoff.
    """
    a = require_psd(a, "left operand")
    b = require_psd(b, "right operand")
    if a.shape != b.shape:
        raise DimMismatch(f"shape mismatch {a.shape} vs {b.shape}")
    val = float(np.trace(a) + np.trace(b)) - 2.0 * trace_sqrt_product(a, b)
    return max(val, 0.0)


@dataclass(frozen=True)
class MomentPair:
    """Mean vector and PSD covariance matrix of a distribution.

    The covariance is symmetrized and validated on construction, and
    both arrays are frozen against later mutation.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = require_psd(np.asarray(self.cov, dtype=float), "covariance")
        if cov.shape[0] != mean.shape[0]:
            raise DimMismatch(
                f"mean has dim {mean.shape[0]} but covariance is "
                f"{cov.shape[0]}x{cov.shape[1]}"
            )
        mean.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def gelbrich_dist_sq(p: MomentPair, q: MomentPair) -> float:
    """Squared Gelbrich distance between two mean/covariance pairs.

    ``|mean_p - mean_q|^2 + bures_sq(cov_p, cov_q)``.  This lower-bounds
    the squared 2-Wasserstein distance between any distributions with
    these moments and matches it exactly for Gaussians.
    """
    if p.dim != q.dim:
        raise DimMismatch(f"moment pairs have dims {p.dim} and {q.dim}")
    gap = p.mean - q.mean
    return float(gap @ gap) + bures_sq(p.cov, q.cov)
