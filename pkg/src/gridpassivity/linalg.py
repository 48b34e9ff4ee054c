"""Definiteness tests, deflation of the rotational null direction, and the real embedding."""

from __future__ import annotations

import numpy as np
import scipy.linalg
from numpy.typing import NDArray

FloatArray = NDArray[np.float64]
ComplexArray = NDArray[np.complex128]


def symmetrize(mat: FloatArray) -> FloatArray:
    """Return (A + A^T) / 2."""
    return 0.5 * (mat + mat.T)


def extreme_eigenvalues(mat: FloatArray) -> tuple[float, float]:
    """Smallest and largest eigenvalue of the symmetric part."""
    if mat.size == 0:
        return 0.0, 0.0
    eigs = np.linalg.eigvalsh(symmetrize(mat))
    return float(eigs[0]), float(eigs[-1])


def is_psd(mat: FloatArray, eps: float = 1e-8) -> bool:
    """PSD test with the relative tolerance lambda_min >= -eps * max(1, |lambda_max|)."""
    lo, hi = extreme_eigenvalues(mat)
    return lo >= -eps * max(1.0, abs(hi))


def is_nsd(mat: FloatArray, eps: float = 1e-8) -> bool:
    """Negative semidefinite counterpart of :func:`is_psd`."""
    return is_psd(-mat, eps)


def deflation_basis(size: int, mask: NDArray[np.bool_] | None = None) -> FloatArray:
    """Orthonormal basis of the complement of the uniform-shift direction.

    Args:
        size: Dimension of the ambient space.
        mask: Entries that belong to the shift direction. Defaults to all entries.

    Returns:
        A ``size x (size - 1)`` matrix with orthonormal columns.

    """
    direction = np.ones(size) if mask is None else mask.astype(np.float64)
    return scipy.linalg.null_space(direction[np.newaxis, :])


def deflated_eigvalsh(mat: FloatArray, mask: NDArray[np.bool_] | None = None) -> FloatArray:
    """Eigenvalues of the symmetric part restricted to the deflated subspace."""
    basis = deflation_basis(mat.shape[0], mask)
    return np.linalg.eigvalsh(symmetrize(basis.T @ mat @ basis))


def deflated_eigvals(mat: FloatArray, mask: NDArray[np.bool_] | None = None) -> ComplexArray:
    """Eigenvalues of the quotient map of ``mat`` modulo its right null direction."""
    basis = deflation_basis(mat.shape[0], mask)
    return np.linalg.eigvals(basis.T @ mat @ basis).astype(np.complex128)


def real_embedding(mat: ComplexArray) -> FloatArray:
    """Map M + jN to [[M, -N], [N, M]]."""
    re, im = mat.real, mat.imag
    return np.block([[re, -im], [im, re]])


def embedded_inverse(mat: ComplexArray) -> ComplexArray:
    """Invert a complex matrix through its real embedding."""
    n = mat.shape[0]
    inv = np.linalg.inv(real_embedding(mat))
    return inv[:n, :n] + 1j * inv[n:, :n]


def reciprocal_condition(mat: ComplexArray | FloatArray) -> float:
    """Reciprocal 2-norm condition number, 0 for exactly singular input."""
    cond = np.linalg.cond(mat)
    return 0.0 if not np.isfinite(cond) else float(1.0 / cond)
