"""Spin operator matrices and the dense Hermitian eigensolver used throughout.

Basis states are ordered m = -I ... +I (ascending) and matrix elements follow
the Condon-Shortley ladder convention, ħ = 1.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

MAX_DIM = 16


class InvalidSpinError(ValueError):
    pass


class HermiticityError(ValueError):
    pass


@dataclass(frozen=True)
class SpinSystem:
    """A single spin I with its (2I+1)-dimensional operator triple."""

    spin: Fraction
    dim: int
    ix: np.ndarray
    iy: np.ndarray
    iz: np.ndarray

    @property
    def ops(self) -> np.ndarray:
        """Operators stacked as a (3, dim, dim) array (x, y, z)."""
        return np.stack([self.ix, self.iy, self.iz])

    @property
    def m_values(self) -> np.ndarray:
        return np.real(np.diag(self.iz))

    @property
    def casimir(self) -> float:
        s = float(self.spin)
        return s * (s + 1.0)


def make_spin_system(two_I: int) -> SpinSystem:
    """Build the spin operators for spin ``two_I / 2``.

    Parameters
    ----------
    two_I : int
        Twice the spin quantum number (5 for I = 5/2).
    """
    if int(two_I) != two_I or two_I < 1:
        raise InvalidSpinError(f"two_I must be a positive integer, got {two_I!r}")
    two_I = int(two_I)
    dim = two_I + 1
    if dim > MAX_DIM:
        raise InvalidSpinError(f"dimension {dim} exceeds the supported maximum {MAX_DIM}")
    s = two_I / 2.0
    m = np.arange(dim) - s
    # <m+1| I+ |m> = sqrt(I(I+1) - m(m+1)), stored below the diagonal because m ascends
    raise_elems = np.sqrt(s * (s + 1.0) - m[:-1] * (m[:-1] + 1.0))
    iplus = np.diag(raise_elems, k=-1).astype(complex)
    iminus = iplus.conj().T
    ix = 0.5 * (iplus + iminus)
    iy = -0.5j * (iplus - iminus)
    iz = np.diag(m).astype(complex)
    for op in (ix, iy, iz):
        op.setflags(write=False)
    return SpinSystem(Fraction(two_I, 2), dim, ix, iy, iz)


@dataclass(frozen=True)
class HermitianEigensystem:
    values: np.ndarray
    vectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.conj().T


def fix_phases(vectors: np.ndarray) -> np.ndarray:
    """Rotate each eigenvector column so its largest-magnitude entry is real positive.

    Works on a single (d, d) matrix or a stack (..., d, d).
    """
    idx = np.argmax(np.abs(vectors), axis=-2)
    pivot = np.take_along_axis(vectors, idx[..., None, :], axis=-2)
    phase = pivot / np.abs(pivot)
    return vectors / phase


def check_hermitian(h: np.ndarray, rtol: float = 1e-9) -> None:
    h = np.asarray(h)
    if h.ndim < 2 or h.shape[-1] != h.shape[-2]:
        raise HermiticityError(f"expected square matrices, got shape {h.shape}")
    scale = np.linalg.norm(h, axis=(-2, -1))
    err = np.linalg.norm(h - np.conj(np.swapaxes(h, -1, -2)), axis=(-2, -1))
    if np.any(err > rtol * scale):
        raise HermiticityError(f"matrix is not Hermitian (max deviation {np.max(err):.3e})")


def eigensystem(h: np.ndarray) -> HermitianEigensystem:
    """Full eigendecomposition of a small dense Hermitian matrix.

    Eigenvalues ascend; each eigenvector carries the phase convention of
    :func:`fix_phases`, so identical input gives identical output.
    """
    h = np.asarray(h, dtype=complex)
    check_hermitian(h)
    if h.shape[-1] > MAX_DIM:
        raise HermiticityError(f"dimension {h.shape[-1]} exceeds the supported maximum {MAX_DIM}")
    values, vectors = np.linalg.eigh(h)
    return HermitianEigensystem(values, fix_phases(vectors))
