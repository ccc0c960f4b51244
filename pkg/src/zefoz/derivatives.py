"""First and second field derivatives of transition frequencies.

Level gradients come from Hellmann-Feynman, level Hessians from the
second-order perturbation sum

    d2E_i/dB_k dB_l = 2 Re sum_{n != i} <i|V_k|n><n|V_l|i> / (E_i - E_n)

with V_k = dH/dB_k. A transition's derivatives are hi minus lo.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hamiltonian import (TransitionDescriptor, as_field, hamiltonians, transition_frequency,
                          zeeman_operators)
from .spin_algebra import SpinSystem
from .tensors import InteractionTensors

GAP_FLOOR_MHZ = 1e-6
GRADIENT_STEP_G = 0.01
HESSIAN_STEP_G = 0.1


class DegenerateLevelError(ValueError):
    pass


@dataclass(frozen=True)
class LevelDerivatives:
    """Batched spectral data; leading axis runs over fields."""

    energies: np.ndarray     # (N, d)
    vectors: np.ndarray      # (N, d, d)
    couplings: np.ndarray    # (N, 3, d, d)  <a|V_k|b>

    @property
    def gradients(self) -> np.ndarray:
        """Hellmann-Feynman level gradients, shape (N, d, 3)."""
        return np.real(np.einsum("nkaa->nak", self.couplings))

    def level_hessians(self, levels) -> np.ndarray:
        """Perturbation-sum Hessians for the given level indices, shape (N, len(levels), 3, 3)."""
        levels = np.atleast_1d(levels)
        e = self.energies
        out = []
        for i in levels:
            de = e[:, i, None] - e
            de[:, i] = np.inf
            x = self.couplings[:, :, i, :]           # (N, 3, d)
            y = self.couplings[:, :, :, i]           # (N, 3, d)
            out.append(2.0 * np.real(np.einsum("nkm,nlm,nm->nkl", x, y, 1.0 / de)))
        h = np.stack(out, axis=1)
        return 0.5 * (h + np.swapaxes(h, -1, -2))

    def gaps(self, level: int) -> np.ndarray:
        """Distance from ``level`` to its nearest neighbour, shape (N,)."""
        e = self.energies
        d = np.abs(e - e[:, level, None])
        d[:, level] = np.inf
        return d.min(axis=1)


class LevelModel:
    """Precomputed quadrupole and Zeeman operators for repeated evaluation."""

    def __init__(self, sys: SpinSystem, t: InteractionTensors):
        self.sys = sys
        self.tensors = t
        self.zeeman = zeeman_operators(sys, t)
        self.h0 = hamiltonians(sys, t, np.zeros((1, 3)))[0]

    def __call__(self, fields) -> LevelDerivatives:
        fields = np.atleast_2d(np.asarray(fields, dtype=float))
        h = self.h0 + np.tensordot(fields, self.zeeman, axes=1)
        w, v = np.linalg.eigh(h)
        vh = np.conj(np.swapaxes(v, -1, -2))
        # (N,1,d,d) @ (3,d,d) @ (N,1,d,d) -> (N,3,d,d)
        x = vh[:, None] @ self.zeeman[None] @ v[:, None]
        return LevelDerivatives(w, v, x)


def level_derivatives(sys: SpinSystem, t: InteractionTensors, fields) -> LevelDerivatives:
    return LevelModel(sys, t)(fields)


def resolution_gap(t: InteractionTensors, spin: float, step: float = HESSIAN_STEP_G) -> float:
    """Largest level shift a field step of ``step`` Gauss can produce (MHz)."""
    return float(np.linalg.norm(np.asarray(t.m_matrix), 2) * step * 2.0 * spin)


def _check_levels(ld: LevelDerivatives, tr: TransitionDescriptor, gap_floor: float) -> None:
    for lvl in (tr.lo, tr.hi):
        gap = float(ld.gaps(lvl)[0])
        if gap <= gap_floor:
            raise DegenerateLevelError(
                f"level {lvl} is within {gap:.3e} MHz of another level (gap floor {gap_floor:g} MHz); "
                "use the finite-difference derivatives instead"
            )


def zeeman_gradient(sys: SpinSystem, t: InteractionTensors, b, tr: TransitionDescriptor,
                    gap_floor: float = GAP_FLOOR_MHZ) -> np.ndarray:
    """Gradient of the transition frequency with respect to B (MHz/G)."""
    b = as_field(b)
    tr.check(sys.dim)
    ld = level_derivatives(sys, t, b)
    _check_levels(ld, tr, gap_floor)
    g = ld.gradients[0]
    return g[tr.hi] - g[tr.lo]


def finite_difference_gradient(fun, b, step: float = GRADIENT_STEP_G) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    out = np.empty(3)
    for k in range(3):
        e = np.zeros(3)
        e[k] = step
        out[k] = (fun(b + e) - fun(b - e)) / (2.0 * step)
    return out


def finite_difference_hessian(fun, b, step: float = HESSIAN_STEP_G) -> np.ndarray:
    """Second central differences of a scalar function of the field."""
    b = np.asarray(b, dtype=float)
    f0 = fun(b)
    h = np.empty((3, 3))
    eye = np.eye(3) * step
    for k in range(3):
        h[k, k] = (fun(b + eye[k]) - 2.0 * f0 + fun(b - eye[k])) / step**2
        for l in range(k + 1, 3):
            h[k, l] = h[l, k] = (
                fun(b + eye[k] + eye[l]) - fun(b + eye[k] - eye[l])
                - fun(b - eye[k] + eye[l]) + fun(b - eye[k] - eye[l])
            ) / (4.0 * step**2)
    return h


def zeeman_hessian(sys: SpinSystem, t: InteractionTensors, b, tr: TransitionDescriptor,
                   gap_floor: float = GAP_FLOOR_MHZ, fd_step: float = HESSIAN_STEP_G,
                   return_flag: bool = False):
    """Hessian of the transition frequency (MHz/G^2).

    Falls back to central differences of the analytic gradient when an
    intermediate state sits within ``gap_floor`` of lo or hi; ``return_flag``
    reports whether that happened.
    """
    b = as_field(b)
    tr.check(sys.dim)
    ld = level_derivatives(sys, t, b)
    _check_levels(ld, tr, 0.0)
    near = min(float(ld.gaps(tr.lo)[0]), float(ld.gaps(tr.hi)[0])) <= gap_floor
    if near:
        grads = []
        for k in range(3):
            e = np.zeros(3)
            e[k] = fd_step
            # the displaced fields split the near-degenerate pair; only an exact
            # degeneracy there would make Hellmann-Feynman ill-defined
            gp = zeeman_gradient(sys, t, b + e, tr, 0.0)
            gm = zeeman_gradient(sys, t, b - e, tr, 0.0)
            grads.append((gp - gm) / (2.0 * fd_step))
        h = np.array(grads)
        h = 0.5 * (h + h.T)
    else:
        hs = ld.level_hessians([tr.lo, tr.hi])[0]
        h = hs[1] - hs[0]
    return (h, near) if return_flag else h


@dataclass(frozen=True)
class TransitionSensitivity:
    field: np.ndarray
    transition: TransitionDescriptor
    frequency: float
    gradient: np.ndarray
    hessian: np.ndarray
    hessian_eigenvalues: np.ndarray
    hessian_axes: np.ndarray  # columns are unit eigenvectors
    degeneracy_flag: bool
    min_gap: float
    fallback_used: bool = False

    @property
    def gradient_norm(self) -> float:
        return float(np.linalg.norm(self.gradient))


def sensitivity(sys: SpinSystem, t: InteractionTensors, b, tr: TransitionDescriptor,
                gap_floor: float = GAP_FLOOR_MHZ, hessian_step: float = HESSIAN_STEP_G,
                gradient_step: float = GRADIENT_STEP_G) -> TransitionSensitivity:
    """Frequency, gradient and Hessian of one transition, with a degeneracy flag.

    The flag is raised when lo or hi comes closer to another level than either
    the gap floor or the shift a single Hessian finite-difference step can
    produce, i.e. when the level is degenerate at the derivative's resolution.
    Below the gap floor both derivatives come from central differences
    (``gradient_step`` and ``hessian_step``) instead of raising.
    """
    b = as_field(b)
    tr.check(sys.dim)
    ld = level_derivatives(sys, t, b)
    min_gap = min(float(ld.gaps(tr.lo)[0]), float(ld.gaps(tr.hi)[0]))
    if min_gap > gap_floor:
        g = ld.gradients[0]
        grad = g[tr.hi] - g[tr.lo]
        hess, fallback = zeeman_hessian(sys, t, b, tr, gap_floor, hessian_step, return_flag=True)
    else:
        f = frequency_function(sys, t, tr)
        grad = finite_difference_gradient(f, b, gradient_step)
        hess, fallback = zeeman_hessian(sys, t, b, tr, np.inf, hessian_step, return_flag=True)
    flag_gap = max(gap_floor, resolution_gap(t, float(sys.spin), hessian_step))
    lam, axes = np.linalg.eigh(hess)
    return TransitionSensitivity(
        field=b,
        transition=tr,
        frequency=float(ld.energies[0, tr.hi] - ld.energies[0, tr.lo]),
        gradient=grad,
        hessian=hess,
        hessian_eigenvalues=lam,
        hessian_axes=axes,
        degeneracy_flag=bool(fallback or min_gap < flag_gap),
        min_gap=min_gap,
        fallback_used=bool(fallback),
    )


def frequency_function(sys: SpinSystem, t: InteractionTensors, tr: TransitionDescriptor):
    """Closure f(B) for the finite-difference oracles."""
    return lambda b: transition_frequency(sys, t, b, tr)
