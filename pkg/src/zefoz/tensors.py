"""Effective Zeeman and quadrupole tensors, Euler rotations and the C2 subsite map.

Internal units: MHz for energies, Gauss for fields, so the Zeeman tensor is
held in MHz/G. Configuration values in kHz/G are converted on the way in.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field, replace

import numpy as np

KHZ_PER_MHZ = 1000.0


class ConventionError(ValueError):
    pass


class TensorParameterError(ValueError):
    pass


class SiteLabel(str, enum.Enum):
    A = "a"
    B = "b"


_CONVENTION_RE = re.compile(r"^([xyz]{3})(?:-(intrinsic|extrinsic))?$")

# Aliases for the commonly quoted forms; bare sequences are intrinsic.
NAMED_CONVENTIONS = ("zyz", "zxz", "xyz-intrinsic", "xyz-extrinsic")


def parse_convention(tag: str) -> tuple[str, bool]:
    """Return (axis sequence, intrinsic?) for a convention tag like ``zyz`` or ``xyz-extrinsic``."""
    m = _CONVENTION_RE.match(str(tag).strip().lower())
    if m is None:
        raise ConventionError(f"unknown Euler convention {tag!r}")
    seq, kind = m.group(1), m.group(2) or "intrinsic"
    if seq[0] == seq[1] or seq[1] == seq[2]:
        raise ConventionError(f"Euler sequence {seq!r} repeats an axis consecutively")
    return seq, kind == "intrinsic"


def all_conventions() -> list[str]:
    """Every proper Euler / Tait-Bryan sequence in both intrinsic and extrinsic form."""
    seqs = [a + b + c for a in "xyz" for b in "xyz" for c in "xyz" if a != b and b != c]
    return [f"{s}-{kind}" for s in seqs for kind in ("intrinsic", "extrinsic")]


def axis_rotation(axis: str, angle_deg: float) -> np.ndarray:
    """Active right-handed rotation about a coordinate axis."""
    c, s = np.cos(np.radians(angle_deg)), np.sin(np.radians(angle_deg))
    if axis == "x":
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])
    if axis == "y":
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
    if axis == "z":
        return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
    raise ConventionError(f"unknown axis {axis!r}")


def euler_rotation(alpha_deg: float, beta_deg: float, gamma_deg: float,
                   convention: str = "zyz") -> np.ndarray:
    """Rotation matrix for the Euler angles (degrees) under ``convention``.

    Intrinsic ``abc`` composes R_a(alpha) R_b(beta) R_c(gamma); extrinsic
    composes the same elementary rotations in reverse order.
    """
    seq, intrinsic = parse_convention(convention)
    mats = [axis_rotation(ax, ang) for ax, ang in zip(seq, (alpha_deg, beta_deg, gamma_deg))]
    if intrinsic:
        return mats[0] @ mats[1] @ mats[2]
    return mats[2] @ mats[1] @ mats[0]


def c2_rotation(axis=(0.0, 1.0, 0.0)) -> np.ndarray:
    """180 degree rotation about ``axis``: 2 n n^T - 1."""
    n = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(n)
    if not np.isfinite(norm) or norm == 0.0:
        raise TensorParameterError("C2 axis must be a nonzero finite vector")
    n = n / norm
    return 2.0 * np.outer(n, n) - np.eye(3)


@dataclass(frozen=True)
class InteractionTensors:
    q_principal: tuple[float, float, float]
    g_principal: tuple[float, float, float]
    euler_deg: tuple[float, float, float]
    convention: str
    m_matrix: np.ndarray = field(repr=False)
    q_matrix: np.ndarray = field(repr=False)
    site: SiteLabel = SiteLabel.A
    c2_axis: tuple[float, float, float] = (0.0, 1.0, 0.0)

    @property
    def rotation(self) -> np.ndarray:
        return euler_rotation(*self.euler_deg, self.convention)


def build_tensors(E: float, D: float, g_khz_per_g, euler_deg=(0.0, 0.0, 0.0),
                  convention: str = "zyz", c2_axis=(0.0, 1.0, 0.0)) -> InteractionTensors:
    """Crystal-frame tensors from principal values.

    Parameters
    ----------
    E, D : float
        Quadrupole parameters in MHz; the principal tensor is diag(-E, E, D).
    g_khz_per_g : sequence of 3 floats
        Zeeman principal values in kHz/G.
    euler_deg : sequence of 3 floats
        Euler angles in degrees.
    convention : str
        Euler convention tag, see :func:`parse_convention`.
    """
    g = np.asarray(g_khz_per_g, dtype=float)
    if g.shape != (3,):
        raise TensorParameterError("g principal values must have 3 components")
    if not (np.isfinite(E) and np.isfinite(D)) or E < 0 or D <= 0:
        raise TensorParameterError(f"need E >= 0 and D > 0, got E={E}, D={D}")
    if not np.all(np.isfinite(g)) or np.any(g <= 0):
        raise TensorParameterError(f"g principal values must be positive, got {g.tolist()}")
    angles = tuple(float(a) for a in euler_deg)
    r = euler_rotation(*angles, convention)
    g_mhz = g / KHZ_PER_MHZ
    q = np.array([-E, E, D], dtype=float)
    m_matrix = r @ np.diag(g_mhz) @ r.T
    q_matrix = r @ np.diag(q) @ r.T
    # symmetrize away rounding so downstream symmetry assertions are exact
    m_matrix = 0.5 * (m_matrix + m_matrix.T)
    q_matrix = 0.5 * (q_matrix + q_matrix.T)
    m_matrix.setflags(write=False)
    q_matrix.setflags(write=False)
    return InteractionTensors(
        q_principal=tuple(q.tolist()),
        g_principal=tuple(g_mhz.tolist()),
        euler_deg=angles,
        convention=convention,
        m_matrix=m_matrix,
        q_matrix=q_matrix,
        c2_axis=tuple(float(x) for x in c2_axis),
    )


def from_matrices(m_matrix, q_matrix, convention: str = "zyz") -> InteractionTensors:
    """Wrap arbitrary symmetric crystal-frame tensors (MHz/G, MHz).

    Principal values are recomputed from the matrices; Euler angles are left at zero
    since they are not recovered.
    """
    m = np.array(m_matrix, dtype=float)
    q = np.array(q_matrix, dtype=float)
    for name, t in (("M", m), ("Q", q)):
        if t.shape != (3, 3) or not np.allclose(t, t.T, rtol=0, atol=1e-12 * max(1.0, np.abs(t).max())):
            raise TensorParameterError(f"{name} must be a symmetric 3x3 matrix")
    m = 0.5 * (m + m.T)
    q = 0.5 * (q + q.T)
    m.setflags(write=False)
    q.setflags(write=False)
    return InteractionTensors(
        q_principal=tuple(np.linalg.eigvalsh(q).tolist()),
        g_principal=tuple(np.linalg.eigvalsh(m).tolist()),
        euler_deg=(0.0, 0.0, 0.0),
        convention=convention,
        m_matrix=m,
        q_matrix=q,
    )


def subsite_transform(t: InteractionTensors, axis=None) -> InteractionTensors:
    """Tensors of the C2-related partner site: C M C^T and C Q C^T."""
    axis = t.c2_axis if axis is None else axis
    c = c2_rotation(axis)
    m_b = c @ t.m_matrix @ c.T
    q_b = c @ t.q_matrix @ c.T
    m_b = 0.5 * (m_b + m_b.T)
    q_b = 0.5 * (q_b + q_b.T)
    m_b.setflags(write=False)
    q_b.setflags(write=False)
    other = SiteLabel.B if t.site == SiteLabel.A else SiteLabel.A
    return replace(t, m_matrix=m_b, q_matrix=q_b, site=other,
                   c2_axis=tuple(float(x) for x in np.asarray(axis, dtype=float)))


def khz_to_mhz(x):
    return np.asarray(x, dtype=float) / KHZ_PER_MHZ


def mhz_to_khz(x):
    return np.asarray(x, dtype=float) * KHZ_PER_MHZ


# Site-1 parameters for Pr3+:Y2SiO5 (ground-state hyperfine, crystal C2 axis along y).
PR_YSO_SITE1 = {
    "E": 0.5624,
    "D": 4.4450,
    "g_khz_per_g": (2.86, 3.05, 11.56),
    "euler_deg": (-99.7, 55.7, -40.0),
}
