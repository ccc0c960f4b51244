"""H(B) = B.M.I + I.Q.I, transition frequencies and adiabatic state labelling."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import linear_sum_assignment

from .spin_algebra import SpinSystem, eigensystem, fix_phases
from .tensors import InteractionTensors

FIELD_CAP_G = 1.0e4


class ShapeError(ValueError):
    pass


class FieldError(ValueError):
    pass


class DegenerateDescriptorError(ValueError):
    pass


class LabelError(ValueError):
    pass


def as_field(b, cap: float = FIELD_CAP_G) -> np.ndarray:
    """Validate a field vector (Gauss, crystal frame)."""
    b = np.asarray(b, dtype=float)
    if b.shape != (3,):
        raise FieldError(f"field must be a 3-vector, got shape {b.shape}")
    if not np.all(np.isfinite(b)):
        raise FieldError("field components must be finite")
    if np.linalg.norm(b) >= cap:
        raise FieldError(f"|B| = {np.linalg.norm(b):.1f} G exceeds the cap of {cap:g} G")
    return b


def zeeman_operators(sys: SpinSystem, t: InteractionTensors) -> np.ndarray:
    """dH/dB_k = sum_m M_km I_m, shape (3, dim, dim), MHz/G."""
    m = np.asarray(t.m_matrix)
    if m.shape != (3, 3):
        raise ShapeError("Zeeman tensor must be 3x3")
    if not np.allclose(m, m.T, rtol=0, atol=1e-15):
        raise ShapeError("Zeeman tensor must be symmetric")
    return np.einsum("km,mij->kij", m, sys.ops)


def quadrupole_operator(sys: SpinSystem, t: InteractionTensors) -> np.ndarray:
    q = np.asarray(t.q_matrix)
    if q.shape != (3, 3):
        raise ShapeError("quadrupole tensor must be 3x3")
    ops = sys.ops
    return np.einsum("kl,kab,lbc->ac", q, ops, ops)


def build_hamiltonian(sys: SpinSystem, t: InteractionTensors, b) -> np.ndarray:
    """Spin Hamiltonian in MHz at field ``b`` (Gauss)."""
    b = as_field(b)
    h = quadrupole_operator(sys, t) + np.tensordot(b, zeeman_operators(sys, t), axes=1)
    return 0.5 * (h + h.conj().T)


def hamiltonians(sys: SpinSystem, t: InteractionTensors, fields) -> np.ndarray:
    """Stack of Hamiltonians for an (N, 3) array of fields."""
    fields = np.atleast_2d(np.asarray(fields, dtype=float))
    if fields.shape[-1] != 3:
        raise ShapeError(f"fields must have shape (N, 3), got {fields.shape}")
    hq = quadrupole_operator(sys, t)
    hq = 0.5 * (hq + hq.conj().T)
    return hq + np.tensordot(fields, zeeman_operators(sys, t), axes=1)


def energies(sys: SpinSystem, t: InteractionTensors, b) -> np.ndarray:
    return eigensystem(build_hamiltonian(sys, t, b)).values


def energies_batch(sys: SpinSystem, t: InteractionTensors, fields) -> np.ndarray:
    return np.linalg.eigvalsh(hamiltonians(sys, t, fields))


@dataclass(frozen=True)
class TransitionDescriptor:
    """Pair of eigenstate indices in ascending-energy order at the evaluation field."""

    lo: int
    hi: int
    label: str | None = None

    def __post_init__(self):
        lo, hi = int(self.lo), int(self.hi)
        if lo == hi:
            raise DegenerateDescriptorError(f"transition needs two distinct levels, got ({lo}, {hi})")
        if lo > hi:
            lo, hi = hi, lo
        if lo < 0:
            raise DegenerateDescriptorError("level indices must be nonnegative")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def check(self, dim: int) -> None:
        if self.hi >= dim:
            raise DegenerateDescriptorError(f"level index {self.hi} out of range for dim {dim}")


def transition_frequency(sys: SpinSystem, t: InteractionTensors, b, tr: TransitionDescriptor) -> float:
    tr.check(sys.dim)
    e = energies(sys, t, b)
    return float(e[tr.hi] - e[tr.lo])


@dataclass
class LevelMap:
    """Energies along a field path with overlap-based connectivity.

    ``connectivity[p][k]`` is the index at point p+1 of the state that has
    index k at point p.
    """

    fields: np.ndarray
    energies: np.ndarray
    connectivity: list = field(default_factory=list)
    ambiguous: list = field(default_factory=list)
    min_overlap: list = field(default_factory=list)

    def track(self, start_indices=None) -> np.ndarray:
        """Index at every path point of the states starting at ``start_indices``.

        Returns an array of shape (npoints, len(start_indices)).
        """
        dim = self.energies.shape[1]
        cur = np.arange(dim) if start_indices is None else np.asarray(start_indices, dtype=int)
        out = [cur]
        for perm in self.connectivity:
            cur = perm[cur]
            out.append(cur)
        return np.array(out)

    @property
    def any_ambiguous(self) -> bool:
        return bool(np.any(self.ambiguous))


def level_map(sys: SpinSystem, t: InteractionTensors, path, threshold: float = 0.6) -> LevelMap:
    path = np.atleast_2d(np.asarray(path, dtype=float))
    if path.ndim != 2 or path.shape[1] != 3:
        raise ShapeError(f"path must have shape (N, 3), got {path.shape}")
    if len(path) < 2:
        raise ShapeError("path needs at least two points")
    for b in path:
        as_field(b)
    w, v = np.linalg.eigh(hamiltonians(sys, t, path))
    v = fix_phases(v)
    conn, amb, minov = [], [], []
    for p in range(len(path) - 1):
        ov = np.abs(v[p].conj().T @ v[p + 1]) ** 2
        rows, cols = linear_sum_assignment(-ov)
        perm = np.empty(sys.dim, dtype=int)
        perm[rows] = cols
        row_max = ov.max(axis=1)
        conn.append(perm)
        amb.append(bool(np.any(row_max < threshold)))
        minov.append(float(row_max.min()))
    return LevelMap(path, w, conn, amb, minov)


def straight_path(start, end, n_points: int) -> np.ndarray:
    if n_points < 2:
        raise ShapeError("a path needs at least two points")
    s = np.linspace(0.0, 1.0, n_points)[:, None]
    return (1.0 - s) * np.asarray(start, dtype=float) + s * np.asarray(end, dtype=float)


# --- zero-field doublet labels -------------------------------------------------

def _fmt_m(m: Fraction) -> str:
    return str(m.numerator) if m.denominator == 1 else f"{m.numerator}/{m.denominator}"


def doublet_magnitudes(sys: SpinSystem, t: InteractionTensors) -> list[Fraction]:
    """|m| assigned to each zero-field doublet, doublets in ascending energy.

    Ranking uses <(n.I)^2> over each doublet with n the principal axis of Q
    carrying the largest-magnitude principal value.
    """
    if sys.dim % 2:
        raise LabelError("zero-field doublet labels need a half-integer spin")
    e = eigensystem(build_hamiltonian(sys, t, np.zeros(3)))
    qw, qv = np.linalg.eigh(np.asarray(t.q_matrix))
    n = qv[:, np.argmax(np.abs(qw))]
    op = np.tensordot(n, sys.ops, axes=1)
    op2 = op @ op
    weights = []
    for d in range(sys.dim // 2):
        vec = e.vectors[:, 2 * d:2 * d + 2]
        weights.append(float(np.real(np.trace(vec.conj().T @ op2 @ vec))))
    order = np.argsort(weights, kind="stable")
    mags = [None] * (sys.dim // 2)
    for rank, d in enumerate(order):
        mags[d] = Fraction(2 * rank + 1, 2)
    return mags


def adiabatic_labels(sys: SpinSystem, t: InteractionTensors, b, steps: int = 200,
                     threshold: float = 0.6) -> list[str]:
    """Zero-field labels for the eigenstates at ``b`` in ascending-energy order.

    Each state is followed along the straight line from B=0 to ``b``. The
    magnitude comes from the zero-field doublet it connects to; the sign is
    ``+`` for the upper and ``-`` for the lower Zeeman branch of that doublet
    at the first step off zero field.
    """
    b = as_field(b)
    mags = doublet_magnitudes(sys, t)
    if np.linalg.norm(b) == 0.0:
        return ["±" + _fmt_m(mags[k // 2]) for k in range(sys.dim)]
    path = straight_path(np.zeros(3), b, steps + 1)[1:]
    lm = level_map(sys, t, path, threshold=threshold)
    final = lm.track()[-1]
    labels = [""] * sys.dim
    for start, end in enumerate(final):
        sign = "+" if start % 2 else "-"
        labels[end] = sign + _fmt_m(mags[start // 2])
    return labels


_LABEL_RE = re.compile(
    r"^\s*([+\-±]?)\s*(\d+(?:/2)?)\s*(?:<->|<>|↔|->|:|,)\s*([+\-±]?)\s*(\d+(?:/2)?)\s*$"
)


def parse_transition_label(text: str) -> tuple[tuple[str, Fraction], tuple[str, Fraction]]:
    """Parse ``+1/2<->+3/2`` style labels. An empty or ``±`` sign means either branch."""
    m = _LABEL_RE.match(text)
    if m is None:
        raise LabelError(f"cannot parse transition label {text!r}")
    s1, m1, s2, m2 = m.groups()

    def norm(sign):
        return "" if sign in ("", "±") else sign

    return (norm(s1), Fraction(m1)), (norm(s2), Fraction(m2))


def parse_transition(text: str, dim: int | None = None) -> TransitionDescriptor | tuple:
    """Index pair ``"1,2"`` becomes a descriptor; anything else is parsed as a label."""
    idx = re.match(r"^\s*(\d+)\s*[, ]\s*(\d+)\s*$", text)
    if idx:
        tr = TransitionDescriptor(int(idx.group(1)), int(idx.group(2)))
        if dim is not None:
            tr.check(dim)
        return tr
    return parse_transition_label(text)


def _matches(state_label: str, want: tuple[str, Fraction]) -> bool:
    sign, mag = want
    lab_sign, lab_mag = state_label[0], Fraction(state_label[1:])
    # a zero-field label ("±") carries no branch, so it satisfies either sign
    return lab_mag == mag and (sign == "" or lab_sign == "±" or sign == lab_sign)


def label_matches(labels: list[str], tr: TransitionDescriptor, spec) -> bool:
    a, b = labels[tr.lo], labels[tr.hi]
    return (_matches(a, spec[0]) and _matches(b, spec[1])) or (_matches(a, spec[1]) and _matches(b, spec[0]))


def transition_label_matches(text: str, spec) -> bool:
    """Whether a ``"a<->b"`` label produced by :func:`adiabatic_labels` fits a parsed spec."""
    if not text or "<->" not in text:
        return False
    a, b = text.split("<->")
    return (_matches(a, spec[0]) and _matches(b, spec[1])) or (_matches(a, spec[1]) and _matches(b, spec[0]))


def family_pairs(sys: SpinSystem, t: InteractionTensors, spec) -> list[TransitionDescriptor]:
    """Ascending-index pairs connecting the two doublets named in a label, ignoring branch."""
    mags = doublet_magnitudes(sys, t)
    try:
        d1 = mags.index(spec[0][1])
        d2 = mags.index(spec[1][1])
    except ValueError:
        avail = ", ".join(_fmt_m(m) for m in mags)
        raise LabelError(f"no zero-field doublet with that |m|; available: {avail}") from None
    pairs = []
    for i in (2 * d1, 2 * d1 + 1):
        for j in (2 * d2, 2 * d2 + 1):
            if i != j:
                pairs.append(TransitionDescriptor(i, j))
    return sorted(set(pairs), key=lambda p: (p.lo, p.hi))


def available_labels(sys: SpinSystem, t: InteractionTensors) -> list[str]:
    mags = doublet_magnitudes(sys, t)
    out = []
    for i, a in enumerate(mags):
        for b in mags[i + 1:]:
            for sa in "-+":
                for sb in "-+":
                    out.append(f"{sa}{_fmt_m(a)}<->{sb}{_fmt_m(b)}")
    return out


def resolve_transition(sys: SpinSystem, t: InteractionTensors, b, text: str,
                       steps: int = 200) -> TransitionDescriptor:
    """Turn an index pair or a zero-field label into a descriptor valid at ``b``."""
    parsed = parse_transition(text, sys.dim)
    if isinstance(parsed, TransitionDescriptor):
        return parsed
    labels = adiabatic_labels(sys, t, b, steps=steps)
    hits = []
    for lo in range(sys.dim):
        for hi in range(lo + 1, sys.dim):
            tr = TransitionDescriptor(lo, hi)
            if label_matches(labels, tr, parsed):
                hits.append(tr)
    if len(hits) > 1 and np.linalg.norm(as_field(b)) == 0.0:
        hits = hits[:1]  # all branch pairs share one frequency at zero field
    if len(hits) != 1:
        avail = ", ".join(available_labels(sys, t))
        what = "ambiguous" if hits else "unresolvable"
        raise LabelError(f"transition label {text!r} is {what} at this field; available labels: {avail}")
    tr = hits[0]
    return TransitionDescriptor(tr.lo, tr.hi, label=f"{labels[tr.lo]}<->{labels[tr.hi]}")
