"""Hyperfine transition spectra of both C2-related subsites versus applied field."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .hamiltonian import TransitionDescriptor, as_field, build_hamiltonian, level_map
from .spin_algebra import SpinSystem, eigensystem
from .tensors import InteractionTensors, SiteLabel, subsite_transform

DEGENERACY_TOL_MHZ = 1e-7


@dataclass(frozen=True)
class SpectrumLine:
    frequency: float
    intensity: float
    transition: TransitionDescriptor
    subsite: SiteLabel


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if v.shape != (3,) or n == 0 or not np.isfinite(n):
        raise ValueError("rf_direction must be a nonzero 3-vector")
    return v / n


def _clusters(values: np.ndarray, tol: float) -> np.ndarray:
    """Cluster id per eigenvalue; neighbours closer than ``tol`` share an id."""
    ids = np.zeros(len(values), dtype=int)
    for k in range(1, len(values)):
        ids[k] = ids[k - 1] + (values[k] - values[k - 1] > tol)
    return ids


def _site_lines(sys: SpinSystem, t: InteractionTensors, b, u, tol: float) -> list[SpectrumLine]:
    es = eigensystem(build_hamiltonian(sys, t, b))
    rf_op = np.tensordot(np.asarray(t.m_matrix) @ u, sys.ops, axes=1)
    amp = np.abs(es.vectors.conj().T @ rf_op @ es.vectors) ** 2
    cid = _clusters(es.values, tol)
    ncl = cid.max() + 1
    # intensities inside a degenerate cluster depend on the basis; sum over partners instead
    summed = np.zeros((ncl, ncl))
    np.add.at(summed, (cid[:, None], cid[None, :]), amp)
    out = []
    for lo in range(sys.dim):
        for hi in range(lo + 1, sys.dim):
            out.append(SpectrumLine(
                frequency=float(es.values[hi] - es.values[lo]),
                intensity=float(summed[cid[lo], cid[hi]]),
                transition=TransitionDescriptor(lo, hi),
                subsite=t.site,
            ))
    return out


def all_lines(sys: SpinSystem, t: InteractionTensors, b, rf_direction,
              degeneracy_tol: float = DEGENERACY_TOL_MHZ) -> list[SpectrumLine]:
    """Every transition of both subsites with unnormalized RF strengths."""
    b = as_field(b)
    u = _unit(rf_direction)
    partner = subsite_transform(t)
    sites = sorted([t, partner], key=lambda x: x.site.value)
    return [ln for ts in sites for ln in _site_lines(sys, ts, b, u, degeneracy_tol)]


def lines_at(sys: SpinSystem, t: InteractionTensors, b, rf_direction, window=(0.0, np.inf),
             degeneracy_tol: float = DEGENERACY_TOL_MHZ) -> list[SpectrumLine]:
    """Lines of both subsites inside ``window`` (MHz), strongest normalized to 1.

    The RF coupling operator is (M.u).I for RF direction u.
    """
    lo, hi = window
    lines = [ln for ln in all_lines(sys, t, b, rf_direction, degeneracy_tol)
             if lo <= ln.frequency <= hi]
    top = max((ln.intensity for ln in lines), default=0.0)
    if top > 0:
        lines = [SpectrumLine(ln.frequency, ln.intensity / top, ln.transition, ln.subsite) for ln in lines]
    return lines


@dataclass(frozen=True)
class SpectrumRow:
    point_index: int
    b: tuple
    subsite: str
    lo: int
    hi: int
    freq_mhz: float
    intensity: float


@dataclass
class SpectrumTable:
    rows: list = field(default_factory=list)
    ambiguous: dict = field(default_factory=dict)

    COLUMNS = ("point_index", "Bx", "By", "Bz", "subsite", "lo", "hi", "freq_MHz", "intensity")

    def write_csv(self, fh, header_lines=()) -> None:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for r in self.rows:
            w.writerow([r.point_index, f"{r.b[0]:.6f}", f"{r.b[1]:.6f}", f"{r.b[2]:.6f}", r.subsite,
                        r.lo, r.hi, f"{r.freq_mhz:.9f}", f"{r.intensity:.9f}"])


def spectrum_vs_field(sys: SpinSystem, t: InteractionTensors, path, rf_direction,
                      window=(0.0, np.inf)) -> SpectrumTable:
    """Long-format spectrum along ``path``.

    ``lo``/``hi`` in each row identify states by their ascending-energy index
    at the first path point, followed by eigenvector overlap, so a line keeps
    its identity through level crossings.
    """
    path = np.atleast_2d(np.asarray(path, dtype=float))
    if len(path) == 0:
        raise ValueError("path must contain at least one field point")
    sites = {t.site: t, subsite_transform(t).site: subsite_transform(t)}
    identity = {}
    table = SpectrumTable()
    for site, ts in sites.items():
        if len(path) >= 2:
            lm = level_map(sys, ts, path)
            tracked = lm.track()              # tracked[p, k] = index at p of state k
            inv = np.argsort(tracked, axis=1)  # inv[p, i] = identity of index i at p
            table.ambiguous[site.value] = list(lm.ambiguous)
        else:
            inv = np.arange(sys.dim)[None, :]
            table.ambiguous[site.value] = []
        identity[site] = inv
    for p, b in enumerate(path):
        for ln in sorted(lines_at(sys, t, b, rf_direction, window),
                         key=lambda x: (x.subsite.value, x.transition.lo, x.transition.hi)):
            inv = identity[ln.subsite][p]
            table.rows.append(SpectrumRow(
                point_index=p, b=tuple(float(x) for x in b), subsite=ln.subsite.value,
                lo=int(inv[ln.transition.lo]), hi=int(inv[ln.transition.hi]),
                freq_mhz=ln.frequency, intensity=ln.intensity,
            ))
    return table
