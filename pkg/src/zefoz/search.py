"""Critical points (ZEFOZ points) of a transition frequency over a field box.

The pipeline is scan -> seed at grid minima of |grad f| -> damped Newton ->
dedupe -> classify -> rank by curvature.
"""
from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .derivatives import GAP_FLOOR_MHZ, LevelModel
from .hamiltonian import TransitionDescriptor, adiabatic_labels
from .spin_algebra import SpinSystem
from .tensors import InteractionTensors, SiteLabel, build_tensors, subsite_transform


class BoxError(ValueError):
    pass


class Classification(str, enum.Enum):
    MINIMUM = "minimum"
    MAXIMUM = "maximum"
    SADDLE = "saddle"
    QUASI_FLAT = "quasi-flat"


@dataclass(frozen=True)
class SearchBox:
    lower: tuple = (-1500.0, -1500.0, -1500.0)
    upper: tuple = (1500.0, 1500.0, 1500.0)
    grid_step: float = 50.0
    newton_tol: float = 1e-6
    max_iters: int = 50
    dedupe_radius: float = 1.0
    exclude_radius: float = 5.0
    flat_threshold: float = 1e-6
    gap_floor: float = GAP_FLOOR_MHZ

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != (3,) or hi.shape != (3,):
            raise BoxError("box bounds must be 3-vectors")
        if np.any(lo > hi):
            raise BoxError(f"box lower bound {lo.tolist()} exceeds upper bound {hi.tolist()}")
        if not self.grid_step > 0:
            raise BoxError("grid_step must be positive")
        if self.max_iters < 1 or self.newton_tol <= 0 or self.dedupe_radius <= 0:
            raise BoxError("max_iters, newton_tol and dedupe_radius must be positive")
        object.__setattr__(self, "lower", tuple(lo.tolist()))
        object.__setattr__(self, "upper", tuple(hi.tolist()))

    def axes(self) -> list[np.ndarray]:
        out = []
        for lo, hi in zip(self.lower, self.upper):
            n = int(np.floor((hi - lo) / self.grid_step + 1e-9)) + 1
            out.append(lo + self.grid_step * np.arange(n))
        return out

    def clamp(self, b) -> np.ndarray:
        return np.clip(b, self.lower, self.upper)

    def contains(self, b) -> bool:
        b = np.asarray(b)
        return bool(np.all(b >= np.asarray(self.lower)) and np.all(b <= np.asarray(self.upper)))


@dataclass
class GradientScan:
    axes: list
    fields: np.ndarray        # (N, 3), lexicographic in (x, y, z)
    gradient_norm: np.ndarray  # (N,), NaN where a level was degenerate
    frequency: np.ndarray      # (N,)

    @property
    def shape(self) -> tuple:
        return tuple(len(a) for a in self.axes)


@dataclass(frozen=True)
class CriticalPoint:
    b: np.ndarray
    frequency: float
    gradient_norm: float
    hessian_eigenvalues: np.ndarray
    hessian_axes: np.ndarray   # columns pair with hessian_eigenvalues
    classification: Classification
    curvature_score: float
    subsite: SiteLabel
    transition: TransitionDescriptor
    iterations: int
    label: str | None = None


@dataclass(frozen=True)
class NonConvergence:
    best_b: np.ndarray
    gradient_norm: float
    iterations: int
    reason: str


RANKING_METRICS = {
    "max_abs": lambda lam: float(np.max(np.abs(lam))),
    "sum_abs": lambda lam: float(np.sum(np.abs(lam))),
    "frobenius": lambda lam: float(np.sqrt(np.sum(lam**2))),
}


def classify(eigenvalues, flat_threshold: float) -> Classification:
    lam = np.asarray(eigenvalues)
    if np.any(np.abs(lam) < flat_threshold):
        return Classification.QUASI_FLAT
    if np.all(lam > 0):
        return Classification.MINIMUM
    if np.all(lam < 0):
        return Classification.MAXIMUM
    return Classification.SADDLE


def grid_fields(box: SearchBox) -> tuple[list, np.ndarray]:
    axes = box.axes()
    mesh = np.meshgrid(*axes, indexing="ij")
    return axes, np.stack([m.ravel() for m in mesh], axis=1)


def _grid_level_data(model: LevelModel, fields, chunk: int = 50_000):
    """Energies and Hellmann-Feynman gradients of every level on the grid."""
    es, gs = [], []
    for start in range(0, len(fields), chunk):
        ld = model(fields[start:start + chunk])
        es.append(ld.energies)
        gs.append(ld.gradients)
    return np.concatenate(es), np.concatenate(gs)


def _transition_scan(axes, fields, e, g, tr: TransitionDescriptor, gap_floor: float) -> GradientScan:
    grad = g[:, tr.hi] - g[:, tr.lo]
    norm = np.linalg.norm(grad, axis=1)
    bad = np.zeros(len(fields), dtype=bool)
    for lvl in (tr.lo, tr.hi):
        d = np.abs(e - e[:, lvl, None])
        d[:, lvl] = np.inf
        bad |= d.min(axis=1) <= gap_floor
    norm = np.where(bad, np.nan, norm)
    return GradientScan(axes, fields, norm, e[:, tr.hi] - e[:, tr.lo])


def scan_gradient_norm(sys: SpinSystem, t: InteractionTensors, tr: TransitionDescriptor,
                       box: SearchBox) -> GradientScan:
    """|grad f| on the box grid, rows in lexicographic (x, y, z) order."""
    tr.check(sys.dim)
    axes, fields = grid_fields(box)
    e, g = _grid_level_data(LevelModel(sys, t), fields)
    return _transition_scan(axes, fields, e, g, tr, box.gap_floor)


def grid_minima(scan: GradientScan, exclude_radius: float = 5.0) -> np.ndarray:
    """Fields at strict local minima (26-neighbourhood) of the scanned gradient norm."""
    vals = scan.gradient_norm.reshape(scan.shape)
    filled = np.where(np.isnan(vals), np.inf, vals)
    lo = ndimage.minimum_filter(filled, size=3, mode="nearest")
    hi = ndimage.maximum_filter(np.where(np.isnan(vals), -np.inf, vals), size=3, mode="nearest")
    strict = (hi - filled) > 1e-9 * np.maximum(np.abs(hi), 1e-300)
    is_min = np.isfinite(filled) & (filled <= lo) & strict
    pts = scan.fields[is_min.ravel()]
    keep = np.linalg.norm(pts, axis=1) > exclude_radius
    return pts[keep]


def _batch_derivs(model: LevelModel, fields, tr: TransitionDescriptor, gap_floor: float):
    """Frequency, gradient, Hessian for many fields; ``bad`` marks degenerate levels."""
    ld = model(fields)
    bad = (ld.gaps(tr.lo) <= gap_floor) | (ld.gaps(tr.hi) <= gap_floor)
    g = ld.gradients
    h = ld.level_hessians([tr.lo, tr.hi])
    freq = ld.energies[:, tr.hi] - ld.energies[:, tr.lo]
    return freq, g[:, tr.hi] - g[:, tr.lo], h[:, 1] - h[:, 0], bad


def _finish(t, tr, b, freq, grad, hess, box, iterations, metric):
    lam, axes = np.linalg.eigh(hess)
    return CriticalPoint(
        b=np.asarray(b, dtype=float),
        frequency=float(freq),
        gradient_norm=float(np.linalg.norm(grad)),
        hessian_eigenvalues=lam,
        hessian_axes=axes,
        classification=classify(lam, box.flat_threshold),
        curvature_score=RANKING_METRICS[metric](lam),
        subsite=t.site,
        transition=tr,
        iterations=int(iterations),
    )


def _newton(model: LevelModel, tr: TransitionDescriptor, seeds, box: SearchBox,
            metric: str, max_step: float) -> list:
    """Damped Newton run in lockstep over all seeds."""
    b = box.clamp(np.atleast_2d(np.asarray(seeds, dtype=float)))
    n = len(b)
    freq, grad, hess, bad = _batch_derivs(model, b, tr, box.gap_floor)
    norm = np.where(bad, np.inf, np.linalg.norm(grad, axis=1))
    iters = np.zeros(n, dtype=int)
    reason = np.where(bad, "degenerate level at seed", "").astype(object)
    active = ~bad & (norm >= box.newton_tol)
    for it in range(box.max_iters):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        with np.errstate(all="ignore"):
            try:
                step = -np.linalg.solve(hess[idx], grad[idx][..., None])[..., 0]
            except np.linalg.LinAlgError:
                step = np.stack([-np.linalg.lstsq(h, g, rcond=None)[0] for h, g in zip(hess[idx], grad[idx])])
        finite = np.all(np.isfinite(step), axis=1)
        for k in idx[~finite]:
            reason[k] = "singular Hessian"
            active[k] = False
        idx, step = idx[finite], step[finite]
        slen = np.linalg.norm(step, axis=1, keepdims=True)
        step = np.where(slen > max_step, step * (max_step / np.maximum(slen, 1e-300)), step)
        pending = np.ones(idx.size, dtype=bool)
        for _ in range(21):
            if not pending.any():
                break
            sel = idx[pending]
            trial = box.clamp(b[sel] + step[pending])
            f2, g2, h2, bad2 = _batch_derivs(model, trial, tr, box.gap_floor)
            n2 = np.where(bad2, np.inf, np.linalg.norm(g2, axis=1))
            ok = n2 < norm[sel]
            acc = sel[ok]
            b[acc], freq[acc], grad[acc], hess[acc], norm[acc] = trial[ok], f2[ok], g2[ok], h2[ok], n2[ok]
            iters[acc] = it + 1
            done = np.flatnonzero(pending)[ok]
            pending[done] = False
            step[pending] *= 0.5
        for k in idx[pending]:
            reason[k] = "no decrease after 20 step halvings"
            active[k] = False
        active &= norm >= box.newton_tol
    out = []
    for k in range(n):
        if norm[k] < box.newton_tol:
            out.append(_finish(model.tensors, tr, b[k], freq[k], grad[k], hess[k], box, iters[k], metric))
        else:
            why = reason[k] or "max_iters exceeded"
            out.append(NonConvergence(b[k].copy(), float(norm[k]), int(iters[k]), why))
    return out


def refine_critical_point(sys: SpinSystem, t: InteractionTensors, tr: TransitionDescriptor, seed,
                          box: SearchBox, metric: str = "max_abs", max_step: float | None = None):
    """Damped Newton on grad f = 0 from ``seed``.

    Steps are capped at ``max_step`` (default twice the grid step) and halved
    up to 20 times until |grad f| decreases. Returns a :class:`CriticalPoint`,
    or a :class:`NonConvergence` carrying the best iterate.
    """
    tr.check(sys.dim)
    max_step = 2.0 * box.grid_step if max_step is None else max_step
    return _newton(LevelModel(sys, t), tr, [seed], box, metric, max_step)[0]


def _dedupe(points: list[CriticalPoint], radius: float) -> list[CriticalPoint]:
    kept: list[CriticalPoint] = []
    for p in sorted(points, key=lambda p: (p.gradient_norm, tuple(p.b))):
        if any(q.subsite == p.subsite and q.transition == p.transition
               and np.linalg.norm(q.b - p.b) < radius for q in kept):
            continue
        kept.append(p)
    return kept


def _rank_key(p: CriticalPoint):
    return (p.curvature_score, p.subsite.value, p.transition.lo, p.transition.hi, tuple(np.round(p.b, 6)))


def find_all(sys: SpinSystem, t: InteractionTensors, transitions, box: SearchBox,
             subsites=(SiteLabel.A, SiteLabel.B), metric: str = "max_abs", workers: int = 1,
             seeds=None) -> list[CriticalPoint]:
    """All critical points of the given transition(s) in ``box``, ranked by curvature.

    ``t`` is the site-a tensor set; site b is obtained with the C2 map. Extra
    ``seeds`` (fields) are refined in addition to the grid minima.
    """
    if isinstance(transitions, TransitionDescriptor):
        transitions = [transitions]
    for tr in transitions:
        tr.check(sys.dim)
    if metric not in RANKING_METRICS:
        raise ValueError(f"unknown ranking metric {metric!r}; choose from {sorted(RANKING_METRICS)}")
    site_tensors = {t.site: t}
    other = subsite_transform(t)
    site_tensors[other.site] = other
    axes, fields = grid_fields(box)
    jobs = []
    for site in subsites:
        ts = site_tensors[SiteLabel(site)]
        model = LevelModel(sys, ts)
        e, g = _grid_level_data(model, fields)
        for tr in transitions:
            scan = _transition_scan(axes, fields, e, g, tr, box.gap_floor)
            pts = list(grid_minima(scan, box.exclude_radius))
            if seeds is not None:
                pts.extend(np.asarray(s, dtype=float) for s in seeds)
            # fixed-size chunks keep the result independent of the worker count
            for start in range(0, len(pts), 256):
                jobs.append((model, tr, pts[start:start + 256]))

    def run(job):
        model, tr, pts = job
        return _newton(model, tr, pts, box, metric, 2.0 * box.grid_step) if pts else []

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(run, jobs))
    else:
        chunks = [run(j) for j in jobs]
    results = [r for c in chunks for r in c]
    found = [r for r in results if isinstance(r, CriticalPoint) and r.gradient_norm <= box.newton_tol
             and np.linalg.norm(r.b) > box.exclude_radius]
    return sorted(_dedupe(found, box.dedupe_radius), key=_rank_key)


def with_labels(sys: SpinSystem, t: InteractionTensors, points: list[CriticalPoint],
                steps: int = 200) -> list[CriticalPoint]:
    """Attach adiabatic zero-field labels to each point's transition."""
    site_tensors = {t.site: t, subsite_transform(t).site: subsite_transform(t)}
    out = []
    for p in points:
        labels = adiabatic_labels(sys, site_tensors[p.subsite], p.b, steps=steps)
        lab = f"{labels[p.transition.lo]}<->{labels[p.transition.hi]}"
        out.append(replace(p, label=lab))
    return out


@dataclass
class SweepEntry:
    convention: str
    nearest: CriticalPoint | None
    distance: float           # max per-component distance to the target (G)
    n_points: int


@dataclass
class SweepResult:
    entries: list = field(default_factory=list)

    @property
    def best(self) -> SweepEntry:
        return min(self.entries, key=lambda e: (e.distance, e.convention))


def convention_sweep(sys: SpinSystem, params: dict, transitions, target, box: SearchBox,
                     conventions, frequency=None, frequency_tol: float = 0.05,
                     workers: int = 1) -> SweepResult:
    """Run a site-a search for each Euler convention and record the point closest to ``target``.

    ``params`` holds E, D, g_khz_per_g and euler_deg. When ``frequency`` is
    given only points within ``frequency_tol`` MHz of it are candidates.
    """
    target = np.asarray(target, dtype=float)
    result = SweepResult()
    for conv in conventions:
        ts = build_tensors(params["E"], params["D"], params["g_khz_per_g"], params["euler_deg"], conv)
        pts = find_all(sys, ts, transitions, box, subsites=(SiteLabel.A,), workers=workers)
        if frequency is not None:
            pts = [p for p in pts if abs(p.frequency - frequency) <= frequency_tol]
        if pts:
            d = [float(np.max(np.abs(p.b - target))) for p in pts]
            k = int(np.argmin(d))
            result.entries.append(SweepEntry(conv, pts[k], d[k], len(pts)))
        else:
            result.entries.append(SweepEntry(conv, None, float("inf"), 0))
    return result
