"""Echo-decay models, the spectral-diffusion rate relation, data generation and fitting.

Two-pulse models take the total echo delay 2t as their time argument; the
three-pulse biexponential takes tau_2 at fixed tau_1. Times are in seconds.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares, minimize

KINDS = ("exponential", "mims_quadratic", "biexponential")
PARAM_NAMES = {
    "exponential": ("I0", "T2"),
    "mims_quadratic": ("I0", "TM"),
    "biexponential": ("A_f", "tau_f", "A_s", "tau_s"),
}


class DecayModelError(ValueError):
    pass


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class DecayModel:
    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DecayModelError(f"unknown decay model {self.kind!r}; choose from {KINDS}")
        p = tuple(float(x) for x in self.params)
        if len(p) != len(PARAM_NAMES[self.kind]):
            raise DecayModelError(f"{self.kind} takes parameters {PARAM_NAMES[self.kind]}")
        if not all(np.isfinite(x) and x > 0 for x in p):
            raise DecayModelError(f"decay parameters must be positive, got {p}")
        if self.kind == "biexponential" and not p[1] < p[3]:
            raise DecayModelError("biexponential needs tau_f < tau_s")
        object.__setattr__(self, "params", p)

    @classmethod
    def exponential(cls, i0: float, t2: float) -> "DecayModel":
        return cls("exponential", (i0, t2))

    @classmethod
    def mims_quadratic(cls, i0: float, tm: float) -> "DecayModel":
        return cls("mims_quadratic", (i0, tm))

    @classmethod
    def biexponential(cls, a_f: float, tau_f: float, a_s: float, tau_s: float) -> "DecayModel":
        return cls("biexponential", (a_f, tau_f, a_s, tau_s))

    @property
    def names(self) -> tuple:
        return PARAM_NAMES[self.kind]

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.params))

    @property
    def time_constants(self) -> tuple:
        if self.kind == "biexponential":
            return (self.params[1], self.params[3])
        return (self.params[1],)


def _curve(kind: str, p, t):
    if kind == "exponential":
        return p[0] * np.exp(-t / p[1])
    if kind == "mims_quadratic":
        return p[0] * np.exp(-((t / p[1]) ** 2))
    return p[0] * np.exp(-t / p[1]) + p[2] * np.exp(-t / p[3])


def evaluate(model: DecayModel, t):
    """Echo intensity at delay ``t`` (2t for two-pulse models, tau_2 for biexponential)."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or not np.all(np.isfinite(t_arr)):
        raise DecayModelError("delays must be finite and nonnegative")
    out = _curve(model.kind, model.params, t_arr)
    return float(out) if np.ndim(out) == 0 else out


def tm_from_rate(rate_hz_per_s: float) -> float:
    """Phase-memory time for a Lorentzian diffusion width growing at ``rate`` Hz/s: (pi R)^-1/2."""
    if not rate_hz_per_s > 0:
        raise DecayModelError("spectral diffusion rate must be positive")
    return 1.0 / np.sqrt(np.pi * rate_hz_per_s)


def rate_from_tm(tm_s: float) -> float:
    if not tm_s > 0:
        raise DecayModelError("phase memory time must be positive")
    return 1.0 / (np.pi * tm_s**2)


@dataclass(frozen=True)
class DecayData:
    times: np.ndarray
    intensity: np.ndarray
    seed: int | None = None
    noise_fraction: float = 0.0

    def write_csv(self, fh, header_lines=()) -> None:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t_s", "intensity"))
        for t, y in zip(self.times, self.intensity):
            w.writerow((repr(float(t)), repr(float(y))))


def generate(model: DecayModel, times, noise_fraction: float = 0.0, seed: int = 0) -> DecayData:
    """Model values with multiplicative Gaussian noise from ``numpy.random.default_rng(seed)``."""
    if noise_fraction < 0:
        raise DecayModelError("noise_fraction must be nonnegative")
    t = np.asarray(times, dtype=float)
    clean = np.asarray(evaluate(model, t), dtype=float)
    rng = np.random.default_rng(seed)
    noisy = clean * (1.0 + noise_fraction * rng.standard_normal(t.shape))
    return DecayData(t, noisy, seed=seed, noise_fraction=noise_fraction)


def read_csv(fh) -> DecayData:
    """Two-column (seconds, intensity) data; '#' lines and a text header row are skipped."""
    times, vals = [], []
    for row in csv.reader(line for line in fh if not line.lstrip().startswith("#")):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            t, y = float(row[0]), float(row[1])
        except (ValueError, IndexError):
            if not times:
                continue  # header
            raise FitError(f"malformed data row: {row!r}") from None
        times.append(t)
        vals.append(y)
    return DecayData(np.array(times), np.array(vals))


@dataclass(frozen=True)
class FitResult:
    model: DecayModel
    residual_rms: float
    covariance_diag: tuple
    converged: bool
    iterations: int

    def report_lines(self) -> list[str]:
        lines = [f"model: {self.model.kind}"]
        for (name, val), var in zip(self.model.as_dict().items(), self.covariance_diag):
            lines.append(f"{name}: {val:.9g}  (std {np.sqrt(var) if var >= 0 else float('nan'):.3g})")
        lines.append(f"residual_rms: {self.residual_rms:.6g}")
        lines.append(f"converged: {str(self.converged).lower()}")
        lines.append(f"iterations: {self.iterations}")
        return lines


def _starts(kind: str, t, y, n_tau: int = 7):
    tpos = t[t > 0]
    tmin = tpos.min() if tpos.size else max(t.max(), 1e-12) * 1e-3
    taus = np.geomspace(tmin, 10.0 * t.max(), n_tau)
    amp = max(float(np.max(np.abs(y))), 1e-300)
    if kind in ("exponential", "mims_quadratic"):
        return [np.log([amp, tau]) for tau in taus]
    return [np.log([amp / 2, tf, amp / 2, ts]) for i, tf in enumerate(taus) for ts in taus[i + 1:]]


def fit(t, y, kind: str, restarts: int = 7) -> FitResult:
    """Least-squares fit of a decay model.

    Nelder-Mead on log-parameters from a deterministic grid of log-spaced time
    constants picks the basin; Levenberg-Marquardt then polishes the best
    candidate and Gauss-Newton steps finish it. Convergence is judged by a
    gradient-norm test on the final parameters.
    """
    if kind not in KINDS:
        raise FitError(f"unknown decay model {kind!r}; choose from {KINDS}")
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    n_par = len(PARAM_NAMES[kind])
    if t.shape != y.shape or t.ndim != 1:
        raise FitError("t and y must be 1-D arrays of equal length")
    if len(t) < 2 * n_par:
        raise FitError(f"{kind} fit needs at least {2 * n_par} data points, got {len(t)}")
    if np.any(np.diff(t) <= 0):
        raise FitError("times must be strictly increasing")
    if np.any(t < 0):
        raise FitError("times must be nonnegative")
    # fit the peak-normalized curve so results scale exactly with the data
    y_scale = float(np.max(np.abs(y)))
    if not np.isfinite(y_scale) or y_scale == 0.0:
        raise FitError("intensities must be finite and not all zero")
    y = y / y_scale
    amp_idx = [k for k, name in enumerate(PARAM_NAMES[kind]) if name in ("I0", "A_f", "A_s")]

    def resid(theta):
        p = np.exp(theta)
        if kind == "biexponential" and p[1] > p[3]:
            p = p[[2, 3, 0, 1]]
        return _curve(kind, p, t) - y

    def sse(theta):
        with np.errstate(over="ignore", invalid="ignore"):
            r = resid(theta)
        v = float(r @ r)
        return v if np.isfinite(v) else np.inf

    best, best_val, nm_iters = None, np.inf, 0
    for theta0 in _starts(kind, t, y, restarts):
        res = minimize(sse, theta0, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-16 * max(float(y @ y), 1e-300),
                                "maxiter": 4000 * n_par, "maxfev": 8000 * n_par})
        if res.fun < best_val:
            best, best_val, nm_iters = res.x, res.fun, res.nit
    if best is None:
        raise FitError("no finite starting point")
    eps = np.finfo(float).eps
    polish = least_squares(resid, best, method="lm", xtol=eps, ftol=eps, gtol=eps,
                           max_nfev=2000 * n_par)
    theta = polish.x if 0.5 * polish.fun @ polish.fun <= 0.5 * best_val else best
    p = np.exp(theta)
    if kind == "biexponential" and p[1] > p[3]:
        p = p[[2, 3, 0, 1]]
    p, gn_iters = _gauss_newton(kind, p, t, y)
    if kind == "biexponential" and p[1] == p[3]:
        p[3] = np.nextafter(p[3], np.inf)
    r = _curve(kind, p, t) - y
    # gradient-norm test on the natural-parameter Jacobian, scaled by the data
    jac = _jacobian(kind, p, t)
    grad = jac.T @ r
    col = np.linalg.norm(jac, axis=0)
    scale = max(np.linalg.norm(y), 1e-300)
    converged = bool(np.all(np.abs(grad) <= 1e-6 * col * scale + 1e-300))
    dof = max(len(t) - n_par, 1)
    s2 = float(r @ r) / dof
    try:
        cov_diag = np.diag(s2 * np.linalg.inv(jac.T @ jac)).copy()
    except np.linalg.LinAlgError:
        cov_diag = np.full(n_par, np.nan)
    p[amp_idx] *= y_scale
    cov_diag[amp_idx] *= y_scale**2
    return FitResult(
        model=DecayModel(kind, tuple(p)),
        covariance_diag=tuple(float(v) for v in cov_diag),
        residual_rms=float(np.sqrt(np.mean(r**2))) * y_scale,
        converged=converged,
        iterations=int(nm_iters + polish.nfev + gn_iters),
    )


def _gauss_newton(kind: str, p, t, y, max_iter: int = 50):
    """Finish with undamped Gauss-Newton steps (QR least squares).

    The Levenberg-Marquardt cost tolerance only pins parameters to about
    sqrt(eps); a few Gauss-Newton steps take them to the limit set by the
    Jacobian's conditioning. Steps that raise the cost or leave the valid
    region are rejected.
    """
    p = np.array(p, dtype=float)
    r = _curve(kind, p, t) - y
    cost = float(r @ r)
    for it in range(max_iter):
        step = np.linalg.lstsq(_jacobian(kind, p, t), -r, rcond=None)[0]
        trial = p + step
        if not np.all(trial > 0) or (kind == "biexponential" and trial[1] >= trial[3]):
            return p, it
        r_new = _curve(kind, trial, t) - y
        c_new = float(r_new @ r_new)
        if not c_new <= cost * (1 + 1e-12):
            return p, it
        p, r, cost = trial, r_new, c_new
        if np.all(np.abs(step) <= 4 * np.finfo(float).eps * np.abs(p)):
            return p, it + 1
    return p, max_iter


def _jacobian(kind: str, p, t) -> np.ndarray:
    if kind == "exponential":
        e = np.exp(-t / p[1])
        return np.column_stack([e, p[0] * e * t / p[1] ** 2])
    if kind == "mims_quadratic":
        e = np.exp(-((t / p[1]) ** 2))
        return np.column_stack([e, p[0] * e * 2 * t**2 / p[1] ** 3])
    ef, es = np.exp(-t / p[1]), np.exp(-t / p[3])
    return np.column_stack([ef, p[0] * ef * t / p[1] ** 2, es, p[2] * es * t / p[3] ** 2])


def fit_data(data: DecayData, kind: str) -> FitResult:
    return fit(data.times, data.intensity, kind)
