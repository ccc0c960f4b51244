"""Command-line front end: levels, spectrum, sensitivity, search, fit, generate.

Exit codes: 0 success (empty results included), 1 usage or configuration
error, 2 numerical non-convergence.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import io
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import decoherence
from .config import ConfigError, SystemConfig, load_config
from .derivatives import sensitivity
from .hamiltonian import (LabelError, TransitionDescriptor, family_pairs, level_map,
                          parse_transition, resolve_transition, straight_path,
                          transition_label_matches)
from .search import BoxError, SearchBox, classify, find_all, with_labels
from .spectrum import spectrum_vs_field
from .tensors import SiteLabel, subsite_transform

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
OUTPUT_DIR_ENV = "ZEFOZ_OUTPUT_DIR"
BUNDLED_DATA = {
    "zero_field": "zero_field_echo.csv",
    "critical_point": "critical_point_echo.csv",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _common(p: argparse.ArgumentParser, system: bool = True) -> None:
    if system:
        p.add_argument("--config", default=None,
                       help="JSON config file or bundled name (default: site1_pr_yso)")
        p.add_argument("--convention", default=None, help="override the config's Euler convention")
    p.add_argument("--out", default=None, help="output file (default: stdout)")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)


def _path_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--start", type=float, nargs=3, default=(0.0, 0.0, 0.0), metavar=("BX", "BY", "BZ"))
    p.add_argument("--end", type=float, nargs=3, metavar=("BX", "BY", "BZ"))
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--points-file", default=None, help="CSV of Bx,By,Bz rows instead of start/end")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="zefoz", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("levels", help="energy levels along a field path (CSV)")
    _common(p)
    _path_args(p)
    p.add_argument("--subsite", choices=("a", "b"), default="a")

    p = sub.add_parser("spectrum", help="transition spectrum of both subsites along a path (CSV)")
    _common(p)
    _path_args(p)
    p.add_argument("--rf", type=float, nargs=3, default=(1.0, 0.0, 0.0), metavar=("UX", "UY", "UZ"))
    p.add_argument("--window", type=float, nargs=2, default=(0.0, 30.0), metavar=("LO", "HI"))

    p = sub.add_parser("sensitivity", help="gradient and curvature of one transition at a field")
    _common(p)
    p.add_argument("--transition", required=True, help="index pair 'i,j' or label like '+1/2<->-3/2'")
    p.add_argument("--field", type=float, nargs=3, required=True, metavar=("BX", "BY", "BZ"))

    p = sub.add_parser("search", help="critical points of a transition in a field box")
    _common(p)
    p.add_argument("--transition", required=True)
    p.add_argument("--lower", type=float, nargs=3, default=(-1500.0,) * 3)
    p.add_argument("--upper", type=float, nargs=3, default=(1500.0,) * 3)
    p.add_argument("--step", type=float, default=50.0)
    p.add_argument("--newton-tol", type=float, default=1e-6)
    p.add_argument("--metric", choices=("max_abs", "sum_abs", "frobenius"), default="max_abs")
    p.add_argument("--report", default=None, help="also write a structured text report here")

    p = sub.add_parser("fit", help="fit an echo-decay model to two-column CSV data")
    _common(p, system=False)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data")
    src.add_argument("--bundled", choices=sorted(BUNDLED_DATA))
    p.add_argument("--model", choices=decoherence.KINDS, required=True)
    p.add_argument("--curve-out", default=None, help="write the fitted curve as CSV")

    p = sub.add_parser("generate", help="synthetic echo-decay data (CSV)")
    _common(p, system=False)
    p.add_argument("--model", choices=decoherence.KINDS, required=True)
    p.add_argument("--params", type=float, nargs="+", required=True)
    p.add_argument("--times", type=float, nargs=3, required=True, metavar=("START", "STOP", "N"))
    p.add_argument("--spacing", choices=("linear", "log"), default="linear")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    return parser


@contextlib.contextmanager
def _output(path):
    if path is None:
        yield sys.stdout
        return
    target = Path(path)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not target.is_absolute():
        target = Path(base) / target
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w", newline="") as fh:
        yield fh


def _config(args) -> SystemConfig:
    return load_config(args.config).with_convention(args.convention)


def _path(args) -> np.ndarray:
    if args.points_file:
        try:
            pts = np.loadtxt(args.points_file, delimiter=",", comments="#", ndmin=2)
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read points file: {exc}") from None
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) == 0:
            raise UsageError("points file needs rows of Bx,By,Bz")
        return pts
    if args.end is None:
        raise UsageError("give --end (with --start/--points) or --points-file")
    if args.points < 1:
        raise UsageError("--points must be at least 1")
    if args.points == 1:
        return np.asarray([args.start], dtype=float)
    return straight_path(args.start, args.end, args.points)


def _fmt(x: float) -> str:
    return f"{x:.9f}"


def cmd_levels(args) -> int:
    cfg = _config(args)
    path = _path(args)
    if len(path) < 2:
        raise UsageError("a level map needs at least two path points")
    s, t = cfg.spin_system(), cfg.tensors()
    if args.subsite == "b":
        t = subsite_transform(t)
    lm = level_map(s, t, path)
    with _output(args.out) as fh:
        for line in cfg.metadata():
            fh.write(f"# {line}\n")
        fh.write(f"# subsite: {args.subsite}\n")
        fh.write(f"# ambiguous_segments: {int(np.sum(lm.ambiguous))}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["Bx", "By", "Bz"] + [f"E_{k}" for k in range(s.dim)])
        for b, e in zip(lm.fields, lm.energies):
            w.writerow([f"{x:.6f}" for x in b] + [_fmt(v) for v in e])
    return EXIT_OK


def cmd_spectrum(args) -> int:
    cfg = _config(args)
    path = _path(args)
    s, t = cfg.spin_system(), cfg.tensors()
    table = spectrum_vs_field(s, t, path, args.rf, tuple(args.window))
    meta = cfg.metadata() + [
        f"rf_direction: {' '.join(f'{x:g}' for x in args.rf)}",
        f"window_MHz: {args.window[0]:g} {args.window[1]:g}",
        "intensity model: |<i|(M.u).I|j>|^2, strongest line per point = 1",
        "ambiguous_segments: " + ", ".join(f"{k}={int(np.sum(v))}" for k, v in sorted(table.ambiguous.items())),
    ]
    with _output(args.out) as fh:
        table.write_csv(fh, meta)
    return EXIT_OK


def _sensitivity_block(s, t, b, tr) -> list[str]:
    sens = sensitivity(s, t, b, tr)
    lines = [f"[subsite {t.site.value}]"]
    lines += [
        f"frequency_MHz: {_fmt(sens.frequency)}",
        "gradient_MHz_per_G: " + " ".join(f"{x:.6e}" for x in sens.gradient),
        f"gradient_norm: {sens.gradient_norm:.6e}",
        "hessian_eigenvalues_MHz_per_G2: " + " ".join(f"{x:.6e}" for x in sens.hessian_eigenvalues),
    ]
    for k in range(3):
        lines.append(f"hessian_axis_{k + 1}: " + " ".join(f"{x:+.6f}" for x in sens.hessian_axes[:, k]))
    lines += [
        f"classification: {classify(sens.hessian_eigenvalues, 1e-6).value}",
        f"degeneracy_flag: {str(sens.degeneracy_flag).lower()}",
        f"finite_difference_fallback: {str(sens.fallback_used).lower()}",
        f"min_gap_MHz: {sens.min_gap:.6e}",
    ]
    return lines


def cmd_sensitivity(args) -> int:
    cfg = _config(args)
    s, t = cfg.spin_system(), cfg.tensors()
    b = np.asarray(args.field, dtype=float)
    try:
        tr = resolve_transition(s, t, b, args.transition)
    except LabelError as exc:
        raise UsageError(str(exc)) from None
    out = cfg.metadata() + [
        f"field_G: {' '.join(f'{x:g}' for x in b)}",
        f"transition: {tr.lo},{tr.hi}" + (f" ({tr.label})" if tr.label else ""),
    ]
    blocks = [_sensitivity_block(s, t, b, tr), _sensitivity_block(s, subsite_transform(t), b, tr)]
    out += blocks[0] + blocks[1]
    norms = []
    for blk in blocks:
        for line in blk:
            if line.startswith("gradient_norm"):
                norms.append(float(line.split(":")[1]))
    if len(norms) == 2 and norms[0] > 0:
        out.append(f"gradient_norm_ratio_b_over_a: {norms[1] / norms[0]:.6e}")
    with _output(args.out) as fh:
        fh.write("\n".join(out) + "\n")
    return EXIT_OK


SEARCH_COLUMNS = ("Bx", "By", "Bz", "freq_MHz", "grad_norm", "lambda1", "lambda2", "lambda3",
                  "class", "subsite", "iterations", "transition")


def cmd_search(args) -> int:
    cfg = _config(args)
    s, t = cfg.spin_system(), cfg.tensors()
    try:
        box = SearchBox(tuple(args.lower), tuple(args.upper), grid_step=args.step,
                        newton_tol=args.newton_tol)
    except BoxError as exc:
        raise UsageError(str(exc)) from None
    try:
        parsed = parse_transition(args.transition, s.dim)
        if isinstance(parsed, TransitionDescriptor):
            transitions, want = [parsed], None
        else:
            transitions, want = family_pairs(s, t, parsed), parsed
    except (LabelError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    points = find_all(s, t, transitions, box, metric=args.metric, workers=args.workers)
    if s.dim % 2 == 0:
        points = with_labels(s, t, points)
    if want is not None:
        points = [p for p in points if transition_label_matches(p.label, want)]
    meta = cfg.metadata() + [
        f"transition: {args.transition}",
        f"box_G: {' '.join(f'{x:g}' for x in box.lower)} .. {' '.join(f'{x:g}' for x in box.upper)}",
        f"grid_step_G: {box.grid_step:g}",
        f"newton_tol_MHz_per_G: {box.newton_tol:g}",
        f"ranking_metric: {args.metric}",
        f"n_points: {len(points)}",
    ]
    with _output(args.out) as fh:
        for line in meta:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SEARCH_COLUMNS)
        for p in points:
            lab = f"{p.transition.lo}-{p.transition.hi}" + (f" {p.label}" if p.label else "")
            w.writerow([f"{x:.4f}" for x in p.b] + [_fmt(p.frequency), f"{p.gradient_norm:.3e}"]
                       + [f"{x:.6e}" for x in p.hessian_eigenvalues]
                       + [p.classification.value, p.subsite.value, p.iterations, lab])
    if args.report:
        with _output(args.report) as fh:
            fh.write("\n".join(meta) + "\n")
            for k, p in enumerate(points):
                fh.write(f"\n[critical_point {k}]\n")
                fh.write(f"subsite: {p.subsite.value}\n")
                fh.write(f"transition: {p.transition.lo},{p.transition.hi} {p.label or ''}\n".rstrip() + "\n")
                fh.write("B_G: " + " ".join(f"{x:.4f}" for x in p.b) + "\n")
                fh.write(f"frequency_MHz: {_fmt(p.frequency)}\n")
                fh.write(f"gradient_norm: {p.gradient_norm:.3e}\n")
                fh.write("hessian_eigenvalues: " + " ".join(f"{x:.6e}" for x in p.hessian_eigenvalues) + "\n")
                fh.write(f"classification: {p.classification.value}\n")
                fh.write(f"curvature_score: {p.curvature_score:.6e}\n")
                fh.write(f"iterations: {p.iterations}\n")
    return EXIT_OK


def _read_data(args) -> decoherence.DecayData:
    if args.bundled:
        text = resources.files("zefoz.data").joinpath(BUNDLED_DATA[args.bundled]).read_text()
        return decoherence.read_csv(io.StringIO(text))
    try:
        with open(args.data) as fh:
            return decoherence.read_csv(fh)
    except OSError as exc:
        raise UsageError(f"cannot read data file: {exc.strerror}") from None


def cmd_fit(args) -> int:
    data = _read_data(args)
    if len(data.times) == 0:
        raise UsageError("data file contains no data rows")
    try:
        res = decoherence.fit_data(data, args.model)
    except decoherence.FitError as exc:
        raise UsageError(str(exc)) from None
    src = f"bundled:{args.bundled}" if args.bundled else args.data
    with _output(args.out) as fh:
        fh.write(f"data: {src}\n")
        fh.write(f"n_points: {len(data.times)}\n")
        fh.write("\n".join(res.report_lines()) + "\n")
    if args.curve_out:
        tt = np.linspace(0.0, float(data.times.max()), 200)
        curve = decoherence.DecayData(tt, np.asarray(decoherence.evaluate(res.model, tt)))
        with _output(args.curve_out) as fh:
            curve.write_csv(fh, [f"fitted {res.model.kind} curve"])
    return EXIT_OK if res.converged else EXIT_NUMERIC


def cmd_generate(args) -> int:
    try:
        model = decoherence.DecayModel(args.model, tuple(args.params))
    except decoherence.DecayModelError as exc:
        raise UsageError(str(exc)) from None
    start, stop, n = args.times
    if n < 1 or int(n) != n:
        raise UsageError("number of times must be a positive integer")
    if args.spacing == "log":
        if start <= 0:
            raise UsageError("log spacing needs a positive start time")
        times = np.geomspace(start, stop, int(n))
    else:
        times = np.linspace(start, stop, int(n))
    try:
        data = decoherence.generate(model, times, args.noise, args.seed)
    except decoherence.DecayModelError as exc:
        raise UsageError(str(exc)) from None
    meta = [f"model: {model.kind}"] + [f"{k}: {v:.9g}" for k, v in model.as_dict().items()]
    meta += [f"noise_fraction: {args.noise:g}", f"seed: {args.seed}"]
    with _output(args.out) as fh:
        data.write_csv(fh, meta)
    return EXIT_OK


COMMANDS = {
    "levels": cmd_levels,
    "spectrum": cmd_spectrum,
    "sensitivity": cmd_sensitivity,
    "search": cmd_search,
    "fit": cmd_fit,
    "generate": cmd_generate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"zefoz: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"zefoz: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BrokenPipeError:
        # downstream pager or head closed early; not an error of ours
        sys.stderr.close()
        return EXIT_OK
    except SystemExit as exc:  # --help
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
