"""Command line front end covering the full workflow.

Three subcommands, one run directory each. ``prescribe-measure`` builds a
measure realizing a prescribed spectrum and cross-checks its empirical
scaling function against the conjugate of the prescription.
``frisch-parisi`` solves the inverse problem: it rescales the target
spectrum (through the exhaustion reparametrization first when p is
finite), builds the realizing environment, tabulates the predicted
typical spectrum, and can synthesize the saturating field and estimate
the spectrum back from its wavelet leaders. ``analyze-signal`` runs the
leader pipeline on a stored sample vector.

Configuration is a single JSON document; every default is echoed into a
resolved-config file so a run is reproducible from its output directory
alone. Delimited outputs are plain CSV with a header row, '.' as the
decimal mark and "-inf" for values outside a support. Figures are
rendered to PNG next to each CSV, and a gnuplot script that rebuilds
them from the CSVs alone is emitted alongside.

Exit codes: 0 on success, 2 for configuration problems (the message
names the offending field), 3 when a numeric precondition fails (the
underlying report is printed verbatim). All files are written to a
temporary name and renamed into place, so readers never observe a
partial file.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analysis import check_property_P, empirical_tau
from .convex import EXPONENT, NEGINF, SPECTRUM, SpectrumCurve, legendre
from .measures import Environment, PrescribedSpectrum, build_measure
from .saturation import build_schedule, saturation_coefficients
from .spectra import (ZetaProfile, exhaustion_map, frisch_parisi_scale,
                      typical_spectrum, zeta_star_closed_form)
from .wavelets import (analyze, leaders, load_signal, make_wavelet,
                       recommended_order, save_signal, structure_function,
                       synthesize, zeta_f_estimate)

EXIT_CONFIG = 2
EXIT_NUMERIC = 3
_THREADS_VAR = "MFRACT_THREADS"

_CONFIG_KEYS = frozenset({
    "spectrum", "signal", "d", "depth", "p", "q", "s", "tilts", "order",
    "t_grid", "h_grid", "alpha_grid", "j_range", "synthesize",
    "detrend_log", "seed", "out", "threads",
})


class CliError(Exception):
    """Failure with a designated process exit code."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _field_error(name: str, problem: str) -> CliError:
    return CliError(EXIT_CONFIG, f'config field "{name}": {problem}')


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved settings for one command invocation."""

    command: str
    config_path: Path
    out_dir: Path
    d: int
    depth: int
    p: float
    q: float
    s: float
    tilts: tuple[float, ...]
    order: int | None
    spectrum: PrescribedSpectrum | None
    spectrum_source: str | None
    signal_path: Path | None
    synthesize: bool
    detrend_log: bool | None
    j_range: tuple[int, int] | None
    t_grid: np.ndarray
    h_grid: np.ndarray
    alpha_grid: np.ndarray
    seed: int
    threads: int | None

    def echo(self) -> dict:
        """Every effective setting, defaults included, JSON ready."""
        return {
            "command": self.command,
            "config_path": str(self.config_path),
            "out": str(self.out_dir),
            "d": self.d,
            "depth": self.depth,
            "p": _num_token(self.p),
            "q": _num_token(self.q),
            "s": self.s,
            "tilts": list(self.tilts),
            "order": self.order,
            "spectrum_knots": [[a, y] for a, y in self.spectrum.knots]
            if self.spectrum else None,
            "spectrum_source": self.spectrum_source,
            "signal": str(self.signal_path) if self.signal_path else None,
            "synthesize": self.synthesize,
            "detrend_log": self.detrend_log,
            "j_range": list(self.j_range) if self.j_range else None,
            "t_grid": [float(v) for v in self.t_grid],
            "h_grid": [float(v) for v in self.h_grid],
            "alpha_grid": [float(v) for v in self.alpha_grid],
            "seed": self.seed,
            "threads": self.threads,
        }


def _num_token(x: float):
    """JSON stand-in for an extended real: strings for the infinities."""
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return float(x)


def _as_number(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _field_error(name, f"expected a number, got {value!r}")
    return float(value)


def _as_extended(value, name: str, minimum: float) -> float:
    """Number or the string "inf", at least ``minimum``."""
    if isinstance(value, str):
        if value.lower() in ("inf", "infinity"):
            return math.inf
        raise _field_error(name, f'expected a number or "inf", got {value!r}')
    v = _as_number(value, name)
    if not v >= minimum:
        raise _field_error(name, f"must be >= {minimum}, got {v}")
    return v


def _as_int(value, name: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise _field_error(name, f"expected an integer, got {value!r}")
    if value < minimum:
        raise _field_error(name, f"must be >= {minimum}, got {value}")
    return value


def _parse_grid(value, name: str) -> np.ndarray:
    """Either an explicit list of values or {"lo", "hi", "n"} for linspace."""
    if isinstance(value, dict):
        extra = set(value) - {"lo", "hi", "n"}
        if extra:
            raise _field_error(name, f"unknown grid keys {sorted(extra)}")
        try:
            lo = _as_number(value["lo"], f"{name}.lo")
            hi = _as_number(value["hi"], f"{name}.hi")
            n = _as_int(value["n"], f"{name}.n", 1)
        except KeyError as missing:
            raise _field_error(name, f"grid object needs key {missing}")
        if n == 1:
            if hi != lo:
                raise _field_error(name, "a single point grid needs lo == hi")
            return np.array([lo])
        if not hi > lo:
            raise _field_error(name, f"needs lo < hi, got [{lo}, {hi}]")
        return np.linspace(lo, hi, n)
    if isinstance(value, list):
        if not value:
            raise _field_error(name, "grid must be non-empty")
        vals = np.array([_as_number(v, name) for v in value])
        if np.any(np.diff(vals) <= 0):
            raise _field_error(name, "grid values must be strictly increasing")
        return vals
    raise _field_error(name, f"expected a list or a lo/hi/n object, got {value!r}")


def _parse_spectrum(value, base_dir: Path) -> tuple[PrescribedSpectrum, str]:
    """Inline knots or a CSV file of (argument, value) samples."""
    if not isinstance(value, dict):
        raise _field_error("spectrum", 'expected an object with "knots" or "file"')
    extra = set(value) - {"knots", "file"}
    if extra:
        raise _field_error("spectrum", f"unknown keys {sorted(extra)}")
    if ("knots" in value) == ("file" in value):
        raise _field_error("spectrum", 'needs exactly one of "knots" or "file"')
    if "knots" in value:
        raw = value["knots"]
        if not isinstance(raw, list) or not raw:
            raise _field_error("spectrum.knots", "expected a non-empty list of pairs")
        knots = []
        for i, pair in enumerate(raw):
            if not isinstance(pair, list) or len(pair) != 2:
                raise _field_error("spectrum.knots",
                                   f"entry {i} is not an [argument, value] pair")
            knots.append((_as_number(pair[0], "spectrum.knots"),
                          _as_number(pair[1], "spectrum.knots")))
        try:
            return PrescribedSpectrum(tuple(knots)), "inline"
        except ValueError as bad:
            raise _field_error("spectrum.knots", str(bad))
    path = _resolve_file(value["file"], "spectrum.file", base_dir)
    try:
        curve = SpectrumCurve.from_csv(path, kind=SPECTRUM, d=1)
        knots = tuple(zip((float(a) for a in curve.finite_arguments),
                          (float(v) for v in curve.finite_values)))
        return PrescribedSpectrum(knots), str(path)
    except (ValueError, IndexError) as bad:
        raise _field_error("spectrum.file", f"{path}: {bad}")


def _resolve_file(value, name: str, base_dir: Path) -> Path:
    if not isinstance(value, str) or not value:
        raise _field_error(name, f"expected a file path, got {value!r}")
    path = Path(value)
    if not path.is_absolute():
        path = base_dir / path
    if not path.is_file():
        raise _field_error(name, f"referenced file does not exist: {path}")
    return path


def load_run_config(command: str, config_path: Path,
                    out_flag: str | None, seed_flag: int | None,
                    threads_flag: int | None) -> RunConfig:
    """Parse and validate the JSON document, applying flag overrides."""
    if not config_path.is_file():
        raise CliError(EXIT_CONFIG, f"config file does not exist: {config_path}")
    try:
        doc = json.loads(config_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as bad:
        raise CliError(EXIT_CONFIG, f"config file {config_path}: {bad}")
    if not isinstance(doc, dict):
        raise CliError(EXIT_CONFIG, "config document must be a JSON object")
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise _field_error(sorted(unknown)[0], "unknown config field")

    base_dir = config_path.parent
    d = _as_int(doc.get("d", 1), "d", 1)
    if d not in (1, 2):
        raise _field_error("d", f"dimension must be 1 or 2, got {d}")
    depth = _as_int(doc.get("depth", 12), "depth", 1)
    if depth * d > 62:
        raise _field_error("depth", f"depth {depth} exceeds 62 / d = {62 // d}")
    p = _as_extended(doc.get("p", "inf"), "p", 1.0)
    q = _as_extended(doc.get("q", 2.0), "q", 1.0)
    s = _as_number(doc.get("s", 1.0), "s")
    if not s > 0:
        raise _field_error("s", f"power must be > 0, got {s}")

    raw_tilts = doc.get("tilts", [0.0])
    if not isinstance(raw_tilts, list) or not raw_tilts:
        raise _field_error("tilts", "expected a non-empty list of numbers")
    tilts = tuple(_as_number(v, "tilts") for v in raw_tilts)

    order = doc.get("order")
    if order is not None:
        order = _as_int(order, "order", 1)
        if order > 10:
            raise _field_error("order", f"at most 10 vanishing moments, got {order}")

    spectrum = source = None
    if command in ("prescribe-measure", "frisch-parisi"):
        if "spectrum" not in doc:
            raise _field_error("spectrum", f"required by {command}")
        spectrum, source = _parse_spectrum(doc["spectrum"], base_dir)

    signal_path = None
    if command == "analyze-signal":
        if d != 1:
            raise _field_error("d", "analyze-signal reads one dimensional signals")
        sig = doc.get("signal")
        if not isinstance(sig, dict) or "file" not in sig:
            raise _field_error("signal", 'analyze-signal needs {"file": PATH}')
        extra = set(sig) - {"file"}
        if extra:
            raise _field_error("signal", f"unknown keys {sorted(extra)}")
        signal_path = _resolve_file(sig["file"], "signal.file", base_dir)

    j_range = doc.get("j_range")
    if j_range is not None:
        if (not isinstance(j_range, list) or len(j_range) != 2):
            raise _field_error("j_range", "expected [lo, hi]")
        lo = _as_int(j_range[0], "j_range", 1)
        hi = _as_int(j_range[1], "j_range", 1)
        if lo > hi:
            raise _field_error("j_range", f"needs lo <= hi, got [{lo}, {hi}]")
        j_range = (lo, hi)

    synth = doc.get("synthesize", False)
    if not isinstance(synth, bool):
        raise _field_error("synthesize", f"expected true or false, got {synth!r}")
    detrend = doc.get("detrend_log")
    if detrend is not None and not isinstance(detrend, bool):
        raise _field_error("detrend_log", f"expected true or false, got {detrend!r}")

    t_grid = _parse_grid(doc.get("t_grid", {"lo": -5.0, "hi": 5.0, "n": 101}),
                         "t_grid")
    h_grid = _parse_grid(doc.get("h_grid", {"lo": 0.0, "hi": 2.0, "n": 201}),
                         "h_grid")
    alpha_grid = _parse_grid(doc.get("alpha_grid",
                                     {"lo": 0.0, "hi": 2.0, "n": 201}),
                             "alpha_grid")

    if seed_flag is not None:
        seed = seed_flag
    else:
        seed = doc.get("seed", 0)
        seed = _as_int(seed, "seed", 0)
        if seed >= 1 << 64:
            raise _field_error("seed", "must fit in an unsigned 64 bit integer")

    # the environment variable is honored only when the flag is absent
    if threads_flag is not None:
        threads = threads_flag
    else:
        env_val = os.environ.get(_THREADS_VAR)
        if env_val is None:
            threads = doc.get("threads")
            if threads is not None:
                threads = _as_int(threads, "threads", 1)
        else:
            try:
                threads = int(env_val)
                if threads < 1:
                    raise ValueError
            except ValueError:
                raise CliError(EXIT_CONFIG,
                               f"{_THREADS_VAR} must be a positive integer, "
                               f"got {env_val!r}")

    if out_flag is not None:
        out_dir = Path(out_flag).absolute()
    elif "out" in doc:
        raw_out = doc["out"]
        if not isinstance(raw_out, str) or not raw_out:
            raise _field_error("out", f"expected a directory path, got {raw_out!r}")
        out_dir = Path(raw_out)
        if not out_dir.is_absolute():
            out_dir = base_dir / out_dir
    else:
        out_dir = Path.cwd() / "mfract-out"

    return RunConfig(command=command, config_path=config_path.absolute(),
                     out_dir=out_dir, d=d, depth=depth, p=p, q=q, s=s,
                     tilts=tilts, order=order, spectrum=spectrum,
                     spectrum_source=source, signal_path=signal_path,
                     synthesize=synth, detrend_log=detrend, j_range=j_range,
                     t_grid=t_grid, h_grid=h_grid, alpha_grid=alpha_grid,
                     seed=seed, threads=threads)


# --------------------------------------------------------------------------
# output helpers


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _cell(v) -> str:
    if isinstance(v, str):
        return v
    if v is NEGINF:
        return "-inf"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    f = float(v)
    if math.isnan(f):
        return "nan"
    if math.isinf(f):
        return "-inf" if f < 0 else "inf"
    return repr(f)


def write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_cell(c) for c in row) for row in rows)
    _write_atomic(path, "\n".join(lines) + "\n")


def write_json(path: Path, obj) -> None:
    _write_atomic(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _plot_series(ax, x, y, label: str) -> None:
    ya = np.array([math.nan if v is NEGINF else float(v) for v in y])
    ax.plot(np.asarray(x, dtype=float), ya, linewidth=1.4, label=label)


def render_png(path: Path, title: str, xlabel: str, ylabel: str,
               series: list[tuple]) -> None:
    """Line figure for the arrays behind one CSV; gaps where values leave
    the support. Rendering never participates in the numeric contract."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(7.2, 4.6))
    for x, y, label in series:
        _plot_series(ax, x, y, label)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=9)
    fig.tight_layout()
    tmp = path.with_name(path.name + ".tmp.png")
    fig.savefig(tmp, dpi=120, metadata={"Software": "mfract"})
    plt.close(fig)
    os.replace(tmp, path)


_GP_PREAMBLE = (
    "# Rebuild this run's figures from the CSV files alone:\n"
    "#   gnuplot plots.gp\n"
    "set datafile separator ','\n"
    "set key autotitle columnhead\n"
    "set grid\n"
    "set term pngcairo size 900,600\n")


def write_gnuplot_script(out_dir: Path, entries: list[tuple[str, str]]) -> None:
    """One output block per figure; entries are (png name, plot clause)."""
    parts = [_GP_PREAMBLE]
    for png, clause in entries:
        parts.append(f"set output '{png}'\nplot {clause}\n")
    _write_atomic(out_dir / "plots.gp", "\n".join(parts))


# --------------------------------------------------------------------------
# shared pipeline pieces


def _wrap_environment(m, s: float, eps: float):
    """Power and tilt applied on top of whatever the builder returned.

    A degenerate prescription already comes back wrapped; stacking powers
    multiplies the exponents while the inner tilt picks up the outer
    power, so the composition flattens to a single wrap of a bare measure.
    """
    if s == 1.0 and eps == 0.0:
        return m
    if isinstance(m, Environment):
        return Environment(m.base_measure, s=m.s * s, eps=m.eps * s + eps)
    return Environment(m, s=s, eps=eps)


def _ambient_sigma_curve(spectrum: PrescribedSpectrum, d: int,
                         s: float, eps: float) -> SpectrumCurve:
    """The prescription in ambient coordinates after power and tilt.

    Heights are counts of cubes and do not move; exponents transform
    affinely, exactly as the realized masses do.
    """
    args = tuple(s * a + eps for a, _ in spectrum.knots)
    vals = tuple(float(y) for _, y in spectrum.knots)
    return SpectrumCurve(args, vals, kind=SPECTRUM, d=d)


def _target_tau_curve(spectrum: PrescribedSpectrum, d: int, s: float,
                      eps: float, t_grid: np.ndarray) -> SpectrumCurve:
    """Conjugate of the ambient prescription on the moment grid.

    A single knot (x, y) prescribes an exact power law whose conjugate is
    the line t -> x t - y; anything wider goes through the discrete
    conjugate over the knots.
    """
    ambient = _ambient_sigma_curve(spectrum, d, s, eps)
    if len(ambient.arguments) == 1:
        x, y = ambient.arguments[0], float(ambient.finite_values[0])
        return SpectrumCurve(tuple(float(t) for t in t_grid),
                             tuple(x * float(t) - y for t in t_grid),
                             kind=EXPONENT, d=d)
    return legendre(ambient, t_grid)


def _target_sigma_at(spectrum: PrescribedSpectrum, d: int,
                     grid: np.ndarray) -> list:
    curve = _ambient_sigma_curve(spectrum, d, 1.0, 0.0)
    out = []
    for h in grid:
        v = curve.value_at(float(h))
        out.append(v if v is NEGINF else float(v))
    return out


def _environment_profile(env, spectrum: PrescribedSpectrum, d: int,
                         s: float, eps: float, p: float) -> ZetaProfile:
    """Exponent side profile of the built environment, sampled exactly.

    The theoretical scaling function is piecewise linear with kinks at
    the slopes of the ambient spectrum; a sampling grid containing every
    kink makes the downstream conjugates exact instead of discretized.
    """
    ambient = _ambient_sigma_curve(spectrum, d, s, eps)
    xs = ambient.finite_arguments
    ys = ambient.finite_values
    kinks = (np.diff(ys) / np.diff(xs)) if xs.size > 1 else np.array([])
    base = np.linspace(-40.0, 40.0, 1601)
    grid = np.unique(np.concatenate([base, kinks[np.abs(kinks) < 40.0]]))
    tau = np.asarray(env.theoretical_tau(grid), dtype=float)
    curve = SpectrumCurve(tuple(float(t) for t in grid),
                          tuple(float(v) for v in tau), kind=EXPONENT, d=d)
    return ZetaProfile(curve, p)


def _sup_gap(a, b) -> float:
    """Largest absolute difference over indices where both sides are finite."""
    worst = 0.0
    for x, y in zip(a, b):
        if x is NEGINF or y is NEGINF:
            continue
        worst = max(worst, abs(float(x) - float(y)))
    return worst


# --------------------------------------------------------------------------
# subcommands


def run_prescribe_measure(cfg: RunConfig) -> None:
    """Build the measure, certify it, and cross-check its scaling function."""
    m = build_measure(cfg.spectrum, d=cfg.d, depth_budget=cfg.depth)

    tau_rows: list[list] = []
    sigma_rows: list[list] = []
    property_reports: list[dict] = []
    tau_png: list[tuple] = []
    sigma_png: list[tuple] = []
    for eps in cfg.tilts:
        env = _wrap_environment(m, cfg.s, eps)
        report = check_property_P(env, cfg.depth)
        property_reports.append({
            "tilt": eps,
            "ok": report.ok,
            "order_ok": report.order_ok,
            "phi_trend_ok": report.phi_trend_ok,
            "s1": report.s1,
            "s2": report.s2,
            "C": report.C,
            "depth_range": list(report.depth_range),
            "phi_log2": list(report.phi_log2),
            "witnesses": {k: list(v) for k, v in report.witnesses.items()},
        })

        target_curve = _target_tau_curve(cfg.spectrum, cfg.d, cfg.s, eps,
                                         cfg.t_grid)
        emp_curve = empirical_tau(env, cfg.t_grid, cfg.depth)
        gap = _sup_gap(emp_curve.values, target_curve.values)
        for t, emp, tgt in zip(cfg.t_grid, emp_curve.values, target_curve.values):
            diff = abs(float(emp) - float(tgt))
            tau_rows.append([eps, float(t), emp, tgt, diff, gap])
        tau_png.append((cfg.t_grid, emp_curve.values, f"empirical, tilt {eps:g}"))
        tau_png.append((cfg.t_grid, target_curve.values, f"target, tilt {eps:g}"))

        emp_sigma = legendre(emp_curve, cfg.alpha_grid)
        tgt_sigma = [
            _ambient_sigma_curve(cfg.spectrum, cfg.d, cfg.s, eps).value_at(float(a))
            for a in cfg.alpha_grid]
        sgap = _sup_gap(emp_sigma.values, tgt_sigma)
        for a, emp, tgt in zip(cfg.alpha_grid, emp_sigma.values, tgt_sigma):
            diff = math.nan if (emp is NEGINF or tgt is NEGINF) \
                else abs(float(emp) - float(tgt))
            sigma_rows.append([eps, float(a), emp, tgt, diff, sgap])
        sigma_png.append((cfg.alpha_grid, emp_sigma.values,
                          f"empirical, tilt {eps:g}"))
        sigma_png.append((cfg.alpha_grid, tgt_sigma, f"target, tilt {eps:g}"))

    out = cfg.out_dir
    write_json(out / "measure.json", {
        "descriptor": _wrap_environment(m, cfg.s, cfg.tilts[0]).descriptor()
        if (cfg.s != 1.0 or cfg.tilts[0] != 0.0) else m.descriptor(),
        "power": cfg.s,
        "tilts": list(cfg.tilts),
        "depth": cfg.depth,
        "alpha_bounds": [float(v) for v in m.alpha_bounds()],
    })
    write_json(out / "property_P.json", property_reports)
    write_csv(out / "tau_comparison.csv",
              ["tilt", "t", "tau_empirical", "tau_target", "abs_gap", "sup_gap"],
              tau_rows)
    write_csv(out / "sigma_comparison.csv",
              ["tilt", "alpha", "sigma_empirical", "sigma_target",
               "abs_gap", "sup_gap"],
              sigma_rows)
    render_png(out / "tau_comparison.png",
               "Scaling function: empirical against prescription",
               "moment order t", "tau(t)", tau_png)
    render_png(out / "sigma_comparison.png",
               "Spectrum: conjugate of the empirical scaling function",
               "exponent", "spectrum", sigma_png)
    write_gnuplot_script(out, [
        ("tau_comparison.gp.png",
         "'tau_comparison.csv' using 2:3 with lines, '' using 2:4 with lines"),
        ("sigma_comparison.gp.png",
         "'sigma_comparison.csv' using 2:3 with lines, '' using 2:4 with lines"),
    ])


def run_frisch_parisi(cfg: RunConfig) -> None:
    """Solve for the realizing environment and tabulate both spectra routes."""
    target = cfg.spectrum
    exhaustion_doc = None
    measure_target = target
    if math.isfinite(cfg.p):
        # finite integrability first reparametrizes the target onto the
        # measure side; precondition failures surface verbatim
        tilde, report = exhaustion_map(target, cfg.p, d=cfg.d)
        exhaustion_doc = {
            "ok": report.ok,
            "case": report.case,
            "reasons": list(report.reasons),
            "collapse_end": report.collapse_end,
            "knots_kept": report.knots_kept,
            "summary": report.summary(),
        }
        if not report.ok:
            raise CliError(EXIT_NUMERIC, report.summary())
        measure_target = tilde

    scale, scaled = frisch_parisi_scale(measure_target, d=cfg.d)
    base = build_measure(scaled, d=cfg.d, depth_budget=cfg.depth)

    out = cfg.out_dir
    if exhaustion_doc is not None:
        write_json(out / "exhaustion.json", exhaustion_doc)
        write_csv(out / "sigma_tilde.csv", ["alpha", "sigma_tilde"],
                  [[a, y] for a, y in measure_target.knots])

    overlay_rows: list[list] = []
    estimated: list = ["nan"] * len(cfg.h_grid)
    order_used = None
    profile0 = None
    for idx, eps in enumerate(cfg.tilts):
        env = _wrap_environment(base, 1.0 / scale, eps)
        profile = _environment_profile(env, scaled, cfg.d, 1.0 / scale, eps,
                                       cfg.p)
        if idx == 0:
            profile0 = profile
        predicted = [zeta_star_closed_form(profile, float(h))
                     for h in cfg.h_grid]
        target_vals = _target_sigma_at(target, cfg.d, cfg.h_grid)
        if idx == 0 and cfg.synthesize:
            order_used, estimated = _synthesize_and_estimate(cfg, env, out)
        for h, tgt, pred, est in zip(cfg.h_grid, target_vals, predicted,
                                     estimated if idx == 0 else
                                     ["nan"] * len(cfg.h_grid)):
            overlay_rows.append([eps, float(h), tgt, pred, est])

    write_csv(out / "overlay.csv",
              ["tilt", "H", "sigma_target", "zeta_star_predicted",
               "sigma_estimated"],
              overlay_rows)
    curve = typical_spectrum(profile0)
    curve.to_csv(out / "typical_spectrum.csv.tmp")
    os.replace(out / "typical_spectrum.csv.tmp", out / "typical_spectrum.csv")

    write_json(out / "environment.json", {
        "d": cfg.d,
        "depth": cfg.depth,
        "p": _num_token(cfg.p),
        "q": _num_token(cfg.q),
        "target_knots": [[a, y] for a, y in target.knots],
        "exhaustion": exhaustion_doc,
        "measure_target_knots": [[a, y] for a, y in measure_target.knots],
        "scale_solved": scale,
        "scaled_knots": [[a, y] for a, y in scaled.knots],
        "power_applied": 1.0 / scale,
        "tilts": list(cfg.tilts),
        "order": order_used,
        "base_descriptor": base.descriptor(),
    })

    first = [r for r in overlay_rows if r[0] == cfg.tilts[0]]
    series = [
        (cfg.h_grid, [r[2] for r in first], "target spectrum"),
        (cfg.h_grid, [r[3] for r in first], "predicted typical spectrum"),
    ]
    if cfg.synthesize:
        series.append((cfg.h_grid, [r[4] for r in first], "leaders estimate"))
    render_png(out / "overlay.png", "Inverse problem overlay",
               "exponent H", "spectrum", series)
    write_gnuplot_script(out, [
        ("overlay.gp.png",
         "'overlay.csv' using 2:3 with lines, '' using 2:4 with lines, "
         "'' using 2:5 with lines"),
    ])


def _synthesize_and_estimate(cfg: RunConfig, env, out: Path):
    """Saturating field, its synthesis, and the leaders route back."""
    order = cfg.order if cfg.order is not None \
        else recommended_order(env, cfg.p)
    schedule = build_schedule(env, cfg.depth)
    field = saturation_coefficients(env, cfg.p, cfg.q, order, cfg.depth,
                                    schedule=schedule)
    tmp = out / "saturation_field.dat.tmp"
    field.to_file(tmp)
    os.replace(tmp, out / "saturation_field.dat")

    spec = make_wavelet(order)
    samples = synthesize(field, spec)
    if cfg.d == 1:
        tmp = out / "signal.txt.tmp"
        save_signal(tmp, samples)
        os.replace(tmp, out / "signal.txt")

    lf = leaders(analyze(samples, spec))
    detrend = True if cfg.detrend_log is None else cfg.detrend_log
    est = zeta_f_estimate(lf, cfg.t_grid, j_range=cfg.j_range,
                          detrend_log=detrend)
    sigma_est = legendre(est, cfg.h_grid)
    write_csv(out / "leaders_spectrum.csv", ["H", "sigma_estimated"],
              list(zip((float(h) for h in cfg.h_grid), sigma_est.values)))
    return order, list(sigma_est.values)


def run_analyze_signal(cfg: RunConfig) -> None:
    """Leader pipeline on stored samples: scaling fit, then its conjugate."""
    samples = load_signal(cfg.signal_path)
    order = cfg.order if cfg.order is not None else 3
    spec = make_wavelet(order)
    field = analyze(samples, spec)
    lf = leaders(field)

    detrend = False if cfg.detrend_log is None else cfg.detrend_log
    est, diag = zeta_f_estimate(lf, cfg.t_grid, j_range=cfg.j_range,
                                detrend_log=detrend, return_diagnostics=True)
    sigma_est = legendre(est, cfg.h_grid)

    out = cfg.out_dir
    header = ["t", "zeta_estimate", "r_squared"]
    rows = [[float(t), v, r2]
            for t, v, r2 in zip(cfg.t_grid, est.values, diag.r_squared)]
    if diag.log_drift is not None:
        header.append("log_drift")
        for row, drift in zip(rows, diag.log_drift):
            row.append(drift)
    write_csv(out / "zeta_estimate.csv", header, rows)

    sf_rows = []
    for j in diag.levels_used:
        curve = structure_function(lf, cfg.t_grid, j)
        sf_rows.extend([int(j), float(t), v]
                       for t, v in zip(cfg.t_grid, curve.values))
    write_csv(out / "structure_functions.csv", ["j", "t", "value"], sf_rows)
    write_csv(out / "spectrum.csv", ["H", "sigma_estimate"],
              list(zip((float(h) for h in cfg.h_grid), sigma_est.values)))
    write_json(out / "analysis.json", {
        "signal": str(cfg.signal_path),
        "n_samples": int(samples.size),
        "d": field.d,
        "depth": field.J,
        "order": order,
        "detrend_log": detrend,
        "j_range": list(cfg.j_range) if cfg.j_range
        else [max(1, field.J // 2), max(1, field.J - 2)],
        "levels_used": list(diag.levels_used),
        "levels_empty": list(diag.levels_empty),
    })

    render_png(out / "zeta_estimate.png", "Scaling function estimate",
               "moment order t", "zeta(t)",
               [(cfg.t_grid, est.values, "leaders fit")])
    render_png(out / "spectrum.png", "Estimated spectrum",
               "exponent H", "spectrum",
               [(cfg.h_grid, sigma_est.values, "conjugate of the fit")])
    write_gnuplot_script(out, [
        ("zeta_estimate.gp.png", "'zeta_estimate.csv' using 1:2 with lines"),
        ("spectrum.gp.png", "'spectrum.csv' using 1:2 with lines"),
    ])


# --------------------------------------------------------------------------
# entry point


def _seed_type(value: str) -> int:
    try:
        v = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {value!r}")
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64 bit integer")
    return v


def _threads_type(value: str) -> int:
    try:
        v = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"threads must be an integer, got {value!r}")
    if v < 1:
        raise argparse.ArgumentTypeError("threads must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mfract",
        description="Measures with prescribed spectra, the inverse problem "
                    "for function spaces, and wavelet leader analysis.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, descr in (
            ("prescribe-measure",
             "build a measure realizing a prescribed spectrum and "
             "cross-check its scaling function"),
            ("frisch-parisi",
             "solve the inverse problem for the target spectrum and "
             "optionally synthesize the saturating field"),
            ("analyze-signal",
             "estimate the scaling function and spectrum of a stored "
             "signal through wavelet leaders")):
        cmd = sub.add_parser(name, help=descr, description=descr)
        cmd.add_argument("--config", required=True, metavar="PATH",
                         help="JSON configuration document")
        cmd.add_argument("--out", metavar="DIR",
                         help="output directory (overrides the config)")
        cmd.add_argument("--seed", type=_seed_type, metavar="U64",
                         help="run seed (overrides the config)")
        cmd.add_argument("--threads", type=_threads_type, metavar="N",
                         help=f"worker thread cap; the {_THREADS_VAR} "
                              "environment variable is honored only when "
                              "this flag is absent")
    return parser


_RUNNERS = {
    "prescribe-measure": run_prescribe_measure,
    "frisch-parisi": run_frisch_parisi,
    "analyze-signal": run_analyze_signal,
}


def _apply_threads(n: int | None) -> None:
    # honored by pools created after this point; recorded either way
    if n is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_run_config(args.command, Path(args.config), args.out,
                              args.seed, args.threads)
    except CliError as bad:
        print(f"mfract: {bad}", file=sys.stderr)
        return bad.code

    _apply_threads(cfg.threads)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_json(cfg.out_dir / "resolved_config.json", cfg.echo())
    try:
        _RUNNERS[cfg.command](cfg)
    except CliError as bad:
        print(f"mfract: {bad}", file=sys.stderr)
        return bad.code
    except ValueError as bad:
        print(f"mfract: numeric precondition failed: {bad}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
