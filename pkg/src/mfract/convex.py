"""Grid-sampled concave curves and their Legendre-Fenchel machinery.

Curves are sampled on strictly increasing argument grids. Out-of-support
values use an explicit NEGINF sentinel rather than float("-inf") so that
downstream arithmetic never mixes ambient infinities into sums; the support
boundary carries meaning for conjugate transforms.

The transform here is the exact discrete dual: an infimum over grid points
only, no interpolation inside the inf. That makes biconjugation testable on
the nose, with accuracy set by the grid pitch.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class _NegInfType:
    """Tagged minus-infinity: totally ordered below every float, equal only to itself."""

    _instance = None
    __slots__ = ()

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "NEGINF"

    def __lt__(self, other) -> bool:
        return other is not self

    def __le__(self, other) -> bool:
        return True

    def __gt__(self, other) -> bool:
        return False

    def __ge__(self, other) -> bool:
        return other is self

    def __eq__(self, other) -> bool:
        return other is self

    def __hash__(self) -> int:
        return hash("NEGINF-sentinel")

    def __reduce__(self):
        return (_NegInfType, ())


NEGINF = _NegInfType()

SPECTRUM = "spectrum"  # argument is a local exponent, value a dimension
EXPONENT = "exponent"  # argument is a moment order, value a scaling exponent

_CONCAVITY_TOL = 1e-9


@dataclass(frozen=True)
class SpectrumCurve:
    """Sampled (argument, value) pairs with NEGINF allowed outside the support.

    kind is SPECTRUM for alpha -> sigma(alpha) curves (values capped by the
    dimension) and EXPONENT for t -> tau(t) style scaling functions.
    histogram relaxes the contiguous-support rule for binned estimates whose
    interior bins may legitimately be empty.
    """

    arguments: tuple[float, ...]
    values: tuple
    kind: str
    d: int = 1
    histogram: bool = False

    def __post_init__(self) -> None:
        if self.kind not in (SPECTRUM, EXPONENT):
            raise ValueError(f"unknown curve kind {self.kind!r}")
        if len(self.arguments) != len(self.values):
            raise ValueError("arguments and values must have equal length")
        if len(self.arguments) == 0:
            raise ValueError("curve must have at least one sample")
        args = self.arguments
        if any(b <= a for a, b in zip(args, args[1:])):
            raise ValueError("arguments must be strictly increasing")
        fin = [v is not NEGINF for v in self.values]
        if not self.histogram and any(fin):
            first, last = fin.index(True), len(fin) - 1 - fin[::-1].index(True)
            if not all(fin[first:last + 1]):
                raise ValueError("finite-support region must be contiguous")
        if self.kind == SPECTRUM:
            bad = [v for v in self.values if v is not NEGINF and v > self.d + _CONCAVITY_TOL]
            if bad:
                raise ValueError(f"spectrum values exceed dimension {self.d}: max {max(bad)}")

    # ------------------------------------------------------------ accessors

    @property
    def finite_mask(self) -> np.ndarray:
        return np.array([v is not NEGINF for v in self.values], dtype=bool)

    @property
    def finite_arguments(self) -> np.ndarray:
        return np.array([a for a, v in zip(self.arguments, self.values) if v is not NEGINF])

    @property
    def finite_values(self) -> np.ndarray:
        return np.array([v for v in self.values if v is not NEGINF], dtype=float)

    @property
    def n_finite(self) -> int:
        return int(sum(1 for v in self.values if v is not NEGINF))

    def support(self) -> tuple[float, float]:
        fa = self.finite_arguments
        if fa.size == 0:
            raise ValueError("curve has no finite samples")
        return float(fa[0]), float(fa[-1])

    def value_at(self, x: float):
        """Piecewise-linear interpolation inside the finite support, NEGINF outside."""
        fa, fv = self.finite_arguments, self.finite_values
        if fa.size == 0:
            return NEGINF
        if x < fa[0] or x > fa[-1]:
            return NEGINF
        return float(np.interp(x, fa, fv))

    def values_at(self, xs) -> np.ndarray:
        """Vectorized interpolation; out-of-support entries come back as nan."""
        fa, fv = self.finite_arguments, self.finite_values
        xs = np.asarray(xs, dtype=float)
        out = np.interp(xs, fa, fv)
        return np.where((xs < fa[0]) | (xs > fa[-1]), np.nan, out)

    # ------------------------------------------------------------ serialization

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["argument", "value"])
            for a, v in zip(self.arguments, self.values):
                w.writerow([repr(a), "-inf" if v is NEGINF else repr(v)])

    @classmethod
    def from_csv(cls, path, kind: str, d: int = 1, histogram: bool = False) -> "SpectrumCurve":
        args, vals = [], []
        with open(path, newline="") as fh:
            rows = csv.reader(fh)
            header = next(rows)
            if header[:2] != ["argument", "value"]:
                raise ValueError(f"unexpected CSV header {header!r}")
            for row in rows:
                args.append(float(row[0]))
                vals.append(NEGINF if row[1].strip() == "-inf" else float(row[1]))
        return cls(tuple(args), tuple(vals), kind=kind, d=d, histogram=histogram)


def _slope_tol(y: float, slope: float) -> float:
    return 1e-12 * max(1.0, abs(y), abs(slope))


def legendre(curve: SpectrumCurve, out_grid: Sequence[float],
             return_minimizers: bool = False):
    """Discrete concave conjugate: out(y) = min over samples x of x*y - curve(x).

    For exponent-side input the sampled window stands for a function that is
    finite on all of R; when the minimizer sits on the grid boundary and the
    output argument lies strictly beyond the boundary secant slope, the true
    infimum runs away and the output is NEGINF. Spectrum-side input has
    compact support, so its conjugate is finite everywhere.

    Ties are resolved to the leftmost minimizer.
    """
    xs = curve.finite_arguments
    fs = curve.finite_values
    if xs.size < 2:
        raise ValueError("legendre needs at least 2 finite samples")
    out_grid = np.asarray(out_grid, dtype=float)
    if out_grid.ndim != 1 or out_grid.size == 0:
        raise ValueError("output grid must be a non-empty 1-d sequence")
    if np.any(np.diff(out_grid) <= 0):
        raise ValueError("output grid must be strictly increasing")

    first_slope = (fs[1] - fs[0]) / (xs[1] - xs[0])
    last_slope = (fs[-1] - fs[-2]) / (xs[-1] - xs[-2])
    open_domain = curve.kind == EXPONENT

    vals = []
    mins = []
    for y in out_grid:
        prods = xs * y - fs
        idx = int(np.argmin(prods))
        mins.append(idx)
        if open_domain and idx == 0 and y > first_slope + _slope_tol(y, first_slope):
            vals.append(NEGINF)
        elif open_domain and idx == xs.size - 1 and y < last_slope - _slope_tol(y, last_slope):
            vals.append(NEGINF)
        else:
            vals.append(float(prods[idx]))

    out_kind = SPECTRUM if curve.kind == EXPONENT else EXPONENT
    histogram = any(v is NEGINF for v in vals) and _has_gap(vals)
    out = SpectrumCurve(tuple(float(y) for y in out_grid), tuple(vals),
                        kind=out_kind, d=curve.d, histogram=histogram)
    if return_minimizers:
        return out, mins
    return out


def _has_gap(vals: list) -> bool:
    fin = [v is not NEGINF for v in vals]
    if not any(fin):
        return False
    first, last = fin.index(True), len(fin) - 1 - fin[::-1].index(True)
    return not all(fin[first:last + 1])


def concave_hull(samples: Iterable[tuple[float, float]], kind: str = SPECTRUM,
                 d: int = 1) -> SpectrumCurve:
    """Upper concave envelope of a point cloud, evaluated on the sample grid."""
    pts = [(float(a), float(v)) for a, v in samples if v is not NEGINF]
    if not pts:
        raise ValueError("concave_hull needs at least one finite point")
    best: dict[float, float] = {}
    for a, v in pts:
        if a not in best or v > best[a]:
            best[a] = v
    xs = sorted(best)
    ys = [best[x] for x in xs]
    if len(xs) == 1:
        return SpectrumCurve((xs[0],), (ys[0],), kind=kind, d=d)

    # upper hull, monotone chain: keep vertices with strictly decreasing slopes
    hull: list[tuple[float, float]] = []
    for p in zip(xs, ys):
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            # pop the middle point when it is at or below chord(hull[-2], p)
            if (y2 - y1) * (p[0] - x2) <= (p[1] - y2) * (x2 - x1):
                hull.pop()
            else:
                break
        hull.append(p)
    hx = np.array([p[0] for p in hull])
    hy = np.array([p[1] for p in hull])
    env = np.interp(xs, hx, hy)
    return SpectrumCurve(tuple(xs), tuple(float(v) for v in env), kind=kind, d=d)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    witness: str


@dataclass(frozen=True)
class AdmissibilityReport:
    class_tag: str
    checks: tuple[CheckResult, ...]
    diagonal_touch: float | None = None  # leftmost D with sigma(D) = D
    diagonal_touch_interval: tuple[float, float] | None = None
    peak_location: float | None = None  # leftmost D' with sigma(D') = d

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def summary(self) -> str:
        lines = [f"class {self.class_tag}: {'PASS' if self.ok else 'FAIL'}"]
        for c in self.checks:
            lines.append(f"  [{'ok' if c.passed else 'FAIL'}] {c.name}: {c.witness}")
        return "\n".join(lines)


def _is_concave(args: np.ndarray, vals: np.ndarray, scale: float) -> tuple[bool, str]:
    if args.size <= 2:
        return True, "fewer than 3 samples, concavity vacuous"
    slopes = np.diff(vals) / np.diff(args)
    rises = np.diff(slopes)
    worst = float(rises.max()) if rises.size else 0.0
    ok = worst <= _CONCAVITY_TOL * scale
    where = float(args[int(np.argmax(rises)) + 1]) if rises.size else 0.0
    return ok, f"max slope rise {worst:.3e} at argument {where:.6g}"


def validate_admissible(curve: SpectrumCurve, d: int, class_tag: str) -> AdmissibilityReport:
    """Check membership conditions for the admissible spectrum classes.

    class_tag is one of:
      "S_d"  : concave, compactly supported in (0, inf), maximum equal to d.
      "S_dM" : additionally sigma <= Id with a diagonal touch D, and a peak D'.
      "T_dM" : exponent-side dual class: concave, value -d at 0, value 0 at 1,
               all slopes positive.
    Failures are reported with witnesses, never thrown.
    """
    if class_tag not in ("S_d", "S_dM", "T_dM"):
        raise ValueError(f"unknown class tag {class_tag!r}")
    checks: list[CheckResult] = []
    args = curve.finite_arguments
    vals = curve.finite_values
    if args.size == 0:
        return AdmissibilityReport(class_tag, (CheckResult("has finite samples", False, "no finite samples"),))
    scale = max(1.0, float(np.abs(vals).max()), float(np.abs(args).max()))

    ok, wit = _is_concave(args, vals, scale)
    checks.append(CheckResult("concave within tolerance", ok, wit))

    if class_tag == "T_dM":
        v0 = curve.value_at(0.0)
        ok0 = v0 is not NEGINF and abs(v0 + d) <= 1e-9 * scale
        checks.append(CheckResult("value -d at argument 0", ok0,
                                  f"value at 0 is {v0!r}, expected {-d}"))
        v1 = curve.value_at(1.0)
        ok1 = v1 is not NEGINF and abs(v1) <= 1e-9 * scale
        checks.append(CheckResult("value 0 at argument 1", ok1,
                                  f"value at 1 is {v1!r}, expected 0"))
        if args.size >= 2:
            slopes = np.diff(vals) / np.diff(args)
            oks = bool(slopes.min() > 0)
            checks.append(CheckResult("all slopes positive", oks,
                                      f"min slope {float(slopes.min()):.6g}"))
        return AdmissibilityReport(class_tag, tuple(checks))

    peak = float(vals.max())
    ok_max = abs(peak - d) <= 1e-9 * scale
    peak_at = float(args[int(np.argmax(vals))])
    checks.append(CheckResult("maximum equals d", ok_max,
                              f"max {peak:.12g} at {peak_at:.6g}, expected {d}"))

    ok_sup = bool(args[0] > 0)
    checks.append(CheckResult("support contained in (0, inf)", ok_sup,
                              f"support [{args[0]:.6g}, {args[-1]:.6g}]"))

    D = Dhi = None
    if class_tag == "S_dM":
        diffs = vals - args
        worst = float(diffs.max())
        ok_id = worst <= 1e-9 * scale
        checks.append(CheckResult("sigma <= identity", ok_id,
                                  f"max sigma(a)-a = {worst:.3e}"))
        touch = np.abs(diffs) <= 1e-9 * scale
        if touch.any():
            ti = np.nonzero(touch)[0]
            D = float(args[ti[0]])
            Dhi = float(args[ti[-1]])
            wit = f"D = {D:.6g}" + (f" (interval up to {Dhi:.6g})" if ti.size > 1 else "")
            checks.append(CheckResult("diagonal touch sigma(D) = D exists", True, wit))
        else:
            checks.append(CheckResult("diagonal touch sigma(D) = D exists", False,
                                      f"closest approach {worst:.3e} below the diagonal"))
        checks.append(CheckResult("peak sigma(D') = d exists", ok_max,
                                  f"D' = {peak_at:.6g}"))

    return AdmissibilityReport(
        class_tag, tuple(checks),
        diagonal_touch=D,
        diagonal_touch_interval=(D, Dhi) if D is not None and Dhi is not None and Dhi > D else None,
        peak_location=peak_at if ok_max else None,
    )
