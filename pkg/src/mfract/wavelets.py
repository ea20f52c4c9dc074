"""Periodic orthonormal wavelet transforms, wavelet leaders, and the
leader-based scaling machinery built on top of them.

Coefficients are stored in the sup-norm convention: the coefficient of the
cube (i, j, k) is 2^(d j / 2) times the orthonormal transform output, which
makes |c| directly comparable to local oscillation and keeps the leader
pipeline free of per-level renormalisation. Samples are likewise treated as
function values: analyze divides by 2^(d J / 2) before running the pyramid
and synthesize multiplies the reconstruction back.

Everything is periodic on the unit torus. In dimension 2 the transform is
separable with three detail orientations per level; orientation bits follow
the axes, so i = 1 is highpass along axis 0, i = 2 along axis 1, i = 3 along
both.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .convex import EXPONENT, NEGINF, SpectrumCurve, legendre

_PR_TOL = 1e-12
_MOMENT_TOL = 1e-8

# Minimal-phase orthonormal lowpass filters with the stated number of
# vanishing moments, frozen from an extended-precision solve of the
# defining orthonormality and moment equations (roots inside the unit
# circle). The literals carry more digits than float64 keeps; they round
# to the intended binary values.
_DAUB_LOWPASS: dict[int, tuple[float, ...]] = {
    2: (
        0.4829629131445341433748716,
        0.8365163037378079055752938,
        0.2241438680420133810259728,
        -0.1294095225512603811744494,
    ),
    3: (
        0.3326705529500826159985116,
        0.8068915093110925764944936,
        0.4598775021184915700951519,
        -0.1350110200102545886963899,
        -0.08544127388202666169281917,
        0.03522629188570953660274066,
    ),
    4: (
        0.2303778133088965008632912,
        0.7148465705529156470899220,
        0.6308807679298589078817163,
        -0.02798376941685985421141375,
        -0.1870348117190930840795707,
        0.03084138183556076362721936,
        0.03288301166688519973540751,
        -0.01059740178506903210488321,
    ),
    5: (
        0.1601023979741929144807237,
        0.6038292697971896705401193,
        0.7243085284377729277280712,
        0.1384281459013207315053971,
        -0.2422948870663820318625713,
        -0.03224486958463837464847975,
        0.07757149384004571352313048,
        -0.006241490212798274274190519,
        -0.01258075199908199946850973,
        0.003335725285473771277998312,
    ),
    6: (
        0.1115407433501094636213239,
        0.4946238903984530856772041,
        0.7511339080210953506789344,
        0.3152503517091976290859896,
        -0.2262646939654399171412704,
        -0.1297668675672619355622174,
        0.09750160558732304910234355,
        0.02752286553030572862554083,
        -0.03158203931748602956507908,
        0.0005538422011614961392519183,
        0.004777257510945510639635975,
        -0.001077301085308479564852621,
    ),
    7: (
        0.07785205408500917901996352,
        0.3965393194819173065390003,
        0.7291320908462351199122950,
        0.4697822874051931159031928,
        -0.1439060039285649754050683,
        -0.2240361849938749826381404,
        0.07130921926683026475087657,
        0.08061260915108307191292248,
        -0.03802993693501441357959206,
        -0.01657454163066688065410767,
        0.01255099855609984061298988,
        0.0004295779729213665211321291,
        -0.001801640704047490915268262,
        0.0003537137999745202484462959,
    ),
    8: (
        0.05441584224310400995500940,
        0.3128715909142999706591623,
        0.6756307362972898068078007,
        0.5853546836542067127712655,
        -0.01582910525634930566738054,
        -0.2840155429615469265162031,
        0.0004724845739132827703605900,
        0.1287474266204784588570292,
        -0.01736930100180754616961614,
        -0.04408825393079475150676372,
        0.01398102791739828164872293,
        0.008746094047405776716382743,
        -0.004870352993451574310422181,
        -0.0003917403733769470462980803,
        0.0006754494064505693663695475,
        -0.0001174767841247695212624925,
    ),
    9: (
        0.03807794736387834658869765,
        0.2438346746125903537320415,
        0.6048231236901111119030769,
        0.6572880780513005380782126,
        0.1331973858250075761909549,
        -0.2932737832791749088064032,
        -0.09684078322297646051350813,
        0.1485407493381063801350727,
        0.03072568147933337921231740,
        -0.06763282906132997367564227,
        0.0002509471148314519575871897,
        0.02236166212367909720537378,
        -0.004723204757751397277925708,
        -0.004281503682463429834496795,
        0.001847646883056226476619129,
        0.0002303857635231959672052164,
        -0.0002519631889427101369749887,
        0.00003934732031627159948068988,
    ),
    10: (
        0.02667005790055555358661745,
        0.1881768000776914890208930,
        0.5272011889317255864817448,
        0.6884590394536035657418718,
        0.2811723436605774607487270,
        -0.2498464243273153794161019,
        -0.1959462743773770435042993,
        0.1273693403357932600826772,
        0.09305736460357235116035229,
        -0.07139414716639708714533609,
        -0.02945753682187581285828324,
        0.03321267405934100173976365,
        0.003606553566956169655423291,
        -0.01073317548333057504431811,
        0.001395351747052901165789318,
        0.001992405295185056117158742,
        -0.0006858566949597116265613710,
        -0.0001164668551292854509514810,
        0.00009358867032006959133405013,
        -0.00001326420289452124481243668,
    ),
}

_HAAR_NOTE = "insufficient regularity for leaders formalism"


# --------------------------------------------------------------------------
# filter bank


@dataclass(frozen=True)
class WaveletSpec:
    """Analysis filter pair of a compactly supported orthonormal wavelet.

    order counts vanishing moments of the highpass filter. note is set on
    constructions that are accepted for diagnostics only.
    """

    family: str
    order: int
    lowpass: tuple[float, ...]
    highpass: tuple[float, ...]
    note: str | None = None

    def __post_init__(self) -> None:
        h = np.asarray(self.lowpass, dtype=float)
        g = np.asarray(self.highpass, dtype=float)
        L = h.size
        if self.order < 1:
            raise ValueError(f"order must be >= 1, got {self.order}")
        if L < 2 or L % 2 != 0 or g.size != L:
            raise ValueError("filters must share an even length >= 2")
        if abs(h.sum() - math.sqrt(2.0)) > _PR_TOL:
            raise ValueError("lowpass does not sum to sqrt(2)")
        for m in range(L // 2):
            target = 1.0 if m == 0 else 0.0
            got = float(np.dot(h[: L - 2 * m], h[2 * m:]))
            if abs(got - target) > _PR_TOL:
                raise ValueError(
                    f"orthonormality fails at shift {2 * m}: {got!r}")
        mirror = np.array([(-1.0) ** k * h[L - 1 - k] for k in range(L)])
        if float(np.max(np.abs(g - mirror))) > _PR_TOL:
            raise ValueError("highpass is not the mirror of the lowpass")
        k = np.arange(L, dtype=float)
        for m in range(self.order):
            weights = k ** m * g
            scale = max(1.0, float(np.abs(weights).sum()))
            if abs(float(weights.sum())) / scale > _MOMENT_TOL:
                raise ValueError(
                    f"moment {m} of the highpass does not vanish")

    @property
    def support_length(self) -> int:
        return len(self.lowpass)

    @property
    def diagnostics_only(self) -> bool:
        return self.note is not None


def make_wavelet(order: int) -> WaveletSpec:
    """Minimal-phase orthonormal wavelet with the given vanishing moments.

    Orders 2 through 10 come from the frozen filter table. Order 1 is the
    Haar pair; it is accepted but flagged because one vanishing moment is
    too few for exponent estimation from leaders.
    """
    if order == 1:
        r = math.sqrt(0.5)
        return WaveletSpec("haar", 1, (r, r), (r, -r), note=_HAAR_NOTE)
    if order in _DAUB_LOWPASS:
        h = _DAUB_LOWPASS[order]
        L = len(h)
        g = tuple((-1.0) ** k * h[L - 1 - k] for k in range(L))
        return WaveletSpec("minimal-phase", order, h, g)
    raise ValueError(f"no filter of order {order}; supported: 1..10")


def recommended_order(m, p: float) -> int:
    """Default analysis order for fields built over the measure m.

    One more moment than the steepest exponent the construction can reach,
    floor(alpha_max + d / p) + 1, clamped to the available table. Order 1
    is never recommended because it cannot separate exponents >= 1.
    """
    if not p >= 1.0:
        raise ValueError(f"p must be >= 1, got {p}")
    alpha_max = float(m.alpha_bounds()[1])
    shift = 0.0 if math.isinf(p) else m.d / p
    return max(2, min(10, int(math.floor(alpha_max + shift)) + 1))


# --------------------------------------------------------------------------
# coefficient containers


def _check_grid_shape(shape: tuple[int, ...]) -> tuple[int, int]:
    d = len(shape)
    if d not in (1, 2):
        raise ValueError(f"only d = 1 and d = 2 grids, got shape {shape}")
    n = shape[0]
    if n < 1 or n & (n - 1):
        raise ValueError(f"grid side must be a power of two, got {n}")
    if any(s != n for s in shape):
        raise ValueError(f"grid must be square, got shape {shape}")
    return d, n.bit_length() - 1


@dataclass
class WaveletField:
    """Periodic wavelet coefficients of one function on the unit torus.

    scaling holds the level-0 approximation (a single coefficient per
    dimension pattern), details[j] has shape (2^d - 1, 2^j, ...) with the
    orientation axis first. Coefficients follow the sup-norm convention.
    """

    d: int
    J: int
    order: int
    scaling: np.ndarray
    details: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if self.d not in (1, 2):
            raise ValueError(f"d must be 1 or 2, got {self.d}")
        if self.J < 1:
            raise ValueError(f"J must be >= 1, got {self.J}")
        want = (1,) * self.d
        self.scaling = np.asarray(self.scaling, dtype=float)
        if self.scaling.shape != want:
            raise ValueError(
                f"scaling block must have shape {want}, got {self.scaling.shape}")
        if len(self.details) != self.J:
            raise ValueError(
                f"need {self.J} detail levels, got {len(self.details)}")
        fixed = []
        orient = (1 << self.d) - 1
        for j, block in enumerate(self.details):
            block = np.asarray(block, dtype=float)
            want = (orient,) + (1 << j,) * self.d
            if block.shape != want:
                raise ValueError(
                    f"level {j} block must have shape {want}, got {block.shape}")
            fixed.append(block)
        self.details = tuple(fixed)

    @property
    def orientations(self) -> int:
        return (1 << self.d) - 1

    def level(self, j: int) -> np.ndarray:
        if not 0 <= j < self.J:
            raise ValueError(f"level {j} outside [0, {self.J})")
        return self.details[j]

    # ------------------------------------------------------------ file io

    def to_file(self, path) -> None:
        """Header line of JSON, then one CSV row per coefficient.

        Rows are "i,j,k,value" in dimension 1 and "i,j,k0,k1,value" in
        dimension 2; the scaling block is written with i = 0, j = 0.
        Values use repr so a round trip is bit exact.
        """
        header = {"kind": "wavelet-field", "d": self.d, "J": self.J,
                  "order": self.order}
        cols = "i,j," + ",".join(f"k{a}" for a in range(self.d)) + ",value" \
            if self.d == 2 else "i,j,k,value"
        with open(path, "w", encoding="ascii") as fh:
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            fh.write(cols + "\n")
            zero = ",".join("0" for _ in range(self.d))
            fh.write(f"0,0,{zero},{float(self.scaling.ravel()[0])!r}\n")
            for j, block in enumerate(self.details):
                for i in range(block.shape[0]):
                    plane = block[i]
                    if self.d == 1:
                        for k, v in enumerate(plane):
                            fh.write(f"{i + 1},{j},{k},{float(v)!r}\n")
                    else:
                        for k0 in range(plane.shape[0]):
                            row = plane[k0]
                            for k1, v in enumerate(row):
                                fh.write(
                                    f"{i + 1},{j},{k0},{k1},{float(v)!r}\n")

    @classmethod
    def from_file(cls, path) -> "WaveletField":
        with open(path, "r", encoding="ascii") as fh:
            header = json.loads(fh.readline())
            if header.get("kind") != "wavelet-field":
                raise ValueError(f"not a wavelet field file: {path}")
            d, J, order = header["d"], header["J"], header["order"]
            fh.readline()  # column names
            scaling = np.zeros((1,) * d)
            details = [np.zeros(((1 << d) - 1,) + (1 << j,) * d)
                       for j in range(J)]
            for line in fh:
                parts = line.rstrip("\n").split(",")
                i, j = int(parts[0]), int(parts[1])
                k = tuple(int(p) for p in parts[2:2 + d])
                v = float(parts[2 + d])
                if i == 0:
                    scaling[k] = v
                else:
                    details[j][(i - 1,) + k] = v
        return cls(d=d, J=J, order=order, scaling=scaling,
                   details=tuple(details))


def save_signal(path, samples: np.ndarray) -> None:
    """One sample per line, repr precision. One dimensional signals only."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 1:
        raise ValueError("signal files hold one dimensional sample vectors")
    with open(path, "w", encoding="ascii") as fh:
        for v in samples:
            fh.write(f"{float(v)!r}\n")


def load_signal(path) -> np.ndarray:
    with open(path, "r", encoding="ascii") as fh:
        vals = [float(line) for line in fh if line.strip()]
    if not vals:
        raise ValueError(f"empty signal file: {path}")
    return np.array(vals, dtype=float)


# --------------------------------------------------------------------------
# transform


def _down_pair(a: np.ndarray, filt: np.ndarray, axis: int) -> np.ndarray:
    """Periodic filter and dyadic downsample along one axis."""
    moved = np.moveaxis(a, axis, 0)
    m = moved.shape[0]
    idx = (2 * np.arange(m // 2)[:, None] + np.arange(filt.size)[None, :]) % m
    out = np.tensordot(moved[idx], filt, axes=([1], [0]))
    return np.moveaxis(out, 0, axis)


def _up_pair(low: np.ndarray, high: np.ndarray, h: np.ndarray,
             g: np.ndarray, axis: int) -> np.ndarray:
    """Inverse of _down_pair for the paired lowpass and highpass halves."""
    lo = np.moveaxis(low, axis, 0)
    hi = np.moveaxis(high, axis, 0)
    half = lo.shape[0]
    out = np.zeros((2 * half,) + lo.shape[1:], dtype=float)
    base = 2 * np.arange(half)
    for n in range(h.size):
        idx = (base + n) % (2 * half)
        out[idx] += h[n] * lo + g[n] * hi
    return np.moveaxis(out, 0, axis)


def analyze(samples: np.ndarray, spec: WaveletSpec,
            J: int | None = None) -> WaveletField:
    """Full periodic pyramid from samples on a dyadic grid.

    samples must be a length 2^J vector or a 2^J by 2^J array; J is taken
    from the shape and, when passed, must agree with it.
    """
    samples = np.asarray(samples, dtype=float)
    d, j_shape = _check_grid_shape(samples.shape)
    if J is not None and J != j_shape:
        raise ValueError(f"J = {J} does not match grid of depth {j_shape}")
    J = j_shape
    if J < 1:
        raise ValueError("need at least one level, got a single sample")
    h = np.asarray(spec.lowpass)
    g = np.asarray(spec.highpass)

    a = samples * 2.0 ** (-0.5 * d * J)
    details: list[np.ndarray] = [None] * J
    for j in range(J - 1, -1, -1):
        norm = 2.0 ** (0.5 * d * j)
        if d == 1:
            low = _down_pair(a, h, 0)
            high = _down_pair(a, g, 0)
            details[j] = norm * high[None, :]
            a = low
        else:
            low0 = _down_pair(a, h, 0)
            high0 = _down_pair(a, g, 0)
            ll = _down_pair(low0, h, 1)
            lh = _down_pair(low0, g, 1)
            hl = _down_pair(high0, h, 1)
            hh = _down_pair(high0, g, 1)
            details[j] = norm * np.stack([hl, lh, hh])
            a = ll
    return WaveletField(d=d, J=J, order=spec.order, scaling=a,
                        details=tuple(details))


def synthesize(field: WaveletField, spec: WaveletSpec) -> np.ndarray:
    """Samples of the function the coefficients describe, on the 2^J grid."""
    if spec.order != field.order:
        raise ValueError(
            f"field was analysed at order {field.order}, spec has "
            f"order {spec.order}")
    h = np.asarray(spec.lowpass)
    g = np.asarray(spec.highpass)
    d = field.d
    a = field.scaling
    for j in range(field.J):
        block = field.details[j] * 2.0 ** (-0.5 * d * j)
        if d == 1:
            a = _up_pair(a, block[0], h, g, axis=0)
        else:
            low0 = _up_pair(a, block[1], h, g, axis=1)
            high0 = _up_pair(block[0], block[2], h, g, axis=1)
            a = _up_pair(low0, high0, h, g, axis=0)
    return a * 2.0 ** (0.5 * d * field.J)


# --------------------------------------------------------------------------
# leaders


@dataclass
class LeaderField:
    """Per-cube wavelet leaders up to depth J on the periodic torus.

    levels[j] holds the leader of every level-j cube. domain_multiplier
    records over how many unit cells the defining sums run; periodicity
    makes every cell identical, so sums are taken once per cell and scaled.
    """

    d: int
    J: int
    levels: tuple[np.ndarray, ...]
    domain_multiplier: int = 1

    def __post_init__(self) -> None:
        if self.d not in (1, 2):
            raise ValueError(f"d must be 1 or 2, got {self.d}")
        if self.J < 1 or len(self.levels) != self.J:
            raise ValueError(
                f"need {self.J} leader levels, got {len(self.levels)}")
        if self.domain_multiplier < 1:
            raise ValueError("domain multiplier must be a positive integer")
        fixed = []
        for j, arr in enumerate(self.levels):
            arr = np.asarray(arr, dtype=float)
            want = (1 << j,) * self.d
            if arr.shape != want:
                raise ValueError(
                    f"level {j} must have shape {want}, got {arr.shape}")
            if np.any(arr < 0.0):
                raise ValueError(f"leaders must be nonnegative at level {j}")
            fixed.append(arr)
        self.levels = tuple(fixed)

    def level(self, j: int) -> np.ndarray:
        if not 0 <= j < self.J:
            raise ValueError(f"level {j} outside [0, {self.J})")
        return self.levels[j]


def _children_max(arr: np.ndarray, d: int) -> np.ndarray:
    n = arr.shape[0] // 2
    if d == 1:
        return arr.reshape(n, 2).max(axis=1)
    return arr.reshape(n, 2, n, 2).max(axis=(1, 3))


def _neighborhood_max(arr: np.ndarray, d: int) -> np.ndarray:
    out = arr.copy()
    if d == 1:
        np.maximum(out, np.roll(arr, 1), out=out)
        np.maximum(out, np.roll(arr, -1), out=out)
        return out
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            if dx == 0 and dy == 0:
                continue
            np.maximum(out, np.roll(arr, (dx, dy), axis=(0, 1)), out=out)
    return out


def leaders(field: WaveletField, domain_multiplier: int = 1) -> LeaderField:
    """Leader of each cube: the largest |c| over all orientations and all
    cubes of equal or finer level inside the tripled cube, periodically.

    A single bottom-up sweep computes subtree suprema, then a periodic
    3^d neighborhood maximum turns them into leaders, which matches the
    brute-force definition exactly.
    """
    d, J = field.d, field.J
    subtree: list[np.ndarray] = [None] * J
    for j in range(J - 1, -1, -1):
        own = np.abs(field.details[j]).max(axis=0)
        if j + 1 < J:
            own = np.maximum(own, _children_max(subtree[j + 1], d))
        subtree[j] = own
    out = tuple(_neighborhood_max(sv, d) for sv in subtree)
    return LeaderField(d=d, J=J, levels=out,
                       domain_multiplier=domain_multiplier)


# --------------------------------------------------------------------------
# structure functions and exponent estimates


def _log2_moment(logs: np.ndarray, t: float) -> float:
    a = t * logs
    m = float(a.max())
    return m + math.log2(float(np.exp2(a - m).sum()))


def _level_log_sums(lf: LeaderField, t_grid: np.ndarray,
                    j_lo: int, j_hi: int):
    """log2 of the leader moment sums per usable level, plus the levels
    that had to be dropped because every leader vanished there."""
    shift = lf.d * math.log2(lf.domain_multiplier)
    used: list[int] = []
    rows: list[np.ndarray] = []
    empty: list[int] = []
    for j in range(j_lo, j_hi + 1):
        vals = lf.levels[j].ravel()
        pos = vals[vals > 0.0]
        if pos.size == 0:
            empty.append(j)
            continue
        logs = np.log2(pos)
        rows.append(np.array([_log2_moment(logs, t) + shift
                              for t in t_grid]))
        used.append(j)
    return used, rows, empty


def _validated_t_grid(t_grid) -> np.ndarray:
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("t grid must be a non-empty 1-d sequence")
    if np.any(np.diff(t) <= 0):
        raise ValueError("t grid must be strictly increasing")
    return t


def structure_function(lf: LeaderField, t_grid: Sequence[float],
                       j: int) -> SpectrumCurve:
    """Single-level scaling curve t -> -(1/j) log2 of the leader moment sum.

    Sums run over cubes with a positive leader; the domain multiplier
    contributes d log2(N) to the log of the sum.
    """
    t = _validated_t_grid(t_grid)
    if not 1 <= j < lf.J:
        raise ValueError(f"level must lie in [1, {lf.J}), got {j}")
    used, rows, _ = _level_log_sums(lf, t, j, j)
    if not used:
        raise ValueError(f"all leaders vanish at level {j}")
    vals = -rows[0] / j
    return SpectrumCurve(tuple(float(x) for x in t),
                         tuple(float(v) for v in vals),
                         kind=EXPONENT, d=lf.d)


@dataclass(frozen=True)
class ZetaFitDiagnostics:
    """Per-moment quality report for a scaling-exponent regression."""

    levels_used: tuple[int, ...]
    levels_empty: tuple[int, ...]
    r_squared: tuple[float, ...]
    log_drift: tuple[float, ...] | None = None


def zeta_f_estimate(lf: LeaderField, t_grid: Sequence[float],
                    j_range: tuple[int, int] | None = None,
                    weights: Sequence[float] | None = None,
                    detrend_log: bool = False,
                    return_diagnostics: bool = False):
    """Scaling function estimate: per-moment slope of the log moment sums
    against minus the level, by weighted least squares over j_range.

    j_range defaults to [J/2, J - 2], the window where both discretisation
    and depth truncation stay mild. Levels whose leaders all vanish are
    excluded and reported in the diagnostics. detrend_log adds a -log2(j)
    regressor for fields whose moment sums carry a logarithmic drift on
    top of the geometric decay; the fitted drift is then reported.
    """
    t = _validated_t_grid(t_grid)
    if j_range is None:
        j_range = (max(1, lf.J // 2), max(1, lf.J - 2))
    j_lo, j_hi = int(j_range[0]), int(j_range[1])
    if not 1 <= j_lo <= j_hi < lf.J:
        raise ValueError(f"j range must satisfy 1 <= lo <= hi < {lf.J}, "
                         f"got ({j_lo}, {j_hi})")
    w_all = np.ones(j_hi - j_lo + 1) if weights is None else \
        np.asarray(weights, dtype=float)
    if w_all.shape != (j_hi - j_lo + 1,) or np.any(w_all <= 0):
        raise ValueError("weights must be positive, one per level in range")

    used, rows, empty = _level_log_sums(lf, t, j_lo, j_hi)
    n_par = 3 if detrend_log else 2
    if len(used) < n_par:
        raise ValueError(
            f"only {len(used)} usable levels in [{j_lo}, {j_hi}], "
            f"need {n_par}")
    y = np.stack(rows)                       # (levels, moments)
    js = np.array(used, dtype=float)
    w = w_all[[j - j_lo for j in used]]
    cols = [-js, np.ones_like(js)]
    if detrend_log:
        cols.append(-np.log2(js))
    X = np.stack(cols, axis=1)
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(X * sw[:, None], y * sw[:, None], rcond=None)
    vals = coef[0]
    if not np.all(np.isfinite(vals)):
        raise ValueError("regression produced non-finite exponents")
    curve = SpectrumCurve(tuple(float(x) for x in t),
                          tuple(float(v) for v in vals),
                          kind=EXPONENT, d=lf.d)
    if not return_diagnostics:
        return curve
    resid = y - X @ coef
    ss_res = (w[:, None] * resid ** 2).sum(axis=0)
    mean = (w[:, None] * y).sum(axis=0) / w.sum()
    ss_tot = (w[:, None] * (y - mean) ** 2).sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = np.where(ss_tot > 0, 1.0 - ss_res / ss_tot, 1.0)
    diag = ZetaFitDiagnostics(
        levels_used=tuple(used), levels_empty=tuple(empty),
        r_squared=tuple(float(v) for v in r2),
        log_drift=tuple(float(v) for v in coef[2]) if detrend_log else None)
    return curve, diag


def leaders_spectrum(lf: LeaderField, t_grid: Sequence[float],
                     H_grid: Sequence[float],
                     j_range: tuple[int, int] | None = None,
                     weights: Sequence[float] | None = None,
                     detrend_log: bool = False) -> SpectrumCurve:
    """Concave conjugate of the scaling-function estimate on H_grid."""
    est = zeta_f_estimate(lf, t_grid, j_range=j_range, weights=weights,
                          detrend_log=detrend_log)
    return legendre(est, np.asarray(H_grid, dtype=float))


# --------------------------------------------------------------------------
# mass-weighted coefficient norms


def _level_logmass_grid(env, j: int) -> np.ndarray:
    """log2 masses of every level-j cube under the ambient measure."""
    s = float(env.power)
    eps = float(env.tilt)
    d = int(env.d)
    f = env.factor_logmass_levels(j)[j]
    if d == 1:
        lm = f
    else:
        lm = f[:, None] + f[None, :]
    tilt = eps * (0.5 * math.log2(d) - j)
    return s * lm + tilt


def besov_seminorm(field: WaveletField, env, p: float,
                   q: float) -> tuple[float, np.ndarray]:
    """Mass-weighted coefficient seminorm and its per-level profile.

    Per level j the coefficients of all orientations are divided by the
    ambient mass of their cube and collected in an l^p norm eps_j; the
    value is the l^q norm of (eps_j) over the detail levels. p and q may
    be inf, handled structurally as maxima. The scaling block is not a
    detail and does not enter.
    """
    if not (p >= 1.0 and q >= 1.0):
        raise ValueError(f"p and q must be >= 1, got p={p}, q={q}")
    if int(env.d) != field.d:
        raise ValueError(
            f"environment dimension {env.d} does not match field {field.d}")
    eps = np.zeros(field.J)
    for j in range(field.J):
        block = np.abs(field.details[j])
        if not block.any():
            continue
        mass = np.exp2(_level_logmass_grid(env, j))
        ratios = (block / mass[None, ...]).ravel()
        eps[j] = _lp_norm(ratios, p)
    value = _lp_norm(eps, q)
    return value, eps


def _lp_norm(vals: np.ndarray, p: float) -> float:
    """l^p norm, factored through the maximum so that scaling the input
    by a power of two scales the output by exactly that power."""
    mx = float(np.abs(vals).max()) if vals.size else 0.0
    if mx == 0.0 or math.isinf(p):
        return mx
    scaled = np.abs(vals) / mx
    return mx * float(np.sum(scaled ** p) ** (1.0 / p))


# --------------------------------------------------------------------------
# pointwise exponents


@dataclass(frozen=True)
class PointwiseExponentFit:
    """Slope of log2 leaders along the cube ray through one point."""

    estimate: float
    intercept: float
    residual_l2: float
    j_lo: int
    j_hi: int
    levels_used: tuple[int, ...]
    plateau: bool

    @property
    def levels(self) -> int:
        return len(self.levels_used)


def pointwise_exponent_estimate(lf: LeaderField, x,
                                j_range: tuple[int, int] | None = None
                                ) -> PointwiseExponentFit:
    """Regression exponent of the leaders of the cubes containing x.

    Levels with a vanishing leader are skipped. plateau is set when the
    finest three usable leaders agree to float precision, the signature
    of an isolated coefficient whose leader has stopped decaying; the
    slope is then biased toward zero and should not be read as smooth.
    """
    coords = np.atleast_1d(np.asarray(x, dtype=float))
    if coords.shape != (lf.d,):
        raise ValueError(f"point must have {lf.d} coordinates")
    if j_range is None:
        j_range = (1, lf.J - 1)
    j_lo, j_hi = int(j_range[0]), int(j_range[1])
    if not 1 <= j_lo < j_hi < lf.J:
        raise ValueError(f"j range must satisfy 1 <= lo < hi < {lf.J}, "
                         f"got ({j_lo}, {j_hi})")
    used: list[int] = []
    logs: list[float] = []
    for j in range(j_lo, j_hi + 1):
        k = tuple(int(math.floor(c * (1 << j))) % (1 << j) for c in coords)
        v = float(lf.levels[j][k])
        if v > 0.0:
            used.append(j)
            logs.append(math.log2(v))
    if len(used) < 2:
        raise ValueError("fewer than two levels carry a positive leader "
                         "along this ray")
    js = np.array(used, dtype=float)
    ys = np.array(logs)
    X = np.stack([-js, np.ones_like(js)], axis=1)
    coef, *_ = np.linalg.lstsq(X, ys, rcond=None)
    resid = float(np.linalg.norm(ys - X @ coef))
    tail = ys[-3:]
    plateau = tail.size == 3 and float(np.ptp(tail)) <= 1e-9 * max(
        1.0, float(np.abs(tail).max()))
    return PointwiseExponentFit(
        estimate=float(coef[0]), intercept=float(coef[1]),
        residual_l2=resid, j_lo=j_lo, j_hi=j_hi,
        levels_used=tuple(used), plateau=plateau)
