"""Finite-depth multifractal analysis of measures and environments.

Limit objects (liminf exponents, asymptotic spectra) are replaced by fixed-
generation evaluations plus cross-generation trend reports; nothing here
extrapolates. Partition sums run in log2 space with a streaming max/sum
merge, so moment orders far outside [0, 1] never overflow.

Dimension handling leans on the tensor structure: a d-dimensional product
measure has partition sums that factorize exactly, so ambient quantities are
computed from the one-dimensional factor arrays whenever possible and only
materialize the 2^{jd} cube grid when a histogram genuinely needs it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .convex import EXPONENT, NEGINF, SPECTRUM, SpectrumCurve
from .dyadic import locate

_CHUNK = 1 << 20
_EXHAUSTIVE_CUBES = 1 << 24
_SAMPLE_RAYS = 1 << 16


def _env_split(m) -> tuple[float, float, int]:
    return float(m.power), float(m.tilt), int(m.d)


def level_logmass(m, j: int) -> np.ndarray:
    """Ambient log2 masses of all generation-j cubes (d = 1 only)."""
    if m.d != 1:
        raise ValueError("full per-cube arrays exist only for d = 1; "
                         "use the factor arrays for tensor measures")
    s, eps, _ = _env_split(m)
    lm = m.factor_logmass_levels(j)[j]
    if s == 1.0 and eps == 0.0:
        return lm
    return s * lm + eps * (-float(j))


def _stream_log2_moment(values: np.ndarray, t: float) -> float:
    """log2 of sum over entries v of 2^(t*v), streamed in chunks."""
    mx_run = -np.inf
    acc = 0.0
    buf = None
    for start in range(0, values.size, _CHUNK):
        a = t * values[start:start + _CHUNK]
        mx = float(a.max())
        if buf is None or buf.size != a.size:
            buf = np.empty_like(a)
        np.subtract(a, mx, out=buf)
        np.exp2(buf, out=buf)
        s = float(buf.sum())
        if mx > mx_run:
            acc = acc * 2.0 ** (mx_run - mx) + s
            mx_run = mx
        else:
            acc += s * 2.0 ** (mx - mx_run)
    return mx_run + math.log2(acc)


def empirical_tau(m, t_grid, j: int) -> SpectrumCurve:
    """Scaling function -(1/j) log2 sum over generation-j cubes of mass^t.

    Tensor factorization makes the d-dimensional sum d times the factor's
    log-sum, and powers fold into the moment order (the partition sum of
    mass^s at t is the base sum at s*t), so the identity tau_{m^s}(t) =
    tau_m(s t) holds to the last float.
    """
    t = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if t.ndim != 1 or np.any(np.diff(t) <= 0):
        raise ValueError("moment grid must be strictly increasing")
    if j < 1:
        raise ValueError(f"generation must be >= 1, got {j}")
    s, eps, d = _env_split(m)
    lm = m.factor_logmass_levels(j)[j]
    vals = np.empty_like(t)
    for i, ti in enumerate(t):
        log_s1 = _stream_log2_moment(lm, s * ti)
        tau = -d * log_s1 / j
        if eps != 0.0:
            # tilt contributes t*eps*(0.5 log2 d - j) to every log mass
            tau += ti * eps * (1.0 - math.log2(d) / (2.0 * j))
        vals[i] = tau
    return SpectrumCurve(tuple(float(x) for x in t), tuple(float(v) for v in vals),
                         kind=EXPONENT, d=d)


def _ambient_exponents(m, j: int, seed: int) -> tuple[np.ndarray, float]:
    """Per-cube exponents log2 mass / -j, exhaustive or sampled rays.

    Returns (exponents, count_scale): each returned exponent stands for
    count_scale cubes (1 when exhaustive).
    """
    s, eps, d = _env_split(m)
    lm1 = m.factor_logmass_levels(j)[j]
    tilt = eps * (0.5 * math.log2(d) - j)
    if d == 1:
        amb = s * lm1 + tilt
        return amb / -j, 1.0
    if (1 << (j * d)) <= _EXHAUSTIVE_CUBES and d == 2:
        amb = s * (lm1[:, None] + lm1[None, :]).ravel() + tilt
        return amb / -j, 1.0
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, 1 << j, size=(_SAMPLE_RAYS, d))
    amb = s * lm1[idx].sum(axis=1) + tilt
    return amb / -j, 2.0 ** (j * d) / _SAMPLE_RAYS


def large_deviation_spectrum(m, j: int, bin_width: float = 0.02,
                             seed: int = 0) -> SpectrumCurve:
    """Histogram spectrum: per exponent bin, log2(cube count) / j.

    Bins are aligned to multiples of bin_width; empty interior bins are
    legitimate (palette granularity) and come back as NEGINF, so the curve
    carries the histogram flag.
    """
    if j < 1:
        raise ValueError(f"generation must be >= 1, got {j}")
    alphas, scale = _ambient_exponents(m, j, seed)
    idx = np.floor(alphas / bin_width).astype(np.int64)
    lo, hi = int(idx.min()), int(idx.max())
    counts = np.bincount(idx - lo, minlength=hi - lo + 1).astype(float)
    counts *= scale
    args = (np.arange(lo, hi + 1) + 0.5) * bin_width
    vals = tuple(
        float(np.log2(c) / j) if c > 0 else NEGINF for c in counts)
    return SpectrumCurve(tuple(float(a) for a in args), vals,
                         kind=SPECTRUM, d=m.d, histogram=True)


@dataclass(frozen=True)
class LocalExponentFit:
    """Least-squares local exponent with its regression diagnostics."""

    estimate: float
    intercept: float
    residual_l2: float
    j_lo: int
    j_hi: int

    @property
    def levels(self) -> int:
        return self.j_hi - self.j_lo + 1


def local_exponent(m, x, j_range: tuple[int, int]) -> LocalExponentFit:
    """Slope of log2 mass(cube_j(x)) against -j over the given generations."""
    j_lo, j_hi = int(j_range[0]), int(j_range[1])
    if not 1 <= j_lo <= j_hi:
        raise ValueError(f"bad generation range {j_range}")
    js = np.arange(j_lo, j_hi + 1)
    y = np.array([m.logmass2(locate(x, int(j))) for j in js])
    X = np.stack([-js.astype(float), np.ones_like(js, dtype=float)], axis=1)
    coef, res, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = float(np.sqrt(res[0])) if res.size else 0.0
    return LocalExponentFit(estimate=float(coef[0]), intercept=float(coef[1]),
                            residual_l2=resid, j_lo=j_lo, j_hi=j_hi)


def batch_local_exponents(m, batch, j_range: tuple[int, int]) -> np.ndarray:
    """Local-exponent estimates for every point of a sampler batch at once.

    Equivalent to local_exponent along batch.level_index, but vectorized:
    one least-squares solve against the shared design matrix.
    """
    j_lo, j_hi = int(j_range[0]), int(j_range[1])
    if j_hi > batch.depth:
        raise ValueError(f"range {j_range} exceeds batch depth {batch.depth}")
    s, eps, d = _env_split(m)
    js = np.arange(j_lo, j_hi + 1)
    rows = []
    for j in js:
        lm1 = m.factor_logmass_levels(int(j))[int(j)]
        ks = batch.level_index[int(j)]
        amb = s * lm1[ks].sum(axis=1) + eps * (0.5 * math.log2(d) - j)
        rows.append(amb)
    Y = np.stack(rows, axis=0)
    X = np.stack([-js.astype(float), np.ones_like(js, dtype=float)], axis=1)
    coef, *_ = np.linalg.lstsq(X, Y, rcond=None)
    return coef[0]


def _boundary_trend_ok(schedule, depth: int, series) -> bool:
    """Whether series(gamma)/gamma is non-increasing within block regimes.

    A block-width change swaps the digit palette and legitimately resets the
    concentration constant, so consecutive boundaries are only compared when
    their blocks have equal width.
    """
    boundaries = []  # (gamma, block width) pairs
    j = 0
    for N in schedule.letters(depth):
        j += N
        if j <= depth:
            boundaries.append((j, N))
    ok = True
    for (ga, na), (gb, nb) in zip(boundaries, boundaries[1:]):
        if na == nb and ga >= 2:
            ok &= series[gb - 1] / gb <= series[ga - 1] / ga + 1e-12
    return ok


@dataclass(frozen=True)
class AlmostDoublingReport:
    """Measured 3-cube concentration per generation.

    phi_excess[j-1] is the natural-log excess of the worst ratio
    mass(3 lambda) / mass(lambda) over the exact-volume factor 3^d, clamped
    at 0, so exactly doubling measures (Lebesgue) report identically zero.
    The paper-form exponent for raw ratios is phi_excess + d ln 3.
    """

    depth: int
    phi_excess: tuple[float, ...]
    max_raw_ratio: tuple[float, ...]
    boundary_trend_ok: bool
    worst: tuple[int, int]  # (generation, coordinate index of worst cube)

    def phi(self, j: int) -> float:
        return self.phi_excess[j - 1]


def _neighbor3_logmass(lm: np.ndarray) -> np.ndarray:
    m_lin = 2.0 ** lm
    m3 = m_lin + np.roll(m_lin, 1) + np.roll(m_lin, -1)
    return np.log2(m3)


def check_almost_doubling(m, depth: int) -> AlmostDoublingReport:
    """Scan mass(3 lambda)/mass(lambda) across generations 1..depth (d = 1)."""
    if m.d != 1:
        raise ValueError("doubling scan implemented for d = 1 factors")
    phis, raws = [], []
    worst = (1, 0)
    worst_val = -np.inf
    for j in range(1, depth + 1):
        lm = level_logmass(m, j)
        ratio_log2 = _neighbor3_logmass(lm) - lm
        k = int(np.argmax(ratio_log2))
        raw = float(ratio_log2[k]) * math.log(2.0)
        excess = raw - m.d * math.log(3.0)
        # sub-1e-12 excess is float noise from the log round trip; snap it
        # so exactly doubling measures report identically zero
        phis.append(excess if excess > 1e-12 else 0.0)
        raws.append(math.exp(raw))
        if raw > worst_val:
            worst_val, worst = raw, (j, k)
    trend_ok = _boundary_trend_ok(m.schedule, depth, phis)
    return AlmostDoublingReport(depth=depth, phi_excess=tuple(phis),
                                max_raw_ratio=tuple(raws),
                                boundary_trend_ok=trend_ok, worst=worst)


@dataclass(frozen=True)
class PropertyPReport:
    """Finite-depth Hoelder sandwich and neighbor-transfer surrogate.

    s1/s2 are fitted slopes of the extreme log-masses against -j; C makes
    the two-sided bound C^-1 2^{-j s2} <= mass <= C 2^{-j s1} hold over the
    tested range. phi_log2[j-1] is the worst neighbor log2-mass gap at
    generation j, the j' = j face of the transfer inequality.
    """

    depth_range: tuple[int, int]
    s1: float
    s2: float
    C: float
    phi_log2: tuple[float, ...]
    order_ok: bool
    phi_trend_ok: bool
    witnesses: dict

    @property
    def ok(self) -> bool:
        return self.order_ok and self.phi_trend_ok


def check_property_P(m, depth: int) -> PropertyPReport:
    """Fit the uniform Hoelder exponents and per-generation transfer slack."""
    s, eps, d = _env_split(m)
    js = np.arange(1, depth + 1)
    lmax, lmin, phis = [], [], []
    wit_hi = wit_lo = (1, 0)
    for j in js:
        lm1 = m.factor_logmass_levels(int(j))[int(j)]
        tilt = eps * (0.5 * math.log2(d) - j)
        # products of per-coordinate extremes are the ambient extremes
        lmax.append(d * s * float(lm1.max()) + tilt)
        lmin.append(d * s * float(lm1.min()) + tilt)
        wit_hi = (int(j), int(np.argmax(lm1)))
        wit_lo = (int(j), int(np.argmin(lm1)))
        gaps = np.abs(np.diff(lm1))
        wrap = abs(float(lm1[0] - lm1[-1]))
        # worst boundary-sharing pair can differ in every coordinate
        phis.append(d * s * max(float(gaps.max()) if gaps.size else 0.0, wrap))
    lmax = np.array(lmax)
    lmin = np.array(lmin)
    X = np.stack([-js.astype(float), np.ones_like(js, dtype=float)], axis=1)
    s1 = float(np.linalg.lstsq(X, lmax, rcond=None)[0][0])
    s2 = float(np.linalg.lstsq(X, lmin, rcond=None)[0][0])
    c1 = float(np.max(lmax + js * s1))
    c2 = float(np.max(-js * s2 - lmin))
    C = 2.0 ** max(c1, c2, 0.0)
    trend_ok = _boundary_trend_ok(m.schedule, depth, phis)
    return PropertyPReport(
        depth_range=(1, depth), s1=s1, s2=s2, C=C, phi_log2=tuple(phis),
        order_ok=s1 <= s2 + 1e-12, phi_trend_ok=trend_ok,
        witnesses={"heaviest": wit_hi, "lightest": wit_lo})
