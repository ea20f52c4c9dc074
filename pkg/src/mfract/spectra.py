"""Function-side scaling profiles and the two inverse spectrum solvers.

A measure-side scaling function tau induces, for each integrability
exponent p, a function-side profile zeta: below the critical moment the
profile is a reweighted tau through a Moebius change of argument, above it
the profile is exactly linear. Everything in this module is finite
piecewise-linear algebra: conjugates are minima over knots, each tau
segment maps to one zeta segment, and both inverse solvers (the global
scale fixing the critical embedding, and the exhaustion reparametrization)
act on knot lists directly, so cross-checks against generic Legendre
transforms run at float accuracy rather than grid accuracy.

The exponent p = infinity is the ordinary float inf tag; it switches the
formulas structurally (zeta collapses onto tau, the pairing map collapses
onto the identity) and is never approximated by a large finite value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .convex import EXPONENT, NEGINF, SPECTRUM, SpectrumCurve, validate_admissible
from .measures import PrescribedSpectrum

_ARG_CLAMP = 1e6
_EDGE_TOL = 1e-12
_SLOPE_TOL = 1e-8
_BISECT_TOL = 1e-10


class ZetaProfile:
    """A sampled concave scaling function paired with an exponent p >= 1.

    Derived constants come from the sample grid: alpha_min/alpha_max are the
    rightmost/leftmost secant slopes, the conjugate is evaluated exactly as
    a minimum over knots, and alpha_p is the leftmost conjugate argument
    whose subdifferential contains -p.
    """

    def __init__(self, tau: SpectrumCurve, p: float):
        if tau.kind != EXPONENT:
            raise ValueError("profile needs an exponent-side curve")
        if tau.n_finite != len(tau.values):
            raise ValueError("scaling function samples must all be finite")
        if len(tau.arguments) < 2:
            raise ValueError("need at least 2 samples to derive slopes")
        if not (p >= 1.0):
            raise ValueError(f"exponent must be >= 1 or inf, got {p}")
        t = np.asarray(tau.arguments, dtype=float)
        y = np.asarray(tau.values, dtype=float)
        slopes = np.diff(y) / np.diff(t)
        scale = max(1.0, float(np.max(np.abs(y))))
        if np.any(np.diff(slopes) > 1e-9 * scale):
            raise ValueError("scaling function samples are not concave")
        self.tau = tau
        self.p = float(p)
        self._t = t
        self._y = y
        self._slopes = slopes
        self.alpha_min = float(slopes[-1])
        self.alpha_max = float(slopes[0])

    @property
    def d(self) -> int:
        return self.tau.d

    def tau_ext(self, u) -> np.ndarray:
        """Sampled tau, extended linearly at the boundary slopes."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        t, y = self._t, self._y
        out = np.interp(u, t, y)
        lo = u < t[0]
        hi = u > t[-1]
        out[lo] = y[0] + self.alpha_max * (u[lo] - t[0])
        out[hi] = y[-1] + self.alpha_min * (u[hi] - t[-1])
        return out

    def tau_star(self, alpha) -> np.ndarray:
        """Concave conjugate of the samples; exact for piecewise-linear tau."""
        alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
        return (alpha[:, None] * self._t[None, :] - self._y[None, :]).min(axis=1)

    def _vertices(self) -> list[tuple[float, float, float]]:
        """Conjugate kinks as (alpha, t_left, t_right), merging equal slopes."""
        t, s = self._t, self._slopes
        scale = max(1.0, float(np.max(np.abs(s))))
        verts = []
        k = 0
        while k < s.size:
            m = k
            while m + 1 < s.size and abs(s[m + 1] - s[k]) <= 1e-12 * scale:
                m += 1
            verts.append((float(s[k]), float(t[k]), float(t[m + 1])))
            k = m + 1
        return verts

    @cached_property
    def alpha_p(self) -> float:
        if math.isinf(self.p):
            return self.alpha_max
        q = -self.p
        if q <= self._t[0]:
            return self.alpha_max
        if q >= self._t[-1]:
            return self.alpha_min
        for alpha, tl, tr in sorted(self._vertices()):
            if tl - _SLOPE_TOL <= q <= tr + _SLOPE_TOL:
                return alpha
        return self.alpha_max

    def theta(self, alpha) -> np.ndarray:
        """Exponent pairing alpha + tau*(alpha)/p; the identity at p = inf."""
        alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
        if math.isinf(self.p):
            return alpha.copy()
        return alpha + self.tau_star(alpha) / self.p

    def theta_inverse(self, H: float) -> float:
        """Bisection inverse on the increasing branch [alpha_min, alpha_p]."""
        lo, hi = self.alpha_min, self.alpha_p
        if not self.theta(lo)[0] - _EDGE_TOL <= H <= self.theta(hi)[0] + _EDGE_TOL:
            raise ValueError(f"{H} outside the increasing pairing branch")
        while hi - lo > _BISECT_TOL:
            mid = 0.5 * (lo + hi)
            if self.theta(mid)[0] <= H:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def zeta(self, t_grid) -> np.ndarray:
        """Profile values; linear with slope alpha_min from the exponent on.

        The mapped argument p t / (p - t) blows up as t approaches the
        exponent from below; once it passes the clamp the formula has
        already linearized, so those t fall through to the linear branch
        (which keeps the junction continuous).
        """
        t = np.atleast_1d(np.asarray(t_grid, dtype=float))
        p = self.p
        if math.isinf(p):
            return self.tau_ext(t)
        out = np.empty_like(t)
        with np.errstate(divide="ignore", over="ignore"):
            u = p * t / (p - t)
        high = (t >= p) | (u > _ARG_CLAMP * p)
        out[high] = self.alpha_min * t[high]
        tl = t[~high]
        out[~high] = (p - tl) / p * self.tau_ext(u[~high])
        return out

    def zeta_curve(self, t_grid) -> SpectrumCurve:
        t = np.atleast_1d(np.asarray(t_grid, dtype=float))
        return SpectrumCurve(tuple(float(x) for x in t),
                             tuple(float(v) for v in self.zeta(t)),
                             kind=EXPONENT, d=self.d)

    def describe(self) -> dict:
        th = self.theta(np.array([self.alpha_min, self.alpha_p]))
        return {
            "p": self.p,
            "alpha_min": self.alpha_min,
            "alpha_max": self.alpha_max,
            "alpha_p": self.alpha_p,
            "theta_at_alpha_min": float(th[0]),
            "theta_at_alpha_p": float(th[1]),
        }


def zeta_mu_p(profile: ZetaProfile, t) -> float | np.ndarray:
    vals = profile.zeta(t)
    return float(vals[0]) if np.isscalar(t) else vals


def theta_p(profile: ZetaProfile, alpha) -> float | np.ndarray:
    vals = profile.theta(alpha)
    return float(vals[0]) if np.isscalar(alpha) else vals


def alpha_p(profile: ZetaProfile) -> float:
    return profile.alpha_p


def zeta_star_closed_form(profile: ZetaProfile, H: float):
    """Conjugate of the profile without forming the profile.

    Three branches: a line of slope p out of (alpha_min, 0), then the tau
    conjugate carried through the inverse pairing map, then nothing. The
    middle branch inverts theta by bisection on its increasing stretch.
    """
    am = profile.alpha_min
    th0 = float(profile.theta(am)[0])
    ap = profile.alpha_p
    th1 = float(profile.theta(ap)[0])
    if H < am - _EDGE_TOL or H > th1 + _EDGE_TOL:
        return NEGINF
    H = min(max(H, am), th1)
    if math.isinf(profile.p):
        return float(profile.tau_star(H)[0])
    if H < th0:
        return float(profile.p * (H - am))
    a = profile.theta_inverse(H)
    return float(profile.tau_star(a)[0])


def typical_spectrum(profile: ZetaProfile, n: int = 401) -> SpectrumCurve:
    """The closed-form conjugate sampled over its support."""
    am = profile.alpha_min
    th0 = float(profile.theta(am)[0])
    ap = profile.alpha_p
    th1 = float(profile.theta(ap)[0])
    knots = [am, th0, th1]
    for alpha, _, _ in profile._vertices():
        if am - _EDGE_TOL <= alpha <= ap + _EDGE_TOL:
            th = float(profile.theta(alpha)[0])
            if am <= th <= th1:
                knots.append(th)
    raw = np.unique(np.concatenate([np.linspace(am, th1, n), np.array(knots)]))
    keep = np.concatenate([[True], np.diff(raw) > 1e-9])
    grid = raw[keep]
    vals = tuple(zeta_star_closed_form(profile, float(h)) for h in grid)
    return SpectrumCurve(tuple(float(h) for h in grid), vals,
                         kind=SPECTRUM, d=profile.d)


def frisch_parisi_scale(sigma: PrescribedSpectrum, d: int = 1
                        ) -> tuple[float, PrescribedSpectrum]:
    """Global scale s with conjugate root zero, and the rescaled spectrum.

    The conjugate s -> min over knots of (s alpha - sigma(alpha)) is
    strictly increasing (all knot arguments are positive for admissible
    input), so the root is unique and bracketed bisection converges; the
    returned spectrum has knots (s alpha, sigma(alpha)) and touches the
    diagonal at the conjugate minimizer.
    """
    rep = validate_admissible(sigma.curve(d=d), d=d, class_tag="S_d")
    if not rep.ok:
        raise ValueError("input spectrum not admissible:\n" + rep.summary())
    a = np.array([k[0] for k in sigma.knots])
    y = np.array([k[1] for k in sigma.knots])

    def conj(s: float) -> float:
        return float(np.min(s * a - y))

    lo, hi = 0.0, 1.0
    for _ in range(200):
        if conj(hi) >= 0.0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise ValueError("conjugate root not bracketed")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if conj(mid) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * max(1.0, hi):
            break
    s = 0.5 * (lo + hi)
    if abs(s - 1.0) <= 1e-12:
        s = 1.0
    scaled = sigma if s == 1.0 else PrescribedSpectrum(
        tuple((s * ai, yi) for ai, yi in sigma.knots))
    rep_m = validate_admissible(scaled.curve(d=d), d=d, class_tag="S_dM")
    if not rep_m.ok:
        raise ValueError("rescaled spectrum failed validation:\n"
                         + rep_m.summary())
    return s, scaled


@dataclass(frozen=True)
class ExhaustionReport:
    """Which case of the exhaustion reparametrization fired, and why."""

    ok: bool
    case: str
    reasons: tuple[str, ...]
    collapse_end: float | None
    knots_kept: int

    def summary(self) -> str:
        head = f"exhaustion [{self.case}] kept {self.knots_kept} knots"
        return head if self.ok else head + "; " + "; ".join(self.reasons)


def exhaustion_map(sigma: PrescribedSpectrum, p: float, d: int = 1
                   ) -> tuple[PrescribedSpectrum | None, ExhaustionReport]:
    """Reparametrize a spectrum by H -> H - sigma(H)/p.

    Needs sigma to vanish at its left endpoint with initial slope at most p.
    When the initial slope equals p the map is constant on the maximal
    initial segment lying exactly on that line, which collapses to a single
    point; past the segment the map is strictly increasing and each knot
    (H, y) moves to (H - y/p, y).
    """
    if not (np.isfinite(p) and p >= 1.0):
        raise ValueError(f"need a finite exponent >= 1, got {p}")
    a = [float(k[0]) for k in sigma.knots]
    y = [float(k[1]) for k in sigma.knots]
    reasons = []
    scale = max(1.0, max(abs(v) for v in y))
    if len(a) >= 2:
        slopes = [(y[i + 1] - y[i]) / (a[i + 1] - a[i]) for i in range(len(a) - 1)]
        if any(s2 > s1 + 1e-9 * scale for s1, s2 in zip(slopes, slopes[1:])):
            reasons.append("sigma is not concave")
    else:
        slopes = []
    if abs(y[0]) > 1e-12:
        reasons.append(f"sigma({a[0]}) = {y[0]}, expected 0")
    if slopes and slopes[0] > p + 1e-12:
        reasons.append(f"initial slope {slopes[0]:.6g} exceeds {p}")
    if reasons:
        return None, ExhaustionReport(ok=False, case="precondition-failed",
                                      reasons=tuple(reasons),
                                      collapse_end=None, knots_kept=0)
    if len(a) == 1:
        return sigma, ExhaustionReport(ok=True, case="degenerate-point",
                                       reasons=(), collapse_end=a[0],
                                       knots_kept=1)
    # maximal initial run of knots lying exactly on the slope-p line
    k_end = 0
    for i in range(1, len(a)):
        if abs(y[i] - p * (a[i] - a[0])) <= 1e-9 * scale:
            k_end = i
        else:
            break
    if k_end == len(a) - 1:
        out = PrescribedSpectrum.point(a[0], height=y[-1])
        return out, ExhaustionReport(ok=True, case="degenerate-point",
                                     reasons=(), collapse_end=a[-1],
                                     knots_kept=1)
    if k_end > 0:
        knots = [(a[0], y[k_end])]
        knots += [(a[i] - y[i] / p, y[i]) for i in range(k_end + 1, len(a))]
        case, end = "collapsed-initial-segment", a[k_end]
    else:
        knots = [(a[i] - y[i] / p, y[i]) for i in range(len(a))]
        case, end = "strictly-increasing", None
    out = PrescribedSpectrum(tuple(knots))
    return out, ExhaustionReport(ok=True, case=case, reasons=(),
                                 collapse_end=end, knots_kept=len(knots))
