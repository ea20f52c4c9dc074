"""Moran measures with a prescribed multifractal spectrum.

The factory turns a concave piecewise-linear target spectrum into per-block
probability vectors, chains the blocks along a generation schedule, and
exposes exact dyadic-cube masses. Environments wrap a measure with a power
and a diameter tilt, giving the larger family of set functions the analysis
and synthesis layers operate on.

Construction outline for one block of width N: scan the spectrum for the
window where sigma >= 1/N + eps_N, lay a near-uniform mesh of spacing about
1/(2N) through the window (legal spacings are strictly between 1/(4N) and
1/N), snap mesh slots onto the spectrum apex and onto any knot that touches
the diagonal, allocate counts R = floor(2^{N(sigma-eps)-1}) per slot, prune
the smallest slots until the non-apex total fits into 2^{N-1}-1, hand the
remainder to the apex slot, and mirror the half palette into a palindrome.
Probabilities are p_i = 2^{-N beta_i} normalized by the palette sum.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from itertools import islice
from typing import Sequence

import numpy as np

from .convex import SPECTRUM, EXPONENT, SpectrumCurve, validate_admissible
from .dyadic import (
    MAX_GENERATION,
    DyadicCube,
    GenerationSchedule,
    homogeneous_schedule,
)

# numeric stand-in for "no cubes at this exponent" during window scans
_OUTSIDE = -1e18

_WINDOW_SAMPLES = 20001


class ConstructionError(ValueError):
    """A prescribed spectrum cannot be realized at the requested block width."""


@dataclass(frozen=True)
class PrescribedSpectrum:
    """Piecewise-linear concave target spectrum given by its knots."""

    knots: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if not self.knots:
            raise ValueError("spectrum needs at least one knot")
        args = [a for a, _ in self.knots]
        if any(b <= a for a, b in zip(args, args[1:])):
            raise ValueError("knot arguments must be strictly increasing")

    @classmethod
    def tent(cls, lo: float, apex: float, hi: float, peak: float = 1.0) -> "PrescribedSpectrum":
        return cls(((lo, 0.0), (apex, peak), (hi, 0.0)))

    @classmethod
    def point(cls, alpha: float, height: float = 1.0) -> "PrescribedSpectrum":
        return cls(((alpha, height),))

    @cached_property
    def _a(self) -> np.ndarray:
        return np.array([k[0] for k in self.knots])

    @cached_property
    def _s(self) -> np.ndarray:
        return np.array([k[1] for k in self.knots])

    @property
    def alpha_min(self) -> float:
        return float(self._a[0])

    @property
    def alpha_max(self) -> float:
        return float(self._a[-1])

    @property
    def apex(self) -> float:
        """Leftmost argument attaining the peak value."""
        return float(self._a[int(np.argmax(self._s))])

    @property
    def peak(self) -> float:
        return float(self._s.max())

    @property
    def is_point(self) -> bool:
        return len(self.knots) == 1

    def sigma(self, x) -> np.ndarray:
        """Values on the support, a large negative guard value outside."""
        x = np.asarray(x, dtype=float)
        out = np.interp(x, self._a, self._s, left=_OUTSIDE, right=_OUTSIDE)
        return np.where((x < self._a[0]) | (x > self._a[-1]), _OUTSIDE, out)

    def conjugate_values(self, t) -> np.ndarray:
        # exact for piecewise-linear input: the inf is attained at a knot
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return (t[:, None] * self._a[None, :] - self._s[None, :]).min(axis=1)

    def conjugate_curve(self, t_grid: Sequence[float], d: int = 1) -> SpectrumCurve:
        t = np.asarray(t_grid, dtype=float)
        return SpectrumCurve(tuple(float(x) for x in t),
                             tuple(float(v) for v in self.conjugate_values(t)),
                             kind=EXPONENT, d=d)

    def curve(self, d: int = 1) -> SpectrumCurve:
        return SpectrumCurve(tuple(float(a) for a, _ in self.knots),
                             tuple(float(s) for _, s in self.knots),
                             kind=SPECTRUM, d=d)

    def diagonal_touch_knots(self) -> list[float]:
        return [float(a) for a, s in self.knots if abs(s - a) < 1e-9]

    def scaled_factor(self, d: int) -> "PrescribedSpectrum":
        """The one-dimensional factor spectrum alpha -> sigma(d*alpha)/d."""
        return PrescribedSpectrum(tuple((a / d, s / d) for a, s in self.knots))


def block_epsilon(N: int, eps_policy: str) -> float:
    """Width-N margin subtracted from sigma when sizing slot counts.

    "literal" uses 2*log2(N)/N, which keeps every non-apex count below
    2^{N-1}/N^2 but starves small widths (the window needs sigma >= 1/N + eps).
    "desk" uses 0, admitting widths from 2 upward; achieved constants are then
    recorded by the builder instead of asserted.
    """
    if eps_policy == "desk":
        return 0.0
    if eps_policy == "literal":
        return 2.0 * math.log2(N) / N
    raise ValueError(f"unknown eps policy {eps_policy!r}")


@dataclass(frozen=True)
class BlockVector:
    """Run-length palette of letter probabilities for one block width.

    betas/counts/probs describe palette slots; the expanded per-letter arrays
    (length 2^N) repeat slot i counts[i] times. probs is authoritative; betas
    are the exponents -log2(p)/N driving samplers and windows.
    """

    N: int
    betas: tuple[float, ...]
    counts: tuple[int, ...]
    probs: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.N < 1:
            raise ValueError(f"block width must be >= 1, got {self.N}")
        if not (len(self.betas) == len(self.counts) == len(self.probs)):
            raise ValueError("palette fields must have equal length")
        if any(c < 1 for c in self.counts):
            raise ValueError("slot counts must be positive integers")
        if sum(self.counts) != 1 << self.N:
            raise ValueError(f"slot counts must sum to 2^{self.N}, got {sum(self.counts)}")
        if any(p <= 0 for p in self.probs):
            raise ValueError("letter probabilities must be strictly positive")
        total = float(np.sum(np.repeat(self.probs, self.counts)))
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"letter probabilities must sum to 1, got {total!r}")

    @classmethod
    def from_palette(cls, N: int, betas, counts, Z: float) -> "BlockVector":
        probs = 2.0 ** (-N * np.asarray(betas, dtype=float)) / Z
        return cls(N=N, betas=tuple(float(b) for b in betas),
                   counts=tuple(int(c) for c in counts),
                   probs=tuple(float(p) for p in probs))

    @classmethod
    def from_probs(cls, probs: Sequence[float]) -> "BlockVector":
        """Homogeneous palette: one slot per letter, betas derived from probs."""
        p = [float(x) for x in probs]
        n = len(p)
        if n < 2 or n & (n - 1):
            raise ValueError(f"need a power-of-two letter count >= 2, got {n}")
        N = n.bit_length() - 1
        if any(x <= 0 for x in p):
            raise ValueError("probabilities must be strictly positive")
        betas = tuple(-math.log2(x) / N for x in p)
        return cls(N=N, betas=betas, counts=(1,) * n, probs=tuple(p))

    @cached_property
    def letter_probs(self) -> np.ndarray:
        return np.repeat(np.asarray(self.probs, dtype=float), self.counts)

    @cached_property
    def letter_betas(self) -> np.ndarray:
        return np.repeat(np.asarray(self.betas, dtype=float), self.counts)

    @cached_property
    def letter_log2(self) -> np.ndarray:
        return np.log2(self.letter_probs)

    @cached_property
    def cumulative_probs(self) -> np.ndarray:
        return np.cumsum(self.letter_probs)

    @cached_property
    def _prefix_cache(self) -> dict:
        return {}

    def prefix_mass(self, r: int) -> np.ndarray:
        """Masses of the 2^r groups of letters sharing an r-bit prefix."""
        if not 0 <= r <= self.N:
            raise ValueError(f"prefix length must be in [0, {self.N}], got {r}")
        if r == self.N:
            return self.letter_probs
        got = self._prefix_cache.get(r)
        if got is None:
            got = self.letter_probs.reshape(1 << r, 1 << (self.N - r)).sum(axis=1)
            self._prefix_cache[r] = got
        return got

    def achieved_constants(self) -> dict:
        """Constants the construction controls only asymptotically, measured.

        Concentration is max |p_i 2^{N beta_i} - 1| (zero iff the palette sum
        normalizes to 1); neighbor ratio is over adjacent letters cyclically.
        """
        p = self.letter_probs
        conc = float(np.abs(p * 2.0 ** (self.N * self.letter_betas) - 1.0).max())
        ratios = np.concatenate([p[1:] / p[:-1], [p[0] / p[-1]]])
        worst = float(np.maximum(ratios, 1.0 / ratios).max())
        return {
            "concentration": conc,
            "max_neighbor_ratio": worst,
            "palindrome": bool(np.allclose(p, p[::-1], rtol=0, atol=0)),
            "endpoints_equal": bool(p[0] == p[-1]),
        }


def build_vectors(spectrum: PrescribedSpectrum, N: int,
                  eps_policy: str = "desk") -> BlockVector:
    """Probability palette of width N realizing the prescribed spectrum.

    Raises ConstructionError when the window is empty or the apex slot would
    be starved; the smallest usable width is found by try_block_widths.
    """
    if N < 1:
        raise ValueError(f"block width must be >= 1, got {N}")
    eps = block_epsilon(N, eps_policy)
    threshold = 1.0 / N + eps
    lo, hi = spectrum.alpha_min, spectrum.alpha_max
    xs = np.linspace(lo, hi, _WINDOW_SAMPLES) if hi > lo else np.array([lo])
    ok = spectrum.sigma(xs) >= threshold
    if not ok.any():
        raise ConstructionError(
            f"width {N}: no exponent window with sigma >= {threshold:.6g}")
    wl, wh = float(xs[ok][0]), float(xs[ok][-1])
    span = wh - wl
    smin, smax = 1.0 / (4 * N) + 1e-9, 1.0 / N - 1e-9

    if span < smin:
        mesh = np.array([0.5 * (wl + wh)])
    else:
        m = max(2, int(math.floor(span / (1.0 / (2 * N)))) + 1)
        while m > 2 and span / (m - 1) <= smin:
            m -= 1
        sp = span / (m - 1)
        if sp >= smax:
            m = int(math.floor(span / smax)) + 2
        mesh = np.linspace(wl, wh, m)

    apex = spectrum.apex
    for special in [apex] + spectrum.diagonal_touch_knots():
        if wl - 1e-12 <= special <= wh + 1e-12:
            i = int(np.argmin(np.abs(mesh - special)))
            mesh[i] = special
    mesh = np.unique(mesh)

    sg = spectrum.sigma(mesh)
    R = np.maximum(1, np.floor(2.0 ** (N * (sg - eps) - 1.0)).astype(np.int64))
    half = 1 << (N - 1)
    iD = int(np.argmin(np.abs(mesh - apex)))

    keep = list(range(len(mesh)))
    while True:
        others = sum(int(R[i]) for i in keep if i != iD)
        if others <= half - 1 or len(keep) == 1:
            break
        cand = [i for i in keep if i != iD]
        cand.sort(key=lambda i: (int(R[i]), float(sg[i])))
        keep.remove(cand[0])
    keep.sort()
    betas = mesh[keep].copy()
    counts = R[keep].copy()
    j = keep.index(iD) if iD in keep else int(np.argmin(np.abs(betas - apex)))
    counts[j] = half - (int(counts.sum()) - int(counts[j]))
    if counts[j] < 1:
        raise ConstructionError(
            f"width {N}: apex slot starved (complement {int(counts[j])})")

    full_betas = np.concatenate([betas, betas[::-1]])
    full_counts = np.concatenate([counts, counts[::-1]])
    Z = float(np.sum(full_counts * 2.0 ** (-N * full_betas)))
    return BlockVector.from_palette(N, full_betas, full_counts, Z)


def try_block_widths(spectrum: PrescribedSpectrum, eps_policy: str = "desk",
                     start: int = 2, stop: int = 64) -> int:
    """Smallest block width at which the construction succeeds."""
    for N in range(start, stop + 1):
        try:
            build_vectors(spectrum, N, eps_policy)
            return N
        except ConstructionError:
            continue
    raise ConstructionError(
        f"no usable block width in [{start}, {stop}] for this spectrum")


class MoranMeasure:
    """Fully supported ZZ^d-invariant measure built from per-block palettes.

    For d >= 2 the measure is the d-fold tensor product of one common
    one-dimensional factor, so cube masses are products over coordinates;
    the spectrum field then holds the factor spectrum (ambient exponents are
    d times factor exponents). Immutable after construction; mass queries
    are pure and thread-safe.
    """

    def __init__(self, schedule: GenerationSchedule, d: int = 1,
                 spectrum: PrescribedSpectrum | None = None,
                 homogeneous_probs: tuple[float, ...] | None = None,
                 depth_budget: int = 40, eps_policy: str = "desk",
                 _vectors: dict | None = None):
        if (spectrum is None) == (homogeneous_probs is None):
            raise ValueError("exactly one of spectrum / homogeneous_probs required")
        if d < 1:
            raise ValueError(f"dimension must be >= 1, got {d}")
        if not 0 <= depth_budget <= MAX_GENERATION:
            raise ValueError(
                f"depth budget {depth_budget} outside [0, {MAX_GENERATION}]")
        self.schedule = schedule
        self.d = int(d)
        self.spectrum = spectrum
        self.homogeneous_probs = homogeneous_probs
        self.depth_budget = int(depth_budget)
        self.eps_policy = eps_policy
        self._vecs: dict[int, BlockVector] = dict(_vectors or {})
        self._levels: list[np.ndarray] = [np.zeros(1)]

    # -------------------------------------------------------- constructors

    @classmethod
    def homogeneous(cls, probs: Sequence[float], d: int = 1,
                    depth_budget: int = 40) -> "MoranMeasure":
        vec = BlockVector.from_probs(probs)
        return cls(homogeneous_schedule(vec.N), d=d,
                   homogeneous_probs=tuple(float(p) for p in probs),
                   depth_budget=depth_budget, _vectors={vec.N: vec})

    @classmethod
    def lebesgue(cls, d: int = 1, depth_budget: int = 60) -> "MoranMeasure":
        return cls.homogeneous((0.5, 0.5), d=d, depth_budget=depth_budget)

    # -------------------------------------------------------- structure

    @property
    def power(self) -> float:
        return 1.0

    @property
    def tilt(self) -> float:
        return 0.0

    @property
    def base(self) -> "MoranMeasure":
        return self

    def vector(self, N: int) -> BlockVector:
        got = self._vecs.get(N)
        if got is None:
            if self.spectrum is None:
                raise ValueError(f"homogeneous measure has no width-{N} block")
            got = build_vectors(self.spectrum, N, self.eps_policy)
            self._vecs[N] = got
        return got

    def factor_spectrum(self) -> PrescribedSpectrum | None:
        return self.spectrum

    # -------------------------------------------------------- mass queries

    def _letter_widths(self, g: int, j: int) -> list[int]:
        return list(islice(self.schedule.letters(j + 1), g))

    def _coordinate_logmass(self, j: int, k: int) -> float:
        g, N, r = self.schedule.split_generation(j)
        acc = 0.0
        bits = j
        for w in self._letter_widths(g, j):
            bits -= w
            letter = (k >> bits) & ((1 << w) - 1)
            acc += float(np.log2(self.vector(w).letter_probs[letter]))
        if r:
            acc += float(np.log2(self.vector(N).prefix_mass(r)[k & ((1 << r) - 1)]))
        return acc

    def _coordinate_mass(self, j: int, k: int) -> float:
        g, N, r = self.schedule.split_generation(j)
        acc = 1.0
        bits = j
        for w in self._letter_widths(g, j):
            bits -= w
            letter = (k >> bits) & ((1 << w) - 1)
            acc *= float(self.vector(w).letter_probs[letter])
        if r:
            acc *= float(self.vector(N).prefix_mass(r)[k & ((1 << r) - 1)])
        return acc

    def _check_cube(self, cube: DyadicCube) -> None:
        if cube.j > self.depth_budget:
            raise ValueError(
                f"generation {cube.j} exceeds depth budget {self.depth_budget}")
        if cube.d != self.d:
            raise ValueError(f"cube dimension {cube.d} != measure dimension {self.d}")

    def mass(self, cube: DyadicCube) -> float:
        self._check_cube(cube)
        out = 1.0
        for k in cube.k:
            out *= self._coordinate_mass(cube.j, k)
        return out

    def logmass2(self, cube: DyadicCube) -> float:
        self._check_cube(cube)
        return float(sum(self._coordinate_logmass(cube.j, k) for k in cube.k))

    def factor_logmass_levels(self, J: int) -> list[np.ndarray]:
        """log2 masses of the one-dimensional factor: out[j] has 2^j entries."""
        if J > self.depth_budget:
            raise ValueError(f"level {J} exceeds depth budget {self.depth_budget}")
        if len(self._levels) > J:
            return self._levels[:J + 1]
        out = [np.zeros(1)]
        cur = out[0]
        j = 0
        for N in self.schedule.letters(J):
            vec = self.vector(N)
            for r in range(1, N + 1):
                if j + r > J:
                    break
                pref_log = vec.letter_log2 if r == N else np.log2(vec.prefix_mass(r))
                out.append((cur[:, None] + pref_log[None, :]).ravel())
            j = min(j + N, J)
            cur = out[j]
            if j >= J:
                break
        self._levels = out
        return out

    # -------------------------------------------------------- theory handles

    def theoretical_tau(self, t) -> np.ndarray:
        """Limit scaling function on the ambient dimension's moment scale.

        Tensor factors add: d copies of the factor's conjugate recover the
        conjugate of the ambient spectrum, since sigma(A) = d sigma_f(A/d).
        """
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.spectrum is not None:
            return self.d * self.spectrum.conjugate_values(t)
        vec = self.vector(self.schedule.N0)
        out = np.empty_like(t)
        for i, ti in enumerate(t):
            w = ti * vec.letter_log2
            mx = w.max()
            out[i] = -(mx + math.log2(float(np.sum(2.0 ** (w - mx))))) / vec.N
        return out * self.d

    def sigma_values(self, alphas) -> np.ndarray:
        """Prescribed/limit spectrum at ambient exponents (guard value outside)."""
        alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
        if self.spectrum is not None:
            if self.d == 1:
                return self.spectrum.sigma(alphas)
            vals = self.spectrum.sigma(alphas / self.d)
            return np.where(vals <= _OUTSIDE / 2, _OUTSIDE, self.d * vals)
        return np.array([self._homogeneous_sigma(a) for a in alphas])

    def _homogeneous_sigma(self, alpha: float) -> float:
        # conjugate of the smooth homogeneous tau by bisection on its slope
        vec = self.vector(self.schedule.N0)
        lp = np.log(vec.letter_probs)
        N = vec.N

        def slope(t: float) -> float:
            w = t * lp
            w -= w.max()
            e = np.exp(w)
            return -float(np.sum(e * lp) / np.sum(e)) / math.log(2.0) / N * self.d

        a_hi, a_lo = slope(-512.0), slope(512.0)
        if not a_lo - 1e-12 <= alpha <= a_hi + 1e-12:
            return _OUTSIDE
        lo, hi = -512.0, 512.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if slope(mid) > alpha:
                lo = mid
            else:
                hi = mid
        t = 0.5 * (lo + hi)
        tau = float(self.theoretical_tau(np.array([t]))[0])
        return t * alpha - tau

    def alpha_bounds(self) -> tuple[float, float]:
        if self.spectrum is not None:
            return self.d * self.spectrum.alpha_min, self.d * self.spectrum.alpha_max
        vec = self.vector(self.schedule.N0)
        b = vec.letter_betas
        return self.d * float(b.min()), self.d * float(b.max())

    def sigma_curve(self, n: int = 801) -> SpectrumCurve:
        lo, hi = self.alpha_bounds()
        if hi <= lo:
            return SpectrumCurve((lo,), (float(self.sigma_values([lo])[0]),),
                                 kind=SPECTRUM, d=self.d)
        grid = np.linspace(lo, hi, n)
        vals = self.sigma_values(grid)
        out = tuple(float(v) if v > _OUTSIDE / 2 else 0.0 for v in vals)
        return SpectrumCurve(tuple(float(a) for a in grid), out,
                             kind=SPECTRUM, d=self.d)

    # -------------------------------------------------------- serialization

    def descriptor(self) -> dict:
        ell_policy = "homogeneous" if math.isinf(self.schedule.ell(self.schedule.N0)) \
            else "square"
        doc = {
            "kind": "moran",
            "d": self.d,
            "N0": self.schedule.N0,
            "ell_policy": ell_policy,
            "eps_policy": self.eps_policy,
            "depth_budget": self.depth_budget,
            "spectrum_knots": [[repr(a), repr(s)] for a, s in self.spectrum.knots]
            if self.spectrum else None,
            "homogeneous_probs": [repr(p) for p in self.homogeneous_probs]
            if self.homogeneous_probs else None,
            "blocks": {
                str(N): {
                    "betas": [repr(b) for b in vec.betas],
                    "counts": list(vec.counts),
                    "probs": [repr(p) for p in vec.probs],
                }
                for N, vec in sorted(self._vecs.items())
            },
        }
        return doc

    @classmethod
    def from_descriptor(cls, doc: dict) -> "MoranMeasure":
        if doc.get("kind") != "moran":
            raise ValueError(f"not a measure descriptor: kind={doc.get('kind')!r}")
        vecs = {
            int(N): BlockVector(
                N=int(N),
                betas=tuple(float(b) for b in blk["betas"]),
                counts=tuple(int(c) for c in blk["counts"]),
                probs=tuple(float(p) for p in blk["probs"]),
            )
            for N, blk in doc.get("blocks", {}).items()
        }
        spectrum = None
        if doc.get("spectrum_knots"):
            spectrum = PrescribedSpectrum(
                tuple((float(a), float(s)) for a, s in doc["spectrum_knots"]))
        probs = tuple(float(p) for p in doc["homogeneous_probs"]) \
            if doc.get("homogeneous_probs") else None
        schedule = homogeneous_schedule(doc["N0"]) \
            if doc["ell_policy"] == "homogeneous" else GenerationSchedule(N0=doc["N0"])
        return cls(schedule, d=doc["d"], spectrum=spectrum, homogeneous_probs=probs,
                   depth_budget=doc["depth_budget"], eps_policy=doc["eps_policy"],
                   _vectors=vecs)

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.descriptor(), fh, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, path) -> "MoranMeasure":
        with open(path) as fh:
            return cls.from_descriptor(json.load(fh))


class Environment:
    """Power-and-tilt wrap of a measure: mass(cube) = base^s * (sqrt(d) 2^-j)^eps."""

    def __init__(self, base: MoranMeasure, s: float = 1.0, eps: float = 0.0):
        if s <= 0:
            raise ValueError(f"power must be > 0, got {s}")
        amin = base.alpha_bounds()[0]
        if eps <= -s * amin:
            raise ValueError(
                f"tilt {eps} kills positivity (needs eps > {-s * amin:.6g})")
        self.base_measure = base
        self.s = float(s)
        self.eps = float(eps)

    @property
    def d(self) -> int:
        return self.base_measure.d

    @property
    def depth_budget(self) -> int:
        return self.base_measure.depth_budget

    @property
    def schedule(self) -> GenerationSchedule:
        return self.base_measure.schedule

    @property
    def power(self) -> float:
        return self.s

    @property
    def tilt(self) -> float:
        return self.eps

    @property
    def base(self) -> MoranMeasure:
        return self.base_measure

    def mass(self, cube: DyadicCube) -> float:
        diam = math.sqrt(self.d) * 2.0 ** (-cube.j)
        return self.base_measure.mass(cube) ** self.s * diam ** self.eps

    def logmass2(self, cube: DyadicCube) -> float:
        return self.s * self.base_measure.logmass2(cube) + \
            self.eps * (0.5 * math.log2(self.d) - cube.j)

    def factor_logmass_levels(self, J: int) -> list[np.ndarray]:
        return self.base_measure.factor_logmass_levels(J)

    def theoretical_tau(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return self.base_measure.theoretical_tau(self.s * t) + t * self.eps

    def sigma_values(self, alphas) -> np.ndarray:
        alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
        inner = (alphas - self.eps) / self.s
        return self.base_measure.sigma_values(inner)

    def alpha_bounds(self) -> tuple[float, float]:
        lo, hi = self.base_measure.alpha_bounds()
        return self.s * lo + self.eps, self.s * hi + self.eps

    def sigma_curve(self, n: int = 801) -> SpectrumCurve:
        inner = self.base_measure.sigma_curve(n)
        return SpectrumCurve(
            tuple(self.s * a + self.eps for a in inner.arguments),
            inner.values, kind=SPECTRUM, d=inner.d)

    def descriptor(self) -> dict:
        return {
            "kind": "environment",
            "power": repr(self.s),
            "tilt": repr(self.eps),
            "base": self.base_measure.descriptor(),
        }

    @classmethod
    def from_descriptor(cls, doc: dict) -> "Environment":
        if doc.get("kind") != "environment":
            raise ValueError(f"not an environment descriptor: {doc.get('kind')!r}")
        return cls(MoranMeasure.from_descriptor(doc["base"]),
                   s=float(doc["power"]), eps=float(doc["tilt"]))

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.descriptor(), fh, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, path) -> "Environment":
        with open(path) as fh:
            return cls.from_descriptor(json.load(fh))


def load_set_function(path):
    """Load either a plain measure or an environment from its JSON document."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("kind") == "environment":
        return Environment.from_descriptor(doc)
    return MoranMeasure.from_descriptor(doc)


def build_measure(spectrum: PrescribedSpectrum, d: int = 1,
                  depth_budget: int = 40, eps_policy: str = "desk",
                  N0: int | None = None):
    """Measure (or degenerate-point environment) realizing the spectrum.

    A single-knot spectrum at (alpha, d) denotes an exact power law: for
    alpha = d this is Lebesgue measure; otherwise the Lebesgue environment
    with power alpha/d, a capacity rather than a probability measure.
    """
    if depth_budget > MAX_GENERATION:
        raise ValueError(f"depth budget {depth_budget} exceeds {MAX_GENERATION}")
    if spectrum.is_point or spectrum.alpha_max - spectrum.alpha_min < 1e-12:
        alpha = spectrum.apex
        leb = MoranMeasure.lebesgue(d=d, depth_budget=min(depth_budget, 60))
        if abs(alpha - d) < 1e-12:
            return leb
        return Environment(leb, s=alpha / d)

    report = validate_admissible(spectrum.curve(d=d), d=d, class_tag="S_dM")
    if not report.ok:
        raise ValueError("spectrum is not admissible:\n" + report.summary())
    factor = spectrum if d == 1 else spectrum.scaled_factor(d)
    n0 = N0 if N0 is not None else try_block_widths(factor, eps_policy)
    build_vectors(factor, n0, eps_policy)  # fail fast before returning
    return MoranMeasure(GenerationSchedule(N0=n0), d=d, spectrum=factor,
                        depth_budget=depth_budget, eps_policy=eps_policy)


@dataclass(frozen=True)
class SampleBatch:
    """Points drawn by an auxiliary sampler with their per-level cube indices.

    level_index[j] is an (n, d) integer array: coordinate indices of the
    generation-j cube containing each point.
    """

    points: np.ndarray
    level_index: tuple
    depth: int

    def cube_of(self, i: int, j: int) -> DyadicCube:
        return DyadicCube(j, tuple(int(c) for c in self.level_index[j][i]))


class AuxiliarySampler:
    """Draws points whose letters stay within 1/N of a target exponent.

    Letters are chosen uniformly among odd indices i with
    |beta_i - alpha| <= 1/N, independently per coordinate. Deterministic
    under the seed; clone with a derived seed for parallel use.
    """

    def __init__(self, measure, alpha: float, seed: int = 0):
        base = measure.base
        if measure.power != 1.0 or measure.tilt != 0.0:
            alpha = (alpha - measure.tilt) / measure.power
        lo, hi = base.alpha_bounds()
        lo, hi = lo / base.d, hi / base.d  # per-coordinate letter exponents
        if not lo - 1e-9 <= alpha <= hi + 1e-9:
            raise ValueError(
                f"target exponent {alpha} outside factor range [{lo:.6g}, {hi:.6g}]")
        self.measure = base
        self.alpha = float(alpha)
        self.seed = seed
        self._rng = np.random.default_rng(seed)

    def _selection(self, N: int) -> np.ndarray:
        vec = self.measure.vector(N)
        idx = np.arange(1 << N)
        sel = idx[(idx % 2 == 1) &
                  (np.abs(vec.letter_betas - self.alpha) <= 1.0 / N)]
        if sel.size == 0:
            raise ValueError(
                f"no odd letters within 1/{N} of exponent {self.alpha} "
                f"in the width-{N} block")
        return sel

    def draw(self, n: int, depth: int) -> SampleBatch:
        if depth > self.measure.depth_budget:
            raise ValueError(
                f"depth {depth} exceeds budget {self.measure.depth_budget}")
        d = self.measure.d
        ks = np.zeros((n, d), dtype=np.int64)
        levels = [ks.copy()]
        depth_now = 0
        for N in self.measure.schedule.letters(depth):
            sel = self._selection(N)
            draws = np.stack(
                [sel[self._rng.integers(0, sel.size, n)] for _ in range(d)],
                axis=1)
            adv = min(N, depth - depth_now)
            for r in range(1, adv + 1):
                levels.append((ks << r) | (draws >> (N - r)))
            ks = (ks << adv) | (draws >> (N - adv))
            depth_now += adv
            if depth_now >= depth:
                break
        pts = (ks.astype(float) + 0.5) * 2.0 ** (-depth)
        return SampleBatch(points=pts, level_index=tuple(levels), depth=depth)


def auxiliary_sampler(measure, alpha: float, seed: int = 0) -> AuxiliarySampler:
    """Sampler handle for points with prescribed local exponent alpha."""
    return AuxiliarySampler(measure, alpha, seed)
