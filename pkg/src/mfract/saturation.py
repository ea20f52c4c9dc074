"""Explicit wavelet fields that saturate a mass-weighted smoothness ball.

The construction runs in three stages. First a schedule is derived from the
measure: for each resolution index N the exponent range is partitioned into
intervals over which the conjugate spectrum oscillates by at most 1/N, a
tolerance eta_N is measured from the level-j cube counts of each interval,
and a starting level J_N is chosen so that the partition size and the
previous tolerances remain compatible. Second, every admissible cube gets a
coefficient: the cube's mass, damped by a level weight and, for finite p,
by a factor read off the conjugate spectrum at the cube's irreducible
ancestor. Third, the resulting field's leaders are compared against the
same-level neighborhood coefficients, which certifies that the field's
oscillation is carried at every scale rather than hidden in cancellation.

The tolerances and starting levels are measured from the realized measure,
not assumed: existence arguments guarantee they stabilize eventually but
give no rate, so the builder records what the finite-depth data achieves
and reports when the requested depth is too shallow to realize an index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .wavelets import WaveletField, _neighborhood_max, leaders

_OSC_GUARD = 4096
_T_TAIL = (100.0, 300.0, 1e3, 1e4, 1e5, 1e6)


# --------------------------------------------------------------------------
# schedule


@dataclass(frozen=True)
class ScheduleBlock:
    """One resolution index: its partition, tolerance, and starting level.

    deviation is the largest measured gap in the count-versus-spectrum
    comparison over levels [J_start, depth]; eta is that deviation floored
    at 1/N.
    """

    N: int
    M: int
    intervals: tuple[tuple[float, float], ...]
    eta: float
    J_start: int
    deviation: float


@dataclass(frozen=True)
class SaturationSchedule:
    """Measured partition schedule of one environment up to a fixed depth."""

    depth: int
    alpha_min: float
    alpha_max: float
    blocks: tuple[ScheduleBlock, ...]
    notes: tuple[str, ...]

    def eta(self, N: int) -> float:
        """Tolerance of index N, with the convention eta(0) = 1."""
        if N == 0:
            return 1.0
        if not 1 <= N <= len(self.blocks):
            raise ValueError(f"index {N} outside the realized range "
                             f"[1, {len(self.blocks)}]")
        return self.blocks[N - 1].eta

    def N_of_level(self, j: int) -> int:
        """The resolution index governing level j: the largest realized N
        whose starting level is at most j. Levels beyond the last realized
        window keep the final index."""
        if j < self.blocks[0].J_start:
            raise ValueError(
                f"level {j} is below the first starting level "
                f"{self.blocks[0].J_start}")
        n = 1
        for blk in self.blocks:
            if blk.J_start <= j:
                n = blk.N
        return n

    @property
    def J2(self) -> int:
        """Starting level of index 2, where coefficients switch on."""
        if len(self.blocks) < 2:
            raise ValueError(
                "index 2 was not realized at this depth; "
                f"notes: {'; '.join(self.notes) or 'none'}")
        return self.blocks[1].J_start

    def describe(self) -> str:
        lines = [f"depth {self.depth}, exponents "
                 f"[{self.alpha_min:.6g}, {self.alpha_max:.6g}]"]
        for blk in self.blocks:
            lines.append(
                f"  N={blk.N}: M={blk.M}, eta={blk.eta:.6g}, "
                f"J_start={blk.J_start}, deviation={blk.deviation:.6g}")
        lines.extend(f"  note: {n}" for n in self.notes)
        return "\n".join(lines)


class _LevelCounter:
    """Closed-interval cube counts by coarse exponent, per level."""

    def __init__(self, env, depth: int):
        self.s = float(env.power)
        self.eps = float(env.tilt)
        self.d = int(env.d)
        levels = env.factor_logmass_levels(depth)
        self.sorted_f = [np.sort(levels[j]) for j in range(depth + 1)]

    def count(self, j: int, lo: float, hi: float) -> int:
        """Cubes at level j whose exponent log2(mass)/(-j) is in [lo, hi]."""
        tilt = self.eps * (0.5 * math.log2(self.d) - j)
        # alpha in [lo, hi]  <=>  sum of factor logmasses in [flo, fhi]
        fhi = (-j * lo - tilt) / self.s
        flo = (-j * hi - tilt) / self.s
        f = self.sorted_f[j]
        if self.d == 1:
            a = np.searchsorted(f, flo, side="left")
            b = np.searchsorted(f, fhi, side="right")
            return int(b - a)
        a = np.searchsorted(f, flo - f, side="left")
        b = np.searchsorted(f, fhi - f, side="right")
        return int((b - a).sum())


def _sigma_table(env, n: int = 2048) -> tuple[np.ndarray, np.ndarray]:
    """Dense table of the conjugate spectrum on the exponent range.

    Prescribed piecewise-linear spectra are sampled exactly through their
    knots; homogeneous ones get a conjugate of the theoretical scaling
    function over a wide moment grid, accurate to well below the mesh
    tolerances the schedule decisions work with.
    """
    a0, a1 = (float(v) for v in env.alpha_bounds())
    if a1 - a0 <= 1e-12:
        return np.array([a0]), np.maximum(env.sigma_values([a0]), 0.0)
    base = env.base
    b0, b1 = (float(v) for v in base.alpha_bounds())
    grid = np.linspace(b0, b1, n + 1)
    if base.spectrum is not None:
        knots = np.asarray([a for a, _ in base.spectrum.knots]) * base.d
        grid = np.union1d(grid, knots[(knots >= b0) & (knots <= b1)])
        vals = base.sigma_values(grid)
    else:
        t = np.sort(np.concatenate([
            np.linspace(-60.0, 60.0, 2401),
            [-v for v in _T_TAIL], list(_T_TAIL)]))
        tau = base.theoretical_tau(t)
        vals = (grid[:, None] * t[None, :] - tau[None, :]).min(axis=1)
    return float(env.power) * grid + float(env.tilt), np.maximum(vals, 0.0)


def _interval_extrema(table, lo: float, hi: float) -> tuple[float, float]:
    grid, vals = table
    ends = np.interp([lo, hi], grid, vals)
    a = np.searchsorted(grid, lo, side="left")
    b = np.searchsorted(grid, hi, side="right")
    inner = vals[a:b]
    top = float(max(ends.max(), inner.max())) if inner.size else float(ends.max())
    bot = float(min(ends.min(), inner.min())) if inner.size else float(ends.min())
    return bot, top


def _make_partition(a0: float, a1: float, N: int, table,
                    min_M: int) -> tuple[int, tuple[tuple[float, float], ...]]:
    """Uniform mesh, refined until width and oscillation are within 1/N."""
    if a1 - a0 <= 1e-12:
        return 1, ((a0, a0),)
    M = max(1, min_M, math.ceil((a1 - a0) * N - 1e-12))
    while M <= _OSC_GUARD:
        edges = np.linspace(a0, a1, M + 1)
        ok = True
        for i in range(M):
            bot, top = _interval_extrema(table, edges[i], edges[i + 1])
            if top - bot > 1.0 / N + 1e-12:
                ok = False
                break
        if ok:
            return M, tuple((float(edges[i]), float(edges[i + 1]))
                            for i in range(M))
        M += 1
    raise ValueError(f"no partition of size <= {_OSC_GUARD} meets the "
                     f"oscillation bound at N = {N}")


def build_schedule(env, depth: int) -> SaturationSchedule:
    """Measure the partition schedule of env down to the given depth.

    For each index N in turn the deviation between log2 cube counts over
    the enlarged partition intervals and the spectrum maximum is measured
    at every level; the window [J_N, depth] must come in under the
    previous tolerance, J_N must accommodate the partition size, and the
    products J_N eta_(N-1) must strictly increase. The first index that
    cannot satisfy all three at this depth ends the schedule, with a note
    rather than an error.
    """
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    if getattr(env, "depth_budget", depth) < depth:
        raise ValueError(
            f"environment holds {env.depth_budget} generations, "
            f"need {depth}")
    a0, a1 = (float(v) for v in env.alpha_bounds())
    table = _sigma_table(env)
    counter = _LevelCounter(env, depth)
    d = int(env.d)

    blocks: list[ScheduleBlock] = []
    notes: list[str] = []
    N = 0
    while True:
        N += 1
        if N > depth + 2:
            notes.append(f"stopped at N = {N - 1}: index guard reached")
            break
        eta_prev = blocks[N - 2].eta if N >= 2 else 1.0
        eta_prev2 = blocks[N - 3].eta if N >= 3 else 1.0
        prev_M = blocks[-1].M if blocks else 1
        try:
            M, intervals = _make_partition(a0, a1, N, table, prev_M)
        except ValueError as exc:
            notes.append(f"stopped at N = {N - 1}: {exc}")
            break

        # deviation per level: worst interval's count-vs-spectrum gap
        dev = np.empty(depth + 1)
        dev[0] = math.inf
        for j in range(1, depth + 1):
            worst = 0.0
            for lo, hi in intervals:
                top = _interval_extrema(table, lo, hi)[1]
                cnt = counter.count(j, lo - 1.0 / N, hi + 1.0 / N)
                if cnt == 0:
                    worst = math.inf
                    break
                worst = max(worst, abs(math.log2(cnt) / j - top))
            dev[j] = worst

        lo_j = blocks[-1].J_start if blocks else 1
        if N >= 2:
            lo_j = max(lo_j, math.ceil(math.log2(M) / eta_prev - 1e-12))
        if N >= 3:
            prev_prod = blocks[-1].J_start * eta_prev2
            while lo_j * eta_prev <= prev_prod + 1e-12:
                lo_j += 1
        suffix = np.maximum.accumulate(dev[::-1])[::-1]
        if lo_j > depth:
            notes.append(
                f"depth {depth} is too shallow to realize N = {N}: "
                f"its starting level must be at least {lo_j}")
            break
        J_start = None
        for j in range(max(1, lo_j), depth + 1):
            if suffix[j] <= eta_prev + 1e-12:
                J_start = j
                break
        if J_start is None:
            notes.append(
                f"depth {depth} is too shallow to realize N = {N}: "
                f"no level keeps the deviation under {eta_prev:.6g}")
            break
        deviation = float(suffix[J_start])
        eta = max(1.0 / N, deviation)
        blocks.append(ScheduleBlock(
            N=N, M=M, intervals=intervals, eta=eta,
            J_start=J_start, deviation=deviation))
    if len(blocks) < 2:
        notes.append("index 2 unrealized: saturation coefficients cannot "
                     "be built from this schedule")
    elif blocks[-1].N == 2:
        notes.append("only N = 2 realized: every level at and beyond "
                     "J_2 uses the first nontrivial index")
    return SaturationSchedule(
        depth=depth, alpha_min=a0, alpha_max=a1,
        blocks=tuple(blocks), notes=tuple(notes))


# --------------------------------------------------------------------------
# coefficients


def _trailing_zero_split(j: int, d: int):
    """Per cube: level drop to the irreducible ancestor and its indices.

    Returns (m, kbar) where m has the grid's shape and kbar indexes the
    ancestor per coordinate. The all-zero corner maps to the root.
    """
    n = 1 << j
    k = np.arange(n, dtype=np.int64)
    tz = np.empty(n, dtype=np.int64)
    tz[0] = j  # the zero index is divisible as often as the level allows
    nz = k[1:]
    tz[1:] = np.log2(np.bitwise_and(nz, -nz)).astype(np.int64)
    if d == 1:
        m = np.minimum(tz, j)
        return m, (np.arange(n, dtype=np.int64) >> m,)
    m = np.minimum(np.minimum.outer(tz, tz), j)
    k0 = np.arange(n, dtype=np.int64)[:, None] >> m
    k1 = np.arange(n, dtype=np.int64)[None, :] >> m
    return m, (k0, k1)


def _level_logmass_array(env, levels: list, j: int) -> np.ndarray:
    s, eps, d = float(env.power), float(env.tilt), int(env.d)
    f = levels[j]
    lm = f if d == 1 else f[:, None] + f[None, :]
    return s * lm + eps * (0.5 * math.log2(d) - j)


def saturation_coefficients(env, p: float, q: float, order: int,
                            depth: int,
                            schedule: SaturationSchedule | None = None,
                            offset: Sequence[int] | None = None
                            ) -> WaveletField:
    """Wavelet coefficients of the saturating field for the mass-weighted
    (p, q) ball of env, on the unit cell, down to the given depth.

    Levels before the schedule's J_2 are zero. From J_2 on, each cube
    carries its mass times a level weight; for finite p the conjugate
    spectrum evaluated at the irreducible ancestor's clamped exponent
    contributes a further damping, and the root-ancestor case contributes
    none. Coefficients are identical across orientations and the scaling
    block is zero. offset places the cell at an integer translate, which
    only rescales the finite-p weights by the cell norm factor.
    """
    if not (p >= 1.0 and q >= 1.0):
        raise ValueError(f"p and q must be >= 1, got p={p}, q={q}")
    if schedule is None:
        schedule = build_schedule(env, depth)
    elif schedule.depth < depth:
        raise ValueError(
            f"schedule depth {schedule.depth} is shallower than {depth}")
    J2 = schedule.J2
    d = int(env.d)
    cell_norm = 0.0
    if offset is not None:
        if len(offset) != d:
            raise ValueError(f"offset must have {d} coordinates")
        cell_norm = float(max(abs(int(c)) for c in offset))

    table = _sigma_table(env)
    a0, a1 = schedule.alpha_min, schedule.alpha_max
    levels = env.factor_logmass_levels(depth)
    orient = (1 << d) - 1
    details: list[np.ndarray] = []
    for j in range(depth):
        shape = (1 << j,) * d
        if j < J2:
            details.append(np.zeros((orient,) + shape))
            continue
        mass = np.exp2(_level_logmass_array(env, levels, j))
        if math.isinf(p):
            w = float(j) ** (-2.0 / q) if not math.isinf(q) else 1.0
            plane = w * mass
        else:
            n_idx = schedule.N_of_level(j)
            eta = schedule.eta(n_idx - 1)
            two_q = 0.0 if math.isinf(q) else 2.0 / q
            w = 2.0 ** (-3.0 * j * eta / p) / (
                float(j) ** (1.0 / p + two_q)
                * (1.0 + cell_norm) ** ((d + 1) / p))
            m, kbar = _trailing_zero_split(j, d)
            jbar = j - m
            alpha = np.zeros(shape)
            damp = np.zeros(shape)
            for jb in range(1, j + 1):
                grp = jbar == jb
                if not grp.any():
                    continue
                if d == 1:
                    lm_bar = levels[jb][kbar[0][grp]]
                else:
                    lm_bar = levels[jb][kbar[0][grp]] + levels[jb][kbar[1][grp]]
                lm_bar = (float(env.power) * lm_bar
                          + float(env.tilt) * (0.5 * math.log2(d) - jb))
                alpha[grp] = lm_bar / (-jb)
                damp[grp] = jb
            np.clip(alpha, a0, a1, out=alpha)
            tau_star = np.interp(alpha.ravel(), table[0],
                                 table[1]).reshape(shape)
            plane = w * mass * np.exp2(-damp * tau_star / p)
        details.append(np.broadcast_to(plane, (orient,) + shape).copy())
    return WaveletField(d=d, J=depth, order=order,
                        scaling=np.zeros((1,) * d), details=tuple(details))


# --------------------------------------------------------------------------
# leader comparability


@dataclass(frozen=True)
class LeaderComparabilityReport:
    """Outcome of comparing leaders to same-level neighborhood maxima.

    The lower bound (neighborhood coefficient below the leader) must hold
    everywhere by construction. The upper bound allows growth 2^(j eps);
    J_eps is the smallest level from which every deeper tested level is
    violation free, None when even the deepest level fails.
    """

    epsilon: float
    j_lo: int
    j_hi: int
    lower_violations: int
    upper_violation_rates: tuple[float, ...]
    J_eps: int | None

    @property
    def lower_ok(self) -> bool:
        return self.lower_violations == 0

    @property
    def ok(self) -> bool:
        return self.lower_ok and self.J_eps is not None


def verify_leader_comparability(field: WaveletField, env, epsilon: float,
                                j_range: tuple[int, int] | None = None
                                ) -> LeaderComparabilityReport:
    """Exhaustively check both comparability inequalities on a field.

    For every cube the same-level neighborhood coefficient max must sit
    below the leader (exact, the leader supremum includes it), and the
    leader must sit below 2^(j epsilon) times that max from some level
    on; the scan reports that level.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    if int(env.d) != field.d:
        raise ValueError(
            f"environment dimension {env.d} does not match field {field.d}")
    if j_range is None:
        j_range = (1, field.J - 1)
    j_lo, j_hi = int(j_range[0]), int(j_range[1])
    if not 1 <= j_lo <= j_hi < field.J:
        raise ValueError(f"j range must satisfy 1 <= lo <= hi < {field.J}, "
                         f"got ({j_lo}, {j_hi})")
    lf = leaders(field)
    lower_bad = 0
    rates: list[float] = []
    for j in range(j_lo, j_hi + 1):
        own = np.abs(field.details[j]).max(axis=0)
        ctilde = _neighborhood_max(own, field.d)
        ld = lf.levels[j]
        lower_bad += int((ctilde > ld).sum())
        bound = 2.0 ** (j * epsilon) * ctilde
        rates.append(float((ld > bound).mean()))
    J_eps = None
    for idx in range(len(rates) - 1, -1, -1):
        if rates[idx] > 0.0:
            break
        J_eps = j_lo + idx
    return LeaderComparabilityReport(
        epsilon=float(epsilon), j_lo=j_lo, j_hi=j_hi,
        lower_violations=lower_bad,
        upper_violation_rates=tuple(rates), J_eps=J_eps)
