"""Exact dyadic-cube geometry on the periodic unit cube.

Cubes are indexed by (generation, integer coordinates); all arithmetic is
integer arithmetic, so containment, ancestry and neighborhood relations are
exact. Coordinates are reduced modulo 2^j, which identifies the unit cube
with the torus: every measure handled downstream is invariant under integer
translations, so wrapped neighbors carry the same mass as translated ones.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Iterator

MAX_GENERATION = 62  # per-coordinate limit so 2^j fits comfortably in int64


@dataclass(frozen=True)
class DyadicCube:
    """Half-open cube prod_i [k_i 2^-j, (k_i+1) 2^-j) of generation j."""

    j: int
    k: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.j < 0:
            raise ValueError(f"generation must be >= 0, got {self.j}")
        if self.j > MAX_GENERATION:
            raise ValueError(
                f"generation {self.j} exceeds supported maximum {MAX_GENERATION}")
        if not self.k:
            raise ValueError("coordinate vector must be non-empty")
        size = 1 << self.j
        if any(not (0 <= c < size) for c in self.k):
            object.__setattr__(self, "k", tuple(c % size for c in self.k))

    @property
    def d(self) -> int:
        return len(self.k)

    @property
    def side(self) -> float:
        return 2.0 ** (-self.j)

    def parent(self) -> "DyadicCube":
        if self.j == 0:
            raise ValueError("generation-0 cube has no parent")
        return DyadicCube(self.j - 1, tuple(c >> 1 for c in self.k))

    def children(self) -> list["DyadicCube"]:
        if self.j >= MAX_GENERATION:
            raise ValueError("children would exceed the supported generation")
        offs = product((0, 1), repeat=self.d)
        return [DyadicCube(self.j + 1, tuple((c << 1) | o for c, o in zip(self.k, off)))
                for off in offs]

    def lower_corner(self) -> tuple[float, ...]:
        return tuple(c * self.side for c in self.k)

    def contains(self, x: tuple[float, ...]) -> bool:
        lo = self.lower_corner()
        s = self.side
        return all(a <= t < a + s for a, t in zip(lo, x))


def locate(x, j: int) -> DyadicCube:
    """The unique generation-j cube containing x, left-closed convention."""
    if j < 0:
        raise ValueError(f"generation must be >= 0, got {j}")
    if j > MAX_GENERATION:
        raise ValueError(f"generation {j} exceeds supported maximum {MAX_GENERATION}")
    coords = tuple(float(c) for c in (x if hasattr(x, "__len__") else (x,)))
    if any(not (0.0 <= c < 1.0) for c in coords):
        raise ValueError(f"point {coords} outside [0,1)^d")
    size = 1 << j
    k = tuple(min(int(c * size), size - 1) for c in coords)
    # floor(c * 2^j) is exact for dyadic c; the min() guards float roundup at 1-ulp
    return DyadicCube(j, k)


def neighborhood3(cube: DyadicCube) -> list[DyadicCube]:
    """The 3^d same-generation cubes whose union is the tripled cube.

    Coordinates wrap modulo 2^j; the center cube is always included.
    """
    size = 1 << cube.j
    out = []
    for off in product((-1, 0, 1), repeat=cube.d):
        out.append(DyadicCube(cube.j, tuple((c + o) % size for c, o in zip(cube.k, off))))
    return out


def irreducible(cube: DyadicCube) -> DyadicCube:
    """Coarsest cube sharing the anchor vertex, with an odd coordinate.

    The all-zero vertex has no odd representation; it maps to the root cube.
    """
    j, k = cube.j, list(cube.k)
    if all(c == 0 for c in k):
        return DyadicCube(0, tuple(0 for _ in k))
    while j > 0 and all(c % 2 == 0 for c in k):
        k = [c >> 1 for c in k]
        j -= 1
    return DyadicCube(j, tuple(k))


@dataclass(frozen=True)
class GenerationSchedule:
    """Block layout of the coded dyadic tree.

    Letters come in blocks: block N contributes ell(N) letters, each letter
    spanning N bits of generation. Blocks run N0, N0+1, ... in order. The
    default policy ell(N) = N^2 is the smallest admissible choice, which
    reaches deep blocks soonest at practical depths. A homogeneous layout
    (one block repeated forever) is expressed by an unbounded ell.
    """

    N0: int
    ell: Callable[[int], int | float] = field(default=lambda N: N * N)

    def __post_init__(self) -> None:
        if self.N0 < 1:
            raise ValueError(f"starting block width must be >= 1, got {self.N0}")

    def letters(self, max_generation: int) -> Iterator[int]:
        """Yield the width of each successive letter until the budget is filled."""
        j = 0
        N = self.N0
        count = 0
        cap = self.ell(N)
        while j < max_generation:
            if count >= cap:
                N += 1
                count = 0
                cap = self.ell(N)
            yield N
            j += N
            count += 1

    def gamma(self, g: int) -> int:
        """Generation reached after g complete letters."""
        if g < 1:
            raise ValueError(f"word length must be >= 1, got {g}")
        j = 0
        N = self.N0
        remaining = g
        while True:
            cap = self.ell(N)
            take = remaining if (isinstance(cap, float) and math.isinf(cap)) else min(remaining, int(cap))
            j += N * take
            remaining -= take
            if remaining == 0:
                return j
            N += 1

    def gamma_values(self, max_generation: int) -> list[int]:
        """All gamma(g) <= max_generation, in increasing order."""
        out = []
        j = 0
        for N in self.letters(max_generation):
            j += N
            if j <= max_generation:
                out.append(j)
        return out

    def split_generation(self, j: int) -> tuple[int, int, int]:
        """Decompose j bits into (complete letters g, filling width N, bits into it r).

        Satisfies gamma(g) <= j < gamma(g) + N and r = j - gamma(g); the width N
        is that of the letter being filled, i.e. the next block's width when j
        lands exactly on a block boundary.
        """
        if j < 0:
            raise ValueError(f"generation must be >= 0, got {j}")
        used = 0
        g = 0
        N = self.N0
        count = 0
        cap = self.ell(N)
        while True:
            if count >= cap:
                N += 1
                count = 0
                cap = self.ell(N)
            if used + N > j:
                return g, N, j - used
            used += N
            g += 1
            count += 1
            if used == j:
                # peek the width of the next letter
                nN, ncount, ncap = N, count, cap
                if ncount >= ncap:
                    nN += 1
                return g, nN, 0


def homogeneous_schedule(N: int) -> GenerationSchedule:
    """Single block of width N repeated forever (gamma(g) = N*g)."""
    return GenerationSchedule(N0=N, ell=lambda _: math.inf)
