"""Integer-lattice geometry, binary configurations, and connectivity on Z^2.

Sites are plain (x, y) tuples.  Configurations are dense uint8 grids over a
rectangular region; grids are indexed [x - x_min, y - y_min].
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from mdperc import _kernels
from mdperc.errors import ContractViolationError

Site = tuple[int, int]

# N, E, S, W, then NE, SE, SW, NW
NEIGHBOR_OFFSETS = ((0, 1), (1, 0), (0, -1), (-1, 0),
                    (1, 1), (1, -1), (-1, -1), (-1, 1))


class Connectivity(enum.Enum):
    NEAREST_NEIGHBOR = "nn"
    STAR = "star"

    @property
    def degree(self) -> int:
        return 4 if self is Connectivity.NEAREST_NEIGHBOR else 8


def neighbors(s: Site, c: Connectivity) -> list[Site]:
    """The 4 or 8 neighbors of a site, in deterministic N,E,S,W(,diagonals) order."""
    x, y = s
    return [(x + dx, y + dy) for dx, dy in NEIGHBOR_OFFSETS[: c.degree]]


def ball_boundary(center: Site, n: int) -> list[Site]:
    """All sites at sup-norm distance exactly n from center (8n of them for n >= 1)."""
    cx, cy = center
    if n < 0:
        raise ContractViolationError("ball_boundary requires n >= 0")
    if n == 0:
        return [center]
    out: list[Site] = []
    for x in range(cx - n, cx + n + 1):
        out.append((x, cy + n))
        out.append((x, cy - n))
    for y in range(cy - n + 1, cy + n):
        out.append((cx - n, y))
        out.append((cx + n, y))
    return out


@dataclass(frozen=True)
class Region:
    """Closed rectangle of lattice sites [x_min, x_max] x [y_min, y_max]."""

    x_min: int
    x_max: int
    y_min: int
    y_max: int

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ContractViolationError(f"empty region: {self}")

    @property
    def width(self) -> int:
        return self.x_max - self.x_min + 1

    @property
    def height(self) -> int:
        return self.y_max - self.y_min + 1

    @property
    def area(self) -> int:
        return self.width * self.height

    def contains(self, s: Site) -> bool:
        return self.x_min <= s[0] <= self.x_max and self.y_min <= s[1] <= self.y_max

    def contains_region(self, other: "Region") -> bool:
        return (self.x_min <= other.x_min and other.x_max <= self.x_max
                and self.y_min <= other.y_min and other.y_max <= self.y_max)

    def sites(self) -> Iterator[Site]:
        """Deterministic site order: x-major, then y."""
        for x in range(self.x_min, self.x_max + 1):
            for y in range(self.y_min, self.y_max + 1):
                yield (x, y)

    def pad(self, m: int) -> "Region":
        return Region(self.x_min - m, self.x_max + m, self.y_min - m, self.y_max + m)

    def shrink(self, m: int) -> "Region":
        return Region(self.x_min + m, self.x_max - m, self.y_min + m, self.y_max - m)

    def local(self, s: Site) -> tuple[int, int]:
        return (s[0] - self.x_min, s[1] - self.y_min)

    @staticmethod
    def square(n: int) -> "Region":
        """R_n = [1, n]^2."""
        return Region(1, n, 1, n)

    @staticmethod
    def ball(n: int, center: Site = (0, 0)) -> "Region":
        """B(center, n) = center + [-n, n]^2."""
        cx, cy = center
        return Region(cx - n, cx + n, cy - n, cy + n)


@dataclass(frozen=True)
class SpinConfig:
    """Binary opinion field on a region: 0 = closed, 1 = open.

    The values grid is owned by the config and treated as immutable.
    """

    region: Region
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.uint8)
        if vals.shape != (self.region.width, self.region.height):
            raise ContractViolationError(
                f"values shape {vals.shape} does not match region {self.region}")
        if vals.size and vals.max() > 1:
            raise ContractViolationError("spin values must be 0 or 1")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def get(self, s: Site) -> int:
        if not self.region.contains(s):
            raise ContractViolationError(f"site {s} outside region {self.region}")
        ix, iy = self.region.local(s)
        return int(self.values[ix, iy])

    def with_flipped(self, s: Site) -> "SpinConfig":
        ix, iy = self.region.local(s)
        vals = self.values.copy()
        vals[ix, iy] ^= 1
        return SpinConfig(self.region, vals)

    def leq(self, other: "SpinConfig") -> bool:
        """Pointwise partial order on identical regions."""
        if other.region != self.region:
            raise ContractViolationError("partial order requires identical regions")
        return bool(np.all(self.values <= other.values))

    @staticmethod
    def full(region: Region, value: int) -> "SpinConfig":
        return SpinConfig(region, np.full((region.width, region.height), value,
                                          dtype=np.uint8))

    @staticmethod
    def from_sites(region: Region, open_sites: Iterable[Site]) -> "SpinConfig":
        vals = np.zeros((region.width, region.height), dtype=np.uint8)
        for s in open_sites:
            ix, iy = region.local(s)
            vals[ix, iy] = 1
        return SpinConfig(region, vals)

    # -- fixture serialization: header line, then rows top (y_max) to bottom --

    def to_text(self) -> str:
        r = self.region
        lines = [f"region {r.x_min} {r.x_max} {r.y_min} {r.y_max}"]
        for y in range(r.y_max, r.y_min - 1, -1):
            lines.append("".join(str(int(v)) for v in self.values[:, y - r.y_min]))
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str) -> "SpinConfig":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        head = lines[0].split()
        if head[0] != "region" or len(head) != 5:
            raise ContractViolationError("bad SpinConfig header")
        region = Region(*(int(v) for v in head[1:]))
        if len(lines) - 1 != region.height:
            raise ContractViolationError("row count does not match region height")
        vals = np.zeros((region.width, region.height), dtype=np.uint8)
        for i, ln in enumerate(lines[1:]):
            y = region.y_max - i
            if len(ln) != region.width:
                raise ContractViolationError("row length does not match region width")
            vals[:, y - region.y_min] = [int(ch) for ch in ln]
        return SpinConfig(region, vals)


def _mask(region: Region, sites: Iterable[Site]) -> np.ndarray:
    m = np.zeros((region.width, region.height), dtype=np.uint8)
    for s in sites:
        ix, iy = region.local(s)
        m[ix, iy] = 1
    return m


def has_path_masks(cfg: SpinConfig, src_mask: np.ndarray, tgt_mask: np.ndarray,
                   window_mask: np.ndarray, state: int, c: Connectivity) -> bool:
    """Mask-level variant of has_path; masks are grids in cfg's local coords."""
    return bool(_kernels.bfs_has_path(cfg.values, window_mask, src_mask, tgt_mask,
                                      np.uint8(state), c is Connectivity.STAR))


def has_path(cfg: SpinConfig, sources: Iterable[Site], targets: Iterable[Site],
             state: int, c: Connectivity, within: Region) -> bool:
    """True iff a `state`-valued path under adjacency c joins sources to targets
    while staying inside `within`.

    sources and targets must lie inside `within`, which must lie inside the
    configuration's region.  Empty sources or targets give False.
    """
    sources = list(sources)
    targets = list(targets)
    if not sources or not targets:
        return False
    if not cfg.region.contains_region(within):
        raise ContractViolationError("`within` must be contained in cfg.region")
    for s in sources + targets:
        if not within.contains(s):
            raise ContractViolationError(f"site {s} outside `within` {within}")
    reg = cfg.region
    window = np.zeros((reg.width, reg.height), dtype=np.uint8)
    wx0, wy0 = reg.local((within.x_min, within.y_min))
    wx1, wy1 = reg.local((within.x_max, within.y_max))
    window[wx0:wx1 + 1, wy0:wy1 + 1] = 1
    return bool(_kernels.bfs_has_path(cfg.values, window, _mask(reg, sources),
                                      _mask(reg, targets), np.uint8(state),
                                      c is Connectivity.STAR))
