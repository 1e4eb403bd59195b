"""Harris and two-stage graphical constructions with deterministic replay.

A ClockField holds the dense rate-k Poisson ring times on a finite window.
Rings have a canonical global order: sorted by time, ties broken by (x, y)
lexicographic site order.  UpdateSelection entries (accept bits, voter
neighbor choices) correspond positionally to that order.

Out-of-window neighbor reads use a frozen closed (0) boundary; the certified
core reported by `evolve` is the sub-region where this convention provably
never influenced the result, because no past cone reaches the rim.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from mdperc import _kernels
from mdperc.errors import ContractViolationError, ResourceLimitError
from mdperc.lattice import NEIGHBOR_OFFSETS, Connectivity, Region, Site, SpinConfig, neighbors

_EMPTY_TIMES = np.empty(0, dtype=np.float64)


class UpdateRule(enum.Enum):
    MAJORITY = "majority-tie-keep"
    VOTER = "voter"


class ClockField:
    """Per-site sorted Poisson ring times on [0, t] at integer rate k."""

    def __init__(self, region: Region, k: int, t: float,
                 site_times: dict[Site, np.ndarray]):
        if k < 1:
            raise ContractViolationError("rate k must be a positive integer")
        if t < 0:
            raise ContractViolationError("horizon t must be nonnegative")
        self.region = region
        self.k = int(k)
        self.t = float(t)
        self._site_times: dict[Site, np.ndarray] = {}
        for s, times in site_times.items():
            if len(times) == 0:
                continue
            arr = np.sort(np.asarray(times, dtype=np.float64))
            if arr[0] <= 0.0 or arr[-1] > self.t:
                raise ContractViolationError(f"ring times at {s} outside (0, t]")
            if len(arr) > 1 and np.any(np.diff(arr) <= 0):
                raise ContractViolationError(f"ring times at {s} not strictly increasing")
            if not region.contains(s):
                raise ContractViolationError(f"ring site {s} outside region")
            arr.flags.writeable = False
            self._site_times[s] = arr
        self._build_schedule()
        self._escape_grid: Optional[np.ndarray] = None
        self._cone_cache: dict = {}

    def _build_schedule(self):
        xs, ys, ts = [], [], []
        for (x, y), times in self._site_times.items():
            xs.extend([x] * len(times))
            ys.extend([y] * len(times))
            ts.extend(times)
        rx = np.asarray(xs, dtype=np.int64)
        ry = np.asarray(ys, dtype=np.int64)
        rt = np.asarray(ts, dtype=np.float64)
        order = np.lexsort((ry, rx, rt))
        self.ring_x = rx[order]
        self.ring_y = ry[order]
        self.ring_t = rt[order]
        for a in (self.ring_x, self.ring_y, self.ring_t):
            a.flags.writeable = False

    @property
    def n_rings(self) -> int:
        return len(self.ring_t)

    def times_at(self, s: Site) -> np.ndarray:
        return self._site_times.get(s, _EMPTY_TIMES)

    def ring_index(self, s: Site, i: int) -> int:
        """Global schedule index of the i-th (time-sorted) ring at a site."""
        times = self.times_at(s)
        if i < 0 or i >= len(times):
            raise ContractViolationError(f"site {s} has no ring #{i}")
        hits = np.flatnonzero((self.ring_x == s[0]) & (self.ring_y == s[1])
                              & (self.ring_t == times[i]))
        return int(hits[0])

    def escape_grid(self) -> np.ndarray:
        """Per-site first time the past data demand escapes the window (+inf if never)."""
        if self._escape_grid is None:
            reg = self.region
            self._escape_grid = _kernels.escape_times(
                self.ring_x - reg.x_min, self.ring_y - reg.y_min, self.ring_t,
                reg.width, reg.height)
            self._escape_grid.flags.writeable = False
        return self._escape_grid

    def certified_core(self) -> Optional[Region]:
        """Largest uniform shrink of the region free of escaping past cones."""
        esc = self.escape_grid()
        flagged = np.isfinite(esc)
        if not flagged.any():
            return self.region
        ix, iy = np.nonzero(flagged)
        reg = self.region
        depth = np.minimum(np.minimum(ix, reg.width - 1 - ix),
                           np.minimum(iy, reg.height - 1 - iy))
        m = int(depth.max()) + 1
        if 2 * m >= min(reg.width, reg.height):
            return None
        return reg.shrink(m)

    # -- fixture serialization --

    def to_text(self) -> str:
        r = self.region
        lines = [f"clocks {self.k} {self.t!r} {r.x_min} {r.x_max} {r.y_min} {r.y_max}"]
        for s in r.sites():
            times = self.times_at(s)
            if len(times):
                lines.append(f"{s[0]} {s[1]} " + " ".join(f"{v:.17g}" for v in times))
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str) -> "ClockField":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        head = lines[0].split()
        if head[0] != "clocks" or len(head) != 7:
            raise ContractViolationError("bad ClockField header")
        k = int(head[1])
        t = float(head[2])
        region = Region(*(int(v) for v in head[3:]))
        site_times: dict[Site, np.ndarray] = {}
        for ln in lines[1:]:
            toks = ln.split()
            site = (int(toks[0]), int(toks[1]))
            site_times[site] = np.array([float(v) for v in toks[2:]])
        return ClockField(region, k, t, site_times)


@dataclass(frozen=True)
class UpdateSelection:
    """Per-ring accept bits and (voter rule only) neighbor direction choices.

    Arrays align positionally with the ClockField's canonical ring order.
    Directions index N, E, S, W as 0..3.
    """

    accept: np.ndarray
    voter_choice: Optional[np.ndarray] = None

    def __post_init__(self):
        acc = np.ascontiguousarray(self.accept, dtype=np.uint8)
        acc.flags.writeable = False
        object.__setattr__(self, "accept", acc)
        if self.voter_choice is not None:
            vc = np.ascontiguousarray(self.voter_choice, dtype=np.int8)
            if len(vc) != len(acc):
                raise ContractViolationError("voter_choice length mismatch")
            vc.flags.writeable = False
            object.__setattr__(self, "voter_choice", vc)

    def with_flipped_accept(self, i: int) -> "UpdateSelection":
        acc = self.accept.copy()
        acc[i] ^= 1
        return UpdateSelection(acc, self.voter_choice)


@dataclass(frozen=True)
class ConeOfLight:
    apex: Site
    members: frozenset
    truncated: bool

    @property
    def radius(self) -> int:
        ax, ay = self.apex
        return max((max(abs(x - ax), abs(y - ay)) for x, y in self.members), default=0)


@dataclass(frozen=True)
class EvolutionOutcome:
    final: SpinConfig
    applied_updates: int
    certified_core: Optional[Region]


def sample_clock_field(region: Region, k: int, t: float, rng: np.random.Generator,
                       max_rings: int = 200_000_000) -> ClockField:
    """Independent Poisson(k*t) ring counts per site, times i.i.d. uniform on (0, t].

    Sites are visited in the region's deterministic x-major order; counts are
    drawn first, then all times in one block, so replay is exact.
    """
    if k < 1 or t < 0:
        raise ContractViolationError("need k >= 1 and t >= 0")
    if k * t * region.area > max_rings:
        raise ResourceLimitError(
            f"expected ring count {k * t * region.area:.3g} exceeds budget {max_rings}")
    counts = rng.poisson(k * t, size=region.area)
    total = int(counts.sum())
    if total > max_rings:
        raise ResourceLimitError(f"ring count {total} exceeds budget {max_rings}")
    times = t * (1.0 - rng.random(total))
    site_times: dict[Site, np.ndarray] = {}
    if total:
        pos = 0
        for i, s in enumerate(region.sites()):
            c = int(counts[i])
            if c:
                site_times[s] = times[pos:pos + c]
                pos += c
    return ClockField(region, k, t, site_times)


def sample_update_selection(clocks: ClockField, rule: UpdateRule,
                            rng: np.random.Generator) -> UpdateSelection:
    """I.i.d. Bernoulli(1/k) accept bits; voter rule adds uniform direction choices."""
    n = clocks.n_rings
    accept = (rng.random(n) < 1.0 / clocks.k).astype(np.uint8)
    voter_choice = None
    if rule is UpdateRule.VOTER:
        voter_choice = rng.integers(0, 4, size=n).astype(np.int8)
    return UpdateSelection(accept, voter_choice)


def sample_spins(region: Region, p: float, rng: np.random.Generator) -> SpinConfig:
    """I.i.d. Bernoulli(p) opinions (threshold of a uniform grid, for coupling)."""
    return spins_from_uniforms(region, sample_uniforms(region, rng), p)


def sample_uniforms(region: Region, rng: np.random.Generator) -> np.ndarray:
    return rng.random((region.width, region.height))


def spins_from_uniforms(region: Region, uniforms: np.ndarray, p: float) -> SpinConfig:
    return SpinConfig(region, (uniforms < p).astype(np.uint8))


def evolve(init: SpinConfig, clocks: ClockField, sel: UpdateSelection,
           rule: UpdateRule, tie_to_initial: bool = False) -> EvolutionOutcome:
    """Deterministically replay accepted rings in time order.

    tie_to_initial switches the majority tie rule from keeping the current
    value to restoring the time-0 value (the alternative reading of "original
    opinion"); default is the standard current-value convention.
    """
    if init.region != clocks.region:
        raise ContractViolationError("init and clocks regions must match")
    if len(sel.accept) != clocks.n_rings:
        raise ContractViolationError("selection does not match clock field rings")
    if rule is UpdateRule.VOTER and sel.voter_choice is None:
        raise ContractViolationError("voter rule requires voter_choice bits")
    reg = clocks.region
    grid = np.zeros((reg.width + 2, reg.height + 2), dtype=np.uint8)
    grid[1:-1, 1:-1] = init.values
    init_grid = grid.copy()
    rx = (clocks.ring_x - reg.x_min + 1).astype(np.int64)
    ry = (clocks.ring_y - reg.y_min + 1).astype(np.int64)
    vchoice = sel.voter_choice
    if vchoice is None:
        vchoice = np.zeros(clocks.n_rings, dtype=np.int8)
    applied = _kernels.evolve_inplace(grid, init_grid, rx, ry, sel.accept,
                                      0 if rule is UpdateRule.MAJORITY else 1,
                                      vchoice, tie_to_initial)
    final = SpinConfig(reg, grid[1:-1, 1:-1])
    return EvolutionOutcome(final, int(applied), clocks.certified_core())


def cone_of_light_past(clocks: ClockField, x: Site) -> ConeOfLight:
    """Least fixed point of the decreasing-time chain relation at horizon t.

    Membership depends on the clocks only.  If the recursion reaches outside
    the window the cone is truncated and flagged.
    """
    if not clocks.region.contains(x):
        raise ContractViolationError(f"apex {x} outside clock field region")
    cached = clocks._cone_cache.get(("past", x))
    if cached is not None:
        return cached
    region = clocks.region
    members = {x}
    truncated = False
    expanded: dict[Site, float] = {}
    stack: list[tuple[Site, float]] = [(x, clocks.t)]
    while stack:
        y, horizon = stack.pop()
        prev = expanded.get(y, -1.0)
        if horizon <= prev:
            continue
        expanded[y] = horizon
        times = clocks.times_at(y)
        lo = int(np.searchsorted(times, prev, side="right"))
        hi = int(np.searchsorted(times, horizon, side="right"))
        for s in times[lo:hi]:
            for z in neighbors(y, Connectivity.NEAREST_NEIGHBOR):
                members.add(z)
                if region.contains(z):
                    stack.append((z, float(s)))
                else:
                    truncated = True
    cone = ConeOfLight(x, frozenset(members), truncated)
    clocks._cone_cache[("past", x)] = cone
    return cone


def cone_of_light_future(clocks: ClockField, x: Site) -> ConeOfLight:
    """Forward increasing-time chain closure: y is a member iff x is in y's past cone."""
    if not clocks.region.contains(x):
        raise ContractViolationError(f"apex {x} outside clock field region")
    cached = clocks._cone_cache.get(("future", x))
    if cached is not None:
        return cached
    region = clocks.region
    members = {x}
    truncated = False
    best: dict[Site, float] = {x: 0.0}
    stack: list[tuple[Site, float]] = [(x, 0.0)]
    while stack:
        w, a = stack.pop()
        if best.get(w, np.inf) < a:
            continue
        for v in neighbors(w, Connectivity.NEAREST_NEIGHBOR):
            if not region.contains(v):
                truncated = True
                continue
            times = clocks.times_at(v)
            i = int(np.searchsorted(times, a, side="left"))
            if i >= len(times):
                continue
            s = float(times[i])
            if s < best.get(v, np.inf):
                best[v] = s
                members.add(v)
                stack.append((v, s))
    cone = ConeOfLight(x, frozenset(members), truncated)
    clocks._cone_cache[("future", x)] = cone
    return cone


def default_margin_cap(core: Region, k: int, t: float) -> int:
    return 64 * max(1, math.ceil(t * k)) + math.ceil(math.log2(max(2, core.area)))


def padded_exact_window(core: Region, k: int, t: float, rng: np.random.Generator,
                        margin_init: int = 4,
                        margin_cap: Optional[int] = None) -> tuple[ClockField, int]:
    """Sample clocks on a padded window large enough to certify the core.

    Grows the margin by sampling clocks for NEW sites only (existing rings are
    never redrawn, so the coupling across growth steps is exact) until no core
    site's past cone reaches the rim.
    """
    if margin_init < 1:
        raise ContractViolationError("margin_init must be >= 1")
    if margin_cap is None:
        margin_cap = default_margin_cap(core, k, t)
    m = margin_init
    clocks = sample_clock_field(core.pad(m), k, t, rng)
    while True:
        esc = clocks.escape_grid()
        cx0, cy0 = clocks.region.local((core.x_min, core.y_min))
        cx1, cy1 = clocks.region.local((core.x_max, core.y_max))
        if not np.isfinite(esc[cx0:cx1 + 1, cy0:cy1 + 1]).any():
            return clocks, m
        m_new = m + margin_init
        if m_new > margin_cap:
            raise ResourceLimitError(
                f"certified margin exceeded cap {margin_cap} for core {core}")
        outer = core.pad(m_new)
        site_times = dict(clocks._site_times)
        counts = []
        new_sites = [s for s in outer.sites() if not clocks.region.contains(s)]
        counts = rng.poisson(k * t, size=len(new_sites))
        total = int(counts.sum())
        times = t * (1.0 - rng.random(total))
        pos = 0
        for s, c in zip(new_sites, counts):
            if c:
                site_times[s] = times[pos:pos + int(c)]
                pos += int(c)
        clocks = ClockField(outer, k, t, site_times)
        m = m_new
