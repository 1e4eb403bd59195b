"""Event detectors: crossings, duality, circuits, arms, annulus crossings,
and the column-exploration algorithm with revealment tracing.
"""

from __future__ import annotations

import dataclasses
import enum
import functools
import io
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from mdperc import _kernels
from mdperc.errors import ContractViolationError
from mdperc.graphical import (ClockField, UpdateRule, UpdateSelection,
                              cone_of_light_past, evolve)
from mdperc.lattice import (Connectivity, Region, Site, SpinConfig,
                            has_path_masks)


class Orientation(enum.Enum):
    HORIZONTAL = "horizontal"
    VERTICAL = "vertical"


@dataclass(frozen=True)
class CrossingSpec:
    n: int
    lam: float = 1.0
    orientation: Orientation = Orientation.HORIZONTAL
    state: int = 1
    connectivity: Connectivity = Connectivity.NEAREST_NEIGHBOR

    def __post_init__(self):
        if self.n < 1 or math.floor(self.lam * self.n) < 1:
            raise ContractViolationError("crossing rectangle is degenerate")

    @property
    def rect(self) -> Region:
        return Region(1, math.floor(self.lam * self.n), 1, self.n)

    @staticmethod
    def open_horizontal(n: int, lam: float = 1.0) -> "CrossingSpec":
        return CrossingSpec(n, lam, Orientation.HORIZONTAL, 1,
                            Connectivity.NEAREST_NEIGHBOR)

    @staticmethod
    def closed_star_vertical(n: int, lam: float = 1.0) -> "CrossingSpec":
        return CrossingSpec(n, lam, Orientation.VERTICAL, 0, Connectivity.STAR)


def _region_masks(cfg_region: Region, rect: Region) -> np.ndarray:
    m = np.zeros((cfg_region.width, cfg_region.height), dtype=np.uint8)
    x0, y0 = cfg_region.local((rect.x_min, rect.y_min))
    x1, y1 = cfg_region.local((rect.x_max, rect.y_max))
    m[x0:x1 + 1, y0:y1 + 1] = 1
    return m


def crossing(cfg: SpinConfig, spec: CrossingSpec) -> bool:
    """Side-to-side path of the spec's state/connectivity confined to the rectangle."""
    rect = spec.rect
    if not cfg.region.contains_region(rect):
        raise ContractViolationError(f"region {cfg.region} does not contain {rect}")
    window = _region_masks(cfg.region, rect)
    if spec.orientation is Orientation.HORIZONTAL:
        src = _region_masks(cfg.region, Region(rect.x_min, rect.x_min,
                                               rect.y_min, rect.y_max))
        tgt = _region_masks(cfg.region, Region(rect.x_max, rect.x_max,
                                               rect.y_min, rect.y_max))
    else:
        src = _region_masks(cfg.region, Region(rect.x_min, rect.x_max,
                                               rect.y_min, rect.y_min))
        tgt = _region_masks(cfg.region, Region(rect.x_min, rect.x_max,
                                               rect.y_max, rect.y_max))
    return has_path_masks(cfg, src, tgt, window, spec.state, spec.connectivity)


def dual_indicator(cfg: SpinConfig, n: int) -> tuple[bool, bool]:
    """(open horizontal NN crossing of R_n, closed vertical star crossing).

    Planar duality makes the two bits complementary on every configuration.
    """
    return (crossing(cfg, CrossingSpec.open_horizontal(n)),
            crossing(cfg, CrossingSpec.closed_star_vertical(n)))


def _ring_mask(cfg_region: Region, center: Site, r: int) -> np.ndarray:
    m = np.zeros((cfg_region.width, cfg_region.height), dtype=np.uint8)
    outer = _region_masks(cfg_region, Region.ball(r, center))
    m[:] = outer
    if r >= 1:
        inner = Region.ball(r - 1, center)
        x0, y0 = cfg_region.local((inner.x_min, inner.y_min))
        x1, y1 = cfg_region.local((inner.x_max, inner.y_max))
        m[x0:x1 + 1, y0:y1 + 1] = 0
    return m


def _radial_path(cfg: SpinConfig, center: Site, r_lo: int, r_hi: int,
                 state: int, conn: Connectivity) -> bool:
    """Path of `state` sites with sup-norm radius in [r_lo, r_hi] joining the
    two boundary rings of the annulus."""
    window = (_region_masks(cfg.region, Region.ball(r_hi, center))
              - _region_masks(cfg.region, Region.ball(r_lo - 1, center)))
    src = _ring_mask(cfg.region, center, r_lo)
    tgt = _ring_mask(cfg.region, center, r_hi)
    return has_path_masks(cfg, src, tgt, window, state, conn)


def _dual_connectivity(c: Connectivity) -> Connectivity:
    return (Connectivity.STAR if c is Connectivity.NEAREST_NEIGHBOR
            else Connectivity.NEAREST_NEIGHBOR)


def circuit_exists(cfg: SpinConfig, m: int, state: int,
                   connectivity: Connectivity) -> bool:
    """Circuit of the given state surrounding B(0, m) inside B(0, 3m) \\ B(0, m).

    Detected through planar duality: the circuit exists iff no radial path of
    the opposite state under the dual adjacency crosses the annulus.
    """
    if m < 1:
        raise ContractViolationError("circuit annulus needs m >= 1")
    if not cfg.region.contains_region(Region.ball(3 * m)):
        raise ContractViolationError("region does not contain B(0, 3m)")
    return not _radial_path(cfg, (0, 0), m + 1, 3 * m, 1 - state,
                            _dual_connectivity(connectivity))


def arm_event(cfg: SpinConfig, r_in: int, r_out: int, state: int,
              connectivity: Connectivity) -> bool:
    """Radial path of the given state from the inner ball's outside rim
    (radius r_in + 1) to radius r_out, confined to the open annulus."""
    if not (0 <= r_in < r_out):
        raise ContractViolationError("need 0 <= r_in < r_out")
    if not cfg.region.contains_region(Region.ball(r_out)):
        raise ContractViolationError("region does not contain B(0, r_out)")
    return _radial_path(cfg, (0, 0), r_in + 1, r_out, state, connectivity)


def arm_radii(n: int) -> tuple[int, int]:
    """The radii of the scale-sqrt(n) arm event: (ceil(n^(1/4)), ceil(n^(1/2)))."""
    return (math.ceil(n ** 0.25), math.ceil(n ** 0.5))


def box_core(x: Site, L: float) -> Region:
    """C_x(L): the sites of [0, ceil(L))^2 + x."""
    c = math.ceil(L)
    return Region(x[0], x[0] + c - 1, x[1], x[1] + c - 1)


def box_hull(x: Site, L: float) -> Region:
    """D_x(L): the sites of [-ceil(L), 2*ceil(L))^2 + x."""
    c = math.ceil(L)
    return Region(x[0] - c, x[0] + 2 * c - 1, x[1] - c, x[1] + 2 * c - 1)


def annulus_crossing(cfg: SpinConfig, x: Site, L: float) -> bool:
    """Open nearest-neighbor path from C_x(L) to the complement of D_x(L).

    The path must end at an OPEN site outside D_x(L) (the sites adjacent to
    D, i.e. the vertex boundary of its complement); reaching the last ring
    inside D is not enough.  A witnessing path can always be truncated at its
    first exit, so the search window is D padded by one ring.
    """
    D = box_hull(x, L)
    ring = D.pad(1)
    if not cfg.region.contains_region(ring):
        raise ContractViolationError(
            "region does not contain D_x(L) plus its outer ring")
    window = _region_masks(cfg.region, ring)
    src = _region_masks(cfg.region, box_core(x, L))
    tgt = window - _region_masks(cfg.region, D)
    return has_path_masks(cfg, src, tgt, window, 1,
                          Connectivity.NEAREST_NEIGHBOR)


@dataclass(frozen=True)
class ExplorationTrace:
    crossing: int
    x0: int
    queried: frozenset
    guard_triggered: int
    clocks: ClockField = dataclasses.field(repr=False)

    @functools.cached_property
    def revealed(self) -> frozenset:
        """Union of the past cones of the queried sites (computed on demand)."""
        out = set()
        for s in self.queried:
            out.update(cone_of_light_past(self.clocks, s).members)
        return frozenset(out)

    def to_csv(self, n: int) -> str:
        buf = io.StringIO()
        buf.write(f"n,x0,guard_triggered,crossing\n"
                  f"{n},{self.x0},{self.guard_triggered},{self.crossing}\n")
        buf.write("site_x,site_y,queried\n")
        for x in range(1, n + 1):
            for y in range(1, n + 1):
                buf.write(f"{x},{y},{1 if (x, y) in self.queried else 0}\n")
        return buf.getvalue()


class ExplorationVariant(enum.Enum):
    OPEN_HORIZONTAL = "open-horizontal"
    CLOSED_STAR_VERTICAL = "closed-star-vertical"


def _require_certified(clocks: ClockField, rect: Region):
    if not clocks.region.contains_region(rect):
        raise ContractViolationError("window does not contain the crossing square")
    esc = clocks.escape_grid()
    x0, y0 = clocks.region.local((rect.x_min, rect.y_min))
    x1, y1 = clocks.region.local((rect.x_max, rect.y_max))
    if np.isfinite(esc[x0:x1 + 1, y0:y1 + 1]).any():
        raise ContractViolationError("window is not certified for the crossing square")


def explore_crossing(clocks: ClockField, init: SpinConfig, sel: UpdateSelection,
                     n: int, rng: np.random.Generator,
                     variant: ExplorationVariant = ExplorationVariant.OPEN_HORIZONTAL,
                     rule: UpdateRule = UpdateRule.MAJORITY,
                     guard_radius: Optional[int] = None) -> ExplorationTrace:
    """Column exploration of the crossing square with revealment accounting.

    Querying a site reveals the initial opinion and ring selection of every
    site in its past cone; `queried` records the query targets, `revealed` the
    union of their cones.  The guard queries the whole square when some past
    cone has l1 radius at least ceil(ln n) (configurable).
    """
    rect = Region.square(n)
    _require_certified(clocks, rect)
    if guard_radius is None:
        guard_radius = max(1, math.ceil(math.log(n)))
    x0 = int(rng.integers(math.ceil(n / 3), math.floor(2 * n / 3) + 1))

    guard_key = ("guard", n, guard_radius)
    guard = clocks._cone_cache.get(guard_key)
    if guard is None and guard_radius > clocks.region.width + clocks.region.height:
        guard = False   # cones live inside the region; the radius is unreachable
    if guard is None:
        guard = False
        for x in rect.sites():
            cone = cone_of_light_past(clocks, x)
            if any(abs(y[0] - x[0]) + abs(y[1] - x[1]) >= guard_radius
                   for y in cone.members):
                guard = True
                break
        clocks._cone_cache[guard_key] = guard

    outcome = evolve(init, clocks, sel, rule)
    if guard:
        queried = frozenset(rect.sites())
        if variant is ExplorationVariant.OPEN_HORIZONTAL:
            cross = crossing(outcome.final, CrossingSpec.open_horizontal(n))
        else:
            cross = crossing(outcome.final, CrossingSpec.closed_star_vertical(n))
    else:
        vals = np.empty((n, n), dtype=np.uint8)
        rx0, ry0 = clocks.region.local((1, 1))
        vals[:, :] = outcome.final.values[rx0:rx0 + n, ry0:ry0 + n]
        if variant is ExplorationVariant.OPEN_HORIZONTAL:
            grid = vals
            col_local = x0 - 1
            star = False
        else:
            grid = np.ascontiguousarray((1 - vals).T)
            col_local = x0 - 1
            star = True
        buf = np.empty(n * n, dtype=np.int64)
        qmask, cross = _kernels.explore_clusters(grid, n, col_local, star,
                                                 buf, buf.copy())
        if variant is ExplorationVariant.CLOSED_STAR_VERTICAL:
            qmask = qmask.T
        qx, qy = np.nonzero(qmask)
        queried = frozenset((int(x) + 1, int(y) + 1) for x, y in zip(qx, qy))

    return ExplorationTrace(int(cross), x0, queried, int(guard), clocks)
