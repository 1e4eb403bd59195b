"""Multiscale apparatus: the scale recursion L_{k+1} = 2(1 + (k+5)^(-3/2)) L_k,
grid coverings of the scale-(k+1) core and shell by scale-k boxes, the cascade
inclusion for annulus-crossing events, and the empirical one-step recursion
audit p_{k+1} <= N_pairs (p_k^2 + corr_k).
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from mdperc.errors import ContractViolationError, ResourceLimitError
from mdperc.estimators import (MCEstimate, SeedPlan, correlation_gap,
                               mc_event_probability)
from mdperc.events import annulus_crossing, box_core, box_hull
from mdperc.graphical import UpdateRule
from mdperc.lattice import Region, Site, SpinConfig


def zeta_three_halves(tol: float = 1e-9) -> float:
    """zeta(3/2) by partial summation with an Euler-Maclaurin tail.

    The tail past N is 2/sqrt(N) + N^(-3/2)/2 + N^(-5/2)/8 + O(N^(-9/2)), so
    N = 10^4 already clears a 1e-9 absolute tolerance with a wide margin.
    """
    n_terms = max(10_000, math.ceil(tol ** (-2.0 / 9.0)))
    ns = np.arange(1, n_terms + 1, dtype=np.float64)
    partial = float(np.sum(ns ** -1.5))
    a = float(n_terms + 1)   # Euler-Maclaurin anchored at the first omitted term
    tail = 2.0 / math.sqrt(a) + 0.5 * a ** -1.5 + 0.125 * a ** -2.5
    return partial + tail


_ZETA_3_2 = zeta_three_halves()


def growth_factor(k: int) -> float:
    """The exact per-level ratio L_{k+1} / L_k."""
    return 2.0 * (1.0 + (k + 5) ** -1.5)


@dataclass(frozen=True)
class ScaleSequence:
    L1: float
    scales: tuple

    @property
    def kmax(self) -> int:
        return len(self.scales)

    def level(self, k: int) -> float:
        if not 1 <= k <= self.kmax:
            raise ContractViolationError(f"level {k} outside 1..{self.kmax}")
        return self.scales[k - 1]


def scale_sequence(L1: float, kmax: int) -> ScaleSequence:
    """The scales L_1..L_kmax, with the dyadic sandwich bounds asserted:
    L1 * 2^(k-1) <= L_k <= e^(zeta(3/2)) * L1 * 2^(k-1)."""
    if L1 < 1.0:
        raise ContractViolationError("L1 must be at least 1")
    if kmax < 1:
        raise ContractViolationError("kmax must be at least 1")
    scales = [float(L1)]
    for k in range(1, kmax):
        nxt = growth_factor(k) * scales[-1]
        if not math.isfinite(nxt):
            raise ResourceLimitError(f"scale L_{k + 1} overflows")
        scales.append(nxt)
    upper_const = math.exp(_ZETA_3_2)
    for k, lk in enumerate(scales, start=1):
        dyadic = L1 * 2.0 ** (k - 1)
        if lk < dyadic * (1.0 - 1e-9) or lk > upper_const * dyadic * (1.0 + 1e-9):
            raise ContractViolationError(f"scale bound violated at level {k}")
    return ScaleSequence(float(L1), tuple(scales))


def check_ratio_bounds(kmax: int = 10 ** 6) -> bool:
    """2(1+(k+5)^(-3/2)) < 3 and 6(1+(k+5)^(-3/2)) < 7 for 1 <= k <= kmax."""
    ks = np.arange(1, kmax + 1, dtype=np.float64)
    eps = (ks + 5.0) ** -1.5
    return bool(np.all(2.0 * (1.0 + eps) < 3.0)
                and np.all(6.0 * (1.0 + eps) < 7.0))


@dataclass(frozen=True)
class Covering:
    level: int
    L_small: float
    L_big: float
    core_points: tuple
    shell_points: tuple
    verified_exhaustively: bool

    @property
    def n_pairs(self) -> int:
        return len(self.core_points) * len(self.shell_points)

    @property
    def separation(self) -> float:
        """Minimum l-infinity distance between any core hull D_{x_i}(L_k)
        and any shell hull D_{y_j}(L_k)."""
        best = math.inf
        for x in self.core_points:
            a = box_hull(x, self.L_small)
            for y in self.shell_points:
                b = box_hull(y, self.L_small)
                dx = max(b.x_min - a.x_max, a.x_min - b.x_max, 0)
                dy = max(b.y_min - a.y_max, a.y_min - b.y_max, 0)
                best = min(best, float(max(dx, dy)))
        return best


def _line_positions(lo: int, hi: int, span: int, step: int) -> list[int]:
    """Box anchor positions so that [pos, pos + span - 1] tiles cover [lo, hi]."""
    out = []
    pos = lo
    last = hi - span + 1
    while pos < last:
        out.append(pos)
        pos += step
    out.append(max(lo, last))
    return out


def _outer_boundary(D: Region) -> list[Site]:
    """Sites outside D with a nearest neighbor inside D."""
    out = []
    for x in range(D.x_min, D.x_max + 1):
        out.append((x, D.y_min - 1))
        out.append((x, D.y_max + 1))
    for y in range(D.y_min, D.y_max + 1):
        out.append((D.x_min - 1, y))
        out.append((D.x_max + 1, y))
    return out


def build_covering(seq: ScaleSequence, k: int,
                   exhaustive_limit: int = 512,
                   sample_rng: Optional[np.random.Generator] = None) -> Covering:
    """Scale-k boxes covering the scale-(k+1) core and ringing its hull.

    Core points sit on a grid of spacing floor(L_k) over C_0(L_{k+1}); shell
    boxes ring the outer boundary of D_0(L_{k+1}) and are placed entirely
    outside it.  All three covering properties are verified constructively
    (exhaustively when ceil(L_{k+1}) <= exhaustive_limit, on random samples
    above).
    """
    if k + 1 > seq.kmax:
        raise ContractViolationError("need k + 1 <= kmax")
    Lk = seq.level(k)
    Lk1 = seq.level(k + 1)
    step = math.floor(Lk)
    if step < 1:
        raise ContractViolationError("degenerate spacing floor(L_k) = 0")
    c = math.ceil(Lk)     # core box side
    C = math.ceil(Lk1)    # side of C_0(L_{k+1})

    line = _line_positions(0, C - 1, c, step)
    core = tuple((x, y) for x in line for y in line)

    D = box_hull((0, 0), Lk1)       # [-C, 2C)^2
    shell = []
    horiz = _line_positions(D.x_min - 1, D.x_max + 1, c, step)
    vert = _line_positions(D.y_min - 1, D.y_max + 1, c, step)
    for x in horiz:
        shell.append((x, D.y_min - c))   # below D
        shell.append((x, D.y_max + 1))   # above D
    for y in vert:
        shell.append((D.x_min - c, y))   # left of D
        shell.append((D.x_max + 1, y))   # right of D
    shell = tuple(shell)

    cov = Covering(k, Lk, Lk1, core, shell, C <= exhaustive_limit)
    _verify_covering(cov, exhaustive_limit, sample_rng)
    return cov


def _covered(site: Site, points, side: int) -> bool:
    x, y = site
    return any(px <= x < px + side and py <= y < py + side
               for (px, py) in points)


def _verify_covering(cov: Covering, exhaustive_limit: int,
                     sample_rng: Optional[np.random.Generator]):
    c = math.ceil(cov.L_small)
    core_region = box_core((0, 0), cov.L_big)
    D = box_hull((0, 0), cov.L_big)

    # (ii) every shell box disjoint from D_0(L_{k+1}) -- exact interval check
    for y in cov.shell_points:
        b = Region(y[0], y[0] + c - 1, y[1], y[1] + c - 1)
        overlap = (b.x_min <= D.x_max and b.x_max >= D.x_min
                   and b.y_min <= D.y_max and b.y_max >= D.y_min)
        if overlap:
            raise ContractViolationError(
                f"shell box at {y} intersects the scale-(k+1) hull")

    boundary = _outer_boundary(D)
    if cov.verified_exhaustively:
        core_sites = list(core_region.sites())
        bdy_sites = boundary
    else:
        rng = sample_rng or np.random.default_rng(0)
        xs = rng.integers(core_region.x_min, core_region.x_max + 1, 4096)
        ys = rng.integers(core_region.y_min, core_region.y_max + 1, 4096)
        core_sites = list(zip(map(int, xs), map(int, ys)))
        idx = rng.integers(0, len(boundary), 4096)
        bdy_sites = [boundary[i] for i in idx]

    # (i) core boxes cover C_0(L_{k+1})
    for s in core_sites:
        if not _covered(s, cov.core_points, c):
            raise ContractViolationError(f"core site {s} not covered")
    # (iii) shell boxes cover the outer boundary of the complement of D
    for s in bdy_sites:
        if not _covered(s, cov.shell_points, c):
            raise ContractViolationError(f"boundary site {s} not covered")


def separation_lower_bound(seq: ScaleSequence, k: int) -> float:
    """The guaranteed gap 2 (k+5)^(-3/2) L_k - 2 between core and shell hulls
    (the -2 absorbs integer rounding of the box corners)."""
    return 2.0 * (k + 5) ** -1.5 * seq.level(k) - 2.0


def cascade_check(cfg: SpinConfig, seq: ScaleSequence, k: int,
                  covering: Optional[Covering] = None) -> bool:
    """True iff the cascade inclusion holds on this configuration:
    A_0(L_{k+1}) implies some A_{x_i}(L_k) together with some A_{y_j}(L_k).
    Vacuously true when A_0(L_{k+1}) fails."""
    cov = covering if covering is not None else build_covering(seq, k)
    Lk1 = seq.level(k + 1)
    if not cfg.region.contains_region(box_hull((0, 0), Lk1).pad(1)):
        raise ContractViolationError(
            "region does not contain D_0(L_{k+1}) plus its outer ring")
    if not annulus_crossing(cfg, (0, 0), Lk1):
        return True
    Lk = seq.level(k)
    hit_core = any(annulus_crossing(cfg, x, Lk) for x in cov.core_points)
    hit_shell = any(annulus_crossing(cfg, y, Lk) for y in cov.shell_points)
    return hit_core and hit_shell


def cascade_region(seq: ScaleSequence, k: int,
                   covering: Optional[Covering] = None) -> Region:
    """Smallest region containing every hull touched by cascade_check."""
    cov = covering if covering is not None else build_covering(seq, k)
    regs = [box_hull((0, 0), seq.level(k + 1))]
    regs += [box_hull(x, seq.level(k)) for x in cov.core_points]
    regs += [box_hull(y, seq.level(k)) for y in cov.shell_points]
    return Region(min(r.x_min for r in regs), max(r.x_max for r in regs),
                  min(r.y_min for r in regs),
                  max(r.y_max for r in regs)).pad(1)


@dataclass(frozen=True)
class AuditRow:
    level: int
    L_k: float
    p_hat: float
    p_stderr: float
    n_pairs: int
    corr_hat: float
    corr_stderr: float
    rhs: float
    rhs_stderr: float
    satisfied: Optional[bool]  # None on the last level (no successor estimate)


@dataclass(frozen=True)
class AuditTable:
    rows: tuple

    @property
    def all_satisfied(self) -> bool:
        return all(r.satisfied for r in self.rows if r.satisfied is not None)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("level,L_k,p_k_hat,p_k_stderr,N_pairs,corr_hat,rhs,satisfied\n")
        for r in self.rows:
            sat = "" if r.satisfied is None else int(r.satisfied)
            buf.write(f"{r.level},{r.L_k:.17g},{r.p_hat:.17g},"
                      f"{r.p_stderr:.17g},{r.n_pairs},{r.corr_hat:.17g},"
                      f"{r.rhs:.17g},{sat}\n")
        return buf.getvalue()


def _nearest_pair(cov: Covering) -> tuple[Site, Site]:
    best = None
    for x in cov.core_points:
        a = box_hull(x, cov.L_small)
        for y in cov.shell_points:
            b = box_hull(y, cov.L_small)
            dx = max(b.x_min - a.x_max, a.x_min - b.x_max, 0)
            dy = max(b.y_min - a.y_max, a.y_min - b.y_max, 0)
            d = max(dx, dy)
            if best is None or d < best[0]:
                best = (d, x, y)
    return best[1], best[2]


def recursion_audit(p: float, t: float, clock_rate: int, L1: float,
                    levels: int, replicas: int, plan: SeedPlan,
                    rule: UpdateRule = UpdateRule.MAJORITY,
                    threads=None) -> AuditTable:
    """Empirical check of the one-step recursion at each scale:

        p_{k+1} <= N_pairs * (p_k^2 + corr_k)

    with p_k the annulus-crossing probability at scale L_k, N_pairs the
    constructed covering's |core| * |shell| pair count, and corr_k the measured
    correlation gap between the closest core/shell pair of scale-k events.
    The comparison is made within 95% confidence on both sides.
    """
    seq = scale_sequence(L1, levels + 1)
    p_hats: list[MCEstimate] = []
    for k in range(1, levels + 2):
        Lk = seq.level(k)
        est = mc_event_probability(
            lambda cfg, L=Lk: annulus_crossing(cfg, (0, 0), L),
            box_hull((0, 0), Lk).pad(1), p, t, clock_rate, replicas, plan,
            rule, threads)
        p_hats.append(est)

    rows = []
    for k in range(1, levels + 1):
        cov = build_covering(seq, k)
        xi, yj = _nearest_pair(cov)
        Lk = seq.level(k)
        hulls = [box_hull(xi, Lk), box_hull(yj, Lk)]
        both = Region(min(r.x_min for r in hulls), max(r.x_max for r in hulls),
                      min(r.y_min for r in hulls),
                      max(r.y_max for r in hulls)).pad(1)
        cg = correlation_gap(
            lambda cfg, x=xi, L=Lk: annulus_crossing(cfg, x, L),
            lambda cfg, y=yj, L=Lk: annulus_crossing(cfg, y, L),
            both, p, t, clock_rate, replicas, plan, rule, threads)
        ph, se = p_hats[k - 1].mean, p_hats[k - 1].stderr
        rhs = cov.n_pairs * (ph * ph + cg.gap)
        rhs_se = cov.n_pairs * math.sqrt((2.0 * ph * se) ** 2
                                         + cg.stderr ** 2)
        nxt = p_hats[k]
        satisfied = (nxt.mean - 1.96 * nxt.stderr) <= rhs + 1.96 * rhs_se
        rows.append(AuditRow(k, Lk, ph, se, cov.n_pairs, cg.gap, cg.stderr,
                             rhs, rhs_se, satisfied))
    last = p_hats[levels]
    rows.append(AuditRow(levels + 1, seq.level(levels + 1), last.mean,
                         last.stderr, 0, math.nan, math.nan, math.nan,
                         math.nan, None))
    return AuditTable(tuple(rows))
