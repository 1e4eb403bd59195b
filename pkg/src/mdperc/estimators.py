"""Annealed and quenched Monte Carlo estimation, plus the exhaustive oracle
for influence / revealment / OSSS / Russo identities on tiny instances.

All sampled estimators derive their randomness from a SeedPlan, which keys a
counter-based stream per (replica index, purpose); results are deterministic
and independent of the degree of parallelism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from mdperc import rng as rngmod
from mdperc.errors import ContractViolationError, ResourceLimitError
from mdperc.events import (CrossingSpec, ExplorationVariant, crossing,
                           explore_crossing)
from mdperc.graphical import (ClockField, UpdateRule, UpdateSelection,
                              cone_of_light_past, evolve, padded_exact_window,
                              sample_spins, sample_update_selection,
                              spins_from_uniforms, sample_uniforms)
from mdperc.lattice import Region, Site, SpinConfig, ball_boundary, has_path, Connectivity
from mdperc.parallel import pmap

EventDetector = Callable[[SpinConfig], bool]


@dataclass(frozen=True)
class SeedPlan:
    """Reproducibility token: master seed plus experiment id."""

    master_seed: int
    experiment: str

    def stream(self, *labels) -> np.random.Generator:
        return rngmod.seed_stream(self.master_seed, self.experiment, *labels)

    @property
    def descriptor(self) -> str:
        return rngmod.seed_descriptor(self.master_seed, self.experiment)


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    replicas: int
    seed_descriptor: str = ""

    def ci95(self) -> tuple[float, float]:
        return (self.mean - 1.96 * self.stderr, self.mean + 1.96 * self.stderr)


def wilson_interval(successes: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    if trials == 0:
        return (0.0, 1.0)
    ph = successes / trials
    denom = 1.0 + z * z / trials
    center = (ph + z * z / (2 * trials)) / denom
    half = (z / denom) * math.sqrt(ph * (1 - ph) / trials
                                   + z * z / (4 * trials * trials))
    return (max(0.0, center - half), min(1.0, center + half))


def _binary_estimate(values: np.ndarray, descriptor: str) -> MCEstimate:
    r = len(values)
    mean = float(values.mean())
    sd = float(values.std(ddof=1)) if r > 1 else 0.0
    return MCEstimate(mean, sd / math.sqrt(r), r, descriptor)


def _simulate_replica(core: Region, p: float, t: float, k: int,
                      rule: UpdateRule, rng: np.random.Generator) -> SpinConfig:
    clocks, _ = padded_exact_window(core, k, t, rng)
    sel = sample_update_selection(clocks, rule, rng)
    init = sample_spins(clocks.region, p, rng)
    return evolve(init, clocks, sel, rule).final


def mc_event_probability(event: EventDetector, core: Region, p: float, t: float,
                         k: int, replicas: int, plan: SeedPlan,
                         rule: UpdateRule = UpdateRule.MAJORITY,
                         threads=None) -> MCEstimate:
    """Annealed probability of an event of the time-t configuration.

    Each replica draws a fresh certified window, clocks, selection, and
    initial configuration keyed by its index.
    """
    if not 0.0 <= p <= 1.0:
        raise ContractViolationError("p must lie in [0, 1]")

    def one(i: int) -> float:
        rng = plan.stream("mc", i)
        return float(bool(event(_simulate_replica(core, p, t, k, rule, rng))))

    vals = np.array(pmap(one, range(replicas), threads))
    return _binary_estimate(vals, plan.descriptor)


def quenched_probability(clocks: ClockField, event: EventDetector, p: float,
                         inner: int, rng: np.random.Generator,
                         rule: UpdateRule = UpdateRule.MAJORITY) -> MCEstimate:
    """Conditional probability given the clocks: only (opinions, selection)
    are resampled."""
    vals = np.empty(inner)
    for i in range(inner):
        sel = sample_update_selection(clocks, rule, rng)
        init = sample_spins(clocks.region, p, rng)
        vals[i] = float(bool(event(evolve(init, clocks, sel, rule).final)))
    return _binary_estimate(vals, "")


@dataclass(frozen=True)
class QuenchedVarianceReport:
    estimate: float
    stderr: float
    bound: float
    passed: bool
    outer: int
    inner: int


def variance_of_quenched_mean(p: float, t: float, k: int, n: int, outer: int,
                              inner: int, plan: SeedPlan,
                              rule: UpdateRule = UpdateRule.MAJORITY,
                              threads=None) -> QuenchedVarianceReport:
    """ANOVA-corrected estimate of Var(E[crossing | clocks]) against the 1/k bound.

    The naive between-group variance is biased upward by inner sampling noise;
    subtracting S_within/inner makes the estimator unbiased.
    """
    if outer < 2 or inner < 2:
        raise ContractViolationError("need outer >= 2 and inner >= 2")
    spec = CrossingSpec.open_horizontal(n)
    core = Region.square(n)

    def one(g: int) -> tuple[float, float]:
        rng = plan.stream("outer", g)
        clocks, _ = padded_exact_window(core, k, t, rng)
        hits = np.empty(inner)
        for i in range(inner):
            sel = sample_update_selection(clocks, rule, rng)
            init = sample_spins(clocks.region, p, rng)
            hits[i] = float(crossing(evolve(init, clocks, sel, rule).final, spec))
        return float(hits.mean()), float(hits.var(ddof=1))

    groups = pmap(one, range(outer), threads)
    means = np.array([g[0] for g in groups])
    withins = np.array([g[1] for g in groups])
    centered = (means - means.mean()) ** 2 * (outer / (outer - 1))
    terms = centered - withins / inner
    estimate = float(terms.mean())
    se = float(terms.std(ddof=1)) / math.sqrt(outer)
    bound = 1.0 / k
    return QuenchedVarianceReport(estimate, se, bound,
                                  estimate <= bound + 3 * se, outer, inner)


def _paired_flip_probability(clocks: ClockField, n: int, p: float, inner: int,
                             rng: np.random.Generator, rule: UpdateRule,
                             flip: Callable[[SpinConfig, UpdateSelection],
                                            tuple[SpinConfig, UpdateSelection]]
                             ) -> MCEstimate:
    spec = CrossingSpec.open_horizontal(n)
    vals = np.empty(inner)
    for i in range(inner):
        sel = sample_update_selection(clocks, rule, rng)
        init = sample_spins(clocks.region, p, rng)
        f1 = crossing(evolve(init, clocks, sel, rule).final, spec)
        init2, sel2 = flip(init, sel)
        f2 = crossing(evolve(init2, clocks, sel2, rule).final, spec)
        vals[i] = float(f1 != f2)
    return _binary_estimate(vals, "")


def site_influence(clocks: ClockField, x: Site, n: int, p: float, inner: int,
                   rng: np.random.Generator,
                   rule: UpdateRule = UpdateRule.MAJORITY) -> MCEstimate:
    """Quenched influence of an initial-opinion bit on the crossing function,
    by paired evaluation with the bit flipped."""
    return _paired_flip_probability(
        clocks, n, p, inner, rng, rule,
        lambda init, sel: (init.with_flipped(x), sel))


def clock_influence(clocks: ClockField, ring: tuple[Site, int], n: int, p: float,
                    inner: int, rng: np.random.Generator,
                    rule: UpdateRule = UpdateRule.MAJORITY) -> MCEstimate:
    """Quenched influence of one ring's accept bit on the crossing function."""
    gidx = clocks.ring_index(*ring)
    return _paired_flip_probability(
        clocks, n, p, inner, rng, rule,
        lambda init, sel: (init, sel.with_flipped_accept(gidx)))


@dataclass(frozen=True)
class RevealmentReport:
    per_site: np.ndarray  # (n, n) revealment estimates over R_n, [x-1, y-1]
    sup: float
    sup_ci: tuple[float, float]
    inner: int


def revealment(clocks: ClockField, n: int, p: float, inner: int,
               rng: np.random.Generator,
               variant: ExplorationVariant = ExplorationVariant.OPEN_HORIZONTAL,
               rule: UpdateRule = UpdateRule.MAJORITY,
               guard_radius: Optional[int] = None) -> RevealmentReport:
    """Per-site revealment of the exploration algorithm over fresh
    (opinions, selection, column) draws: the fraction of runs that query the
    site (revealment is accounted at site granularity)."""
    counts = np.zeros((n, n), dtype=np.int64)
    for i in range(inner):
        trace = explore_crossing(clocks, sample_spins(clocks.region, p, rng),
                                 sample_update_selection(clocks, rule, rng),
                                 n, rng, variant, rule, guard_radius)
        for (x, y) in trace.queried:
            if 1 <= x <= n and 1 <= y <= n:
                counts[x - 1, y - 1] += 1
    per_site = counts / inner
    top = int(counts.max())
    return RevealmentReport(per_site, top / inner, wilson_interval(top, inner),
                            inner)


# ---------------------------------------------------------------------------
# Exact exhaustive oracle
# ---------------------------------------------------------------------------

@dataclass
class ExactInstance:
    """Tiny certified instance whose crossing function is enumerated exactly.

    The bit domain is the union of past cones of the crossing square: one
    Bernoulli(p) bit per site opinion plus one Bernoulli(1/k) bit per ring at
    those sites.
    """

    clocks: ClockField
    n: int
    p: float
    max_bits: int = 24
    rule: UpdateRule = UpdateRule.MAJORITY
    guard_radius: Optional[int] = None
    bit_sites: list[Site] = field(init=False)
    ring_bits: list[tuple[Site, int]] = field(init=False)

    def __post_init__(self):
        rect = Region.square(self.n)
        esc = self.clocks.escape_grid()
        for s in rect.sites():
            lx, ly = self.clocks.region.local(s)
            if np.isfinite(esc[lx, ly]):
                raise ContractViolationError("instance window is not certified")
        sites: set[Site] = set()
        for s in rect.sites():
            sites.update(cone_of_light_past(self.clocks, s).members)
        self.bit_sites = sorted(sites)
        self.ring_bits = []
        for s in self.bit_sites:
            for i in range(len(self.clocks.times_at(s))):
                self.ring_bits.append((s, i))
        if self.n_bits > self.max_bits:
            raise ResourceLimitError(
                f"instance needs {self.n_bits} bits, budget {self.max_bits}")
        if self.guard_radius is None:
            self.guard_radius = max(1, math.ceil(math.log(self.n)))

    @property
    def n_bits(self) -> int:
        return len(self.bit_sites) + len(self.ring_bits)

    def bit_probabilities(self, p: Optional[float] = None) -> np.ndarray:
        p = self.p if p is None else p
        qs = [p] * len(self.bit_sites) + [1.0 / self.clocks.k] * len(self.ring_bits)
        return np.array(qs)


@dataclass(frozen=True)
class ExactReport:
    e_f: float
    var_f: float
    site_influences: dict
    clock_influences: dict
    site_revealments: dict
    osss_rhs: float
    dE_dp: float

    @property
    def osss_slack(self) -> float:
        return self.osss_rhs - self.var_f

    @property
    def site_influence_sum(self) -> float:
        return sum(self.site_influences.values())


class _Enumeration:
    """Shared machinery: f and queried/revealed lookups over all assignments."""

    def __init__(self, inst: ExactInstance):
        self.inst = inst
        clocks = inst.clocks
        reg = clocks.region
        n = inst.n
        m = inst.n_bits
        n_site_bits = len(inst.bit_sites)
        site_flat = {s: reg.local(s)[0] * reg.height + reg.local(s)[1]
                     for s in inst.bit_sites}

        # ring schedule restricted to bit sites, in global time order
        rings = []
        for bit_off, (s, i) in enumerate(inst.ring_bits):
            t_i = clocks.times_at(s)[i]
            rings.append((float(t_i), s, n_site_bits + bit_off))
        rings.sort()

        idx = np.arange(1 << m, dtype=np.int64)
        nsites = reg.width * reg.height
        state = np.zeros((1 << m, nsites), dtype=np.uint8)
        for b, s in enumerate(inst.bit_sites):
            state[:, site_flat[s]] = (idx >> b) & 1

        def flat(s: Site) -> int:
            lx, ly = reg.local(s)
            return lx * reg.height + ly

        zero_col = np.zeros(1 << m, dtype=np.uint8)

        def col(s: Site) -> np.ndarray:
            # frozen closed boundary, as in evolve(); only reachable by rings
            # past their cone horizon, which cannot influence the square
            return state[:, flat(s)] if reg.contains(s) else zero_col

        for _, s, bit in rings:
            acc = ((idx >> bit) & 1).astype(bool)
            x, y = s
            total = (col((x, y + 1)).astype(np.int16) + col((x + 1, y))
                     + col((x, y - 1)) + col((x - 1, y)))
            j = flat(s)
            new = np.where(total >= 3, 1, np.where(total <= 1, 0, state[:, j]))
            state[acc, j] = new[acc].astype(np.uint8)

        # final crossing-square code (bit q = site (1 + q // n, 1 + q % n))
        square = list(Region.square(n).sites())
        code = np.zeros(1 << m, dtype=np.int64)
        for q, s in enumerate(square):
            code |= state[:, flat(s)].astype(np.int64) << q

        # crossing + revealment lookups per square code
        ncodes = 1 << (n * n)
        spec = CrossingSpec.open_horizontal(n)
        f_lut = np.zeros(ncodes, dtype=np.uint8)
        reveal_frac = np.zeros((ncodes, m))
        x0s = list(range(math.ceil(n / 3), math.floor(2 * n / 3) + 1))

        guard = False
        for s in square:
            cone = cone_of_light_past(clocks, s)
            if any(abs(a - s[0]) + abs(b - s[1]) >= inst.guard_radius
                   for (a, b) in cone.members):
                guard = True
                break

        # bits revealed when site x is queried: its past cone's site and ring bits
        site_bit_index = {s: b for b, s in enumerate(inst.bit_sites)}
        ring_bits_at: dict[Site, list[int]] = {}
        for off, (s, i) in enumerate(inst.ring_bits):
            ring_bits_at.setdefault(s, []).append(n_site_bits + off)
        reveal_of_query: dict[Site, np.ndarray] = {}
        for s in square:
            mask = np.zeros(m, dtype=bool)
            for y in cone_of_light_past(clocks, s).members:
                if y in site_bit_index:
                    mask[site_bit_index[y]] = True
                    for rb in ring_bits_at.get(y, []):
                        mask[rb] = True
            reveal_of_query[s] = mask

        from mdperc import _kernels
        buf = np.empty(n * n, dtype=np.int64)
        queried_frac = np.zeros((ncodes, n * n))
        for c in range(ncodes):
            vals = np.zeros((n, n), dtype=np.uint8)
            for q, s in enumerate(square):
                vals[s[0] - 1, s[1] - 1] = (c >> q) & 1
            f_lut[c] = 1 if crossing(SpinConfig(Region.square(n), vals),
                                     spec) else 0
            acc_mask = np.zeros(m)
            acc_query = np.zeros(n * n)
            for x0 in x0s:
                if guard:
                    queried = square
                else:
                    qm, _ = _kernels.explore_clusters(vals.copy(), n, x0 - 1,
                                                      False, buf, buf.copy())
                    queried = [s for s in square if qm[s[0] - 1, s[1] - 1]]
                run_mask = np.zeros(m, dtype=bool)
                for s in queried:
                    run_mask |= reveal_of_query[s]
                acc_mask += run_mask
                for q, s in enumerate(square):
                    if s in queried:
                        acc_query[q] += 1.0
            reveal_frac[c] = acc_mask / len(x0s)
            queried_frac[c] = acc_query / len(x0s)

        self.square = square
        self.m = m
        self.n_site_bits = n_site_bits
        self.idx = idx
        self.fvals = f_lut[code]
        self.code = code
        self.ncodes = ncodes
        self.reveal_frac = reveal_frac
        self.queried_frac = queried_frac

    def code_mass(self, p: Optional[float] = None) -> np.ndarray:
        """Probability mass of each final crossing-square code."""
        return np.bincount(self.code, weights=self.weights(p),
                           minlength=self.ncodes)

    def weights(self, p: Optional[float] = None) -> np.ndarray:
        qs = self.inst.bit_probabilities(p)
        w = np.ones(1 << self.m)
        for b, q in enumerate(qs):
            bit = (self.idx >> b) & 1
            w *= np.where(bit == 1, q, 1.0 - q)
        return w

    def expectation(self, p: Optional[float] = None) -> float:
        return float(self.weights(p) @ self.fvals)

    def influences(self, p: Optional[float] = None) -> np.ndarray:
        w = self.weights(p)
        out = np.empty(self.m)
        for b in range(self.m):
            out[b] = float(w @ (self.fvals != self.fvals[self.idx ^ (1 << b)]))
        return out

    def exact_dEdp(self) -> float:
        """Exact polynomial derivative of E_p[f] in the site-bit parameter."""
        p = self.inst.p
        w = self.weights()
        a = np.zeros(1 << self.m, dtype=np.int64)
        for b in range(self.n_site_bits):
            a += (self.idx >> b) & 1
        s = self.n_site_bits
        grad = w * (a / p - (s - a) / (1.0 - p))
        return float(grad @ self.fvals)


def exact_enumerate(inst: ExactInstance) -> ExactReport:
    """Exact product-measure sums over all assignments (and all column choices
    for revealments); no sampling error."""
    if inst.rule is not UpdateRule.MAJORITY:
        raise ContractViolationError("exact oracle supports the majority rule only")
    enum = _Enumeration(inst)
    mass = enum.code_mass()
    e_f = float(enum.weights() @ enum.fvals)
    var_f = e_f - e_f * e_f
    inf = enum.influences()
    delta = mass @ enum.reveal_frac
    osss_rhs = float(delta @ inf)
    site_inf = {s: float(inf[b]) for b, s in enumerate(inst.bit_sites)}
    clock_inf = {rb: float(inf[enum.n_site_bits + off])
                 for off, rb in enumerate(inst.ring_bits)}
    site_rev = {s: float((mass @ enum.queried_frac)[q])
                for q, s in enumerate(enum.square)}
    return ExactReport(e_f, var_f, site_inf, clock_inf, site_rev, osss_rhs,
                       enum.exact_dEdp())


@dataclass(frozen=True)
class RussoCheck:
    finite_difference: float
    influence_sum: float
    gap: float
    gap_half_step: float
    observed_order: float


def russo_check(inst: ExactInstance, h: float = 1e-3) -> RussoCheck:
    """Central finite difference of the exact E_p[f] against the exact sum of
    site influences; the gap must shrink at second order in the step."""
    p = inst.p
    if not 0.0 < h < min(p, 1.0 - p):
        raise ContractViolationError("need 0 < h < min(p, 1-p)")
    enum = _Enumeration(inst)
    inf_sum = float(enum.influences()[:enum.n_site_bits].sum())

    def fd(step: float) -> float:
        return (enum.expectation(p + step) - enum.expectation(p - step)) / (2 * step)

    g1 = abs(fd(h) - inf_sum)
    g2 = abs(fd(h / 2) - inf_sum)
    if g2 <= 1e-15 or g1 <= 1e-15:
        order = np.inf
    else:
        order = math.log2(g1 / g2)
    return RussoCheck(fd(h), inf_sum, g1, g2, order)


# ---------------------------------------------------------------------------
# Threshold location
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BisectionResult:
    p: float
    bracket: tuple[float, float]
    estimate: MCEstimate
    evaluations: int
    flagged: bool


@dataclass(frozen=True)
class ThresholdWindow:
    n: int
    t: float
    alpha: float
    p_lo: float
    p_hi: float
    lo_bracket: tuple[float, float]
    hi_bracket: tuple[float, float]
    flagged: bool

    @property
    def length(self) -> float:
        return self.p_hi - self.p_lo

    @property
    def length_interval(self) -> tuple[float, float]:
        return (max(0.0, self.hi_bracket[0] - self.lo_bracket[1]),
                self.hi_bracket[1] - self.lo_bracket[0])


def coupled_crossing_probability(n: int, t: float, k: int, p: float,
                                 replicas: int, plan: SeedPlan,
                                 rule: UpdateRule = UpdateRule.MAJORITY,
                                 threads=None) -> MCEstimate:
    """Crossing probability with replica randomness shared across p.

    Replica i's clocks, selection, and uniform field depend only on (plan, i),
    so the per-replica indicator is nondecreasing in p and bisection sees a
    noise-monotone curve.
    """
    spec = CrossingSpec.open_horizontal(n)
    core = Region.square(n)

    def one(i: int) -> float:
        rng = plan.stream("coupled", i)
        clocks, _ = padded_exact_window(core, k, t, rng)
        sel = sample_update_selection(clocks, rule, rng)
        uni = sample_uniforms(clocks.region, rng)
        init = spins_from_uniforms(clocks.region, uni, p)
        return float(crossing(evolve(init, clocks, sel, rule).final, spec))

    vals = np.array(pmap(one, range(replicas), threads))
    return _binary_estimate(vals, plan.descriptor)


def bisect_probability(prob: Callable[[float], MCEstimate], target: float,
                       resolution: float = 1e-3, max_evals: int = 40,
                       lo: float = 0.0, hi: float = 1.0) -> BisectionResult:
    """Monotone bisection with CI-aware stopping.

    Refines while the Wilson-style 95% CI at the midpoint separates from the
    target; stops when it straddles, the p-interval is below resolution, or
    the evaluation budget runs out (flagged).
    """
    evals = 0
    est = None
    flagged = False
    while hi - lo > resolution:
        if evals >= max_evals:
            flagged = True
            break
        mid = 0.5 * (lo + hi)
        est = prob(mid)
        evals += 1
        successes = int(round(est.mean * est.replicas))
        ci = wilson_interval(successes, est.replicas)
        if ci[1] < target:
            lo = mid
        elif ci[0] > target:
            hi = mid
        else:
            return BisectionResult(mid, (lo, hi), est, evals, False)
    mid = 0.5 * (lo + hi)
    if est is None:
        est = prob(mid)
        evals += 1
    return BisectionResult(mid, (lo, hi), est, evals, flagged)


def threshold_window(n: int, t: float, alpha: float, k: int, replicas: int,
                     plan: SeedPlan, rule: UpdateRule = UpdateRule.MAJORITY,
                     resolution: float = 1e-3, max_evals: int = 40,
                     threads=None) -> ThresholdWindow:
    """Locate I_alpha(n): the p-interval where the crossing probability lies
    in [alpha, 1 - alpha]."""
    if not 0.0 < alpha < 0.5:
        raise ContractViolationError("alpha must lie in (0, 1/2)")

    def prob(p: float) -> MCEstimate:
        return coupled_crossing_probability(n, t, k, p, replicas, plan, rule,
                                            threads)

    lo = bisect_probability(prob, alpha, resolution, max_evals)
    hi = bisect_probability(prob, 1.0 - alpha, resolution, max_evals)
    return ThresholdWindow(n, t, alpha, lo.p, hi.p, lo.bracket, hi.bracket,
                           lo.flagged or hi.flagged)


def estimate_pc(t: float, n_list: Sequence[int], k: int, replicas: int,
                plan: SeedPlan, rule: UpdateRule = UpdateRule.MAJORITY,
                resolution: float = 1e-3, max_evals: int = 40,
                threads=None) -> list[BisectionResult]:
    """Finite-size critical point surrogate: solve P[H(n,n)] = 1/2 per n.

    The per-n sequence is reported without asserting an extrapolation model.
    """
    out = []
    for n in n_list:
        def prob(p: float, n=n) -> MCEstimate:
            return coupled_crossing_probability(n, t, k, p, replicas, plan,
                                                rule, threads)
        out.append(bisect_probability(prob, 0.5, resolution, max_evals))
    return out


# ---------------------------------------------------------------------------
# One-arm curve and correlation gap
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OneArmRow:
    n: int
    estimate: MCEstimate
    successes: int
    censored: bool


@dataclass(frozen=True)
class OneArmFit:
    rows: list[OneArmRow]
    slope: float
    intercept: float
    r_squared: float


def origin_arm_event(n: int) -> EventDetector:
    """Open path from the origin to the boundary of B(0, n)."""
    boundary = ball_boundary((0, 0), n)
    ball = Region.ball(n)

    def detect(cfg: SpinConfig) -> bool:
        return has_path(cfg, [(0, 0)], boundary, 1,
                        Connectivity.NEAREST_NEIGHBOR, ball)

    return detect


def one_arm_curve(p: float, t: float, k: int, n_list: Sequence[int],
                  replicas: int, plan: SeedPlan,
                  rule: UpdateRule = UpdateRule.MAJORITY,
                  threads=None) -> OneArmFit:
    """One-arm probabilities per radius and the least-squares line of
    log(prob) against n / ln(n); zero-success radii are censored."""
    rows = []
    for n in n_list:
        est = mc_event_probability(origin_arm_event(n), Region.ball(n), p, t,
                                   k, replicas, plan, rule, threads)
        succ = int(round(est.mean * est.replicas))
        rows.append(OneArmRow(n, est, succ, succ == 0))
    xs = np.array([r.n / math.log(r.n) for r in rows if not r.censored])
    ys = np.array([math.log(r.estimate.mean) for r in rows if not r.censored])
    if len(xs) >= 2:
        slope, intercept = np.polyfit(xs, ys, 1)
        resid = ys - (slope * xs + intercept)
        tot = ((ys - ys.mean()) ** 2).sum()
        r2 = 1.0 - float((resid ** 2).sum()) / tot if tot > 0 else 1.0
    else:
        slope, intercept, r2 = math.nan, math.nan, math.nan
    return OneArmFit(rows, float(slope), float(intercept), float(r2))


@dataclass(frozen=True)
class CorrelationGap:
    gap: float
    stderr: float
    p_a: float
    p_b: float
    p_ab: float
    replicas: int

    def ci95(self) -> tuple[float, float]:
        return (self.gap - 1.96 * self.stderr, self.gap + 1.96 * self.stderr)


def correlation_gap(event_a: EventDetector, event_b: EventDetector,
                    core: Region, p: float, t: float, k: int, replicas: int,
                    plan: SeedPlan, rule: UpdateRule = UpdateRule.MAJORITY,
                    threads=None) -> CorrelationGap:
    """|P[A and B] - P[A] P[B]| from shared replicas, with a delta-method CI."""

    def one(i: int) -> tuple[float, float]:
        cfg = _simulate_replica(core, p, t, k, rule, plan.stream("corr", i))
        return float(bool(event_a(cfg))), float(bool(event_b(cfg)))

    pairs = pmap(one, range(replicas), threads)
    a = np.array([x[0] for x in pairs])
    b = np.array([x[1] for x in pairs])
    cov_terms = (a - a.mean()) * (b - b.mean())
    gap = abs(float(cov_terms.mean()))
    se = float(cov_terms.std(ddof=1)) / math.sqrt(replicas)
    return CorrelationGap(gap, se, float(a.mean()), float(b.mean()),
                          float((a * b).mean()), replicas)
