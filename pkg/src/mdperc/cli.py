"""Command-line experiment driver.

Each subcommand maps onto one estimator, validates its parameters before any
sampling, and writes `results.csv` plus `manifest.json` (and `traces/*.csv`
for trace-producing commands) under the output directory.  Exit codes:
0 success, 2 validation error, 3 resource limit, 4 flagged/censored results
(results are still written).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from typing import Optional

import numpy as np

import mdperc
from mdperc.errors import ContractViolationError, ResourceLimitError
from mdperc.estimators import (ExactInstance, SeedPlan, correlation_gap,
                               exact_enumerate, estimate_pc,
                               mc_event_probability, one_arm_curve,
                               quenched_probability, revealment, russo_check,
                               site_influence, threshold_window,
                               variance_of_quenched_mean)
from mdperc.events import (CrossingSpec, ExplorationVariant, crossing,
                           explore_crossing)
from mdperc.graphical import (UpdateRule, evolve, padded_exact_window,
                              sample_spins, sample_update_selection)
from mdperc.lattice import Region, SpinConfig
from mdperc.renorm import (build_covering, cascade_check, cascade_region,
                           recursion_audit, scale_sequence)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RESOURCE = 3
EXIT_FLAGGED = 4


class ValidationError(Exception):
    pass


def _fmt(x) -> str:
    if isinstance(x, float):
        return "%.17g" % x
    return str(x)


def _write_csv(path: str, header: list, rows: list):
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _require(cond: bool, message: str):
    if not cond:
        raise ValidationError(message)


def _int_list(text: str) -> list:
    return [int(v) for v in text.split(",") if v.strip()]


def _float_list(text: str) -> list:
    return [float(v) for v in text.split(",") if v.strip()]


_COMMON = {"seed": 0, "threads": "auto", "out": "."}

# Allowed parameter keys and defaults per command; unknown keys are rejected.
_SCHEMAS = {
    "simulate": {"p": 0.5, "t": 1.0, "k": 1, "n": 16, "replicas": 10},
    "crossing-prob": {"p": 0.5, "t": 1.0, "k": 1, "n": 16, "lambda": 1.0,
                      "replicas": 200},
    "quenched": {"p": 0.5, "t": 1.0, "k": 4, "n": 16, "inner": 200},
    "variance-decay": {"p": 0.5, "t": 1.0, "k": 4, "n": 16, "outer": 100,
                       "inner": 100},
    "influence": {"p": 0.5, "t": 1.0, "k": 4, "n": 8, "inner": 200,
                  "x": 4, "y": 4},
    "revealment": {"p": 0.5, "t": 1.0, "k": 4, "n": 16, "inner": 200},
    "exact-oracle": {"p": 0.5, "t": 0.2, "k": 4, "n": 3, "max-bits": 20,
                     "instances": 1, "h": 1e-3},
    "window": {"t": 1.0, "k": 1, "n": 16, "alpha": 0.1, "replicas": 400},
    "pc": {"t": 1.0, "k": 1, "n-list": "16,32", "replicas": 400},
    "one-arm": {"p": 0.5, "t": 1.0, "k": 1, "n-list": "8,16,32",
                "replicas": 400},
    "corr-gap": {"p": 0.5, "t": 1.0, "k": 1, "nloc": 8, "sep": 32,
                 "replicas": 400},
    "renorm": {"p": 0.5, "t": 1.0, "k": 1, "L1": 8.0, "levels": 3,
               "replicas": 200},
    "cascade": {"L1": 3.0, "level": 1, "p-list": "0.3,0.5927,0.8",
                "configs": 10000},
}

_INT_KEYS = {"k", "n", "replicas", "inner", "outer", "x", "y", "max-bits",
             "instances", "nloc", "sep", "levels", "level", "configs"}
_STR_KEYS = {"n-list", "p-list"}


def _validate(command: str, params: dict) -> dict:
    schema = _SCHEMAS[command]
    merged = dict(schema)
    for key, value in params.items():
        _require(key in schema, f"unknown parameter '{key}' for {command}")
        if value is None:
            continue
        if key in _STR_KEYS:
            merged[key] = str(value)
        elif key in _INT_KEYS:
            merged[key] = int(value)
        else:
            merged[key] = float(value)
    for key in ("p",):
        if key in merged:
            _require(0.0 <= merged[key] <= 1.0, f"{key} must lie in [0, 1]")
    if "t" in merged:
        _require(merged["t"] >= 0.0, "t must be nonnegative")
    if "k" in merged:
        _require(merged["k"] >= 1, "k must be a positive integer")
    for key in ("n", "replicas", "inner", "outer", "nloc", "sep", "levels",
                "level", "configs", "instances"):
        if key in merged:
            _require(merged[key] >= 1, f"{key} must be at least 1")
    if "alpha" in merged:
        _require(0.0 < merged["alpha"] < 0.5, "alpha must lie in (0, 1/2)")
    if "lambda" in merged:
        _require(merged["lambda"] > 0.0, "lambda must be positive")
    if "L1" in merged:
        _require(merged["L1"] >= 1.0, "L1 must be at least 1")
    return merged


# ---------------------------------------------------------------------------
# command implementations: each returns (header, rows, descriptors, exit code)
# ---------------------------------------------------------------------------

def _cmd_simulate(ps, plan, threads, out_dir):
    n, p, t, k = ps["n"], ps["p"], ps["t"], ps["k"]
    os.makedirs(os.path.join(out_dir, "traces"), exist_ok=True)
    rows, descs = [], []
    for i in range(ps["replicas"]):
        rng = plan.stream("rep", i)
        clocks, margin = padded_exact_window(Region.square(n), k, t, rng)
        sel = sample_update_selection(clocks, UpdateRule.MAJORITY, rng)
        init = sample_spins(clocks.region, p, rng)
        trace = explore_crossing(clocks, init, sel, n, rng,
                                 ExplorationVariant.OPEN_HORIZONTAL)
        with open(os.path.join(out_dir, "traces", f"trace_{i}.csv"), "w",
                  newline="\n") as fh:
            fh.write(trace.to_csv(n))
        rows.append((i, trace.crossing, trace.x0, trace.guard_triggered,
                     len(trace.queried), len(trace.revealed), margin))
        descs.append(plan.descriptor + f"|rep|{i}")
    header = ["replica", "crossing", "x0", "guard_triggered", "n_queried",
              "n_revealed", "margin"]
    return header, rows, descs, EXIT_OK


def _cmd_crossing_prob(ps, plan, threads, out_dir):
    spec = CrossingSpec.open_horizontal(ps["n"], ps["lambda"])
    est = mc_event_probability(lambda cfg: crossing(cfg, spec), spec.rect,
                               ps["p"], ps["t"], ps["k"], ps["replicas"],
                               plan, threads=threads)
    header = ["n", "lambda", "p", "t", "k", "replicas", "estimate", "stderr"]
    row = (ps["n"], ps["lambda"], ps["p"], ps["t"], ps["k"], est.replicas,
           est.mean, est.stderr)
    return header, [row], [est.seed_descriptor], EXIT_OK


def _cmd_quenched(ps, plan, threads, out_dir):
    n = ps["n"]
    rng = plan.stream("clocks")
    clocks, _ = padded_exact_window(Region.square(n), ps["k"], ps["t"], rng)
    spec = CrossingSpec.open_horizontal(n)
    est = quenched_probability(clocks, lambda cfg: crossing(cfg, spec),
                               ps["p"], ps["inner"], plan.stream("inner"))
    header = ["n", "p", "t", "k", "inner", "estimate", "stderr"]
    row = (n, ps["p"], ps["t"], ps["k"], est.replicas, est.mean, est.stderr)
    return header, [row], [plan.descriptor], EXIT_OK


def _cmd_variance_decay(ps, plan, threads, out_dir):
    rep = variance_of_quenched_mean(ps["p"], ps["t"], ps["k"], ps["n"],
                                    ps["outer"], ps["inner"], plan,
                                    threads=threads)
    header = ["n", "p", "t", "k", "outer", "inner", "estimate", "stderr",
              "bound", "passed"]
    row = (ps["n"], ps["p"], ps["t"], ps["k"], rep.outer, rep.inner,
           rep.estimate, rep.stderr, rep.bound, int(rep.passed))
    return header, [row], [plan.descriptor], EXIT_OK


def _cmd_influence(ps, plan, threads, out_dir):
    n = ps["n"]
    site = (ps["x"], ps["y"])
    _require(1 <= site[0] <= n and 1 <= site[1] <= n,
             "x,y must lie in the crossing square")
    clocks, _ = padded_exact_window(Region.square(n), ps["k"], ps["t"],
                                    plan.stream("clocks"))
    est = site_influence(clocks, site, n, ps["p"], ps["inner"],
                         plan.stream("inner"))
    header = ["n", "p", "t", "k", "x", "y", "inner", "influence", "stderr"]
    row = (n, ps["p"], ps["t"], ps["k"], site[0], site[1], est.replicas,
           est.mean, est.stderr)
    return header, [row], [plan.descriptor], EXIT_OK


def _cmd_revealment(ps, plan, threads, out_dir):
    n = ps["n"]
    clocks, _ = padded_exact_window(Region.square(n), ps["k"], ps["t"],
                                    plan.stream("clocks"))
    rep = revealment(clocks, n, ps["p"], ps["inner"], plan.stream("inner"))
    rows = [(x + 1, y + 1, float(rep.per_site[x, y]))
            for x in range(n) for y in range(n)]
    rows.append((0, 0, rep.sup))
    header = ["site_x", "site_y", "revealment"]
    return header, rows, [plan.descriptor], EXIT_OK


def _cmd_exact_oracle(ps, plan, threads, out_dir):
    n = ps["n"]
    rows, descs = [], []
    for i in range(ps["instances"]):
        rng = plan.stream("inst", i)
        clocks, _ = padded_exact_window(Region.square(n), ps["k"], ps["t"],
                                        rng)
        inst = ExactInstance(clocks, n, ps["p"], max_bits=ps["max-bits"])
        rep = exact_enumerate(inst)
        rc = russo_check(inst, ps["h"])
        rows.append((i, inst.n_bits, rep.e_f, rep.var_f, rep.osss_rhs,
                     rep.osss_slack, rep.dE_dp, rc.influence_sum, rc.gap,
                     rc.observed_order))
        descs.append(plan.descriptor + f"|inst|{i}")
    header = ["instance", "bits", "e_f", "var_f", "osss_rhs", "osss_slack",
              "dE_dp", "influence_sum", "russo_gap", "russo_order"]
    return header, rows, descs, EXIT_OK


def _cmd_window(ps, plan, threads, out_dir):
    win = threshold_window(ps["n"], ps["t"], ps["alpha"], ps["k"],
                           ps["replicas"], plan, threads=threads)
    header = ["n", "t", "alpha", "p_lo", "p_hi", "length", "lo_bracket_lo",
              "lo_bracket_hi", "hi_bracket_lo", "hi_bracket_hi", "flagged"]
    row = (win.n, win.t, win.alpha, win.p_lo, win.p_hi, win.length,
           win.lo_bracket[0], win.lo_bracket[1], win.hi_bracket[0],
           win.hi_bracket[1], int(win.flagged))
    code = EXIT_FLAGGED if win.flagged else EXIT_OK
    return header, [row], [plan.descriptor], code


def _cmd_pc(ps, plan, threads, out_dir):
    n_list = _int_list(ps["n-list"])
    _require(len(n_list) >= 1 and all(n >= 2 for n in n_list),
             "n-list must contain integers >= 2")
    results = estimate_pc(ps["t"], n_list, ps["k"], ps["replicas"], plan,
                          threads=threads)
    rows = [(n, r.p, r.bracket[0], r.bracket[1], r.evaluations,
             int(r.flagged)) for n, r in zip(n_list, results)]
    header = ["n", "p_half", "bracket_lo", "bracket_hi", "evaluations",
              "flagged"]
    code = EXIT_FLAGGED if any(r.flagged for r in results) else EXIT_OK
    return header, rows, [plan.descriptor], code


def _cmd_one_arm(ps, plan, threads, out_dir):
    n_list = _int_list(ps["n-list"])
    _require(len(n_list) >= 1 and all(n >= 2 for n in n_list),
             "n-list must contain integers >= 2")
    fit = one_arm_curve(ps["p"], ps["t"], ps["k"], n_list, ps["replicas"],
                        plan, threads=threads)
    rows = [(r.n, r.estimate.mean, r.estimate.stderr, r.successes,
             int(r.censored)) for r in fit.rows]
    rows.append((0, fit.slope, fit.intercept, 0, 0))
    header = ["n", "estimate", "stderr", "successes", "censored"]
    code = EXIT_FLAGGED if any(r.censored for r in fit.rows) else EXIT_OK
    return header, rows, [plan.descriptor], code


def _cmd_corr_gap(ps, plan, threads, out_dir):
    sep, nloc = ps["sep"], ps["nloc"]
    core = Region(0, sep, 0, nloc - 1)
    a_site, b_site = (0, 0), (sep, 0)
    gap = correlation_gap(lambda cfg: cfg.get(a_site) == 1,
                          lambda cfg: cfg.get(b_site) == 1, core, ps["p"],
                          ps["t"], ps["k"], ps["replicas"], plan,
                          threads=threads)
    header = ["sep", "nloc", "p", "t", "k", "replicas", "gap", "stderr",
              "p_a", "p_b", "p_ab"]
    row = (sep, nloc, ps["p"], ps["t"], ps["k"], gap.replicas, gap.gap,
           gap.stderr, gap.p_a, gap.p_b, gap.p_ab)
    return header, [row], [plan.descriptor], EXIT_OK


def _cmd_renorm(ps, plan, threads, out_dir):
    table = recursion_audit(ps["p"], ps["t"], ps["k"], ps["L1"], ps["levels"],
                            ps["replicas"], plan, threads=threads)
    header = ["level", "L_k", "p_k_hat", "p_k_stderr", "N_pairs", "corr_hat",
              "rhs", "satisfied"]
    rows = [(r.level, r.L_k, r.p_hat, r.p_stderr, r.n_pairs, r.corr_hat,
             r.rhs, "" if r.satisfied is None else int(r.satisfied))
            for r in table.rows]
    return header, rows, [plan.descriptor], EXIT_OK


def _cmd_cascade(ps, plan, threads, out_dir):
    k = ps["level"]
    seq = scale_sequence(ps["L1"], k + 1)
    cov = build_covering(seq, k)
    reg = cascade_region(seq, k, cov)
    rows = []
    for p in _float_list(ps["p-list"]):
        _require(0.0 <= p <= 1.0, "p-list entries must lie in [0, 1]")
        violations = 0
        for i in range(ps["configs"]):
            rng = plan.stream("cfg", "%.17g" % p, i)
            cfg = sample_spins(reg, p, rng)
            if not cascade_check(cfg, seq, k, cov):
                violations += 1
        rows.append((k, p, ps["configs"], violations))
    header = ["level", "p", "configs", "violations"]
    return header, rows, [plan.descriptor], EXIT_OK


_RUNNERS = {
    "simulate": _cmd_simulate,
    "crossing-prob": _cmd_crossing_prob,
    "quenched": _cmd_quenched,
    "variance-decay": _cmd_variance_decay,
    "influence": _cmd_influence,
    "revealment": _cmd_revealment,
    "exact-oracle": _cmd_exact_oracle,
    "window": _cmd_window,
    "pc": _cmd_pc,
    "one-arm": _cmd_one_arm,
    "corr-gap": _cmd_corr_gap,
    "renorm": _cmd_renorm,
    "cascade": _cmd_cascade,
}


def run(command: str, params: dict, master_seed: int, threads,
        out_path: str) -> int:
    """Validate, execute, and persist one experiment."""
    ps = _validate(command, params)
    os.makedirs(out_path, exist_ok=True)
    started = time.time()
    plan = SeedPlan(master_seed, command)
    header, rows, descs, code = _RUNNERS[command](ps, plan, threads, out_path)
    _write_csv(os.path.join(out_path, "results.csv"), header, rows)
    manifest = {
        "config": {"command": command, "parameters": ps,
                   "master_seed": master_seed, "threads": str(threads)},
        "version": mdperc.__version__,
        "started": started,
        "finished": time.time(),
        "seed_descriptors": descs,
    }
    with open(os.path.join(out_path, "manifest.json"), "w",
              newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return code


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mdperc",
        description="Majority-dynamics percolation experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, schema in _SCHEMAS.items():
        sp = sub.add_parser(command)
        sp.add_argument("--config", default=None,
                        help="JSON config (or manifest) file; flags override")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", default=None)
        sp.add_argument("--out", default=None)
        for key in schema:
            sp.add_argument(f"--{key}", default=None)
    return parser


def main(argv: Optional[list] = None) -> int:
    args = _build_parser().parse_args(argv)
    command = args.command
    params: dict = {}
    seed, threads, out = _COMMON["seed"], _COMMON["threads"], _COMMON["out"]
    try:
        if args.config:
            with open(args.config) as fh:
                loaded = json.load(fh)
            if "config" in loaded:   # accept a manifest directly
                loaded = loaded["config"]
            _require(loaded.get("command", command) == command,
                     "config file is for a different command")
            params.update(loaded.get("parameters", {}))
            seed = int(loaded.get("master_seed", seed))
            threads = loaded.get("threads", threads)
            out = loaded.get("out_path", out)
        for key in _SCHEMAS[command]:
            value = getattr(args, key.replace("-", "_"), None)
            if value is not None:
                params[key] = value
        if args.seed is not None:
            seed = args.seed
        if args.threads is not None:
            threads = args.threads
        if args.out is not None:
            out = args.out
        if threads != "auto":
            threads = int(threads)
        return run(command, params, seed, threads, out)
    except (ValidationError, ContractViolationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ResourceLimitError as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE


if __name__ == "__main__":
    sys.exit(main())
