import math

import numpy as np
import pytest
from scipy import special

from mdperc.errors import ContractViolationError, ResourceLimitError
from mdperc.estimators import SeedPlan
from mdperc.events import box_core, box_hull
from mdperc.lattice import Region, SpinConfig
from mdperc.renorm import (AuditTable, Covering, _verify_covering,
                           build_covering, cascade_check, cascade_region,
                           check_ratio_bounds, growth_factor, recursion_audit,
                           scale_sequence, separation_lower_bound,
                           zeta_three_halves)

PLAN = SeedPlan(77, "renorm-tests")


def test_zeta_three_halves_against_scipy():
    assert zeta_three_halves() == pytest.approx(float(special.zeta(1.5, 1)),
                                                abs=1e-9)


def test_scale_recursion_example():
    seq = scale_sequence(10.0, 3)
    assert seq.level(1) == 10.0
    assert seq.level(2) == pytest.approx(20.0 * (1.0 + 1.0 / (6 * math.sqrt(6))),
                                         rel=1e-15)
    assert seq.level(2) == pytest.approx(21.36082763487954, rel=1e-12)


def test_growth_ratio_monotone_to_two():
    ratios = [growth_factor(k) for k in range(1, 40)]
    assert all(r > 2.0 for r in ratios)
    assert all(a > b for a, b in zip(ratios, ratios[1:]))
    assert ratios[-1] == pytest.approx(2.0, abs=1e-2)


@pytest.mark.parametrize("L1", [1.0, 8.0, 100.0])
def test_scale_bounds_k50(L1):
    seq = scale_sequence(L1, 50)
    upper = math.exp(zeta_three_halves())
    for k in range(1, 51):
        dyadic = L1 * 2.0 ** (k - 1)
        assert seq.level(k) >= dyadic * (1 - 1e-9)
        assert seq.level(k) <= upper * dyadic * (1 + 1e-9)


def test_scale_sequence_contracts():
    with pytest.raises(ContractViolationError):
        scale_sequence(0.5, 3)
    with pytest.raises(ContractViolationError):
        scale_sequence(1.0, 0)
    with pytest.raises(ResourceLimitError):
        scale_sequence(1e308, 20)


def test_ratio_bound_displays():
    assert check_ratio_bounds(10 ** 6)


def test_build_covering_nine_core_points():
    seq = scale_sequence(10.0, 2)
    cov = build_covering(seq, 1)
    assert len(cov.core_points) == 9
    assert cov.verified_exhaustively
    assert cov.n_pairs == len(cov.core_points) * len(cov.shell_points)


def test_covering_separation_bound():
    seq = scale_sequence(8.0, 5)
    for k in range(1, 5):
        cov = build_covering(seq, k)
        assert cov.separation >= separation_lower_bound(seq, k)
        assert cov.separation >= 1.0   # shell boxes strictly outside the hull


def test_covering_shell_disjoint_from_hull():
    seq = scale_sequence(8.0, 3)
    cov = build_covering(seq, 2)
    D = box_hull((0, 0), seq.level(3))
    c = math.ceil(seq.level(2))
    for y in cov.shell_points:
        box = Region(y[0], y[0] + c - 1, y[1], y[1] + c - 1)
        for s in (box.x_min, box.x_max):
            assert not (D.x_min <= s <= D.x_max
                        and D.y_min <= box.y_min <= D.y_max)


def test_verifier_catches_broken_covering():
    seq = scale_sequence(10.0, 2)
    cov = build_covering(seq, 1)
    broken = Covering(cov.level, cov.L_small, cov.L_big,
                      cov.core_points[:-1], cov.shell_points, True)
    with pytest.raises(ContractViolationError):
        _verify_covering(broken, 512, None)
    overlapping = Covering(cov.level, cov.L_small, cov.L_big,
                           cov.core_points, cov.shell_points + ((0, 0),), True)
    with pytest.raises(ContractViolationError):
        _verify_covering(overlapping, 512, None)


def test_cascade_trivial_configs():
    seq = scale_sequence(3.0, 2)
    cov = build_covering(seq, 1)
    reg = cascade_region(seq, 1, cov)
    assert cascade_check(SpinConfig.full(reg, 1), seq, 1, cov)
    assert cascade_check(SpinConfig.full(reg, 0), seq, 1, cov)
    with pytest.raises(ContractViolationError):
        cascade_check(SpinConfig.full(Region.square(4), 1), seq, 1, cov)


def test_cascade_random_sample_no_violations():
    seq = scale_sequence(3.0, 2)
    cov = build_covering(seq, 1)
    reg = cascade_region(seq, 1, cov)
    rng = np.random.default_rng(4)
    for _ in range(400):
        cfg = SpinConfig(reg, (rng.random((reg.width, reg.height)) < 0.6
                               ).astype(np.uint8))
        assert cascade_check(cfg, seq, 1, cov)


def test_recursion_audit_degenerate_p():
    t0 = recursion_audit(0.0, 0.0, 1, 3.0, 1, 30, PLAN)
    assert t0.all_satisfied
    assert all(r.p_hat == 0.0 for r in t0.rows)
    t1 = recursion_audit(1.0, 0.0, 1, 3.0, 1, 30, PLAN)
    assert t1.all_satisfied
    assert all(r.p_hat == 1.0 for r in t1.rows)


def test_audit_table_csv():
    table = recursion_audit(0.0, 0.0, 1, 3.0, 1, 10, PLAN)
    text = table.to_csv()
    lines = text.splitlines()
    assert lines[0] == "level,L_k,p_k_hat,p_k_stderr,N_pairs,corr_hat,rhs,satisfied"
    assert len(lines) == 3   # 1 audited level + the terminal estimate row
    assert lines[-1].endswith(",")   # blank `satisfied` on the last level
    assert isinstance(table, AuditTable)
