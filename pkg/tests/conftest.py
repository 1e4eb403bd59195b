"""Shared reference implementations used as oracles across test modules."""

import numpy as np
import pytest

from mdperc.graphical import UpdateRule
from mdperc.lattice import NEIGHBOR_OFFSETS


def replay(init_cfg, clocks, sel, rule, tie_to_initial=False, record=None):
    """Pure-python reference evolution (frozen closed boundary).

    Returns (final grid as int array, trajectory) where trajectory lists the
    value of the `record` site after every ring (applied or not).
    """
    reg = clocks.region
    grid = init_cfg.values.astype(int).copy()
    init0 = grid.copy()
    traj = []

    def val(a, b):
        if reg.contains((a, b)):
            la, lb = reg.local((a, b))
            return grid[la, lb]
        return 0

    for i in range(clocks.n_rings):
        x, y = int(clocks.ring_x[i]), int(clocks.ring_y[i])
        if sel.accept[i]:
            lx, ly = reg.local((x, y))
            if rule is UpdateRule.MAJORITY:
                ssum = val(x, y + 1) + val(x + 1, y) + val(x, y - 1) + val(x - 1, y)
                if ssum >= 3:
                    grid[lx, ly] = 1
                elif ssum <= 1:
                    grid[lx, ly] = 0
                elif tie_to_initial:
                    grid[lx, ly] = init0[lx, ly]
            else:
                dx, dy = NEIGHBOR_OFFSETS[int(sel.voter_choice[i])]
                grid[lx, ly] = val(x + dx, y + dy)
        if record is not None:
            la, lb = reg.local(record)
            traj.append(int(grid[la, lb]))
    return grid, traj


@pytest.fixture(scope="session")
def base_rng():
    return np.random.default_rng(20260823)
