"""Shared fixtures and independent oracles.

The periodization identity is the workhorse oracle here: for s <= 1 the
2 pi-periodization of the Fejer weight is identically 1 (all its nonzero
integer Fourier coefficients vanish), so for any 2 pi-periodic g,
int g K_s dtheta equals the plain period average of g.  Towers with
integer heights and spacers produce exactly such integrands, giving an
oracle that never touches the quadrature engine.
"""

import numpy as np
import pytest

from rieszlab import tower


def periodic_mean(g, n: int = 1 << 18) -> float:
    """Average of a 2 pi-periodic function over one period (trapezoid on a
    uniform grid; endpoint excluded by periodicity)."""
    theta = np.arange(n) * (2 * np.pi / n)
    return float(np.mean(g(theta)))


@pytest.fixture
def doubling_tower():
    """p=(2,2), zero spacers: heights 1, 2, 4."""
    spec = tower.CuttingSpec(p=(2, 2), family=tower.Explicit(((0.0, 0.0), (0.0, 0.0))))
    return spec, tower.build_tower(spec, 2)


@pytest.fixture
def random_tower():
    """p=(3,4,5) with fixed random nonnegative spacers."""
    rng = np.random.default_rng(12345)
    rows = tuple(tuple(rng.uniform(0, 1, size=p)) for p in (3, 4, 5))
    spec = tower.CuttingSpec(p=(3, 4, 5), family=tower.Explicit(rows))
    return spec, tower.build_tower(spec, 3)


@pytest.fixture
def integer_tower():
    """p=(3,3) with small integer spacers: integer frequencies throughout."""
    spec = tower.CuttingSpec(p=(3, 3), family=tower.Explicit(((0.0, 1.0, 0.0),
                                                             (1.0, 0.0, 2.0))))
    return spec, tower.build_tower(spec, 2)
