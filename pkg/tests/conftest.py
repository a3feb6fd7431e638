"""Shared desk-scale scenarios used across the solver-level test modules."""

import pytest

from sllb.noise import LevyMeasure
from sllb.solver import SolverConfig
from sllb.spectral import build_grid, field_from_cosines, synthesize


@pytest.fixture(scope="session")
def grid1d():
    return build_grid(1, 8, 16)


@pytest.fixture(scope="session")
def h1d(grid1d):
    """Smooth driving field, |h|_inf about 0.8."""
    return field_from_cosines(grid1d, [((0,), 2, 0.6), ((1,), 0, 0.25)])


@pytest.fixture(scope="session")
def h1d_phys(h1d):
    return synthesize(h1d)


@pytest.fixture(scope="session")
def nu_std():
    return LevyMeasure.from_atoms([(0.5, 0.6), (-0.4, 0.5)])


@pytest.fixture(scope="session")
def m0_std(grid1d):
    return field_from_cosines(
        grid1d, [((0,), 0, 0.4), ((1,), 1, 0.3), ((2,), 2, 0.2)])


def make_cfg(grid, **kw) -> SolverConfig:
    base = dict(grid=grid, T=0.5, dt=2e-3)
    base.update(kw)
    return SolverConfig(**base)
