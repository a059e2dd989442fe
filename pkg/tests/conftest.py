import sys

import numpy as np
import pytest

from firerecon.synthetic import SyntheticRecipe, generate_synthetic, render_goals, standard_views


def synthetic_problem(n=12, azimuths=(0.0, 90.0), width=48, height=36, seed=0, kind="gaussian-plume"):
    """Ground-truth flame plus goal-carrying views."""
    flame = generate_synthetic(SyntheticRecipe(kind=kind, dims=(n, n, n), seed=seed))
    views = render_goals(flame.volume, standard_views(flame.volume, azimuths, width, height), flame.exposure)
    return flame, views


@pytest.fixture
def problem():
    return synthetic_problem()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
