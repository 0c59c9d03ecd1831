import os
from pathlib import Path

import pytest

from trial_power import Contrast, Margins, StratifiedDesign, TestSpec

CONFIG_DIR = Path(__file__).parent / "configs"
EXAMPLE_CODING = ((0, 0), (1, 0), (0, 1), (1, 1))


def pytest_collection_modifyitems(config, items):
    if os.getenv("TRIAL_POWER_SLOW_TESTS") == "1":
        return
    skip_slow = pytest.mark.skip(reason="set TRIAL_POWER_SLOW_TESTS=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def example_design(per_cell: int, q: int = 1) -> StratifiedDesign:
    """Four strata from two binary factors, three arms, per_cell subjects per cell."""
    return StratifiedDesign(
        cell_counts=tuple((per_cell,) * 3 for _ in range(4)),
        q=q,
        sigma=1.0,
        stratum_coding=EXAMPLE_CODING,
    )


def superiority_test(coeffs, mu, alpha=0.025, label=""):
    return TestSpec(Contrast(tuple(coeffs)), Margins.superiority(), alpha, tuple(mu), label)


@pytest.fixture
def config_dir() -> Path:
    return CONFIG_DIR
