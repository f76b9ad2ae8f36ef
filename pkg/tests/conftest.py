from pathlib import Path

import pytest

from energyshare import (
    MarketParams,
    MrpProsumer,
    MrpResource,
    MrpScenario,
    Prosumer,
    Scenario,
)
from energyshare.analysis import GeneratorBounds, generate_scenario

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"
BENCH_FILE = str(SCENARIO_DIR / "benchmark.json")
HET_FILE = str(SCENARIO_DIR / "benchmark_heterogeneous.json")
IDENTICAL_FILE = str(SCENARIO_DIR / "identical_pair.json")
MRP_FILE = str(SCENARIO_DIR / "mrp_two_by_two.json")


@pytest.fixture
def benchmark():
    """Two-prosumer reference case used throughout the docs and tests."""
    return Scenario(
        market=MarketParams(a=-200.0, n=2),
        prosumers=(
            Prosumer(c=0.003, d=0.042, demand_reduction=100.0),
            Prosumer(c=0.006, d=0.072, demand_reduction=200.0),
        ),
    )


@pytest.fixture
def identical_pair():
    return Scenario(
        market=MarketParams(a=-200.0, n=2),
        prosumers=(
            Prosumer(c=0.005, d=0.05, demand_reduction=150.0),
            Prosumer(c=0.005, d=0.05, demand_reduction=150.0),
        ),
    )


@pytest.fixture
def mrp_pair():
    """Two prosumers with two resources each; hand-solvable KKT system."""
    return MrpScenario(
        market=MarketParams(a=-200.0, n=2),
        prosumers=(
            MrpProsumer(
                resources=(MrpResource(0.003, 0.02), MrpResource(0.003, 0.04)),
                demand_reduction=100.0,
            ),
            MrpProsumer(
                resources=(MrpResource(0.003, 0.06), MrpResource(0.003, 0.08)),
                demand_reduction=200.0,
            ),
        ),
    )


@pytest.fixture
def stock_bounds():
    return GeneratorBounds()


def random_scenario(n: int, seed: int, het: bool = False) -> Scenario:
    bounds = GeneratorBounds(het_factor=4.0 if het else None)
    return generate_scenario(bounds, n, seed=seed)
