"""Market vocabulary: disutility, clearing, settlement, roles."""

import numpy as np
import pytest

from energyshare import (
    MarketParams,
    Prosumer,
    Scenario,
    classify_roles,
    clear_price,
    disutility,
    marginal_disutility,
    outcome_from_bids,
    settle,
    total_cost,
)
from energyshare.market import ROLE_BUYER, ROLE_NEUTRAL, ROLE_SELLER

from oracles import relerr


def test_disutility_hand_values():
    # f(p) = c p^2 + d p, hand-evaluated two ways
    assert disutility(Prosumer(0.003, 0.042, 100.0), 100.0) == pytest.approx(34.2, abs=1e-12)
    assert disutility(Prosumer(0.006, 0.072, 200.0), 200.0) == pytest.approx(254.4, abs=1e-12)
    # independent second evaluation: c*p*p + d*p via numpy on a grid
    rng = np.random.default_rng(7)
    for _ in range(50):
        c, d = rng.uniform(0.001, 0.01), rng.uniform(0.02, 0.12)
        p = rng.uniform(-500, 1500)
        assert disutility(Prosumer(c, d, 0.0), p) == pytest.approx(
            float(np.polyval([c, d, 0.0], p)), rel=1e-12
        )


def test_disutility_zero_point():
    assert disutility(Prosumer(0.004, 0.03, 50.0), 0.0) == 0.0


def test_marginal_disutility_hand_values():
    assert marginal_disutility(Prosumer(0.003, 0.042, 0.0), 0.0) == pytest.approx(0.042)
    assert marginal_disutility(Prosumer(0.003, 0.042, 0.0), 175.0) == pytest.approx(1.092)
    assert marginal_disutility(Prosumer(0.006, 0.072, 0.0), 125.0) == pytest.approx(1.572)


def test_marginal_disutility_matches_finite_difference():
    rng = np.random.default_rng(11)
    for _ in range(200):
        pro = Prosumer(rng.uniform(0.001, 0.01), rng.uniform(0.02, 0.12), 0.0)
        p = rng.uniform(-1000, 1000)
        h = 1e-6 * max(1.0, abs(p))
        fd = (disutility(pro, p + h) - disutility(pro, p - h)) / (2 * h)
        assert relerr(marginal_disutility(pro, p), fd) < 1e-6


def test_clear_price_published_pair():
    # the worked bid pair (294, 444) clears at 1.845 $/kW
    market = MarketParams(a=-200.0, n=2)
    assert clear_price([294.0, 444.0], market) == pytest.approx(1.845, abs=1e-12)


def test_clear_price_zero_bids():
    market = MarketParams(a=-50.0, n=4)
    assert clear_price([0.0] * 4, market) == 0.0


def test_clear_price_equilibrium_bids():
    market = MarketParams(a=-200.0, n=2)
    assert clear_price([206.829, 337.543], market) == pytest.approx(1.36093, abs=1e-4)


def test_clear_price_rejects_degenerate_sensitivities():
    market = MarketParams(a=-200.0, n=2)
    with pytest.raises(ValueError, match="sum to zero"):
        clear_price([1.0, 2.0], market, a_overrides=[-5.0, 5.0])


def test_clear_price_rejects_wrong_length():
    market = MarketParams(a=-200.0, n=3)
    with pytest.raises(ValueError):
        clear_price([1.0, 2.0], market)


def test_total_cost_without_trade_is_disutility():
    pro = Prosumer(0.004, 0.05, 80.0)
    assert total_cost(pro, 80.0, 0.0, 3.0) == disutility(pro, 80.0)


def test_total_cost_at_equilibrium_point(benchmark):
    # settled costs at the equilibrium allocation
    lam = 1.3609285714285714
    c1 = total_cost(benchmark.prosumers[0], 165.35714285714286, -65.35714285714286, lam)
    c2 = total_cost(benchmark.prosumers[1], 134.64285714285714, 65.35714285714286, lam)
    assert c1 == pytest.approx(0.03, abs=0.01)
    assert c2 == pytest.approx(207.4, abs=0.1)


def test_classify_roles_published_pair():
    market = MarketParams(a=-200.0, n=2)
    assert classify_roles([294.0, 444.0], market) == [ROLE_SELLER, ROLE_BUYER]


def test_classify_roles_identical_bids_all_neutral():
    market = MarketParams(a=-100.0, n=3)
    assert classify_roles([5.0, 5.0, 5.0], market) == [ROLE_NEUTRAL] * 3


def test_classify_roles_equilibrium_bids():
    market = MarketParams(a=-200.0, n=2)
    assert classify_roles([206.829, 337.543], market) == [ROLE_SELLER, ROLE_BUYER]


def test_market_clearing_sums_to_zero_for_random_bids():
    rng = np.random.default_rng(23)
    for _ in range(200):
        n = int(rng.integers(2, 40))
        market = MarketParams(a=float(rng.uniform(-500, -10)), n=n)
        bids = rng.uniform(-1000, 1000, n)
        trade = settle(bids, market)
        assert abs(float(np.sum(trade.q))) < 1e-9
        # budget self-balance follows from clearing
        assert abs(float(np.sum(trade.q)) * trade.lambda_c) < 1e-9
        # supply-demand function ties quantity to price and bid
        assert np.max(np.abs(trade.q - (market.a * trade.lambda_c + bids))) < 1e-9


def test_settlement_heterogeneous_sums_to_zero():
    rng = np.random.default_rng(29)
    for _ in range(100):
        n = int(rng.integers(2, 20))
        market = MarketParams(a=-200.0, n=n)
        a_i = rng.uniform(-800, -20, n)
        bids = rng.uniform(-1000, 1000, n)
        trade = settle(bids, market, a_overrides=a_i)
        assert abs(float(np.sum(trade.q))) < 1e-9
        assert np.max(np.abs(trade.q - (a_i * trade.lambda_c + bids))) < 1e-9


def test_role_matches_quantity_sign():
    rng = np.random.default_rng(31)
    for _ in range(200):
        n = int(rng.integers(2, 30))
        market = MarketParams(a=float(rng.uniform(-400, -10)), n=n)
        bids = rng.uniform(-500, 500, n)
        trade = settle(bids, market)
        mean_bid = float(np.mean(bids))
        for q, b, role in zip(trade.q, bids, classify_roles(bids, market)):
            if role == ROLE_BUYER:
                assert q > 0 and b > mean_bid
            elif role == ROLE_SELLER:
                assert q < 0 and b < mean_bid
            else:
                assert abs(q) <= 1e-12


def test_outcome_energy_balance_and_cost_split(benchmark):
    rng = np.random.default_rng(37)
    for _ in range(100):
        bids = rng.uniform(-400, 400, 2)
        out = outcome_from_bids(benchmark, bids)
        _, _, demand = benchmark.coeff_arrays()
        assert np.max(np.abs(out.p + out.trade.q - demand)) < 1e-9
        assert float(np.sum(out.cost_per_prosumer)) == pytest.approx(
            out.social_disutility, abs=1e-6
        )


def test_prosumer_invariants_enforced():
    with pytest.raises(ValueError, match="c must be > 0"):
        Prosumer(0.0, 0.05, 10.0)
    with pytest.raises(ValueError, match="d must be > 0"):
        Prosumer(0.005, -0.1, 10.0)
    with pytest.raises(ValueError, match="price_sensitivity"):
        Prosumer(0.005, 0.05, 10.0, price_sensitivity=1.0)


def test_market_params_invariants():
    with pytest.raises(ValueError):
        MarketParams(a=0.0, n=2)
    with pytest.raises(ValueError):
        MarketParams(a=-1.0, n=0)


def test_scenario_rejects_mixed_sensitivity_mode():
    market = MarketParams(a=-100.0, n=2)
    with pytest.raises(ValueError, match="all"):
        Scenario(
            market=market,
            prosumers=(
                Prosumer(0.001, 0.1, 1.0, price_sensitivity=-5.0),
                Prosumer(0.001, 0.1, 1.0),
            ),
        )


def test_scenario_rejects_count_mismatch():
    with pytest.raises(ValueError, match="market.n"):
        Scenario(
            market=MarketParams(a=-100.0, n=3),
            prosumers=(Prosumer(0.001, 0.1, 1.0), Prosumer(0.001, 0.1, 1.0)),
        )
