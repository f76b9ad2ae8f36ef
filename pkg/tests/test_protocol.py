"""Bidding loop: best responses, deduction, convergence, logging."""

import io

import numpy as np
import pytest

from energyshare import (
    MarketParams,
    NonConvergenceError,
    ProtocolConfig,
    Prosumer,
    Scenario,
    best_response,
    deduce_neighbor_sum,
    run_protocol,
    settle,
    solve_ne_closed_form,
    stationarity_residuals,
    write_round_log_csv,
)
from energyshare.protocol import UPDATE_SEQUENTIAL

from conftest import random_scenario
from oracles import best_response_by_golden, prosumer_cost_from_bids, relerr

BENCH_BIDS = (206.82857142857142, 337.54285714285714)


def _stationarity_of_response(scenario, i, bids_with_response):
    return stationarity_residuals(scenario, np.asarray(bids_with_response))[i]


def test_best_response_is_fixed_point_at_equilibrium(benchmark):
    b1 = best_response(benchmark.prosumers[0], BENCH_BIDS[1], benchmark.market)
    b2 = best_response(benchmark.prosumers[1], BENCH_BIDS[0], benchmark.market)
    assert b1 == pytest.approx(BENCH_BIDS[0], abs=1e-9)
    assert b2 == pytest.approx(BENCH_BIDS[1], abs=1e-9)


def test_best_response_matches_golden_search(benchmark):
    response = best_response(benchmark.prosumers[0], BENCH_BIDS[1], benchmark.market)
    golden = best_response_by_golden(benchmark, 0, [0.0, BENCH_BIDS[1]])
    assert abs(response - golden) < 1e-4
    assert abs(response - 206.829) < 1e-3
    # stationarity holds far tighter than the search can resolve
    assert _stationarity_of_response(benchmark, 0, [response, BENCH_BIDS[1]]) < 1e-10


def test_best_response_to_zero_neighbors(benchmark):
    response = best_response(benchmark.prosumers[0], 0.0, benchmark.market)
    golden = best_response_by_golden(benchmark, 0, [0.0, 0.0])
    assert abs(response - golden) < 1e-4
    assert _stationarity_of_response(benchmark, 0, [response, 0.0]) < 1e-10
    # responding must beat staying at zero
    assert prosumer_cost_from_bids(benchmark, [response, 0.0], 0) < prosumer_cost_from_bids(
        benchmark, [0.0, 0.0], 0
    )


def test_best_response_stationarity_random():
    rng = np.random.default_rng(61)
    for _ in range(100):
        scenario = random_scenario(int(rng.integers(2, 12)), int(rng.integers(0, 10_000)))
        i = int(rng.integers(scenario.market.n))
        others = rng.uniform(-500, 500, scenario.market.n)
        response = best_response(
            scenario.prosumers[i],
            float(others.sum() - others[i]),
            scenario.market,
        )
        others[i] = response
        assert _stationarity_of_response(scenario, i, others) < 1e-10


def test_best_response_heterogeneous_stationarity():
    rng = np.random.default_rng(71)
    for _ in range(50):
        scenario = random_scenario(int(rng.integers(2, 10)), int(rng.integers(0, 10_000)), het=True)
        slopes = scenario.sensitivities()
        i = int(rng.integers(scenario.market.n))
        others = rng.uniform(-500, 500, scenario.market.n)
        response = best_response(
            scenario.prosumers[i],
            float(others.sum() - others[i]),
            scenario.market,
            others_a_sum=float(slopes.sum() - slopes[i]),
        )
        others[i] = response
        assert _stationarity_of_response(scenario, i, others) < 1e-10


def test_deduce_neighbor_sum_cases():
    market = MarketParams(a=-200.0, n=2)
    assert deduce_neighbor_sum(0.0, 0.0, market) == 0.0
    assert deduce_neighbor_sum(294.0, 1.845, market) == pytest.approx(444.0, abs=1e-9)


def test_deduce_neighbor_sum_round_trip():
    from energyshare import clear_price

    rng = np.random.default_rng(67)
    for _ in range(100):
        n = int(rng.integers(2, 25))
        market = MarketParams(a=float(rng.uniform(-400, -20)), n=n)
        bids = rng.uniform(-800, 800, n)
        price = clear_price(bids, market)
        for i in range(min(n, 3)):
            s = deduce_neighbor_sum(float(bids[i]), price, market)
            true_s = float(bids.sum() - bids[i])
            assert abs(s - true_s) <= 1e-9 * max(1.0, abs(true_s))


def test_protocol_converges_to_closed_form(benchmark):
    result = run_protocol(benchmark)
    closed = solve_ne_closed_form(benchmark)
    assert result.converged
    assert relerr(result.outcome.p, closed.p) < 1e-6
    assert relerr(result.outcome.trade.lambda_c, closed.price) < 1e-6
    assert relerr(result.outcome.bids, closed.bids) < 1e-6


def test_protocol_identical_prosumers_never_trade(identical_pair):
    result = run_protocol(identical_pair)
    assert result.converged
    # symmetry holds in every round: equal bids, so nobody trades
    for log in result.rounds:
        assert np.ptp(log.bids) == 0.0
        trade = settle(log.bids, identical_pair.market)
        assert np.max(np.abs(trade.q)) == 0.0
    assert np.max(np.abs(result.outcome.trade.q)) < 1e-9
    closed = solve_ne_closed_form(identical_pair)
    assert relerr(result.outcome.p, closed.p) < 1e-6


def test_protocol_n50_matches_closed_form():
    scenario = random_scenario(50, 1234)
    result = run_protocol(scenario)
    closed = solve_ne_closed_form(scenario)
    assert relerr(result.outcome.p, closed.p) < 1e-6
    assert relerr(result.outcome.bids, closed.bids) < 1e-6
    assert relerr(result.outcome.trade.lambda_c, closed.price) < 1e-6


def test_protocol_sequential_mode():
    scenario = random_scenario(7, 99)
    result = run_protocol(scenario, ProtocolConfig(update_mode=UPDATE_SEQUENTIAL))
    closed = solve_ne_closed_form(scenario)
    assert relerr(result.outcome.p, closed.p) < 1e-6
    assert relerr(result.outcome.trade.lambda_c, closed.price) < 1e-6


def test_protocol_heterogeneous_scenario():
    scenario = Scenario(
        market=MarketParams(a=-200.0, n=2),
        prosumers=(
            Prosumer(0.003, 0.042, 100.0, -200.0),
            Prosumer(0.006, 0.072, 200.0, -400.0),
        ),
    )
    result = run_protocol(scenario)
    assert result.converged
    assert float(np.max(stationarity_residuals(scenario, result.outcome.bids))) < 1e-6


def test_protocol_non_convergence_carries_history():
    scenario = random_scenario(5, 7)
    with pytest.raises(NonConvergenceError) as info:
        run_protocol(scenario, ProtocolConfig(max_iter=1))
    assert info.value.residual > 0
    assert len(info.value.rounds) == 1
    assert "residual" in str(info.value)


def test_converged_run_satisfies_stationarity():
    for seed in range(10):
        scenario = random_scenario(3 + seed * 5, seed + 600)
        result = run_protocol(scenario)
        assert float(np.max(stationarity_residuals(scenario, result.outcome.bids))) < 1e-6


def test_settlement_conserves_money_every_round():
    for seed in range(8):
        scenario = random_scenario(4 + seed * 6, seed + 700)
        result = run_protocol(scenario)
        for log in result.rounds:
            trade = settle(log.bids, scenario.market)
            assert abs(float(np.sum(trade.q)) * trade.lambda_c) < 1e-9


def test_no_single_bid_deviation_helps_after_convergence():
    deltas = [-1.0, -0.1, -1e-3, 1e-3, 0.1, 1.0]
    for seed in range(5):
        scenario = random_scenario(4, seed + 800)
        result = run_protocol(scenario)
        bids = result.outcome.bids
        base_costs = result.outcome.cost_per_prosumer
        for i in range(scenario.market.n):
            for delta in deltas:
                trial = bids.copy()
                trial[i] += delta
                assert (
                    prosumer_cost_from_bids(scenario, trial, i)
                    >= base_costs[i] - 1e-8
                )


def test_protocol_is_deterministic():
    scenario = random_scenario(9, 4321)
    first = run_protocol(scenario)
    second = run_protocol(scenario)
    assert len(first.rounds) == len(second.rounds)
    for a, b in zip(first.rounds, second.rounds):
        assert a.price == b.price
        assert a.residual == b.residual
        assert np.array_equal(a.bids, b.bids)
        assert np.array_equal(a.neighbor_sums, b.neighbor_sums)


def test_round_log_matches_clearing_rule():
    from energyshare import clear_price

    scenario = random_scenario(6, 31)
    result = run_protocol(scenario)
    for log in result.rounds:
        assert log.price == clear_price(log.bids, scenario.market)
        assert log.residual >= 0.0


def test_round_log_csv_shape(benchmark, tmp_path):
    result = run_protocol(benchmark)
    path = tmp_path / "rounds.csv"
    write_round_log_csv(str(path), result.rounds)
    lines = path.read_text().splitlines()
    assert lines[0] == "round,lambda_c,residual,b_1,b_2"
    assert len(lines) == len(result.rounds) + 1
    last = lines[-1].split(",")
    assert int(last[0]) == len(result.rounds)
    assert float(last[1]) == result.rounds[-1].price
    # values round-trip exactly through the CSV text
    assert float(last[3]) == result.rounds[-1].bids[0]


def test_round_log_csv_to_stream(benchmark):
    result = run_protocol(benchmark)
    buf = io.StringIO()
    write_round_log_csv(buf, result.rounds)
    assert buf.getvalue().startswith("round,lambda_c,residual,b_1,b_2\n")


def test_config_validation():
    with pytest.raises(ValueError):
        ProtocolConfig(update_mode="wild")
    with pytest.raises(ValueError):
        ProtocolConfig(damping=0.0)
    with pytest.raises(ValueError):
        ProtocolConfig(damping=1.5)
    with pytest.raises(ValueError):
        ProtocolConfig(price_tolerance=0.0)
    with pytest.raises(ValueError):
        ProtocolConfig(max_iter=0)
