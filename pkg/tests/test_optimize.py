import json
import logging
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from optopulse.bch import compile_linear_beamsplitter
from optopulse.covariance import GaussianState
from optopulse.model import SystemParams
from optopulse.optimize import (ControlVector, OptimizationReport, OptimizationScenario, OptimizerConfig,
                                _Evaluator, _Model, _Parametrization, analytic_seed, cooling_rate, kappa_sweep,
                                objective, optimize)

PERIOD = 2 * math.pi
RESONANT = SystemParams(delta=1.0)
FIG2 = OptimizationScenario(RESONANT, GaussianState.thermal(0, 10), "extended")
SMALL = OptimizerConfig(anneal_batch_size=10, descent_iterations=5)


def random_control(seed, n=8, g_max=2.0, total=0.8 * PERIOD, partial=False):
    return ControlVector.random(n, total, g_max, np.random.default_rng(seed), partial)


# objective -----------------------------------------------------------------------

def test_zero_control_keeps_occupation():
    zero = ControlVector.uniform(30, 0.8 * PERIOD, 10.0)
    assert objective(zero, FIG2) == pytest.approx(10, abs=1e-12)


def test_analytic_seed_cools_fig1_scenario():
    scn = OptimizationScenario(RESONANT, GaussianState.thermal(0, 100))
    seed = ControlVector.from_schedule(analytic_seed(RESONANT, 30, 0.57 * PERIOD, 1.0), 1.0)
    value = objective(seed, scn)
    assert value < 100
    assert value == pytest.approx(98.40564687086881, rel=1e-9)


def test_small_area_swap_on_control_grid_cools():
    area, t1 = 0.01, 5e-4
    swap = compile_linear_beamsplitter(RESONANT, area / t1, t1, 1.0).metadata["swap_time"]
    sched = compile_linear_beamsplitter(RESONANT, area / t1, t1, swap)
    control = ControlVector.from_schedule(sched, area / t1)
    assert objective(control, FIG2) < 1e-2


@given(st.integers(0, 10_000), st.sampled_from(["paper", "extended"]))
def test_occupation_nonnegative_without_decay(seed, bath):
    scn = OptimizationScenario(RESONANT, GaussianState.thermal(0.5, 10), bath)
    assert objective(random_control(seed, g_max=10.0), scn) >= 0


def test_min_over_time_never_exceeds_final():
    control = random_control(3)
    final = objective(control, FIG2)
    lowest = objective(control, replace(FIG2, objective="min_over_time"))
    assert lowest <= final


def test_unphysical_states_score_infinity():
    # the literal bath model relaxes cavity momentum below vacuum
    scn = OptimizationScenario(SystemParams(kappa=1.0), GaussianState.thermal(0, 10))
    assert objective(ControlVector.uniform(10, 3.0, 1.0), scn) == math.inf


def test_scenario_validation():
    with pytest.raises(ValueError):
        OptimizationScenario(RESONANT, GaussianState.vacuum(), objective="mean")
    with pytest.raises(ValueError):
        OptimizationScenario(RESONANT, GaussianState.vacuum(), occupation="coherent")


# control vectors -------------------------------------------------------------------

def test_control_bounds_enforced():
    with pytest.raises(ValueError):
        ControlVector(np.array([2.0 + 0j]), np.array([1.0]), 1.0)
    with pytest.raises(ValueError):
        ControlVector(np.array([0.5j]), np.array([1.0]), 1.0, partial=True)


@given(st.lists(st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False), min_size=1,
                max_size=20), st.floats(1e-3, 1e2))
def test_projection_is_exact(values, g_max):
    control = ControlVector.projected(values, np.ones(len(values)), g_max)
    assert np.all(np.abs(control.values) <= g_max)


def test_control_round_trip():
    control = random_control(5, partial=True)
    assert ControlVector.from_dict(json.loads(json.dumps(control.to_dict()))).to_dict() == control.to_dict()


def test_analytic_seed_layout():
    for n in (30, 300):
        sched = analytic_seed(RESONANT, n, 0.8 * PERIOD, 10.0)
        control = ControlVector.from_schedule(sched, 10.0)
        assert len(control) == n
        assert control.total_time <= 0.8 * PERIOD * (1 + 1e-12)
        assert np.abs(control.values).max() <= 10.0
    with pytest.raises(ValueError):
        analytic_seed(RESONANT, 31, 0.8 * PERIOD, 10.0)


# optimiser ---------------------------------------------------------------------

def test_budget_one_returns_initial_point():
    control = random_control(1)
    rep = optimize(control, FIG2, 1, seed=0)
    assert rep.evaluations == 1
    np.testing.assert_array_equal(rep.best.values, control.values)
    assert rep.best_objective == objective(control, FIG2)


def test_budget_must_be_positive():
    with pytest.raises(ValueError):
        optimize(random_control(1), FIG2, 0, seed=0)


@pytest.mark.parametrize("strategy", ["a", "b", "c", "d"])
def test_strategies_never_worsen_the_start(strategy):
    scn = FIG2.with_kappa(0.5)
    control = random_control(2, g_max=5.0)
    rep = optimize(control, scn, 300, seed=4, strategy=strategy, config=SMALL)
    assert rep.best_objective <= rep.initial_objective
    assert objective(rep.best, scn) <= objective(control, scn)
    assert np.all(np.abs(rep.best.values) <= 5.0)
    assert rep.evaluations <= 301


def test_partial_coupling_stays_real():
    rep = optimize(random_control(3, partial=True), FIG2, 200, seed=1, config=SMALL)
    assert np.all(rep.best.values.imag == 0)


def test_optimizer_is_deterministic():
    control = random_control(7)
    first = optimize(control, FIG2, 400, seed=11, config=SMALL).to_json()
    second = optimize(control, FIG2, 400, seed=11, config=SMALL).to_json()
    assert first == second


def test_worker_count_does_not_change_result():
    control = random_control(8)
    serial = optimize(control, FIG2, 300, seed=3, config=replace(SMALL, workers=1))
    threaded = optimize(control, FIG2, 300, seed=3, config=replace(SMALL, workers=3))
    assert serial.to_json() == threaded.to_json()


def test_descent_history_non_increasing_within_stage():
    rep = optimize(random_control(9), FIG2, 1500, seed=2, config=SMALL)
    by_stage = {}
    for entry in rep.history:
        if entry["kind"] == "descent":
            by_stage.setdefault(entry["stage"], []).append(entry["objective"])
    assert by_stage
    for values in by_stage.values():
        assert all(b <= a for a, b in zip(values, values[1:]))
    kinds = {s["kind"] for s in rep.stages}
    assert kinds == {"descent", "anneal"}


def test_gradient_matches_finer_stencil():
    n, g_max = 10, 3.0
    durations = np.full(n, 0.8 * PERIOD / n)
    model = _Model(FIG2, durations)
    param = _Parametrization("complex", g_max, n)
    h = 1e-6 * g_max
    rng = np.random.default_rng(21)
    for _ in range(20):
        x = param.to_x(ControlVector.random(n, 0.8 * PERIOD, g_max / 2, rng).values)
        coarse = _Evaluator(model, 10_000, 1).gradient(param, x, h)
        fine = _Evaluator(model, 10_000, 1).gradient(param, x, h / 2)
        assert np.linalg.norm(coarse - fine) <= 1e-3 * np.linalg.norm(fine)


def test_batched_perturbations_match_direct_evaluation():
    n, g_max = 6, 3.0
    model = _Model(FIG2, np.full(n, 0.5))
    G = random_control(4, n=n, g_max=g_max, total=3.0).values
    index = np.array([0, 3, 5])
    new = np.array([0.5, 1j, -1 + 0.5j])
    batched = model.perturbed(G, index, new)
    for k, (i, v) in enumerate(zip(index, new)):
        direct = G.copy()
        direct[i] = v
        assert batched[k] == pytest.approx(model.evaluate(direct), rel=1e-10)


def test_report_round_trip_and_version():
    rep = optimize(random_control(6), FIG2, 50, seed=5, config=SMALL)
    data = json.loads(rep.to_json())
    assert OptimizationReport.from_dict(data).to_json() == rep.to_json()
    assert rep.total_time_periods == pytest.approx(0.8)
    data["schema_version"] = 99
    with pytest.raises(ValueError, match="schema version"):
        OptimizationReport.from_dict(data)


def test_kappa_sweep_rows_and_monotonicity_log(caplog):
    with caplog.at_level(logging.INFO, logger="optopulse.optimize"):
        rows = kappa_sweep(FIG2, [0.0, 0.5], ["random_full", "analytic30"], seed=1, budget=150,
                           n_random=8, continuation=True, config=SMALL)
    assert [(r.kappa, r.strategy) for r in rows] == [(0.0, "random_full"), (0.0, "analytic30"),
                                                     (0.5, "random_full"), (0.5, "analytic30")]
    for r in rows:
        assert r.after <= r.before
    assert any("kappa=0.5" in rec.getMessage() for rec in caplog.records)
    with pytest.raises(ValueError):
        kappa_sweep(FIG2, [], ["analytic30"], seed=1, budget=10)


# cooling rate --------------------------------------------------------------------------

def test_cooling_rate_examples():
    assert cooling_rate(10, 10, 3.0) == 0
    assert cooling_rate(100, 2e-7, 0.57 * PERIOD) == pytest.approx(5.6, abs=0.01)
    # required ratio for 1.3 nu over three quarters of a period
    ratio = math.exp(1.3 * 0.75 * PERIOD)
    assert ratio == pytest.approx(459, rel=0.005)
    assert cooling_rate(ratio, 1.0, 0.75 * PERIOD) == pytest.approx(1.3)
    with pytest.raises(ValueError):
        cooling_rate(10, 0, 1.0)
    with pytest.raises(ValueError):
        cooling_rate(10, 1, 0.0)


@settings(max_examples=20)
@given(st.floats(1e-6, 1e6), st.floats(1e-6, 1e6), st.floats(1e-3, 1e3))
def test_cooling_rate_inverts(n0, nf, t):
    assert n0 * math.exp(-cooling_rate(n0, nf, t) * t) == pytest.approx(nf, rel=1e-9)
