"""Stage LP construction: dispatch, water balance, pumping, investment links."""

import math

import numpy as np
import pytest

from hydrocap.hydrothermal import (
    STORAGE_SCALE,
    HydroUnit,
    Peaker,
    Reservoir,
    SheddingTranche,
    SystemData,
    SystemError_,
    apply_investment_links,
    apply_pumping,
    build_stage,
    inflow_payload,
    initial_state,
)
from hydrocap.investment import Candidate, InvestmentSpec

import systems


def solve_stage(template, state=None, payload=None):
    lp = template.lp
    for dim, row in template.state_fix_rows.items():
        if state and dim in state:
            lp.set_rhs(row, state[dim])
    for row, rhs in (payload or {}).items():
        lp.set_rhs(row, rhs)
    sol = lp.solve()
    assert sol.status == "optimal", sol.status
    return sol


def test_thermal_only_stage_cost():
    system = systems.one_node_thermal(demand_mw=100.0, capacity_mw=200.0, cost=50.0)
    template = build_stage(system, 0)
    sol = solve_stage(template)
    assert sol.objective == pytest.approx(100.0 * 168.0 * 50.0, rel=1e-12)
    assert sol.value("shed_N_l0_b0") == pytest.approx(0.0, abs=1e-9)


def test_hydro_meets_demand_at_zero_cost():
    # 50 m3/s for a week needs 30.24e6 m3; start with 40e6
    system = systems.hydro_node(demand_mw=100.0, gamma=2.0, initial_m3=40e6)
    template = build_stage(system, 0)
    sol = solve_stage(template)
    assert sol.objective == pytest.approx(0.0, abs=1e-7)
    assert sol.value("rel_H_b0") == pytest.approx(100.0 / 2.0, abs=1e-9)


def test_water_balance_arithmetic():
    # x = 10e6 - 3600*168*(1 - 2) = 10.6048e6 m3 when releasing 1 m3/s against
    # a 2 m3/s inflow for one 168 h block
    system = systems.hydro_node(demand_mw=1.0, gamma=1.0, flow_cap=400.0,
                                capacity_m3=50e6, initial_m3=10e6)
    template = build_stage(system, 0)
    payload = inflow_payload(system, 0, {"R": 2.0})
    sol = solve_stage(template, state={"res_R": 10e6 / STORAGE_SCALE}, payload=payload)
    assert sol.value("rel_H_b0") == pytest.approx(1.0, abs=1e-9)
    assert sol.value("spl_H_b0") == pytest.approx(0.0, abs=1e-9)
    assert sol.value("stor_R") * STORAGE_SCALE == pytest.approx(10.6048e6, rel=1e-12)


def test_demand_balance_residual_zero():
    system = systems.oracle_system()
    template = build_stage(system, 1)
    payload = inflow_payload(system, 1, {"R": 120.0})
    sol = solve_stage(template, state=initial_state(system), payload=payload)
    supply = (
        sol.value("gen_P_b0")
        + 1.0 * sol.value("rel_H_b0")
        + sol.value("shed_N_l0_b0")
    )
    demand = system.demand["N"][1, 0]
    assert supply == pytest.approx(demand, abs=1e-6)


def test_water_balance_recomputed_from_primals():
    system = systems.oracle_system()
    template = build_stage(system, 0)
    omega = 90.0
    payload = inflow_payload(system, 0, {"R": omega})
    x0 = 200e6
    sol = solve_stage(template, state={"res_R": x0 / STORAGE_SCALE}, payload=payload)
    outflow = sol.value("rel_H_b0") + sol.value("spl_H_b0")
    expected = x0 - 3600.0 * 168.0 * (outflow - omega)
    got = sol.value("stor_R") * STORAGE_SCALE
    assert got == pytest.approx(expected, abs=1e-6 * max(1.0, abs(expected)))


def test_marginal_water_value_matches_finite_difference():
    system = systems.oracle_system()
    template = build_stage(system, 0)
    payload = inflow_payload(system, 0, {"R": 90.0})
    x0 = 50e6  # scarce water: dual should be active and nondegenerate

    def cost_at(x_m3):
        t = build_stage(system, 0)
        s = solve_stage(t, state={"res_R": x_m3 / STORAGE_SCALE}, payload=payload)
        return s.objective

    sol = solve_stage(template, state={"res_R": x0 / STORAGE_SCALE}, payload=payload)
    dual_per_m3 = sol.dual("water_R") / STORAGE_SCALE
    delta = 1e5  # m3
    fd = (cost_at(x0 + delta) - cost_at(x0 - delta)) / (2 * delta)
    assert fd != 0.0
    assert dual_per_m3 == pytest.approx(fd, rel=1e-4)


def test_expensive_shedding_stays_zero():
    system = systems.oracle_system()
    template = build_stage(system, 2)
    payload = inflow_payload(system, 2, {"R": 470.0})
    sol = solve_stage(template, state=initial_state(system), payload=payload)
    assert sol.value("shed_N_l0_b0") == pytest.approx(0.0, abs=1e-9)


def test_week_out_of_range():
    with pytest.raises(SystemError_):
        build_stage(systems.one_node_thermal(), 3)


def test_validation_rejects_bad_block_hours():
    with pytest.raises(SystemError_, match="week 0"):
        systems.SystemData(
            nodes=("N",),
            peakers=(Peaker("P", "N", 10.0, 5.0),),
            hydros=(),
            reservoirs=(),
            lines=(),
            tranches=(SheddingTranche(1.0, 100.0),),
            demand={"N": np.full((1, 2), 5.0)},
            block_hours=np.array([[100.0, 67.0]]),
            inflow_years={},
            beta=0.9,
        )


def test_validation_rejects_negative_gamma_generator():
    with pytest.raises(SystemError_, match="only permitted for pumps"):
        systems.hydro_node().__class__(
            nodes=("N",),
            peakers=(),
            hydros=(HydroUnit("H", "N", "R", -1.0, 10.0),),
            reservoirs=(Reservoir("R", 1e6, 0.5e6),),
            lines=(),
            tranches=(SheddingTranche(1.0, 100.0),),
            demand={"N": np.zeros((1, 1))},
            block_hours=np.full((1, 1), 168.0),
            inflow_years={},
            beta=0.9,
        )


# -- pumping ---------------------------------------------------------------------


def test_onslow_round_trip_efficiency():
    system = systems.onslow_system()
    gen = next(u for u in system.hydros if u.name == "Onslow_Gen")
    pump = next(u for u in system.hydros if u.name == "Onslow_Pump")
    eff = abs(gen.gamma_mw_per_cumec / pump.gamma_mw_per_cumec)
    assert eff == pytest.approx(0.771, abs=1e-3)


def test_apply_pumping_requires_negative_gamma():
    system = systems.hydro_node()
    template = build_stage(system, 0)
    bad_pump = HydroUnit("PU", "N", "R", 3.0, 10.0, kind="generator")
    with pytest.raises(SystemError_):
        apply_pumping(template, bad_pump, "H", system)


def test_pump_unit_consumes_power_and_raises_storage():
    system = systems.hydro_node(demand_mw=10.0, gamma=1.0, peaker_mw=100.0,
                                peaker_cost=20.0, capacity_m3=80e6, initial_m3=10e6)
    template = build_stage(system, 0)
    pump = HydroUnit("PU", "N", "R", -7.027, 213.5, kind="pump")
    apply_pumping(template, pump, "H", system)
    # pin the pump at 1 m3/s and the generator off
    template.lp.set_bounds("rel_PU_b0", 1.0, 1.0)
    template.lp.set_bounds("rel_H_b0", 0.0, 0.0)
    sol = solve_stage(template, state={"res_R": 10e6 / STORAGE_SCALE})
    # demand 10 MW plus 7.027 MW of pumping load, all on the peaker
    assert sol.value("gen_P_b0") == pytest.approx(10.0 + 7.027, abs=1e-8)
    assert sol.value("stor_R") * STORAGE_SCALE == pytest.approx(
        10e6 + 3600.0 * 168.0, rel=1e-12
    )


def test_pump_off_reduces_to_plain_stage():
    system = systems.hydro_node(demand_mw=50.0, gamma=1.0, peaker_mw=100.0,
                                peaker_cost=20.0)
    base = build_stage(system, 0)
    base_sol = solve_stage(base, state=initial_state(system))
    pumped = build_stage(system, 0)
    pump = HydroUnit("PU", "N", "R", -7.027, 213.5, kind="pump")
    apply_pumping(pumped, pump, "H", system)
    sol = solve_stage(pumped, state=initial_state(system))
    # flat prices: nothing to arbitrage, pump stays off
    assert sol.value("rel_PU_b0") == pytest.approx(0.0, abs=1e-9)
    assert sol.objective == pytest.approx(base_sol.objective, rel=1e-12)


def pump_usage_at_ratio(ratio):
    system = systems.onslow_system(expensive_cost=40.0 * ratio, cheap_cost=40.0)
    template = build_stage(system, 0)
    sol = solve_stage(template, state={"res_U": 0.0})
    return sol.value("rel_Onslow_Pump_b1")


def test_pumped_storage_arbitrage_threshold():
    # worthwhile only when the block price ratio beats 7.027/5.417 ~ 1.2972
    threshold = 7.027 / 5.417
    for ratio in (1.20, 1.28, 1.295):
        assert pump_usage_at_ratio(ratio) == pytest.approx(0.0, abs=1e-9), ratio
    for ratio in (1.299, 1.32, 1.40):
        assert pump_usage_at_ratio(ratio) > 1.0, ratio
    assert 1.295 < threshold < 1.299


# -- investment links -------------------------------------------------------------


def one_peaker_candidate(bound=None):
    return InvestmentSpec(
        candidates=(Candidate("peak", "peaker", 1e6, target="P", upper_bound=bound),),
        beta=0.9,
    )


def test_zero_investment_matches_base_stage():
    system = systems.oracle_system()
    base = build_stage(system, 0)
    linked = apply_investment_links(build_stage(system, 0), system, one_peaker_candidate())
    payload = inflow_payload(system, 0, {"R": 100.0})
    s0 = solve_stage(base, state=initial_state(system), payload=payload)
    state = dict(initial_state(system))
    state["inv_peak"] = 0.0
    s1 = solve_stage(linked, state=state, payload=payload)
    assert s1.objective == pytest.approx(s0.objective, rel=1e-10)


def test_peaker_investment_expands_dispatch():
    system = systems.hydro_node(demand_mw=800.0, gamma=1.0, flow_cap=0.0,
                                peaker_mw=0.0, shed_cost=4000.0)
    # base peaker capacity 0: everything is shed without investment
    system = SystemData(
        nodes=system.nodes,
        peakers=(Peaker("P", "N", 0.0, 55.0),),
        hydros=system.hydros,
        reservoirs=system.reservoirs,
        lines=system.lines,
        tranches=system.tranches,
        demand=system.demand,
        block_hours=system.block_hours,
        inflow_years=system.inflow_years,
        beta=system.beta,
    )
    template = apply_investment_links(build_stage(system, 0), system, one_peaker_candidate())
    state = dict(initial_state(system))
    state["inv_peak"] = 837.0
    sol = solve_stage(template, state=state)
    assert sol.value("gen_P_b0") == pytest.approx(800.0, abs=1e-8)
    state["inv_peak"] = 700.0
    sol = solve_stage(template, state=state)
    assert sol.value("gen_P_b0") == pytest.approx(700.0, abs=1e-8)
    assert sol.value("shed_N_l0_b0") == pytest.approx(100.0, abs=1e-8)


def test_line_investment_expands_flow():
    system = systems.two_node_system(line_cap=1050.0, demand_mw=1800.0)
    spec = InvestmentSpec(
        candidates=(Candidate("hvdc", "transmission-line", 2e6, target="HVDC"),),
        beta=0.9,
    )
    template = apply_investment_links(build_stage(system, 0), system, spec)
    sol = solve_stage(template, state={"inv_hvdc": 643.0})
    assert sol.value("flow_HVDC_b0") == pytest.approx(1693.0, abs=1e-8)
    assert sol.value("gen_backup_b0") == pytest.approx(1800.0 - 1693.0, abs=1e-8)


def test_unknown_investment_target():
    system = systems.one_node_thermal()
    spec = InvestmentSpec(
        candidates=(Candidate("x", "peaker", 1e6, target="NOPE"),), beta=0.9
    )
    with pytest.raises(SystemError_):
        apply_investment_links(build_stage(system, 0), system, spec)


def test_incidence_matrix_signs():
    system = systems.onslow_system()
    A = system.incidence()
    assert A["U"]["Onslow_Gen"] == 1.0
    assert A["U"]["Onslow_Pump"] == -1.0


def test_river_chain_incidence():
    system = SystemData(
        nodes=("N",),
        peakers=(Peaker("P", "N", 500.0, 50.0),),
        hydros=(
            HydroUnit("up", "N", "A", 1.0, 100.0, discharges_to="B"),
            HydroUnit("down", "N", "B", 1.5, 100.0),
        ),
        reservoirs=(Reservoir("A", 10e6, 5e6), Reservoir("B", 10e6, 5e6)),
        lines=(),
        tranches=(SheddingTranche(1.0, 1000.0),),
        demand={"N": np.full((1, 1), 10.0)},
        block_hours=np.full((1, 1), 168.0),
        inflow_years={},
        beta=0.9,
    )
    A = system.incidence()
    assert A["A"]["up"] == 1.0
    assert A["B"]["up"] == -1.0
    assert A["B"]["down"] == 1.0
    # releasing upstream raises the downstream reservoir
    template = build_stage(system, 0)
    template.lp.set_bounds("rel_up_b0", 2.0, 2.0)
    template.lp.set_bounds("rel_down_b0", 0.0, 0.0)
    sol = solve_stage(template, state={"res_A": 5.0, "res_B": 5.0})
    vol = 3600.0 * 168.0 * 2.0 / STORAGE_SCALE
    assert sol.value("stor_A") == pytest.approx(5.0 - vol, rel=1e-12)
    assert sol.value("stor_B") == pytest.approx(5.0 + vol, rel=1e-12)
