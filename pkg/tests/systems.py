"""Small synthetic systems shared by unit, integration, and acceptance tests."""

import numpy as np

from hydrocap.hydrothermal import (
    HydroUnit,
    Line,
    Peaker,
    Reservoir,
    SheddingTranche,
    SystemData,
)
from hydrocap.lp import INF


def one_node_thermal(demand_mw=100.0, capacity_mw=200.0, cost=50.0):
    """Single node, single block, peaker only."""
    return SystemData(
        nodes=("N",),
        peakers=(Peaker("P", "N", capacity_mw, cost),),
        hydros=(),
        reservoirs=(),
        lines=(),
        tranches=(SheddingTranche(1.0, 5000.0),),
        demand={"N": np.full((1, 1), demand_mw)},
        block_hours=np.full((1, 1), 168.0),
        inflow_years={},
        beta=0.9,
    )


def hydro_node(
    demand_mw=100.0,
    gamma=2.0,
    flow_cap=400.0,
    capacity_m3=50e6,
    initial_m3=30e6,
    peaker_mw=0.0,
    peaker_cost=50.0,
    shed_cost=5000.0,
    inflows=None,
    weeks=1,
):
    """One node with one reservoir-backed hydro plant, optional peaker."""
    peakers = (Peaker("P", "N", peaker_mw, peaker_cost),) if peaker_mw > 0 else ()
    demand = np.full((weeks, 1), demand_mw, dtype=float)
    inflow_years = {}
    if inflows is not None:
        inflow_years["R"] = np.asarray(inflows, dtype=float)
    return SystemData(
        nodes=("N",),
        peakers=peakers,
        hydros=(HydroUnit("H", "N", "R", gamma, flow_cap),),
        reservoirs=(Reservoir("R", capacity_m3, initial_m3),),
        lines=(),
        tranches=(SheddingTranche(1.0, shed_cost),),
        demand={"N": demand},
        block_hours=np.full((weeks, 1), 168.0),
        inflow_years=inflow_years,
        beta=0.9,
    )


def oracle_system():
    """Criterion-2 fixture: 1 reservoir, 4-week cycle, 3 inflow outcomes per week."""
    weeks = 4
    demand = np.array([[500.0], [600.0], [550.0], [450.0]])
    inflows = np.array(
        [
            [100.0, 120.0, 90.0, 110.0],
            [300.0, 320.0, 280.0, 310.0],
            [500.0, 520.0, 470.0, 510.0],
        ]
    )
    return SystemData(
        nodes=("N",),
        peakers=(Peaker("P", "N", 300.0, 50.0),),
        hydros=(HydroUnit("H", "N", "R", 1.0, 400.0),),
        reservoirs=(Reservoir("R", 500e6, 250e6),),
        lines=(),
        tranches=(SheddingTranche(1.0, 3000.0),),
        demand={"N": demand},
        block_hours=np.full((weeks, 1), 168.0),
        inflow_years={"R": inflows},
        beta=0.9,
    )


def onslow_system(expensive_cost=60.0, cheap_cost=40.0, demand_high=100.0,
                  demand_low=10.0, cheap_cap=60.0):
    """Two-block arbitrage fixture around the pumped-storage pair.

    Block 0 is the high-price block (demand above the cheap plant's capacity,
    so the expensive peaker is marginal); block 1 is cheap. The pump pair can
    move energy from block 1 to block 0 within the stage.
    """
    demand = np.array([[demand_high, demand_low]])
    return SystemData(
        nodes=("N",),
        peakers=(
            Peaker("cheap", "N", cheap_cap, cheap_cost),
            Peaker("exp", "N", 1000.0, expensive_cost),
        ),
        hydros=(
            HydroUnit("Onslow_Gen", "N", "U", 5.417, 276.9),
            HydroUnit("Onslow_Pump", "N", "U", -7.027, 213.5, kind="pump"),
        ),
        reservoirs=(Reservoir("U", 5000e6, 0.0),),
        lines=(),
        tranches=(SheddingTranche(1.0, 10000.0),),
        demand={"N": demand},
        block_hours=np.full((1, 2), 84.0),
        inflow_years={},
        beta=0.9,
    )


def two_node_system(line_cap=1050.0, demand_mw=1800.0):
    """Cheap generation in the south, load in the north, one HVDC-style line."""
    demand = {"S": np.zeros((1, 1)), "N": np.full((1, 1), demand_mw)}
    return SystemData(
        nodes=("S", "N"),
        peakers=(
            Peaker("base", "S", 5000.0, 10.0),
            Peaker("backup", "N", 5000.0, 500.0),
        ),
        hydros=(),
        reservoirs=(),
        lines=(Line("HVDC", "S", "N", line_cap),),
        tranches=(SheddingTranche(1.0, 20000.0),),
        demand=demand,
        block_hours=np.full((1, 1), 168.0),
        inflow_years={},
        beta=0.9,
    )


def enumeration_system():
    """Criterion-3 fixture: 2-week cycle, 1 reservoir, investable peaker."""
    weeks = 2
    demand = np.array([[400.0], [300.0]])
    inflows = np.array([[60.0, 80.0], [260.0, 280.0]])
    return SystemData(
        nodes=("N",),
        peakers=(Peaker("P", "N", 0.0, 60.0),),
        hydros=(HydroUnit("H", "N", "R", 1.0, 250.0),),
        reservoirs=(Reservoir("R", 200e6, 100e6),),
        lines=(),
        tranches=(SheddingTranche(1.0, 2500.0),),
        demand={"N": demand},
        block_hours=np.full((weeks, 1), 168.0),
        inflow_years={"R": inflows},
        beta=0.8,
    )


INF_SPILL = INF
