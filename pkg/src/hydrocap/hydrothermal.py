"""Weekly hydro-thermal stage LPs built from validated system data.

Each stage covers one week split into load blocks with fixed hour counts.
Dispatch (peakers, hydro conversion, shedding tranches, transport-model
transmission) balances demand per node and block; reservoir storage evolves
through a per-reservoir water balance whose right-hand side carries the
week's inflow. Storage is scaled to millions of cubic meters inside the LP
to keep coefficients well conditioned; all inputs and reported outputs are
plain SI.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .investment import KIND_LINE, KIND_PEAKER, KIND_WIND, build_investment_node
from .lp import INF, LpModel
from .policy_graph import NoiseDistribution, cyclic_graph, with_investment_root
from .stage import StageTemplate

SECONDS_PER_HOUR = 3600.0
HOURS_PER_WEEK = 168.0
STORAGE_SCALE = 1e6  # internal storage unit in m3


class SystemError_(Exception):
    """System data failed validation."""


@dataclass(frozen=True)
class Peaker:
    name: str
    node: str
    capacity_mw: float
    cost_per_mwh: float


@dataclass(frozen=True)
class HydroUnit:
    """Generator (gamma > 0, drains its reservoir) or pump (gamma < 0, fills it)."""

    name: str
    node: str
    reservoir: str
    gamma_mw_per_cumec: float
    flow_capacity_cumecs: float
    kind: str = "generator"
    spill_capacity_cumecs: float = INF
    discharges_to: str = None  # downstream reservoir receiving release + spill
    source: str = None  # pumps only: reservoir drained while pumping
    min_flow_cumecs: float = 0.0

    @property
    def is_pump(self):
        return self.kind == "pump"


@dataclass(frozen=True)
class Reservoir:
    name: str
    capacity_m3: float
    initial_m3: float
    below_min_capacity_m3: float = 0.0
    below_min_penalty_per_m3: float = None


@dataclass(frozen=True)
class Line:
    name: str
    from_node: str
    to_node: str
    capacity_mw: float


@dataclass(frozen=True)
class SheddingTranche:
    fraction: float
    cost_per_mwh: float


@dataclass
class WindStageData:
    """Linearized wind wiring: per-region node attachment, shares, and the
    slope table mu[region][week][block] in MW per MW of national capacity."""

    regions: tuple
    node_of: dict
    share_of: dict
    mu: dict  # region -> ndarray (weeks, blocks)


@dataclass
class SystemData:
    nodes: tuple
    peakers: tuple
    hydros: tuple
    reservoirs: tuple
    lines: tuple
    tranches: tuple
    demand: dict  # node -> ndarray (weeks, blocks) MW
    block_hours: np.ndarray  # (weeks, blocks) hours
    inflow_years: dict  # reservoir -> ndarray (years, weeks) m3/s
    beta: float
    fixed_generation: dict = field(default_factory=dict)  # node -> MW
    wind: WindStageData = None

    def __post_init__(self):
        self.validate()

    @property
    def weeks(self):
        return self.block_hours.shape[0]

    @property
    def blocks(self):
        return self.block_hours.shape[1]

    @property
    def years(self):
        if not self.inflow_years:
            return 0
        return next(iter(self.inflow_years.values())).shape[0]

    def reservoir_named(self, name):
        for r in self.reservoirs:
            if r.name == name:
                return r
        raise SystemError_(f"unknown reservoir {name!r}")

    def validate(self):
        if not 0.0 < self.beta < 1.0:
            raise SystemError_(f"annual discount beta must lie in (0, 1), got {self.beta}")
        hours = np.asarray(self.block_hours, dtype=float)
        if hours.ndim != 2:
            raise SystemError_("block hours must be a (weeks, blocks) table")
        if (hours < 0).any():
            raise SystemError_("negative block hours")
        for t, total in enumerate(hours.sum(axis=1)):
            if abs(total - HOURS_PER_WEEK) > 1e-6:
                raise SystemError_(f"week {t}: block hours sum to {total}, expected 168")
        nodes = set(self.nodes)
        if len(nodes) != len(self.nodes):
            raise SystemError_("duplicate node names")
        res_names = {r.name for r in self.reservoirs}
        if len(res_names) != len(self.reservoirs):
            raise SystemError_("duplicate reservoir names")
        for p in self.peakers:
            if p.node not in nodes:
                raise SystemError_(f"peaker {p.name!r} at unknown node {p.node!r}")
            if p.capacity_mw < 0:
                raise SystemError_(f"peaker {p.name!r} has negative capacity")
        for u in self.hydros:
            if u.node not in nodes:
                raise SystemError_(f"hydro {u.name!r} at unknown node {u.node!r}")
            if u.reservoir not in res_names:
                raise SystemError_(f"hydro {u.name!r} at unknown reservoir {u.reservoir!r}")
            if u.kind not in ("generator", "pump"):
                raise SystemError_(f"hydro {u.name!r} has unknown kind {u.kind!r}")
            if u.is_pump and u.gamma_mw_per_cumec >= 0:
                raise SystemError_(f"pump {u.name!r} must have negative conversion")
            if not u.is_pump and u.gamma_mw_per_cumec <= 0:
                raise SystemError_(
                    f"negative conversion on {u.name!r} is only permitted for pumps"
                )
            if u.flow_capacity_cumecs < 0 or u.spill_capacity_cumecs < 0:
                raise SystemError_(f"hydro {u.name!r} has negative flow capacity")
            if u.discharges_to is not None and u.discharges_to not in res_names:
                raise SystemError_(f"hydro {u.name!r} discharges to unknown reservoir")
            if u.source is not None and u.source not in res_names:
                raise SystemError_(f"pump {u.name!r} draws from unknown reservoir")
        for r in self.reservoirs:
            if r.capacity_m3 < 0 or not 0 <= r.initial_m3 <= r.capacity_m3:
                raise SystemError_(f"reservoir {r.name!r} has inconsistent volumes")
            if r.below_min_capacity_m3 < 0:
                raise SystemError_(f"reservoir {r.name!r}: negative contingent storage")
        for line in self.lines:
            if line.from_node not in nodes or line.to_node not in nodes:
                raise SystemError_(f"line {line.name!r} references unknown node")
            if line.capacity_mw < 0:
                raise SystemError_(f"line {line.name!r} has negative capacity")
        if not self.tranches:
            raise SystemError_("at least one shedding tranche is required")
        frac = sum(tr.fraction for tr in self.tranches)
        if any(tr.fraction < 0 or tr.cost_per_mwh < 0 for tr in self.tranches):
            raise SystemError_("shedding tranches must be non-negative")
        if frac < 1.0 - 1e-9:
            raise SystemError_(
                f"shedding tranche fractions sum to {frac}; they must cover all load "
                "so every subproblem has recourse"
            )
        for node in self.nodes:
            d = np.asarray(self.demand.get(node))
            if d is None or d.shape != hours.shape:
                raise SystemError_(f"demand for node {node!r} must be shaped like block hours")
            if (d < 0).any():
                raise SystemError_(f"negative demand at node {node!r}")
        for name, arr in self.inflow_years.items():
            if name not in res_names:
                raise SystemError_(f"inflows for unknown reservoir {name!r}")
            arr = np.asarray(arr)
            if arr.ndim != 2 or arr.shape[1] != self.weeks:
                raise SystemError_(f"inflows for {name!r} must be shaped (years, weeks)")
            if (arr < 0).any():
                raise SystemError_(f"negative inflow for reservoir {name!r}")
        for node in self.fixed_generation:
            if node not in nodes:
                raise SystemError_(f"fixed generation at unknown node {node!r}")
        return self

    def incidence(self):
        """River-chain incidence: +1 where a unit drains a reservoir, -1 where
        it fills one. Pumps fill their own reservoir and drain their source."""
        A = {r.name: {} for r in self.reservoirs}
        for u in self.hydros:
            if u.is_pump:
                A[u.reservoir][u.name] = A[u.reservoir].get(u.name, 0.0) - 1.0
                if u.source:
                    A[u.source][u.name] = A[u.source].get(u.name, 0.0) + 1.0
            else:
                A[u.reservoir][u.name] = A[u.reservoir].get(u.name, 0.0) + 1.0
                if u.discharges_to:
                    A[u.discharges_to][u.name] = A[u.discharges_to].get(u.name, 0.0) - 1.0
        return A

    def max_shedding_cost(self):
        return max(tr.cost_per_mwh for tr in self.tranches)

    def default_below_min_penalty(self):
        """$/m3 priced above the value of shedding the same water as energy."""
        gamma_max = max((abs(u.gamma_mw_per_cumec) for u in self.hydros), default=1.0)
        return 1.5 * self.max_shedding_cost() * gamma_max / SECONDS_PER_HOUR


def initial_state(system):
    """Initial reservoir storages in internal units, keyed by state dimension."""
    return {f"res_{r.name}": r.initial_m3 / STORAGE_SCALE for r in system.reservoirs}


def inflow_payload(system, week, omega):
    """Noise payload for one week: water-balance RHS per reservoir from m3/s rates."""
    k_total = SECONDS_PER_HOUR * float(system.block_hours[week].sum()) / STORAGE_SCALE
    return {
        f"water_{name}": k_total * float(rate) for name, rate in omega.items()
    }


def stage_noises(system):
    """Stagewise-independent empirical inflow distribution per week."""
    noises = []
    for t in range(system.weeks):
        if system.years == 0:
            noises.append(NoiseDistribution.deterministic())
            continue
        payloads = []
        for y in range(system.years):
            omega = {name: arr[y, t] for name, arr in system.inflow_years.items()}
            payloads.append(inflow_payload(system, t, omega))
        noises.append(NoiseDistribution.equiprobable(payloads))
    return noises


def historical_sequences(system):
    """One payload sequence per historical year, aligned to the weekly cycle."""
    seqs = []
    for y in range(system.years):
        seq = []
        for t in range(system.weeks):
            omega = {name: arr[y, t] for name, arr in system.inflow_years.items()}
            seq.append(inflow_payload(system, t, omega))
        seqs.append(seq)
    return seqs


def build_stage(system, week):
    """Appendix-style weekly stage LP: dispatch plus reservoir dynamics."""
    if not 0 <= week < system.weeks:
        raise SystemError_(f"week {week} outside 0..{system.weeks - 1}")
    t = week
    hours = system.block_hours[t]
    B = system.blocks
    lp = LpModel(f"week{t}")
    template = StageTemplate(
        label=f"week{t}", lp=lp, week=t, theta_var="theta",
        meta={"storage_scale": STORAGE_SCALE},
    )

    for p in system.peakers:
        for b in range(B):
            lp.add_variable(f"gen_{p.name}_b{b}", 0.0, p.capacity_mw,
                            cost=float(hours[b]) * p.cost_per_mwh)
    for u in system.hydros:
        spill_cap = 0.0 if u.is_pump else u.spill_capacity_cumecs
        for b in range(B):
            lp.add_variable(f"rel_{u.name}_b{b}", 0.0, u.flow_capacity_cumecs)
            lp.add_variable(f"spl_{u.name}_b{b}", 0.0, spill_cap)
    for line in system.lines:
        for b in range(B):
            lp.add_variable(f"flow_{line.name}_b{b}", -line.capacity_mw, line.capacity_mw)
    for node in system.nodes:
        for l, tr in enumerate(system.tranches):
            for b in range(B):
                lp.add_variable(
                    f"shed_{node}_l{l}_b{b}", 0.0,
                    tr.fraction * float(system.demand[node][t, b]),
                    cost=float(hours[b]) * tr.cost_per_mwh,
                )
    for r in system.reservoirs:
        lp.add_variable(f"stor_{r.name}", 0.0, r.capacity_m3 / STORAGE_SCALE)
        lp.add_variable(f"sbar_{r.name}", -INF, INF)
        if r.below_min_capacity_m3 > 0:
            penalty = r.below_min_penalty_per_m3
            if penalty is None:
                penalty = system.default_below_min_penalty()
            lp.add_variable(
                f"below_{r.name}", 0.0, r.below_min_capacity_m3 / STORAGE_SCALE,
                cost=penalty * STORAGE_SCALE,
            )
    lp.add_variable("theta", 0.0, INF, cost=1.0)

    # demand balance per node and block
    for node in system.nodes:
        for b in range(B):
            coeffs = {}
            for line in system.lines:
                if line.to_node == node:
                    coeffs[f"flow_{line.name}_b{b}"] = 1.0
                elif line.from_node == node:
                    coeffs[f"flow_{line.name}_b{b}"] = -1.0
            for p in system.peakers:
                if p.node == node:
                    coeffs[f"gen_{p.name}_b{b}"] = 1.0
            for u in system.hydros:
                if u.node == node:
                    coeffs[f"rel_{u.name}_b{b}"] = u.gamma_mw_per_cumec
            for l in range(len(system.tranches)):
                coeffs[f"shed_{node}_l{l}_b{b}"] = 1.0
            rhs = float(system.demand[node][t, b]) - system.fixed_generation.get(node, 0.0)
            lp.add_row(f"demand_{node}_b{b}", coeffs, "=", rhs)

    # water balance per reservoir; the rhs slot carries the week's inflow volume
    A = system.incidence()
    for r in system.reservoirs:
        coeffs = {f"stor_{r.name}": 1.0, f"sbar_{r.name}": -1.0}
        if r.below_min_capacity_m3 > 0:
            coeffs[f"below_{r.name}"] = -1.0
        for uname, sign in A[r.name].items():
            for b in range(B):
                k_b = SECONDS_PER_HOUR * float(hours[b]) / STORAGE_SCALE
                coeffs[f"rel_{uname}_b{b}"] = sign * k_b
                coeffs[f"spl_{uname}_b{b}"] = sign * k_b
        lp.add_row(f"water_{r.name}", coeffs, "=", 0.0)
        lp.add_row(f"fix_{r.name}", {f"sbar_{r.name}": 1.0}, "=",
                   r.initial_m3 / STORAGE_SCALE)
        lp.designate_dual(f"water_{r.name}")
        lp.designate_dual(f"fix_{r.name}")
        template.state_fix_rows[f"res_{r.name}"] = f"fix_{r.name}"
        template.state_out_vars[f"res_{r.name}"] = f"stor_{r.name}"
        template.water_balance_rows[r.name] = f"water_{r.name}"

    # environmental minimum flows apply to release plus spill
    for u in system.hydros:
        if u.min_flow_cumecs > 0:
            for b in range(B):
                lp.add_row(
                    f"minflow_{u.name}_b{b}",
                    {f"rel_{u.name}_b{b}": 1.0, f"spl_{u.name}_b{b}": 1.0},
                    ">=",
                    u.min_flow_cumecs,
                )

    template.extractor = _make_extractor(system, t)
    return template.validate()


def apply_pumping(template, pump, paired_generator, system):
    """Wire a pump unit into an existing stage: it consumes gamma*h MW at its
    node and pushes water into the reservoir its paired generator drains."""
    if pump.gamma_mw_per_cumec >= 0:
        raise SystemError_(f"pump {pump.name!r} must have a negative conversion factor")
    lp = template.lp
    gen_rel = f"rel_{paired_generator}_b0"
    if gen_rel not in lp.variable_names:
        raise SystemError_(f"no generator {paired_generator!r} in stage {template.label!r}")
    water_row = f"water_{pump.reservoir}"
    if water_row not in lp.row_names:
        raise SystemError_(
            f"pump {pump.name!r} and generator {paired_generator!r} must share a reservoir"
        )
    gen = next((u for u in system.hydros if u.name == paired_generator), None)
    if gen is not None:
        if gen.reservoir != pump.reservoir:
            raise SystemError_("pump and paired generator attach to different reservoirs")
        efficiency = abs(gen.gamma_mw_per_cumec / pump.gamma_mw_per_cumec)
        if efficiency >= 1.0:
            raise SystemError_(f"round-trip efficiency {efficiency:.3f} must be below 1")
    hours = system.block_hours[template.week]
    B = len(hours)
    for b in range(B):
        var = f"rel_{pump.name}_b{b}"
        lp.add_variable(var, 0.0, pump.flow_capacity_cumecs)
        lp.set_coefficient(f"demand_{pump.node}_b{b}", var, pump.gamma_mw_per_cumec)
        k_b = SECONDS_PER_HOUR * float(hours[b]) / STORAGE_SCALE
        lp.set_coefficient(water_row, var, -k_b)  # filling: negative outflow
        if pump.source:
            lp.set_coefficient(f"water_{pump.source}", var, k_b)
    return template


def apply_investment_links(template, system, spec):
    """Add investment state plumbing and capacity-link rows to one stage."""
    lp = template.lp
    t = template.week
    B = system.blocks
    for cand in spec.candidates:
        xin = f"xinv_{cand.name}"
        xout = f"xinv_out_{cand.name}"
        lp.add_variable(xin, -INF, INF)
        lp.add_variable(xout, 0.0, INF)
        lp.add_row(f"fixinv_{cand.name}", {xin: 1.0}, "=", 0.0)
        lp.add_row(f"carryinv_{cand.name}", {xout: 1.0, xin: -1.0}, "=", 0.0)
        template.state_fix_rows[cand.state_dim] = f"fixinv_{cand.name}"
        template.state_out_vars[cand.state_dim] = xout
        if cand.kind == KIND_PEAKER:
            peaker = next((p for p in system.peakers if p.name == cand.target), None)
            if peaker is None:
                raise SystemError_(f"investment target {cand.target!r} is not a peaker")
            for b in range(B):
                var = f"gen_{peaker.name}_b{b}"
                lp.set_bounds(var, 0.0, INF)
                lp.add_row(f"invcap_{cand.name}_b{b}", {var: 1.0, xin: -1.0},
                           "<=", peaker.capacity_mw)
        elif cand.kind == KIND_LINE:
            line = next((l for l in system.lines if l.name == cand.target), None)
            if line is None:
                raise SystemError_(f"investment target {cand.target!r} is not a line")
            for b in range(B):
                var = f"flow_{line.name}_b{b}"
                lp.set_bounds(var, -INF, INF)
                lp.add_row(f"invcap_{cand.name}_fwd_b{b}", {var: 1.0, xin: -1.0},
                           "<=", line.capacity_mw)
                lp.add_row(f"invcap_{cand.name}_rev_b{b}", {var: -1.0, xin: -1.0},
                           "<=", line.capacity_mw)
        elif cand.kind == KIND_WIND:
            if system.wind is None:
                raise SystemError_("wind candidate configured but no wind data attached")
            wind = system.wind
            regions = cand.regions or wind.regions
            share_total = sum(wind.share_of[r] for r in regions)
            if share_total <= 0:
                raise SystemError_(f"wind candidate {cand.name!r} covers no share")
            for r in regions:
                node = wind.node_of[r]
                for b in range(B):
                    var = f"wind_{r}_b{b}"
                    if var not in lp.variable_names:
                        lp.add_variable(var, 0.0, INF)
                        lp.set_coefficient(f"demand_{node}_b{b}", var, 1.0)
                    mu = float(wind.mu[r][t, b])
                    lp.add_row(
                        f"windcap_{cand.name}_{r}_b{b}",
                        {var: 1.0, xin: -mu / share_total},
                        "<=",
                        0.0,
                    )
        else:
            raise SystemError_(f"unknown investment target kind {cand.kind!r}")
    return template.validate()


def operating_graph(system, spec=None):
    """Cyclic weekly policy graph; with a spec, adds links and the investment root."""
    templates = []
    for t in range(system.weeks):
        template = build_stage(system, t)
        if spec is not None:
            apply_investment_links(template, system, spec)
        templates.append(template)
    rho = system.beta ** (1.0 / system.weeks)
    graph = cyclic_graph(system.weeks, rho, templates=templates, noises=stage_noises(system))
    if spec is not None:
        root = build_investment_node(spec, carry_state=initial_state(system))
        graph = with_investment_root(graph, root)
    return graph


def _make_extractor(system, t):
    hours = system.block_hours[t]
    B = system.blocks

    def extract(sol):
        shed_by_node = {}
        for node in system.nodes:
            total = 0.0
            for l in range(len(system.tranches)):
                for b in range(B):
                    total += float(hours[b]) * sol.value(f"shed_{node}_l{l}_b{b}")
            shed_by_node[node] = total
        record = {
            "week": t,
            "shed_mwh": sum(shed_by_node.values()),
            "shed_mwh_by_node": shed_by_node,
            "storage_m3": {
                r.name: sol.value(f"stor_{r.name}") * STORAGE_SCALE
                for r in system.reservoirs
            },
            "flows_mw": {
                line.name: [sol.value(f"flow_{line.name}_b{b}") for b in range(B)]
                for line in system.lines
            },
            "release_cumecs": {
                u.name: [sol.value(f"rel_{u.name}_b{b}") for b in range(B)]
                for u in system.hydros
            },
            "spill_cumecs": {
                u.name: [sol.value(f"spl_{u.name}_b{b}") for b in range(B)]
                for u in system.hydros
            },
            "peaker_mw": {
                p.name: [sol.value(f"gen_{p.name}_b{b}") for b in range(B)]
                for p in system.peakers
            },
        }
        below = {}
        for r in system.reservoirs:
            if r.below_min_capacity_m3 > 0:
                below[r.name] = sol.value(f"below_{r.name}") * STORAGE_SCALE
        if below:
            record["below_min_m3"] = below
        return record

    return extract
