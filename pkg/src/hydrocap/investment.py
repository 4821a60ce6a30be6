"""One-shot capacity investment: cost algebra and the deterministic root node.

Invested capacity is assumed to be rebuilt every ``lifetime`` years forever, so
the effective price of a unit held in perpetuity is the overnight cost divided
by (1 - beta^lifetime). The LCOE conversion goes the other way: it recovers the
overnight cost a quoted levelized energy price implies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .lp import INF, LpModel
from .stage import StageTemplate

KIND_WIND = "wind-national"
KIND_PEAKER = "peaker"
KIND_LINE = "transmission-line"
_KINDS = (KIND_WIND, KIND_PEAKER, KIND_LINE)


class InvestmentError(Exception):
    pass


@dataclass(frozen=True)
class Candidate:
    """A capacity-expansion option priced at its overnight cost per MW."""

    name: str
    kind: str
    overnight_cost: float  # $/MW
    lifetime_years: float = math.inf  # reinvested every lifetime; inf = build once
    upper_bound: float = None  # MW; None = unbounded
    target: str = None  # peaker or line name; unused for wind
    regions: tuple = None  # wind only; None = all regions (national)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InvestmentError(f"unknown candidate kind {self.kind!r}")
        if self.overnight_cost < 0:
            raise InvestmentError(f"negative overnight cost for {self.name!r}")
        if self.lifetime_years != math.inf and self.lifetime_years < 1:
            raise InvestmentError(f"lifetime must be >= 1 year for {self.name!r}")
        if self.upper_bound is not None and self.upper_bound < 0:
            raise InvestmentError(f"negative upper bound for {self.name!r}")
        if self.kind in (KIND_PEAKER, KIND_LINE) and not self.target:
            raise InvestmentError(f"candidate {self.name!r} needs a target")

    @property
    def state_dim(self):
        return f"inv_{self.name}"


@dataclass(frozen=True)
class InvestmentSpec:
    candidates: tuple
    beta: float  # annual discount factor

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise InvestmentError(f"annual discount beta must lie in (0, 1), got {self.beta}")
        names = [c.name for c in self.candidates]
        if len(set(names)) != len(names):
            raise InvestmentError("duplicate candidate names")

    def cost_of(self, candidate):
        return reinvestment_cost(candidate.overnight_cost, self.beta, candidate.lifetime_years)


@dataclass(frozen=True)
class LcoeAssumptions:
    lcoe: float  # $/MWh
    capacity_factor: float
    lifetime_years: float
    beta: float
    hours_per_year: float = 8760.0

    def __post_init__(self):
        if self.lcoe < 0:
            raise InvestmentError("LCOE must be non-negative")
        if not 0.0 < self.capacity_factor <= 1.0:
            raise InvestmentError("capacity factor must lie in (0, 1]")
        if self.lifetime_years < 1:
            raise InvestmentError("lifetime must be >= 1 year")
        if not 0.0 < self.beta < 1.0:
            raise InvestmentError("beta must lie in (0, 1)")
        if self.hours_per_year <= 0:
            raise InvestmentError("hours per year must be positive")


def reinvestment_cost(overnight_cost, beta, lifetime_years):
    """Perpetual-reinvestment price of capacity: I / (1 - beta^lifetime)."""
    if not 0.0 < beta < 1.0:
        raise InvestmentError(f"beta must lie in (0, 1), got {beta}")
    if lifetime_years == math.inf:
        return float(overnight_cost)
    if lifetime_years < 1:
        raise InvestmentError(f"lifetime must be >= 1 year, got {lifetime_years}")
    return float(overnight_cost) / (1.0 - beta ** lifetime_years)


def lcoe_to_overnight(assumptions):
    """Overnight cost implied by an LCOE quote over a discounted lifetime."""
    a = assumptions
    return a.lcoe * a.hours_per_year * a.capacity_factor * (1.0 - a.beta ** a.lifetime_years) / (1.0 - a.beta)


def composed_round_trip(assumptions):
    """LCOE -> overnight -> perpetual price; the lifetime factor cancels exactly."""
    a = assumptions
    return reinvestment_cost(lcoe_to_overnight(a), a.beta, a.lifetime_years)


def build_investment_node(spec, carry_state=None):
    """Deterministic root LP: min sum(c_inv * u) + theta, outgoing state = u.

    ``carry_state`` maps downstream state dimensions (reservoir storages at the
    start of operations) to their fixed initial values; they pass through the
    node so every node in the graph shares one state space.
    """
    lp = LpModel("investment")
    template = StageTemplate(label="investment", lp=lp, theta_var="theta")
    for cand in spec.candidates:
        u = f"u_{cand.name}"
        out = f"xinv_out_{cand.name}"
        ub = INF if cand.upper_bound is None else float(cand.upper_bound)
        lp.add_variable(u, lb=0.0, ub=ub, cost=spec.cost_of(cand))
        lp.add_variable(out, lb=0.0, ub=INF, cost=0.0)
        lp.add_row(f"set_{cand.name}", {out: 1.0, u: -1.0}, "=", 0.0)
        template.state_out_vars[cand.state_dim] = out
    for dim, value in (carry_state or {}).items():
        var = f"carry_{dim}"
        lp.add_variable(var, lb=-INF, ub=INF, cost=0.0)
        lp.add_row(f"fix_{dim}", {var: 1.0}, "=", float(value))
        template.state_out_vars[dim] = var
    lp.add_variable("theta", lb=0.0, ub=INF, cost=1.0)
    template.meta["investment_vars"] = {c.name: f"u_{c.name}" for c in spec.candidates}
    return template.validate()
