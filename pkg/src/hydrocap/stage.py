"""Parameterized stage LP attached to a policy-graph node.

A template owns the LP skeleton plus the bookkeeping the training loop needs:
which rows pin the incoming state, which variables carry the outgoing state,
which variable is the cost-to-go, and where noise realizations land (payloads
are row-name -> rhs mappings, so the template itself stays noise-agnostic).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .lp import LpModel


class StageError(Exception):
    pass


@dataclass
class StageTemplate:
    label: str
    lp: LpModel
    state_fix_rows: dict = field(default_factory=dict)  # state dim -> "=" row name
    state_out_vars: dict = field(default_factory=dict)  # state dim -> variable name
    theta_var: str = None
    week: int = None
    water_balance_rows: dict = field(default_factory=dict)  # reservoir -> row name
    extractor: object = None  # optional LpSolution -> dict of reported quantities
    meta: dict = field(default_factory=dict)

    def validate(self):
        var_names = set(self.lp.variable_names)
        row_names = set(self.lp.row_names)
        # state-in and state-out sets may differ: a root node emits state it
        # never pins, a terminal node pins state it never emits
        for dim, row in self.state_fix_rows.items():
            if row not in row_names:
                raise StageError(f"{self.label}: missing state-fix row {row!r}")
        for dim, var in self.state_out_vars.items():
            if var not in var_names:
                raise StageError(f"{self.label}: missing state-out variable {var!r}")
        if self.theta_var is not None and self.theta_var not in var_names:
            raise StageError(f"{self.label}: missing cost-to-go variable {self.theta_var!r}")
        for row in self.water_balance_rows.values():
            if row not in row_names:
                raise StageError(f"{self.label}: missing water-balance row {row!r}")
        return self

    @property
    def state_dims(self):
        return tuple(sorted(self.state_out_vars))

    def stage_cost_of(self, solution):
        """Stage objective net of the cost-to-go term."""
        cost = solution.objective
        if self.theta_var is not None:
            cost -= solution.value(self.theta_var)
        return cost
