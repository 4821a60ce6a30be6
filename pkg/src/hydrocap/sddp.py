"""SDDP training and evaluation on a policy graph.

Forward passes sample noise and edge termination; backward passes add one
average cut per visited node from the duals of every child's state-fixing
rows across that child's noise realizations, weighted by edge and noise
probabilities (the edge probability carries the discount). The cut pool is
the policy; stage LPs install pool cuts lazily, only once violated, which
keeps each LP small without ever relaxing the pool.
"""

from __future__ import annotations

import json
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .lp import INFEASIBLE, OPTIMAL, UNBOUNDED
from .policy_graph import INVESTMENT_NODE


class SddpError(Exception):
    pass


class NoInvestmentRootError(SddpError):
    pass


class InfeasibleSubproblemError(SddpError):
    def __init__(self, node_id, state, payload, status):
        self.node_id = node_id
        self.state = dict(state)
        self.payload = dict(payload)
        self.status = status
        super().__init__(
            f"subproblem {node_id!r} returned {status} at state {self.state} "
            f"with noise {self.payload}"
        )


@dataclass(frozen=True)
class Cut:
    """Affine minorant of a node's expected cost-to-go: intercept + slope.x."""

    node_id: str
    intercept: float
    slope: dict
    iteration: int


@dataclass
class TrainOptions:
    iterations: int
    seed: int = 0
    forward_passes: int = 1
    depth_cap_cycles: int = 20
    eval_cadence: int = 10

    def __post_init__(self):
        if self.iterations <= 0:
            raise SddpError(f"iteration limit must be positive, got {self.iterations}")
        if self.forward_passes < 1:
            raise SddpError("need at least one forward pass per iteration")
        if self.depth_cap_cycles < 1:
            raise SddpError("depth cap must be at least one cycle")


@dataclass
class TrajectoryStep:
    node_id: str
    noise_index: int
    incoming_state: dict
    outgoing_state: dict
    stage_cost: float
    objective: float
    weight: float = 1.0  # cumulative edge probability; 1 under termination sampling
    water_values: dict = field(default_factory=dict)  # $/m3 per reservoir
    extras: dict = field(default_factory=dict)


class Trajectory(list):
    tail_value = 0.0  # discounted cost-to-go closing a weighted rollout

    @property
    def total_cost(self):
        return float(sum(s.stage_cost for s in self))

    @property
    def discounted_cost(self):
        """Probability-weighted cost of a rollout without termination sampling.

        Equals total_cost in expectation when termination is sampled instead;
        the tail term uses the policy's own cost-to-go at the final state.
        """
        return float(sum(s.weight * s.stage_cost for s in self)) + self.tail_value


@dataclass
class LogRow:
    iteration: int
    lower_bound: float
    forward_cost: float
    wall_time_s: float


class Policy:
    """Cut pools per node plus the training record."""

    def __init__(self, state_dims, node_ids):
        self.state_dims = tuple(state_dims)
        self.cuts = {nid: [] for nid in node_ids}
        self.training_log = []
        self.investment_log = []  # (iteration, {candidate: MW})
        self.seed = None

    def add_cut(self, cut):
        self.cuts[cut.node_id].append(cut)

    @property
    def total_cuts(self):
        return sum(len(v) for v in self.cuts.values())

    @property
    def final_lower_bound(self):
        if not self.training_log:
            raise SddpError("policy has not been trained")
        return self.training_log[-1].lower_bound

    # -- serialization ------------------------------------------------------

    def to_json(self):
        dims = list(self.state_dims)
        return json.dumps(
            {
                "format": "hydrocap-policy",
                "version": 1,
                "state_dims": dims,
                "seed": self.seed,
                "nodes": {
                    nid: [
                        {
                            "intercept": c.intercept,
                            "slope": [c.slope.get(d, 0.0) for d in dims],
                            "iteration": c.iteration,
                        }
                        for c in cuts
                    ]
                    for nid, cuts in self.cuts.items()
                },
                "training_log": [
                    [r.iteration, r.lower_bound, r.forward_cost, r.wall_time_s]
                    for r in self.training_log
                ],
                "investment_log": [[it, u] for it, u in self.investment_log],
            },
            indent=1,
        )

    @staticmethod
    def from_json(text):
        data = json.loads(text)
        if data.get("format") != "hydrocap-policy" or data.get("version") != 1:
            raise SddpError("not a recognized policy file")
        dims = tuple(data["state_dims"])
        policy = Policy(dims, list(data["nodes"]))
        policy.seed = data.get("seed")
        for nid, cuts in data["nodes"].items():
            for c in cuts:
                policy.add_cut(
                    Cut(nid, c["intercept"], dict(zip(dims, c["slope"])), c["iteration"])
                )
        policy.training_log = [
            LogRow(int(r[0]), r[1], r[2], r[3]) for r in data["training_log"]
        ]
        policy.investment_log = [(int(it), u) for it, u in data.get("investment_log", [])]
        return policy


class HistoricalScenarios:
    """Out-of-sample payload sequences; one trajectory per sequence, each
    traversing the cycle deterministically for the sequence length."""

    def __init__(self, sequences):
        self.sequences = list(sequences)
        if not self.sequences:
            raise SddpError("no historical sequences supplied")


import bisect


class _Envelope1D:
    """Upper envelope of the lines a + b.x, maintained under insertion.

    With a one-dimensional state the pool's pointwise maximum is all the
    violation check needs: theta covers every pool cut exactly when it covers
    the envelope. Dominated lines are dropped from the envelope only; the
    pool itself keeps every cut.
    """

    __slots__ = ("slopes", "intercepts", "ids", "_xs", "_dirty")

    def __init__(self):
        self.slopes = []
        self.intercepts = []
        self.ids = []
        self._xs = []
        self._dirty = False

    def _cross(self, i, j):
        """x where line i meets line j (slope_i < slope_j)."""
        return (self.intercepts[i] - self.intercepts[j]) / (
            self.slopes[j] - self.slopes[i]
        )

    def _useless(self, i):
        """Is line i at or below the max of its neighbors everywhere?"""
        x = self._cross(i - 1, i + 1)
        at_x = self.intercepts[i] + self.slopes[i] * x
        return at_x <= self.intercepts[i - 1] + self.slopes[i - 1] * x

    def insert(self, slope, intercept, idx):
        S, A, I = self.slopes, self.intercepts, self.ids
        p = bisect.bisect_left(S, slope)
        if p < len(S) and S[p] == slope:
            if A[p] >= intercept:
                return
            del S[p], A[p], I[p]
        S.insert(p, slope)
        A.insert(p, intercept)
        I.insert(p, idx)
        self._dirty = True
        if 0 < p < len(S) - 1 and self._useless(p):
            del S[p], A[p], I[p]
            return
        while p + 2 <= len(S) - 1 and self._useless(p + 1):
            del S[p + 1], A[p + 1], I[p + 1]
        while p - 1 >= 1 and self._useless(p - 1):
            del S[p - 1], A[p - 1], I[p - 1]
            p -= 1

    def query(self, x):
        """(max value at x, pool index of the top line)."""
        if self._dirty:
            self._xs = [self._cross(i, i + 1) for i in range(len(self.slopes) - 1)]
            self._dirty = False
        i = bisect.bisect_right(self._xs, x)
        return self.intercepts[i] + self.slopes[i] * x, self.ids[i]

    def __len__(self):
        return len(self.slopes)


class _CutPool:
    def __init__(self, dims):
        self.dims = tuple(dims)
        self.count = 0
        cap = 64
        self.intercepts = np.zeros(cap)
        self.slopes = np.zeros((cap, len(self.dims)))
        self.envelope = _Envelope1D() if len(self.dims) == 1 else None

    def add(self, cut):
        if self.count == self.intercepts.shape[0]:
            self.intercepts = np.concatenate([self.intercepts, np.zeros_like(self.intercepts)])
            self.slopes = np.concatenate([self.slopes, np.zeros_like(self.slopes)])
        self.intercepts[self.count] = cut.intercept
        self.slopes[self.count] = [cut.slope.get(d, 0.0) for d in self.dims]
        if self.envelope is not None:
            self.envelope.insert(
                float(self.slopes[self.count, 0]), float(cut.intercept), self.count
            )
        self.count += 1

    def evaluate(self, x):
        k = self.count
        return self.intercepts[:k] + self.slopes[:k] @ x


class _NodeInstance:
    """One worker's clone of a node's stage LP with lazy cut installation.

    The policy's cut pool is never pruned; the LP carries only a working set
    of cut rows. Every solve checks the whole pool for violated cuts and
    installs them before returning, so results are exact for the full pool.
    The working set tracks the set of cuts that were tight during a recent
    window of solves (empirically a few dozen, roughly independent of pool
    size); when the installed rows outgrow that set by a wide margin the LP
    is rebuilt around it.
    """

    RECENT_WINDOW = 150  # solves
    REBUILD_HEADROOM = 3
    REBUILD_BASE = 60

    def __init__(self, node, dims, pool):
        template = node.template
        if template is None:
            raise SddpError(f"node {node.node_id!r} has no stage template")
        template.validate()
        self.node_id = node.node_id
        self.template = template
        self.dims = tuple(dims)
        self.pool = pool
        self.fix_rows = [template.state_fix_rows.get(d) for d in self.dims]
        self.theta = template.theta_var
        self.installed = np.zeros(0, dtype=bool)
        self.last_tight = np.zeros(0, dtype=np.int64)
        self.serial = 0
        self._noise_rows = {}
        self._state_vec = None
        self._recent_x = deque(maxlen=256)  # visited outgoing states, 1-D pools
        self._fresh_lp()

    def _fresh_lp(self):
        self.lp = self.template.lp.clone()
        for row in self.template.state_fix_rows.values():
            self.lp.designate_dual(row)
        for row in self.template.water_balance_rows.values():
            self.lp.designate_dual(row)
        self.out_cols = [
            self.lp.column_of(self.template.state_out_vars[d])
            if d in self.template.state_out_vars
            else None
            for d in self.dims
        ]
        self.theta_col = self.lp.column_of(self.theta) if self.theta else None

    def set_state(self, x):
        self._state_vec = np.array(x, dtype=float)
        for dim_value, row in zip(x, self.fix_rows):
            if row is not None:
                self.lp.set_rhs(row, dim_value)

    def set_noise(self, payload):
        stale = self._noise_rows
        for row, rhs in payload.items():
            self.lp.set_rhs(row, rhs)
        # rows touched by a previous payload but absent from this one fall
        # back to the template rhs
        for row in stale:
            if row not in payload:
                self.lp.set_rhs(row, self.template.lp.get_rhs(row))
        self._noise_rows = payload

    def _grow_tracking(self):
        pool = self.pool
        if self.installed.shape[0] < pool.count:
            grown = np.zeros(pool.count, dtype=bool)
            grown[: self.installed.shape[0]] = self.installed
            self.installed = grown
            grown_t = np.zeros(pool.count, dtype=np.int64)
            grown_t[: self.last_tight.shape[0]] = self.last_tight
            self.last_tight = grown_t

    def _install(self, k):
        pool = self.pool
        coeffs = {self.theta: 1.0}
        for d, slope in zip(self.dims, pool.slopes[k]):
            var = self.template.state_out_vars.get(d)
            if var is not None and slope != 0.0:
                coeffs[var] = coeffs.get(var, 0.0) - slope
        self.lp.add_row(f"cut{k}", coeffs, ">=", float(pool.intercepts[k]))
        self.installed[k] = True

    def note_new_cut(self, k):
        """Eagerly install a cut just generated for this node; it supports the
        value function at the state only just visited, so it will bind.

        With an envelope the next solve installs the dominant cut itself, and
        most fresh cuts are dominated on arrival, so eager work only pays in
        the multi-dimensional full-scan path."""
        if self.theta_col is None or self.pool.envelope is not None:
            return
        self._grow_tracking()
        self.last_tight[k] = self.serial
        self._install(k)

    def _rebuild(self, keep):
        """Shrink the working set to the given cuts on a fresh LP clone."""
        self._fresh_lp()
        self.installed = np.zeros(self.pool.count, dtype=bool)
        if self._state_vec is not None:
            for dim_value, row in zip(self._state_vec, self.fix_rows):
                if row is not None:
                    self.lp.set_rhs(row, dim_value)
        for row, rhs in self._noise_rows.items():
            self.lp.set_rhs(row, rhs)
        for k in np.nonzero(keep)[0]:
            self._install(int(k))

    def solve(self, strict=False):
        """Solve to optimality over the full cut pool (lazy installation).

        ``strict`` drops the violation tolerance to LP exactness; bound solves
        use it so the reported bound is the true minimum over the whole pool.
        """
        pool = self.pool
        self.serial += 1
        self._grow_tracking()
        if pool.envelope is not None:
            return self._solve_enveloped(strict)
        if self.theta_col is not None and pool.count:
            recent = self.last_tight[: pool.count] >= self.serial - self.RECENT_WINDOW
            width = int(recent.sum())
            if int(self.installed.sum()) > self.REBUILD_HEADROOM * width + self.REBUILD_BASE:
                self._rebuild(recent)
        while True:
            sol = self.lp.solve()
            if sol.status != OPTIMAL:
                return sol
            if self.theta_col is None or pool.count == 0:
                return sol
            theta_val = sol._x[self.theta_col]
            x_out = np.array([sol._x[c] if c is not None else 0.0 for c in self.out_cols])
            values = pool.evaluate(x_out)
            scale = 1e-12 if strict else 1e-9
            vtol = scale * max(1.0, abs(theta_val)) + scale
            tight = values >= theta_val - 1e-7 * max(1.0, abs(theta_val))
            self.last_tight[: pool.count][tight] = self.serial
            violated = (values - theta_val > vtol) & ~self.installed[: pool.count]
            if not violated.any():
                return sol
            for k in np.nonzero(violated)[0]:
                self._install(int(k))

    def _solve_enveloped(self, strict):
        """One-dimensional pools: violation checks via the envelope query."""
        pool = self.pool
        if self.theta_col is not None and int(self.installed.sum()) > 64:
            keep = np.zeros(pool.count, dtype=bool)
            for x in set(self._recent_x):
                _, k = pool.envelope.query(x)
                keep[k] = True
            self._rebuild(keep)
        out_col = self.out_cols[0]
        if pool.count and self.theta_col is not None and self._recent_x:
            # the last outgoing state predicts where the next optimum lands;
            # installing its dominant cut up front usually saves a re-solve
            _, k = pool.envelope.query(self._recent_x[-1])
            if not self.installed[k]:
                self._install(int(k))
        for _ in range(1 + pool.count):
            sol = self.lp.solve()
            if sol.status != OPTIMAL:
                return sol
            if self.theta_col is None or pool.count == 0:
                return sol
            state = self.lp._state
            theta_val = state.column_value(self.theta_col)
            x0 = state.column_value(out_col) if out_col is not None else 0.0
            value, kbest = pool.envelope.query(x0)
            scale = 1e-12 if strict else 1e-9
            vtol = scale * max(1.0, abs(theta_val)) + scale
            if value - theta_val <= vtol:
                self._recent_x.append(x0)
                return sol
            if self.installed[kbest]:
                # the LP already enforces this cut to its own tolerance
                self._recent_x.append(x0)
                return sol
            self._install(int(kbest))
        raise SddpError(f"cut installation failed to converge at node {self.node_id!r}")

    def outgoing(self, sol):
        return np.array([sol._x[c] if c is not None else 0.0 for c in self.out_cols])

    def state_duals(self, sol):
        return np.array(
            [sol.duals[row] if row is not None else 0.0 for row in self.fix_rows]
        )

    def stage_cost(self, sol):
        cost = sol.objective
        if self.theta_col is not None:
            cost -= sol._x[self.theta_col]
        return cost


class _Engine:
    def __init__(self, graph, policy=None):
        graph.validate()
        self.graph = graph
        dims = set()
        for node in graph.nodes.values():
            if node.template is None:
                raise SddpError(f"node {node.node_id!r} has no stage template")
            dims |= set(node.template.state_out_vars)
        self.dims = tuple(sorted(dims))
        incoming = {t for _, t, _ in graph.edges}
        for node in graph.nodes.values():
            fix = set(node.template.state_fix_rows)
            if node.node_id in incoming and fix != set(self.dims):
                raise SddpError(
                    f"node {node.node_id!r} must fix all state dimensions {self.dims}"
                )
            if graph.children(node.node_id) and set(node.template.state_out_vars) != set(self.dims):
                raise SddpError(
                    f"node {node.node_id!r} must emit all state dimensions {self.dims}"
                )
        if policy is None:
            policy = Policy(self.dims, list(graph.nodes))
        elif tuple(policy.state_dims) != self.dims:
            raise SddpError(
                f"policy state dims {policy.state_dims} do not match graph dims {self.dims}"
            )
        self.policy = policy
        self.pools = {nid: _CutPool(self.dims) for nid in graph.nodes}
        for nid, cuts in policy.cuts.items():
            for cut in cuts:
                self.pools[nid].add(cut)
        # one LP clone per noise outcome: each warm basis then tracks its own
        # outcome's state sequence, which keeps dual re-solves to a pivot or two
        self.instances = {}
        for nid in graph.nodes:
            k = len(graph.nodes[nid].noise.realizations)
            self.instances[nid] = [
                _NodeInstance(graph.nodes[nid], self.dims, self.pools[nid])
                for _ in range(k)
            ]
        cycle_nodes = len(graph.nodes) - (1 if graph.has_investment_root else 0)
        self.cycle_len = max(cycle_nodes, 1)
        self.children = {nid: graph.children(nid) for nid in graph.nodes}
        self.noises = {nid: graph.nodes[nid].noise.realizations for nid in graph.nodes}
        self.noise_cum = {
            nid: np.cumsum([p for _, p in reals]) for nid, reals in self.noises.items()
        }

    def initial_vector(self, initial_state):
        initial_state = initial_state or {}
        unknown = set(initial_state) - set(self.dims)
        if unknown:
            raise SddpError(f"initial state names unknown dimensions: {sorted(unknown)}")
        return np.array([float(initial_state.get(d, 0.0)) for d in self.dims])

    def _solve_node(self, nid, state, payload, strict=False, outcome=0):
        inst = self.instances[nid][outcome]
        inst.set_state(state)
        inst.set_noise(payload)
        sol = inst.solve(strict=strict)
        if sol.status != OPTIMAL:
            raise InfeasibleSubproblemError(
                nid, dict(zip(self.dims, state)), payload, sol.status
            )
        return inst, sol

    # -- passes ----------------------------------------------------------------

    def forward_pass(self, rng, initial_state_vec, depth_cap_cycles, record=False,
                     term_sampling=True, uniforms=None):
        """Roll the policy forward. With ``term_sampling`` off, the walk follows
        the cycle deterministically and stage costs carry the cumulative edge
        probability as a weight; the final cost-to-go closes the tail. That
        estimator has the same mean and far less variance. ``uniforms``
        optionally supplies the per-step noise draws (antithetic pairing)."""
        max_steps = depth_cap_cycles * self.cycle_len + (
            1 if self.graph.has_investment_root else 0
        )
        traj = Trajectory()
        nid = self._sample_root(rng)
        if nid is None:
            return traj
        state = initial_state_vec
        weight = 1.0
        for step_count in range(max_steps):
            noise = self.noises[nid]
            if len(noise) > 1:
                u = rng.random() if uniforms is None else uniforms[step_count]
                cum = self.noise_cum[nid]
                w = min(int(np.searchsorted(cum, u, side="right")), len(noise) - 1)
            else:
                w = 0
            payload = noise[w][0]
            inst, sol = self._solve_node(nid, state, payload, outcome=w)
            x_out = inst.outgoing(sol)
            step = TrajectoryStep(
                node_id=nid,
                noise_index=w,
                incoming_state=dict(zip(self.dims, state.tolist())),
                outgoing_state=dict(zip(self.dims, x_out.tolist())),
                stage_cost=inst.stage_cost(sol),
                objective=sol.objective,
                weight=weight,
            )
            if record:
                self._record(inst, sol, step)
            traj.append(step)
            if term_sampling:
                nxt = self._sample_transition(nid, rng)
                if nxt is None:
                    break
            else:
                kids = self.children[nid]
                if not kids:
                    break
                if len(kids) != 1:
                    raise SddpError(
                        "weighted rollouts need a single successor per node; "
                        f"{nid!r} has {len(kids)}"
                    )
                if step_count == max_steps - 1 and inst.theta_col is not None:
                    # theta already carries the edge discount of this node
                    traj.tail_value = weight * inst.lp._state.column_value(inst.theta_col)
                nxt, p_edge = kids[0]
                weight *= p_edge
            nid = nxt
            state = x_out
        return traj

    def _sample_root(self, rng):
        edges = self.graph.root_edges
        if len(edges) == 1 and edges[0][1] >= 1.0 - 1e-12:
            return edges[0][0]
        u = rng.random()
        acc = 0.0
        for t, p in edges:
            acc += p
            if u < acc:
                return t
        return None

    def _sample_transition(self, nid, rng):
        kids = self.children[nid]
        if not kids:
            return None
        if len(kids) == 1 and kids[0][1] >= 1.0 - 1e-12:
            return kids[0][0]
        u = rng.random()
        acc = 0.0
        for t, p in kids:
            acc += p
            if u < acc:
                return t
        return None

    def backward_pass(self, trajectory, iteration):
        for step in reversed(trajectory):
            nid = step.node_id
            kids = self.children[nid]
            if not kids:
                continue
            x = np.array([step.outgoing_state[d] for d in self.dims])
            intercept = 0.0
            slope = np.zeros(len(self.dims))
            for child, p_edge in kids:
                for w, (payload, q) in enumerate(self.noises[child]):
                    inst, sol = self._solve_node(child, x, payload, outcome=w)
                    pi = inst.state_duals(sol)
                    weight = p_edge * q
                    intercept += weight * (sol.objective - float(pi @ x))
                    slope += weight * pi
            cut = Cut(nid, float(intercept), dict(zip(self.dims, slope.tolist())), iteration)
            self.policy.add_cut(cut)
            self.pools[nid].add(cut)
            for inst in self.instances[nid]:
                inst.note_new_cut(self.pools[nid].count - 1)

    def root_bound(self, initial_state_vec):
        total = 0.0
        for nid, p_root in self.graph.root_edges:
            expected = 0.0
            for w, (payload, q) in enumerate(self.noises[nid]):
                _, sol = self._solve_node(nid, initial_state_vec, payload, strict=True, outcome=w)
                expected += q * sol.objective
            total += p_root * expected
        return total

    def investment_levels(self):
        inv = self.graph.nodes.get(INVESTMENT_NODE)
        if inv is None:
            raise NoInvestmentRootError("graph has no investment root")
        x0 = np.zeros(len(self.dims))
        _, sol = self._solve_node(INVESTMENT_NODE, x0, {}, strict=True)
        return {
            name: sol.value(var)
            for name, var in inv.template.meta.get("investment_vars", {}).items()
        }

    def _record(self, inst, sol, step):
        for res, row in inst.template.water_balance_rows.items():
            step.water_values[res] = sol.duals[row] / inst.template.meta.get(
                "storage_scale", 1.0
            )
        if inst.template.extractor is not None:
            step.extras = inst.template.extractor(sol)


# -- public API -------------------------------------------------------------------


def train(graph, options, initial_state=None):
    """Run SDDP for a fixed number of iterations; returns the trained Policy."""
    engine = _Engine(graph)
    engine.policy.seed = options.seed
    rng = np.random.default_rng(options.seed)
    x0 = engine.initial_vector(initial_state)
    t_start = time.perf_counter()
    for it in range(1, options.iterations + 1):
        costs = []
        for _ in range(options.forward_passes):
            traj = engine.forward_pass(rng, x0, options.depth_cap_cycles)
            costs.append(traj.total_cost)
            engine.backward_pass(traj, it)
        bound = engine.root_bound(x0)
        engine.policy.training_log.append(
            LogRow(it, bound, float(np.mean(costs)), time.perf_counter() - t_start)
        )
        if graph.has_investment_root and (
            it % options.eval_cadence == 0 or it == options.iterations
        ):
            engine.policy.investment_log.append((it, engine.investment_levels()))
    return engine.policy


def forward_pass(graph, policy, rng, initial_state=None, depth_cap_cycles=20, record=False):
    engine = _Engine(graph, policy)
    x0 = engine.initial_vector(initial_state)
    return engine.forward_pass(rng, x0, depth_cap_cycles, record=record)


def backward_pass(graph, policy, trajectory, iteration=0):
    engine = _Engine(graph, policy)
    engine.backward_pass(trajectory, iteration)
    return policy


def lower_bound(graph, policy, initial_state=None):
    """Objective of the root problem under the policy's current cut pool."""
    engine = _Engine(graph, policy)
    return engine.root_bound(engine.initial_vector(initial_state))


def first_stage_solution(graph, policy):
    """Optimal investment levels of the root node under the current cut pool."""
    if not graph.has_investment_root:
        raise NoInvestmentRootError("graph has no investment root")
    return _Engine(graph, policy).investment_levels()


def simulate(graph, policy, scenarios="in-sample", n=100, seed=0,
             initial_state=None, depth_cap_cycles=20, record=True,
             term_sampling=True, antithetic=False):
    """Roll the trained policy out; records decisions, costs and water values.

    ``scenarios`` is either "in-sample" (noise and termination sampled from the
    graph) or a HistoricalScenarios holding per-stage payload sequences, each
    simulated once, deterministically following the cycle. ``term_sampling``
    off switches in-sample runs to probability-weighted rollouts (see
    Trajectory.discounted_cost), a lower-variance estimator of the same mean;
    ``antithetic`` additionally pairs those rollouts on mirrored noise draws.
    """
    engine = _Engine(graph, policy)
    x0 = engine.initial_vector(initial_state)
    out = []
    if isinstance(scenarios, HistoricalScenarios):
        for seq in scenarios.sequences:
            out.append(_historical_trajectory(engine, seq, x0))
        return out
    rng = np.random.default_rng(seed)
    if antithetic and not term_sampling:
        max_steps = depth_cap_cycles * engine.cycle_len + 1
        for _ in range((n + 1) // 2):
            us = rng.random(max_steps)
            for mirrored in (us, 1.0 - us):
                out.append(
                    engine.forward_pass(
                        rng, x0, depth_cap_cycles, record=record,
                        term_sampling=False, uniforms=mirrored,
                    )
                )
        return out[:n]
    for _ in range(n):
        out.append(
            engine.forward_pass(
                rng, x0, depth_cap_cycles, record=record, term_sampling=term_sampling
            )
        )
    return out


def _historical_trajectory(engine, sequence, x0):
    traj = Trajectory()
    state = x0
    nid = engine.graph.entry_node()
    if engine.graph.has_investment_root:
        inst, sol = engine._solve_node(nid, state, {})
        x_out = inst.outgoing(sol)
        step = TrajectoryStep(
            node_id=nid,
            noise_index=0,
            incoming_state=dict(zip(engine.dims, state.tolist())),
            outgoing_state=dict(zip(engine.dims, x_out.tolist())),
            stage_cost=inst.stage_cost(sol),
            objective=sol.objective,
        )
        engine._record(inst, sol, step)
        traj.append(step)
        state = x_out
        kids = engine.children[nid]
        nid = kids[0][0]
    for payload in sequence:
        inst, sol = engine._solve_node(nid, state, payload)
        x_out = inst.outgoing(sol)
        step = TrajectoryStep(
            node_id=nid,
            noise_index=-1,
            incoming_state=dict(zip(engine.dims, state.tolist())),
            outgoing_state=dict(zip(engine.dims, x_out.tolist())),
            stage_cost=inst.stage_cost(sol),
            objective=sol.objective,
        )
        engine._record(inst, sol, step)
        traj.append(step)
        state = x_out
        kids = engine.children[nid]
        if len(kids) != 1:
            raise SddpError(
                f"historical simulation needs a single successor per node; "
                f"{nid!r} has {len(kids)}"
            )
        nid = kids[0][0]
    return traj
