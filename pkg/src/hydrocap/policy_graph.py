"""Decision-process skeletons: finite chains, discounted cycles, investment roots.

Discounting is carried entirely by edge probabilities: an edge with probability
rho < 1 means the process continues with probability rho and stops otherwise,
which reproduces the discounted infinite-horizon objective in expectation while
keeping every stage objective undiscounted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

INVESTMENT_NODE = "inv"


class GraphError(Exception):
    pass


@dataclass(frozen=True)
class NoiseDistribution:
    """Finite distribution of stage noise: list of (payload, probability).

    A payload is a mapping from LP row name to the right-hand side it realizes;
    the deterministic distribution is a single empty payload.
    """

    realizations: tuple

    def __post_init__(self):
        if not self.realizations:
            raise GraphError("noise distribution must be non-empty")
        probs = np.array([p for _, p in self.realizations], dtype=float)
        if (probs <= 0).any():
            raise GraphError("noise probabilities must be positive")
        if abs(probs.sum() - 1.0) > 1e-9:
            raise GraphError(f"noise probabilities sum to {probs.sum()}, not 1")

    @staticmethod
    def deterministic():
        return NoiseDistribution((({}, 1.0),))

    @staticmethod
    def equiprobable(payloads):
        k = len(payloads)
        return NoiseDistribution(tuple((p, 1.0 / k) for p in payloads))


@dataclass
class Node:
    node_id: str
    template: object = None  # StageTemplate, attached before training
    noise: NoiseDistribution = field(default_factory=NoiseDistribution.deterministic)


class PolicyGraph:
    """Nodes plus probability-weighted edges; the deficit from 1 in a node's
    outgoing probability mass is its termination probability."""

    def __init__(self):
        self.nodes = {}
        self.edges = []  # (from_id, to_id, probability)
        self.root_edges = []  # (to_id, probability)

    def add_node(self, node_id, template=None, noise=None):
        if node_id in self.nodes:
            raise GraphError(f"duplicate node {node_id!r}")
        self.nodes[node_id] = Node(node_id, template, noise or NoiseDistribution.deterministic())
        return self.nodes[node_id]

    def add_edge(self, from_id, to_id, probability):
        for nid in (from_id, to_id):
            if nid not in self.nodes:
                raise GraphError(f"edge references unknown node {nid!r}")
        if not 0.0 <= probability <= 1.0:
            raise GraphError(f"edge probability {probability} outside [0, 1]")
        self.edges.append((from_id, to_id, float(probability)))

    def add_root_edge(self, to_id, probability=1.0):
        if to_id not in self.nodes:
            raise GraphError(f"root edge references unknown node {to_id!r}")
        if not 0.0 <= probability <= 1.0:
            raise GraphError(f"root probability {probability} outside [0, 1]")
        self.root_edges.append((to_id, float(probability)))

    def attach(self, node_id, template=None, noise=None):
        node = self.nodes.get(node_id)
        if node is None:
            raise GraphError(f"unknown node {node_id!r}")
        if template is not None:
            node.template = template
        if noise is not None:
            node.noise = noise

    def children(self, node_id):
        return [(t, p) for f, t, p in self.edges if f == node_id]

    @property
    def node_ids(self):
        return list(self.nodes)

    @property
    def has_investment_root(self):
        return INVESTMENT_NODE in self.nodes

    def entry_node(self):
        if not self.root_edges:
            raise GraphError("graph has no entry node")
        targets = {t for t, _ in self.root_edges}
        if len(targets) != 1:
            raise GraphError("graph has multiple entry nodes")
        return next(iter(targets))

    # -- validation -----------------------------------------------------------

    def validate(self):
        if not self.root_edges:
            raise GraphError("graph has no root edge")
        out_prob = {nid: 0.0 for nid in self.nodes}
        for f, _, p in self.edges:
            out_prob[f] += p
        for nid, total in out_prob.items():
            if total > 1.0 + 1e-9:
                raise GraphError(f"outgoing probability {total} from {nid!r} exceeds 1")
        root_mass = sum(p for _, p in self.root_edges)
        if root_mass > 1.0 + 1e-9:
            raise GraphError("root edge probabilities exceed 1")
        self._check_reachability()
        self._check_certain_cycles()
        return self

    def _check_reachability(self):
        seen = set()
        stack = [t for t, p in self.root_edges if p > 0]
        while stack:
            nid = stack.pop()
            if nid in seen:
                continue
            seen.add(nid)
            stack.extend(t for t, p in self.children(nid) if p > 0)
        missing = set(self.nodes) - seen
        if missing:
            raise GraphError(f"nodes unreachable from root: {sorted(missing)}")

    def _check_certain_cycles(self):
        # a cycle has edge-probability product 1 only if every edge on it is 1
        sure = {}
        for f, t, p in self.edges:
            if p >= 1.0 - 1e-12:
                sure.setdefault(f, []).append(t)
        color = {}

        def dfs(nid):
            color[nid] = 1
            for nxt in sure.get(nid, ()):
                if color.get(nxt) == 1:
                    raise GraphError("cycle with edge-probability product 1 detected")
                if color.get(nxt) is None:
                    dfs(nxt)
            color[nid] = 2

        for nid in self.nodes:
            if color.get(nid) is None:
                dfs(nid)

    # -- analytics --------------------------------------------------------------

    def expected_visits(self):
        """Analytic expected number of visits to each node over one trajectory."""
        ids = list(self.nodes)
        idx = {nid: k for k, nid in enumerate(ids)}
        n = len(ids)
        P = np.zeros((n, n))
        for f, t, p in self.edges:
            P[idx[f], idx[t]] += p
        r = np.zeros(n)
        for t, p in self.root_edges:
            r[idx[t]] += p
        v = np.linalg.solve(np.eye(n) - P.T, r)
        return {nid: float(v[idx[nid]]) for nid in ids}

    def expected_trajectory_length(self):
        return sum(self.expected_visits().values())


def linear_graph(T, templates=None, noises=None):
    """Finite chain of T nodes with probability-1 edges."""
    if T < 1:
        raise GraphError(f"stage count must be >= 1, got {T}")
    g = PolicyGraph()
    ids = [f"t{t}" for t in range(1, T + 1)]
    for k, nid in enumerate(ids):
        g.add_node(
            nid,
            template=templates[k] if templates else None,
            noise=noises[k] if noises else None,
        )
    g.add_root_edge(ids[0], 1.0)
    for a, b in zip(ids, ids[1:]):
        g.add_edge(a, b, 1.0)
    return g.validate()


def cyclic_graph(T, rho, templates=None, noises=None):
    """T-node cycle; every edge (including the back edge) carries probability rho."""
    if not 0.0 < rho < 1.0:
        raise GraphError(f"discount rho must lie in (0, 1), got {rho}")
    if T < 1:
        raise GraphError(f"stage count must be >= 1, got {T}")
    g = PolicyGraph()
    ids = [f"t{t}" for t in range(1, T + 1)]
    for k, nid in enumerate(ids):
        g.add_node(
            nid,
            template=templates[k] if templates else None,
            noise=noises[k] if noises else None,
        )
    g.add_root_edge(ids[0], 1.0)
    for a, b in zip(ids, ids[1:]):
        g.add_edge(a, b, rho)
    g.add_edge(ids[-1], ids[0], rho)
    return g.validate()


def with_investment_root(graph, inv):
    """Prepend a deterministic investment node feeding the graph's entry node.

    ``inv`` is either a prebuilt investment StageTemplate or an InvestmentSpec,
    in which case the node LP is built here.
    """
    if graph.has_investment_root:
        raise GraphError("graph already has an investment root")
    entry = graph.entry_node()
    template = inv
    if hasattr(inv, "candidates"):
        from .investment import build_investment_node

        template = build_investment_node(inv)
    g = PolicyGraph()
    g.add_node(INVESTMENT_NODE, template=template)
    for node in graph.nodes.values():
        g.add_node(node.node_id, template=node.template, noise=node.noise)
    g.add_root_edge(INVESTMENT_NODE, 1.0)
    g.add_edge(INVESTMENT_NODE, entry, 1.0)
    for f, t, p in graph.edges:
        g.add_edge(f, t, p)
    return g.validate()
