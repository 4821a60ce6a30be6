"""Wind load-block linearization.

Net demand (demand minus wind output at an assumed national capacity) is
sorted into weekly load-duration blocks with fixed hour counts. Because the
sort order shifts as capacity changes, per-block wind output is not linear
in capacity; a straight line fitted through the block's mean output at a few
capacity levels gives a slope usable as the linear constraint
``wind_generation <= slope * invested_capacity`` inside the stage LPs.

The peak block's aggregate net demand is provably convex and non-increasing
in capacity, and the trough block's concave and non-increasing; the shape
check verifies both by exhaustive re-sorting over a fine capacity grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FACTOR_SLACK = 0.05  # capacity factors slightly above 1 are tolerated, flagged


class WindError(Exception):
    pass


@dataclass
class WindTraces:
    """Hourly capacity factors per region and week, plus national shares.

    ``factors[region]`` has shape (weeks, observations) where observations are
    the 168 hours of the week times the number of trace years.
    """

    regions: tuple
    shares: dict
    factors: dict
    years: int = 1
    flagged: list = field(default_factory=list)

    def __post_init__(self):
        if not self.regions:
            raise WindError("no wind regions")
        total = sum(self.shares.get(r, 0.0) for r in self.regions)
        if abs(total - 1.0) > 1e-9:
            raise WindError(f"region shares sum to {total!r}, not 1")
        shapes = set()
        for r in self.regions:
            lam = np.asarray(self.factors.get(r))
            if lam is None or lam.ndim != 2:
                raise WindError(f"capacity factors for {r!r} must be (weeks, hours)")
            if not np.isfinite(lam).all() or (lam < 0).any():
                raise WindError(f"capacity factors for {r!r} must be finite and >= 0")
            if (lam > 1.0 + FACTOR_SLACK).any():
                raise WindError(f"capacity factors for {r!r} exceed 1 beyond tolerance")
            if (lam > 1.0).any():
                self.flagged.append(r)
            self.factors[r] = lam.astype(float)
            shapes.add(lam.shape)
        if len(shapes) != 1:
            raise WindError("capacity factor tables differ in shape across regions")
        shape = shapes.pop()
        if shape[1] % self.years != 0:
            raise WindError(
                f"{shape[1]} observations per week does not divide into {self.years} trace years"
            )

    @property
    def hours_per_week(self):
        return self.observations // self.years

    @property
    def weeks(self):
        return next(iter(self.factors.values())).shape[0]

    @property
    def observations(self):
        return next(iter(self.factors.values())).shape[1]


def net_demand(demand, traces, capacity_mw):
    """Per-region net demand: D_r - lambda_r * alpha_r * K, hour by hour."""
    if capacity_mw < 0:
        raise WindError(f"capacity must be non-negative, got {capacity_mw}")
    out = {}
    for r in traces.regions:
        d = np.asarray(demand[r], dtype=float)
        lam = traces.factors[r]
        if d.shape != lam.shape:
            raise WindError(
                f"demand shape {d.shape} for {r!r} does not match traces {lam.shape}"
            )
        out[r] = d - lam * traces.shares[r] * capacity_mw
    return out


def system_net_demand(demand, traces, capacity_mw):
    per_region = net_demand(demand, traces, capacity_mw)
    return sum(per_region[r] for r in traces.regions)


@dataclass
class BlockAssignment:
    members: list  # per block: observation indices, sorted-descending order
    levels: np.ndarray  # per block: mean net demand


def build_blocks(series, block_hours):
    """Split one week's observations into duration blocks of fixed hour counts.

    Observations are ranked by net demand descending, ties broken by index
    ascending; block b takes the next block_hours[b] of them.
    """
    series = np.asarray(series, dtype=float)
    hours = np.asarray(block_hours)
    if hours.sum() != series.shape[0]:
        raise WindError(
            f"block hours sum to {hours.sum()} but the series has {series.shape[0]} observations"
        )
    if (hours < 1).any():
        raise WindError("every block needs at least one observation")
    order = np.lexsort((np.arange(series.shape[0]), -series))
    members, levels = [], []
    start = 0
    for count in hours.astype(int):
        idx = order[start : start + count]
        members.append(idx)
        levels.append(float(series[idx].mean()))
        start += count
    return BlockAssignment(members, np.array(levels))


@dataclass
class WindSlopeTable:
    """Fitted slopes mu[region][week, block] plus fit diagnostics.

    ``mu`` holds the clamped slopes used in constraints; ``raw_mu`` keeps the
    unclamped fit for diagnostics. Negative fits are clamped to zero because
    a negative slope together with wind >= 0 would make any positive
    investment infeasible.
    """

    regions: tuple
    shares: dict
    block_hours: np.ndarray  # (weeks, blocks)
    k_grid: np.ndarray
    k_nominal: float
    mu: dict
    raw_mu: dict
    clamped: dict
    residual_norm: dict
    nominal_members: list  # per week: BlockAssignment at the nominal capacity

    @property
    def weeks(self):
        return self.block_hours.shape[0]

    @property
    def blocks(self):
        return self.block_hours.shape[1]

    @property
    def clamp_count(self):
        return int(sum(m.sum() for m in self.clamped.values()))

    def week_mean_mu(self):
        """Mean slope per block across weeks and regions (ordering diagnostic)."""
        total = sum(self.raw_mu[r] for r in self.regions)
        return total.mean(axis=0)

    def block_ordering_violations(self):
        """How often the mean slope fails to rise from peak block to trough."""
        means = self.week_mean_mu()
        return int(np.sum(np.diff(means) < -1e-12))

    def to_csv(self):
        lines = ["region,week,block,mu,clamped,residual_norm"]
        for r in self.regions:
            for t in range(self.weeks):
                for b in range(self.blocks):
                    lines.append(
                        f"{r},{t},{b},{self.mu[r][t, b]:.9g},"
                        f"{int(self.clamped[r][t, b])},{self.residual_norm[r][t, b]:.9g}"
                    )
        return "\n".join(lines) + "\n"


def fit_slopes(demand, traces, k_grid, k_nominal, block_hours):
    """Least-squares slope of block-mean wind output against capacity.

    For each grid capacity the blocks are re-sorted; the fitted line's slope
    (intercept discarded: the constraint is homogeneous) estimates the extra
    wind admitted to that block per MW of national capacity.
    """
    k_grid = np.asarray(k_grid, dtype=float)
    if k_grid.size < 2 or np.unique(k_grid).size < 2:
        raise WindError("capacity grid needs at least two distinct points")
    if not k_grid.min() <= k_nominal <= k_grid.max():
        raise WindError("nominal capacity must lie within the grid hull")
    block_hours = np.asarray(block_hours)
    weeks, B = block_hours.shape
    if weeks != traces.weeks:
        raise WindError("block-hour table and traces disagree on week count")
    mu = {r: np.zeros((weeks, B)) for r in traces.regions}
    raw = {r: np.zeros((weeks, B)) for r in traces.regions}
    clamped = {r: np.zeros((weeks, B), dtype=bool) for r in traces.regions}
    residual = {r: np.zeros((weeks, B)) for r in traces.regions}
    nominal_members = []
    for t in range(weeks):
        assignments = {}
        for K in k_grid:
            series = _system_series_week(demand, traces, K, t)
            assignments[float(K)] = build_blocks(series, block_hours[t])
        nominal_members.append(
            build_blocks(_system_series_week(demand, traces, k_nominal, t), block_hours[t])
        )
        for r in traces.regions:
            lam = traces.factors[r][t]
            alpha = traces.shares[r]
            for b in range(B):
                hours_b = float(block_hours[t, b])
                points = np.array(
                    [
                        alpha * K * lam[assignments[float(K)].members[b]].sum() / hours_b
                        for K in k_grid
                    ]
                )
                slope, intercept = np.polyfit(k_grid, points, 1)
                fitted = slope * k_grid + intercept
                raw[r][t, b] = slope
                residual[r][t, b] = float(np.linalg.norm(points - fitted))
                if slope < 0:
                    clamped[r][t, b] = True
                    mu[r][t, b] = 0.0
                else:
                    mu[r][t, b] = slope
    return WindSlopeTable(
        regions=traces.regions,
        shares=dict(traces.shares),
        block_hours=block_hours,
        k_grid=k_grid,
        k_nominal=float(k_nominal),
        mu=mu,
        raw_mu=raw,
        clamped=clamped,
        residual_norm=residual,
        nominal_members=nominal_members,
    )


def _system_series_week(demand, traces, K, week):
    total = None
    for r in traces.regions:
        d = np.asarray(demand[r], dtype=float)[week]
        lam = traces.factors[r][week]
        term = d - lam * traces.shares[r] * K
        total = term if total is None else total + term
    return total


@dataclass
class ShapeReport:
    k_grid: np.ndarray
    peak_aggregate: np.ndarray  # block-1 total net demand per K
    trough_aggregate: np.ndarray  # block-B total net demand per K
    peak_convex: bool
    peak_nonincreasing: bool
    trough_concave: bool
    trough_nonincreasing: bool
    max_convexity_violation: float
    max_concavity_violation: float


def block_shape_check(demand, traces, k_grid, block_hours, week=0, tol=1e-9):
    """Exact aggregate net demand of the extreme blocks over a fine capacity grid."""
    k_grid = np.asarray(k_grid, dtype=float)
    if k_grid.size < 3:
        raise WindError("shape check needs at least three grid points")
    hours = np.asarray(block_hours)
    peak = np.empty(k_grid.size)
    trough = np.empty(k_grid.size)
    for i, K in enumerate(k_grid):
        series = _system_series_week(demand, traces, K, week)
        assignment = build_blocks(series, hours)
        peak[i] = series[assignment.members[0]].sum()
        trough[i] = series[assignment.members[-1]].sum()
    d2_peak = np.diff(peak, 2)
    d2_trough = np.diff(trough, 2)
    scale = max(1.0, np.abs(peak).max(), np.abs(trough).max())
    return ShapeReport(
        k_grid=k_grid,
        peak_aggregate=peak,
        trough_aggregate=trough,
        peak_convex=bool((d2_peak >= -tol * scale).all()),
        peak_nonincreasing=bool((np.diff(peak) <= tol * scale).all()),
        trough_concave=bool((d2_trough <= tol * scale).all()),
        trough_nonincreasing=bool((np.diff(trough) <= tol * scale).all()),
        max_convexity_violation=float(np.maximum(-d2_peak, 0.0).max(initial=0.0)),
        max_concavity_violation=float(np.maximum(d2_trough, 0.0).max(initial=0.0)),
    )
