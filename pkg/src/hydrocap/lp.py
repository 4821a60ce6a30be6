"""Small dense LP layer: named variables/rows, bounded-variable simplex, duals.

Stage subproblems at desk scale have at most a few hundred variables, so the
solver is a dense bounded-variable simplex with an explicit basis inverse.
It supports the three mutations the training loop needs cheaply:

* ``set_rhs`` (state fixing, noise realizations) keeps the factorized basis
  and repairs feasibility with a composite phase-1,
* ``add_row`` (cut insertion) extends the basis with the new slack,
* repeated ``solve`` calls warm-start from the previous basis.

Duals follow the sensitivity convention: the dual of a row is the derivative
of the optimal objective with respect to that row's right-hand side.
"""

from __future__ import annotations

import numpy as np

try:  # BLAS rank-1 update; pure-numpy fallback below keeps scipy optional
    from scipy.linalg.blas import dger as _dger
except Exception:  # pragma: no cover
    _dger = None

INF = float("inf")

# column states
_AT_LOWER = 0
_AT_UPPER = 1
_BASIC = 2
_FREE = 3  # nonbasic free column, parked at value 0

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


class LpError(Exception):
    """Base class for LP layer errors."""


class UnknownVariableError(LpError):
    pass


class UnknownConstraintError(LpError):
    pass


class MalformedRowError(LpError):
    pass


class LpNumericalError(LpError):
    """Solver failed to converge; distinct from a proven infeasible status."""


_SENSES = ("<=", "=", ">=")


class LpSolution:
    """Result of one solve: status, objective, primal values, designated duals."""

    __slots__ = ("status", "objective", "_x_data", "_var_index", "duals")

    def __init__(self, status, objective, x, var_index, duals):
        self.status = status
        self.objective = objective
        self._x_data = x
        self._var_index = var_index
        self.duals = duals

    @property
    def _x(self):
        x = self._x_data
        if callable(x):
            x = x()
            self._x_data = x
        return x

    def value(self, name):
        try:
            return float(self._x[self._var_index[name]])
        except KeyError:
            raise UnknownVariableError(name) from None

    def dual(self, name):
        try:
            return self.duals[name]
        except KeyError:
            raise UnknownConstraintError(
                f"{name!r} is not in the designated-dual set"
            ) from None

    @property
    def primal_values(self):
        return {name: float(self._x[i]) for name, i in self._var_index.items()}


class LpModel:
    """Named-variable, named-row linear program: min c'x, rows a'x {<=,=,>=} b."""

    def __init__(self, name="lp", tol=1e-7):
        self.name = name
        self.tol = float(tol)
        self._var_names = []
        self._var_index = {}
        self._row_names = []
        self._row_index = {}
        self._cap_n = 16
        self._cap_m = 16
        self._lb = np.zeros(self._cap_n)
        self._ub = np.zeros(self._cap_n)
        self._cost = np.zeros(self._cap_n)
        self._A = np.zeros((self._cap_m, self._cap_n))
        self._rhs = np.zeros(self._cap_m)
        self._slack_lb = np.zeros(self._cap_m)
        self._slack_ub = np.zeros(self._cap_m)
        self.designated = set()
        self._state = None  # warm-start basis carried between solves

    # -- construction --------------------------------------------------------

    @property
    def num_variables(self):
        return len(self._var_names)

    @property
    def num_rows(self):
        return len(self._row_names)

    @property
    def variable_names(self):
        return tuple(self._var_names)

    @property
    def row_names(self):
        return tuple(self._row_names)

    def add_variable(self, name, lb=0.0, ub=INF, cost=0.0):
        if name in self._var_index:
            raise MalformedRowError(f"duplicate variable {name!r}")
        if not np.isfinite(cost):
            raise MalformedRowError(f"non-finite cost for {name!r}")
        if np.isnan(lb) or np.isnan(ub) or lb > ub:
            raise MalformedRowError(f"bad bounds [{lb}, {ub}] for {name!r}")
        n = len(self._var_names)
        if n == self._cap_n:
            self._grow_vars()
        self._var_index[name] = n
        self._var_names.append(name)
        self._lb[n] = lb
        self._ub[n] = ub
        self._cost[n] = cost
        self._state = None
        return name

    def add_row(self, name, coeffs, sense, rhs):
        """Append one constraint; coefficients reference declared variables only."""
        if name in self._row_index:
            raise MalformedRowError(f"duplicate row {name!r}")
        if sense not in _SENSES:
            raise MalformedRowError(f"bad sense {sense!r}")
        if not np.isfinite(rhs):
            raise MalformedRowError(f"non-finite rhs for row {name!r}")
        m = len(self._row_names)
        if m == self._cap_m:
            self._grow_rows()
        row = self._A[m]
        row[: len(self._var_names)] = 0.0
        for var, coef in coeffs.items():
            j = self._var_index.get(var)
            if j is None:
                raise MalformedRowError(f"row {name!r} references undeclared {var!r}")
            if not np.isfinite(coef):
                raise MalformedRowError(f"non-finite coefficient in row {name!r}")
            row[j] = coef
        self._rhs[m] = rhs
        if sense == "<=":
            self._slack_lb[m], self._slack_ub[m] = 0.0, INF
        elif sense == "=":
            self._slack_lb[m], self._slack_ub[m] = 0.0, 0.0
        else:
            self._slack_lb[m], self._slack_ub[m] = -INF, 0.0
        self._row_index[name] = m
        self._row_names.append(name)
        if self._state is not None:
            self._state.append_row(self)
        return name

    def designate_dual(self, name):
        if name not in self._row_index:
            raise UnknownConstraintError(name)
        self.designated.add(name)

    # -- mutation --------------------------------------------------------------

    def set_rhs(self, name, value):
        i = self._row_index.get(name)
        if i is None:
            raise UnknownConstraintError(name)
        if not np.isfinite(value):
            raise MalformedRowError(f"non-finite rhs for row {name!r}")
        old = self._rhs[i]
        self._rhs[i] = value
        if self._state is not None and value != old:
            self._state.shift_rhs(i, value - old)

    def get_rhs(self, name):
        i = self._row_index.get(name)
        if i is None:
            raise UnknownConstraintError(name)
        return float(self._rhs[i])

    def set_bounds(self, name, lb, ub):
        j = self._var_index.get(name)
        if j is None:
            raise UnknownVariableError(name)
        if np.isnan(lb) or np.isnan(ub) or lb > ub:
            raise MalformedRowError(f"bad bounds [{lb}, {ub}] for {name!r}")
        self._lb[j], self._ub[j] = lb, ub
        self._state = None

    def set_cost(self, name, cost):
        j = self._var_index.get(name)
        if j is None:
            raise UnknownVariableError(name)
        self._cost[j] = cost
        self._state = None

    def set_coefficient(self, row, var, coef):
        i = self._row_index.get(row)
        if i is None:
            raise UnknownConstraintError(row)
        j = self._var_index.get(var)
        if j is None:
            raise UnknownVariableError(var)
        if not np.isfinite(coef):
            raise MalformedRowError(f"non-finite coefficient for {var!r} in {row!r}")
        self._A[i, j] = coef
        self._state = None

    def column_of(self, name):
        j = self._var_index.get(name)
        if j is None:
            raise UnknownVariableError(name)
        return j

    def row_coefficients(self, name):
        i = self._row_index.get(name)
        if i is None:
            raise UnknownConstraintError(name)
        n = len(self._var_names)
        row = self._A[i, :n]
        return {self._var_names[j]: float(row[j]) for j in np.nonzero(row)[0]}

    def clone(self):
        other = LpModel(self.name, self.tol)
        n, m = len(self._var_names), len(self._row_names)
        other._var_names = list(self._var_names)
        other._var_index = dict(self._var_index)
        other._row_names = list(self._row_names)
        other._row_index = dict(self._row_index)
        other._cap_n = max(n, 16)
        other._cap_m = max(m, 16)
        other._lb = _resized(self._lb, other._cap_n)
        other._ub = _resized(self._ub, other._cap_n)
        other._cost = _resized(self._cost, other._cap_n)
        other._A = np.zeros((other._cap_m, other._cap_n))
        other._A[:m, :n] = self._A[:m, :n]
        other._rhs = _resized(self._rhs, other._cap_m)
        other._slack_lb = _resized(self._slack_lb, other._cap_m)
        other._slack_ub = _resized(self._slack_ub, other._cap_m)
        other.designated = set(self.designated)
        return other

    def _grow_vars(self):
        self._cap_n *= 2
        self._lb = _resized(self._lb, self._cap_n)
        self._ub = _resized(self._ub, self._cap_n)
        self._cost = _resized(self._cost, self._cap_n)
        A = np.zeros((self._cap_m, self._cap_n))
        A[:, : self._A.shape[1]] = self._A
        self._A = A

    def _grow_rows(self):
        self._cap_m *= 2
        A = np.zeros((self._cap_m, self._cap_n))
        A[: self._A.shape[0]] = self._A
        self._A = A
        self._rhs = _resized(self._rhs, self._cap_m)
        self._slack_lb = _resized(self._slack_lb, self._cap_m)
        self._slack_ub = _resized(self._slack_ub, self._cap_m)

    # -- solving -----------------------------------------------------------------

    def solve(self, warm=True):
        """Solve and return an LpSolution; duals reported for designated rows."""
        if not warm or self._state is None:
            self._state = _Simplex(self)
        try:
            return self._state.solve(self)
        except LpNumericalError:
            # stale warm bases can wedge; one cold retry before giving up
            if warm:
                self._state = _Simplex(self)
                return self._state.solve(self)
            raise


def solve(model, warm=True):
    return model.solve(warm=warm)


def _resized(arr, cap):
    new = np.zeros(cap)
    new[: min(arr.shape[0], cap)] = arr[: min(arr.shape[0], cap)]
    return new


class _Simplex:
    """Bounded-variable simplex with a dense basis inverse.

    Columns 0..n-1 are structural, n..n+m-1 the row slacks (a'x + s = b).
    Cold starts run a composite phase-1 then the primal simplex. Re-solves
    after rhs changes or row appends start from the previous basis, which is
    still dual feasible, so the bounded dual simplex repairs it in a pivot or
    two; a final primal pricing pass verifies optimality.

    All hot-path arrays are preallocated to capacity and grown amortized:
    the training loop calls this tens of thousands of times on small LPs and
    per-call numpy overhead is the binding constraint.
    """

    MAX_STALL = 60
    REFACTOR_EVERY = 400

    def __init__(self, model):
        n, m = model.num_variables, model.num_rows
        self.n, self.m = n, m
        self.mcap = max(2 * m, 32)
        ncols = n + self.mcap
        self.status_of = np.empty(ncols, dtype=np.int8)
        lb, ub = model._lb[:n], model._ub[:n]
        self.status_of[:n] = np.where(
            np.isfinite(lb), _AT_LOWER, np.where(np.isfinite(ub), _AT_UPPER, _FREE)
        )
        self.status_of[n : n + m] = _BASIC
        self.basis = np.empty(self.mcap, dtype=np.int64)
        self.basis[:m] = np.arange(n, n + m)
        self.Binv = np.eye(m)  # kept exactly (m, m) and C-contiguous for BLAS
        self.xB = np.zeros(self.mcap)
        self.lb_full = np.empty(ncols)
        self.ub_full = np.empty(ncols)
        self.lb_full[:n] = lb
        self.ub_full[:n] = ub
        self.lb_full[n : n + m] = model._slack_lb[:m]
        self.ub_full[n : n + m] = model._slack_ub[:m]
        # basis-aligned bounds, maintained across pivots
        self.lbB = np.empty(self.mcap)
        self.ubB = np.empty(self.mcap)
        self.lbB[:m] = model._slack_lb[:m]
        self.ubB[:m] = model._slack_ub[:m]
        self.pivots = 0
        self.dual_ready = False  # true once an optimal basis exists
        # basis-aligned objective costs and the nonbasic direction vector,
        # both maintained across pivots
        self.costB = np.zeros(self.mcap)
        self.sv = np.zeros(ncols)
        self.sv[: n + m][self.status_of[: n + m] == _AT_LOWER] = 1.0
        self.sv[: n + m][self.status_of[: n + m] == _AT_UPPER] = -1.0
        self.has_free = bool((self.status_of[: n + m] == _FREE).any())
        # reduced costs, valid only while d_valid (rhs edits and appended rows
        # leave them untouched; pivots update them incrementally)
        self.d = np.zeros(ncols)
        self.d_valid = False
        self.audit = 0
        self._wbuf = np.empty(self.mcap)
        self._mbuf1 = np.empty(self.mcap)
        self._mbuf2 = np.empty(self.mcap)
        self._cbuf = np.empty(ncols)
        # position of each column in the basis, -1 when nonbasic
        self.basis_pos = np.full(ncols, -1, dtype=np.int64)
        self.basis_pos[n : n + m] = np.arange(m)
        self._recompute_xB(model)

    def _grow(self, model):
        self.mcap *= 2
        ncols = self.n + self.mcap
        for name in ("basis",):
            old = getattr(self, name)
            new = np.empty(self.mcap, dtype=old.dtype)
            new[: self.m] = old[: self.m]
            setattr(self, name, new)
        for name in ("xB", "lbB", "ubB"):
            old = getattr(self, name)
            new = np.empty(self.mcap)
            new[: self.m] = old[: self.m]
            setattr(self, name, new)
        status = np.empty(ncols, dtype=np.int8)
        status[: self.n + self.m] = self.status_of[: self.n + self.m]
        self.status_of = status
        for name in ("lb_full", "ub_full"):
            old = getattr(self, name)
            new = np.empty(ncols)
            new[: self.n + self.m] = old[: self.n + self.m]
            setattr(self, name, new)
        costB = np.zeros(self.mcap)
        costB[: self.m] = self.costB[: self.m]
        self.costB = costB
        sv = np.zeros(ncols)
        sv[: self.n + self.m] = self.sv[: self.n + self.m]
        self.sv = sv
        d = np.zeros(ncols)
        d[: self.n + self.m] = self.d[: self.n + self.m]
        self.d = d
        basis_pos = np.full(ncols, -1, dtype=np.int64)
        basis_pos[: self.n + self.m] = self.basis_pos[: self.n + self.m]
        self.basis_pos = basis_pos
        self._wbuf = np.empty(self.mcap)
        self._mbuf1 = np.empty(self.mcap)
        self._mbuf2 = np.empty(self.mcap)
        self._cbuf = np.empty(ncols)

    # -- geometry helpers ----------------------------------------------------

    def _column(self, model, j):
        if j < self.n:
            return model._A[: self.m, j]
        col = np.zeros(self.m)
        col[j - self.n] = 1.0
        return col

    def _nonbasic_struct_values(self, model):
        n = self.n
        vals = np.zeros(n)
        st = self.status_of[:n]
        at_lo = st == _AT_LOWER
        at_up = st == _AT_UPPER
        vals[at_lo] = model._lb[:n][at_lo]
        vals[at_up] = model._ub[:n][at_up]
        return vals

    def _primal_vector(self, model):
        vals = self._nonbasic_struct_values(model)
        basis = self.basis[: self.m]
        struct = basis < self.n
        if struct.any():
            vals[basis[struct]] = self.xB[: self.m][struct]
        return vals

    def _cost_B(self, model):
        return self.costB[: self.m]

    def _recompute_xB(self, model):
        vals = self._nonbasic_struct_values(model)
        rhs_eff = model._rhs[: self.m] - model._A[: self.m, : self.n] @ vals
        self.xB[: self.m] = self.Binv @ rhs_eff

    def shift_rhs(self, i, delta):
        self.xB[: self.m] += self.Binv[: self.m, i] * delta

    def append_row(self, model):
        """Extend the basis with the new row's slack (kept valid for warm start)."""
        if self.m == self.mcap:
            self._grow(model)
        i = model.num_rows - 1
        m = self.m
        a_struct = model._A[i, : self.n]
        a_B = np.zeros(m)
        basis = self.basis[:m]
        struct = basis < self.n
        if struct.any():
            a_B[struct] = a_struct[basis[struct]]
        Bi = np.empty((m + 1, m + 1))
        Bi[:m, :m] = self.Binv
        Bi[m, :m] = -(a_B @ self.Binv)
        Bi[:m, m] = 0.0
        Bi[m, m] = 1.0
        self.Binv = Bi
        s_new = model._rhs[i] - a_struct @ self._primal_vector(model)
        col = self.n + i
        self.basis[m] = col
        self.xB[m] = s_new
        self.status_of[col] = _BASIC
        self.lb_full[col] = model._slack_lb[i]
        self.ub_full[col] = model._slack_ub[i]
        self.lbB[m] = model._slack_lb[i]
        self.ubB[m] = model._slack_ub[i]
        self.costB[m] = 0.0
        self.sv[col] = 0.0
        self.d[col] = 0.0
        self.basis_pos[col] = m
        self.m += 1

    # -- shared pivot mechanics ----------------------------------------------

    def _pivot(self, model, r, j, w, t, sigma, leaves_upper, enter_val):
        """Basis change: column j enters at position r after moving t along sigma."""
        m = self.m
        xB = self.xB[:m]
        if t != 0.0:
            step = self._mbuf1[:m]
            np.multiply(w, sigma * t, out=step)
            np.subtract(xB, step, out=xB)
        piv = w[r]
        if abs(piv) < 1e-11:
            raise LpNumericalError("pivot element vanished")
        leaving = self.basis[r]
        self.status_of[leaving] = _AT_UPPER if leaves_upper else _AT_LOWER
        Bi = self.Binv
        Bi[r] /= piv
        w_r = w[r]
        w[r] = 0.0
        if _dger is not None:
            row = Bi[r].copy()
            _dger(-1.0, row, w, a=Bi.T, overwrite_a=1)
        else:
            Bi -= w[:, None] * Bi[r][None, :]
        w[r] = w_r
        self.basis[r] = j
        self.status_of[j] = _BASIC
        xB[r] = enter_val + sigma * t
        self.lbB[r] = self.lb_full[j]
        self.ubB[r] = self.ub_full[j]
        self.costB[r] = model._cost[j] if j < self.n else 0.0
        self.sv[j] = 0.0
        self.sv[leaving] = -1.0 if leaves_upper else 1.0
        self.basis_pos[leaving] = -1
        self.basis_pos[j] = r
        self.pivots += 1
        if self.pivots % self.REFACTOR_EVERY == 0:
            self._refactor(model)

    def _refactor(self, model):
        m = self.m
        cols = np.empty((m, m))
        for k in range(m):
            cols[:, k] = self._column(model, int(self.basis[k]))
        try:
            self.Binv = np.linalg.inv(cols)
        except np.linalg.LinAlgError as exc:
            raise LpNumericalError("singular basis during refactorization") from exc
        self._recompute_xB(model)
        self.d_valid = False

    def column_value(self, j):
        pos = self.basis_pos[j]
        if pos >= 0:
            return float(self.xB[pos])
        st = self.status_of[j]
        if st == _AT_LOWER:
            return float(self.lb_full[j])
        if st == _AT_UPPER:
            return float(self.ub_full[j])
        return 0.0

    def _entering_value(self, j):
        st = self.status_of[j]
        if st == _AT_LOWER:
            return self.lb_full[j]
        if st == _AT_UPPER:
            return self.ub_full[j]
        return 0.0

    # -- primal side (cold starts and verification) ------------------------------

    def _entering(self, d, bland):
        nm = self.n + self.m
        st = self.status_of[:nm]
        viol = np.zeros(nm)
        lower_mask = (st == _AT_LOWER) & (d < -1e-9)
        upper_mask = (st == _AT_UPPER) & (d > 1e-9)
        free_mask = (st == _FREE) & (np.abs(d) > 1e-9)
        viol[lower_mask] = -d[lower_mask]
        viol[upper_mask] = d[upper_mask]
        viol[free_mask] = np.abs(d[free_mask])
        candidates = np.nonzero(viol > 0)[0]
        if candidates.size == 0:
            return -1, 0
        if bland:
            j = int(candidates[0])
        else:
            j = int(candidates[np.argmax(viol[candidates])])
        if st[j] == _AT_LOWER:
            sigma = 1
        elif st[j] == _AT_UPPER:
            sigma = -1
        else:
            sigma = 1 if d[j] < 0 else -1
        return j, sigma

    def _reduced_costs(self, model, cost_struct, cost_B):
        m = self.m
        y = self.Binv.T @ cost_B
        d = np.empty(self.n + m)
        d[: self.n] = cost_struct - y @ model._A[:m, : self.n]
        d[self.n :] = -y
        return d, y

    def _ratio_test(self, model, w, sigma, phase1):
        """Return (t, leaving_pos, leaving_to_upper); leaving_pos -1 = no block."""
        m = self.m
        if m == 0:
            return INF, -1, False
        lbB = self.lbB[:m]
        ubB = self.ubB[:m]
        xB = self.xB[:m]
        delta = -sigma * w
        t = np.full(m, INF)
        to_upper = np.zeros(m, dtype=bool)
        eps = 1e-11
        up = delta > eps
        down = delta < -eps
        tol = model.tol
        if phase1:
            below = xB < lbB - tol
            above = xB > ubB + tol
            feas = ~below & ~above
            sel = up & feas & np.isfinite(ubB)
            t[sel] = (ubB[sel] - xB[sel]) / delta[sel]
            to_upper[sel] = True
            sel = down & feas & np.isfinite(lbB)
            t[sel] = (xB[sel] - lbB[sel]) / (-delta[sel])
            # infeasible basics block where they re-enter their bound
            sel = up & below
            t[sel] = (lbB[sel] - xB[sel]) / delta[sel]
            to_upper[sel] = False
            sel = down & above
            t[sel] = (xB[sel] - ubB[sel]) / (-delta[sel])
            to_upper[sel] = True
        else:
            sel = up & np.isfinite(ubB)
            t[sel] = (ubB[sel] - xB[sel]) / delta[sel]
            to_upper[sel] = True
            sel = down & np.isfinite(lbB)
            t[sel] = (xB[sel] - lbB[sel]) / (-delta[sel])
        np.maximum(t, 0.0, out=t)
        tmin = t.min()
        if not np.isfinite(tmin):
            return INF, -1, False
        ties = np.nonzero(t <= tmin + 1e-12)[0]
        r = int(ties[np.argmax(np.abs(w[ties]))])
        return float(t[r]), r, bool(to_upper[r])

    def _own_range(self, j):
        return self.ub_full[j] - self.lb_full[j]

    def _flip(self, j, sigma, w, t_flip):
        if t_flip != 0.0:
            self.xB[: self.m] -= (sigma * t_flip) * w
        self.status_of[j] = _AT_UPPER if sigma > 0 else _AT_LOWER
        self.sv[j] = -1.0 if sigma > 0 else 1.0

    def _phase1(self, model, tol, max_iter):
        self.d_valid = False
        if self.m == 0:
            return True
        bland = False
        stall = 0
        last = INF
        for _ in range(max_iter):
            m = self.m
            xB = self.xB[:m]
            lbB = self.lbB[:m]
            ubB = self.ubB[:m]
            below = np.maximum(lbB - xB, 0.0)
            above = np.maximum(xB - ubB, 0.0)
            below[~np.isfinite(below)] = 0.0
            above[~np.isfinite(above)] = 0.0
            total = below.sum() + above.sum()
            if max(below.max(initial=0.0), above.max(initial=0.0)) <= tol:
                return True
            if total > last - 1e-12:
                stall += 1
                if stall > self.MAX_STALL:
                    bland = True
            else:
                stall = 0
            last = total
            g = np.zeros(m)
            g[xB < lbB - tol] = -1.0
            g[xB > ubB + tol] = 1.0
            # same pricing algebra as the primal phase with cost g on the basics
            d, _ = self._reduced_costs(model, np.zeros(self.n), g)
            j, sigma = self._entering(d, bland)
            if j < 0:
                return False
            w = self.Binv @ self._column(model, j)
            t, r, leaves_upper = self._ratio_test(model, w, sigma, phase1=True)
            t_flip = self._own_range(j)
            if t_flip < t:
                self._flip(j, sigma, w, t_flip)
                continue
            if not np.isfinite(t):
                raise LpNumericalError("phase-1 step unbounded")
            self._pivot(model, r, j, w, t, sigma, leaves_upper, self._entering_value(j))
        raise LpNumericalError("phase-1 iteration limit exceeded")

    def _phase2(self, model, tol, max_iter):
        self.d_valid = False
        bland = False
        stall = 0
        cost_struct = model._cost[: self.n]
        for _ in range(max_iter):
            d, y = self._reduced_costs(model, cost_struct, self._cost_B(model))
            j, sigma = self._entering(d, bland)
            if j < 0:
                self.dual_ready = True
                self.d[: self.n + self.m] = d
                self.d_valid = True
                return self._finish(model, OPTIMAL, y)
            m = self.m
            w = self.Binv @ self._column(model, j)
            t, r, leaves_upper = self._ratio_test(model, w, sigma, phase1=False)
            t_flip = self._own_range(j)
            if t_flip < t:
                self._flip(j, sigma, w, t_flip)
                continue
            if not np.isfinite(t):
                return self._finish(model, UNBOUNDED)
            if t <= 1e-12:
                stall += 1
                if stall > self.MAX_STALL:
                    bland = True
            else:
                stall = 0
            self._pivot(model, r, j, w, t, sigma, leaves_upper, self._entering_value(j))
        raise LpNumericalError("phase-2 iteration limit exceeded")

    # -- dual simplex (warm re-solves) --------------------------------------------

    def _refresh_reduced_costs(self, model):
        nm = self.n + self.m
        d, _ = self._reduced_costs(model, model._cost[: self.n], self.costB[: self.m])
        self.d[:nm] = d
        self.d_valid = True

    def _dual_simplex(self, model, tol, max_iter):
        """Restore primal feasibility while keeping reduced costs sign-feasible.

        The basis is dual feasible on entry: rhs edits and row appends leave
        reduced costs untouched, and ``dual_ready`` is dropped on any other
        mutation. INFEASIBLE is certified by the absence of entering
        candidates, which does not depend on the incrementally updated reduced
        costs. Ends primal feasible; the caller verifies optimality against
        the maintained reduced costs.
        """
        n = self.n
        stall = 0
        err_state = np.seterr(divide="ignore", invalid="ignore")
        try:
            return self._dual_loop(model, tol, max_iter, n)
        finally:
            np.seterr(**err_state)

    def _dual_loop(self, model, tol, max_iter, n):
        stall = 0
        for _ in range(max_iter):
            m = self.m
            if m == 0:
                return True
            xB = self.xB[:m]
            lbB = self.lbB[:m]
            ubB = self.ubB[:m]
            below = self._mbuf1[:m]
            above = self._mbuf2[:m]
            np.subtract(lbB, xB, out=below)
            np.subtract(xB, ubB, out=above)
            viol = np.maximum(below, above)
            r = int(viol.argmax())
            if not viol[r] > tol:  # also catches all-(-inf) rows
                return True
            if not self.d_valid:
                self._refresh_reduced_costs(model)
            d = self.d
            leaving_below = below[r] >= above[r]
            rowvec = self.Binv[r]
            nm = n + m
            alpha = self._cbuf[:nm]
            np.matmul(rowvec, model._A[:m, :n], out=alpha[:n])
            alpha[n:] = rowvec
            # candidates have alpha directed against the violated bound; for
            # them |d|/|alpha| reduces to -(d/alpha) below and +(d/alpha) above
            signed = alpha * self.sv[:nm]
            q = d[:nm] / alpha
            if leaving_below:
                score = np.where(signed < -1e-9, -q, INF)
            else:
                score = np.where(signed > 1e-9, q, INF)
            j = int(score.argmin())
            best = score[j]
            if not np.isfinite(best):
                if self.has_free:
                    free_cand = (self.status_of[:nm] == _FREE) & (np.abs(alpha) > 1e-9)
                    idx = np.nonzero(free_cand)[0]
                    if idx.size:
                        j = int(idx[np.argmax(np.abs(alpha[idx]))])
                        best = abs(d[j] / alpha[j])
                    else:
                        return self._finish(model, INFEASIBLE)
                else:
                    return self._finish(model, INFEASIBLE)
            if best <= 1e-12:
                stall += 1
                if stall > self.MAX_STALL:
                    return True  # degenerate churn: hand off primal feasible-ish
            else:
                stall = 0
            delta = (lbB[r] - xB[r]) if leaving_below else (ubB[r] - xB[r])
            t_signed = -delta / alpha[j]
            w = self._wbuf[:m]
            if j < n:
                np.matmul(self.Binv, model._A[:m, j], out=w)
            else:
                np.copyto(w, self.Binv[:, j - n])
            theta = d[j] / alpha[j]
            if theta != 0.0:
                step = alpha * theta
                d[:nm] -= step
            sigma = 1 if t_signed >= 0 else -1
            self._pivot(
                model, r, j, w, abs(t_signed), sigma,
                leaves_upper=not leaving_below,
                enter_val=self._entering_value(j),
            )
            d[j] = 0.0
        raise LpNumericalError("dual simplex iteration limit exceeded")

    # -- main entry -------------------------------------------------------------

    def solve(self, model):
        if model.num_variables != self.n or model.num_rows != self.m:
            raise LpNumericalError("solver state out of sync with model")
        tol = model.tol
        max_iter = 400 + 100 * (self.n + self.m)
        if self.dual_ready:
            self.audit += 1
            if self.audit % 64 == 0:
                self.d_valid = False  # periodic fresh pricing against drift
            outcome = self._dual_simplex(model, tol, max_iter)
            if outcome is True:
                if not self.d_valid:
                    self._refresh_reduced_costs(model)
                nm = self.n + self.m
                d = self.d[:nm]
                ok = not (d * self.sv[:nm] < -1e-9).any()
                if ok and self.has_free:
                    ok = not ((self.status_of[:nm] == _FREE) & (np.abs(d) > 1e-9)).any()
                if ok:
                    return self._finish(model, OPTIMAL)
                return self._phase2(model, tol, max_iter)
            if outcome is not False:
                return outcome  # infeasibility certificate
            self.dual_ready = False
        if not self._phase1(model, tol, max_iter):
            return self._finish(model, INFEASIBLE)
        return self._phase2(model, tol, max_iter)

    def _finish(self, model, status, y=None):
        if status != OPTIMAL:
            return LpSolution(
                status, INF if status == INFEASIBLE else -INF, None, model._var_index, {}
            )
        m, n = self.m, self.n
        vals = self._nonbasic_struct_values(model)
        objective = float(self.costB[:m] @ self.xB[:m]) + float(model._cost[:n] @ vals)
        duals = {}
        if model.designated:
            if y is None:
                costB = self.costB[:m]
                Binv = self.Binv
                for name in model.designated:
                    duals[name] = float(costB @ Binv[:, model._row_index[name]])
            else:
                for name in model.designated:
                    duals[name] = float(y[model._row_index[name]])
        basis = self.basis[:m].copy()
        xB = self.xB[:m].copy()

        def build_x(vals=vals, basis=basis, xB=xB, n=n):
            struct = basis < n
            if struct.any():
                vals[basis[struct]] = xB[struct]
            return vals

        return LpSolution(OPTIMAL, objective, build_x, model._var_index, duals)
