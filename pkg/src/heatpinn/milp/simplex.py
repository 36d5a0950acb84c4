"""Dense bounded-variable primal simplex with an explicit basis inverse.

Two-phase method: slacks absorb what they can, artificials cover the rest,
then the real objective runs on the feasible basis.  Pricing is Dantzig by
default and switches permanently to Bland's rule after a stall, which is the
anti-cycling safeguard.  The basis inverse is updated with rank-one pivots
and refactorised periodically to bound drift.

Slack and artificial columns are signed unit vectors and are never stored:
their reduced costs read off the dual vector and their FTRAN is a column of
the basis inverse, which keeps per-iteration work proportional to the
structural part of the model.
"""

from dataclasses import dataclass

import numpy as np

from .model import INFEASIBLE, OPTIMAL, MilpModel, _Compiled

EPS_D = 1e-9          # reduced-cost optimality tolerance
EPS_RATIO = 1e-9      # pivot eligibility in the ratio test
EPS_PIVOT = 1e-11     # below this a pivot is numerical breakdown
PHASE1_TOL = 1e-9     # residual infeasibility threshold
FEAS_TOL = 1e-7       # independent feasibility re-check
REFACTOR_EVERY = 400
STALL_LIMIT = 1000


class SimplexBreakdown(RuntimeError):
    """Numerical failure inside the simplex (tiny pivot, iteration runaway)."""


@dataclass
class LpResult:
    status: str
    x: np.ndarray | None
    objective: float
    iterations: int


class _Simplex:
    """Columns 0..nv-1 are structural; the rest are signed unit columns
    (one slack per row, then any artificials)."""

    def __init__(self, A: np.ndarray, rel: np.ndarray, b: np.ndarray,
                 lb: np.ndarray, ub: np.ndarray):
        m, nv = A.shape
        self.m, self.nv = m, nv
        self.b = b.astype(float)
        self.S = A

        # Unit-column metadata: slacks first (row i, sign +1), artificials appended.
        self.unit_row = np.arange(m, dtype=int)
        self.unit_sign = np.ones(m)
        L = np.concatenate([lb, np.zeros(m)])
        U = np.concatenate([ub, np.zeros(m)])
        for i in range(m):
            if rel[i] < 0:
                U[nv + i] = np.inf
            elif rel[i] > 0:
                L[nv + i] = -np.inf

        # Nonbasic start: each column at its finite bound of smaller magnitude.
        n0 = nv + m
        val = np.zeros(n0)
        at_lower = np.ones(n0, dtype=bool)
        for j in range(n0):
            lo, hi = L[j], U[j]
            if np.isfinite(lo) and (not np.isfinite(hi) or abs(lo) <= abs(hi)):
                val[j], at_lower[j] = lo, True
            else:
                val[j], at_lower[j] = hi, False

        r = b - A @ val[:nv] if m else np.zeros(0)
        basis = np.empty(m, dtype=int)
        art_rows, art_signs = [], []
        for i in range(m):
            s = nv + i
            if L[s] - 1e-11 <= r[i] <= U[s] + 1e-11:
                basis[i] = s
                val[s] = r[i]
            else:
                art_rows.append(i)
                art_signs.append(1.0 if r[i] >= 0.0 else -1.0)

        self.art_start = n0
        n_art = len(art_rows)
        if n_art:
            for k, (i, sign) in enumerate(zip(art_rows, art_signs)):
                basis[i] = n0 + k
            self.unit_row = np.concatenate([self.unit_row, np.array(art_rows, dtype=int)])
            self.unit_sign = np.concatenate([self.unit_sign, np.array(art_signs)])
            L = np.concatenate([L, np.zeros(n_art)])
            U = np.concatenate([U, np.full(n_art, np.inf)])
            val = np.concatenate([val, np.abs(r[np.array(art_rows, dtype=int)])])
            at_lower = np.concatenate([at_lower, np.ones(n_art, dtype=bool)])

        self.L, self.U = L, U
        self.val = val
        self.at_lower = at_lower
        self.n_total = n0 + n_art
        self.basis = basis
        self.is_basic = np.zeros(self.n_total, dtype=bool)
        self.is_basic[basis] = True
        self.fixed = (U - L) <= 1e-12
        self.iterations = 0
        self._pivots = 0

        if m:
            diag = np.ones(m)
            for i, sign in zip(art_rows, art_signs):
                diag[i] = sign
            self.Binv = np.diag(diag)
        else:
            self.Binv = np.zeros((0, 0))

    # -- column helpers -----------------------------------------------------
    def _ftran(self, j: int) -> np.ndarray:
        if j < self.nv:
            return self.Binv @ self.S[:, j]
        k = j - self.nv
        return self.unit_sign[k] * self.Binv[:, self.unit_row[k]]

    def _basis_matrix(self) -> np.ndarray:
        B = np.empty((self.m, self.m))
        for k, j in enumerate(self.basis):
            if j < self.nv:
                B[:, k] = self.S[:, j]
            else:
                u = j - self.nv
                B[:, k] = 0.0
                B[self.unit_row[u], k] = self.unit_sign[u]
        return B

    # -- linear algebra maintenance -----------------------------------------
    def _refactor(self) -> None:
        if not self.m:
            return
        try:
            self.Binv = np.linalg.inv(self._basis_matrix())
        except np.linalg.LinAlgError as exc:
            raise SimplexBreakdown("basis matrix is singular") from exc
        self._recompute_basics()
        self._pivots = 0

    def _recompute_basics(self) -> None:
        if not self.m:
            return
        rhs = self.b.copy()
        nb_struct = np.flatnonzero(~self.is_basic[: self.nv])
        if nb_struct.size:
            rhs -= self.S[:, nb_struct] @ self.val[nb_struct]
        nb_unit = np.flatnonzero(~self.is_basic[self.nv :])
        if nb_unit.size:
            contr = self.unit_sign[nb_unit] * self.val[self.nv + nb_unit]
            np.subtract.at(rhs, self.unit_row[nb_unit], contr)
        self.val[self.basis] = self.Binv @ rhs

    def _pivot(self, e: int, r: int, w: np.ndarray) -> None:
        pivot = w[r]
        if abs(pivot) < EPS_PIVOT:
            raise SimplexBreakdown(f"pivot magnitude {abs(pivot):.2e} below {EPS_PIVOT}")
        leave = self.basis[r]
        self.basis[r] = e
        self.is_basic[e] = True
        self.is_basic[leave] = False
        row = self.Binv[r] / pivot
        self.Binv -= np.outer(w, row)
        self.Binv[r] = row
        self._pivots += 1
        if self._pivots >= REFACTOR_EVERY:
            self._refactor()

    # -- core loop ------------------------------------------------------------
    def optimize(self, cost: np.ndarray, max_iters: int) -> None:
        m = self.m
        bland = False
        stall = 0
        best_obj = np.inf
        while True:
            self.iterations += 1
            if self.iterations > max_iters:
                raise SimplexBreakdown("simplex iteration limit exceeded")
            if m:
                y = cost[self.basis] @ self.Binv
                d = cost.copy()
                d[: self.nv] -= y @ self.S
                d[self.nv :] -= self.unit_sign * y[self.unit_row]
            else:
                d = cost.copy()
            entering_ok = (~self.is_basic) & (~self.fixed) & (
                (self.at_lower & (d < -EPS_D)) | (~self.at_lower & (d > EPS_D))
            )
            idxs = np.flatnonzero(entering_ok)
            if idxs.size == 0:
                return
            e = int(idxs[0]) if bland else int(idxs[np.argmax(np.abs(d[idxs]))])
            dirn = 1.0 if self.at_lower[e] else -1.0

            if m:
                w = self._ftran(e)
                wt = dirn * w
                xB = self.val[self.basis]
                lB = self.L[self.basis]
                uB = self.U[self.basis]
                t = np.full(m, np.inf)
                pos = wt > EPS_RATIO
                t[pos] = np.maximum(xB[pos] - lB[pos], 0.0) / wt[pos]
                neg = wt < -EPS_RATIO
                room = uB[neg] - xB[neg]
                t[neg] = np.where(np.isfinite(room), np.maximum(room, 0.0), np.inf) / -wt[neg]
                t_basic = float(t.min()) if m else np.inf
            else:
                w = wt = t = None
                t_basic = np.inf

            t_self = self.U[e] - self.L[e]
            theta = min(t_basic, t_self)
            if not np.isfinite(theta):
                raise SimplexBreakdown("unbounded direction in bounded model")

            if t_self <= t_basic:
                # Bound flip: entering jumps to its other bound, basis unchanged.
                if m and theta > 0.0:
                    self.val[self.basis] = self.val[self.basis] - wt * theta
                self.at_lower[e] = not self.at_lower[e]
                self.val[e] = self.L[e] if self.at_lower[e] else self.U[e]
            else:
                near = np.flatnonzero(t <= theta + 1e-12 * (1.0 + abs(theta)))
                if bland:
                    r = int(near[np.argmin(self.basis[near])])
                else:
                    r = int(near[np.argmax(np.abs(wt[near]))])
                leave = self.basis[r]
                leave_to_lower = wt[r] > 0.0
                if theta > 0.0:
                    self.val[self.basis] = self.val[self.basis] - wt * theta
                self.val[e] = self.val[e] + dirn * theta
                self.val[leave] = self.L[leave] if leave_to_lower else self.U[leave]
                self.at_lower[leave] = leave_to_lower
                self._pivot(e, r, w)

            if not bland:
                obj = float(cost @ self.val)
                if obj < best_obj - 1e-12:
                    best_obj = obj
                    stall = 0
                else:
                    stall += 1
                    if stall > STALL_LIMIT:
                        bland = True

    def drive_out_artificials(self) -> None:
        """Pivot zero-value artificials out of the basis where possible."""
        if self.art_start == self.n_total:
            return
        for r in range(self.m):
            if self.basis[r] < self.art_start:
                continue
            # row r of Binv * [S | unit slacks]
            row_struct = self.Binv[r] @ self.S
            row_slack = self.unit_sign[: self.m] * self.Binv[r, self.unit_row[: self.m]]
            rowvec = np.concatenate([row_struct, row_slack])
            rowvec[self.is_basic[: self.art_start]] = 0.0
            j = int(np.argmax(np.abs(rowvec)))
            if abs(rowvec[j]) >= 1e-7:
                w = self._ftran(j)
                # Degenerate pivot: the artificial leaves at value ~0.
                self.val[self.basis[r]] = 0.0
                self._pivot(j, r, w)
        self.L[self.art_start :] = 0.0
        self.U[self.art_start :] = 0.0
        self.fixed[self.art_start :] = True


def solve_compiled(comp: _Compiled, lb: np.ndarray, ub: np.ndarray) -> LpResult:
    """Solve the LP relaxation over explicit bound arrays."""
    if np.any(lb > ub + 1e-12):
        return LpResult(INFEASIBLE, None, np.inf, 0)
    m, nv = comp.A.shape
    sx = _Simplex(comp.A, comp.rel, comp.rhs, lb, ub)
    max_iters = 20000 + 40 * (m + sx.n_total)
    if sx.art_start < sx.n_total:
        phase1 = np.zeros(sx.n_total)
        phase1[sx.art_start :] = 1.0
        sx.optimize(phase1, max_iters)
        infeas = float(np.sum(np.abs(sx.val[sx.art_start :])))
        if infeas > PHASE1_TOL:
            return LpResult(INFEASIBLE, None, np.inf, sx.iterations)
        sx.drive_out_artificials()
    cost = np.zeros(sx.n_total)
    cost[:nv] = comp.c
    sx.optimize(cost, max_iters)
    sx._recompute_basics()

    x = np.clip(sx.val[:nv], lb, ub)
    viol = _constraint_violation(comp, x)
    if viol > FEAS_TOL:
        sx._refactor()
        x = np.clip(sx.val[:nv], lb, ub)
        viol = _constraint_violation(comp, x)
        if viol > FEAS_TOL:
            raise SimplexBreakdown(f"solution violates constraints by {viol:.2e}")
    objective = float(comp.c @ x) + comp.c0
    return LpResult(OPTIMAL, x, objective, sx.iterations)


def _constraint_violation(comp: _Compiled, x: np.ndarray) -> float:
    if comp.A.shape[0] == 0:
        return 0.0
    ax = comp.A @ x
    over = ax - comp.rhs
    viol = np.where(
        comp.rel < 0, np.maximum(over, 0.0),
        np.where(comp.rel > 0, np.maximum(-over, 0.0), np.abs(over)),
    )
    return float(viol.max())


def solve_lp(model: MilpModel, bound_overrides: dict | None = None):
    """LP relaxation of the model; returns (status, values, objective).

    ``bound_overrides`` maps variable names to (lb, ub) pairs, used for
    zone-fixed solves and relaxation probing.  Binary flags are ignored.
    """
    comp = model.compile()
    lb, ub = comp.lb.copy(), comp.ub.copy()
    if bound_overrides:
        for name, (lo, hi) in bound_overrides.items():
            j = comp.index[name]
            lb[j], ub[j] = float(lo), float(hi)
    res = solve_compiled(comp, lb, ub)
    if res.status != OPTIMAL:
        return INFEASIBLE, {}, np.inf
    values = {name: float(v) for name, v in zip(comp.names, res.x)}
    return OPTIMAL, values, res.objective
