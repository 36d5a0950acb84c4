"""Best-bound branch and bound over binary variables.

Branching picks the most fractional binary; when that binary belongs to a
registered one-hot triple the node splits into three children, one per zone.
Until a first incumbent exists the search dives depth-first.  Models may
attach a ``feasibility_hint`` callback that proposes full assignments from a
node's relaxation values; every proposal is re-verified here before it can
become the incumbent.
"""

import heapq
import math
import time
from dataclasses import dataclass

import numpy as np

from .model import (FEASIBLE_BUDGET_EXHAUSTED, INFEASIBLE, OPTIMAL,
                    MilpModel, MilpSolution)
from .simplex import FEAS_TOL, OPTIMAL as LP_OPTIMAL, _constraint_violation, solve_compiled

INT_TOL = 1e-7


@dataclass(frozen=True)
class SolveBudget:
    """Search limits; the gap is absolute (incumbent minus best bound)."""

    max_nodes: int = 200_000
    max_seconds: float = 300.0
    abs_gap: float = 1e-6


def _apply_fixes(lb0: np.ndarray, ub0: np.ndarray, fixes) -> tuple[np.ndarray, np.ndarray]:
    lb, ub = lb0.copy(), ub0.copy()
    for idx, lo, hi in fixes:
        lb[idx], ub[idx] = lo, hi
    return lb, ub


def _candidate_vector(comp, values: dict) -> np.ndarray | None:
    try:
        x = np.array([float(values[name]) for name in comp.names])
    except (KeyError, TypeError, ValueError):
        return None
    if not np.all(np.isfinite(x)):
        return None
    return x


def _is_feasible(comp, lb0, ub0, x: np.ndarray) -> bool:
    if np.any(x < lb0 - 1e-9) or np.any(x > ub0 + 1e-9):
        return False
    if np.any(np.abs(x[comp.binary] - np.round(x[comp.binary])) > INT_TOL):
        return False
    return _constraint_violation(comp, x) <= FEAS_TOL


def solve_milp(model: MilpModel, budget: SolveBudget | None = None) -> MilpSolution:
    budget = budget or SolveBudget()
    comp = model.compile()
    lb0, ub0 = comp.lb, comp.ub
    bin_idx = np.flatnonzero(comp.binary)
    triple_of: dict[int, tuple[int, int, int]] = {}
    for trip in comp.triples:
        for i in trip:
            triple_of[i] = trip

    start = time.perf_counter()
    incumbent_x: np.ndarray | None = None
    incumbent_obj = math.inf
    node_count = 0
    seq = 0
    heap: list = []   # (parent bound, seq, fixes)
    stack: list = []  # dive nodes while no incumbent exists
    heapq.heappush(heap, (-math.inf, seq, ()))
    status = None
    lower_at_exit = -math.inf

    def try_candidate(values: dict) -> None:
        nonlocal incumbent_x, incumbent_obj
        x = _candidate_vector(comp, values)
        if x is None or not _is_feasible(comp, lb0, ub0, x):
            return
        obj = float(comp.c @ x) + comp.c0
        if obj < incumbent_obj - 1e-12:
            incumbent_x, incumbent_obj = x, obj

    while True:
        if incumbent_x is not None and stack:
            for item in stack:
                heapq.heappush(heap, item)
            stack.clear()
        if stack:
            bound, _, fixes = stack.pop()
        elif heap:
            bound, _, fixes = heapq.heappop(heap)
            if incumbent_obj - bound <= budget.abs_gap:
                # Heap is bound-ordered: nothing left can beat the incumbent.
                status = OPTIMAL
                lower_at_exit = bound
                break
        else:
            status = OPTIMAL if incumbent_x is not None else INFEASIBLE
            lower_at_exit = incumbent_obj if incumbent_x is not None else math.inf
            break

        over_budget = (
            node_count >= budget.max_nodes
            or time.perf_counter() - start > budget.max_seconds
        )
        if over_budget and incumbent_x is not None:
            status = FEASIBLE_BUDGET_EXHAUSTED
            lower_at_exit = bound
            break
        # Without an incumbent the budget is deferred: keep diving until a
        # first feasible point exists so a usable solution is always returned.

        lb, ub = _apply_fixes(lb0, ub0, fixes)
        res = solve_compiled(comp, lb, ub)
        node_count += 1
        if res.status != LP_OPTIMAL:
            continue
        obj = res.objective
        if obj >= incumbent_obj - budget.abs_gap:
            continue
        x = res.x
        frac = np.abs(x[bin_idx] - np.round(x[bin_idx])) if bin_idx.size else np.zeros(0)
        if frac.size == 0 or float(frac.max()) <= INT_TOL:
            if incumbent_x is None or obj < incumbent_obj - 1e-12:
                incumbent_x, incumbent_obj = x.copy(), obj
            continue

        if model.feasibility_hint is not None:
            values = {name: float(v) for name, v in zip(comp.names, x)}
            for cand in model.feasibility_hint(values) or ():
                try_candidate(cand)

        branch_var = int(bin_idx[int(np.argmax(frac))])
        children = []
        trip = triple_of.get(branch_var)
        if trip is not None:
            zones = sorted(range(3), key=lambda z: -x[trip[z]])
            for z in zones:
                zone_fix = tuple(
                    (trip[k], 1.0, 1.0) if k == z else (trip[k], 0.0, 0.0)
                    for k in range(3)
                )
                children.append(fixes + zone_fix)
        else:
            first = 1.0 if x[branch_var] >= 0.5 else 0.0
            for v in (first, 1.0 - first):
                children.append(fixes + ((branch_var, v, v),))

        for pos, child in enumerate(children):
            seq += 1
            item = (obj, seq, child)
            if incumbent_x is None and pos == 0:
                stack.append(item)
            else:
                heapq.heappush(heap, item)

    if incumbent_x is None:
        return MilpSolution(INFEASIBLE, {}, math.inf, node_count,
                            time.perf_counter() - start, math.inf)
    if status == OPTIMAL:
        lower_at_exit = max(lower_at_exit, incumbent_obj - budget.abs_gap)
    else:
        open_bounds = [item[0] for item in heap] + [item[0] for item in stack]
        if lower_at_exit > -math.inf:
            open_bounds.append(lower_at_exit)
        lower_at_exit = min(open_bounds) if open_bounds else incumbent_obj
    values = {name: float(v) for name, v in zip(comp.names, incumbent_x)}
    return MilpSolution(
        status=status,
        values=values,
        objective=incumbent_obj,
        node_count=node_count,
        wall_time=time.perf_counter() - start,
        best_bound=min(lower_at_exit, incumbent_obj),
    )
