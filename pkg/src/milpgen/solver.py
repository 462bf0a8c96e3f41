"""Exact small-scale MILP solving.

``solve_lp`` is a dense-tableau, bounded-variable primal simplex with a
two-phase start and Bland's rule. ``solve_milp`` runs depth-first branch and
bound on top of it (most-fractional branching, floor child first) and counts
every LP solved below the root as one branching node. ``brute_force`` is the
enumeration oracle used to cross-check both.
"""

from __future__ import annotations

import itertools
import math
import os
import re
import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass

import numpy as np

from .milp import MilpInstance, VarType

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
LIMIT = "limit-reached"
NUMERIC = "numeric-failure"

_PIVOT_TOL = 1e-9
_COST_TOL = 1e-9
_PHASE1_TOL = 1e-7


@dataclass
class LpResult:
    status: str
    objective: float = math.nan
    x: np.ndarray | None = None
    iterations: int = 0


@dataclass
class MilpResult:
    status: str
    objective: float = math.nan
    x: np.ndarray | None = None
    nodes: int = 0
    seconds: float = 0.0
    lp_bound: float = math.nan


@dataclass(frozen=True)
class SolverLimits:
    max_nodes: int = 100_000
    max_seconds: float = 60.0
    int_tol: float = 1e-6
    feas_tol: float = 1e-7

    def __post_init__(self):
        if self.max_nodes <= 0 or self.max_seconds <= 0 or self.int_tol <= 0 or self.feas_tol <= 0:
            raise ValueError("solver limits must be positive")


def _bounded_simplex(T, beta, basis, at_upper, ub, cost, allowed, max_iter):
    """Minimize ``cost`` over the tableau in place.

    ``T`` is B^-1 [A | I | art], ``beta`` the basic values, ``ub`` the upper
    bounds (lower bounds are all zero), ``at_upper`` flags nonbasic variables
    sitting at their upper bound. Returns (status, iterations).
    """
    m, N = T.shape
    d = cost - cost[basis] @ T
    is_basic = np.zeros(N, dtype=bool)
    is_basic[basis] = True
    tiny_pivots = 0
    for it in range(max_iter):
        cand = allowed & ~is_basic & (ub > 0) & (
            np.where(at_upper, d > _COST_TOL, d < -_COST_TOL))
        nz = np.flatnonzero(cand)
        if nz.size == 0:
            return OPTIMAL, it
        j = int(nz[0])
        sigma = -1.0 if at_upper[j] else 1.0
        col = sigma * T[:, j]
        t_best = ub[j]
        leave = -1
        dec = col > _PIVOT_TOL
        inc = col < -_PIVOT_TOL
        if not dec.any() and not inc.any() and np.any(np.abs(T[:, j]) > 0):
            tiny_pivots += 1
            if tiny_pivots > 50:
                return NUMERIC, it
        ratios = np.full(m, np.inf)
        ratios[dec] = np.maximum(beta[dec], 0.0) / col[dec]
        ub_b = ub[basis]
        room = inc & np.isfinite(ub_b)
        ratios[room] = np.maximum(ub_b[room] - beta[room], 0.0) / (-col[room])
        r_min = ratios.min() if m else np.inf
        if r_min < t_best:
            ties = np.flatnonzero(ratios <= r_min + 1e-12)
            leave = int(ties[np.argmin(basis[ties])])
            t_best = r_min
        if not np.isfinite(t_best):
            return UNBOUNDED, it
        beta -= t_best * col
        if leave < 0:
            at_upper[j] = not at_upper[j]
            continue
        out = basis[leave]
        at_upper[out] = col[leave] < 0  # leaves at upper when it was increasing
        entering_value = (ub[j] if sigma < 0 else 0.0) + sigma * t_best
        piv = T[leave, j]
        T[leave] /= piv
        other = T[:, j].copy()
        other[leave] = 0.0
        T -= np.outer(other, T[leave])
        d -= d[j] * T[leave]
        beta[leave] = entering_value
        basis[leave] = j
        is_basic[out] = False
        is_basic[j] = True
        at_upper[j] = False
    return NUMERIC, max_iter


def solve_lp_arrays(A, b, c, lower, upper, max_iter=None) -> LpResult:
    """Minimize ``c x`` s.t. ``A x <= b``, ``lower <= x <= upper`` (dense ``A``)."""
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    m, n = A.shape
    if np.any(lower > upper):
        return LpResult(INFEASIBLE)

    # map x to nonnegative columns: x = shift + sum_k sign_k * y_k
    src, sign, cap, shift = [], [], [], np.zeros(n)
    for j in range(n):
        lo, hi = lower[j], upper[j]
        if np.isfinite(lo):
            shift[j] = lo
            src.append(j); sign.append(1.0); cap.append(hi - lo)
        elif np.isfinite(hi):
            shift[j] = hi
            src.append(j); sign.append(-1.0); cap.append(np.inf)
        else:
            src += [j, j]; sign += [1.0, -1.0]; cap += [np.inf, np.inf]
    src = np.asarray(src, dtype=np.int64)
    sign = np.asarray(sign)
    ny = src.size
    Ay = A[:, src] * sign
    cy = c[src] * sign
    rhs = b - A @ shift

    neg = rhs < 0
    k = int(neg.sum())
    N = ny + m + k
    T = np.zeros((m, N))
    T[:, :ny] = Ay
    T[np.arange(m), ny + np.arange(m)] = 1.0
    T[neg] *= -1.0
    art_rows = np.flatnonzero(neg)
    T[art_rows, ny + m + np.arange(k)] = 1.0
    beta = np.abs(rhs)
    basis = np.where(neg, 0, ny + np.arange(m))
    basis[art_rows] = ny + m + np.arange(k)
    ub = np.concatenate([np.asarray(cap, dtype=float), np.full(m, np.inf), np.full(k, np.inf)])
    at_upper = np.zeros(N, dtype=bool)
    if max_iter is None:
        max_iter = 50 * (m + N) + 1000
    iters = 0

    if k:
        cost1 = np.zeros(N)
        cost1[ny + m:] = 1.0
        status, it = _bounded_simplex(T, beta, basis, at_upper, ub, cost1, np.ones(N, dtype=bool), max_iter)
        iters += it
        if status == NUMERIC:
            return LpResult(NUMERIC, iterations=iters)
        art_val = beta[basis >= ny + m].sum()
        if art_val > _PHASE1_TOL * max(1.0, np.abs(rhs).max()):
            return LpResult(INFEASIBLE, iterations=iters)
        ub[ny + m:] = 0.0
        at_upper[ny + m:] = False

    cost2 = np.zeros(N)
    cost2[:ny] = cy
    allowed = np.ones(N, dtype=bool)
    allowed[ny + m:] = False
    status, it = _bounded_simplex(T, beta, basis, at_upper, ub, cost2, allowed, max_iter)
    iters += it
    if status == NUMERIC:
        return LpResult(NUMERIC, iterations=iters)

    vals = np.where(at_upper, ub, 0.0)
    vals[basis] = beta
    y = vals[:ny]
    x = shift.copy()
    np.add.at(x, src, sign * y)
    x = np.clip(x, lower, upper)
    obj = float(c @ x)
    return LpResult(status, obj, x, iters)


def solve_lp(inst: MilpInstance, lower=None, upper=None) -> LpResult:
    """LP relaxation of ``inst`` (integrality ignored), optionally with tightened bounds."""
    lo = inst.lower if lower is None else lower
    hi = inst.upper if upper is None else upper
    return solve_lp_arrays(inst.dense(), inst.b, inst.c, lo, hi)


def _most_fractional(x, discrete_idx, tol):
    vals = x[discrete_idx]
    frac = vals - np.floor(vals)
    dist = np.minimum(frac, 1.0 - frac)
    dist[dist <= tol] = -1.0
    k = int(np.argmax(dist))
    if dist[k] < 0:
        return -1
    return int(discrete_idx[k])


def solve_milp(inst: MilpInstance, limits: SolverLimits | None = None) -> MilpResult:
    """Depth-first branch and bound.

    The node count is the number of LPs solved below the root.
    """
    limits = limits or SolverLimits()
    start = time.perf_counter()
    A = inst.dense()
    discrete_idx = np.flatnonzero(inst.discrete_mask())
    lo0 = inst.lower.copy()
    hi0 = inst.upper.copy()
    # integral variables can be rounded inward before the first LP
    lo0[discrete_idx] = np.ceil(lo0[discrete_idx] - limits.int_tol)
    hi0[discrete_idx] = np.floor(hi0[discrete_idx] + limits.int_tol)

    incumbent, inc_x = math.inf, None
    nodes = 0
    unbounded_seen = False
    stack = [(lo0, hi0)]
    root_bound = math.nan
    first = True
    while stack:
        if nodes >= limits.max_nodes or time.perf_counter() - start > limits.max_seconds:
            status = LIMIT
            break
        lo, hi = stack.pop()
        res = solve_lp_arrays(A, inst.b, inst.c, lo, hi)
        if first:
            root_bound = res.objective if res.status == OPTIMAL else math.nan
            first = False
        else:
            nodes += 1
        if res.status == NUMERIC:
            return MilpResult(NUMERIC, nodes=nodes, seconds=time.perf_counter() - start)
        if res.status == INFEASIBLE:
            continue
        if res.status == UNBOUNDED:
            unbounded_seen = True
        elif res.objective >= incumbent - 1e-9 * max(1.0, abs(incumbent)):
            continue
        j = _most_fractional(res.x, discrete_idx, limits.int_tol)
        if j < 0:
            if unbounded_seen:
                return MilpResult(UNBOUNDED, -math.inf, nodes=nodes,
                                  seconds=time.perf_counter() - start, lp_bound=root_bound)
            x = res.x.copy()
            x[discrete_idx] = np.round(x[discrete_idx])
            incumbent, inc_x = res.objective, x
            continue
        v = res.x[j]
        up_lo = lo.copy()
        up_lo[j] = math.ceil(v)
        down_hi = hi.copy()
        down_hi[j] = math.floor(v)
        stack.append((up_lo, hi))
        stack.append((lo, down_hi))
    else:
        status = OPTIMAL if inc_x is not None else INFEASIBLE
    secs = time.perf_counter() - start
    if status == LIMIT:
        return MilpResult(LIMIT, incumbent if inc_x is not None else math.nan, inc_x, nodes, secs, root_bound)
    if status == OPTIMAL:
        return MilpResult(OPTIMAL, incumbent, inc_x, nodes, secs, root_bound)
    return MilpResult(INFEASIBLE, nodes=nodes, seconds=secs, lp_bound=root_bound)


def brute_force(inst: MilpInstance, max_discrete: int = 20, max_points: int = 1 << 22) -> MilpResult:
    """Exhaustive enumeration of the discrete variables; the continuous part of
    each assignment is solved as an LP. Ties keep the first point in
    lexicographic enumeration order."""
    start = time.perf_counter()
    disc = np.flatnonzero(inst.discrete_mask())
    cont = np.flatnonzero(~inst.discrete_mask())
    if disc.size > max_discrete:
        raise ValueError(f"brute force refuses {disc.size} discrete variables (limit {max_discrete})")
    lo = np.ceil(inst.lower[disc] - 1e-9)
    hi = np.floor(inst.upper[disc] + 1e-9)
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("brute force needs finite bounds on discrete variables")
    sizes = np.maximum(hi - lo + 1, 0).astype(np.int64)
    total = int(np.prod(sizes)) if sizes.size else 1
    if total > max_points:
        raise ValueError(f"brute force refuses {total} grid points")
    A = inst.dense()
    Ad, Ac = A[:, disc], A[:, cont]
    cd, cc = inst.c[disc], inst.c[cont]
    if total == 0:
        return MilpResult(INFEASIBLE, seconds=time.perf_counter() - start)

    best, best_x = math.inf, None
    ranges = [np.arange(lo[k], hi[k] + 1) for k in range(disc.size)]
    if cont.size == 0:
        grid = np.array(list(itertools.product(*ranges)), dtype=float).reshape(total, disc.size)
        slack = inst.b[None, :] - grid @ Ad.T
        ok = np.all(slack >= -1e-9, axis=1)
        if ok.any():
            obj = grid @ cd
            obj[~ok] = np.inf
            k = int(np.argmin(obj))
            best, best_x = float(obj[k]), grid[k]
    else:
        cont_rows = np.flatnonzero(np.any(Ac != 0.0, axis=1))
        disc_rows = np.setdiff1d(np.arange(inst.m), cont_rows)
        Acr = Ac[cont_rows]
        for point in itertools.product(*ranges):
            xd = np.asarray(point, dtype=float)
            resid = inst.b - Ad @ xd
            if np.any(resid[disc_rows] < -1e-9):
                continue
            res = solve_lp_arrays(Acr, resid[cont_rows], cc, inst.lower[cont], inst.upper[cont])
            if res.status == INFEASIBLE:
                continue
            if res.status == UNBOUNDED:
                return MilpResult(UNBOUNDED, -math.inf, seconds=time.perf_counter() - start)
            if res.status == NUMERIC:
                return MilpResult(NUMERIC, seconds=time.perf_counter() - start)
            obj = float(cd @ xd) + res.objective
            if obj < best - 1e-12:
                best = obj
                best_x = np.zeros(inst.n)
                best_x[disc] = xd
                best_x[cont] = res.x
    secs = time.perf_counter() - start
    if best_x is None:
        return MilpResult(INFEASIBLE, seconds=secs)
    if cont.size == 0:
        x = np.zeros(inst.n)
        x[disc] = best_x
        best_x = x
    return MilpResult(OPTIMAL, best, best_x, 0, secs)


def is_feasible_point(inst: MilpInstance, x, feas_tol=1e-7, int_tol=1e-6) -> bool:
    x = np.asarray(x, dtype=float)
    if np.any(x < inst.lower - feas_tol) or np.any(x > inst.upper + feas_tol):
        return False
    if np.any(inst.matrix() @ x > inst.b + feas_tol):
        return False
    xd = x[inst.discrete_mask()]
    return bool(np.all(np.abs(xd - np.round(xd)) <= int_tol))


def feasible_and_bounded(inst: MilpInstance, limits: SolverLimits | None = None) -> tuple:
    """(feasible, bounded) check: bounded LP relaxation plus one integral point.

    Branch and bound stops at the first incumbent, so this is cheap even where
    proving optimality is not. Returns ``(None, None)`` if the node budget runs
    out first.
    """
    limits = limits or SolverLimits()
    lp = solve_lp(inst)
    if lp.status == INFEASIBLE:
        return False, True
    res = _first_incumbent(inst, limits)
    if res is None:
        return None, None
    feasible = res
    bounded = lp.status == OPTIMAL
    return feasible, bounded


def _first_incumbent(inst, limits):
    A = inst.dense()
    disc = np.flatnonzero(inst.discrete_mask())
    lo0 = inst.lower.copy()
    hi0 = inst.upper.copy()
    lo0[disc] = np.ceil(lo0[disc] - limits.int_tol)
    hi0[disc] = np.floor(hi0[disc] + limits.int_tol)
    stack = [(lo0, hi0)]
    nodes = 0
    start = time.perf_counter()
    while stack:
        if nodes >= limits.max_nodes or time.perf_counter() - start > limits.max_seconds:
            return None
        lo, hi = stack.pop()
        res = solve_lp_arrays(A, inst.b, inst.c, lo, hi)
        nodes += 1
        if res.status in (INFEASIBLE, NUMERIC):
            continue
        j = _most_fractional(res.x, disc, limits.int_tol)
        if j < 0:
            return True
        v = res.x[j]
        up_lo = lo.copy()
        up_lo[j] = math.ceil(v)
        down_hi = hi.copy()
        down_hi[j] = math.floor(v)
        stack.append((up_lo, hi))
        stack.append((lo, down_hi))
    return False


# --------------------------------------------------------------------------
# optional bridge to an external solver binary


@dataclass
class ExternalSolverConfig:
    """``command`` is a shell-style template containing ``{mps}``; the three
    patterns are regular expressions with one capture group each, matched
    against the solver's combined stdout/stderr."""

    command: str
    status_pattern: str
    objective_pattern: str
    nodes_pattern: str
    status_map: dict | None = None
    timeout: float = 600.0


def solve_external(inst: MilpInstance, cfg: ExternalSolverConfig) -> MilpResult:
    from .mps import write_mps

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "instance.mps")
        with open(path, "w") as fh:
            fh.write(write_mps(inst))
        args = [a.replace("{mps}", path) for a in shlex.split(cfg.command)]
        start = time.perf_counter()
        proc = subprocess.run(args, capture_output=True, text=True, timeout=cfg.timeout)
        secs = time.perf_counter() - start
    log = proc.stdout + "\n" + proc.stderr

    def grab(pattern):
        mt = re.search(pattern, log, re.MULTILINE)
        return mt.group(1) if mt else None

    raw_status = grab(cfg.status_pattern)
    if raw_status is None:
        raise RuntimeError("external solver output did not match the status pattern")
    status_map = cfg.status_map or {}
    status = status_map.get(raw_status, raw_status.lower())
    obj = grab(cfg.objective_pattern)
    nodes = grab(cfg.nodes_pattern)
    return MilpResult(status, float(obj) if obj is not None else math.nan, None,
                      int(float(nodes)) if nodes is not None else 0, secs)


def vtype_is_discrete(t: int) -> bool:
    return VarType(int(t)).is_discrete
