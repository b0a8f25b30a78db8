"""One device's optimal strategy against fixed opponents.

Two-step decomposition: an outer one-dimensional search over the total
offload rate t, with the fixed-t allocation subproblem solved exactly at
every probe. The outer landscape need not be unimodal, so a 33-point
pre-scan brackets the golden-section refinement.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analytic import (RowContext, row_context, row_response_time,
                       row_response_time_batch)
from .errors import ResolutionTooCoarse
from .kkt import solve_p3_ctx
from .model import ScenarioConfig, check_profile

PRESCAN_POINTS = 33
GOLDEN_TOL_FACTOR = 1e-6


@dataclass(frozen=True)
class BestResponse:
    strategy: np.ndarray
    total_t: float
    objective_T: float
    evaluations: int


def golden_section(f, a: float, b: float, tol: float) -> float:
    """0.618-ratio interval shrinking; returns the midpoint of the final
    bracket. The constant is literal so given identical f the probe sequence
    is reproducible bit for bit. Because 0.618 is not the exact golden
    ratio, reused probe positions drift off their nominal fractions and can
    cross after a few dozen shrinks; both probes are re-seeded whenever the
    interior ordering degenerates."""
    a1 = b - 0.618 * (b - a)
    a2 = a + 0.618 * (b - a)
    f1, f2 = f(a1), f(a2)
    while b - a >= tol:
        if f1 > f2:
            a = a1
            a1, f1 = a2, f2
            a2 = a + 0.618 * (b - a)
            f2 = f(a2)
        else:
            b = a2
            a2, f2 = a1, f1
            a1 = b - 0.618 * (b - a)
            f1 = f(a1)
        if a1 > a2:
            a1 = b - 0.618 * (b - a)
            a2 = a + 0.618 * (b - a)
            f1, f2 = f(a1), f(a2)
    return 0.5 * (a + b)


def t_objective(cfg: ScenarioConfig, profile: np.ndarray, i: int,
                t: float) -> float:
    """Best response time achievable at total offload exactly t; +inf when
    no allocation is feasible. t = 0 is the pure-local value."""
    ctx = row_context(cfg, profile, i)
    return _t_objective_ctx(ctx, t)[0]


def _t_objective_ctx(ctx: RowContext, t: float):
    if t <= 0.0:
        if ctx.spend_budget < 0:  # the static draw alone busts the budget
            return np.inf, None
        return ctx.local_time, np.zeros(len(ctx.phi))
    cand = solve_p3_ctx(ctx, t)
    if cand is None:
        return np.inf, None
    return cand.objective, cand.allocation


def best_response(cfg: ScenarioConfig, profile: np.ndarray,
                  i: int) -> BestResponse:
    """Pre-scan the total offload rate, refine the best bracket by golden
    section, and return the best strategy seen (never worse than the
    device's current row)."""
    profile = check_profile(cfg, profile)
    ctx = row_context(cfg, profile, i)
    lam = ctx.lam
    evals = 0
    seen = {}

    def value(t):
        nonlocal evals
        t = min(max(t, 0.0), lam)
        key = round(t, 15)
        if key not in seen:
            seen[key] = _t_objective_ctx(ctx, t)
            if t > 0:
                evals += 1
        return seen[key][0]

    ts = np.linspace(0.0, lam, PRESCAN_POINTS)
    vals = np.array([value(t) for t in ts])
    k = int(np.argmin(vals))
    lo = ts[max(k - 1, 0)]
    hi = ts[min(k + 1, PRESCAN_POINTS - 1)]
    t_star = golden_section(value, lo, hi, GOLDEN_TOL_FACTOR * lam)
    value(t_star)

    # current row competes so the response weakly improves
    cur_val = row_response_time(ctx, profile[i])
    if float(profile[i] @ ctx.power_cost) > ctx.spend_budget + 1e-9:
        cur_val = np.inf
    best_t, (best_val, best_alloc) = min(
        seen.items(), key=lambda kv: (kv[1][0], kv[0]))
    if np.isfinite(cur_val) and cur_val < best_val:
        return BestResponse(strategy=profile[i].copy(),
                            total_t=float(profile[i].sum()),
                            objective_T=float(cur_val), evaluations=evals)
    if best_alloc is None:
        raise RuntimeError(
            "no feasible total offload, including t = 0; the static power "
            "draw exceeds the device's budget")
    return BestResponse(strategy=np.asarray(best_alloc, dtype=float),
                        total_t=float(best_t), objective_T=float(best_val),
                        evaluations=evals)


def grid_oracle(cfg: ScenarioConfig, profile: np.ndarray, i: int,
                resolution: float):
    """Exhaustive search over the discretized feasible set of device i's
    strategies (N <= 3). Returns the best grid point as a BestResponse, or
    None when not a single grid point is feasible. Raises
    ResolutionTooCoarse when fewer than 10 feasible points exist."""
    profile = check_profile(cfg, profile)
    ctx = row_context(cfg, profile, i)
    N = len(ctx.phi)
    if N > 3:
        raise ValueError("oracle limited to 3 servers")
    steps = int(np.floor(ctx.lam / resolution + 1e-9))
    axis = np.arange(steps + 1) * resolution

    best_val = np.inf
    best_row = None
    feasible = 0
    chunk = max(1, int(2_000_000 // max(len(axis), 1)))
    if N == 1:
        grids = axis[:, None]
        feasible, best_val, best_row = _scan_rows(ctx, grids, feasible,
                                                  best_val, best_row)
    elif N == 2:
        for start in range(0, len(axis), chunk):
            a = axis[start:start + chunk]
            L1, L2 = np.meshgrid(a, axis, indexing="ij")
            rows = np.stack([L1.ravel(), L2.ravel()], axis=1)
            rows = rows[rows.sum(axis=1) <= ctx.lam * (1 + 1e-12)]
            feasible, best_val, best_row = _scan_rows(ctx, rows, feasible,
                                                      best_val, best_row)
    else:
        for x in axis:
            rest = ctx.lam - x
            sub = axis[axis <= rest * (1 + 1e-12)]
            L2, L3 = np.meshgrid(sub, sub, indexing="ij")
            rows = np.stack([np.full(L2.size, x), L2.ravel(), L3.ravel()],
                            axis=1)
            rows = rows[rows.sum(axis=1) <= ctx.lam * (1 + 1e-12)]
            feasible, best_val, best_row = _scan_rows(ctx, rows, feasible,
                                                      best_val, best_row)

    if feasible == 0:
        return None
    if feasible < 10:
        raise ResolutionTooCoarse(
            f"only {feasible} feasible grid points at resolution {resolution}")
    return BestResponse(strategy=best_row, total_t=float(best_row.sum()),
                        objective_T=float(best_val), evaluations=feasible)


def _scan_rows(ctx: RowContext, rows: np.ndarray, feasible: int,
               best_val: float, best_row):
    if len(rows) == 0:
        return feasible, best_val, best_row
    power_ok = rows @ ctx.power_cost <= ctx.spend_budget + 1e-9
    rows = rows[power_ok]
    if len(rows) == 0:
        return feasible, best_val, best_row
    vals = row_response_time_batch(ctx, rows)
    ok = np.isfinite(vals)
    feasible += int(ok.sum())
    if np.any(ok):
        k = int(np.argmin(np.where(ok, vals, np.inf)))
        if vals[k] < best_val:
            best_val = float(vals[k])
            best_row = rows[k].copy()
    return feasible, best_val, best_row
