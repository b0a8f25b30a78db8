"""Per-device subproblem solver: given a fixed total offload rate t, find the
allocation across servers minimizing the device's response time.

The first-order conditions decouple per server into polynomial equations in
that server's rate, coupled only through a scalar multiplier on the
sum-to-t constraint. The solver enumerates active sets, scans the coupling
multiplier over a marginal-cost-quantile grid, and refines each sign change
of (sum of selected polynomial roots) - t.

Two coefficient constructions live side by side:

  stationarity_coefficients  quotient-rule expansion of the waiting-ratio
                             derivative; its roots pass the finite-difference
                             stationarity audit and the solver uses it.
  quintic_coefficients       product-rule expansion of the same derivative
                             (plus two cross-term anomalies); kept as the
                             reference point for the transcription audit in
                             tests. Its roots drift from true stationary
                             points; see coefficient_comparison.

Multiplier conventions: the polynomial machinery works with multipliers
scaled by the device's task rate (the objective's leading 1/lambda factor is
cleared first); reported Multipliers are unscaled so that stationarity holds
against grad_p3 directly.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .analytic import ZETA_GUARD, RowContext, row_context, row_response_time
from .errors import SingularPoint, ZeroPolynomial
from .model import ScenarioConfig

CHI_MAX = 1e6
SUM_TOL = 1e-9
POWER_TOL = 1e-9


@dataclass(frozen=True)
class Multipliers:
    eps: np.ndarray      # per-server, for the nonnegativity constraints
    chi: float           # sum-to-t coupling (equality: sign-free)
    varpi: np.ndarray    # per-server utilization constraints (kept at zero)
    rho: float           # power budget


@dataclass(frozen=True)
class KktCandidate:
    allocation: np.ndarray
    multipliers: Multipliers
    objective: float
    feasible: bool
    active_set: tuple
    source: str  # "kkt" or "fallback"


# --------------------------------------------------------------------------
# coefficient constructions
# --------------------------------------------------------------------------

def stationarity_coefficients(t, phi, theta, coeffs, X, varpi=0.0) -> np.ndarray:
    """Ascending coefficients c[0..5] of the stationarity polynomial for one
    server: 2*X*d^2 + (4*varpi*phi/t)*L*d^2 + (u'd - u d') with
    u = theta*L^3 + (beta+alpha*t)*L^2 + gamma*t*L and
    d = -phi*L^2 - (mu+delta*t)*L + (1-nu)*t."""
    a, b, g, de, m, n = (coeffs.alpha, coeffs.beta, coeffs.gamma,
                         coeffs.delta, coeffs.mu, coeffs.nu)
    md = m + de * t
    tn = t - n * t
    ba = b + a * t
    return np.array([
        2.0 * X * tn ** 2 + g * t * tn,
        -4.0 * X * md * tn + (4.0 * varpi * phi / t) * tn ** 2 + 2.0 * ba * tn,
        (2.0 * X * (md ** 2 - 2.0 * phi * tn) - (8.0 * varpi * phi / t) * md * tn
         + 3.0 * theta * tn - ba * md + g * t * phi),
        (4.0 * X * phi * md + (4.0 * varpi * phi / t) * (md ** 2 - 2.0 * phi * tn)
         - 2.0 * theta * md),
        2.0 * X * phi ** 2 + 8.0 * varpi * phi ** 2 * md / t - theta * phi,
        4.0 * varpi * phi ** 3 / t,
    ])


def quintic_coefficients(t, phi, theta, coeffs, X, varpi=0.0) -> np.ndarray:
    """Product-rule variant of stationarity_coefficients (see module
    docstring); ascending c[0..5]."""
    a, b, g, de, m, n = (coeffs.alpha, coeffs.beta, coeffs.gamma,
                         coeffs.delta, coeffs.mu, coeffs.nu)
    md = m + de * t
    tn = t - n * t
    tm = t - m * t
    ba = b + a * t
    return np.array([
        2.0 * X * tn ** 2 + g * t * tn,
        (4.0 * X * md * tn + (4.0 * varpi * phi / t) * tn ** 2
         + 2.0 * ba * tn - 2.0 * g * t * md),
        (2.0 * X * (2.0 * phi * tm + md ** 2)
         + (8.0 * varpi * phi / t) * ba * tn
         + 3.0 * (theta * tn - phi * g * t - ba * md)),
        (4.0 * X * phi * md
         + (4.0 * varpi * phi / t) * (2.0 * phi * tm + md ** 2)
         - 4.0 * theta * md - 4.0 * phi * ba),
        2.0 * X * phi ** 2 + (8.0 * varpi * phi ** 2 / t) * md - 5.0 * theta * phi,
        4.0 * varpi * phi ** 3 / t,
    ])


def coefficient_comparison(t, phi, theta, coeffs, X, varpi=0.0):
    """Per-degree (product-rule value, quotient-rule value, agree) triples,
    for the transcription audit."""
    a = quintic_coefficients(t, phi, theta, coeffs, X, varpi)
    b = stationarity_coefficients(t, phi, theta, coeffs, X, varpi)
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-30)
    return [(k, a[k], b[k], abs(a[k] - b[k]) <= 1e-12 * scale)
            for k in range(6)]


# --------------------------------------------------------------------------
# polynomial roots
# --------------------------------------------------------------------------

def _companion_eigs(rows: np.ndarray) -> np.ndarray:
    """Eigenvalues of the Frobenius companion matrices of monic-normalized
    polynomial rows (ascending coefficients, uniform degree)."""
    K, w = rows.shape
    d = w - 1
    monic = rows / rows[:, -1][:, None]
    comp = np.zeros((K, d, d))
    comp[:, np.arange(1, d), np.arange(d - 1)] = 1.0
    comp[:, :, -1] = -monic[:, :-1]
    return np.linalg.eigvals(comp)


def real_roots(c, lower: float = 0.0) -> np.ndarray:
    """Sorted distinct real roots >= lower of the polynomial with ascending
    coefficients c (c[0] constant). Leading near-zero coefficients are
    trimmed away; the all-zero polynomial raises ZeroPolynomial. Each root is
    Newton-polished so that |p(root)| stays below 1e-8 times the coefficient
    scale."""
    c = np.asarray(c, dtype=float)
    scale = np.max(np.abs(c)) if c.size else 0.0
    if scale == 0.0:
        raise ZeroPolynomial("all coefficients are zero")
    keep = np.flatnonzero(np.abs(c) > 1e-14 * scale)
    deg = keep[-1]
    c = c[:deg + 1]
    if deg == 0:
        return np.array([])
    if deg == 1:
        cand = np.array([-c[0] / c[1]])
    else:
        eig = _companion_eigs(c[None, :])[0]
        cand = eig[np.abs(eig.imag) <= 1e-8 * np.maximum(1.0, np.abs(eig))].real
    dc = np.polynomial.polynomial.polyder(c)
    out = []
    for x in np.sort(cand):
        for _ in range(3):
            p = np.polynomial.polynomial.polyval(x, c)
            dp = np.polynomial.polynomial.polyval(x, dc)
            if dp == 0 or abs(p) <= 1e-10 * scale:
                break
            step = p / dp
            if abs(step) > 1.0 + abs(x):
                break
            x -= step
        if x < lower - 1e-12 * max(1.0, abs(lower)):
            continue
        x = max(x, lower)
        if abs(np.polynomial.polynomial.polyval(x, c)) > 1e-8 * scale:
            continue
        if out and abs(x - out[-1]) <= 1e-10 * max(1.0, abs(x)):
            continue
        out.append(float(x))
    return np.array(out)


# --------------------------------------------------------------------------
# marginal machinery
# --------------------------------------------------------------------------

def _upoly(ctx: RowContext, j: int, t: float):
    """u (cubic) and d (quadratic) pieces of server j's waiting term."""
    u3 = ctx.theta[j]
    u2 = ctx.beta[j] + ctx.alpha[j] * t
    u1 = ctx.gamma[j] * t
    b2 = -ctx.phi[j]
    b1 = -(ctx.mu[j] + ctx.delta[j] * t)
    b0 = (1.0 - ctx.nu[j]) * t
    return u3, u2, u1, b2, b1, b0


def marginal_cost(ctx: RowContext, j: int, t: float, L: float) -> float:
    """Rate-scaled marginal response time of pushing load to server j at
    allocation L, total fixed at t (the true partial is this over lambda)."""
    u3, u2, u1, b2, b1, b0 = _upoly(ctx, j, t)
    u = (u3 * L ** 2 + u2 * L + u1) * L
    up = 3 * u3 * L ** 2 + 2 * u2 * L + u1
    d = b2 * L ** 2 + b1 * L + b0
    dp = 2 * b2 * L + b1
    if d == 0:
        return np.inf
    return ctx.phi[j] + 0.5 * (up * d - u * dp) / d ** 2


def grad_p3(ctx: RowContext, t: float, j: int, L: float) -> float:
    """Analytic partial of the fixed-total objective with respect to server
    j's allocation. Raises SingularPoint within 1e-12 of the queue
    singularity."""
    u3, u2, u1, b2, b1, b0 = _upoly(ctx, j, t)
    d = b2 * L ** 2 + b1 * L + b0
    if abs(d) < 1e-12:
        raise SingularPoint(f"denominator {d!r} at server {j}")
    return marginal_cost(ctx, j, t, L) / ctx.lam


def zeta_cap(ctx: RowContext, j: int, t: float) -> float:
    """Largest allocation keeping server j's utilization at or below the
    guard band, with the rest of the row at zero."""
    A = ctx.phi[j] / t
    Bq = ctx.delta[j] + ctx.mu[j] / t
    Cq = ctx.nu[j] - (1.0 - ZETA_GUARD)
    if Cq >= 0:
        return 0.0
    return float((-Bq + np.sqrt(Bq * Bq - 4 * A * Cq)) / (2 * A))


def _feasible_roots_batch(ctx: RowContext, j: int, t: float,
                          X_vals: np.ndarray):
    """Ladder (sorted feasible roots) of server j's stationarity polynomial
    for every multiplier value in X_vals. Roots must be real, in [0, t], and
    keep the queue denominator above the guard."""
    u3, u2, u1, b2, b1, b0 = _upoly(ctx, j, t)
    K = len(X_vals)
    # coefficients are affine in X: base (quotient bracket) + X * 2*d^2
    d2 = np.array([b0 ** 2, 2 * b1 * b0, b1 ** 2 + 2 * b2 * b0,
                   2 * b2 * b1, b2 ** 2])
    base = np.array([u1 * b0, 2 * u2 * b0, 3 * u3 * b0 + u2 * b1 - u1 * b2,
                     2 * u3 * b1, u3 * b2])
    rows = base[None, :] + 2.0 * X_vals[:, None] * d2[None, :]
    scale = np.max(np.abs(rows), axis=1)
    ladders = [[] for _ in range(K)]
    nonzero = scale > 0
    # group rows by effective degree after trimming the leading coefficient
    deg = np.full(K, -1)
    for k in np.flatnonzero(nonzero):
        nz = np.flatnonzero(np.abs(rows[k]) > 1e-13 * scale[k])
        deg[k] = nz[-1] if len(nz) else -1
    for dg in np.unique(deg):
        if dg < 1:
            continue
        idx = np.flatnonzero(deg == dg)
        sub = rows[idx, :dg + 1]
        if dg == 1:
            roots = (-sub[:, 0] / sub[:, 1])[:, None].astype(complex)
        else:
            roots = _companion_eigs(sub)
        for row_i, k in enumerate(idx):
            rs = roots[row_i]
            keep = rs[np.abs(rs.imag) <= 1e-8 * np.maximum(1.0, np.abs(rs))].real
            keep = keep[(keep >= -1e-12 * max(t, 1.0)) & (keep <= t * (1 + 1e-12))]
            if len(keep) == 0:
                continue
            keep = np.clip(keep, 0.0, t)
            d = b2 * keep ** 2 + b1 * keep + b0
            keep = keep[d >= ZETA_GUARD * t]
            keep = np.sort(keep)
            lad = []
            for x in keep:
                if not lad or x - lad[-1] > 1e-9 * max(t, 1.0):
                    lad.append(float(x))
            ladders[k] = lad
    return ladders


def _chi_grid(ctx: RowContext, act, t: float, rho: float,
              pts: int = 25) -> Optional[np.ndarray]:
    """Scan nodes for the coupling multiplier, spaced by marginal-cost
    quantiles over each active server's usable allocation range."""
    chis = []
    for j in act:
        hi = min(zeta_cap(ctx, j, t), t)
        if hi <= 0:
            return None
        Ls = np.linspace(0.0, hi, pts)
        Ls[0] = min(1e-9 * hi, hi)
        for L in Ls:
            gval = marginal_cost(ctx, j, t, L)
            if np.isfinite(gval):
                chis.append(-gval - rho * ctx.power_cost[j])
    if not chis:
        return None
    grid = np.unique(np.clip(np.asarray(chis), -CHI_MAX, CHI_MAX))
    return grid if len(grid) >= 2 else None


def _scan_active_set(ctx: RowContext, act, t: float, rho: float):
    """Allocations on the given active set whose selected stationarity roots
    sum to t, found by bracketing sign changes of the root sum over the
    multiplier grid and bisecting each."""
    grid = _chi_grid(ctx, act, t, rho)
    if grid is None:
        return []
    shift = np.array([rho * ctx.power_cost[j] for j in act])
    ladders_by_server = [
        _feasible_roots_batch(ctx, j, t, ctx.phi[j] + grid + shift[k])
        for k, j in enumerate(act)]

    def ladders_at(chi):
        return [_feasible_roots_batch(
            ctx, j, t, np.array([ctx.phi[j] + chi + shift[k]]))[0]
            for k, j in enumerate(act)]

    nrule = [max((len(l) for l in lads), default=0)
             for lads in ladders_by_server]
    if any(q == 0 for q in nrule):
        return []
    if int(np.prod(nrule)) > 5 ** 4:
        rules = [tuple(0 for _ in act)]
    else:
        rules = list(itertools.product(*[range(q) for q in nrule]))

    def sum_minus_t(lads, rule):
        tot = 0.0
        for k, q in enumerate(rule):
            if q >= len(lads[k]):
                return None
            tot += lads[k][q]
        return tot - t

    found = []
    for rule in rules:
        hs = [sum_minus_t([ladders_by_server[k][gi] for k in range(len(act))],
                          rule) for gi in range(len(grid))]
        for gi in range(len(grid) - 1):
            h0, h1 = hs[gi], hs[gi + 1]
            if h0 is None or h1 is None or h0 * h1 > 0:
                continue
            lo, hi = grid[gi], grid[gi + 1]
            flo, fhi = h0, h1
            chi = lo if abs(flo) < abs(fhi) else hi
            for _ in range(80):
                if fhi != flo:
                    mid = hi - fhi * (hi - lo) / (fhi - flo)  # secant point
                    if not (lo < mid < hi):
                        mid = 0.5 * (lo + hi)
                else:
                    mid = 0.5 * (lo + hi)
                fm = sum_minus_t(ladders_at(mid), rule)
                if fm is None:
                    fm = np.nan
                if np.isnan(fm):
                    # ladder vanished inside the cell; retreat to plain
                    # bisection against the lo side
                    mid = 0.5 * (lo + hi)
                    fm = sum_minus_t(ladders_at(mid), rule)
                    if fm is None:
                        break
                if flo * fm <= 0:
                    hi, fhi = mid, fm
                else:
                    lo, flo = mid, fm
                chi = mid
                if abs(fm) <= 0.1 * SUM_TOL * max(t, 1.0):
                    break
                if hi - lo <= 1e-15 * max(1.0, abs(lo), abs(hi)):
                    break
            lads = ladders_at(chi)
            alloc = np.zeros(len(ctx.phi))
            ok = True
            for k, q in enumerate(rule):
                if q >= len(lads[k]):
                    ok = False
                    break
                alloc[act[k]] = lads[k][q]
            if ok and abs(alloc.sum() - t) <= SUM_TOL * max(t, 1.0):
                found.append((alloc, float(chi)))
    return found


def _recover_multipliers(ctx: RowContext, act, t: float, chi_scaled: float,
                         rho_scaled: float) -> Multipliers:
    N = len(ctx.phi)
    eps = np.zeros(N)
    for j in range(N):
        if j in act:
            continue
        g0 = marginal_cost(ctx, j, t, 0.0)
        eps[j] = (g0 + chi_scaled + rho_scaled * ctx.power_cost[j]) / ctx.lam \
            if np.isfinite(g0) else np.inf
    return Multipliers(eps=eps, chi=chi_scaled / ctx.lam,
                       varpi=np.zeros(N), rho=rho_scaled / ctx.lam)


def _kkt_candidates(ctx: RowContext, t: float, rho: float):
    """All stationary allocations over every nonempty active set, without the
    power check. Utilization multipliers stay at zero: a binding utilization
    gives an infinite objective, which an optimum never does."""
    N = len(ctx.phi)
    out = []
    seen = set()
    for j in range(N):  # singletons are forced by the sum constraint
        if zeta_cap(ctx, j, t) >= t:
            alloc = np.zeros(N)
            alloc[j] = t
            chi = -marginal_cost(ctx, j, t, t) - rho * ctx.power_cost[j]
            if np.isfinite(chi):
                out.append((alloc, chi, (j,)))
    if N >= 2:
        for size in range(2, N + 1):
            for act in itertools.combinations(range(N), size):
                for alloc, chi in _scan_active_set(ctx, act, t, rho):
                    key = tuple(np.round(alloc, 10))
                    if key in seen:
                        continue
                    seen.add(key)
                    out.append((alloc, chi, act))
    return out


def _best_by_objective(ctx: RowContext, raw, t: float, rho: float,
                       require_power: bool):
    best = None
    for alloc, chi, act in raw:
        if require_power and \
                np.dot(alloc, ctx.power_cost) > ctx.spend_budget + POWER_TOL:
            continue
        val = row_response_time(ctx, alloc)
        if not np.isfinite(val):
            continue
        key = (val, tuple(alloc))
        if best is None or key < best[0]:
            best = (key, alloc, chi, act)
    if best is None:
        return None
    _, alloc, chi, act = best
    return alloc, chi, act


def fallback_allocation(cfg: ScenarioConfig, profile: np.ndarray, i: int,
                        t: float) -> Optional[np.ndarray]:
    """Cheapest-power allocation of total t: fill servers in order of
    per-task power cost (index breaks ties) up to each one's utilization
    cap. None when the caps cannot absorb t or the power budget fails."""
    ctx = row_context(cfg, profile, i)
    return _fallback_ctx(ctx, t)


def _fallback_ctx(ctx: RowContext, t: float) -> Optional[np.ndarray]:
    N = len(ctx.phi)
    order = sorted(range(N), key=lambda j: (ctx.power_cost[j], j))
    alloc = np.zeros(N)
    remaining = t
    for j in order:
        take = min(remaining, zeta_cap(ctx, j, t))
        alloc[j] = take
        remaining -= take
        if remaining <= SUM_TOL * max(t, 1.0):
            break
    if remaining > SUM_TOL * max(t, 1.0):
        return None
    if np.dot(alloc, ctx.power_cost) > ctx.spend_budget + POWER_TOL:
        return None
    return alloc


def solve_p3(cfg: ScenarioConfig, profile: np.ndarray, i: int,
             t: float) -> Optional[KktCandidate]:
    """Best allocation of total offload t for device i against the frozen
    profile; None when no allocation satisfies the constraints."""
    ctx = row_context(cfg, profile, i)
    return solve_p3_ctx(ctx, t)


def solve_p3_ctx(ctx: RowContext, t: float) -> Optional[KktCandidate]:
    if not 0 < t <= ctx.lam * (1 + 1e-12):
        raise ValueError(f"total offload {t} outside (0, {ctx.lam}]")

    def finish(alloc, chi, act, rho, source="kkt"):
        mult = _recover_multipliers(ctx, act, t, chi, rho)
        return KktCandidate(
            allocation=alloc, multipliers=mult,
            objective=float(row_response_time(ctx, alloc)), feasible=True,
            active_set=tuple(act), source=source)

    raw0 = _kkt_candidates(ctx, t, rho=0.0)
    pick = _best_by_objective(ctx, raw0, t, 0.0, require_power=True)
    unconstrained = _best_by_objective(ctx, raw0, t, 0.0, require_power=False)

    finished = []
    if pick is not None:
        finished.append(finish(*pick, rho=0.0))
    if unconstrained is not None and (
            pick is None
            or np.dot(unconstrained[0], ctx.power_cost)
            > ctx.spend_budget + POWER_TOL):
        # The free optimum overspends: price power in and bisect the price
        # until the budget binds; the boundary point can beat every
        # affordable free candidate.
        cand = _rho_branch(ctx, raw0, t)
        if cand is not None:
            alloc, chi, act, rho = cand
            if np.dot(alloc, ctx.power_cost) <= ctx.spend_budget + POWER_TOL:
                finished.append(finish(alloc, chi, act, rho))
    if finished:
        return min(finished,
                   key=lambda c: (c.objective, tuple(c.allocation)))

    alloc = _fallback_ctx(ctx, t)
    if alloc is None:
        return None
    zeros = np.zeros(len(ctx.phi))
    mult = Multipliers(eps=zeros.copy(), chi=0.0, varpi=zeros.copy(), rho=0.0)
    return KktCandidate(
        allocation=alloc, multipliers=mult,
        objective=float(row_response_time(ctx, alloc)), feasible=True,
        active_set=tuple(np.flatnonzero(alloc > 0)), source="fallback")


def _rho_branch(ctx: RowContext, raw0, t: float):
    budget = ctx.spend_budget

    def excess(rho):
        raw = raw0 if rho == 0.0 else _kkt_candidates(ctx, t, rho)
        pick = _best_by_objective(ctx, raw, t, rho, require_power=False)
        if pick is None:
            return None, None
        alloc, chi, act = pick
        return float(np.dot(alloc, ctx.power_cost) - budget), (alloc, chi, act)

    e0, _ = excess(0.0)
    if e0 is None or e0 <= 0:
        return None
    hi = 1.0
    ehi, pick_hi = excess(hi)
    n_doublings = 0
    while ehi is not None and ehi > 0 and n_doublings < 40:
        hi *= 2.0
        ehi, pick_hi = excess(hi)
        n_doublings += 1
    if ehi is None or ehi > 0:
        return None
    lo = 0.0
    best = pick_hi + (hi,)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        em, pick_m = excess(mid)
        if em is None:
            lo = mid
            continue
        if em > 0:
            lo = mid
        else:
            hi = mid
            best = pick_m + (mid,)
        if abs(em) <= POWER_TOL * max(1.0, budget):
            best = pick_m + (mid,)
            break
    return best


def kkt_residuals(ctx: RowContext, t: float, cand: KktCandidate) -> dict:
    """Stationarity and complementary-slackness residuals of a candidate,
    in the unscaled multiplier convention."""
    alloc = cand.allocation
    m = cand.multipliers
    stat = 0.0
    for j in range(len(alloc)):
        if j in cand.active_set:
            g = grad_p3(ctx, t, j, alloc[j])
            stat = max(stat, abs(g + m.chi + m.rho * ctx.power_cost[j]))
        elif np.isfinite(m.eps[j]):
            g = grad_p3(ctx, t, j, 0.0)
            stat = max(stat, abs(g - m.eps[j] + m.chi
                                 + m.rho * ctx.power_cost[j]))
    comp_eps = float(np.max(np.abs(np.where(alloc == 0, 0.0, m.eps * alloc))))
    slack = ctx.spend_budget - float(np.dot(alloc, ctx.power_cost))
    comp_rho = abs(m.rho * slack)
    return {
        "stationarity": float(stat),
        "eps_slackness": comp_eps,
        "rho_slackness": float(comp_rho),
        "sum_residual": float(abs(alloc.sum() - t)),
        "min_eps": float(np.min(m.eps)) if len(m.eps) else 0.0,
        "power_slack": float(slack),
    }
