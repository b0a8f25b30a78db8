"""Queueing and response-time formulas over a strategy profile.

Every function here is pure. Saturated servers are reported through an
in-band +inf waiting time rather than an exception so that search code can
rank infeasible points.

Notation used throughout: for device i and server j,
    phi[i, j]    mean service time of an offloaded task (compute + transfer)
    theta[i, j]  second-moment term of that service time
    s_i          = sum_j rates[i, j], the device's total offload rate
    p[i, j]      = rates[i, j] / s_i  (0 when the device offloads nothing)
The per-device rewrite of the response time freezes all other devices'
strategies into six coefficient vectors (alpha..nu below); both evaluation
routes agree to rounding error and tests pin that down.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RowSumExceedsLambda, SingularPoint
from .model import ScenarioConfig, check_profile

# Reject allocations whose utilization enters this band below 1: the waiting
# time blows up as 1/(1 - zeta) and the optimizer must not ride the asymptote.
ZETA_GUARD = 1e-6


@dataclass(frozen=True)
class TaskMoments:
    phi: float
    theta: float


@dataclass(frozen=True)
class ServerLoad:
    arrival_pi: float
    service_mean_tau: float
    service_second_moment_tau2: float
    utilization_zeta: float
    waiting_omega: float


@dataclass(frozen=True)
class InterferenceCoeffs:
    """Constants of one (device, server) pair with opponents frozen."""

    alpha: float
    beta: float
    gamma: float
    delta: float
    mu: float
    nu: float


@dataclass(frozen=True)
class PowerReport:
    tx_energy_Et: float
    compute_power_Pc: float
    total_power_P: float
    slack: float


def task_moment_matrices(cfg: ScenarioConfig):
    """(phi, theta) as (M, N) arrays."""
    F = np.array([s.cpu_speed_F for s in cfg.servers])
    rbar = np.array([m.exec_mean_r for m in cfg.mds])
    r2 = np.array([m.exec_second_moment_r2 for m in cfg.mds])
    A = cfg.link_array("data_mean_A").astype(float)
    A2 = cfg.link_array("data_second_moment_A2").astype(float)
    R = cfg.link_array("rate_R").astype(float)
    phi = rbar[:, None] / F[None, :] + A / R
    if cfg.corrected_second_moment:
        theta = (r2[:, None] / F[None, :] ** 2
                 + 2 * rbar[:, None] * A / (F[None, :] * R)
                 + A2 / R ** 2)
    else:
        theta = (r2[:, None] / F[None, :]
                 + 2 * rbar[:, None] * A / (F[None, :] * R)
                 + A2 / R)
    return phi, theta


def task_moments(cfg: ScenarioConfig, i: int, j: int) -> TaskMoments:
    phi, theta = task_moment_matrices(cfg)
    return TaskMoments(phi=float(phi[i, j]), theta=float(theta[i, j]))


def _routing_weights(profile: np.ndarray) -> np.ndarray:
    """p[i, j] = rates[i, j] / row sum, 0 for idle devices."""
    s = profile.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(s > 0, profile / np.where(s > 0, s, 1.0), 0.0)
    return p


def server_load(cfg: ScenarioConfig, profile: np.ndarray, j: int) -> ServerLoad:
    """Arrival rate, service moments, utilization and mean waiting time of
    server j under the profile. waiting_omega is +inf once utilization
    reaches one (no steady state); an empty stream yields all zeros."""
    profile = np.asarray(profile, dtype=float)
    phi, theta = task_moment_matrices(cfg)
    p = _routing_weights(profile)
    pi = float(profile[:, j].sum())
    tau = float(np.dot(p[:, j], phi[:, j]))
    tau2 = float(np.dot(p[:, j], theta[:, j]))
    zeta = pi * tau
    if pi <= 0:
        omega = 0.0
    elif zeta >= 1.0:
        omega = np.inf
    else:
        omega = pi * tau2 / (2.0 * (1.0 - zeta))
    return ServerLoad(pi, tau, tau2, zeta, omega)


def _waiting_vector(cfg: ScenarioConfig, profile: np.ndarray):
    phi, theta = task_moment_matrices(cfg)
    p = _routing_weights(profile)
    pi = profile.sum(axis=0)
    tau = np.einsum("ij,ij->j", p, phi)
    tau2 = np.einsum("ij,ij->j", p, theta)
    zeta = pi * tau
    omega = np.zeros_like(pi)
    busy = pi > 0
    sat = zeta >= 1.0
    with np.errstate(divide="ignore"):
        omega[busy & ~sat] = (pi * tau2 / (2.0 * (1.0 - zeta)))[busy & ~sat]
    omega[busy & sat] = np.inf
    return phi, omega, zeta


def response_time_md(cfg: ScenarioConfig, profile: np.ndarray, i: int) -> float:
    """Mean response time of device i: local share times local processing
    plus offloaded share times per-server (service + waiting). Returns +inf
    if the device routes tasks to a saturated server."""
    profile = check_profile(cfg, profile)
    lam = cfg.lam[i]
    phi, omega, _ = _waiting_vector(cfg, profile)
    row = profile[i]
    s = row.sum()
    T = (lam - s) / lam * cfg.local_time[i]
    used = row > 0
    if np.any(np.isinf(omega[used])):
        return np.inf
    T += float(np.dot(row, phi[i] + np.where(used, omega, 0.0))) / lam
    return float(T)


def response_times(cfg: ScenarioConfig, profile: np.ndarray) -> np.ndarray:
    """Response time of every device, sharing one server-load pass."""
    profile = check_profile(cfg, profile)
    lam = cfg.lam
    phi, omega, _ = _waiting_vector(cfg, profile)
    out = np.empty(cfg.num_mds)
    for i in range(cfg.num_mds):
        row = profile[i]
        s = row.sum()
        used = row > 0
        if np.any(np.isinf(omega[used])):
            out[i] = np.inf
            continue
        out[i] = ((lam[i] - s) / lam[i] * cfg.local_time[i]
                  + float(np.dot(row, phi[i] + np.where(used, omega, 0.0)))
                  / lam[i])
    return out


def interference_row(cfg: ScenarioConfig, profile: np.ndarray, i: int):
    """alpha..nu vectors (length N) for device i with opponents frozen.

    Devices with zero total offload contribute nothing.
    """
    profile = np.asarray(profile, dtype=float)
    phi, theta = task_moment_matrices(cfg)
    M, N = profile.shape
    others = [k for k in range(M) if k != i]
    alpha = np.zeros(N)
    delta = np.zeros(N)
    other_rate = np.zeros(N)
    for k in others:
        sk = profile[k].sum()
        if sk <= 0:
            continue
        alpha += profile[k] * theta[k] / sk
        delta += profile[k] * phi[k] / sk
        other_rate += profile[k]
    beta = theta[i] * other_rate
    mu = phi[i] * other_rate
    gamma = other_rate * alpha
    nu = other_rate * delta
    return alpha, beta, gamma, delta, mu, nu


def interference_coeffs(cfg: ScenarioConfig, profile: np.ndarray, i: int,
                        j: int) -> InterferenceCoeffs:
    alpha, beta, gamma, delta, mu, nu = interference_row(cfg, profile, i)
    return InterferenceCoeffs(float(alpha[j]), float(beta[j]), float(gamma[j]),
                              float(delta[j]), float(mu[j]), float(nu[j]))


@dataclass(frozen=True)
class RowContext:
    """Everything device i's best-response machinery needs, with all other
    devices' strategies frozen. power_cost[j] is the per-task power of
    offloading to server j; spend_budget is what may be spent on offloading
    on top of the static draw."""

    lam: float
    local_time: float
    phi: np.ndarray
    theta: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    delta: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    power_cost: np.ndarray
    spend_budget: float


def per_task_power_cost(cfg: ScenarioConfig, i: int) -> np.ndarray:
    """Power spent per offloaded task: transmit energy rate plus the
    compute-power term, per server."""
    md = cfg.mds[i]
    A = np.array([cfg.links[i][j].data_mean_A for j in range(cfg.num_servers)])
    R = np.array([cfg.links[i][j].rate_R for j in range(cfg.num_servers)])
    P = cfg.tx_power[i]
    compute = (md.exec_mean_r / md.cpu_speed_f) * md.energy_eff_eta * md.cpu_speed_f ** 3
    return P * A / R + compute


def row_context(cfg: ScenarioConfig, profile: np.ndarray, i: int) -> RowContext:
    phi, theta = task_moment_matrices(cfg)
    alpha, beta, gamma, delta, mu, nu = interference_row(cfg, profile, i)
    md = cfg.mds[i]
    budget = md.harvest_rate_E + md.power_budget_C - cfg.system.static_power_Ps
    return RowContext(
        lam=float(cfg.lam[i]), local_time=float(cfg.local_time[i]),
        phi=phi[i].copy(), theta=theta[i].copy(),
        alpha=alpha, beta=beta, gamma=gamma, delta=delta, mu=mu, nu=nu,
        power_cost=per_task_power_cost(cfg, i), spend_budget=float(budget))


def _ratio_polys(ctx: RowContext, row: np.ndarray):
    """Numerator and denominator of each server's waiting ratio, in the
    common-denominator form. Row semantics: s = row.sum()."""
    s = row.sum()
    o = s - row
    Nv = ((ctx.theta + ctx.alpha) * row ** 2
          + (ctx.alpha * o + ctx.gamma + ctx.beta) * row + ctx.gamma * o)
    Dv = (s - (ctx.phi + ctx.delta) * row ** 2
          - (ctx.delta * o + ctx.nu + ctx.mu) * row - ctx.nu * o)
    return Nv, Dv


def row_response_time(ctx: RowContext, row: np.ndarray) -> float:
    """Device response time via the frozen-opponent rewrite; +inf when any
    used server is saturated. Agrees with response_time_md at the profile
    with this row substituted."""
    row = np.asarray(row, dtype=float)
    s = row.sum()
    T = (ctx.lam - s) / ctx.lam * ctx.local_time
    if s <= 0:
        return float(T)
    Nv, Dv = _ratio_polys(ctx, row)
    used = row > 0
    if np.any(Dv[used] <= ZETA_GUARD * s):
        return np.inf
    T += float(np.dot(row[used],
                      ctx.phi[used] + 0.5 * Nv[used] / Dv[used])) / ctx.lam
    return float(T)


def row_response_time_batch(ctx: RowContext, rows: np.ndarray) -> np.ndarray:
    """row_response_time over rows of shape (K, N); +inf rows where
    saturated. Vectorized for oracle grids."""
    rows = np.asarray(rows, dtype=float)
    s = rows.sum(axis=1, keepdims=True)
    o = s - rows
    Nv = ((ctx.theta + ctx.alpha) * rows ** 2
          + (ctx.alpha * o + ctx.gamma + ctx.beta) * rows + ctx.gamma * o)
    Dv = (s - (ctx.phi + ctx.delta) * rows ** 2
          - (ctx.delta * o + ctx.nu + ctx.mu) * rows - ctx.nu * o)
    used = rows > 0
    bad = np.any(used & (Dv <= ZETA_GUARD * s), axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(used, rows * (ctx.phi + 0.5 * Nv / np.where(Dv != 0, Dv, 1.0)), 0.0)
    T = ((ctx.lam - s[:, 0]) / ctx.lam * ctx.local_time
         + terms.sum(axis=1) / ctx.lam)
    T[bad] = np.inf
    return T


def row_utilizations(ctx: RowContext, row: np.ndarray) -> np.ndarray:
    """Utilization each server would see if device i played `row`."""
    row = np.asarray(row, dtype=float)
    s = row.sum()
    if s <= 0:
        return ctx.nu.copy()
    _, Dv = _ratio_polys(ctx, row)
    return 1.0 - Dv / s


def md_power(cfg: ScenarioConfig, profile: np.ndarray, i: int) -> PowerReport:
    """Average power report of device i.

    total_power_P charges the compute term to the offloaded stream (rate
    times per-task compute power) plus the static draw, matching the power
    constraint the game enforces; compute_power_Pc reports the local
    processor's own draw for reference.
    """
    profile = np.asarray(profile, dtype=float)
    md = cfg.mds[i]
    row = profile[i]
    s = row.sum()
    A = np.array([cfg.links[i][j].data_mean_A for j in range(cfg.num_servers)])
    R = np.array([cfg.links[i][j].rate_R for j in range(cfg.num_servers)])
    P = cfg.tx_power[i]
    p = row / s if s > 0 else np.zeros_like(row)
    tx_energy = float(np.dot(p, P * A / R))
    lam_hat = md.task_rate_lambda - s
    sigma = lam_hat * md.exec_mean_r / md.cpu_speed_f
    compute = sigma * md.energy_eff_eta * md.cpu_speed_f ** 3 + cfg.system.static_power_Ps
    total = float(np.dot(row, per_task_power_cost(cfg, i))
                  + cfg.system.static_power_Ps)
    slack = md.harvest_rate_E + md.power_budget_C - total
    return PowerReport(tx_energy_Et=tx_energy, compute_power_Pc=float(compute),
                       total_power_P=total, slack=float(slack))


def grad_response_time(cfg: ScenarioConfig, profile: np.ndarray,
                       i: int) -> np.ndarray:
    """Analytic gradient of device i's response time with respect to its own
    offload rates, at a strictly interior profile (every used server below
    saturation, positive total offload).

    Each server's ratio term couples to the whole row through the row sum,
    so the chain rule carries cross-server contributions.
    """
    profile = check_profile(cfg, profile)
    ctx = row_context(cfg, profile, i)
    row = profile[i].astype(float)
    s = row.sum()
    if s <= 0:
        raise SingularPoint("gradient requested at zero total offload")
    Nv, Dv = _ratio_polys(ctx, row)
    if np.any(np.abs(Dv) < 1e-12):
        raise SingularPoint("queue denominator below 1e-12")
    o = s - row
    N = len(row)
    out = np.empty(N)
    # Partials of each server term's numerator/denominator w.r.t. own rate
    dN_own = 2 * (ctx.theta + ctx.alpha) * row + (ctx.alpha * o + ctx.gamma + ctx.beta)
    dD_own = 1 - 2 * (ctx.phi + ctx.delta) * row - (ctx.delta * o + ctx.nu + ctx.mu)
    # ... and w.r.t. any other entry of the row (through s and o)
    dN_cross = ctx.alpha * row + ctx.gamma
    dD_cross = 1 - ctx.delta * row - ctx.nu
    for j in range(N):
        dN = dN_cross.copy()
        dD = dD_cross.copy()
        dN[j] = dN_own[j]
        dD[j] = dD_own[j]
        dH = (dN * Dv - Nv * dD) / Dv ** 2
        acc = float(np.dot(row, dH)) + Nv[j] / Dv[j]
        out[j] = (-ctx.local_time + ctx.phi[j] + 0.5 * acc) / ctx.lam
    return out
