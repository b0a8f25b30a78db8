"""Event-level simulation of the offloading system.

Devices emit Poisson task streams, each task processed locally or routed to
a server with the profile's probabilities. Poisson splitting and
superposition make the per-server arrival streams Poisson with the analytic
rates, and each FCFS single-server queue's waiting times follow the exact
Lindley recursion over its own arrival/service sequence, so every queue is
simulated event by event without a global calendar.

Service times compose an execution draw and a transfer draw, each from a
two-point distribution matching the configured first two moments.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .analytic import server_load
from .errors import UnstableSystem
from .model import ScenarioConfig, check_profile

log = logging.getLogger(__name__)

CONFIDENCE = 0.99


@dataclass(frozen=True)
class SimConfig:
    horizon_tasks: int = 1_100_000
    warmup_tasks: int = 100_000
    seed: int = 0
    replications: int = 20

    def __post_init__(self):
        if not self.horizon_tasks > self.warmup_tasks >= 0:
            raise ValueError("need horizon_tasks > warmup_tasks >= 0")
        if self.replications < 1:
            raise ValueError("need at least one replication")


@dataclass(frozen=True)
class TwoPointDist:
    """Distribution on {v1, v2} with P(v1) = p, matching a mean and second
    moment exactly."""

    v1: float
    p: float
    v2: float

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.p >= 1.0:
            return np.full(size, self.v1)
        return np.where(rng.random(size) < self.p, self.v1, self.v2)

    @property
    def mean(self) -> float:
        return self.p * self.v1 + (1 - self.p) * self.v2

    @property
    def second_moment(self) -> float:
        return self.p * self.v1 ** 2 + (1 - self.p) * self.v2 ** 2


def moment_matching(mean: float, second_moment: float) -> TwoPointDist:
    """Two-point distribution with the given first two moments, pinning the
    lower atom at mean/2. Infeasible pairs (second moment below squared
    mean) degrade to a point mass at the mean with a warning; no
    distribution can match them."""
    if mean <= 0:
        raise ValueError("mean must be positive")
    if second_moment < mean ** 2 * (1 - 1e-12):
        log.warning("second moment %g below squared mean %g; using a point "
                    "mass at %g", second_moment, mean ** 2, mean)
        return TwoPointDist(v1=mean, p=1.0, v2=mean)
    v1 = 0.5 * mean
    denom = second_moment - 0.75 * mean ** 2
    p = (second_moment - mean ** 2) / denom
    if p <= 0.0:
        return TwoPointDist(v1=mean, p=1.0, v2=mean)
    v2 = mean * (1 - 0.5 * p) / (1 - p)
    return TwoPointDist(v1=v1, p=float(p), v2=float(v2))


@dataclass(frozen=True)
class SimResult:
    server_wait_mean: np.ndarray
    server_wait_half: np.ndarray
    server_utilization: np.ndarray
    server_in_system_mean: np.ndarray
    md_response_mean: np.ndarray
    md_response_half: np.ndarray
    replications: int


def _halfwidth(samples: np.ndarray) -> float:
    n = len(samples)
    if n < 2:
        return 0.0
    tcrit = stats.t.ppf(0.5 + CONFIDENCE / 2, n - 1)
    return float(tcrit * samples.std(ddof=1) / np.sqrt(n))


def _lindley_waits(interarrivals: np.ndarray, services: np.ndarray) -> np.ndarray:
    """FCFS waiting time of each arrival: W[n] = max(0, W[n-1] + S[n-1] - A[n])
    computed in closed form from the cumulative netput."""
    u = services[:-1] - interarrivals[1:]
    c = np.concatenate(([0.0], np.cumsum(u)))
    return c - np.minimum.accumulate(c)


def simulate(cfg: ScenarioConfig, profile: np.ndarray, sim: SimConfig,
             service_sampler=None) -> SimResult:
    """Simulate the configured system under the given strategy profile.

    service_sampler, when given, overrides the service-time draw: called as
    service_sampler(i, j, rng, size) and must return that many service
    times for device-i tasks at server j (test hook for alternative
    distributions).

    Raises UnstableSystem when the analytic utilization of any loaded server
    is at or above one.
    """
    profile = check_profile(cfg, profile)
    M, N = profile.shape
    loads = [server_load(cfg, profile, j) for j in range(N)]
    for j, ld in enumerate(loads):
        if ld.arrival_pi > 0 and ld.utilization_zeta >= 1.0:
            raise UnstableSystem(
                f"server {j} utilization {ld.utilization_zeta:.4f} >= 1")

    r_dists = [moment_matching(md.exec_mean_r, md.exec_second_moment_r2)
               for md in cfg.mds]
    a_dists = [[moment_matching(cfg.links[i][j].data_mean_A,
                                cfg.links[i][j].data_second_moment_A2)
                for j in range(N)] for i in range(M)]
    F = np.array([s.cpu_speed_F for s in cfg.servers])
    R = cfg.link_array("rate_R").astype(float)

    def draw_service(i, j, rng, size):
        if service_sampler is not None:
            return np.asarray(service_sampler(i, j, rng, size), dtype=float)
        r = r_dists[i].sample(rng, size)
        a = a_dists[i][j].sample(rng, size)
        return r / F[j] + a / R[i, j]

    lam = cfg.lam
    s_off = profile.sum(axis=1)
    reps = sim.replications
    waits = np.zeros((reps, N))
    utils = np.zeros((reps, N))
    in_sys = np.zeros((reps, N))
    md_T = np.zeros((reps, M))

    children = np.random.SeedSequence(sim.seed).spawn(reps)
    n_keep = sim.horizon_tasks - sim.warmup_tasks
    for r, ss in enumerate(children):
        rng = np.random.default_rng(ss)
        per_md_sum = np.zeros(M)
        for j in range(N):
            pi = loads[j].arrival_pi
            if pi <= 0:
                continue
            inter = rng.exponential(1.0 / pi, sim.horizon_tasks)
            src_p = profile[:, j] / pi
            src = rng.choice(M, size=sim.horizon_tasks, p=src_p)
            serv = np.empty(sim.horizon_tasks)
            for i in range(M):
                mask = src == i
                serv[mask] = draw_service(i, j, rng, int(mask.sum()))
            W = _lindley_waits(inter, serv)
            span = inter.sum()
            kept = slice(sim.warmup_tasks, None)
            waits[r, j] = W[kept].mean()
            utils[r, j] = serv.sum() / span
            in_sys[r, j] = (W + serv).sum() / span
            resp = W[kept] + serv[kept]
            src_kept = src[kept]
            for i in range(M):
                mask = src_kept == i
                if mask.any():
                    per_md_sum[i] += profile[i, j] / lam[i] * resp[mask].mean()
        for i in range(M):
            local_rate = lam[i] - s_off[i]
            if local_rate > 0:
                draws = r_dists[i].sample(rng, n_keep)
                per_md_sum[i] += (local_rate / lam[i]
                                  * draws.mean() / cfg.mds[i].cpu_speed_f)
            md_T[r, i] = per_md_sum[i]

    return SimResult(
        server_wait_mean=waits.mean(axis=0),
        server_wait_half=np.array([_halfwidth(waits[:, j]) for j in range(N)]),
        server_utilization=utils.mean(axis=0),
        server_in_system_mean=in_sys.mean(axis=0),
        md_response_mean=md_T.mean(axis=0),
        md_response_half=np.array([_halfwidth(md_T[:, i]) for i in range(M)]),
        replications=reps,
    )
