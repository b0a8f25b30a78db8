"""Static domain types, configuration validation, and the physical power layer.

All quantities are dimensionless model units. A scenario holds M devices and
N servers; the strategy state of the game is an (M, N) float array whose
(i, j) entry is the rate of tasks device i offloads to server j.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DimensionMismatch,
    InvalidConfig,
    NegativeParameter,
    NoConvergence,
    NonPositiveParameter,
    RowSumExceedsLambda,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SystemConfig:
    """Shared radio parameters: channel bandwidth, noise power, idle power."""

    bandwidth_B: float
    noise_N0: float
    static_power_Ps: float


@dataclass(frozen=True)
class MdConfig:
    """One mobile device.

    task_rate_lambda    Poisson task generation rate (tasks/s)
    cpu_speed_f         local processor speed (cycles/s)
    exec_mean_r         mean cycles per task
    exec_second_moment_r2  second moment of cycles per task
    energy_eff_eta      compute-power coefficient (power = eta * f^3 scale)
    harvest_rate_E      mean harvested power
    power_budget_C      extra power allowance beyond harvesting
    """

    task_rate_lambda: float
    cpu_speed_f: float
    exec_mean_r: float
    exec_second_moment_r2: float
    energy_eff_eta: float
    harvest_rate_E: float
    power_budget_C: float


@dataclass(frozen=True)
class MecConfig:
    """One edge server; cpu_speed_F in cycles/s."""

    cpu_speed_F: float


@dataclass(frozen=True)
class LinkParams:
    """Wireless link between one device and one server.

    tx_power_P is derived from the rate/gain coupling (see
    solve_transmit_powers) and is None until attached.
    """

    data_mean_A: float
    data_second_moment_A2: float
    rate_R: float
    channel_gain_h2: float
    tx_power_P: Optional[float] = None


@dataclass(frozen=True)
class ScenarioConfig:
    """Full static description of one offloading scenario.

    corrected_second_moment switches the service second-moment formula to
    divide by squared server speed and squared link rate; the default keeps
    the first-power form.
    """

    system: SystemConfig
    mds: tuple
    servers: tuple
    links: tuple  # M x N nested tuple of LinkParams
    corrected_second_moment: bool = False

    @property
    def num_mds(self) -> int:
        return len(self.mds)

    @property
    def num_servers(self) -> int:
        return len(self.servers)

    @cached_property
    def lam(self) -> np.ndarray:
        return np.array([md.task_rate_lambda for md in self.mds])

    @cached_property
    def local_time(self) -> np.ndarray:
        """Mean local processing time per device."""
        return np.array([md.exec_mean_r / md.cpu_speed_f for md in self.mds])

    def link(self, i: int, j: int) -> LinkParams:
        return self.links[i][j]

    def link_array(self, field: str) -> np.ndarray:
        return np.array([[getattr(lk, field) for lk in row] for row in self.links])

    @cached_property
    def tx_power(self) -> np.ndarray:
        P = self.link_array("tx_power_P")
        if np.any(P == None):  # noqa: E711  (object array comparison)
            raise ConfigError(
                "transmit powers not attached; call with_transmit_powers")
        return P.astype(float)


def make_scenario(system, mds, servers, links,
                  corrected_second_moment=False) -> ScenarioConfig:
    """Build a ScenarioConfig from plain sequences, freezing them to tuples."""
    return ScenarioConfig(
        system=system,
        mds=tuple(mds),
        servers=tuple(servers),
        links=tuple(tuple(row) for row in links),
        corrected_second_moment=corrected_second_moment,
    )


def _positive(violations, field, value):
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        violations.append(NonPositiveParameter(field, value))


def _nonnegative(violations, field, value):
    if value is None:
        return
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value >= 0):
        violations.append(NegativeParameter(field, value))


def config_violations(cfg: ScenarioConfig) -> list:
    """All type-invariant violations of cfg, each naming the field and bound."""
    v = []
    _positive(v, "bandwidth_B", cfg.system.bandwidth_B)
    _positive(v, "noise_N0", cfg.system.noise_N0)
    _nonnegative(v, "static_power_Ps", cfg.system.static_power_Ps)

    if cfg.num_mds < 1:
        v.append(DimensionMismatch("mds", "M >= 1", cfg.num_mds))
    if cfg.num_servers < 1:
        v.append(DimensionMismatch("servers", "N >= 1", cfg.num_servers))

    for i, md in enumerate(cfg.mds):
        tag = f"mds[{i}]"
        _positive(v, f"{tag}.task_rate_lambda", md.task_rate_lambda)
        _positive(v, f"{tag}.cpu_speed_f", md.cpu_speed_f)
        _positive(v, f"{tag}.exec_mean_r", md.exec_mean_r)
        _positive(v, f"{tag}.exec_second_moment_r2", md.exec_second_moment_r2)
        _positive(v, f"{tag}.energy_eff_eta", md.energy_eff_eta)
        _positive(v, f"{tag}.harvest_rate_E", md.harvest_rate_E)
        _nonnegative(v, f"{tag}.power_budget_C", md.power_budget_C)

    for j, srv in enumerate(cfg.servers):
        _positive(v, f"servers[{j}].cpu_speed_F", srv.cpu_speed_F)

    M, N = cfg.num_mds, cfg.num_servers
    if len(cfg.links) != M or any(len(row) != N for row in cfg.links):
        got = (len(cfg.links), {len(row) for row in cfg.links})
        v.append(DimensionMismatch("links", (M, N), got))
        return v  # per-link checks would be ill-indexed

    for i in range(M):
        for j in range(N):
            lk = cfg.links[i][j]
            tag = f"links[{i}][{j}]"
            _positive(v, f"{tag}.data_mean_A", lk.data_mean_A)
            _positive(v, f"{tag}.data_second_moment_A2", lk.data_second_moment_A2)
            _positive(v, f"{tag}.rate_R", lk.rate_R)
            _positive(v, f"{tag}.channel_gain_h2", lk.channel_gain_h2)
            _nonnegative(v, f"{tag}.tx_power_P", lk.tx_power_P)
    return v


def validate_config(cfg: ScenarioConfig) -> ScenarioConfig:
    """Return cfg unchanged if every invariant holds; raise InvalidConfig
    carrying the full violation list otherwise.

    Moment pairs with second moment below the squared mean are accepted as
    given (they are independent inputs here) but logged at warn level, since
    no distribution realizes them.
    """
    v = config_violations(cfg)
    if v:
        raise InvalidConfig(v)
    for i, md in enumerate(cfg.mds):
        if md.exec_second_moment_r2 < md.exec_mean_r ** 2:
            log.warning(
                "mds[%d]: exec_second_moment_r2=%g below squared mean %g; "
                "no distribution matches these moments", i,
                md.exec_second_moment_r2, md.exec_mean_r ** 2)
    for i in range(cfg.num_mds):
        for j in range(cfg.num_servers):
            lk = cfg.links[i][j]
            if lk.data_second_moment_A2 < lk.data_mean_A ** 2:
                log.warning(
                    "links[%d][%d]: data_second_moment_A2=%g below squared "
                    "mean %g", i, j, lk.data_second_moment_A2,
                    lk.data_mean_A ** 2)
    return cfg


def sample_channel_gains(means: Sequence[Sequence[float]], seed: int) -> np.ndarray:
    """Draw exponentially distributed power gains with the given means."""
    means = np.asarray(means, dtype=float)
    rng = np.random.default_rng(seed)
    return rng.exponential(means)


def solve_transmit_powers(cfg: ScenarioConfig, *, coupling: str = "same-server",
                          damping: float = 0.5, tol: float = 1e-10,
                          max_rounds: int = 10000,
                          divergence_limit: float = 1e12) -> np.ndarray:
    """Fixed point of the coupled rate/power relation.

    Each link must sustain its configured rate, so
        P[i, j] = (N0 + I[i, j]) / h2[i, j] * (2**(R[i, j]/B) - 1),
    where I[i, j] is interference received at server j from other devices.
    Coupling modes:
        "same-server"  only other devices' transmissions to server j
                       interfere there (per-server channel separation):
                       I[i, j] = sum_{l != i} P[l, j] * h2[l, j]
        "all-links"    every link's power of every other device counts:
                       I[i, j] = sum_{l != i} sum_k P[l, k] * h2[l, j]
    The all-links coupling amplifies itself above unity for moderate rate
    targets and then admits no nonnegative fixed point; same-server is the
    default for that reason.

    Damped iteration from I = 0; stops when the largest power change drops
    below tol or after max_rounds rounds. Raises NoConvergence when a power
    exceeds divergence_limit (the rate/channel combination is infeasible) or
    when the round budget is exhausted while still moving.
    """
    if coupling not in ("same-server", "all-links"):
        raise ValueError(f"unknown coupling {coupling!r}")
    B = cfg.system.bandwidth_B
    N0 = cfg.system.noise_N0
    R = cfg.link_array("rate_R").astype(float)
    h2 = cfg.link_array("channel_gain_h2").astype(float)
    k = (np.exp2(R / B) - 1.0) / h2

    M = cfg.num_mds
    P = np.zeros_like(k)
    for _ in range(max_rounds):
        if coupling == "all-links":
            contrib = P.sum(axis=1)[:, None] * h2  # (l, j): MD l's total at j
        else:
            contrib = P * h2  # (l, j): MD l's power to j, received at j
        I = contrib.sum(axis=0)[None, :] - contrib  # exclude l == i
        target = k * (N0 + I)
        P_next = (1.0 - damping) * P + damping * target
        if np.max(P_next) > divergence_limit:
            raise NoConvergence(
                f"transmit powers exceeded {divergence_limit:g}; the "
                f"configured rates are infeasible under {coupling} coupling")
        delta = np.max(np.abs(P_next - P))
        P = P_next
        if delta < tol:
            return P
    raise NoConvergence(
        f"power fixed point still moving after {max_rounds} rounds")


def with_transmit_powers(cfg: ScenarioConfig, P: Optional[np.ndarray] = None,
                         **solve_kwargs) -> ScenarioConfig:
    """Return a copy of cfg whose links carry tx_power_P (solved if absent)."""
    if P is None:
        P = solve_transmit_powers(cfg, **solve_kwargs)
    links = tuple(
        tuple(replace(cfg.links[i][j], tx_power_P=float(P[i, j]))
              for j in range(cfg.num_servers))
        for i in range(cfg.num_mds))
    return replace(cfg, links=links)


def check_profile(cfg: ScenarioConfig, profile: np.ndarray,
                  tol: float = 1e-9) -> np.ndarray:
    """Validate a strategy profile: shape (M, N), entries >= 0, row sums
    within each device's generation rate (up to tol relative slack)."""
    profile = np.asarray(profile, dtype=float)
    if profile.shape != (cfg.num_mds, cfg.num_servers):
        raise DimensionMismatch("profile", (cfg.num_mds, cfg.num_servers),
                                profile.shape)
    if np.any(profile < -tol):
        raise NegativeParameter("profile", float(profile.min()))
    lam = cfg.lam
    if np.any(profile.sum(axis=1) > lam * (1 + tol)):
        raise RowSumExceedsLambda(
            f"row sums {profile.sum(axis=1).tolist()} exceed rates {lam.tolist()}")
    return profile
