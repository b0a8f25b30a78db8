"""Scenario rescaling for parameter sweeps.

Each target scales a slice of the scenario by a coefficient c and re-derives
the transmit powers. Load targets scale a device's rate, mean work and mean
transfer sizes linearly and the second moments quadratically, so the scaled
scenario describes the same task shapes at c times the volume.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

from .model import ScenarioConfig, solve_transmit_powers, with_transmit_powers

SWEEP_TARGETS = (
    "server_speed_F1",
    "server_speed_F2",
    "server_speed_all",
    "rate_R11",
    "rate_R22",
    "md1_load",
    "md2_load",
)


@dataclass(frozen=True)
class SweepSpec:
    target: str
    coefficients: tuple

    def __post_init__(self):
        if self.target not in SWEEP_TARGETS:
            raise ValueError(f"unknown sweep target {self.target!r}")
        if not self.coefficients or any(c <= 0 for c in self.coefficients):
            raise ValueError("coefficients must be a nonempty positive list")


def make_sweep_spec(target: str, coefficients: Sequence[float]) -> SweepSpec:
    return SweepSpec(target=target, coefficients=tuple(float(c) for c in coefficients))


def _scale_server(cfg, idx, c):
    servers = list(cfg.servers)
    servers[idx] = replace(servers[idx], cpu_speed_F=servers[idx].cpu_speed_F * c)
    return replace(cfg, servers=tuple(servers))


def _scale_link_rate(cfg, i, j, c):
    links = [list(row) for row in cfg.links]
    links[i][j] = replace(links[i][j], rate_R=links[i][j].rate_R * c)
    return replace(cfg, links=tuple(tuple(row) for row in links))


def _scale_md_load(cfg, i, c):
    md = cfg.mds[i]
    mds = list(cfg.mds)
    mds[i] = replace(
        md,
        task_rate_lambda=md.task_rate_lambda * c,
        exec_mean_r=md.exec_mean_r * c,
        exec_second_moment_r2=md.exec_second_moment_r2 * c * c,
    )
    links = [list(row) for row in cfg.links]
    for j in range(cfg.num_servers):
        lk = links[i][j]
        links[i][j] = replace(
            lk,
            data_mean_A=lk.data_mean_A * c,
            data_second_moment_A2=lk.data_second_moment_A2 * c * c,
        )
    return replace(cfg, mds=tuple(mds), links=tuple(tuple(row) for row in links))


def scale_scenario(cfg: ScenarioConfig, target: str, c: float,
                   coupling: str = "same-server") -> ScenarioConfig:
    """Scaled scenario with freshly solved transmit powers."""
    if target == "server_speed_F1":
        out = _scale_server(cfg, 0, c)
    elif target == "server_speed_F2":
        out = _scale_server(cfg, 1, c)
    elif target == "server_speed_all":
        out = cfg
        for j in range(cfg.num_servers):
            out = _scale_server(out, j, c)
    elif target == "rate_R11":
        out = _scale_link_rate(cfg, 0, 0, c)
    elif target == "rate_R22":
        out = _scale_link_rate(cfg, 1, 1, c)
    elif target == "md1_load":
        out = _scale_md_load(cfg, 0, c)
    elif target == "md2_load":
        out = _scale_md_load(cfg, 1, c)
    else:
        raise ValueError(f"unknown sweep target {target!r}")
    P = solve_transmit_powers(out, coupling=coupling)
    return with_transmit_powers(out, P)
