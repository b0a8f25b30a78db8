"""Iterated best-response dynamics and equilibrium checks."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .analytic import md_power, response_times, row_context, row_response_time
from .bestresponse import best_response, grid_oracle
from .errors import InfeasibleInitial, RowSumExceedsLambda
from .model import MdConfig, ScenarioConfig, check_profile

PROFILE_CHANGE_TOL = 1e-6


@dataclass(frozen=True)
class GameTrace:
    iterations: list          # [(profile copy, response-time vector), ...]
    converged: bool
    final_profile: np.ndarray
    ne_residual: float


@dataclass(frozen=True)
class MixedStrategy:
    local_prob: float
    offload_probs: np.ndarray


def _assert_initial_feasible(cfg: ScenarioConfig, profile: np.ndarray):
    try:
        check_profile(cfg, profile)
    except Exception as exc:
        raise InfeasibleInitial(str(exc)) from exc
    T = response_times(cfg, profile)
    if np.any(~np.isfinite(T)):
        raise InfeasibleInitial("initial profile saturates a server")
    for i in range(cfg.num_mds):
        if md_power(cfg, profile, i).slack < -1e-9:
            raise InfeasibleInitial(f"device {i} exceeds its power budget")


def iterate(cfg: ScenarioConfig, initial: np.ndarray, max_iters: int = 200,
            eps: float = 1e-4, sweep: str = "gauss-seidel",
            damping: float = 1.0) -> GameTrace:
    """Run best-response sweeps from the initial profile until no device can
    gain more than eps, the profile stops moving, or max_iters sweeps pass.

    gauss-seidel updates devices in index order against the freshest
    strategies; jacobi computes all responses against the sweep's starting
    profile and commits them together. With damping < 1 each device moves
    only that fraction of the way toward its response; fixed points are
    unchanged, but the relaxed step keeps simultaneous updates from
    limit-cycling and steers the zero start away from the first-mover grab.
    The trace records the profile and response times after every sweep
    (entry 0 is the initial state), and the final residual is certified with
    one extra response per device.
    """
    if sweep not in ("gauss-seidel", "jacobi"):
        raise ValueError(f"unknown sweep mode {sweep!r}")
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    profile = np.array(initial, dtype=float)
    _assert_initial_feasible(cfg, profile)
    M = cfg.num_mds
    lam_max = float(cfg.lam.max())

    trace = [(profile.copy(), response_times(cfg, profile))]
    stopped = False
    for _ in range(max_iters):
        prev = profile.copy()
        improvement = 0.0
        if sweep == "gauss-seidel":
            for i in range(M):
                before = response_times(cfg, profile)[i]
                br = best_response(cfg, profile, i)
                profile[i] = (1.0 - damping) * profile[i] + damping * br.strategy
                improvement = max(improvement, max(0.0, before - br.objective_T))
        else:
            responses = [best_response(cfg, prev, i) for i in range(M)]
            before = response_times(cfg, prev)
            for i, br in enumerate(responses):
                profile[i] = (1.0 - damping) * prev[i] + damping * br.strategy
                improvement = max(improvement, max(0.0, before[i] - br.objective_T))
        trace.append((profile.copy(), response_times(cfg, profile)))
        if improvement <= eps:
            stopped = True
            break
        if np.max(np.abs(profile - prev)) < PROFILE_CHANGE_TOL * lam_max:
            stopped = True
            break

    residual = ne_residual(cfg, profile)
    return GameTrace(iterations=trace, converged=bool(stopped and residual <= eps),
                     final_profile=profile, ne_residual=float(residual))


def ne_residual(cfg: ScenarioConfig, profile: np.ndarray,
                probe_resolution: Optional[float] = None) -> float:
    """Largest unilateral response-time gain any device can realize, clamped
    at zero. With probe_resolution set, deviations come from the exhaustive
    grid oracle at that resolution instead of the analytic best response."""
    profile = check_profile(cfg, profile)
    T = response_times(cfg, profile)
    worst = 0.0
    for i in range(cfg.num_mds):
        if probe_resolution is None:
            br = best_response(cfg, profile, i)
        else:
            br = grid_oracle(cfg, profile, i, probe_resolution)
            if br is None:
                continue
        worst = max(worst, T[i] - br.objective_T)
    return max(0.0, float(worst))


def mixed_strategy(md: MdConfig, row: np.ndarray) -> MixedStrategy:
    """Per-task routing probabilities realizing the rate allocation."""
    row = np.asarray(row, dtype=float)
    lam = md.task_rate_lambda
    if row.sum() > lam * (1 + 1e-9):
        raise RowSumExceedsLambda(
            f"row sums to {row.sum()}, device rate is {lam}")
    probs = row / lam
    return MixedStrategy(local_prob=float(1.0 - probs.sum()),
                         offload_probs=probs)
