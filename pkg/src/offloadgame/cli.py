"""Experiment command line.

Subcommands

  solve      iterate best responses to an equilibrium; emit trace.csv,
             equilibrium.csv, a run manifest and a convergence figure
  sweep      re-solve across a scaled-parameter family; emit sweep.csv and
             the response-time curves
  validate   compare analytic waiting/response times against the event
             simulator; emit validate.csv and an error-bar figure
  audit      cross-check the best response against the exhaustive grid
             oracle; emit audit.csv

Config files are YAML; see configs/baseline_2x2.yaml for the schema.
Channel gains are given either literally or as exponential-distribution
means plus a seed.
"""
from __future__ import annotations

import argparse
import sys
import numpy as np
import yaml

from . import __version__
from .analytic import response_times, server_load
from .bestresponse import best_response, grid_oracle
from .errors import ConfigError, InfeasibleInitial, NoConvergence
from .game import iterate, mixed_strategy
from .model import (LinkParams, MdConfig, MecConfig, SystemConfig,
                    make_scenario, sample_channel_gains,
                    solve_transmit_powers, validate_config,
                    with_transmit_powers)
from .queue_sim import SimConfig, simulate
from .report import write_csv, write_manifest
from .sweeps import SWEEP_TARGETS, make_sweep_spec, scale_scenario

VALIDATION_ZETA_CEILING = 0.9


def load_config(path: str, corrected_second_moment=None):
    """Parse a scenario file; returns (config with powers attached, raw dict,
    initial profile array)."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    system = SystemConfig(**raw["system"])
    mds = [MdConfig(**m) for m in raw["mds"]]
    servers = [MecConfig(**s) for s in raw["servers"]]
    lk = raw["links"]
    gains = lk["channel_gain_h2"]
    if isinstance(gains, dict):
        if gains.get("distribution") != "exponential":
            raise ConfigError(f"unsupported gain distribution {gains!r}")
        gains = sample_channel_gains(gains["means"], int(gains["seed"]))
    gains = np.asarray(gains, dtype=float)
    M, N = len(mds), len(servers)
    links = [[LinkParams(data_mean_A=lk["data_mean_A"][i][j],
                         data_second_moment_A2=lk["data_second_moment_A2"][i][j],
                         rate_R=lk["rate_R"][i][j],
                         channel_gain_h2=float(gains[i][j]))
              for j in range(N)] for i in range(M)]
    corrected = raw.get("corrected_second_moment", False) \
        if corrected_second_moment is None else corrected_second_moment
    cfg = make_scenario(system, mds, servers, links,
                        corrected_second_moment=bool(corrected))
    validate_config(cfg)
    coupling = raw.get("interference_coupling", "same-server")
    P = solve_transmit_powers(cfg, coupling=coupling)
    cfg = with_transmit_powers(cfg, P)
    initial = np.asarray(raw.get("initial_profile",
                                 np.zeros((M, N))), dtype=float)
    return cfg, raw, initial


def _base_manifest(args, cfg_raw, extras=None):
    payload = {
        "version": __version__,
        "command": args.command,
        "config_path": args.config,
        "config": cfg_raw,
        "seed": getattr(args, "seed", None),
        "eps": getattr(args, "eps", None),
        "max_iters": getattr(args, "max_iters", None),
        "sweep_mode": getattr(args, "sweep", None),
        "damping": getattr(args, "damping", None)
        if getattr(args, "damping", None) is not None
        else cfg_raw.get("dynamics", {}).get("damping", 1.0),
        "corrected_second_moment": bool(getattr(args, "corrected_second_moment",
                                                False)),
        "figures": not getattr(args, "no_figures", False),
        "tolerances": {
            "profile_change": 1e-6,
            "golden_section": "1e-6 * task_rate_lambda",
            "zeta_guard": 1e-6,
            "sum_to_t": 1e-9,
        },
    }
    if extras:
        payload.update(extras)
    return payload


def _solve_game(cfg, initial, args, raw=None):
    damping = args.damping
    if damping is None:
        damping = (raw or {}).get("dynamics", {}).get("damping", 1.0)
    return iterate(cfg, initial, max_iters=args.max_iters, eps=args.eps,
                   sweep=args.sweep, damping=float(damping))


def cmd_solve(args) -> int:
    cfg, raw, initial = load_config(
        args.config, corrected_second_moment=args.corrected_second_moment or None)
    trace = _solve_game(cfg, initial, args, raw)
    out = args.out

    M, N = cfg.num_mds, cfg.num_servers
    rows = []
    for k, (profile, T) in enumerate(trace.iterations):
        for i in range(M):
            rows.append([k, i, T[i]] + [profile[i, j] for j in range(N)])
    header = ["iteration", "device", "T"] + [f"s_{j + 1}" for j in range(N)]
    write_csv(f"{out}/trace.csv", header, rows)

    eq_rows = []
    T_final = response_times(cfg, trace.final_profile)
    for i in range(M):
        mix = mixed_strategy(cfg.mds[i], trace.final_profile[i])
        eq_rows.append([i, T_final[i], float(trace.final_profile[i].sum()),
                        mix.local_prob]
                       + [trace.final_profile[i, j] for j in range(N)]
                       + [mix.offload_probs[j] for j in range(N)]
                       + [trace.ne_residual, trace.converged])
    eq_header = (["device", "T", "total_offload", "local_prob"]
                 + [f"s_{j + 1}" for j in range(N)]
                 + [f"p_{j + 1}" for j in range(N)]
                 + ["ne_residual", "converged"])
    write_csv(f"{out}/equilibrium.csv", eq_header, eq_rows)

    write_manifest(f"{out}/run_manifest.json", _base_manifest(args, raw, {
        "iterations": len(trace.iterations) - 1,
        "converged": trace.converged,
        "ne_residual": trace.ne_residual,
        "outputs": ["trace.csv", "equilibrium.csv"],
    }))
    if not args.no_figures:
        from .plots import plot_trace
        plot_trace(rows, f"{out}/trace.png")
    print(f"converged={trace.converged} iterations={len(trace.iterations) - 1} "
          f"ne_residual={trace.ne_residual:.3e}")
    return 0


def cmd_sweep(args) -> int:
    cfg, raw, initial = load_config(
        args.config, corrected_second_moment=args.corrected_second_moment or None)
    spec = make_sweep_spec(args.target, args.coefficients)
    coupling = raw.get("interference_coupling", "same-server")
    out = args.out
    M, N = cfg.num_mds, cfg.num_servers

    rows, dict_rows = [], []
    for c in spec.coefficients:
        try:
            scaled = scale_scenario(cfg, spec.target, c, coupling=coupling)
            init = np.zeros((M, N))
            trace = _solve_game(scaled, init, args, raw)
            T = response_times(scaled, trace.final_profile)
            flat = [trace.final_profile[i, j] for i in range(M) for j in range(N)]
            rows.append([c] + list(T) + [trace.ne_residual, trace.converged] + flat)
            dict_rows.append({"c": c, **{f"T_{i + 1}": float(T[i]) for i in range(M)}})
        except (NoConvergence, InfeasibleInitial):
            rows.append([c] + [None] * (M + 2) + [None] * (M * N))
            dict_rows.append({"c": c, **{f"T_{i + 1}": None for i in range(M)}})
    header = (["c"] + [f"T_{i + 1}" for i in range(M)]
              + ["ne_residual", "converged"]
              + [f"s_{i + 1}_{j + 1}" for i in range(M) for j in range(N)])
    write_csv(f"{out}/sweep.csv", header, rows)
    write_manifest(f"{out}/run_manifest.json", _base_manifest(args, raw, {
        "sweep_target": spec.target,
        "coefficients": list(spec.coefficients),
        "outputs": ["sweep.csv"],
    }))
    if not args.no_figures:
        from .plots import plot_sweep
        plot_sweep(dict_rows, f"{out}/sweep.png")
    print(f"sweep {spec.target}: {len(rows)} rows -> {out}/sweep.csv")
    return 0


def _resolve_profile(cfg, args, initial, raw=None):
    if args.profile == "zero":
        return np.zeros((cfg.num_mds, cfg.num_servers))
    if args.profile == "solve":
        return _solve_game(cfg, initial, args, raw).final_profile
    with open(args.profile, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    return np.asarray(data["offload_rates"], dtype=float)


def cmd_validate(args) -> int:
    cfg, raw, initial = load_config(
        args.config, corrected_second_moment=args.corrected_second_moment or None)
    profile = _resolve_profile(cfg, args, initial, raw)
    out = args.out
    M, N = cfg.num_mds, cfg.num_servers

    loads = [server_load(cfg, profile, j) for j in range(N)]
    r_ok = [cfg.mds[i].exec_second_moment_r2 >= cfg.mds[i].exec_mean_r ** 2
            for i in range(M)]
    a_ok = [[cfg.links[i][j].data_second_moment_A2
             >= cfg.links[i][j].data_mean_A ** 2 for j in range(N)]
            for i in range(M)]
    # a server's comparison is meaningful only if every stream feeding it
    # has realizable moments
    server_ok = [all(r_ok[i] and a_ok[i][j]
                     for i in range(M) if profile[i, j] > 0)
                 for j in range(N)]
    unstable = any(ld.arrival_pi > 0 and ld.utilization_zeta >= 1.0
                   for ld in loads)

    sim_result = None
    if not unstable:
        sim = SimConfig(horizon_tasks=args.horizon, warmup_tasks=args.warmup,
                        seed=args.seed, replications=args.replications)
        sim_result = simulate(cfg, profile, sim)

    rows = []
    T_analytic = response_times(cfg, profile)
    for j in range(N):
        analytic = loads[j].waiting_omega
        if sim_result is None:
            rows.append(["omega", j, analytic, None, None, "skipped"])
            continue
        simulated = sim_result.server_wait_mean[j]
        half = sim_result.server_wait_half[j]
        if loads[j].utilization_zeta > VALIDATION_ZETA_CEILING or \
                not server_ok[j]:
            status = "skipped"
        else:
            status = "pass" if abs(simulated - analytic) <= half else "fail"
        rows.append(["omega", j, analytic, simulated, half, status])
    for i in range(M):
        analytic = T_analytic[i]
        if sim_result is None:
            rows.append(["T", i, analytic, None, None, "skipped"])
            continue
        simulated = sim_result.md_response_mean[i]
        half = sim_result.md_response_half[i]
        used = [j for j in range(N) if profile[i, j] > 0]
        ok = r_ok[i] and all(server_ok[j] for j in used) and all(
            loads[j].utilization_zeta <= VALIDATION_ZETA_CEILING for j in used)
        if not ok:
            status = "skipped"
        else:
            status = "pass" if abs(simulated - analytic) <= half else "fail"
        rows.append(["T", i, analytic, simulated, half, status])

    write_csv(f"{out}/validate.csv",
              ["kind", "index", "analytic", "simulated", "ci_half_width",
               "status"], rows)
    write_manifest(f"{out}/run_manifest.json", _base_manifest(args, raw, {
        "profile_source": args.profile,
        "horizon": args.horizon, "warmup": args.warmup,
        "replications": args.replications,
        "outputs": ["validate.csv"],
    }))
    if not args.no_figures:
        from .plots import plot_validation
        dict_rows = [dict(zip(["kind", "index", "analytic", "simulated",
                               "ci_half_width", "status"], r)) for r in rows]
        plot_validation(dict_rows, f"{out}/validate.png")
    n_pass = sum(1 for r in rows if r[-1] == "pass")
    n_fail = sum(1 for r in rows if r[-1] == "fail")
    print(f"validate: {n_pass} pass, {n_fail} fail, "
          f"{len(rows) - n_pass - n_fail} skipped -> {out}/validate.csv")
    return 0


def cmd_audit(args) -> int:
    cfg, raw, initial = load_config(
        args.config, corrected_second_moment=args.corrected_second_moment or None)
    profile = _resolve_profile(cfg, args, initial, raw)
    out = args.out
    rows = []
    worst = 0.0
    for i in range(cfg.num_mds):
        res = args.resolution * cfg.mds[i].task_rate_lambda
        try:
            br = best_response(cfg, profile, i)
            br_obj, br_t, br_evals = br.objective_T, br.total_t, br.evaluations
        except RuntimeError:
            br_obj = br_t = None
            br_evals = 0
        oracle = grid_oracle(cfg, profile, i, res)
        if br_obj is None or oracle is None:
            status = "infeasible" if br_obj is None and oracle is None \
                else "disagree-on-feasibility"
            rows.append([i, br_obj, None if oracle is None else
                         oracle.objective_T, None, status, br_evals])
            continue
        gap = abs(br_obj - oracle.objective_T)
        worst = max(worst, gap)
        rows.append([i, br_obj, oracle.objective_T, gap, "ok", br_evals])
    write_csv(f"{out}/audit.csv",
              ["device", "best_response_T", "oracle_T", "abs_gap", "status",
               "p3_solves"], rows)
    write_manifest(f"{out}/run_manifest.json", _base_manifest(args, raw, {
        "resolution": args.resolution,
        "profile_source": args.profile,
        "outputs": ["audit.csv"],
    }))
    print(f"audit: max |best_response - oracle| = {worst:.3e} -> {out}/audit.csv")
    return 0


def _add_common(p):
    p.add_argument("--config", required=True, help="scenario YAML path")
    p.add_argument("--out", default="runs/latest", help="output directory")
    p.add_argument("--eps", type=float, default=1e-4,
                   help="equilibrium residual target")
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--sweep", choices=["gauss-seidel", "jacobi"],
                   default="gauss-seidel", help="device update order")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--damping", type=float, default=None,
                   help="best-response step fraction; default from the "
                        "config's dynamics.damping, else 1.0")
    p.add_argument("--corrected-second-moment", action="store_true",
                   help="use squared speed/rate in the service second moment")
    p.add_argument("--no-figures", action="store_true",
                   help="skip PNG rendering next to the CSVs")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="offloadgame", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="iterate to an equilibrium")
    _add_common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="solve a scaled-parameter family")
    _add_common(p)
    p.add_argument("--target", required=True, choices=SWEEP_TARGETS)
    p.add_argument("--coefficients", type=float, nargs="+",
                   default=[0.4, 0.8, 1.2, 1.6, 2.0])
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="simulator cross-check")
    _add_common(p)
    p.add_argument("--profile", default="solve",
                   help="'zero', 'solve', or YAML file with offload_rates")
    p.add_argument("--horizon", type=int, default=1_100_000)
    p.add_argument("--warmup", type=int, default=100_000)
    p.add_argument("--replications", type=int, default=20)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("audit", help="grid-oracle cross-check")
    _add_common(p)
    p.add_argument("--profile", default="zero",
                   help="'zero', 'solve', or YAML file with offload_rates")
    p.add_argument("--resolution", type=float, default=1e-3,
                   help="grid step as a fraction of each device's rate")
    p.set_defaults(func=cmd_audit)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: cannot read {exc.filename or exc}", file=sys.stderr)
        return 1
    except InfeasibleInitial as exc:
        print(f"error: infeasible initial profile: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, NoConvergence, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
