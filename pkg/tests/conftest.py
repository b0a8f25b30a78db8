import numpy as np
import pytest

from offloadgame.model import (LinkParams, MdConfig, MecConfig, SystemConfig,
                               make_scenario, validate_config,
                               with_transmit_powers)


def baseline_scenario(corrected_second_moment=False):
    """The stock two-device/two-server scenario with literal channel gains."""
    system = SystemConfig(bandwidth_B=10.0, noise_N0=0.1, static_power_Ps=0.3)
    mds = [
        MdConfig(task_rate_lambda=5.0, cpu_speed_f=2.0, exec_mean_r=1.5,
                 exec_second_moment_r2=0.7, energy_eff_eta=0.55,
                 harvest_rate_E=12.0, power_budget_C=80.0),
        MdConfig(task_rate_lambda=4.0, cpu_speed_f=2.0, exec_mean_r=1.1,
                 exec_second_moment_r2=0.9, energy_eff_eta=0.6,
                 harvest_rate_E=11.0, power_budget_C=85.0),
    ]
    servers = [MecConfig(cpu_speed_F=20.0), MecConfig(cpu_speed_F=18.0)]
    A = [[1.0, 1.0], [1.0, 1.0]]
    A2 = [[0.6, 0.4], [0.5, 0.5]]
    R = [[7.0, 5.0], [7.0, 6.0]]
    h2 = [[0.1375, 0.4655], [0.3196, 0.1509]]
    links = [[LinkParams(data_mean_A=A[i][j], data_second_moment_A2=A2[i][j],
                         rate_R=R[i][j], channel_gain_h2=h2[i][j])
              for j in range(2)] for i in range(2)]
    cfg = make_scenario(system, mds, servers, links,
                        corrected_second_moment=corrected_second_moment)
    return with_transmit_powers(validate_config(cfg))


@pytest.fixture(scope="session")
def baseline():
    return baseline_scenario()


def single_node_scenario(lam=5.0, phi_target=0.1, theta_scale=2.0,
                         local_time=0.75, budget=100.0):
    """One device, one server, with service mean phi_target and second
    moment theta_scale * phi_target**2.

    F = R = 1 so the service time is exec draw + transfer draw; the
    component moments split the target so the composed second moment
    (r2 + 2*r*a + a2) lands exactly on theta.
    """
    system = SystemConfig(bandwidth_B=10.0, noise_N0=0.1, static_power_Ps=0.0)
    r = phi_target / 2
    a = phi_target / 2
    m2 = 2.0 * (theta_scale - 0.5) * r * r  # per component; >= r*r for scale >= 1
    md = MdConfig(task_rate_lambda=lam, cpu_speed_f=r / local_time,
                  exec_mean_r=r, exec_second_moment_r2=m2,
                  energy_eff_eta=1e-6, harvest_rate_E=budget,
                  power_budget_C=0.0)
    links = [[LinkParams(data_mean_A=a, data_second_moment_A2=m2,
                         rate_R=1.0, channel_gain_h2=1.0)]]
    cfg = make_scenario(system, [md], [MecConfig(cpu_speed_F=1.0)], links)
    return with_transmit_powers(validate_config(cfg))


def random_scenario(rng, M=2, N=2, consistent_moments=False,
                    tight_power=False, corrected=False):
    """Bounded random scenario with solvable transmit powers; loose power
    budgets unless tight_power. Redraws when the sampled gains make the
    power fixed point diverge."""
    from offloadgame.errors import NoConvergence

    for _ in range(60):
        try:
            return _draw_scenario(rng, M, N, consistent_moments, tight_power,
                                  corrected)
        except NoConvergence:
            continue
    raise RuntimeError("could not draw a power-feasible scenario")


def _draw_scenario(rng, M, N, consistent_moments, tight_power, corrected):
    system = SystemConfig(bandwidth_B=10.0,
                          noise_N0=float(rng.uniform(0.05, 0.2)),
                          static_power_Ps=float(rng.uniform(0.1, 0.5)))
    mds = []
    for _ in range(M):
        r = float(rng.uniform(0.6, 2.0))
        r2 = float(r * r * rng.uniform(1.0, 2.5)) if consistent_moments \
            else float(rng.uniform(0.4, 1.2))
        mds.append(MdConfig(
            task_rate_lambda=float(rng.uniform(2.5, 6.0)),
            cpu_speed_f=float(rng.uniform(1.5, 3.0)),
            exec_mean_r=r, exec_second_moment_r2=r2,
            energy_eff_eta=float(rng.uniform(0.3, 0.8)),
            harvest_rate_E=float(rng.uniform(8.0, 15.0)),
            power_budget_C=float(rng.uniform(40.0, 90.0)) if not tight_power
            else float(rng.uniform(0.0, 4.0))))
    servers = [MecConfig(cpu_speed_F=float(rng.uniform(12.0, 28.0)))
               for _ in range(N)]
    links = []
    for i in range(M):
        row = []
        for j in range(N):
            a = float(rng.uniform(0.6, 1.4))
            a2 = float(a * a * rng.uniform(1.0, 2.0)) if consistent_moments \
                else float(rng.uniform(0.3, 0.8))
            row.append(LinkParams(
                data_mean_A=a, data_second_moment_A2=a2,
                rate_R=float(rng.uniform(4.0, 9.0)),
                channel_gain_h2=float(rng.uniform(0.08, 0.5))))
        links.append(row)
    cfg = make_scenario(system, mds, servers, links,
                        corrected_second_moment=corrected)
    return with_transmit_powers(validate_config(cfg))


def random_feasible_profile(cfg, rng, max_util=0.85, margin=0.75):
    """Strategy profile with every server comfortably below saturation and
    power budgets satisfied."""
    from offloadgame.analytic import md_power, server_load

    M, N = cfg.num_mds, cfg.num_servers
    for _ in range(60):
        totals = rng.uniform(0.1, margin, M) * cfg.lam
        shares = rng.dirichlet(np.ones(N), size=M)
        profile = shares * totals[:, None]
        zetas = [server_load(cfg, profile, j).utilization_zeta
                 for j in range(N)]
        if max(zetas) >= max_util:
            profile *= max_util / (max(zetas) + 1e-9)
        zetas = [server_load(cfg, profile, j).utilization_zeta
                 for j in range(N)]
        if max(zetas) >= max_util:
            continue
        if all(md_power(cfg, profile, i).slack >= 1e-6 for i in range(M)):
            return profile
    raise RuntimeError("could not draw a feasible profile")


def p3_objective(ctx, row, t):
    """Fixed-total objective: t enters the denominators, the row the terms."""
    import numpy as np

    T = (ctx.lam - t) / ctx.lam * ctx.local_time
    for j, L in enumerate(row):
        nj = ctx.theta[j] * L * L + (ctx.beta[j] + ctx.alpha[j] * t) * L \
            + ctx.gamma[j] * t
        dj = -ctx.phi[j] * L * L - (ctx.mu[j] + ctx.delta[j] * t) * L \
            + t - ctx.nu[j] * t
        if dj <= 0:
            return np.inf
        T += L * (ctx.phi[j] + 0.5 * nj / dj) / ctx.lam
    return T
