import math

import numpy as np
import pytest

from dmcvqkd import channel as ch
from dmcvqkd.detector import DetectorParams, observables, region_operators
from dmcvqkd.protocol import DISCARD, KeyMapRegions, key_map
from dmcvqkd.scenario import ChannelParams, Scenario


def make_scenario(**overrides) -> Scenario:
    base = dict(
        alpha=0.65,
        channel=ChannelParams(length_km=80.0, excess_noise=0.02),
        nu_s=0.001,
        source_trusted=True,
        detector=DetectorParams(eta_d=0.45, nu_el=0.297),
        detector_trusted=True,
        delta_a=0.0,
        beta=0.956,
    )
    base.update(overrides)
    return Scenario(**base)


def mc_outcomes(eff, n_per_x: int, seed: int, delta_a: float) -> np.ndarray:
    """Monte Carlo joint table using the documented seeded generator."""
    rng = np.random.default_rng(seed)
    regions = KeyMapRegions(delta_a)
    v = eff.outcome_variance
    counts = np.zeros((4, 5))
    for x in range(4):
        ys = eff.outcome_means[x] + math.sqrt(v / 2) * (
            rng.standard_normal(n_per_x) + 1j * rng.standard_normal(n_per_x)
        )
        angs = np.floor((np.angle(ys) + math.pi / 4) / (math.pi / 2)).astype(int) % 4
        passing = np.abs(ys) >= delta_a
        for z in range(4):
            counts[x, z] = np.sum(passing & (angs == z))
        counts[x, 4] = np.sum(~passing)
    return counts / (4 * n_per_x)


def test_transmittance_values():
    assert ch.transmittance(0.0) == 1.0
    assert abs(ch.transmittance(50.0, 0.2) - 0.1) < 1e-15
    assert abs(ch.transmittance(80.0, 0.2) - 10.0**-1.6) < 1e-15


def test_outcome_density_normalizes():
    eff = ch.resolve(make_scenario())
    nodes, weights = np.polynomial.legendre.leggauss(120)
    half = 8.0
    total = 0.0
    for i in range(len(nodes)):
        for j in range(len(nodes)):
            y = half * nodes[i] + 1j * half * nodes[j]
            total += half * weights[i] * half * weights[j] * ch.outcome_density(y, 0, eff)
    assert abs(total - 1.0) < 1e-6


def test_outcome_density_vacuum_limit():
    scen = make_scenario(
        alpha=1e-12,
        channel=ChannelParams(length_km=0.0, excess_noise=0.0),
        nu_s=0.0,
        detector=DetectorParams(),
        eta_s=0.999999,
    )
    eff = ch.resolve(scen)
    for y in (0.0, 0.5, 1.0 - 0.3j):
        assert abs(
            ch.outcome_density(y, 0, eff) - math.exp(-abs(y) ** 2) / math.pi
        ) < 1e-6


def test_outcome_density_first_moment_matches_expectations_mc():
    eff = ch.resolve(make_scenario())
    rng = np.random.default_rng(42)
    n = 1_000_000
    v = eff.outcome_variance
    ys = eff.outcome_means[0] + math.sqrt(v / 2) * (
        rng.standard_normal(n) + 1j * rng.standard_normal(n)
    )
    fq_mc = np.mean(math.sqrt(2) * ys.real)
    fq, _, sq, _ = ch.constraint_expectations(0, eff)
    sigma = math.sqrt(v) / math.sqrt(n)  # std of the mean of sqrt(2) Re y
    assert abs(fq_mc - fq) < 3 * sigma
    sq_mc = np.mean(2 * ys.real**2)
    assert abs(sq_mc - sq) < 3 * math.sqrt(8 * v * v / 4 + 4 * v * fq * fq) / math.sqrt(n)


def test_constraint_expectations_vacuum():
    scen = make_scenario(
        alpha=1e-12,
        channel=ChannelParams(length_km=10.0, excess_noise=0.0),
        nu_s=0.0,
        detector=DetectorParams(),
    )
    vals = ch.constraint_expectations(0, ch.resolve(scen))
    np.testing.assert_allclose(vals, (0.0, 0.0, 1.0, 1.0), atol=1e-10)


def test_constraint_expectations_sign_flip():
    eff = ch.resolve(make_scenario())
    f0 = ch.constraint_expectations(0, eff)
    f2 = ch.constraint_expectations(2, eff)
    assert abs(f0[0] + f2[0]) < 1e-12  # F_Q flips
    assert abs(f0[2] - f2[2]) < 1e-12  # S_Q unchanged


def test_constraint_expectations_match_fock_traces():
    # operator-trace oracle: displaced-thermal conditional state against the
    # detector observables, at long distance with the harsh trusted detector
    scen = make_scenario(channel=ChannelParams(length_km=100.0, excess_noise=0.01))
    eff = ch.resolve(scen)
    n_max = 15
    obs = observables(eff.detector, n_max)
    for x in range(4):
        sigma = ch.conditional_state(x, eff, n_max)
        targets = ch.constraint_expectations(x, eff)
        traces = [
            np.trace(sigma @ o).real
            for o in (obs.f_q, obs.f_p, obs.s_q, obs.s_p)
        ]
        np.testing.assert_allclose(traces, targets, atol=1e-5)


def test_joint_distribution_uniform_without_signal():
    scen = make_scenario(alpha=1e-12, delta_a=0.0)
    dist = ch.joint_distribution(ch.resolve(scen))
    np.testing.assert_allclose(dist.table[:, :4], 1 / 16, atol=1e-10)
    assert dist.p_pass == 1.0


def test_joint_distribution_favors_own_sector():
    dist = ch.joint_distribution(ch.resolve(make_scenario()))
    assert dist.table[0, 0] > dist.table[0, 2]


def test_joint_distribution_matches_monte_carlo():
    scen = make_scenario()
    eff = ch.resolve(scen)
    dist = ch.joint_distribution(eff)
    mc = mc_outcomes(eff, 250_000, seed=20240817, delta_a=scen.delta_a)
    sigma = np.sqrt(dist.table * (1 - dist.table) / 1_000_000)
    assert np.all(np.abs(mc - dist.table) <= 3 * np.maximum(sigma, 1e-9))


def test_joint_distribution_matches_monte_carlo_with_postselection():
    scen = make_scenario(delta_a=0.7)
    eff = ch.resolve(scen)
    dist = ch.joint_distribution(eff)
    mc = mc_outcomes(eff, 250_000, seed=7, delta_a=scen.delta_a)
    sigma = np.sqrt(dist.table * (1 - dist.table) / 1_000_000)
    assert np.all(np.abs(mc - dist.table) <= 3.5 * np.maximum(sigma, 1e-9))


def test_joint_distribution_fourfold_covariance():
    dist = ch.joint_distribution(ch.resolve(make_scenario(delta_a=0.4)))
    t = dist.table
    for x in range(4):
        for z in range(4):
            assert abs(t[x, z] - t[(x + 1) % 4, (z + 1) % 4]) < 1e-10
        assert abs(t[x, 4] - t[(x + 1) % 4, 4]) < 1e-10


def test_p_pass_monotone_in_radius():
    values = []
    for delta in (0.0, 0.3, 0.6, 1.0):
        dist = ch.joint_distribution(ch.resolve(make_scenario(delta_a=delta)))
        values.append(dist.p_pass)
    assert values[0] == 1.0
    assert all(b < a for a, b in zip(values, values[1:]))


def test_two_path_agreement_gaussian_vs_fock():
    # Tr[sigma_B^x R_z] against the Gaussian sector integral, two independent paths
    scen = make_scenario(delta_a=0.5)
    eff = ch.resolve(scen)
    n_max = 12
    dist = ch.joint_distribution(eff)
    rset = region_operators(KeyMapRegions(scen.delta_a), eff.detector, n_max)
    for x in range(4):
        sigma = ch.conditional_state(x, eff, n_max)
        for z in range(4):
            fock_side = np.trace(sigma @ rset.sectors[z]).real
            gauss_side = dist.table[x, z] * 4.0
            assert abs(fock_side - gauss_side) < 1e-4
        fock_disc = np.trace(sigma @ rset.discard).real
        assert abs(fock_disc - dist.table[x, 4] * 4.0) < 1e-4


def test_ec_cost_perfect_correlation():
    table = np.zeros((4, 5))
    np.fill_diagonal(table[:, :4], 0.25)
    rep = ch.ec_cost(ch.JointDistribution(table=table), beta=1.0)
    assert abs(rep.delta_ec) < 1e-12
    assert rep.p_pass == 1.0


def test_ec_cost_uniform_independent():
    table = np.zeros((4, 5))
    table[:, :4] = 1 / 16
    rep = ch.ec_cost(ch.JointDistribution(table=table), beta=1.0)
    assert abs(rep.delta_ec - 2.0) < 1e-12
    assert abs(rep.i_xz) < 1e-12


def test_ec_cost_monotone_in_beta():
    dist = ch.joint_distribution(ch.resolve(make_scenario()))
    costs = [ch.ec_cost(dist, beta).delta_ec for beta in (0.8, 0.9, 0.956, 1.0)]
    assert all(b < a for a, b in zip(costs, costs[1:]))


def test_ec_cost_regression_values():
    # frozen after Monte Carlo cross-validation (seed 20240817, 1e6 samples,
    # max deviation 1.7 sigma)
    eff = ch.resolve(make_scenario())
    rep = ch.ec_cost(ch.joint_distribution(eff), beta=0.956)
    assert abs(rep.delta_ec - 1.9967705848) < 1e-6
    assert abs(rep.i_xz - 0.0033780493) < 1e-6

    eff_ps = ch.resolve(make_scenario(delta_a=0.7))
    dist_ps = ch.joint_distribution(eff_ps)
    rep_ps = ch.ec_cost(dist_ps, beta=0.956)
    assert abs(dist_ps.p_pass - 0.6863452764) < 1e-6
    assert abs(rep_ps.delta_ec - 1.9949232147) < 1e-6


def test_ec_cost_include_discard_variant():
    dist = ch.joint_distribution(ch.resolve(make_scenario(delta_a=0.7)))
    with_disc = ch.ec_cost(dist, beta=0.956, include_discard=True)
    without = ch.ec_cost(dist, beta=0.956)
    assert with_disc.delta_ec != without.delta_ec
    assert with_disc.p_pass == without.p_pass


def test_ec_cost_rejects_all_discard():
    table = np.zeros((4, 5))
    table[:, 4] = 0.25
    with pytest.raises(ValueError):
        ch.ec_cost(ch.JointDistribution(table=table), beta=0.956)


def test_untrusted_source_folds_into_excess_noise():
    trusted = ch.resolve(make_scenario())
    untrusted = ch.resolve(make_scenario(source_trusted=False))
    assert abs(untrusted.xi - (trusted.xi + 0.001)) < 1e-15
    assert untrusted.source.mean_photons == 0.0
    assert trusted.source.mean_photons > 0.0


def test_untrusted_detector_folds_into_channel():
    scen = make_scenario(detector_trusted=False)
    eff = ch.resolve(scen)
    eta_t = scen.channel.transmittance
    assert eff.detector.is_ideal
    assert abs(eff.channel_transmittance - eta_t * 0.45) < 1e-15
    assert abs(eff.xi - (0.02 + 0.297 / (eta_t * 0.45))) < 1e-12


def test_key_map_agrees_with_vectorized_mc_binning():
    regions = KeyMapRegions(0.4)
    rng = np.random.default_rng(3)
    for _ in range(200):
        y = complex(rng.normal(), rng.normal())
        z = key_map(y, regions)
        if abs(y) < 0.4:
            assert z == DISCARD
        else:
            ang = int(np.floor((np.angle(y) + math.pi / 4) / (math.pi / 2))) % 4
            assert z == ang
