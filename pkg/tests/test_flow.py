import numpy as np
import pytest

from heatflow.acceptance import flow_run
from heatflow.brenier import potential_density, quantile_map
from heatflow.flow import (empirical_lipschitz, energy_distance, integrate_forward, limit_map,
                           logconcavity_monitor, pushforward_statistic, refinement_ratios,
                           round_trip_error, simulate_advection)
from heatflow.potentials import make_profile, radial_potential
from heatflow.semigroup import DIRICHLET, Grid, GridField, choose_radius


@pytest.fixture(scope="module")
def logcosh_sim():
    rho = make_profile("logcosh")
    U = radial_potential(rho, 1)
    grid = Grid.line_spacing(choose_radius(U.value), 0.04)
    sim = simulate_advection(U, lambda p: 0.5 * p[..., 0] ** 2, grid, 0.04, 400.0,
                             window=8.0, l2_tol=1e-8)
    return rho, sim


def test_limit_map_matches_quantile_map(logcosh_sim):
    rho, sim = logcosh_sim
    assert sim.criterion is not None and sim.info["mass_rel_change"] < 1e-10
    xs = np.linspace(-3, 3, 121)
    lm = limit_map(sim.field, xs[:, None], l2_tol=1e-8, dt=0.04)
    ref = quantile_map(potential_density(rho), potential_density(rho, lambda x: x**2 / 2), xs)
    assert not lm.partial and lm.ensemble.n_escaped == 0
    assert np.max(np.abs(lm.values[:, 0] - ref.ys)) < 5e-3
    assert empirical_lipschitz(xs, lm.values) <= 1.0 + 5e-3


def test_forward_flow_expands_and_round_trips(logcosh_sim):
    _, sim = logcosh_sim
    seeds = np.linspace(-2, 2, 21)[:, None]
    fwd = integrate_forward(sim.field, seeds, 2.0, 0.04)
    assert fwd.expansion_certificate(1e-3)["passed"]
    rt = round_trip_error(sim.field, seeds, 2.0, 0.04)
    assert rt["max_error"] < 1e-5


def test_zero_V_gives_identity():
    U = radial_potential(make_profile("logcosh"), 1)
    grid = Grid.line_spacing(12.0, 0.05)
    sim = simulate_advection(U, lambda p: np.zeros(p.shape[:-1]), grid, 0.05, 5.0, window=6.0)
    assert sim.t_star == 0.0
    xs = np.linspace(-2, 2, 9)[:, None]
    lm = limit_map(sim.field, xs, dt=0.05)
    assert np.allclose(lm.values, xs, atol=1e-12)


def test_logconcavity_monitor_flags_a_bimodal_field():
    g = Grid.line_spacing(4.0, 0.05)
    x = g.axes[0]
    good = GridField(g, np.exp(-x**2 / 2), 0.0, DIRICHLET)
    bad = GridField(g, np.exp(-(x**2 - 1) ** 2), 0.0, DIRICHLET)
    assert logconcavity_monitor([good])["passed"]
    rep = logconcavity_monitor([good, bad])
    assert not rep["passed"] and rep["min_eig"] < -1.0


def test_refinement_ratios():
    rr = refinement_ratios([4e-4, 1e-4, 2.5e-5])
    assert rr["ratios"] == pytest.approx([4.0, 4.0])
    assert rr["min_ratio"] == pytest.approx(4.0)


def test_energy_distance_and_sliced_ks():
    rng = np.random.default_rng(0)
    X, Y = rng.normal(size=(1500, 2)), rng.normal(size=(1500, 2))
    assert abs(energy_distance(X, Y)) < 0.02
    assert energy_distance(X, Y + 1.0) > 0.3
    st = pushforward_statistic(X, Y)
    assert st["ks_max"] < 0.08


def test_coarse_flow_run_is_second_order_between_two_levels():
    a, b = flow_run("logcosh|x^2/2", 0.04), flow_run("logcosh|x^2/2", 0.02)
    assert a["map_error"] / b["map_error"] > 3.0
    assert b["round_trip"] < 1e-6


def test_ou_field_and_flow_match_gaussian_oracle():
    from heatflow.gaussian import GaussianPair, integrate_matrix_flow, mehler_quadratic
    from heatflow.potentials import quadratic_potential

    pair = GaussianPair([[1.0]], [[1.0]])
    grid = Grid.line_spacing(8.0, 0.01)
    sim = simulate_advection(quadratic_potential([[1.0]]), lambda p: 0.5 * p[..., 0] ** 2, grid,
                             0.005, 1.0, window=4.0, stop_early=False)
    for t in (0.0, 0.5, 1.0):
        W, B, ok = sim.field.sample(t, [[1.0]])
        m = mehler_quadratic(pair, t)[0, 0]
        assert ok[0] and W[0, 0] == pytest.approx(m, abs=1e-4)
        assert B[0, 0, 0] == pytest.approx(m, abs=1e-4)
    ref = integrate_matrix_flow(pair, dt=1e-3)
    L1 = ref.L[int(np.argmin(np.abs(ref.times - 1.0)))][0, 0]
    fwd = integrate_forward(sim.field, [[1.0], [0.5]], 1.0, 0.005)
    assert fwd.final[:, 0] / np.array([1.0, 0.5]) == pytest.approx([L1, L1], abs=1e-4)
