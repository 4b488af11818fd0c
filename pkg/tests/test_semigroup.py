import numpy as np
import pytest

from heatflow.gaussian import GaussianPair, mehler_quadratic
from heatflow.potentials import make_profile, quadratic_potential, radial_potential
from heatflow.semigroup import (DIRICHLET, Grid, GridField, HeatSemigroup, InstabilityError,
                                _check_step, build_generator, chi, choose_radius, discrete_hessian,
                                fit_decay_rate, initial_field, radial_reduce, stationarity_check,
                                tail_mass_1d, write_snapshots_csv)


def logcosh_line(h=0.02, R=12.0):
    U = radial_potential(make_profile("logcosh"), 1)
    return U, Grid.line_spacing(R, h)


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid.line(1.0, 8)
    g = Grid.radial_grid(4.0, 40)
    assert g.radial and g.axes[0][0] == pytest.approx(0.05)
    b = Grid.box(2.0, 21)
    assert b.points().shape == (21, 21, 2)


def test_generator_preserves_mass_and_constants():
    U, g = logcosh_line()
    gen = build_generator(U, g)
    f = np.exp(-np.abs(g.axes[0]))
    assert abs(np.sum(gen.mass * gen.apply(f))) < 1e-12
    assert np.max(np.abs(gen.apply(np.ones(g.shape)))) < 1e-12
    st = stationarity_check(gen, 0.01)
    assert st["sup_change"] < 1e-12


def test_two_dimensional_generator_is_conservative():
    g = Grid.box(6.0, 81)
    U = quadratic_potential([[1.0, 0.3], [0.3, 1.5]])
    gen = build_generator(U, g)
    x = g.points()
    f = np.exp(-0.5 * np.sum((x - 0.5) ** 2, axis=-1))
    assert abs(np.sum(gen.mass * gen.apply(f))) < 1e-12


def test_mass_and_max_principle_on_a_run():
    U, g = logcosh_line()
    solver = HeatSemigroup(U, g)
    f0 = initial_field(g, lambda p: np.log(np.cosh(p[..., 0] - 1.0)))
    snaps = solver.evolve(f0, 1.0, 0.01, [0.0, 0.5, 1.0])
    assert max(s.diagnostics["mass_rel_change"] for s in snaps) < 1e-10
    assert solver.stats["max_growth"] <= 0.0
    assert solver.stats["min_value"] >= 0.0


def test_ou_against_mehler():
    pair = GaussianPair([[1.0]], [[2.0]])
    g = Grid.line_spacing(8.0, 0.01)
    solver = HeatSemigroup(quadratic_potential(pair.A), g)
    f0 = initial_field(g, lambda p: p[..., 0] ** 2)
    snap = solver.evolve(f0, 0.5, 1e-3, [0.5])[-1]
    x = g.axes[0]
    core = np.abs(x) <= 2
    c = np.polyfit(x[core] ** 2 / 2, -np.log(snap.values[core]), 1)[0]
    assert c == pytest.approx(mehler_quadratic(pair, 0.5)[0, 0], abs=1e-4)


def test_spectral_gap_decay_rate():
    # non-symmetric data excites the first Hermite mode: rate 1 for U = x^2/2
    g = Grid.line_spacing(8.0, 0.02)
    solver = HeatSemigroup(quadratic_potential([[1.0]]), g)
    f0 = initial_field(g, lambda p: 0.5 * (p[..., 0] - 1.0) ** 2)
    times = np.round(np.arange(2.0, 6.01, 0.5), 10)
    snaps = solver.evolve(f0, 6.0, 0.01, times)
    rate = fit_decay_rate(times, [s.diagnostics["L2_mu"] for s in snaps])
    assert rate == pytest.approx(1.0, rel=0.02)


def test_dirichlet_cutoff_boundary_and_profile():
    assert chi(0.3) == 1.0 and chi(1.0) == 0.0 and 0 < chi(0.75) < 1
    U, g = logcosh_line(R=6.0)
    f0 = initial_field(g, lambda p: 0.5 * p[..., 0] ** 2, DIRICHLET, cutoff_R=6.0)
    solver = HeatSemigroup(U, g, DIRICHLET)
    out = solver.evolve(f0, 0.5, 0.01)
    assert out[-1].values[0] == 0.0 and out[-1].values[-1] == 0.0
    assert out[-1].diagnostics["mass"] < out[0].diagnostics["mass"]


def test_radial_reduction_matches_full_2d():
    lc = make_profile("logcosh")
    V = lambda p: 0.5 * np.sum(p**2, axis=-1)  # noqa: E731
    gr = Grid.radial_grid(8.0, 400)
    sr = HeatSemigroup(radial_reduce(lc, 2), gr).evolve(initial_field(gr, V), 0.5, 0.01)[-1]
    gb = Grid.box(8.0, 321)
    sb = HeatSemigroup(radial_potential(lc, 2), gb).evolve(initial_field(gb, V), 0.5, 0.01)[-1]
    mid = gb.shape[0] // 2
    rb = gb.axes[1][mid:]
    ref = np.interp(gr.axes[0][gr.axes[0] < 4], rb, sb.values[mid, mid:])
    assert np.max(np.abs(sr.values[gr.axes[0] < 4] - ref)) < 2e-3


def test_instability_detection():
    with pytest.raises(InstabilityError):
        _check_step(np.array([1.0, 0.5]), np.array([1.1, 0.5]))
    with pytest.raises(InstabilityError):
        _check_step(np.array([1.0, 0.5]), np.array([1.0, -1e-6]))


def test_tail_rule():
    U = radial_potential(make_profile("logcosh"), 1)
    R = choose_radius(U.value)
    assert tail_mass_1d(U.value, R) < 1e-10 <= tail_mass_1d(U.value, R - 0.5)
    assert R == 23.5


def test_discrete_hessian_exact_on_quadratics():
    g = Grid.box(2.0, 41)
    P = g.points()
    arr = 0.5 * (2 * P[..., 0] ** 2 + 2 * 0.3 * P[..., 0] * P[..., 1] + P[..., 1] ** 2)
    H, inner = discrete_hessian(g, arr)
    assert np.allclose(H[inner], [[2.0, 0.3], [0.3, 1.0]])


def test_snapshot_csv(tmp_path):
    U, g = logcosh_line(h=0.5, R=4.0)
    f = GridField(g, np.ones(g.shape))
    write_snapshots_csv(tmp_path / "s.csv", [f])
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "x,value,t" and len(lines) == g.shape[0] + 1


def test_solution_commutes_with_reflection():
    g = Grid.box(6.0, 121)
    U = quadratic_potential([[1.0, 0.4], [0.4, 1.2]])
    f0 = initial_field(g, lambda p: 0.5 * p[..., 0] ** 2 + np.log(np.cosh(p[..., 1])))
    out = HeatSemigroup(U, g).evolve(f0, 0.5, 0.01)[-1].values
    assert np.max(np.abs(out - out[::-1, ::-1])) <= 1e-12
