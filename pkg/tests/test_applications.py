import numpy as np
import pytest

from heatflow import applications as app
from heatflow.gaussian import GaussianPair, brenier_linear
from heatflow.potentials import (QuadraticForm, StructuredPotential, SubspaceDecomposition,
                                 make_profile, product_potential, quadratic_potential)

GAUSS2 = SubspaceDecomposition(2)


@pytest.fixture(scope="module")
def gauss_sampler():
    return app.ProductSampler(quadratic_potential(np.eye(2)), seed=7)


@pytest.fixture(scope="module")
def mixed_sampler():
    dec = SubspaceDecomposition(1, (2,))
    U = StructuredPotential(dec, QuadraticForm([[1.0]]), (make_profile("logcosh"),))
    return app.ProductSampler(U, seed=3, table_nodes=20_000)


def test_sampler_marginals_pass_ks(mixed_sampler):
    X = mixed_sampler.sample(200_000)
    rep = mixed_sampler.ks_audit(X)
    assert rep["passed"], rep
    assert set(rep["statistics"]) == {"E0[0]", "|E1|"}


def test_sampler_streams_are_deterministic_and_distinct(mixed_sampler):
    a = mixed_sampler.sample(1000, stream=0)
    assert np.array_equal(a, mixed_sampler.sample(1000, stream=0))
    assert not np.array_equal(a, mixed_sampler.sample(1000, stream=1))


def test_check_set_accepts_catalog_sets_and_flags_asymmetry():
    dec = SubspaceDecomposition(1, (2,))
    pts = np.random.default_rng(0).normal(size=(2000, 3)) * 1.5
    for S in (app.ball(dec, 1.5), app.cylinder(dec, 1.0, [1.2]), app.slab(dec, [1, 0, 0], 0.5),
              app.box(dec, [1.0, 1.0]), app.ellipsoid(dec, [[2.0]], [0.5]),
              app.norm_ball(dec, 2.0, 1.0)):
        assert app.check_set(S, pts)["passed"], S.name
    shifted = app.SymmetricSet("shifted", app.KIND_B, dec, lambda x: np.abs(x[:, 0] - 0.3) <= 1)
    assert app.check_set(shifted, pts)["central_symmetry_violations"] > 0
    tilted = app.SymmetricSet("tilted", app.KIND_B, dec, lambda x: np.abs(x[:, 1]) <= 1)
    assert app.check_set(tilted, pts)["rotation_violations"] > 0
    annulus = app.SymmetricSet("annulus", app.KIND_A, dec,
                               lambda x: np.linalg.norm(x, axis=1) >= 0.5)
    assert app.check_set(annulus, pts)["closure_violations"] > 0
    with pytest.raises(ValueError):
        app.slab(dec, [0, 1, 0], 1.0)
    with pytest.raises(ValueError):
        app.union(app.ball(dec, 1.0), app.box(dec, [1.0, 1.0]))


def test_identical_sets_give_bernoulli_variance(gauss_sampler):
    A = app.ball(GAUSS2, 1.0)
    res = app.estimate_correlation(A, A, gauss_sampler, 100_000)
    assert res.gap == pytest.approx(res.mu_A * (1 - res.mu_A), abs=1e-12)
    assert res.passed and not res.degenerate


def test_disk_slab_oracle_within_three_sigma(gauss_sampler):
    ora = app.gaussian_disk_slab_oracle(1.0, 1.0)
    assert ora["mu_A"] == pytest.approx(1 - np.exp(-0.5))
    res = app.estimate_correlation(app.ball(GAUSS2, 1.0), app.slab(GAUSS2, [1, 0], 1.0),
                                   gauss_sampler, 400_000, stream=5)
    assert abs(res.gap - ora["gap"]) <= 3 * res.stderr
    assert res.gap > 0


def test_independent_slabs_have_zero_gap():
    qd = make_profile("quadratic")
    dec = SubspaceDecomposition(0, (1, 1))
    sampler = app.ProductSampler(product_potential([qd, qd]), seed=11, table_nodes=20_000)
    res = app.estimate_correlation(app.slab(dec, [1, 0], 0.5), app.slab(dec, [0, 1], 0.8),
                                   sampler, 200_000)
    assert abs(res.gap) <= 3 * res.stderr


def test_degenerate_flag_and_sample_floor(gauss_sampler):
    res = app.estimate_correlation(app.ball(GAUSS2, 50.0), app.slab(GAUSS2, [1, 0], 1.0),
                                   gauss_sampler, 20_000)
    assert res.degenerate and res.mu_A == 1.0
    with pytest.raises(ValueError):
        app.estimate_correlation(app.ball(GAUSS2, 1.0), app.ball(GAUSS2, 1.0), gauss_sampler, 5000)


def test_out_of_hypothesis_sets_fail_after_rerun(gauss_sampler):
    left = app.SymmetricSet("left", app.KIND_B, GAUSS2, lambda x: x[:, 0] < 0)
    right = app.SymmetricSet("right", app.KIND_B, GAUSS2, lambda x: x[:, 0] > 0)
    res = app.estimate_correlation(left, right, gauss_sampler, 20_000)
    assert not res.passed and res.reruns == 1 and res.N == 80_000
    assert res.gap == pytest.approx(-0.25, abs=0.01)


def test_function_correlation_of_symmetric_quasiconcave_functions(gauss_sampler):
    f = lambda x: np.exp(-np.sum(x**2, axis=1))  # noqa: E731
    g = lambda x: np.maximum(0.0, 1 - np.abs(x[:, 0]))  # noqa: E731
    rep = app.function_correlation(f, g, gauss_sampler, 100_000, levels=8)
    assert rep["passed"] and rep["covariance"] > 0
    assert rep["layer_cake"] == pytest.approx(rep["covariance"], rel=0.3)


def test_transfer_expectation_gaussian_closed_form(gauss_sampler):
    pair = GaussianPair(np.eye(2), [[2.0, 0.5], [0.5, 1.0]])
    C = brenier_linear(pair)
    X = gauss_sampler.sample(200_000, stream=9)
    rep = app.transfer_expectation(lambda x: np.sum(x**2, axis=1), X, lambda x: x @ C.T)
    exact = np.trace(np.linalg.inv(pair.A + pair.B))
    assert rep["nu"] == pytest.approx(exact, abs=5 * rep["nu_stderr"])
    assert rep["mu"] == pytest.approx(2.0, abs=5 * rep["mu_stderr"])
    assert rep["passed"] and rep["dropped"] == 0
    const = app.transfer_expectation(lambda x: np.ones(len(x)), X, lambda x: x @ C.T)
    assert const["nu"] == const["mu"] == 1.0


def test_set_invariance_audit(gauss_sampler):
    X = gauss_sampler.sample(20_000, stream=2)
    S = app.ball(GAUSS2, 1.2)
    assert app.set_invariance_audit(S, X, lambda x: x)["passed"]
    C = brenier_linear(GaussianPair(np.eye(2), np.eye(2)))
    rep = app.set_invariance_audit(S, X, lambda x: x @ C.T)
    assert rep["passed"] and rep["fraction_kept"] == 1.0
    bad = app.set_invariance_audit(S, X, lambda x: x + 0.5)
    assert not bad["passed"] and bad["fraction_kept"] < 1.0 and bad["norm_violations"] > 0
