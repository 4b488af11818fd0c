import numpy as np
import pytest

from heatflow.gaussian import (GaussianPair, InvariantBreach, asymmetry_refinement, brenier_linear,
                               commutator_diagnostics, contraction_certificate,
                               integrate_matrix_flow, mehler_quadratic, random_pair, sqrtm_psd)


def test_mehler_scalar_closed_form():
    pair = GaussianPair([[1.0]], [[1.0]])
    # a = b = 1: M_t = e^{-2t} / (2 - e^{-2t}); at e^{-2t} = 1/2 this is 1/3
    assert mehler_quadratic(pair, np.log(2) / 2)[0, 0] == pytest.approx(1 / 3, abs=1e-14)
    assert mehler_quadratic(pair, 0.0)[0, 0] == pytest.approx(1.0)
    assert mehler_quadratic(pair, 30.0)[0, 0] < 1e-20


def test_mehler_properties_on_mesh():
    rng = np.random.default_rng(0)
    pair = random_pair(3, False, rng)
    ts = np.linspace(0, 5, 51)
    Ms = mehler_quadratic(pair, ts)
    assert np.allclose(Ms[0], pair.B)
    assert np.allclose(Ms, np.swapaxes(Ms, 1, 2))
    assert np.linalg.eigvalsh(Ms).min() > -1e-12
    norms = np.linalg.norm(Ms, 2, axis=(1, 2))
    assert np.all(np.diff(norms) <= 1e-12)


def test_diagonal_pair_recovers_brenier():
    pair = GaussianPair(np.diag([1.0, 2.0]), np.diag([3.0, 1.0]))
    res = integrate_matrix_flow(pair)
    assert np.allclose(res.L_inf, np.diag([2.0, np.sqrt(1.5)]), atol=1e-7)
    assert np.linalg.norm(res.T - brenier_linear(pair)) < 1e-6
    assert res.max_residual < 1e-9


def test_brenier_linear_pushes_covariances():
    rng = np.random.default_rng(5)
    pair = random_pair(3, False, rng)
    C = brenier_linear(pair)
    assert np.allclose(C, C.T)
    lhs = C @ np.linalg.inv(pair.A) @ C
    assert np.allclose(lhs, np.linalg.inv(pair.A + pair.B), atol=1e-10)


def test_flow_map_pushes_forward_and_contracts():
    rng = np.random.default_rng(1)
    for n in (2, 3):
        pair = random_pair(n, False, rng)
        res = integrate_matrix_flow(pair)
        T = res.T
        cov = T @ np.linalg.inv(pair.A) @ T.T
        assert np.allclose(cov, np.linalg.inv(pair.A + pair.B), atol=1e-6)
        assert contraction_certificate(T)["passed"]
        assert res.max_residual <= 1e-6


def test_noncommuting_asymmetry_is_reported():
    pair = GaussianPair([[1.0, 0.3], [0.3, 1.5]], [[2.0, -0.5], [-0.5, 1.0]])
    assert not pair.commuting
    res = integrate_matrix_flow(pair)
    diag = commutator_diagnostics(pair, np.linspace(0, 5, 6), res)
    assert diag["max_commutator"] > 1e-3
    assert diag["max_asymmetry"] > 1e-6
    ref = asymmetry_refinement(pair, dts=(2e-3, 1e-3))
    assert ref["error_bar"] < 1e-8


def test_affine_pair_maps_center_to_itself():
    pair = GaussianPair.from_affine([[2.0, 0.0], [0.0, 1.0]], [1.0, -1.0], np.eye(2))
    res = integrate_matrix_flow(pair)
    c = pair.center
    assert np.allclose(c, [-0.5, 1.0])
    assert np.allclose(res.map(c), c)


def test_breach_is_raised_when_step_too_large():
    pair = GaussianPair([[1.0]], [[400.0]])
    with pytest.raises(InvariantBreach):
        integrate_matrix_flow(pair, dt=1e-2, abort_tol=1e-12)
    with pytest.raises(ValueError):
        integrate_matrix_flow(pair, dt=0.5)


def test_input_validation():
    with pytest.raises(ValueError):
        GaussianPair([[1.0, 0.0], [0.0, -1.0]], np.eye(2))
    with pytest.raises(ValueError):
        GaussianPair(np.eye(2), np.eye(3))
    S = sqrtm_psd(np.diag([4.0, 9.0]))
    assert np.allclose(S, np.diag([2.0, 3.0]))
