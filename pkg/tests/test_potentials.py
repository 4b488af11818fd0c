import numpy as np
import pytest

from heatflow.potentials import (DomainError, QuadraticForm, RadialProfile, StructuredPotential,
                                 SubspaceDecomposition, SymmetryViolation, check_sign_condition,
                                 gradient_alignment, invariance_residual, linear_V, logcosh_V,
                                 make_profile, power_profile, quadratic_potential, quadratic_V,
                                 quartic_V, radial_potential, random_group_element)

RNG = np.random.default_rng(3)


def mixed_potential():
    dec = SubspaceDecomposition(2, (2, 3))
    q = QuadraticForm([[1.3, 0.2], [0.2, 0.8]], b=[0.1, -0.2])
    return StructuredPotential(dec, q, (make_profile("logcosh"), make_profile("sqrt", scale=2.0)))


def test_decomposition_slices_and_reduced():
    dec = SubspaceDecomposition(1, (2, 3))
    assert dec.n == 6 and dec.k == 2
    x = np.arange(6.0)
    red = dec.reduced(x)
    assert red[0] == 0.0
    assert red[1] == pytest.approx(np.hypot(1, 2))
    assert red[2] == pytest.approx(np.linalg.norm([3, 4, 5]))
    with pytest.raises(ValueError):
        SubspaceDecomposition(0, ())


def test_quadratic_form_half_convention():
    A = np.array([[2.0, 0.5], [0.5, 1.0]])
    q = QuadraticForm(A)
    U = quadratic_potential(A)
    x = RNG.normal(size=(5, 2))
    assert np.allclose(q.value(x), 0.5 * np.einsum("ni,ij,nj->n", x, A, x))
    assert np.allclose(U.hessian(x), A)
    with pytest.raises(ValueError):
        QuadraticForm([[1.0, 2.0], [2.0, 1.0]])  # indefinite


@pytest.mark.parametrize("name", ["quadratic", "logcosh", "sqrt"])
def test_catalog_profiles_validate(name):
    rep = make_profile(name).validate()
    assert rep["passed"], rep
    assert rep["max_d3"] <= 1e-12


def test_profile_derivatives_match_finite_differences():
    r = np.linspace(0.1, 5, 50)
    eps = 1e-5
    for name in ("logcosh", "sqrt"):
        p = make_profile(name)
        for k in range(3):
            fd = (p.derivative(r + eps, k) - p.derivative(r - eps, k)) / (2 * eps)
            assert np.allclose(fd, p.derivative(r, k + 1), atol=1e-7)


def test_power_profile_flags_non_smooth_and_domain():
    p = power_profile(1.5)
    assert not p.smooth
    q = make_profile("logcosh", r_max=2.0)
    with pytest.raises(DomainError):
        q(3.0)
    with pytest.raises(ValueError):
        make_profile("nope")


def test_profile_violating_third_derivative_is_rejected():
    bad = RadialProfile("quartic", lambda r: r**4 / 4, lambda r: r**3, lambda r: 3 * r**2, lambda r: 6 * r)
    assert not bad.validate()["passed"]


def test_gradient_and_hessian_by_finite_differences():
    U = mixed_potential()
    x = RNG.normal(size=(4, U.n))
    eps = 1e-6
    for j in range(U.n):
        e = np.zeros(U.n)
        e[j] = eps
        fd = (U.value(x + e) - U.value(x - e)) / (2 * eps)
        assert np.allclose(fd, U.gradient(x)[:, j], atol=1e-6)
        fdg = (U.gradient(x + e) - U.gradient(x - e)) / (2 * eps)
        assert np.allclose(fdg, U.hessian(x)[:, :, j], atol=1e-5)


def test_third_form_matches_derivative_of_hessian():
    U = mixed_potential()
    x = RNG.normal(size=(6, U.n))
    xi = RNG.normal(size=U.n)
    th = RNG.normal(size=U.n)
    eps = 1e-5
    dH = (U.hessian(x + eps * th) - U.hessian(x - eps * th)) / (2 * eps)
    ref = np.einsum("i,nij,j->n", xi, dH, xi)
    assert np.allclose(U.third_form(x, xi, th), ref, atol=1e-6)


def test_sign_condition_holds_under_hypotheses():
    U = mixed_potential()
    dec = U.decomposition
    pts = RNG.normal(size=(200, dec.n)) * 2
    for V in (quadratic_V(dec, np.eye(2)), quartic_V(dec), logcosh_V(dec, E0_coeff=0.5)):
        rep = check_sign_condition(U, V, pts)
        assert rep["passed"], rep
        assert rep["misaligned_points"] == 0


def test_sign_condition_fails_for_convex_third_derivative():
    bad = RadialProfile("quartic", lambda r: r**4 / 4, lambda r: r**3, lambda r: 3 * r**2, lambda r: 6 * r)
    U = radial_potential(bad, 2)
    V = quadratic_V(U.decomposition)
    rep = check_sign_condition(U, V, RNG.normal(size=(50, 2)))
    assert not rep["passed"]


def test_gradient_alignment_detects_asymmetric_V():
    dec = SubspaceDecomposition(1, (2,))
    V = linear_V(dec, [0.0, 1.0, 0.0])
    with pytest.raises(SymmetryViolation):
        gradient_alignment(V, np.array([0.3, 0.0, 0.0]))
    rep = gradient_alignment(V, np.array([0.3, 0.0, 1.0]))
    assert not rep["aligned"]
    ok = gradient_alignment(quartic_V(dec), np.array([0.3, 0.5, -1.0]))
    assert ok["aligned"] and ok["coefficients"][0] > 0


def test_group_invariance():
    U = mixed_potential()
    g = random_group_element(U.decomposition, seed=1)
    pts = RNG.normal(size=(100, U.n))
    assert invariance_residual(U.value, g, pts) < 1e-12
    V = linear_V(U.decomposition, np.eye(U.n)[3])
    assert invariance_residual(V.value, g, pts) > 1e-3
