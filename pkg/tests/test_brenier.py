import numpy as np
import pytest

from heatflow.brenier import (Density1D, MonotoneMap1D, MonotonicityError, PreconditionError,
                              blockwise_radial_map, coordinate_monotonicity_check,
                              gaussian_density, lipschitz_estimate, potential_density,
                              quantile_map, radial_brenier, radial_coefficients,
                              radial_log_density, verify_logderiv_identity, wasserstein2_1d)
from heatflow.potentials import SubspaceDecomposition, make_profile


def test_density_normalization_and_tails():
    d = gaussian_density(1.0)
    assert abs(d.normalization_residual()) < 1e-12
    assert d.cdf(0.0) == pytest.approx(0.5, abs=1e-14)
    # upper tail through the complementary CDF keeps relative accuracy
    from scipy.stats import norm
    assert d.sf(7.0) == pytest.approx(norm.sf(7.0), rel=1e-8)


def test_gaussian_quantile_map_is_linear():
    s, t = gaussian_density(1.0), gaussian_density(np.sqrt(0.5))
    xs = np.linspace(-6, 6, 241)
    T = quantile_map(s, t, xs)
    assert np.max(np.abs(T.ys - xs / np.sqrt(2))) < 1e-9
    assert T.info["pushforward_residual"] < 1e-12
    assert lipschitz_estimate(T) == pytest.approx(1 / np.sqrt(2), abs=1e-6)


def test_wasserstein_closed_forms():
    s = gaussian_density(1.0)
    assert wasserstein2_1d(s, gaussian_density(np.sqrt(0.5))) == pytest.approx((1 - 1 / np.sqrt(2)) ** 2, abs=1e-8)
    assert wasserstein2_1d(s, gaussian_density(1.0, 0.3)) == pytest.approx(0.09, abs=1e-8)


def test_logderiv_identity_on_potential_densities():
    rho = make_profile("logcosh")
    v = lambda x: x**2 / 2  # noqa: E731
    xs = np.linspace(-4, 4, 801)
    T = quantile_map(potential_density(rho), potential_density(rho, v), xs)
    res = verify_logderiv_identity(T, rho, v)
    assert res["max_residual"] < 1e-4


@pytest.mark.parametrize("n", [2, 3, 5])
@pytest.mark.parametrize("pname", ["quadratic", "logcosh"])
def test_radial_brenier_contracts(n, pname):
    rho = make_profile(pname)
    T = radial_brenier(rho, lambda r: r, n)
    assert T.info["contraction_to_origin"]
    assert lipschitz_estimate(T) <= 1 + 1e-4
    res = verify_logderiv_identity(T, radial_log_density(rho, n), lambda r: r, exclude_origin=True)
    assert res["max_residual"] < 1e-4
    a = radial_coefficients(T)
    assert np.all((a >= 0) & (a <= 1 + 1e-4))


def test_radial_gaussian_closed_form():
    # r^{n-1} e^{-r^2/2} onto r^{n-1} e^{-r^2}: T(r) = r / sqrt(2)
    T = radial_brenier(make_profile("quadratic"), lambda r: r**2 / 2, 3)
    assert np.max(np.abs(T.ys - T.xs / np.sqrt(2))) < 1e-8


def test_preconditions_and_monotonicity():
    with pytest.raises(PreconditionError):
        radial_brenier(make_profile("logcosh"), lambda r: -r, 2)
    with pytest.raises(MonotonicityError):
        MonotoneMap1D(np.array([0.0, 1.0, 2.0]), np.array([0.0, 2.0, 1.0]))


def test_blockwise_map_coordinate_monotonicity():
    dec = SubspaceDecomposition(0, (2, 1))
    rho = make_profile("logcosh")
    maps = [radial_brenier(rho, lambda r: r, 2), radial_brenier(rho, lambda r: r**2 / 2, 1)]
    T = blockwise_radial_map(maps, dec)
    pts = np.random.default_rng(0).normal(size=(300, 3))
    rep = coordinate_monotonicity_check(T, dec, pts)
    assert rep["passed"], rep
    assert max(rep["a_max"]) <= 1 + 1e-4 and min(rep["a_min"]) >= 0


def test_custom_density_quantiles_round_trip():
    d = Density1D(lambda x: -np.abs(x) ** 1.5, -np.inf, np.inf)
    u = np.array([1e-9, 0.1, 0.5, 0.9, 1 - 1e-9])
    assert np.allclose(d.cdf(d.quantile(u)), u, rtol=1e-8, atol=1e-15)
