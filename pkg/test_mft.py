"""Tests for the macroscopic fluctuation theory solvers."""
import numpy as np
import pytest
from scipy import integrate

from src.exceptions import BranchUnavailable, DomainViolation, GridMismatch, QOutOfReach
from src.lattice_models import TransportModel, ZeroRangeModel, transport_catalogue
from src.mft import (
    DensityProfile,
    TrajectoryGrid,
    additivity_cumulants,
    additivity_curve,
    additivity_expansion,
    additivity_rate_function,
    additivity_variational,
    constant_trajectory,
    covariance,
    covariance_green_series,
    density_ldf_ssep,
    density_scgf_quadratic,
    density_scgf_ssep,
    equilibrium_density_ldf,
    equilibrium_excitation_trajectory,
    gaussian_density_ldf,
    hj_residual,
    number_variance,
    ring_instability_scan,
    ring_instability_threshold,
    saturation_current,
    ssep_antidiffusion_trajectory,
    ssep_perturbative_F,
    ssep_tilted_profile,
    steady_current,
    steady_profile,
    steady_trajectory,
    trajectory_action,
    uniform_grid,
    zrp_density_ldf,
)
from src.numerics import richardson


@pytest.fixture(scope="module")
def ssep():
    return transport_catalogue("ssep")


@pytest.fixture(scope="module")
def kmp():
    return transport_catalogue("kmp")


def simpson(values, x):
    return float(integrate.simpson(values, x=x))


# Steady state

def test_ssep_steady_profile_is_linear(ssep):
    profile, j = steady_profile(ssep, 1.0, 0.0, n=16)
    assert j == pytest.approx(1.0)
    np.testing.assert_allclose(profile.values, 1.0 - profile.x, atol=1e-15)
    assert profile.n == 16


def test_steady_profile_grid_floor(ssep):
    with pytest.raises(GridMismatch):
        steady_profile(ssep, 1.0, 0.0, n=8)


def test_alpha_model_profile_has_linear_potential():
    model = transport_catalogue("alpha_model", alpha=0.5)
    profile, j = steady_profile(model, 0.9, 0.1, n=32)
    potential = model.kirchhoff(profile.values)
    np.testing.assert_allclose(potential, model.kirchhoff(0.9) - j * profile.x, atol=1e-13)


def test_steady_profile_without_kirchhoff_potential():
    model = TransportModel("custom", D=lambda r: 1.0 + r, sigma=lambda r: 2.0 * r * (1.0 + r),
                           f=lambda r: r * np.log(r) - r, rho_domain=(0.0, np.inf))
    profile, j = steady_profile(model, 2.0, 1.0, n=16)
    assert j == pytest.approx(2.5, rel=1e-10)
    # (rho + rho^2/2) falls linearly in x
    potential = profile.values + 0.5 * profile.values ** 2
    np.testing.assert_allclose(potential, 4.0 - 2.5 * profile.x, atol=1e-10)


def test_zero_range_profile_has_linear_fugacity():
    model = ZeroRangeModel([1.0])
    profile, _ = steady_profile(model.transport_model(), 2.0, 1.0, n=64)
    fugacity = np.exp([model.thermodynamics(r).df for r in profile.values])
    np.testing.assert_allclose(fugacity, 2 / 3 + (1 / 2 - 2 / 3) * profile.x, atol=1e-9)
    # u(n) = 1: z = rho / (1 + rho)
    np.testing.assert_allclose(profile.values / (1.0 + profile.values), fugacity, atol=1e-9)


@pytest.mark.parametrize("name, params, rho1, rho2", [
    ("ssep", {}, 0.8, 0.2),
    ("kmp", {}, 2.0, 1.0),
    ("free", {}, 2.0, 1.0),
    ("alpha_model", {"alpha": 0.5}, 0.9, 0.1),
    ("zrp", {"u": [1.0, 1.5, 2.0]}, 2.0, 1.0),
])
def test_steady_profile_is_monotone(name, params, rho1, rho2):
    model = transport_catalogue(name, **params)
    falling, _ = steady_profile(model, rho1, rho2, n=32)
    rising, _ = steady_profile(model, rho2, rho1, n=32)
    assert np.all(np.diff(falling.values) < 0)
    assert np.all(np.diff(rising.values) > 0)
    assert falling.values[0] == rho1 and falling.values[-1] == rho2


def test_reservoirs_outside_domain(ssep):
    with pytest.raises(DomainViolation):
        steady_current(ssep, 1.2, 0.0)


# Gaussian fluctuations

@pytest.mark.parametrize("rho1, rho2", [(1.0, 0.0), (0.8, 0.2)])
def test_ssep_covariance_kernel(ssep, rho1, rho2):
    result = covariance(ssep, rho1, rho2, n=64)
    x = result.x
    exact = -(rho1 - rho2) ** 2 * np.minimum.outer(x, x) * (1.0 - np.maximum.outer(x, x))
    off = ~np.eye(x.size, dtype=bool)
    np.testing.assert_allclose(result.long_range[off], exact[off], atol=1e-8)
    assert result.value_at(0.25, 0.5) == pytest.approx(-(rho1 - rho2) ** 2 * 0.25 * 0.5, abs=1e-8)


def test_covariance_converges_at_second_order():
    model = transport_catalogue("alpha_model", alpha=0.5)
    values = [covariance(model, 0.9, 0.1, n).value_at(0.25, 0.5) for n in (64, 128, 256)]
    ratio = (values[0] - values[1]) / (values[1] - values[2])
    assert 2 ** 1.8 <= ratio <= 2 ** 2.2


@pytest.mark.parametrize("model", [
    transport_catalogue("free"),
    ZeroRangeModel([1.0]).transport_model(),
])
def test_no_long_range_correlations_for_independent_sites(model):
    result = covariance(model, 2.0, 1.0, n=32)
    assert np.max(np.abs(result.long_range)) <= 1e-10


def test_green_series_oracle():
    assert covariance_green_series(1.0, 0.0, 0.25, 0.5) == pytest.approx(-0.125, abs=2e-3)
    assert covariance_green_series(0.8, 0.2, 0.3, 0.6, modes=2000) == pytest.approx(-0.36 * 0.3 * 0.4, abs=2e-4)


def test_number_variance(ssep):
    assert number_variance(ssep, 1.0, 0.0) == pytest.approx(1 / 12, abs=1e-15)
    assert number_variance(ssep, 1.0, 0.0, method="numeric", n=256) == pytest.approx(1 / 12, rel=0.01)


def test_covariance_grid_cap(ssep):
    with pytest.raises(GridMismatch):
        covariance(ssep, 1.0, 0.0, n=1024)


# Current large deviations

def test_ssep_variance_to_mean_ratio(ssep):
    s1, ratio = additivity_cumulants(ssep, 1.0, 0.0, order=2)
    assert s1 == pytest.approx(1.0, abs=1e-12)
    assert ratio == pytest.approx(1 / 3, abs=1e-10)


def test_rate_function_vanishes_at_typical_current(ssep):
    j = steady_current(ssep, 1.0, 0.0)
    assert additivity_rate_function(ssep, 1.0, 0.0, q=j).value == pytest.approx(0.0, abs=1e-12)
    branch = additivity_rate_function(ssep, 0.8, 0.2, K=0.0)
    assert branch.q == pytest.approx(0.6, abs=1e-12)
    assert branch.value == pytest.approx(0.0, abs=1e-12)


def test_rate_function_is_positive_away_from_typical_current(ssep):
    for q in (0.2, 0.5, 1.0, 2.0):
        branch = additivity_rate_function(ssep, 0.8, 0.2, q=q)
        assert branch.value > 0
        assert branch.branch == "monotonic"


@pytest.mark.parametrize("name, rho1, rho2", [("kmp", 2.0, 1.0), ("ssep", 0.8, 0.2)])
@pytest.mark.parametrize("q", [0.5, 1.5])
def test_parametric_form_matches_direct_minimization(name, rho1, rho2, q):
    model = transport_catalogue(name)
    exact = additivity_rate_function(model, rho1, rho2, q=q).value
    coarse = additivity_variational(model, rho1, rho2, q, n_cells=64)
    fine = additivity_variational(model, rho1, rho2, q, n_cells=128)
    assert coarse == pytest.approx(exact, abs=2e-3)
    assert richardson(coarse, fine) == pytest.approx(exact, abs=1e-4)


@pytest.mark.parametrize("q", [0.3, 1.0])
def test_fluctuation_relation_for_currents(ssep, q):
    forward = additivity_rate_function(ssep, 0.8, 0.2, q=q).value
    backward = additivity_rate_function(ssep, 0.8, 0.2, q=-q).value
    affinity = ssep.f_prime(0.2) - ssep.f_prime(0.8)
    assert forward - backward == pytest.approx(q * affinity, abs=1e-7)


def test_reversed_reservoirs_mirror_the_current(ssep):
    left = additivity_rate_function(ssep, 0.2, 0.8, q=0.4).value
    right = additivity_rate_function(ssep, 0.8, 0.2, q=-0.4).value
    assert left == pytest.approx(right, rel=1e-12)


def test_equal_reservoirs_give_flat_cost(ssep):
    branch = additivity_rate_function(ssep, 0.5, 0.5, q=0.7)
    assert branch.branch == "flat"
    assert branch.value == pytest.approx(0.49)


def test_expansion_near_typical_current(ssep):
    j = steady_current(ssep, 0.8, 0.2)
    for dq in (-0.01, 0.01):
        exact = additivity_rate_function(ssep, 0.8, 0.2, q=j + dq).value
        assert additivity_expansion(ssep, 0.8, 0.2, j + dq) == pytest.approx(exact, abs=1e-7)


def test_kmp_saturation_and_branch_junction(kmp):
    q_sat = saturation_current(kmp, 2.0, 1.0)
    assert q_sat == pytest.approx(2 * np.pi / 3, abs=1e-8)
    below = additivity_rate_function(kmp, 2.0, 1.0, q=q_sat - 1e-8)
    above = additivity_rate_function(kmp, 2.0, 1.0, q=q_sat + 1e-8)
    assert below.branch == "monotonic"
    assert above.branch.startswith("nonmonotonic")
    assert abs(below.value - above.value) < 1e-6


def test_monotone_branch_cannot_pass_saturation(kmp):
    with pytest.raises(QOutOfReach):
        additivity_rate_function(kmp, 2.0, 1.0, q=3.0, branch="monotonic")


def test_ssep_has_no_nonmonotone_branch(ssep):
    with pytest.raises(BranchUnavailable):
        additivity_rate_function(ssep, 0.8, 0.2, q=1.0, branch="nonmonotonic")
    assert saturation_current(ssep, 0.8, 0.2) == np.inf


def test_negative_current_with_empty_reservoir(ssep):
    with pytest.raises(QOutOfReach):
        additivity_rate_function(ssep, 1.0, 0.0, q=-0.5)


def test_rate_curve_with_envelope(kmp):
    qs = np.linspace(0.25, 3.0, 12)
    curve = additivity_curve(kmp, 2.0, 1.0, qs)
    assert curve.kind == "rate_function"
    assert curve.meta[0] == "monotonic"
    assert any(tag.startswith("nonmonotonic") for tag in curve.meta)
    assert np.all(curve.y >= 0)
    hull = additivity_curve(kmp, 2.0, 1.0, qs, convex_envelope=True)
    assert hull.is_convex()
    assert np.all(hull.y <= curve.y + 1e-12)


# Ring dynamical phase transition

@pytest.mark.parametrize("rho_bar", [0.5, 1.0, 2.0])
def test_kmp_ring_threshold(kmp, rho_bar):
    formula = ring_instability_threshold(kmp, rho_bar)
    assert not formula.stable
    assert formula.q_c == pytest.approx(2 * np.pi * rho_bar, rel=1e-12)
    scan = ring_instability_scan(kmp, rho_bar)
    assert scan.q_c == pytest.approx(formula.q_c, rel=1e-6)


@pytest.mark.parametrize("rho_bar", [0.2, 0.5, 0.8])
def test_ssep_ring_is_stable(ssep, rho_bar):
    assert ring_instability_threshold(ssep, rho_bar).stable


def test_ssep_ring_scan_finds_no_instability(ssep):
    assert ring_instability_scan(ssep, 0.5).stable


def test_ring_threshold_uses_squared_diffusivity():
    model = transport_catalogue("alpha_model", alpha=1.0)
    formula = ring_instability_threshold(model, 0.1)
    assert not formula.stable
    assert formula.boxed_q_c != pytest.approx(formula.q_c)
    assert ring_instability_scan(model, 0.1).q_c == pytest.approx(formula.q_c, rel=1e-5)


# Density large deviations

def test_equilibrium_ldf_is_quadratic_for_small_deviations(ssep):
    x = uniform_grid(256)
    value = equilibrium_density_ldf(ssep, 0.5, 0.5 + 0.01 * np.sin(np.pi * x))
    assert value == pytest.approx(0.5 * 4.0 * 1e-4 * 0.5, rel=1e-3)


def test_ssep_ldf_vanishes_on_steady_profile(ssep):
    profile, _ = steady_profile(ssep, 0.7, 0.3, n=128)
    value, F = density_ldf_ssep(0.7, 0.3, profile)
    assert value == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(F.values, profile.values, atol=1e-14)


def test_ssep_ldf_with_equal_reservoirs_is_local(ssep):
    x = uniform_grid(128)
    rho = 0.4 + 0.1 * np.sin(np.pi * x)
    value, _ = density_ldf_ssep(0.4, 0.4, rho)
    assert value == pytest.approx(equilibrium_density_ldf(ssep, 0.4, rho), rel=1e-12)


def test_ssep_ldf_rejects_densities_outside_unit_interval():
    with pytest.raises(DomainViolation):
        density_ldf_ssep(0.7, 0.3, np.linspace(1.2, 0.3, 33))


@pytest.mark.parametrize("rho1, rho2", [(1.0, 0.0), (0.7, 0.3)])
def test_ssep_ldf_hessian_matches_covariance(ssep, rho1, rho2):
    n = 128
    profile, _ = steady_profile(ssep, rho1, rho2, n=n)
    delta = 0.01 * np.sin(np.pi * profile.x)
    value, _ = density_ldf_ssep(rho1, rho2, profile.values + delta)
    gaussian = gaussian_density_ldf(covariance(ssep, rho1, rho2, n), delta)
    assert value == pytest.approx(gaussian, rel=0.05)


def test_perturbative_F_is_third_order(ssep):
    rho1, n = 0.55, 512
    x = uniform_grid(n)

    def error(drho):
        rho = rho1 - drho * x + 0.05 * np.sin(np.pi * x)
        _, F = density_ldf_ssep(rho1, rho1 - drho, rho)
        return np.max(np.abs(F.values - ssep_perturbative_F(rho1, rho1 - drho, rho)))

    assert error(0.1) / error(0.05) > 5.0


def test_density_scgf_quadratic_expansion():
    x = uniform_grid(512)

    def error(a):
        A = a * (0.5 + x)
        return abs(density_scgf_ssep(0.8, 0.3, A, n=512) - density_scgf_quadratic(0.8, 0.3, A, n=512))

    assert error(0.1) / error(0.05) > 5.0


def test_density_scgf_at_equilibrium_is_product_measure():
    x = uniform_grid(128)
    A = 0.3 * np.cos(np.pi * x)
    expected = simpson(np.log(1.0 - 0.4 + 0.4 * np.exp(A)), x)
    assert density_scgf_ssep(0.4, 0.4, A) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("A", [
    lambda x: 0.5 * np.sin(np.pi * x),
    lambda x: 0.3 * x,
    lambda x: -0.4 + 0.2 * x,
])
def test_legendre_duality_of_density_functionals(A):
    rho1, rho2, n = 0.7, 0.2, 256
    x = uniform_grid(n)
    a = A(x)
    g = density_scgf_ssep(rho1, rho2, a, n=n)
    rho_star = rho1 + (rho2 - rho1) * x
    rho_a = ssep_tilted_profile(rho1, rho2, a, n=n).values

    def dual(theta):
        rho = rho_star + theta * (rho_a - rho_star)
        return simpson(a * rho, x) - density_ldf_ssep(rho1, rho2, rho)[0]

    best = dual(1.0)
    assert best == pytest.approx(g, abs=1e-4)
    assert dual(0.8) < best and dual(1.2) < best


def test_zero_range_ldf():
    model = ZeroRangeModel([1.0])
    profile, _ = steady_profile(model.transport_model(), 2.0, 1.0, n=64)
    assert zrp_density_ldf(model, 2.0, 1.0, profile) == pytest.approx(0.0, abs=1e-12)
    bumped = profile.values + 0.2 * np.sin(np.pi * profile.x)
    assert zrp_density_ldf(model, 2.0, 1.0, bumped) > 0


def test_zero_range_ldf_is_local_for_small_deviations():
    model = ZeroRangeModel([1.0])
    profile, _ = steady_profile(model.transport_model(), 2.0, 1.0, n=128)
    delta = 0.01 * np.sin(np.pi * profile.x)
    value = zrp_density_ldf(model, 2.0, 1.0, profile.values + delta)
    rho = profile.values
    assert value == pytest.approx(0.5 * simpson(delta ** 2 / (rho * (1.0 + rho)), profile.x), rel=0.02)


def walker_ldf_integrand(x, rho=1.5):
    # u(n) = n: f = rho log rho - rho, rho*(x) = 2 - x
    star = 2.0 - x
    return rho * np.log(rho) - rho - (star * np.log(star) - star) - (rho - star) * np.log(star)


def test_zero_range_ldf_of_independent_walkers():
    walkers = ZeroRangeModel(lambda n: float(n))
    n = 256
    value = zrp_density_ldf(walkers, 2.0, 1.0, np.full(n + 1, 1.5))
    exact, _ = integrate.quad(walker_ldf_integrand, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13)
    assert value == pytest.approx(exact, rel=1e-9)
    assert value == pytest.approx(simpson(walker_ldf_integrand(uniform_grid(n)), uniform_grid(n)), rel=1e-12)


def test_density_quadratures_at_doubled_resolution(kmp):
    walkers = ZeroRangeModel(lambda n: float(n))
    coarse = zrp_density_ldf(walkers, 2.0, 1.0, np.full(257, 1.5))
    fine = zrp_density_ldf(walkers, 2.0, 1.0, np.full(513, 1.5))
    assert abs(fine / coarse - 1) <= 1e-8

    def bump(x):
        return 1.5 + 0.2 * x * (1.0 - x)

    coarse = equilibrium_density_ldf(kmp, 1.5, bump, n=256)
    fine = equilibrium_density_ldf(kmp, 1.5, bump, n=512)
    assert abs(fine / coarse - 1) <= 1e-8


def test_ssep_ldf_is_positive_with_positive_hessian(ssep):
    n = 64
    profile, _ = steady_profile(ssep, 0.7, 0.3, n=n)
    modes = [np.sin(k * np.pi * profile.x) for k in (1, 2, 3)]
    h = 0.02

    def F(shift):
        return density_ldf_ssep(0.7, 0.3, profile.values + shift)[0]

    for a, b in [(0.05, 0.0), (-0.05, 0.03), (0.02, -0.04)]:
        assert F(a * modes[0] + b * modes[2]) > 0
    hessian = np.array([[(F(h * u + h * v) - F(h * u - h * v) - F(-h * u + h * v) + F(-h * u - h * v)) / (4 * h * h)
                         for v in modes] for u in modes])
    np.testing.assert_allclose(hessian, hessian.T, atol=1e-10)
    assert np.linalg.eigvalsh(hessian).min() > 0


# Optimal trajectories

def residual_ratios(build):
    residuals = [hj_residual(transport_catalogue("ssep"), build(n, n)) for n in (32, 64, 128)]
    rho_ratios = [residuals[k][0] / residuals[k + 1][0] for k in range(2)]
    H_ratios = [residuals[k][1] / residuals[k + 1][1] for k in range(2)]
    return rho_ratios + H_ratios


@pytest.mark.parametrize("build", [
    lambda n, m: equilibrium_excitation_trajectory(0.5, 0.2, n, m),
    lambda n, m: ssep_antidiffusion_trajectory(0.7, 0.3, 0.005, n, m),
])
def test_residuals_fall_at_second_order(build):
    for ratio in residual_ratios(build):
        assert 4.0 * 0.7 <= ratio <= 4.0 * 1.3


@pytest.mark.parametrize("trajectory", [
    equilibrium_excitation_trajectory(n=64, m=64),
    ssep_antidiffusion_trajectory(n=64, m=64),
])
def test_action_forms_agree(ssep, trajectory):
    direct = trajectory_action(ssep, trajectory, "direct")
    h_form = trajectory_action(ssep, trajectory, "H")
    assert direct == pytest.approx(h_form, abs=1e-8)


def test_excitation_cost_is_the_equilibrium_ldf(ssep):
    trajectory = equilibrium_excitation_trajectory(0.5, 0.2, n=128, m=256)
    action = trajectory_action(ssep, trajectory)
    ldf = equilibrium_density_ldf(ssep, 0.5, trajectory.final_profile())
    assert action == pytest.approx(ldf, rel=0.02)


def test_steady_trajectory_costs_nothing(ssep):
    trajectory = steady_trajectory(ssep, 0.7, 0.3, n=32, m=32)
    assert trajectory_action(ssep, trajectory) == pytest.approx(0.0, abs=1e-14)
    res_rho, res_H = hj_residual(ssep, trajectory)
    assert res_rho <= 1e-10 and res_H == 0.0
    flat = constant_trajectory(ssep, 0.4, n=32, m=32)
    assert hj_residual(ssep, flat) == (0.0, 0.0)


def test_residuals_need_fine_grids(ssep):
    with pytest.raises(GridMismatch):
        hj_residual(ssep, steady_trajectory(ssep, 0.7, 0.3, n=16, m=16))


def test_trajectory_shapes_are_checked():
    x, tau = uniform_grid(32), np.linspace(0.0, 1.0, 33)
    with pytest.raises(GridMismatch):
        TrajectoryGrid(x, tau, np.zeros((33, 32)))


def test_profile_shapes_are_checked():
    with pytest.raises(GridMismatch):
        DensityProfile(uniform_grid(8), np.zeros(5), 0.0, 0.0)
