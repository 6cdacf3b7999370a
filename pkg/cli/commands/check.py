"""
check command: cross-level invariant suite.

Exact Markov spectra, closed-form lattice results, hydrodynamic solvers and
reduced-statistics simulations are compared against each other. Every
invariant prints one PASS/FAIL line and becomes a row of check.csv.
"""
import logging
from typing import Callable, List, Tuple

import numpy as np
import pandas as pd
from scipy import integrate, special

from cli.core.config import settings
from cli.core.output import RunOutput
from cli.schemas.job import JobConfig
from cli.schemas.results import CheckLine
from src.exceptions import LdtkError
from src.infinite_line import (
    annealed_scgf_free,
    annealed_scgf_ssep,
    quenched_scgf_free,
    simulate_step_walkers,
)
from src.kmc_simulator import SimulationPlan, chi_square_stationary, current_statistics, simulate
from src.lattice_models import (
    SsepParams,
    ZeroRangeModel,
    occupation_moments,
    quantum_dot_generator,
    quantum_dot_scgf,
    ssep_correlations_exact,
    ssep_generator,
    ssep_steady_statistics,
    transport_catalogue,
    two_level_multibath,
)
from src.markov_core import (
    build_generator,
    current_symmetry_defect,
    gc_symmetry_defect,
    onsager_response_matrix,
    scgf_value,
    stationary_distribution,
)
from src.mft import (
    additivity_cumulants,
    additivity_rate_function,
    additivity_variational,
    covariance,
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
    ssep_antidiffusion_trajectory,
    ssep_perturbative_F,
    steady_profile,
    trajectory_action,
    uniform_grid,
)
from src.numerics import richardson

logger = logging.getLogger(__name__)

Outcome = Tuple[bool, str]
INVARIANTS: List[Tuple[str, Callable[[], Outcome]]] = []


def invariant(name: str):
    def register(func):
        INVARIANTS.append((name, func))
        return func
    return register


def _random_reversible_chain(rng, n_states):
    edges = {tuple(sorted((i, (i + 1) % n_states))) for i in range(n_states)}
    for _ in range(n_states):
        a, b = rng.integers(0, n_states, 2)
        if a != b:
            edges.add((int(min(a, b)), int(max(a, b))))
    transitions = []
    for a, b in sorted(edges):
        transitions.append((a, b, rng.uniform(0.2, 2.0), ()))
        transitions.append((b, a, rng.uniform(0.2, 2.0), ()))
    return build_generator(n_states, transitions)


# Markov level

@invariant("quantum_dot_scgf")
def check_quantum_dot_scgf() -> Outcome:
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(20):
        rates = rng.uniform(0.1, 3.0, 4)
        gen = quantum_dot_generator(*rates)
        for lam in np.linspace(-3.0, 3.0, 61):
            worst = max(worst, abs(scgf_value(gen, lam, "left") - quantum_dot_scgf(*rates, lam)))
    return worst <= 1e-10, f"max error {worst:.3e} over 20 rate sets x 61 lambdas"


@invariant("gallavotti_cohen")
def check_gallavotti_cohen() -> Outcome:
    rng = np.random.default_rng(7)
    worst = max(gc_symmetry_defect(_random_reversible_chain(rng, int(rng.integers(3, 33))))
                for _ in range(10))
    return worst <= 1e-9, f"max defect {worst:.3e} on 10 random chains"


@invariant("boundary_symmetry")
def check_boundary_symmetry() -> Outcome:
    rng = np.random.default_rng(11)
    worst = 0.0
    for L in range(1, 7):
        params = SsepParams(L, *rng.uniform(0.2, 2.0, 4))
        worst = max(worst, current_symmetry_defect(ssep_generator(params), "left", params.boundary_affinity))
    return worst <= 1e-9, f"max defect {worst:.3e} for L = 1..6"


@invariant("asep_shift")
def check_asep_shift() -> Outcome:
    params = SsepParams(3, 0.9, 0.3, 0.8, 0.2, r=0.5)
    defect = current_symmetry_defect(ssep_generator(params), "left", params.boundary_affinity)
    return defect <= 1e-9, f"defect {defect:.3e} with r = 0.5"


@invariant("onsager_reciprocity")
def check_onsager() -> Outcome:
    result = onsager_response_matrix(two_level_multibath((1.0, 1.1, 0.9)))
    return result.symmetry_defect <= 1e-8, f"|M12 - M21| = {result.symmetry_defect:.3e}"


# Lattice level

@invariant("ssep_exact_statistics")
def check_ssep_exact() -> Outcome:
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(20):
        L = int(rng.integers(2, 9))
        params = SsepParams(L, *rng.uniform(0.1, 2.0, 4))
        moments = occupation_moments(params)
        profile, current = ssep_steady_statistics(params)
        worst = max(worst, float(np.max(np.abs(moments.mean - profile))), abs(moments.current - current))
        for i in range(1, L + 1):
            for j in range(i + 1, L + 1):
                worst = max(worst, abs(moments.connected_pairs[i - 1, j - 1]
                                       - ssep_correlations_exact(params, (i, j))))
                for k in range(j + 1, L + 1):
                    worst = max(worst, abs(moments.connected_triples[i - 1, j - 1, k - 1]
                                           - ssep_correlations_exact(params, (i, j, k))))
    pair = ssep_correlations_exact(SsepParams(2, 1.0, 0.0, 1.0, 0.0), (1, 2))
    triple = ssep_correlations_exact(SsepParams(4, 1.0, 0.0, 1.0, 0.0), (1, 2, 4))
    worst = max(worst, abs(pair + 1 / 18), abs(triple + 1 / 3000))
    return worst <= 1e-10, f"max deviation {worst:.3e} on 20 chains with L <= 8"


@invariant("einstein_relation")
def check_einstein() -> Outcome:
    models = [transport_catalogue(name) for name in ("ssep", "kmp", "free")]
    models += [transport_catalogue("alpha_model", alpha=0.5), ZeroRangeModel([1.0, 1.5, 2.0]).transport_model()]
    worst = max(model.einstein_defect() for model in models)
    return worst <= 1e-9, f"max |2D - sigma f''| = {worst:.3e}"


# Hydrodynamic level

@invariant("covariance_kernel")
def check_covariance_kernel() -> Outcome:
    ssep = transport_catalogue("ssep")
    result = covariance(ssep, 1.0, 0.0, 64)
    x = result.x
    exact = -np.minimum.outer(x, x) * (1.0 - np.maximum.outer(x, x))
    off = ~np.eye(x.size, dtype=bool)
    kernel = float(np.max(np.abs(result.long_range - exact)[off]))
    local = max(float(np.max(np.abs(covariance(model, 2.0, 1.0, 32).long_range)))
                for model in (transport_catalogue("free"), ZeroRangeModel([1.0]).transport_model()))
    variance = number_variance(ssep, 1.0, 0.0, method="numeric", n=256)
    ok = kernel <= 1e-8 and local <= 1e-10 and abs(variance * 12 - 1) <= 0.01
    return ok, f"kernel {kernel:.2e}, independent sites {local:.2e}, Var(N)/L {variance:.6f}"


@invariant("covariance_convergence")
def check_covariance_convergence() -> Outcome:
    model = transport_catalogue("alpha_model", alpha=0.5)
    values = [covariance(model, 0.9, 0.1, n).value_at(0.25, 0.5) for n in (64, 128, 256)]
    ratio = (values[0] - values[1]) / (values[1] - values[2])
    order = float(np.log2(abs(ratio)))
    return 2 ** 1.8 <= ratio <= 2 ** 2.2, f"observed order {order:.3f}"


@invariant("additivity_cumulants")
def check_additivity_cumulants() -> Outcome:
    _, ratio = additivity_cumulants(transport_catalogue("ssep"), 1.0, 0.0, order=2)
    return abs(ratio - 1 / 3) <= 1e-10, f"S2/S1 = {ratio:.15f}"


@invariant("additivity_variational")
def check_additivity_variational() -> Outcome:
    worst = 0.0
    for name, rho1, rho2 in (("kmp", 2.0, 1.0), ("ssep", 0.8, 0.2)):
        model = transport_catalogue(name)
        for q in (0.5, 1.5):
            exact = additivity_rate_function(model, rho1, rho2, q=q).value
            extrapolated = richardson(additivity_variational(model, rho1, rho2, q, 64),
                                      additivity_variational(model, rho1, rho2, q, 128))
            worst = max(worst, abs(extrapolated - exact))
    return worst <= 1e-4, f"max |parametric - variational| = {worst:.3e}"


@invariant("current_fluctuation_relation")
def check_current_fluctuation_relation() -> Outcome:
    model = transport_catalogue("ssep")
    affinity = model.f_prime(0.2) - model.f_prime(0.8)
    worst = max(abs(additivity_rate_function(model, 0.8, 0.2, q=q).value
                    - additivity_rate_function(model, 0.8, 0.2, q=-q).value - q * affinity)
                for q in (0.1, 0.3, 0.6, 1.0))
    return worst <= 1e-7, f"max defect {worst:.3e}"


@invariant("ring_instability")
def check_ring_instability() -> Outcome:
    kmp, ssep = transport_catalogue("kmp"), transport_catalogue("ssep")
    formula, scan = ring_instability_threshold(kmp, 1.0), ring_instability_scan(kmp, 1.0)
    error = abs(scan.q_c - 2 * np.pi) / (2 * np.pi)
    stable = all(ring_instability_threshold(ssep, rho).stable for rho in (0.2, 0.5, 0.8))
    ok = not formula.stable and error <= 1e-6 and abs(formula.q_c - 2 * np.pi) <= 1e-12 and stable
    return ok, f"KMP scan relative error {error:.2e}, SSEP stable: {stable}"


@invariant("density_ldf")
def check_density_ldf() -> Outcome:
    ssep = transport_catalogue("ssep")
    at_steady, ratios = 0.0, []
    for rho1, rho2 in ((1.0, 0.0), (0.7, 0.3)):
        profile, _ = steady_profile(ssep, rho1, rho2, 128)
        value, _ = density_ldf_ssep(rho1, rho2, profile)
        at_steady = max(at_steady, abs(value))
        delta = 0.01 * np.sin(np.pi * profile.x)
        value, _ = density_ldf_ssep(rho1, rho2, profile.values + delta)
        ratios.append(value / gaussian_density_ldf(covariance(ssep, rho1, rho2, 128), delta))
    ok = at_steady <= 1e-12 and all(abs(r - 1) <= 0.05 for r in ratios)
    return ok, f"F(rho*) = {at_steady:.1e}, LDF / Gaussian = {ratios[0]:.4f} (1, 0), {ratios[1]:.4f} (0.7, 0.3)"


@invariant("density_expansions")
def check_density_expansions() -> Outcome:
    x = uniform_grid(512)

    def f_error(drho):
        rho = 0.55 - drho * x + 0.05 * np.sin(np.pi * x)
        _, F = density_ldf_ssep(0.55, 0.55 - drho, rho)
        return float(np.max(np.abs(F.values - ssep_perturbative_F(0.55, 0.55 - drho, rho))))

    def g_error(a):
        A = a * (0.5 + x)
        return abs(density_scgf_ssep(0.8, 0.3, A, 512) - density_scgf_quadratic(0.8, 0.3, A, 512))

    f_ratio = f_error(0.1) / f_error(0.05)
    g_ratio = g_error(0.1) / g_error(0.05)
    return f_ratio > 5 and g_ratio > 5, f"error ratios under halving: F {f_ratio:.2f}, G {g_ratio:.2f}"


@invariant("hj_residuals")
def check_hj_residuals() -> Outcome:
    ssep = transport_catalogue("ssep")
    ratios = []
    for build in (equilibrium_excitation_trajectory, ssep_antidiffusion_trajectory):
        residuals = [hj_residual(ssep, build(n=n, m=n)) for n in (32, 64, 128)]
        for k in range(2):
            ratios += [residuals[k][0] / residuals[k + 1][0], residuals[k][1] / residuals[k + 1][1]]
    in_band = all(2.8 <= r <= 5.2 for r in ratios)
    trajectory = ssep_antidiffusion_trajectory(n=64, m=64)
    forms = abs(trajectory_action(ssep, trajectory, "direct") - trajectory_action(ssep, trajectory, "H"))
    excitation = equilibrium_excitation_trajectory(0.5, 0.2, n=128, m=256)
    cost = trajectory_action(ssep, excitation)
    ldf = equilibrium_density_ldf(ssep, 0.5, excitation.final_profile())
    ok = in_band and forms <= 1e-8 and abs(cost / ldf - 1) <= 0.02
    return ok, (f"ratios {min(ratios):.2f}..{max(ratios):.2f}, action forms {forms:.1e}, "
                f"action / LDF {cost / ldf:.4f}")


# Infinite line

@invariant("infinite_line_scgf")
def check_infinite_line() -> Outcome:
    lambdas = np.linspace(-3.0, 3.0, 25)
    worst = 0.0
    for lam in lambdas:
        c = np.expm1(lam)
        numeric, _ = integrate.quad(lambda u: c * 0.5 * special.erfc(-u / 2.0), -np.inf, 0.0,
                                    epsabs=1e-13, epsrel=1e-12)
        worst = max(worst, abs(annealed_scgf_free(0.7, lam) - 0.7 * numeric))
    ordered = all(quenched_scgf_free(0.7, lam) <= annealed_scgf_free(0.7, lam) + 1e-12 for lam in lambdas)
    dilute = max(abs(annealed_scgf_ssep(0.01, lam) / annealed_scgf_free(0.01, lam) - 1)
                 for lam in (-1.0, -0.3, 0.4, 1.0))
    ok = worst <= 1e-8 and ordered and dilute <= 0.01
    return ok, f"quadrature {worst:.1e}, quenched <= annealed: {ordered}, dilute SSEP {dilute:.2e}"


@invariant("infinite_line_walkers")
def check_walkers() -> Outcome:
    frames = [simulate_step_walkers(1.0, 100.0, 10_000, ensemble, seed=17) for ensemble in ("quenched", "annealed")]
    walkers = pd.concat(frames, ignore_index=True)
    error = float(np.max(np.abs(walkers["mu_empirical"] / walkers["mu_formula"] - 1.0)))
    return error <= 0.05, f"max relative error {error:.3f} at lambda 0.25, 0.5"


# Simulation

@invariant("simulation")
def check_simulation() -> Outcome:
    gen = quantum_dot_generator(2.0, 1.0, 1.0, 1.0)
    dot = simulate(SimulationPlan(gen, t_max=20_000.0, seed=11), n_jobs=settings.THREADS)
    _, p_value, _ = chi_square_stationary(dot, stationary_distribution(gen))
    chain = simulate(SimulationPlan(SsepParams(4, 1.0, 0.0, 1.0, 0.0), t_max=160.0 + 10_000.0, seed=5),
                     n_jobs=settings.THREADS)
    stats = current_statistics(chain, "left")
    sigmas = abs(stats.mean - 0.2) / stats.mean_stderr
    return p_value > 0.01 and sigmas <= 3.0, f"chi2 p = {p_value:.3f}, L=4 current {sigmas:.2f} sigma from 1/5"


def run_check(job: JobConfig, out: RunOutput) -> bool:
    """Run every invariant; True iff all pass"""
    lines = []
    for name, func in INVARIANTS:
        try:
            passed, detail = func()
        except LdtkError as e:
            passed, detail = False, f"{type(e).__name__}: {e}"
        except Exception as e:
            logger.exception("invariant %s raised", name)
            passed, detail = False, f"{type(e).__name__}: {e}"
        line = CheckLine(invariant=name, status="PASS" if passed else "FAIL", detail=detail)
        print(f"{line.status} {line.invariant}: {line.detail}")
        lines.append(line)
    out.table("check", pd.DataFrame([line.model_dump() for line in lines]), fmt="csv")
    failed = [line.invariant for line in lines if not line.passed]
    out.record(invariants=len(lines), passed=len(lines) - len(failed), failed=failed)
    if failed:
        logger.warning("%d invariant(s) failed: %s", len(failed), ", ".join(failed))
    return not failed
