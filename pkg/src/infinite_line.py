"""
Current through the origin on the infinite line from a step initial
condition (density rho_a on the left, empty right half line).

All generating functions are rates per sqrt(t): mu(lambda) = lim
log <exp(lambda Q_t)> / sqrt(t), with unit diffusion constant so that
<Q_t> = rho_a sqrt(t/pi).
"""
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import special

from src.exceptions import DomainViolation, LambdaTooNegative, PositiveArgument
from src.markov_core import legendre_transform
from src.numerics import quad

logger = logging.getLogger(__name__)

TAIL_CUTOFF = 40.0
QUAD_TOL = 1e-12
WALKER_CUTOFF = 12.0
ENSEMBLES = ("quenched", "annealed")


@dataclass(frozen=True)
class StepInitialCondition:
    rho_a: float
    rho_b: float = 0.0
    ensemble: str = "annealed"

    def __post_init__(self):
        if self.rho_a < 0 or self.rho_b < 0:
            raise DomainViolation("step densities must be non-negative")
        if self.rho_b != 0:
            raise DomainViolation("only rho_b = 0 has closed formulas")
        if self.ensemble not in ENSEMBLES:
            raise DomainViolation(f"Unknown ensemble: {self.ensemble}, available: {', '.join(ENSEMBLES)}")


def crossing_probability_g(v):
    """
    Probability that a particle started at v sqrt(t) < 0 is on the positive
    side at time t: g(v) = erfc(|v|/2) / 2.

    Raises:
        PositiveArgument for v > 0.
    """
    v = np.asarray(v, dtype=float)
    if np.any(v > 0):
        raise PositiveArgument(f"crossing probability needs v <= 0, got {v.max()}")
    result = 0.5 * special.erfc(np.abs(v) / 2.0)
    return float(result) if result.ndim == 0 else result


def annealed_scgf_free(rho_a: float, lam: float) -> float:
    """mu_a = rho_a (e^lambda - 1) / sqrt(pi)."""
    return float(rho_a * np.expm1(lam) / np.sqrt(np.pi))


def annealed_scgf_derivative(rho_a: float, lam: float) -> float:
    return float(rho_a * np.exp(lam) / np.sqrt(np.pi))


def _check_quenched(lam):
    c = np.expm1(lam)
    # g takes values in (0, 1/2]; 1 + c g is smallest at u = 0 when c < 0
    if 1.0 + 0.5 * min(c, 0.0) <= 0:
        raise LambdaTooNegative(0.0)
    return c


def quenched_scgf_free(rho_a: float, lam: float) -> float:
    """mu_q = rho_a int_{-inf}^0 log(1 + (e^lambda - 1) g(u)) du."""
    c = _check_quenched(lam)
    if c == 0:
        return 0.0
    value = quad(lambda u: np.log1p(c * crossing_probability_g(u)), -TAIL_CUTOFF, 0.0,
                 epsabs=QUAD_TOL, epsrel=QUAD_TOL)
    return float(rho_a * value)


def quenched_scgf_derivative(rho_a: float, lam: float) -> float:
    c = _check_quenched(lam)

    def integrand(u):
        g = crossing_probability_g(u)
        return np.exp(lam) * g / (1.0 + c * g)

    return float(rho_a * quad(integrand, -TAIL_CUTOFF, 0.0, epsabs=QUAD_TOL, epsrel=QUAD_TOL))


def annealed_scgf_ssep(rho_a: float, lam: float) -> float:
    """
    Annealed SSEP generating function
    int_{-inf}^{inf} dk/pi log(1 + rho_a (e^lambda - 1) e^{-k^2}).

    Raises:
        DomainViolation, LambdaTooNegative
    """
    if not 0 < rho_a <= 1:
        raise DomainViolation(f"SSEP density rho_a={rho_a} outside (0, 1]")
    c = rho_a * np.expm1(lam)
    if 1.0 + c <= 0:
        raise LambdaTooNegative(0.0)
    if c == 0:
        return 0.0
    half = quad(lambda k: np.log1p(c * np.exp(-k * k)), 0.0, TAIL_CUTOFF, epsabs=QUAD_TOL, epsrel=QUAD_TOL)
    return float(2.0 * half / np.pi)


def optimal_initial_profile(rho_a: float, lam: float, y_over_sqrt_t, rule: str = "printed"):
    """
    Most likely annealed initial density at y = v sqrt(t) < 0.

    rule "printed": rho_a exp[(e^lambda - 1) g(v)];
    rule "variational": rho_a [1 + (e^lambda - 1) g(v)], the stationary
    point of the annealed variational functional with f = rho log rho - rho.
    """
    g = crossing_probability_g(y_over_sqrt_t)
    c = np.expm1(lam)
    if rule == "printed":
        return rho_a * np.exp(c * g)
    if rule == "variational":
        return rho_a * (1.0 + c * g)
    raise ValueError(f"Unknown profile rule: {rule}")


def annealed_variational_value(rho_a: float, lam: float, profile) -> float:
    """
    int_{-inf}^0 [rho0(u) log(1 + (e^lambda - 1) g(u)) - F_local(rho0(u))] du
    for a candidate profile rho0(u), u = y / sqrt(t); F_local is the free
    energy cost of ideal particles relative to rho_a.
    """
    c = np.expm1(lam)

    def integrand(u):
        rho0 = float(profile(u))
        gain = rho0 * np.log1p(c * crossing_probability_g(u))
        cost = special.xlogy(rho0, rho0 / rho_a) - rho0 + rho_a
        return gain - cost

    return quad(integrand, -TAIL_CUTOFF, 0.0, epsabs=QUAD_TOL, epsrel=QUAD_TOL)


def scgf_table(rho_a: float, lambdas, n_jobs: int = 1) -> pd.DataFrame:
    lambdas = np.asarray(lambdas, dtype=float)
    quenched = Parallel(n_jobs=n_jobs)(delayed(quenched_scgf_free)(rho_a, lam) for lam in lambdas)
    return pd.DataFrame({
        "lambda": lambdas,
        "mu_quenched": quenched,
        "mu_annealed": [annealed_scgf_free(rho_a, lam) for lam in lambdas],
    })


def rate_functions(rho_a: float, q_values, window=(-20.0, 6.0)) -> pd.DataFrame:
    """Quenched and annealed I(q) per sqrt(t) by Legendre transform."""
    quenched = legendre_transform(lambda l: quenched_scgf_free(rho_a, l),
                                  lambda l: quenched_scgf_derivative(rho_a, l), q_values, window)
    annealed = legendre_transform(lambda l: annealed_scgf_free(rho_a, l),
                                  lambda l: annealed_scgf_derivative(rho_a, l), q_values, window)
    return pd.DataFrame({"q": quenched.x, "I_quenched": quenched.y, "I_annealed": annealed.y})


def simulate_step_walkers(rho_a: float, t: float, n_samples: int, ensemble: str = "annealed",
                          lambdas=(0.25, 0.5), seed: int = 0, chunk: int = 2000) -> pd.DataFrame:
    """
    Monte Carlo of independent continuous-time random walkers from a step.

    Walkers live on a lattice of spacing a and hop to each neighbour at rate
    1/a^2 (unit diffusion constant). Quenched: one walker on every site
    -a, -2a, ... with a = 1/rho_a. Annealed: a = 1 and Poisson(rho_a)
    walkers per site. Q_t counts walkers ending at positions >= 0.

    Returns:
        DataFrame (lambda, mu_empirical, mu_formula) with
        mu_empirical = log mean exp(lambda Q_t) / sqrt(t).
    """
    StepInitialCondition(rho_a, 0.0, ensemble)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    spacing = 1.0 / rho_a if ensemble == "quenched" else 1.0
    n_sites = int(np.ceil(WALKER_CUTOFF * np.sqrt(t) / spacing))
    rate_t = t / spacing ** 2
    sites = np.arange(1, n_sites + 1)
    logger.debug("walker simulation: %s, %d sites, %d samples", ensemble, n_sites, n_samples)

    currents = []
    for start in range(0, n_samples, chunk):
        size = min(chunk, n_samples - start)
        if ensemble == "quenched":
            steps = rng.poisson(rate_t, (size, n_sites)) - rng.poisson(rate_t, (size, n_sites))
            currents.append(np.sum(steps >= sites[None, :], axis=1))
        else:
            counts = rng.poisson(rho_a, (size, n_sites))
            owner = np.repeat(np.arange(size), counts.sum(axis=1))
            origin = np.repeat(np.tile(sites, size), counts.ravel())
            steps = rng.poisson(rate_t, owner.size) - rng.poisson(rate_t, owner.size)
            currents.append(np.bincount(owner[steps >= origin], minlength=size))
    q = np.concatenate(currents).astype(float)

    formula = quenched_scgf_free if ensemble == "quenched" else annealed_scgf_free
    rows = []
    for lam in lambdas:
        empirical = (special.logsumexp(lam * q) - np.log(q.size)) / np.sqrt(t)
        rows.append({"lambda": float(lam), "mu_empirical": float(empirical),
                     "mu_formula": formula(rho_a, lam)})
    return pd.DataFrame(rows)
