"""
Concrete lattice gases and their exact statistics.

Builders for the open and periodic exclusion process (symmetric or
asymmetric), the quantum dot (one-site chain), a two-level system exchanging
heat with three baths, and zero-range processes; closed-form SSEP profile,
current and correlation functions; the catalogue of macroscopic transport
coefficients (D, sigma, f) used by the fluctuating-hydrodynamics module.
"""
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import optimize, special

from src.exceptions import (
    DimensionMismatch, DomainViolation, IndexOrder, InputError, NegativeRate,
    OutsideConvergence, TooLarge, UnknownModel,
)
from src.markov_core import (
    MarkovGenerator, generator_from_arrays, generator_from_dict, mean_rate,
    stationary_distribution, with_entropy_observable,
)
from src.numerics import derivative, second_derivative

logger = logging.getLogger(__name__)

MAX_SITES = 20
MAX_STATES = 1 << MAX_SITES
MAX_BRUTE_FORCE_SITES = 12
FD_STEP = 1e-5


# Exclusion processes

@dataclass(frozen=True)
class SsepParams:
    """
    Exclusion process on L sites.

    Open chains exchange particles with reservoirs: entry at site 1 with rate
    alpha, exit at site 1 with rate gamma, exit at site L with rate beta,
    entry at site L with rate delta. Bulk hops go right with rate 1 and left
    with rate r. Ring geometry conserves ``n_particles`` instead.
    """

    L: int
    alpha: float = 0.0
    gamma: float = 0.0
    beta: float = 0.0
    delta: float = 0.0
    r: float = 1.0
    geometry: str = "open"
    n_particles: Optional[int] = None

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 1:
            raise DomainViolation(f"L must be a positive integer, got {self.L}")
        for name in ("alpha", "gamma", "beta", "delta", "r"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise NegativeRate(f"{name}={value} must be nonnegative")
        if self.geometry == "open":
            if self.alpha + self.delta <= 0:
                raise DomainViolation("open chain needs a positive injection rate")
        elif self.geometry == "ring":
            if self.L < 2:
                raise DomainViolation("ring needs at least two sites")
            if self.n_particles is None or not 0 <= self.n_particles <= self.L:
                raise DomainViolation(f"ring needs 0 <= n_particles <= {self.L}")
        else:
            raise UnknownModel(f"Unknown geometry: {self.geometry}")

    @classmethod
    def from_rates(cls, L, rates: Sequence[float], r=1.0):
        if len(rates) != 4:
            raise DimensionMismatch("rates must be [alpha, gamma, beta, delta]")
        alpha, gamma, beta, delta = (float(v) for v in rates)
        return cls(int(L), alpha, gamma, beta, delta, float(r))

    @property
    def rates(self) -> tuple:
        return self.alpha, self.gamma, self.beta, self.delta

    @property
    def a(self) -> float:
        if self.alpha + self.gamma <= 0:
            raise DomainViolation("alpha + gamma must be positive")
        return 1.0 / (self.alpha + self.gamma)

    @property
    def b(self) -> float:
        if self.beta + self.delta <= 0:
            raise DomainViolation("beta + delta must be positive")
        return 1.0 / (self.beta + self.delta)

    @property
    def rho1(self) -> float:
        return self.alpha * self.a

    @property
    def rho2(self) -> float:
        return self.delta * self.b

    @property
    def boundary_affinity(self) -> float:
        """log(alpha beta / (gamma delta r^(L-1))); requires all rates > 0."""
        if min(self.rates) <= 0 or self.r <= 0:
            raise DomainViolation("affinity needs all boundary rates and r positive")
        return float(np.log(self.alpha * self.beta / (self.gamma * self.delta))
                     - (self.L - 1) * np.log(self.r))


def _site_occupation(states, site):
    """Occupation of site (1-based) encoded in bit site-1."""
    return (states >> (site - 1)) & 1


class _TransitionCollector:
    def __init__(self, states, n_observables):
        self.states = states
        self.n_observables = n_observables
        self.parts = []

    def add(self, mask, flip, rate, increments):
        if rate <= 0:
            return
        source = self.states[mask]
        inc = np.tile(np.asarray(increments, dtype=float), (source.size, 1))
        self.parts.append((source, source ^ flip, np.full(source.size, float(rate)), inc))

    def arrays(self):
        if not self.parts:
            return (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0),
                    np.zeros((0, self.n_observables)))
        return tuple(np.concatenate(column) for column in zip(*self.parts))


def ssep_generator(params: SsepParams) -> MarkovGenerator:
    """
    Generator over bitmask configurations (site i <-> bit i-1).

    Observables: ``left`` (particles entering at site 1 from the left
    reservoir, minus those leaving there) and ``right`` (particles leaving at
    site L, minus those entering there); on a ring, ``left`` counts the
    bond (L, 1) and ``right`` the bond (L/2, L/2+1). The ``entropy``
    observable is appended when every reverse rate is positive.

    Raises:
        TooLarge above 20 sites (or 2^20 ring configurations).
    """
    if params.geometry == "ring":
        gen = _ring_generator(params)
    else:
        if params.L > MAX_SITES:
            raise TooLarge(f"L={params.L} exceeds {MAX_SITES} sites")
        L = params.L
        states = np.arange(1 << L, dtype=np.int64)
        collect = _TransitionCollector(states, 2)
        first, last = 1, 1 << (L - 1)
        collect.add(_site_occupation(states, 1) == 0, first, params.alpha, (1, 0))
        collect.add(_site_occupation(states, 1) == 1, first, params.gamma, (-1, 0))
        for i in range(1, L):
            here, there = _site_occupation(states, i), _site_occupation(states, i + 1)
            pair = (1 << (i - 1)) | (1 << i)
            collect.add((here == 1) & (there == 0), pair, 1.0, (0, 0))
            collect.add((here == 0) & (there == 1), pair, params.r, (0, 0))
        collect.add(_site_occupation(states, L) == 1, last, params.beta, (0, 1))
        collect.add(_site_occupation(states, L) == 0, last, params.delta, (0, -1))
        sources, targets, rates, increments = collect.arrays()
        gen = generator_from_arrays(1 << L, sources, targets, rates, increments, ("left", "right"))
    reversible = params.r > 0 and (params.geometry == "ring" or min(params.rates) > 0)
    if reversible and gen.n_transitions:
        gen = with_entropy_observable(gen)
    logger.debug("exclusion generator: %d states, %d transitions", gen.n_states, gen.n_transitions)
    return gen


def _ring_generator(params: SsepParams) -> MarkovGenerator:
    L, N = params.L, params.n_particles
    if special.comb(L, N, exact=True) > MAX_STATES:
        raise TooLarge(f"ring sector C({L},{N}) exceeds {MAX_STATES} configurations")
    states = ring_configurations(params)
    collect = _TransitionCollector(states, 2)
    middle = L // 2
    for i in range(1, L + 1):
        j = i % L + 1
        here, there = _site_occupation(states, i), _site_occupation(states, j)
        pair = (1 << (i - 1)) | (1 << (j - 1))
        sign = np.array([i == L, i == middle], dtype=float)
        collect.add((here == 1) & (there == 0), pair, 1.0, sign)
        collect.add((here == 0) & (there == 1), pair, params.r, -sign)
    sources, targets, rates, increments = collect.arrays()
    return generator_from_arrays(
        states.size, np.searchsorted(states, sources), np.searchsorted(states, targets),
        rates, increments, ("left", "right"),
    )


def ring_configurations(params: SsepParams) -> np.ndarray:
    """Bitmasks of the fixed-N ring sector in increasing (generator) order."""
    masks = [sum(1 << site for site in chosen)
             for chosen in combinations(range(params.L), params.n_particles)]
    return np.sort(np.array(masks, dtype=np.int64))


def quantum_dot_generator(alpha, gamma, beta, delta) -> MarkovGenerator:
    return ssep_generator(SsepParams(1, alpha, gamma, beta, delta))


def quantum_dot_scgf(alpha, gamma, beta, delta, lam):
    """Closed-form SCGF of the left-boundary flux for the one-site chain."""
    total = alpha + beta + gamma + delta
    lam = np.asarray(lam, dtype=float)
    disc = total ** 2 + 4.0 * (-np.expm1(-lam)) * (alpha * beta * np.exp(lam) - gamma * delta)
    value = 0.5 * (np.sqrt(disc) - total)
    return float(value) if value.ndim == 0 else value


def _require_open_symmetric(params: SsepParams):
    if params.geometry != "open" or params.r != 1.0:
        raise DomainViolation("closed-form statistics need an open symmetric chain")


def ssep_steady_statistics(params: SsepParams):
    """
    Exact stationary profile <n_i> (i = 1..L) and current J of the open SSEP.

    Returns:
        (profile array, J)
    """
    _require_open_symmetric(params)
    a, b, rho1, rho2, L = params.a, params.b, params.rho1, params.rho2, params.L
    i = np.arange(1, L + 1, dtype=float)
    denom = L + a + b - 1.0
    profile = (rho1 * (L - i + b) + rho2 * (i + a - 1.0)) / denom
    return profile, (rho1 - rho2) / denom


def ssep_correlations_exact(params: SsepParams, indices: Sequence[int]) -> float:
    """Truncated two-point (i < j) or three-point (i < j < k) function of the open SSEP."""
    _require_open_symmetric(params)
    indices = [int(v) for v in indices]
    if len(indices) not in (2, 3):
        raise IndexOrder("give two or three site indices")
    if indices[0] < 1 or indices[-1] > params.L or any(
            x >= y for x, y in zip(indices, indices[1:])):
        raise IndexOrder(f"indices {indices} must satisfy 1 <= i < j (< k) <= {params.L}")
    a, b, L = params.a, params.b, params.L
    drho = params.rho1 - params.rho2
    s = L + a + b
    if len(indices) == 2:
        i, j = indices
        return float(-drho ** 2 * (i + a - 1) * (L + b - j) / ((s - 1) ** 2 * (s - 2)))
    i, j, k = indices
    return float(-2.0 * drho ** 3 * (i + a - 1) * (L + 1 + b - a - 2 * j) * (L + b - k)
                 / ((s - 1) ** 3 * (s - 2) ** 2 * (s - 3)))


@dataclass(frozen=True, eq=False)
class OccupationMoments:
    mean: np.ndarray
    connected_pairs: np.ndarray
    connected_triples: np.ndarray
    current: float


def occupation_moments(params: SsepParams) -> OccupationMoments:
    """Brute-force stationary moments of the open chain from its generator."""
    if params.geometry != "open":
        raise DomainViolation("occupation moments are computed for open chains")
    if params.L > MAX_BRUTE_FORCE_SITES:
        raise TooLarge(f"brute-force moments limited to {MAX_BRUTE_FORCE_SITES} sites")
    gen = ssep_generator(params)
    p = stationary_distribution(gen)
    states = np.arange(gen.n_states, dtype=np.int64)
    n = np.column_stack([_site_occupation(states, i) for i in range(1, params.L + 1)]).astype(float)
    mean = p @ n
    pairs = np.einsum("c,ci,cj->ij", p, n, n)
    triples = np.einsum("c,ci,cj,ck->ijk", p, n, n, n)
    connected = pairs - np.outer(mean, mean)
    truncated = (triples
                 - np.einsum("ij,k->ijk", pairs, mean)
                 - np.einsum("ik,j->ijk", pairs, mean)
                 - np.einsum("jk,i->ijk", pairs, mean)
                 + 2.0 * np.einsum("i,j,k->ijk", mean, mean, mean))
    return OccupationMoments(mean, connected, truncated, mean_rate(gen, "left"))


# Heat exchange with several baths

def two_level_multibath(temperatures=(1.0, 1.1, 0.9), gap: float = 1.0,
                        coupling: float = 1.0) -> MarkovGenerator:
    """
    Two-level system (energies 0 and ``gap``) coupled to three heat baths.

    Bath i excites with rate coupling*exp(-gap/(2 T_i)) and relaxes with
    coupling*exp(gap/(2 T_i)); the observables count the energy received
    from baths 1 and 2.
    """
    temperatures = np.asarray(temperatures, dtype=float)
    if temperatures.shape != (3,):
        raise DimensionMismatch("two_level_multibath needs three temperatures")
    if np.any(temperatures <= 0) or gap <= 0 or coupling <= 0:
        raise DomainViolation("temperatures, gap and coupling must be positive")
    sources, targets, rates, increments = [], [], [], []
    for bath, temperature in enumerate(temperatures):
        heat = np.zeros(2)
        if bath < 2:
            heat[bath] = gap
        sources += [0, 1]
        targets += [1, 0]
        rates += [coupling * np.exp(-gap / (2 * temperature)), coupling * np.exp(gap / (2 * temperature))]
        increments += [heat, -heat]
    return generator_from_arrays(2, sources, targets, rates, np.array(increments),
                                 ("heat_bath_1", "heat_bath_2"))


# Macroscopic transport coefficients

@dataclass(frozen=True, eq=False)
class TransportModel:
    """
    Diffusivity D, mobility sigma and free energy density f of a lattice gas.

    Analytic derivatives are optional; central differences (h=1e-5) are the
    fallback. ``kirchhoff`` is Phi(rho) = integral of D with its inverse.
    """

    name: str
    D: Callable
    sigma: Callable
    f: Callable
    rho_domain: tuple = (0.0, 1.0)
    df: Optional[Callable] = None
    d2f: Optional[Callable] = None
    dD: Optional[Callable] = None
    dsigma: Optional[Callable] = None
    d2sigma: Optional[Callable] = None
    kirchhoff: Optional[Callable] = None
    kirchhoff_inverse: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    def f_prime(self, rho):
        return self.df(rho) if self.df else derivative(self.f, rho, FD_STEP)

    def f_second(self, rho):
        return self.d2f(rho) if self.d2f else second_derivative(self.f, rho, FD_STEP)

    def D_prime(self, rho):
        return self.dD(rho) if self.dD else derivative(self.D, rho, FD_STEP)

    def sigma_prime(self, rho):
        return self.dsigma(rho) if self.dsigma else derivative(self.sigma, rho, FD_STEP)

    def sigma_second(self, rho):
        return self.d2sigma(rho) if self.d2sigma else second_derivative(self.sigma, rho, FD_STEP)

    def contains(self, rho) -> bool:
        lo, hi = self.rho_domain
        rho = np.asarray(rho, dtype=float)
        return bool(np.all((rho >= lo) & (rho <= hi)))

    def check_domain(self, rho, label="density"):
        if not self.contains(rho):
            raise DomainViolation(f"{label} outside {self.name} domain {self.rho_domain}")

    def sample_points(self, n_samples=100) -> np.ndarray:
        lo, hi = self.rho_domain
        hi = min(hi, lo + 10.0)
        return np.linspace(lo, hi, n_samples + 2)[1:-1]

    def einstein_defect(self, n_samples=100) -> float:
        """max |2D - sigma f''| over interior sample densities."""
        rho = self.sample_points(n_samples)
        return float(max(abs(2.0 * self.D(x) - self.sigma(x) * self.f_second(x)) for x in rho))


def _bernoulli_f(rho):
    return special.xlogy(rho, rho) + special.xlogy(1.0 - rho, 1.0 - rho)


def _ssep_model() -> TransportModel:
    return TransportModel(
        "ssep",
        D=lambda rho: np.ones_like(rho, dtype=float) if np.ndim(rho) else 1.0,
        sigma=lambda rho: 2.0 * rho * (1.0 - rho),
        f=_bernoulli_f,
        rho_domain=(0.0, 1.0),
        df=lambda rho: np.log(rho / (1.0 - rho)),
        d2f=lambda rho: 1.0 / (rho * (1.0 - rho)),
        dD=lambda rho: 0.0 * rho,
        dsigma=lambda rho: 2.0 - 4.0 * rho,
        d2sigma=lambda rho: -4.0 + 0.0 * rho,
        kirchhoff=lambda rho: rho,
        kirchhoff_inverse=lambda phi: phi,
    )


def _kmp_model() -> TransportModel:
    return TransportModel(
        "kmp",
        D=lambda rho: np.ones_like(rho, dtype=float) if np.ndim(rho) else 1.0,
        sigma=lambda rho: 2.0 * rho ** 2,
        f=lambda rho: 1.0 - np.log(rho),
        rho_domain=(0.0, np.inf),
        df=lambda rho: -1.0 / rho,
        d2f=lambda rho: 1.0 / rho ** 2,
        dD=lambda rho: 0.0 * rho,
        dsigma=lambda rho: 4.0 * rho,
        d2sigma=lambda rho: 4.0 + 0.0 * rho,
        kirchhoff=lambda rho: rho,
        kirchhoff_inverse=lambda phi: phi,
    )


def _free_model() -> TransportModel:
    return TransportModel(
        "free",
        D=lambda rho: np.ones_like(rho, dtype=float) if np.ndim(rho) else 1.0,
        sigma=lambda rho: 2.0 * rho,
        f=lambda rho: special.xlogy(rho, rho) - rho,
        rho_domain=(0.0, np.inf),
        df=np.log,
        d2f=lambda rho: 1.0 / rho,
        dD=lambda rho: 0.0 * rho,
        dsigma=lambda rho: 2.0 + 0.0 * rho,
        d2sigma=lambda rho: 0.0 * rho,
        kirchhoff=lambda rho: rho,
        kirchhoff_inverse=lambda phi: phi,
    )


def _alpha_model(alpha: float) -> TransportModel:
    alpha = float(alpha)
    if 1.0 + 4.0 * alpha <= 0:
        raise DomainViolation(f"alpha={alpha} makes D vanish inside [0, 1]")
    return TransportModel(
        "alpha_model",
        D=lambda rho: 1.0 + 4.0 * alpha * rho,
        sigma=lambda rho: 2.0 * rho * (1.0 - rho) * (1.0 + 4.0 * alpha * rho),
        f=_bernoulli_f,
        rho_domain=(0.0, 1.0),
        df=lambda rho: np.log(rho / (1.0 - rho)),
        d2f=lambda rho: 1.0 / (rho * (1.0 - rho)),
        dD=lambda rho: 4.0 * alpha + 0.0 * rho,
        dsigma=lambda rho: 2.0 * (1.0 + 8.0 * alpha * rho - 2.0 * rho - 12.0 * alpha * rho ** 2),
        d2sigma=lambda rho: 2.0 * (8.0 * alpha - 2.0 - 24.0 * alpha * rho),
        kirchhoff=lambda rho: rho + 2.0 * alpha * rho ** 2,
        kirchhoff_inverse=lambda phi: 2.0 * phi / (1.0 + np.sqrt(1.0 + 8.0 * alpha * phi)),
        params={"alpha": alpha},
    )


# Zero-range processes

@dataclass(frozen=True)
class ZrpThermodynamics:
    rho: float
    z: float
    f: float
    df: float
    d2f: float
    D: float
    sigma: float


class ZeroRangeModel:
    """
    Zero-range process with departure rates u(n), n >= 1.

    The rate table is either a list (extended by its last entry) or a
    callable. Grand-canonical sums over v(m) z^m with v(m) = v(m-1)/u(m) are
    evaluated in log space and truncated adaptively up to 10^4 terms.
    """

    N_MAX = 10_000
    TAIL_TOL = 1e-14
    _TRUNCATIONS = (64, 256, 1024, 4096, N_MAX)

    def __init__(self, u: Union[Sequence[float], Callable[[int], float]], name="zrp"):
        self.name = name
        if callable(u):
            rates = np.array([float(u(n)) for n in range(1, self.N_MAX + 1)])
            self.table = None
        else:
            table = [float(v) for v in u]
            if not table:
                raise DimensionMismatch("empty zero-range rate table")
            self.table = table
            rates = np.array(table[: self.N_MAX] + [table[-1]] * max(0, self.N_MAX - len(table)))
        if np.any(~np.isfinite(rates)) or np.any(rates <= 0):
            raise NegativeRate("zero-range rates u(n) must be positive")
        self.rates = rates
        self.log_v = np.concatenate([[0.0], -np.cumsum(np.log(rates))])
        self.fugacity = lru_cache(maxsize=8192)(self._solve_fugacity)

    def u(self, n) -> float:
        return float(self.rates[int(n) - 1])

    def series(self, log_z: float):
        """
        (log Z, mean occupation, variance) of the single-site grand-canonical
        measure at fugacity e^log_z.
        """
        for n_max in self._TRUNCATIONS:
            m = np.arange(n_max + 1, dtype=float)
            terms = self.log_v[: n_max + 1] + m * log_z
            log_z_sum = special.logsumexp(terms)
            weights = np.exp(terms - log_z_sum)
            if weights[-1] < self.TAIL_TOL and terms[-1] < terms[-2]:
                mean = float(weights @ m)
                var = float(weights @ (m - mean) ** 2)
                return float(log_z_sum), mean, var
        raise OutsideConvergence(f"fugacity {np.exp(log_z):.6g} outside the radius of convergence")

    def density(self, z: float) -> float:
        return 0.0 if z == 0 else self.series(np.log(z))[1]

    def _solve_fugacity(self, rho: float) -> float:
        if rho < 0:
            raise DomainViolation(f"negative density {rho}")
        if rho == 0:
            return 0.0

        def excess(log_z):
            return self.series(log_z)[1] - rho

        def too_high(log_z):
            try:
                return excess(log_z) > 0
            except OutsideConvergence:
                return True

        lo = np.log(rho * self.rates[0]) - 1.0
        while too_high(lo):
            lo -= 2.0
        step, hi = 1.0, lo + 1.0
        good = lo
        for _ in range(200):
            try:
                above = excess(hi) > 0
            except OutsideConvergence:
                step *= 0.5
                if step < 1e-13:
                    raise OutsideConvergence(f"density {rho} beyond the maximal grand-canonical density")
                hi = good + step
                continue
            if above:
                break
            good, hi = hi, hi + step
            step *= 2.0
        else:
            raise OutsideConvergence(f"density {rho} not reached")
        log_z = optimize.brentq(excess, good, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        return float(np.exp(log_z))

    def thermodynamics(self, rho: float) -> ZrpThermodynamics:
        """f, f', f'', D = f'' e^f', sigma = 2 e^f' at density rho."""
        rho = float(rho)
        z = self.fugacity(rho)
        if z == 0.0:
            return ZrpThermodynamics(0.0, 0.0, 0.0, -np.inf, np.inf, self.rates[0], 0.0)
        log_z_sum, _, var = self.series(np.log(z))
        log_z = np.log(z)
        return ZrpThermodynamics(
            rho=rho, z=z, f=rho * log_z - log_z_sum, df=log_z, d2f=1.0 / var,
            D=z / var, sigma=2.0 * z,
        )

    def canonical_partition(self, L: int, N: int) -> float:
        """Z_L(N) by the recursion Z_l(N) = sum_m v(m) Z_{l-1}(N-m)."""
        v = np.exp(self.log_v[: N + 1])
        z = v.copy()
        for _ in range(L - 1):
            z = np.convolve(z, v)[: N + 1]
        return float(z[N])

    def mean_departure_rate(self, L: int, N: int) -> float:
        """Canonical <u(n)> = Z_L(N-1)/Z_L(N); tends to the fugacity."""
        return self.canonical_partition(L, N - 1) / self.canonical_partition(L, N)

    def transport_model(self) -> TransportModel:
        def field_of(name):
            return np.vectorize(lambda rho: getattr(self.thermodynamics(rho), name), otypes=[float])

        return TransportModel(
            self.name,
            D=field_of("D"),
            sigma=field_of("sigma"),
            f=field_of("f"),
            rho_domain=(0.0, np.inf),
            df=field_of("df"),
            d2f=field_of("d2f"),
            kirchhoff=field_of("z"),
            kirchhoff_inverse=np.vectorize(self.density, otypes=[float]),
            params={"u": self.table},
        )


@dataclass(frozen=True)
class ZrpRingParams:
    """Zero-range process with N particles on a ring of L sites."""

    L: int
    n_particles: int
    u: tuple = (1.0,)

    def __post_init__(self):
        if self.L < 2 or not 0 <= self.n_particles:
            raise DomainViolation("zero-range ring needs L >= 2 and N >= 0")
        if any(v <= 0 for v in self.u):
            raise NegativeRate("zero-range rates u(n) must be positive")

    def rate(self, n: int) -> float:
        return 0.0 if n == 0 else float(self.u[min(n, len(self.u)) - 1])


def transport_catalogue(name: str, **params) -> TransportModel:
    """
    Named transport model: ssep, kmp, free, alpha_model(alpha) or zrp(u).

    Raises:
        UnknownModel
    """
    if name == "ssep":
        return _ssep_model()
    if name == "kmp":
        return _kmp_model()
    if name == "free":
        return _free_model()
    if name == "alpha_model":
        return _alpha_model(params.get("alpha", 0.0))
    if name == "zrp":
        return ZeroRangeModel(params.get("u", [1.0])).transport_model()
    raise UnknownModel(f"Unknown transport model: {name}, available: ssep, kmp, free, alpha_model, zrp")


def zrp_thermodynamics(u, rho: float) -> ZrpThermodynamics:
    model = u if isinstance(u, ZeroRangeModel) else ZeroRangeModel(u)
    return model.thermodynamics(rho)


# Model blocks

MICROSCOPIC_MODELS = ("ssep", "asep", "ssep_ring", "quantum_dot", "two_level", "zrp_ring")


def model_from_spec(block: dict):
    """
    Resolve a model block.

    Returns SsepParams, ZrpRingParams, MarkovGenerator or TransportModel for
    blocks such as {"model": "ssep", "L": 4, "rates": [1, 0, 1, 0]},
    {"transport": "kmp"} or a full generator document.
    """
    if "transport" in block:
        params = {k: v for k, v in block.items() if k != "transport"}
        return transport_catalogue(block["transport"], **params)
    if "n_states" in block:
        return generator_from_dict(block)
    name = block.get("model")
    if name in ("ssep", "asep"):
        r = float(block.get("r", 1.0))
        if name == "asep" and "r" not in block:
            raise InputError("asep needs an asymmetry 'r'")
        return SsepParams.from_rates(block["L"], block["rates"], r)
    if name == "quantum_dot":
        return SsepParams.from_rates(1, block["rates"])
    if name == "ssep_ring":
        return SsepParams(int(block["L"]), r=float(block.get("r", 1.0)), geometry="ring",
                          n_particles=int(block["N"]))
    if name == "two_level":
        return two_level_multibath(block.get("temperatures", (1.0, 1.1, 0.9)),
                                   block.get("gap", 1.0), block.get("coupling", 1.0))
    if name == "zrp_ring":
        return ZrpRingParams(int(block["L"]), int(block["N"]), tuple(block.get("u", (1.0,))))
    raise UnknownModel(f"Unknown model block: {block}")


def generator_for(model) -> MarkovGenerator:
    """Finite generator of a resolved microscopic model."""
    if isinstance(model, MarkovGenerator):
        return model
    if isinstance(model, SsepParams):
        return ssep_generator(model)
    raise InputError(f"{type(model).__name__} has no finite generator")
