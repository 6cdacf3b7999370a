"""
Macroscopic fluctuation theory on a TransportModel (D, sigma, f).

Covers steady profiles and currents between two reservoirs, the Gaussian
covariance of density fluctuations, current large deviations under the
additivity principle, the ring dynamical phase transition, density large
deviation functionals and residual/action checks of optimal trajectories.
Densities live on the uniform grid x_k = k/n of [0, 1].
"""
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from joblib import Parallel, delayed
from scipy import integrate, linalg, optimize, special

from src.exceptions import (
    BranchUnavailable,
    DomainViolation,
    GridMismatch,
    NonMonotoneF,
    QOutOfReach,
    SolverSingular,
)
from src.lattice_models import TransportModel, ZeroRangeModel, transport_catalogue
from src.markov_core import RateCurve
from src.numerics import banded_newton, quad, quad_sqrt_endpoints, richardson, simpson_2d
from src.tables import kernel_frame, profile_frame

logger = logging.getLogger(__name__)

MIN_GRID = 16
MAX_COVARIANCE_GRID = 512
MIN_TRAJECTORY_GRID = 32
BVP_TOL = 1e-10
BVP_MAX_ITER = 200
# K = K_min (1 - w) on the monotone branch; w is searched in log scale down to this floor
MONOTONE_W_FLOOR = 1e-20
RING_POINTS = 256
RING_EPS = 1e-3
RING_Q_CAP = 1e4

ProfileLike = Union["DensityProfile", np.ndarray, Sequence[float], Callable]


# Domain types

def uniform_grid(n: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, int(n) + 1)


@dataclass(frozen=True, eq=False)
class DensityProfile:
    """rho(x_k) on n+1 uniform points of [0, 1] with reservoir densities."""

    x: np.ndarray
    values: np.ndarray
    rho1: float
    rho2: float

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if x.shape != values.shape or x.ndim != 1:
            raise GridMismatch("profile grid and values differ in shape")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.x.size - 1

    @property
    def h(self) -> float:
        return 1.0 / self.n

    def __call__(self, y):
        return np.interp(y, self.x, self.values)

    def to_frame(self, label="rho"):
        return profile_frame(self.x, self.values, label)


@dataclass(frozen=True, eq=False)
class TrajectoryGrid:
    """
    Space-time fields on x (n+1 points) times tau (m+1 points).

    ``rho``, ``H`` and ``j`` have shape (m+1, n+1); H and j are optional.
    """

    x: np.ndarray
    tau: np.ndarray
    rho: np.ndarray
    H: Optional[np.ndarray] = None
    j: Optional[np.ndarray] = None
    rho1: Optional[float] = None
    rho2: Optional[float] = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        tau = np.asarray(self.tau, dtype=float)
        shape = (tau.size, x.size)
        for name in ("rho", "H", "j"):
            value = getattr(self, name)
            if value is None:
                continue
            value = np.asarray(value, dtype=float)
            if value.shape != shape:
                raise GridMismatch(f"{name} has shape {value.shape}, expected {shape}")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "tau", tau)

    @property
    def n(self) -> int:
        return self.x.size - 1

    @property
    def m(self) -> int:
        return self.tau.size - 1

    def final_profile(self) -> DensityProfile:
        return DensityProfile(self.x, self.rho[-1], self.rho[-1, 0], self.rho[-1, -1])


@dataclass(frozen=True)
class RateFunctionBranch:
    q: float
    value: float
    branch: str
    parameter: float


@dataclass(frozen=True, eq=False)
class CovarianceResult:
    """
    Discrete stationary covariance L<drho_k drho_l> on interior nodes.

    ``full`` includes the local delta part (weights/h on the diagonal);
    ``long_range`` is the smooth part with its diagonal interpolated.
    """

    x: np.ndarray
    full: np.ndarray
    long_range: np.ndarray
    local_weights: np.ndarray
    h: float

    def value_at(self, x, y) -> float:
        i = int(round(x / self.h)) - 1
        k = int(round(y / self.h)) - 1
        if not (0 <= i < self.x.size and 0 <= k < self.x.size):
            raise GridMismatch(f"({x}, {y}) is not an interior grid point")
        return float(self.long_range[i, k])

    def to_frame(self):
        return kernel_frame(self.x, self.long_range)


@dataclass(frozen=True)
class RingInstability:
    rho_bar: float
    stable: bool
    q_c: Optional[float] = None
    v_c: Optional[float] = None
    boxed_q_c: Optional[float] = None


def _as_model(model) -> TransportModel:
    if isinstance(model, TransportModel):
        return model
    if isinstance(model, str):
        return transport_catalogue(model)
    raise DomainViolation(f"not a transport model: {model!r}")


def _profile_arrays(profile: ProfileLike, n: Optional[int] = None):
    if isinstance(profile, DensityProfile):
        return profile.x, profile.values
    if callable(profile):
        x = uniform_grid(n or MIN_GRID * 8)
        return x, np.asarray(profile(x), dtype=float) * np.ones_like(x)
    values = np.asarray(profile, dtype=float)
    if values.ndim != 1 or values.size < 3:
        raise GridMismatch("profile must be a 1-d array of at least 3 grid values")
    return uniform_grid(values.size - 1), values


def _simpson(values, x) -> float:
    return float(integrate.simpson(values, x=x))


# Steady state

def steady_current(model: TransportModel, rho1: float, rho2: float) -> float:
    """j* = integral of D from rho2 to rho1."""
    model = _as_model(model)
    model.check_domain([rho1, rho2], "reservoir density")
    if rho1 == rho2:
        return 0.0
    if model.kirchhoff is not None:
        return float(model.kirchhoff(rho1) - model.kirchhoff(rho2))
    return quad(model.D, rho2, rho1)


def steady_density(model: TransportModel, rho1: float, rho2: float, x, current=None) -> np.ndarray:
    """rho*(x) solving x j* = integral of D from rho*(x) to rho1."""
    model = _as_model(model)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if rho1 == rho2:
        return np.full_like(x, rho1)
    j = steady_current(model, rho1, rho2) if current is None else current
    if model.kirchhoff is not None and model.kirchhoff_inverse is not None:
        logger.debug("steady profile from the Kirchhoff potential of %s", model.name)
        values = np.asarray(model.kirchhoff_inverse(model.kirchhoff(rho1) - x * j), dtype=float)
    else:
        lo, hi = min(rho1, rho2), max(rho1, rho2)
        values = np.array([
            optimize.brentq(lambda r: quad(model.D, r, rho1) - xk * j, lo, hi, xtol=1e-15)
            for xk in x
        ])
    values = np.where(x <= 0.0, rho1, np.where(x >= 1.0, rho2, values))
    return np.clip(values, min(rho1, rho2), max(rho1, rho2))


def steady_profile(model: TransportModel, rho1: float, rho2: float, n: int = 128):
    """
    Steady density profile and current between two reservoirs.

    Args:
        model: transport model (or catalogue name)
        rho1: left reservoir density
        rho2: right reservoir density
        n: number of grid cells (n >= 16)

    Returns:
        (DensityProfile, j*)

    Raises:
        DomainViolation, GridMismatch
    """
    model = _as_model(model)
    if n < MIN_GRID:
        raise GridMismatch(f"steady profile needs n >= {MIN_GRID}, got {n}")
    j = steady_current(model, rho1, rho2)
    x = uniform_grid(n)
    values = steady_density(model, rho1, rho2, x, j)
    return DensityProfile(x, values, rho1, rho2), j


# Gaussian fluctuations

def covariance(model: TransportModel, rho1: float, rho2: float, n: int = 128) -> CovarianceResult:
    """
    Stationary covariance of the linearized fluctuating hydrodynamics.

    A = d^2/dx^2 (D(rho*) .) on interior nodes with Dirichlet conditions and
    noise d/dx (sqrt(sigma) eta) on cell midpoints; A C + C A^T + Q = 0 is
    solved as a continuous Lyapunov equation.

    Raises:
        GridMismatch, SolverSingular
    """
    model = _as_model(model)
    if n > MAX_COVARIANCE_GRID:
        raise GridMismatch(f"covariance grid limited to n <= {MAX_COVARIANCE_GRID}, got {n}")
    if n < 4:
        raise GridMismatch("covariance needs at least 4 cells")
    h = 1.0 / n
    x = uniform_grid(n)
    rho_nodes = steady_density(model, rho1, rho2, x)
    rho_mid = steady_density(model, rho1, rho2, 0.5 * (x[1:] + x[:-1]))
    inner = rho_nodes[1:-1]
    m = n - 1

    lap = (np.diag(np.full(m, -2.0)) + np.diag(np.ones(m - 1), 1) + np.diag(np.ones(m - 1), -1)) / h ** 2
    a = lap * np.asarray(model.D(inner), dtype=float)[None, :]
    grad = np.zeros((m, n))
    grad[np.arange(m), np.arange(1, n)] = -1.0 / h
    grad[np.arange(m), np.arange(m)] = 1.0 / h
    q = (grad * (np.asarray(model.sigma(rho_mid), dtype=float) / h)[None, :]) @ grad.T

    try:
        c = linalg.solve_continuous_lyapunov(a, -q)
    except (linalg.LinAlgError, ValueError) as e:
        raise SolverSingular(f"Lyapunov solve failed: {e}") from e
    if not np.all(np.isfinite(c)):
        raise SolverSingular("Lyapunov solve returned non-finite covariance")
    c = 0.5 * (c + c.T)

    weights = np.asarray(model.sigma(inner), dtype=float) / (2.0 * np.asarray(model.D(inner), dtype=float))
    smooth = c - np.diag(weights / h)
    diag = np.empty(m)
    diag[1:-1] = 0.5 * (np.diag(smooth, 1)[1:] + np.diag(smooth, -1)[:-1])
    diag[0] = smooth[0, 1]
    diag[-1] = smooth[-1, -2]
    np.fill_diagonal(smooth, diag)
    logger.debug("covariance n=%d: max |long range| %.3e", n, float(np.max(np.abs(smooth))))
    return CovarianceResult(x=x[1:-1], full=c, long_range=smooth, local_weights=weights, h=h)


def covariance_green_series(rho1: float, rho2: float, x: float, y: float, modes: int = 200) -> float:
    """SSEP long-range correlation from the sine series of the Dirichlet Green function."""
    k = np.arange(1, modes + 1) * np.pi
    return float(-2.0 * (rho1 - rho2) ** 2 * np.sum(np.sin(k * x) * np.sin(k * y) / k ** 2))


def number_variance(model: TransportModel, rho1: float, rho2: float, method: str = "auto",
                    n: int = 256) -> float:
    """Var(N)/L: local integral of sigma/(2D) plus the double integral of the long-range part."""
    model = _as_model(model)
    if method == "auto":
        method = "closed" if model.name == "ssep" else "numeric"
    if method == "closed":
        if model.name != "ssep":
            raise DomainViolation("closed-form number variance is SSEP only")
        return float((rho1 + rho2) / 2.0 - (rho1 ** 2 + rho1 * rho2 + rho2 ** 2) / 3.0
                     - (rho1 - rho2) ** 2 / 12.0)
    def weight(t):
        rho = steady_density(model, rho1, rho2, t)[0]
        return float(model.sigma(rho)) / (2.0 * float(model.D(rho)))

    local = quad(weight, 0.0, 1.0, epsabs=1e-11, epsrel=1e-10)
    result = covariance(model, rho1, rho2, n)
    return float(local + result.h ** 2 * np.sum(result.long_range))


def gaussian_density_ldf(result: CovarianceResult, delta) -> float:
    """1/2 delta^T C^-1 delta on interior nodes."""
    delta = np.asarray(delta, dtype=float)
    if delta.size == result.x.size + 2:
        delta = delta[1:-1]
    if delta.size != result.x.size:
        raise GridMismatch("perturbation does not match the covariance grid")
    return float(0.5 * delta @ linalg.solve(result.full, delta, assume_a="sym"))


# Current large deviations (additivity principle)

def _sigma_max(model, lo, hi):
    sigma = lambda r: float(model.sigma(r))
    res = optimize.minimize_scalar(lambda r: -sigma(r), bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-12})
    s_hi, s_lo, s_in = sigma(hi), sigma(lo), sigma(float(res.x))
    if s_hi >= s_in - 1e-13 * abs(s_in) and s_hi >= s_lo:
        return hi, s_hi
    if s_lo >= s_in - 1e-13 * abs(s_in):
        return lo, s_lo
    return float(res.x), s_in


class _Additivity:
    """Parametric current rate function for rho_hi > rho_lo (left to right current)."""

    def __init__(self, model: TransportModel, rho_hi: float, rho_lo: float):
        self.model = model
        self.hi, self.lo = rho_hi, rho_lo
        self.rho_max, self.sigma_max = _sigma_max(model, rho_lo, rho_hi)
        self.k_min = -1.0 / (2.0 * self.sigma_max)
        self.j_star = steady_current(model, rho_hi, rho_lo)
        self.interior_max = self.lo < self.rho_max < self.hi

    def _D(self, r):
        return float(self.model.D(r))

    def _sigma(self, r):
        return float(self.model.sigma(r))

    def _integrate(self, g):
        return quad_sqrt_endpoints(g, self.lo, self.hi, split=self.rho_max)

    def _s2(self, r, w=None, K=None):
        sigma = self._sigma(r)
        if K is not None:
            return 1.0 + 2.0 * K * sigma
        return max(self.sigma_max - sigma, 0.0) / self.sigma_max + w * sigma / self.sigma_max

    def evaluate(self, w=None, K=None):
        """(q, I) at K, or at K = K_min (1 - w) when w is given."""
        if K is None:
            K = self.k_min * (1.0 - w)

        def q_integrand(r):
            return self._D(r) / np.sqrt(self._s2(r, w, K if w is None else None))

        def i_integrand(r):
            sigma = self._sigma(r)
            s = np.sqrt(self._s2(r, w, K if w is None else None))
            return self._D(r) * K * K * sigma / (s * (1.0 + K * sigma + s))

        q = self._integrate(q_integrand)
        return q, q * self._integrate(i_integrand)

    def saturation(self) -> float:
        if self.interior_max:
            return np.inf
        return self.evaluate(w=0.0)[0]

    def zero_current(self) -> float:
        return self._integrate(lambda r: self._D(r) / np.sqrt(2.0 * self._sigma(r))) ** 2

    def solve_monotone(self, q: float):
        """K and I for 0 < q on the monotone branch; None when q is beyond its reach."""
        if q == self.j_star:
            return 0.0, 0.0
        if q > self.j_star:
            t_floor = np.log(MONOTONE_W_FLOOR)
            if self.evaluate(w=MONOTONE_W_FLOOR)[0] <= q:
                return None
            t = optimize.brentq(lambda t: self.evaluate(w=np.exp(t))[0] - q, t_floor, 0.0,
                                xtol=1e-14, rtol=4 * np.finfo(float).eps)
            w = np.exp(t)
            return self.k_min * (1.0 - w), self.evaluate(w=w)[1]
        k_hi = 1.0
        while self.evaluate(K=k_hi)[0] > q:
            k_hi *= 4.0
            if k_hi > 1e14:
                return None
        K = optimize.brentq(lambda k: self.evaluate(K=k)[0] - q, 0.0, k_hi,
                            xtol=1e-15, rtol=4 * np.finfo(float).eps)
        return K, self.evaluate(K=K)[1]

    def negative_extra(self) -> float:
        """2 |q|-coefficient of the reversed-current cost, 2 * integral of D/sigma."""
        if self._sigma(self.lo) <= 0 or self._sigma(self.hi) <= 0:
            raise QOutOfReach("negative currents unreachable with a reservoir at zero mobility")
        return 2.0 * quad(lambda r: self._D(r) / self._sigma(r), self.lo, self.hi)

    # non-monotone profiles overshoot the reservoir where sigma is largest

    def nonmonotone_setup(self):
        if self.interior_max:
            return None
        model = self.model
        dom_lo, dom_hi = model.rho_domain
        if self.rho_max == self.hi and float(model.sigma_prime(self.hi)) > 0:
            start, direction = self.hi, 1.0
            cap = dom_hi if np.isfinite(dom_hi) else self.hi + 100.0 * max(1.0, abs(self.hi))
        elif self.rho_max == self.lo and float(model.sigma_prime(self.lo)) < 0:
            start, direction = self.lo, -1.0
            cap = dom_lo if np.isfinite(dom_lo) else self.lo - 100.0 * max(1.0, abs(self.lo))
        else:
            return None
        grid = np.linspace(start, cap, 2001)[1:]
        slope = np.array([float(model.sigma_prime(r)) for r in grid]) * direction
        stop = np.nonzero(slope <= 0)[0]
        if stop.size:
            k = stop[0]
            a = start if k == 0 else grid[k - 1]
            end = optimize.brentq(lambda r: float(model.sigma_prime(r)), a, grid[k], xtol=1e-14) \
                if slope[k] < 0 else grid[k]
        else:
            end = cap
        return start, end, direction

    def evaluate_nonmonotone(self, rho0: float, direction: float):
        sigma0 = self._sigma(rho0)
        K = -1.0 / (2.0 * sigma0)
        near = self.hi if direction > 0 else self.lo

        def s_of(r):
            return np.sqrt(max(sigma0 - self._sigma(r), 0.0) / sigma0)

        def q_integrand(r):
            return self._D(r) / s_of(r)

        def descending(r):
            sigma, s = self._sigma(r), s_of(r)
            return self._D(r) * K * K * sigma / (s * (1.0 + K * sigma + s))

        def rising(r):
            sigma, s = self._sigma(r), s_of(r)
            return self._D(r) / sigma * ((1.0 + K * sigma) / s + 1.0)

        far_lo, far_hi = (self.lo, rho0) if direction > 0 else (rho0, self.hi)
        q = quad_sqrt_endpoints(q_integrand, far_lo, far_hi)
        q += abs(quad_sqrt_endpoints(q_integrand, near, rho0))
        value = quad_sqrt_endpoints(descending, far_lo, far_hi)
        value += abs(quad_sqrt_endpoints(rising, near, rho0))
        return q, q * value

    def solve_nonmonotone(self, q: float):
        setup = self.nonmonotone_setup()
        if setup is None:
            raise BranchUnavailable(
                f"{self.model.name}: no non-monotone branch for ({self.hi}, {self.lo})")
        start, end, direction = setup
        lo_q = self.evaluate_nonmonotone(start, direction)[0]
        if q < lo_q:
            return None
        r_hi = None
        for k in range(1, 60):
            trial = start + (end - start) * (1.0 - 2.0 ** (-k))
            if self.evaluate_nonmonotone(trial, direction)[0] > q:
                r_hi = trial
                break
        if r_hi is None:
            raise QOutOfReach(f"q={q} beyond the non-monotone branch of {self.model.name}")
        rho0 = optimize.brentq(lambda r: self.evaluate_nonmonotone(r, direction)[0] - q, start, r_hi,
                               xtol=1e-15, rtol=4 * np.finfo(float).eps)
        return rho0, self.evaluate_nonmonotone(rho0, direction)[1]


def additivity_rate_function(model: TransportModel, rho1: float, rho2: float, q: Optional[float] = None,
                             K: Optional[float] = None, branch: str = "auto") -> RateFunctionBranch:
    """
    Current large deviation function I(q) under the additivity principle.

    The monotone branch is parametrized by K with
    q = int D / sqrt(1 + 2 K sigma) and
    I = q int D/sigma [(1 + K sigma)/sqrt(1 + 2 K sigma) - 1]; beyond its
    saturation the non-monotone branch is parametrized by the overshoot
    density rho0 with K = -1/(2 sigma(rho0)). ``rho1 < rho2`` uses the
    mirror identity I(q; rho1, rho2) = I(-q; rho2, rho1).

    Args:
        model: transport model
        rho1: left reservoir density
        rho2: right reservoir density
        q: current (time-integrated current per unit time, L-scaled)
        K: evaluate the monotone branch directly at this parameter
        branch: "auto", "monotonic" or "nonmonotonic"

    Returns:
        RateFunctionBranch

    Raises:
        BranchUnavailable, QOutOfReach, DomainViolation
    """
    model = _as_model(model)
    model.check_domain([rho1, rho2], "reservoir density")
    if K is not None:
        if rho1 <= rho2:
            raise DomainViolation("K parametrization needs rho1 > rho2")
        solver = _Additivity(model, rho1, rho2)
        if 1.0 + 2.0 * K * solver.sigma_max <= 0:
            raise QOutOfReach(f"K={K} below the branch limit {solver.k_min}")
        q_k, value = solver.evaluate(K=K)
        return RateFunctionBranch(q_k, value, "monotonic", K)
    if q is None:
        raise DomainViolation("additivity needs q or K")
    q = float(q)
    if rho1 == rho2:
        return RateFunctionBranch(q, q * q / (2.0 * float(model.sigma(rho1))), "flat", 0.0)
    if rho1 < rho2:
        mirrored = additivity_rate_function(model, rho2, rho1, -q, branch=branch)
        return RateFunctionBranch(q, mirrored.value, mirrored.branch, mirrored.parameter)

    solver = _Additivity(model, rho1, rho2)
    if q == 0.0:
        return RateFunctionBranch(0.0, solver.zero_current(), "monotonic", np.inf)
    sign_extra = 0.0
    if q < 0:
        sign_extra = solver.negative_extra()
    size = abs(q)

    candidates = []
    if branch in ("auto", "monotonic"):
        mono = solver.solve_monotone(size)
        if mono is not None:
            candidates.append(RateFunctionBranch(q, mono[1], "monotonic", mono[0]))
        elif branch == "monotonic":
            raise QOutOfReach(f"q={q} beyond the monotone branch (saturation {solver.saturation():.12g})")
    if branch in ("auto", "nonmonotonic"):
        try:
            nonmono = solver.solve_nonmonotone(size)
        except BranchUnavailable:
            if branch == "nonmonotonic":
                raise
            nonmono = None
        if nonmono is not None:
            rho0, value = nonmono
            candidates.append(RateFunctionBranch(q, value, f"nonmonotonic(rho0={rho0:.12g})", rho0))
    if not candidates:
        raise QOutOfReach(f"q={q} is reached by no branch of {model.name} between {rho1} and {rho2}")
    best = min(candidates, key=lambda c: c.value)
    logger.debug("additivity q=%.6g: %d candidate branch(es), chose %s", q, len(candidates), best.branch)
    if sign_extra:
        best = RateFunctionBranch(q, best.value + size * sign_extra, best.branch, best.parameter)
    return best


def saturation_current(model: TransportModel, rho1: float, rho2: float) -> float:
    """Largest |q| reached by monotone profiles (inf when sigma peaks inside)."""
    model = _as_model(model)
    hi, lo = max(rho1, rho2), min(rho1, rho2)
    if hi == lo:
        return np.inf
    return _Additivity(model, hi, lo).saturation()


def additivity_cumulants(model: TransportModel, rho1: float, rho2: float, order: int = 3):
    """
    L-scaled cumulant rates from S_n = int sigma^(n-1) D over [rho2, rho1].

    Returns [S1, S2/S1, 3(S1 S3 - S2^2)/S1^3] truncated to ``order``.
    """
    model = _as_model(model)
    model.check_domain([rho1, rho2], "reservoir density")
    if rho1 == rho2:
        return [0.0, float(model.sigma(rho1)), 0.0][:order]
    s = [quad(lambda r, k=k: float(model.sigma(r)) ** k * float(model.D(r)), rho2, rho1)
         for k in range(3)]
    s1, s2, s3 = s
    return [s1, s2 / s1, 3.0 * (s1 * s3 - s2 * s2) / s1 ** 3][:order]


def additivity_expansion(model: TransportModel, rho1: float, rho2: float, q: float) -> float:
    """Two-term expansion of I(q) around j* = S1."""
    model = _as_model(model)
    s1, s2, s3 = (quad(lambda r, k=k: float(model.sigma(r)) ** k * float(model.D(r)), rho2, rho1)
                  for k in range(3))
    d = q - s1
    return float(s1 * d ** 2 / (2.0 * s2) + (s2 ** 2 - s1 * s3) * d ** 3 / (2.0 * s2 ** 3))


def additivity_variational(model: TransportModel, rho1: float, rho2: float, q: float,
                           n_cells: int = 64) -> float:
    """
    Direct minimization of the time-independent Lagrangian
    int (q + D rho')^2 / (2 sigma) dx over piecewise-linear profiles.

    Cells use midpoint densities; the interior nodes are optimized with
    L-BFGS-B inside the model's density domain.
    """
    model = _as_model(model)
    h = 1.0 / n_cells
    dom_lo, dom_hi = model.rho_domain
    pad = 1e-9

    def full(inner):
        return np.concatenate(([rho1], inner, [rho2]))

    def cost(inner):
        rho = full(inner)
        delta = np.diff(rho)
        mid = 0.5 * (rho[1:] + rho[:-1])
        D, dD = np.asarray(model.D(mid), float), np.asarray(model.D_prime(mid), float)
        sigma, dsigma = np.asarray(model.sigma(mid), float), np.asarray(model.sigma_prime(mid), float)
        u = q + D * delta / h
        value = h * np.sum(u * u / (2.0 * sigma))
        common = u * dD * delta / (2.0 * h) / sigma - u * u * dsigma / (4.0 * sigma ** 2)
        d_right = h * (common + u * D / (h * sigma))
        d_left = h * (common - u * D / (h * sigma))
        grad = d_right[:-1] + d_left[1:]
        return value, grad

    bounds = [(dom_lo + pad if np.isfinite(dom_lo) else None,
               dom_hi - pad if np.isfinite(dom_hi) else None)] * (n_cells - 1)
    x0 = steady_density(model, rho1, rho2, uniform_grid(n_cells))[1:-1]
    res = optimize.minimize(cost, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                            options={"maxiter": 20000, "ftol": 1e-16, "gtol": 1e-12, "maxcor": 30})
    logger.debug("variational q=%.4g n=%d: %s after %d iterations", q, n_cells, res.message, res.nit)
    return float(res.fun)


def _lower_convex_envelope(x, y):
    hull = []
    for i in range(len(x)):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (x[b] - x[a]) * (y[i] - y[a]) - (y[b] - y[a]) * (x[i] - x[a])
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return np.interp(x, x[hull], y[hull])


def additivity_curve(model: TransportModel, rho1: float, rho2: float, q_values,
                     convex_envelope: bool = False, n_jobs: int = 1) -> RateCurve:
    """I(q) on a q-grid with branch tags, optionally replaced by its lower convex envelope."""
    model = _as_model(model)
    qs = np.unique(np.asarray(q_values, dtype=float))
    results = Parallel(n_jobs=n_jobs)(
        delayed(additivity_rate_function)(model, rho1, rho2, q) for q in qs
    )
    values = np.array([r.value for r in results])
    tags = [r.branch for r in results]
    if convex_envelope and qs.size > 2:
        envelope = _lower_convex_envelope(qs, values)
        changed = np.nonzero(values - envelope > 1e-12)[0]
        if changed.size:
            logger.info("convex envelope changed %d sample(s) at q=%s", changed.size,
                        ", ".join(f"{qs[k]:.6g}" for k in changed))
            for k in changed:
                tags[k] = "envelope"
        values = envelope
    return RateCurve(qs, values, "rate_function", tuple(tags))


# Ring dynamical phase transition

def ring_instability_threshold(model: TransportModel, rho_bar: float) -> RingInstability:
    """
    Current above which a travelling density mode lowers the ring cost.

    q_c = sqrt(8 pi^2 sigma D^2 / sigma'') when sigma'' > 0, otherwise the
    flat profile is stable at every current.
    """
    model = _as_model(model)
    model.check_domain(rho_bar)
    sigma = float(model.sigma(rho_bar))
    d2sigma = float(model.sigma_second(rho_bar))
    D = float(model.D(rho_bar))
    if d2sigma <= 0:
        return RingInstability(rho_bar, stable=True)
    q_c = np.sqrt(8.0 * np.pi ** 2 * sigma * D ** 2 / d2sigma)
    boxed = np.sqrt(8.0 * np.pi ** 2 * sigma * D / d2sigma)
    if abs(D - 1.0) > 1e-12:
        logger.info("ring threshold at rho=%.6g: D^2 form q_c=%.12g, D form q_c=%.12g", rho_bar, q_c, boxed)
    v_c = q_c * float(model.sigma_prime(rho_bar)) / sigma
    return RingInstability(rho_bar, stable=False, q_c=float(q_c), v_c=float(v_c), boxed_q_c=float(boxed))


def _ring_excess(model, rho_bar, q, v, eps, n_points):
    theta = 2.0 * np.pi * np.arange(n_points) / n_points
    s = np.sin(theta)
    rho = rho_bar + eps * s
    j = q + eps * v * s
    flux = j + np.asarray(model.D(rho), float) * (2.0 * np.pi * eps * np.cos(theta))
    excess = flux ** 2 / (2.0 * np.asarray(model.sigma(rho), float)) - q * q / (2.0 * float(model.sigma(rho_bar)))
    return float(np.mean(excess)) / eps ** 2


def ring_quadratic_form(model: TransportModel, rho_bar: float, q: float, v: float,
                        eps: float = RING_EPS, n_points: int = RING_POINTS) -> float:
    """eps^2 coefficient of the cost change for rho = rho_bar + eps sin(2 pi x) moving at speed v."""
    model = _as_model(model)
    return richardson(_ring_excess(model, rho_bar, q, v, 2.0 * eps, n_points),
                      _ring_excess(model, rho_bar, q, v, eps, n_points))


def ring_optimal_drift(model: TransportModel, rho_bar: float, q: float, eps: float = RING_EPS):
    """Minimizing drift v and the minimal coefficient (the form is quadratic in v)."""
    model = _as_model(model)
    v0 = q * float(model.sigma_prime(rho_bar)) / float(model.sigma(rho_bar))
    c_minus, c_zero, c_plus = (ring_quadratic_form(model, rho_bar, q, v0 + dv, eps) for dv in (-1.0, 0.0, 1.0))
    curvature = c_plus - 2.0 * c_zero + c_minus
    v_star = v0 - (c_plus - c_minus) / (2.0 * curvature)
    c_min = c_zero - (c_plus - c_minus) ** 2 / (8.0 * curvature)
    return v_star, c_min


def ring_instability_scan(model: TransportModel, rho_bar: float, eps: float = RING_EPS) -> RingInstability:
    """Locate the sign change of the minimal single-mode coefficient in q."""
    model = _as_model(model)
    model.check_domain(rho_bar)

    def c_min(q):
        return ring_optimal_drift(model, rho_bar, q, eps)[1]

    q_hi = 1.0
    while c_min(q_hi) > 0:
        q_hi *= 2.0
        if q_hi > RING_Q_CAP:
            logger.debug("ring scan at rho=%.6g: no instability below q=%g", rho_bar, RING_Q_CAP)
            return RingInstability(rho_bar, stable=True)
    q_c = optimize.brentq(c_min, 0.0 if q_hi == 1.0 else q_hi / 2.0, q_hi, xtol=1e-13)
    v_c = ring_optimal_drift(model, rho_bar, q_c, eps)[0]
    return RingInstability(rho_bar, stable=False, q_c=float(q_c), v_c=float(v_c))


# Density large deviations

def equilibrium_density_ldf(model: TransportModel, rho_star: float, profile: ProfileLike,
                            n: Optional[int] = None) -> float:
    """int [f(rho) - f(rho*) - (rho - rho*) f'(rho*)] dx by composite Simpson."""
    model = _as_model(model)
    x, values = _profile_arrays(profile, n)
    model.check_domain(values, "profile")
    model.check_domain(rho_star, "equilibrium density")
    integrand = (np.asarray(model.f(values), float) - float(model.f(rho_star))
                 - (values - rho_star) * float(model.f_prime(rho_star)))
    return _simpson(integrand, x)


def zrp_density_ldf(u, rho1: float, rho2: float, profile: ProfileLike, n: Optional[int] = None) -> float:
    """Local density functional of a zero-range chain; e^{f'(rho*)} = z is linear in x."""
    zrp = u if isinstance(u, ZeroRangeModel) else ZeroRangeModel(u)
    x, values = _profile_arrays(profile, n)
    if np.any(values < 0):
        raise DomainViolation("zero-range densities must be non-negative")
    z = (1.0 - x) * zrp.fugacity(rho1) + x * zrp.fugacity(rho2)
    rho_star = np.array([zrp.density(zk) for zk in z])
    f = np.array([zrp.thermodynamics(r).f for r in values])
    f_star = np.array([zrp.thermodynamics(r).f for r in rho_star])
    integrand = f - f_star - (values - rho_star) * np.log(z)
    return _simpson(integrand, x)


def _interior_derivatives(F, h):
    d1 = (F[2:] - F[:-2]) / (2.0 * h)
    d2 = (F[2:] - 2.0 * F[1:-1] + F[:-2]) / h ** 2
    return d1, d2


def _monotone(F, rho1, rho2) -> bool:
    steps = np.diff(F)
    return bool(np.all(steps < 0) if rho1 > rho2 else np.all(steps > 0))


def _log_slope_integral(F, x, rho1, rho2):
    slope = np.gradient(F, x, edge_order=2) / (rho2 - rho1)
    if np.any(slope <= 0):
        raise NonMonotoneF("auxiliary function F is not strictly monotone")
    return np.log(slope)


def _solve_ssep_F(rho1, rho2, x, values, tol, max_iter):
    h = x[1] - x[0]
    rho = values[1:-1]

    def full(inner):
        return np.concatenate(([rho1], inner, [rho2]))

    def residual_and_jacobian(inner):
        F = full(inner)
        d1, d2 = _interior_derivatives(F, h)
        g = inner * (1.0 - inner)
        res = g * d2 - (rho - inner) * d1 ** 2
        diag = (1.0 - 2.0 * inner) * d2 - 2.0 * g / h ** 2 + d1 ** 2
        upper = g / h ** 2 - (rho - inner) * d1 / h
        lower = g / h ** 2 + (rho - inner) * d1 / h
        return res, (lower, diag, upper)

    def admissible(inner):
        return bool(np.all((inner > 0) & (inner < 1)))

    x0 = steady_density(transport_catalogue("ssep"), rho1, rho2, x)[1:-1]
    result = banded_newton(residual_and_jacobian, x0, tol=tol, max_iter=max_iter, admissible=admissible)
    logger.debug("F-equation solved in %d iterations (residual %.3e)", result.iterations, result.residual)
    return full(result.x)


def density_ldf_ssep(rho1: float, rho2: float, profile: ProfileLike, n: Optional[int] = None,
                     tol: float = BVP_TOL, max_iter: int = BVP_MAX_ITER):
    """
    Non-local density large deviation functional of the open SSEP.

    F solves rho = F + F(1-F) F''/F'^2 with F(0)=rho1, F(1)=rho2 (damped
    Newton from F = rho*), and the value is
    int [rho log(rho/F) + (1-rho) log((1-rho)/(1-F)) + log(F'/(rho2-rho1))] dx.

    Returns:
        (value, DensityProfile of F)

    Raises:
        DomainViolation, NewtonDiverged, NonMonotoneF
    """
    x, values = _profile_arrays(profile, n)
    if np.any(values < 0) or np.any(values > 1):
        raise DomainViolation("SSEP densities must lie in [0, 1]")
    if rho1 == rho2:
        value = equilibrium_density_ldf(transport_catalogue("ssep"), rho1, values)
        return value, DensityProfile(x, np.full_like(x, rho1), rho1, rho2)
    F = _solve_ssep_F(rho1, rho2, x, values, tol, max_iter)
    if not _monotone(F, rho1, rho2):
        raise NonMonotoneF("optimal F left the strictly monotone class")
    integrand = (special.rel_entr(values, F) + special.rel_entr(1.0 - values, 1.0 - F)
                 + _log_slope_integral(F, x, rho1, rho2))
    return _simpson(integrand, x), DensityProfile(x, F, rho1, rho2)


def _a_on_grid(A, x):
    if callable(A):
        return np.asarray(A(x), dtype=float) * np.ones_like(x)
    A = np.asarray(A, dtype=float)
    if A.ndim == 0:
        return np.full_like(x, float(A))
    if A.shape != x.shape:
        raise GridMismatch("tilt profile does not match the grid")
    return A


def _solve_ssep_G(rho1, rho2, x, A, tol, max_iter):
    h = x[1] - x[0]
    c = np.expm1(A)[1:-1]

    def full(inner):
        return np.concatenate(([rho1], inner, [rho2]))

    def residual_and_jacobian(inner):
        F = full(inner)
        d1, d2 = _interior_derivatives(F, h)
        a = 1.0 + c * inner
        res = a * d2 - c * d1 ** 2
        diag = c * d2 - 2.0 * a / h ** 2
        upper = a / h ** 2 - c * d1 / h
        lower = a / h ** 2 + c * d1 / h
        return res, (lower, diag, upper)

    def admissible(inner):
        return bool(np.all((inner > 0) & (inner < 1) & (1.0 + c * inner > 0)))

    x0 = steady_density(transport_catalogue("ssep"), rho1, rho2, x)[1:-1]
    result = banded_newton(residual_and_jacobian, x0, tol=tol, max_iter=max_iter, admissible=admissible)
    logger.debug("G-equation solved in %d iterations (residual %.3e)", result.iterations, result.residual)
    return full(result.x)


def density_scgf_ssep(rho1: float, rho2: float, A, n: int = 128, tol: float = BVP_TOL,
                      max_iter: int = BVP_MAX_ITER) -> float:
    """
    G(A) = lim (1/L) log < exp(sum_i A(i/L) n_i) > for the open SSEP.

    Solves F'' + F'^2 (1 - e^A)/(1 - F + F e^A) = 0 in the form
    (1 + cF) F'' - c F'^2 = 0 with c = e^A - 1.

    Raises:
        NewtonDiverged
    """
    x = uniform_grid(n)
    A = _a_on_grid(A, x)
    if rho1 == rho2:
        return _simpson(np.log1p(rho1 * np.expm1(A)), x)
    F = _solve_ssep_G(rho1, rho2, x, A, tol, max_iter)
    integrand = np.log1p(np.expm1(A) * F) - _log_slope_integral(F, x, rho1, rho2)
    return _simpson(integrand, x)


def ssep_tilted_profile(rho1: float, rho2: float, A, n: int = 128) -> DensityProfile:
    """Most likely profile under the tilt A: rho_A = F e^A / (1 - F + F e^A)."""
    x = uniform_grid(n)
    A = _a_on_grid(A, x)
    F = _solve_ssep_G(rho1, rho2, x, A, BVP_TOL, BVP_MAX_ITER)
    values = F * np.exp(A) / (1.0 + F * np.expm1(A))
    return DensityProfile(x, values, rho1, rho2)


def density_scgf_quadratic(rho1: float, rho2: float, A, n: int = 512) -> float:
    """Second-order expansion of G(A) with the kernel -(rho1 - rho2)^2 x (1 - y), x < y."""
    x = uniform_grid(n)
    A = _a_on_grid(A, x)
    rho_star = rho1 + (rho2 - rho1) * x
    local = _simpson(A * rho_star + 0.5 * A ** 2 * rho_star * (1.0 - rho_star), x)
    tail = (A * (1.0 - x))[::-1]
    inner = -integrate.cumulative_trapezoid(tail, x[::-1], initial=0.0)[::-1]
    return local - (rho1 - rho2) ** 2 * _simpson(A * x * inner, x)


def ssep_perturbative_F(rho1: float, rho2: float, profile: ProfileLike, n: Optional[int] = None) -> np.ndarray:
    """
    Leading small-gradient approximation of the optimal F:
    F = rho* - (rho1-rho2)^2 / (rho1(1-rho1)) *
        [x int_x^1 (1-y) drho dy + (1-x) int_0^x y drho dy].
    """
    x, values = _profile_arrays(profile, n)
    rho_star = rho1 + (rho2 - rho1) * x
    delta = values - rho_star
    left = integrate.cumulative_trapezoid(x * delta, x, initial=0.0)
    right_rev = integrate.cumulative_trapezoid(((1.0 - x) * delta)[::-1], x[::-1], initial=0.0)
    right = -right_rev[::-1]
    correction = x * right + (1.0 - x) * left
    return rho_star - (rho1 - rho2) ** 2 / (rho1 * (1.0 - rho1)) * correction


# Optimal trajectories

def _dx(field_values, x):
    return np.gradient(field_values, x, axis=1, edge_order=2)


def _check_trajectory(trajectory: TrajectoryGrid, need_H: bool):
    if trajectory.n < MIN_TRAJECTORY_GRID or trajectory.m < MIN_TRAJECTORY_GRID:
        raise GridMismatch(f"trajectory grid ({trajectory.n}, {trajectory.m}) below {MIN_TRAJECTORY_GRID}")
    if need_H and trajectory.H is None:
        raise GridMismatch("trajectory has no H field")


def hj_residual(model: TransportModel, trajectory: TrajectoryGrid):
    """
    Max-norm residuals of the optimal-trajectory equations

        d_tau rho - d_x(D d_x rho) + d_x(sigma d_x H) = 0
        d_tau H + D d_xx H + sigma'/2 (d_x H)^2 = 0

    from centered differences at interior space-time points.

    Raises:
        GridMismatch
    """
    model = _as_model(model)
    _check_trajectory(trajectory, need_H=True)
    x, tau, rho, H = trajectory.x, trajectory.tau, trajectory.rho, trajectory.H
    h = np.diff(x)
    dt = np.diff(tau)
    if not (np.allclose(h, h[0]) and np.allclose(dt, dt[0])):
        raise GridMismatch("residuals need uniform grids")
    h, dt = h[0], dt[0]

    r = rho[1:-1]
    mid = 0.5 * (r[:, 1:] + r[:, :-1])
    D_mid = np.asarray(model.D(mid), float)
    sigma_mid = np.asarray(model.sigma(mid), float)
    Hr = H[1:-1]
    diffusion = (D_mid[:, 1:] * np.diff(r, axis=1)[:, 1:] - D_mid[:, :-1] * np.diff(r, axis=1)[:, :-1]) / h ** 2
    drift = (sigma_mid[:, 1:] * np.diff(Hr, axis=1)[:, 1:]
             - sigma_mid[:, :-1] * np.diff(Hr, axis=1)[:, :-1]) / h ** 2
    rho_t = (rho[2:, 1:-1] - rho[:-2, 1:-1]) / (2.0 * dt)
    res_rho = rho_t - diffusion + drift

    inner = r[:, 1:-1]
    H_t = (H[2:, 1:-1] - H[:-2, 1:-1]) / (2.0 * dt)
    H_xx = (Hr[:, 2:] - 2.0 * Hr[:, 1:-1] + Hr[:, :-2]) / h ** 2
    H_x = (Hr[:, 2:] - Hr[:, :-2]) / (2.0 * h)
    res_H = H_t + np.asarray(model.D(inner), float) * H_xx \
        + 0.5 * np.asarray(model.sigma_prime(inner), float) * H_x ** 2
    return float(np.max(np.abs(res_rho))), float(np.max(np.abs(res_H)))


def trajectory_action(model: TransportModel, trajectory: TrajectoryGrid, form: str = "auto") -> float:
    """
    Cost of a space-time trajectory by tensor-product Simpson.

    form "direct": int int (j + D rho')^2 / (2 sigma); form "H":
    int int sigma/2 (d_x H)^2; "auto" uses j when present.
    """
    model = _as_model(model)
    if form == "auto":
        form = "direct" if trajectory.j is not None else "H"
    x, tau, rho = trajectory.x, trajectory.tau, trajectory.rho
    sigma = np.asarray(model.sigma(rho), float)
    if form == "direct":
        if trajectory.j is None:
            raise GridMismatch("trajectory has no current field")
        flux = trajectory.j + np.asarray(model.D(rho), float) * _dx(rho, x)
        density = np.divide(flux ** 2, 2.0 * sigma, out=np.zeros_like(flux), where=sigma > 0)
    elif form == "H":
        if trajectory.H is None:
            raise GridMismatch("trajectory has no H field")
        density = 0.5 * sigma * _dx(trajectory.H, x) ** 2
    else:
        raise ValueError(f"Unknown action form: {form}")
    return simpson_2d(density, x, tau)


def _current_from_H(model, rho, H, x):
    return -np.asarray(model.D(rho), float) * _dx(rho, x) + np.asarray(model.sigma(rho), float) * _dx(H, x)


def equilibrium_excitation_trajectory(rho_star: float = 0.5, amplitude: float = 0.2, n: int = 128,
                                      m: int = 256, duration: float = 1.0) -> TrajectoryGrid:
    """
    Time reversal of SSEP relaxation towards rho*: rho = rho* + a e^{pi^2 (tau - T)} sin(pi x)
    with H = f'(rho) - f'(rho*).
    """
    model = transport_catalogue("ssep")
    x, tau = uniform_grid(n), np.linspace(0.0, duration, m + 1)
    growth = np.exp(np.pi ** 2 * (tau - duration))[:, None]
    rho = rho_star + amplitude * growth * np.sin(np.pi * x)[None, :]
    H = model.f_prime(rho) - model.f_prime(rho_star)
    H[:, 0] = H[:, -1] = 0.0
    j = _current_from_H(model, rho, H, x)
    return TrajectoryGrid(x, tau, rho, H, j, rho_star, rho_star)


def ssep_antidiffusion_trajectory(rho1: float = 0.7, rho2: float = 0.3, amplitude: float = 0.005,
                                  n: int = 128, m: int = 256, duration: float = 1.0) -> TrajectoryGrid:
    """
    F = rho* + a e^{pi^2 (tau - T)} sin(pi x) runs the heat equation backwards;
    rho = F + F(1-F) F''/F'^2 and H = log[rho (1-F) / (F (1-rho))].
    """
    model = transport_catalogue("ssep")
    x, tau = uniform_grid(n), np.linspace(0.0, duration, m + 1)
    growth = amplitude * np.exp(np.pi ** 2 * (tau - duration))[:, None]
    F = rho1 + (rho2 - rho1) * x[None, :] + growth * np.sin(np.pi * x)[None, :]
    dF = (rho2 - rho1) + growth * np.pi * np.cos(np.pi * x)[None, :]
    d2F = -growth * np.pi ** 2 * np.sin(np.pi * x)[None, :]
    rho = F + F * (1.0 - F) * d2F / dF ** 2
    H = np.log(rho * (1.0 - F) / (F * (1.0 - rho)))
    H[:, 0] = H[:, -1] = 0.0
    j = _current_from_H(model, rho, H, x)
    return TrajectoryGrid(x, tau, rho, H, j, rho1, rho2)


def steady_trajectory(model: TransportModel, rho1: float, rho2: float, n: int = 64, m: int = 64,
                      duration: float = 1.0) -> TrajectoryGrid:
    """rho = rho*, j = j*, H = 0 at all times."""
    model = _as_model(model)
    profile, j_star = steady_profile(model, rho1, rho2, n)
    tau = np.linspace(0.0, duration, m + 1)
    rho = np.tile(profile.values, (m + 1, 1))
    return TrajectoryGrid(profile.x, tau, rho, np.zeros_like(rho), np.full_like(rho, j_star), rho1, rho2)


def constant_trajectory(model: TransportModel, rho: float, n: int = 64, m: int = 64,
                        duration: float = 1.0) -> TrajectoryGrid:
    return steady_trajectory(model, rho, rho, n, m, duration)
