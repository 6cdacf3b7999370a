"""
Shared numerical helpers: adaptive quadrature, Richardson extrapolation,
finite differences and a damped Newton solver for tridiagonal systems.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg

from src.exceptions import NewtonDiverged

logger = logging.getLogger(__name__)

QUAD_EPSABS = 1e-13
QUAD_EPSREL = 1e-12
QUAD_LIMIT = 400


def quad(f, a, b, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, points=None):
    """Adaptive Gauss-Kronrod quadrature of a scalar function."""
    if a == b:
        return 0.0
    kwargs = {"epsabs": epsabs, "epsrel": epsrel, "limit": QUAD_LIMIT}
    if points is not None and np.isfinite(a) and np.isfinite(b):
        inside = [p for p in points if min(a, b) < p < max(a, b)]
        if inside:
            kwargs["points"] = inside
    value, _ = integrate.quad(f, a, b, **kwargs)
    return float(value)


def quad_sqrt_endpoints(g, a, b, split=None, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL):
    """
    Integrate g over [a, b] when g may carry inverse-square-root endpoint
    singularities.

    Each half interval is mapped with rho = a + w**2 (left) or
    rho = b - w**2 (right), which turns a 1/sqrt singularity into a bounded
    integrand. An optional interior ``split`` point is used as the join.
    """
    if a == b:
        return 0.0
    sign = 1.0
    if a > b:
        a, b = b, a
        sign = -1.0
    m = 0.5 * (a + b) if split is None or not (a < split < b) else split

    def left(w):
        return 2.0 * w * g(a + w * w)

    def right(w):
        return 2.0 * w * g(b - w * w)

    total = quad(left, 0.0, np.sqrt(m - a), epsabs, epsrel)
    total += quad(right, 0.0, np.sqrt(b - m), epsabs, epsrel)
    return sign * total


def richardson(coarse, fine, order=2):
    """Richardson extrapolation of two estimates with step ratio 2."""
    factor = 2.0 ** order
    return (factor * fine - coarse) / (factor - 1.0)


def derivative(f, x, h=1e-5):
    """Second-order central first derivative."""
    return (f(x + h) - f(x - h)) / (2.0 * h)


def second_derivative(f, x, h=1e-5):
    """Second-order central second derivative."""
    return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)


def simpson_2d(values, x, tau):
    """Tensor-product Simpson rule; ``values`` has shape (len(tau), len(x))."""
    inner = integrate.simpson(values, x=x, axis=1)
    return float(integrate.simpson(inner, x=tau))


@dataclass
class NewtonResult:
    x: np.ndarray
    iterations: int
    residual: float


def banded_newton(residual_and_jacobian, x0, tol=1e-10, max_iter=200,
                  damping_floor=1e-4, admissible=None):
    """
    Damped Newton iteration for a system with tridiagonal Jacobian.

    Args:
        residual_and_jacobian: callable x -> (R, (lower, diag, upper));
            ``lower[k]`` multiplies x[k-1] in row k, ``upper[k]`` multiplies
            x[k+1] in row k.
        x0: initial guess.
        tol: max-norm residual tolerance.
        max_iter: iteration cap.
        damping_floor: smallest step fraction tried by Armijo backtracking.
        admissible: optional predicate rejecting trial iterates.

    Returns:
        NewtonResult

    Raises:
        NewtonDiverged when the line search or the iteration cap fails.
    """
    x = np.array(x0, dtype=float)
    res, bands = residual_and_jacobian(x)
    norm = float(np.max(np.abs(res))) if res.size else 0.0
    iterations = 0
    while norm > tol:
        if iterations >= max_iter:
            raise NewtonDiverged(norm, iterations)
        lower, diag, upper = bands
        ab = np.zeros((3, x.size))
        ab[0, 1:] = upper[:-1]
        ab[1, :] = diag
        ab[2, :-1] = lower[1:]
        try:
            step = linalg.solve_banded((1, 1), ab, -res)
        except (linalg.LinAlgError, ValueError) as e:
            raise NewtonDiverged(norm, iterations) from e
        l2 = float(np.linalg.norm(res))
        t = 1.0
        accepted = False
        while t >= damping_floor:
            trial = x + t * step
            if admissible is None or admissible(trial):
                trial_res, trial_bands = residual_and_jacobian(trial)
                if np.all(np.isfinite(trial_res)) and (
                        np.linalg.norm(trial_res) <= (1.0 - 1e-4 * t) * l2
                        or np.max(np.abs(trial_res)) <= tol):
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            raise NewtonDiverged(norm, iterations)
        x, res, bands = trial, trial_res, trial_bands
        norm = float(np.max(np.abs(res)))
        iterations += 1
        logger.debug("newton iteration %d: step %.3g residual %.3e", iterations, t, norm)
    return NewtonResult(x=x, iterations=iterations, residual=norm)
