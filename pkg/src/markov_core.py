"""
Finite-state continuous-time Markov chains.

Generators carry labelled transitions with per-transition counting weights
for one or more current observables. The module computes stationary states,
entropy production, tilted generators, scaled cumulant generating functions
(SCGF) with their derivatives, Legendre transforms and the symmetry checks
(fluctuation theorem, Onsager reciprocity).

Convention: ``M[c_to, c_from]`` is the rate of the jump c_from -> c_to and
the diagonal is minus the total escape rate, so columns sum to zero.
"""
import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import interpolate, linalg, optimize, sparse
from scipy.sparse.csgraph import breadth_first_order, connected_components

from src.exceptions import (
    DimensionMismatch, IndexOutOfRange, IrreversibleTransition, NegativeRate,
    NoConvergence, NonIrreducible, NotMultiBath, QOutOfRange, SingularSystem,
)
from src.numerics import richardson

logger = logging.getLogger(__name__)

DENSE_EIGEN_MAX = 1024
DENSE_STATIONARY_MAX = 4096
POWER_MAX_ITER = 500_000
ENTROPY = "entropy"


@dataclass(frozen=True)
class Transition:
    source: int
    target: int
    rate: float
    increments: tuple


@dataclass(frozen=True, eq=False)
class MarkovGenerator:
    """
    Validated generator stored as transition arrays.

    Build with :func:`build_generator` (transition lists) or
    :func:`generator_from_arrays` (vectorized constructors).
    """

    n_states: int
    sources: np.ndarray = field(repr=False)
    targets: np.ndarray = field(repr=False)
    rates: np.ndarray = field(repr=False)
    increments: np.ndarray = field(repr=False)
    observable_names: tuple = ()

    @property
    def n_observables(self) -> int:
        return len(self.observable_names)

    @property
    def n_transitions(self) -> int:
        return int(self.sources.size)

    @cached_property
    def transitions(self) -> tuple:
        return tuple(
            Transition(int(s), int(t), float(k), tuple(float(v) for v in q))
            for s, t, k, q in zip(self.sources, self.targets, self.rates, self.increments)
        )

    @cached_property
    def escape_rates(self) -> np.ndarray:
        return np.bincount(self.sources, weights=self.rates, minlength=self.n_states)

    @property
    def max_rate(self) -> float:
        return float(self.escape_rates.max())

    def matrix(self, rates=None) -> np.ndarray:
        """Dense generator, optionally with replaced off-diagonal rates."""
        rates = self.rates if rates is None else rates
        m = np.zeros((self.n_states, self.n_states))
        np.add.at(m, (self.targets, self.sources), rates)
        m[np.diag_indices(self.n_states)] -= self.escape_rates
        return m

    def sparse_matrix(self, rates=None):
        rates = self.rates if rates is None else rates
        off = sparse.coo_matrix((rates, (self.targets, self.sources)),
                                shape=(self.n_states, self.n_states)).tocsr()
        return off - sparse.diags(self.escape_rates)

    def observable_index(self, observable) -> int:
        if isinstance(observable, str):
            if observable not in self.observable_names:
                raise IndexOutOfRange(
                    f"unknown observable '{observable}', available: {list(self.observable_names)}")
            return self.observable_names.index(observable)
        index = int(observable)
        if not 0 <= index < self.n_observables:
            raise IndexOutOfRange(f"observable index {index} out of range")
        return index


def generator_from_arrays(n_states: int, sources, targets, rates, increments=None,
                          observable_names: Sequence[str] = ()) -> MarkovGenerator:
    """
    Validate transition arrays and return an irreducible generator.

    Args:
        n_states: number of configurations.
        sources, targets: integer arrays of jump endpoints.
        rates: positive jump rates.
        increments: array of shape (n_transitions, n_observables).
        observable_names: one label per increment column.

    Raises:
        NegativeRate, IndexOutOfRange, DimensionMismatch, NonIrreducible
    """
    n_states = int(n_states)
    if n_states < 1:
        raise IndexOutOfRange("n_states must be positive")
    names = tuple(str(name) for name in observable_names)
    sources = np.asarray(sources, dtype=np.int64).ravel()
    targets = np.asarray(targets, dtype=np.int64).ravel()
    rates = np.asarray(rates, dtype=float).ravel()
    if increments is None:
        increments = np.zeros((sources.size, len(names)))
    increments = np.asarray(increments, dtype=float)
    if not (sources.size == targets.size == rates.size):
        raise DimensionMismatch("transition arrays differ in length")
    if increments.ndim != 2 or increments.shape != (sources.size, len(names)):
        raise DimensionMismatch(
            f"increments have shape {increments.shape}, expected ({sources.size}, {len(names)})")

    bad = ~np.isfinite(rates) | (rates <= 0.0)
    if bad.any():
        k = int(np.argmax(bad))
        raise NegativeRate(f"rate {rates[k]} on transition {sources[k]}->{targets[k]} is not positive")
    outside = (sources < 0) | (sources >= n_states) | (targets < 0) | (targets >= n_states)
    if outside.any():
        k = int(np.argmax(outside))
        raise IndexOutOfRange(f"transition {sources[k]}->{targets[k]} outside 0..{n_states - 1}")
    loops = sources == targets
    if loops.any():
        raise IndexOutOfRange(f"self transition on state {sources[int(np.argmax(loops))]}")

    if n_states > 1:
        graph = sparse.coo_matrix((np.ones(sources.size), (sources, targets)),
                                  shape=(n_states, n_states)).tocsr()
        n_components, _ = connected_components(graph, directed=True, connection="strong")
        if n_components != 1:
            raise NonIrreducible(f"generator has {n_components} strongly connected components")

    for array in (sources, targets, rates, increments):
        array.flags.writeable = False
    return MarkovGenerator(n_states, sources, targets, rates, increments, names)


def _as_transition(item):
    if isinstance(item, Transition):
        return item.source, item.target, item.rate, item.increments
    if isinstance(item, dict):
        return item["from"], item["to"], item["rate"], item.get("inc", ())
    source, target, rate, inc = item
    return source, target, rate, inc


def build_generator(n_states: int, transitions, observable_names: Sequence[str] = ()) -> MarkovGenerator:
    """
    Build a generator from (from, to, rate, increments) tuples, dicts with
    keys from/to/rate/inc, or Transition objects.
    """
    names = tuple(observable_names)
    rows = [_as_transition(item) for item in transitions]
    for source, target, _, inc in rows:
        if len(np.atleast_1d(inc)) != len(names) and not (len(names) == 0 and np.size(inc) == 0):
            raise DimensionMismatch(
                f"transition {source}->{target} has {np.size(inc)} increments for {len(names)} observables")
    increments = np.array([np.atleast_1d(inc) for _, _, _, inc in rows], dtype=float)
    return generator_from_arrays(
        n_states,
        [r[0] for r in rows], [r[1] for r in rows], [r[2] for r in rows],
        increments.reshape(len(rows), len(names)), names,
    )


def generator_to_dict(gen: MarkovGenerator) -> dict:
    return {
        "n_states": gen.n_states,
        "observables": list(gen.observable_names),
        "transitions": [
            {"from": t.source, "to": t.target, "rate": t.rate, "inc": list(t.increments)}
            for t in gen.transitions
        ],
    }


def generator_from_dict(document: dict) -> MarkovGenerator:
    return build_generator(document["n_states"], document["transitions"],
                           document.get("observables", []))


def save_generator(gen: MarkovGenerator, path) -> Path:
    save_path = Path(path)
    save_path.parent.mkdir(parents=True, exist_ok=True)
    save_path.write_text(json.dumps(generator_to_dict(gen), indent=2))
    return save_path


def load_generator(path) -> MarkovGenerator:
    return generator_from_dict(json.loads(Path(path).read_text()))


def uniformize(gen: MarkovGenerator, shift: Optional[float] = None):
    """Discrete-time transition matrix I + M/s (sparse), s = 2 max|diag| by default."""
    s = 2.0 * gen.max_rate if shift is None else float(shift)
    return sparse.identity(gen.n_states, format="csr") + gen.sparse_matrix() / s


def stationary_distribution(gen: MarkovGenerator, tol: float = 1e-14,
                            max_iter: int = POWER_MAX_ITER,
                            dense_max: int = DENSE_STATIONARY_MAX) -> np.ndarray:
    """
    Stationary probability vector.

    Dense LU on the normalization-augmented system for n <= dense_max, power
    iteration on the uniformized chain otherwise.
    """
    n = gen.n_states
    if n == 1:
        return np.ones(1)
    if n <= dense_max:
        a = gen.matrix()
        a[-1, :] = 1.0
        b = np.zeros(n)
        b[-1] = 1.0
        try:
            p = linalg.lu_solve(linalg.lu_factor(a), b)
        except (linalg.LinAlgError, ValueError) as e:
            raise SingularSystem(str(e)) from e
        if not np.all(np.isfinite(p)):
            raise SingularSystem("stationary system is singular")
    else:
        t = uniformize(gen)
        p = np.full(n, 1.0 / n)
        change = np.inf
        for iteration in range(max_iter):
            nxt = t @ p
            nxt /= nxt.sum()
            change = float(np.max(np.abs(nxt - p)))
            p = nxt
            if change < tol:
                logger.debug("stationary power iteration converged in %d steps", iteration + 1)
                break
        else:
            raise NoConvergence(max_iter, change)
    p = np.clip(p, 0.0, None)
    return p / p.sum()


# Entropy production

def reverse_rates(gen: MarkovGenerator) -> np.ndarray:
    """
    Rate of the reverse channel of every transition.

    The reverse channel of a -> b with increments q is the b -> a transition
    with increments -q (entropy column ignored); without such a channel the
    summed b -> a rate is used.

    Raises:
        IrreversibleTransition when some a -> b has no b -> a at all.
    """
    keep = [i for i, name in enumerate(gen.observable_names) if name != ENTROPY]
    labels = [f"q{i}" for i in keep]
    inc = np.round(gen.increments[:, keep], 12) + 0.0

    channels = pd.DataFrame(inc, columns=labels)
    channels["source"] = gen.sources
    channels["target"] = gen.targets
    channels["rate"] = gen.rates
    by_channel = channels.groupby(["source", "target", *labels], as_index=False)["rate"].sum()
    by_pair = channels.groupby(["source", "target"], as_index=False)["rate"].sum()

    wanted = pd.DataFrame(-inc + 0.0, columns=labels)
    wanted["source"] = gen.targets
    wanted["target"] = gen.sources
    matched = wanted.merge(by_channel, on=["source", "target", *labels], how="left")["rate"].to_numpy()
    summed = wanted[["source", "target"]].merge(by_pair, on=["source", "target"], how="left")["rate"].to_numpy()
    rev = np.where(np.isnan(matched), summed, matched)
    if np.isnan(rev).any():
        k = int(np.argmax(np.isnan(rev)))
        raise IrreversibleTransition(f"transition {gen.sources[k]}->{gen.targets[k]} has no reverse")
    return rev


def entropy_increments(gen: MarkovGenerator) -> np.ndarray:
    return np.log(gen.rates / reverse_rates(gen))


def with_entropy_observable(gen: MarkovGenerator) -> MarkovGenerator:
    """Copy of ``gen`` with the log-rate-ratio observable appended (reused if present)."""
    if ENTROPY in gen.observable_names:
        return gen
    increments = np.column_stack([gen.increments, entropy_increments(gen)])
    increments.flags.writeable = False
    return MarkovGenerator(gen.n_states, gen.sources, gen.targets, gen.rates, increments,
                           gen.observable_names + (ENTROPY,))


def entropy_production_rate(gen: MarkovGenerator) -> float:
    """s* = sum over transitions of k P(source) log(k / k_reverse); nonnegative."""
    s = entropy_increments(gen)
    p = stationary_distribution(gen)
    value = float(np.sum(gen.rates * p[gen.sources] * s))
    return max(value, 0.0) if value > -1e-14 else value


def detailed_balance_holds(gen: MarkovGenerator, tol: float = 1e-10) -> bool:
    """Kolmogorov cycle criterion, tested through a spanning-tree potential."""
    try:
        s = entropy_increments(gen)
    except IrreversibleTransition:
        return False
    first = pd.DataFrame({"source": gen.sources, "target": gen.targets, "s": s}) \
        .drop_duplicates(["source", "target"])
    graph = sparse.coo_matrix((np.arange(1, len(first) + 1), (first["source"], first["target"])),
                              shape=(gen.n_states, gen.n_states)).tocsr()
    order, predecessors = breadth_first_order(graph, 0, directed=True, return_predecessors=True)
    edge_s = first["s"].to_numpy()
    potential = np.zeros(gen.n_states)
    for node in order[1:]:
        parent = predecessors[node]
        potential[node] = potential[parent] + edge_s[int(graph[parent, node]) - 1]
    mismatch = potential[gen.targets] - potential[gen.sources] - s
    return bool(np.max(np.abs(mismatch)) <= tol)


# Tilted generators and SCGF


@dataclass(frozen=True, eq=False)
class TiltedGenerator:
    base: MarkovGenerator
    lam: tuple

    @cached_property
    def rates(self) -> np.ndarray:
        return self.base.rates * np.exp(self.base.increments @ np.array(self.lam))

    def matrix(self):
        return self.base.matrix(self.rates)

    def sparse_matrix(self):
        return self.base.sparse_matrix(self.rates)


def tilted_generator(gen: MarkovGenerator, lambda_vector) -> TiltedGenerator:
    """Off-diagonal entries scaled by exp(lambda . q); diagonal untouched."""
    lam = np.atleast_1d(np.asarray(lambda_vector, dtype=float))
    if lam.ndim != 1 or lam.size != gen.n_observables:
        raise DimensionMismatch(
            f"lambda has {lam.size} components for {gen.n_observables} observables")
    return TiltedGenerator(gen, tuple(float(v) for v in lam))


@dataclass(frozen=True, eq=False)
class SpectralResult:
    eigenvalue: float
    left_vector: np.ndarray = field(repr=False)
    right_vector: np.ndarray = field(repr=False)
    iterations: int
    residual: float
    method: str = "dense"


def _normalize_pair(left, right):
    right = np.abs(right) / np.abs(right).sum()
    left = np.abs(left)
    left = left / float(left @ right)
    return left, right


def _dense_dominant(a):
    values, vl, vr = linalg.eig(a, left=True, right=True)
    idx = int(np.argmax(values.real))
    left, right = _normalize_pair(vl[:, idx].real, vr[:, idx].real)
    return float(values[idx].real), left, right


def _power_dominant(a, shift, tol, max_iter):
    """Dominant eigenpair of a + shift*I (elementwise nonnegative) by power iteration."""
    n = a.shape[0]
    b = a + shift * sparse.identity(n, format="csr")
    bt = b.T.tocsr()

    def iterate(op):
        x = np.full(n, 1.0 / n)
        nu, res = 0.0, np.inf
        for iteration in range(1, max_iter + 1):
            y = op @ x
            nu = float(y.sum())
            y /= nu
            res = float(np.max(np.abs(op @ y - nu * y))) / nu
            x = y
            if res <= tol:
                return nu, x, iteration, res
        raise NoConvergence(max_iter, res)

    nu, right, it_r, res_r = iterate(b)
    _, left, it_l, res_l = iterate(bt)
    left, right = _normalize_pair(left, right)
    return nu - shift, left, right, max(it_r, it_l), max(res_r, res_l)


def scgf(tilted: TiltedGenerator, method: str = "auto", tol: float = 1e-12,
         max_iter: int = POWER_MAX_ITER) -> SpectralResult:
    """
    Dominant eigenvalue mu(lambda) of the tilted generator with its
    Perron left/right vectors (sum R = 1, L.R = 1).

    ``method`` is ``dense``, ``power`` or ``auto`` (dense up to 1024 states).
    """
    gen = tilted.base
    if method == "auto":
        method = "dense" if gen.n_states <= DENSE_EIGEN_MAX else "power"
    if gen.n_states == 1:
        return SpectralResult(0.0, np.ones(1), np.ones(1), 0, 0.0, method)
    if method == "dense":
        a = tilted.matrix()
        mu, left, right = _dense_dominant(a)
        iterations = 0
        scale = max(1.0, gen.max_rate)
        residual = max(float(np.max(np.abs(a @ right - mu * right))),
                       float(np.max(np.abs(left @ a - mu * left)))) / scale
    elif method == "power":
        shift = gen.max_rate + 1.0
        mu, left, right, iterations, residual = _power_dominant(
            tilted.sparse_matrix(), shift, tol, max_iter)
    else:
        raise ValueError(f"Unknown eigen method: {method}")
    logger.debug("scgf lambda=%s mu=%.15g (%s, residual %.2e)", tilted.lam, mu, method, residual)
    return SpectralResult(mu, left, right, iterations, residual, method)


def _lambda_vector(gen, observable, lam):
    vec = np.zeros(gen.n_observables)
    vec[gen.observable_index(observable)] = lam
    return vec


def scgf_value(gen: MarkovGenerator, lam: float, observable=0, method: str = "auto") -> float:
    vec = _lambda_vector(gen, observable, lam)
    if lam == 0:
        # probability is conserved
        return 0.0
    return scgf(tilted_generator(gen, vec), method).eigenvalue


def scgf_gradient(tilted: TiltedGenerator, spectral: Optional[SpectralResult] = None) -> np.ndarray:
    """Exact gradient of mu: L.(dM/dlambda_i).R for every observable."""
    spectral = spectral or scgf(tilted)
    gen = tilted.base
    weights = spectral.left_vector[gen.targets] * tilted.rates * spectral.right_vector[gen.sources]
    return weights @ gen.increments


def scgf_slope(gen: MarkovGenerator, lam: float, observable=0) -> float:
    index = gen.observable_index(observable)
    tilted = tilted_generator(gen, _lambda_vector(gen, index, lam))
    return float(scgf_gradient(tilted)[index])


def mean_rate(gen: MarkovGenerator, observable=0) -> float:
    """Stationary mean rate of an observable (mu'(0))."""
    index = gen.observable_index(observable)
    p = stationary_distribution(gen)
    return float(np.sum(gen.rates * p[gen.sources] * gen.increments[:, index]))


def scgf_derivatives(gen: MarkovGenerator, observable=0, order: int = 2,
                     lam0: float = 0.0, h: float = 1e-3) -> np.ndarray:
    """
    Cumulant rates (mu'(lam0), ..., mu^(order)(lam0)).

    The first derivative is exact; higher orders are central differences of
    mu' extrapolated over steps h and h/2.
    """
    if not 1 <= order <= 4:
        raise ValueError("order must be between 1 and 4")
    index = gen.observable_index(observable)

    def slope(lam):
        return scgf_slope(gen, lam, index)

    def stencil(step, k):
        if k == 2:
            return (slope(lam0 + step) - slope(lam0 - step)) / (2.0 * step)
        if k == 3:
            return (slope(lam0 + step) - 2.0 * slope(lam0) + slope(lam0 - step)) / step ** 2
        return (slope(lam0 + 2 * step) - 2.0 * slope(lam0 + step)
                + 2.0 * slope(lam0 - step) - slope(lam0 - 2 * step)) / (2.0 * step ** 3)

    values = [slope(lam0)]
    for k in range(2, order + 1):
        values.append(richardson(stencil(h, k), stencil(h / 2.0, k)))
    return np.array(values)


def fano_factor(gen: MarkovGenerator, observable=0) -> float:
    first, second = scgf_derivatives(gen, observable, order=2)
    return float(second / first)


# Rate curves and Legendre transforms

@dataclass(frozen=True, eq=False)
class RateCurve:
    """Sampled mu(lambda) (kind 'scgf') or I(q) (kind 'rate_function')."""

    x: np.ndarray
    y: np.ndarray
    kind: str
    meta: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in ("scgf", "rate_function"):
            raise ValueError(f"Unknown curve kind: {self.kind}")
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.shape != y.shape:
            raise DimensionMismatch("curve abscissae and values differ in length")
        if x.size > 1 and np.any(np.diff(x) <= 0):
            raise ValueError("curve abscissae must be strictly increasing")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def second_differences(self) -> np.ndarray:
        x, y = np.asarray(self.x), np.asarray(self.y)
        if x.size < 3:
            return np.zeros(0)
        slopes = np.diff(y) / np.diff(x)
        return np.diff(slopes) / (0.5 * (x[2:] - x[:-2]))

    def is_convex(self, tol: float = 1e-9) -> bool:
        dd = self.second_differences()
        return bool(dd.size == 0 or dd.min() >= -tol)

    def to_frame(self, x_label: str, y_label: str, meta_label: Optional[str] = None) -> pd.DataFrame:
        frame = pd.DataFrame({x_label: np.asarray(self.x), y_label: np.asarray(self.y)})
        if meta_label is not None:
            frame[meta_label] = list(self.meta) if self.meta is not None else ""
        return frame


def legendre_transform(mu: Callable[[float], float], dmu: Callable[[float], float],
                       q_values, window=(-8.0, 8.0), xtol: float = 1e-14) -> RateCurve:
    """
    I(q) = lambda* q - mu(lambda*) with mu'(lambda*) = q found by bracketing
    on the monotone derivative.

    Raises:
        QOutOfRange when q is outside (mu'(window[0]), mu'(window[1])).
    """
    lo, hi = window
    d_lo, d_hi = dmu(lo), dmu(hi)
    qs = np.unique(np.asarray(q_values, dtype=float))
    values, tags = [], []
    for q in qs:
        if not d_lo < q < d_hi:
            raise QOutOfRange(f"q={q} outside ({d_lo:.6g}, {d_hi:.6g}) on lambda window {window}")
        lam_star = optimize.brentq(lambda l: dmu(l) - q, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps)
        values.append(lam_star * q - mu(lam_star))
        tags.append(f"lambda={lam_star:.17g}")
    return RateCurve(qs, np.array(values), "rate_function", tuple(tags))


def rate_function(source, q_values, observable=0, window=(-8.0, 8.0)) -> RateCurve:
    """
    Legendre transform of an SCGF given either as a generator (exact
    derivative) or as sampled RateCurve of kind 'scgf' (cubic spline).
    """
    if isinstance(source, RateCurve):
        if source.kind != "scgf":
            raise ValueError("rate_function needs an scgf curve")
        spline = interpolate.CubicSpline(source.x, source.y)
        slope = spline.derivative()
        window = (max(window[0], float(source.x[0])), min(window[1], float(source.x[-1])))
        return legendre_transform(lambda l: float(spline(l)), lambda l: float(slope(l)),
                                  q_values, window)
    gen = source
    index = gen.observable_index(observable)
    return legendre_transform(lambda l: scgf_value(gen, l, index),
                              lambda l: scgf_slope(gen, l, index), q_values, window)


def scgf_curve(gen: MarkovGenerator, lambdas, observable=0, n_jobs: int = 1) -> RateCurve:
    lambdas = np.asarray(lambdas, dtype=float)
    index = gen.observable_index(observable)
    values = Parallel(n_jobs=n_jobs)(delayed(scgf_value)(gen, float(l), index) for l in lambdas)
    curve = RateCurve(lambdas, np.array(values), "scgf")
    if not curve.is_convex():
        logger.warning("sampled SCGF is not convex (min second difference %.3e)",
                       curve.second_differences().min())
    return curve


# Symmetry checks

def current_symmetry_defect(gen: MarkovGenerator, observable, affinity: float, lambdas=None) -> float:
    """max |mu(lambda) - mu(-lambda - affinity)| over a lambda grid."""
    if lambdas is None:
        lambdas = np.linspace(-2.0, 1.0, 31) - 0.5 * (affinity - 1.0)
    index = gen.observable_index(observable)
    return max(abs(scgf_value(gen, l, index) - scgf_value(gen, -l - affinity, index))
               for l in np.asarray(lambdas, dtype=float))


def gc_symmetry_defect(gen: MarkovGenerator, lambdas=None) -> float:
    """Gallavotti-Cohen defect max |mu(l) - mu(-1-l)| under the entropy tilt."""
    entropic = with_entropy_observable(gen)
    if lambdas is None:
        lambdas = np.unique(np.concatenate([np.linspace(-1.0, 0.0, 21), np.linspace(-2.0, 1.0, 31)]))
    return current_symmetry_defect(entropic, ENTROPY, 1.0, lambdas)


def rate_function_symmetry_defect(gen: MarkovGenerator, observable, affinity: float,
                                  q_values, window=(-8.0, 8.0)) -> float:
    """max |I(-q) - I(q) - q*affinity| over positive q values."""
    q_values = np.asarray(q_values, dtype=float)
    both = np.concatenate([-q_values, q_values])
    curve = rate_function(gen, both, observable, window)
    lookup = dict(zip(np.round(curve.x, 14), curve.y))
    return max(abs(lookup[round(-q, 14)] - lookup[round(q, 14)] - q * affinity) for q in q_values)


@dataclass(frozen=True, eq=False)
class OnsagerResult:
    matrix: np.ndarray
    symmetry_defect: float


def onsager_response_matrix(gen: MarkovGenerator, observables=(0, 1), temperature: float = 1.0,
                            h: float = 1e-3) -> OnsagerResult:
    """
    Response matrix d2 mu~/dalpha_i dalpha_j at alpha=0 divided by 2 T^2.

    Entry (i, j) differentiates the exact first derivative along i with a
    Richardson central difference along j, so the symmetry defect compares
    two independent numerical routes.
    """
    if gen.n_observables < 2:
        raise NotMultiBath("Onsager response needs at least two observables")
    idx = [gen.observable_index(o) for o in observables]

    def gradient_at(alpha):
        lam = np.zeros(gen.n_observables)
        lam[idx] = alpha
        return scgf_gradient(tilted_generator(gen, lam))[idx]

    hessian = np.zeros((2, 2))
    for j in range(2):
        def central(step):
            e = np.zeros(2)
            e[j] = step
            return (gradient_at(e) - gradient_at(-e)) / (2.0 * step)
        hessian[:, j] = richardson(central(h), central(h / 2.0))
    matrix = hessian / (2.0 * temperature ** 2)
    defect = float(abs(matrix[0, 1] - matrix[1, 0]))
    logger.debug("onsager matrix %s defect %.3e", matrix.tolist(), defect)
    return OnsagerResult(matrix, defect)


def linear_response_matrix(builder: Callable[[Sequence[float]], MarkovGenerator], temperatures,
                           observables=(0, 1), dT: float = 1e-3) -> np.ndarray:
    """
    d<Q_i>/dT_j for j over the first two baths, by Richardson central
    differences of the exact stationary mean rates.
    """
    temperatures = np.asarray(temperatures, dtype=float)

    def rates(temps):
        gen = builder(temps)
        return np.array([mean_rate(gen, o) for o in observables])

    response = np.zeros((2, 2))
    for j in range(2):
        def central(step):
            up, down = temperatures.copy(), temperatures.copy()
            up[j] += step
            down[j] -= step
            return (rates(up) - rates(down)) / (2.0 * step)
        response[:, j] = richardson(central(dT), central(dT / 2.0))
    return response
