"""
Gillespie simulation of finite generators and of exclusion / zero-range
lattices, with batch-means and jackknife estimators.

Replica i of a plan with seed s draws from
``np.random.default_rng(np.random.SeedSequence(s, spawn_key=(i,)))``, so a
plan maps to a bit-identical record regardless of how replicas are
scheduled.
"""
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import joblib
import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import stats

from src.exceptions import (
    DimensionMismatch,
    DomainViolation,
    InsufficientData,
    RateOverflow,
    ZeroTotalRate,
)
from src.lattice_models import SsepParams, ZrpRingParams
from src.markov_core import MarkovGenerator

logger = logging.getLogger(__name__)

RATE_CAP = 1e12
RANDOM_BLOCK = 4096
DEFAULT_BATCHES = 20
MIN_BATCHES = 10
PAIR_SITES_MAX = 64

Model = Union[MarkovGenerator, SsepParams, ZrpRingParams]


@dataclass
class SimulationPlan:
    """
    What to simulate and when to measure.

    ``measurement_grid`` runs from ``burn_in`` to ``t_max``; consecutive
    grid points delimit the batch windows used for occupation averages.
    """

    model: Model
    t_max: float
    n_replicas: int = 1
    seed: int = 0
    measurement_grid: Optional[np.ndarray] = None
    burn_in: Optional[float] = None
    n_batches: int = DEFAULT_BATCHES
    track_pairs: Optional[bool] = None
    replica_offset: int = 0

    def __post_init__(self):
        if self.burn_in is None:
            self.burn_in = default_burn_in(self.model)
        if self.n_replicas < 1:
            raise DomainViolation("n_replicas must be >= 1")
        if not self.t_max > self.burn_in >= 0:
            raise DomainViolation(f"need t_max > burn_in >= 0, got t_max={self.t_max}, burn_in={self.burn_in}")
        if self.measurement_grid is None:
            self.measurement_grid = np.linspace(self.burn_in, self.t_max, self.n_batches + 1)
        grid = np.asarray(self.measurement_grid, dtype=float)
        if grid.size < 2 or np.any(np.diff(grid) <= 0) or grid[0] < self.burn_in or grid[-1] > self.t_max:
            raise DomainViolation("measurement grid must increase within [burn_in, t_max]")
        self.measurement_grid = grid
        if self.track_pairs is None:
            self.track_pairs = not isinstance(self.model, MarkovGenerator) and _n_sites(self.model) <= PAIR_SITES_MAX
        elif self.track_pairs and isinstance(self.model, MarkovGenerator):
            raise DomainViolation("site pairs need a lattice model, not a bare generator")
        if self.replica_offset < 0:
            raise DomainViolation("replica_offset must be >= 0")

    @property
    def replica_ids(self) -> range:
        return range(self.replica_offset, self.replica_offset + self.n_replicas)


def default_burn_in(model: Model) -> float:
    """10 L^2 for lattices (diffusive relaxation); no burn-in for bare generators."""
    if isinstance(model, MarkovGenerator):
        return 0.0
    return 10.0 * _n_sites(model) ** 2


def _n_sites(model) -> int:
    return int(model.L)


@dataclass(eq=False)
class SimulationRecord:
    """
    Output of ``simulate``.

    currents: (replicas, grid points, observables) integrated observables
        at the measurement grid, counted from t = 0.
    occupations: (replicas, windows, sites) time-averaged occupation per
        window; for generator models "sites" are states (time fractions).
    pairs: (replicas, windows, sites, sites) time-averaged n_i n_j, or None.
    """

    kind: str
    times: np.ndarray
    currents: np.ndarray
    occupations: np.ndarray
    pairs: Optional[np.ndarray]
    observable_names: tuple
    events: np.ndarray
    cpu_time: np.ndarray
    seed: int
    replica_ids: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n_replicas(self) -> int:
        return int(self.currents.shape[0])

    @property
    def window_lengths(self) -> np.ndarray:
        return np.diff(self.times)

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        joblib.dump(self, path)
        return path

    @classmethod
    def load(cls, path) -> "SimulationRecord":
        record = joblib.load(path)
        if not isinstance(record, cls):
            raise DomainViolation(f"{path} does not hold a simulation record")
        return record

    def to_frames(self):
        """(currents, occupation) tables with headers (replica, t, Q_...) and (site, mean_n, stderr)."""
        rows = []
        for r, replica in enumerate(self.replica_ids):
            for k, t in enumerate(self.times):
                row = {"replica": int(replica), "t": float(t)}
                for o, name in enumerate(self.observable_names):
                    row[f"Q_{name}"] = float(self.currents[r, k, o])
                rows.append(row)
        currents = pd.DataFrame(rows)
        occ = occupation_statistics(self)
        occupation = pd.DataFrame({"site": occ.sites, "mean_n": occ.mean, "stderr": occ.stderr})
        return currents, occupation


# Systems: each keeps its configuration, per-channel rates and observable increments

class _GeneratorSystem:
    def __init__(self, gen: MarkovGenerator, rng):
        order = np.argsort(gen.sources, kind="stable")
        sources = gen.sources[order]
        self.targets = gen.targets[order].tolist()
        self.increments = [tuple(row) for row in np.asarray(gen.increments)[order].tolist()]
        rates = np.asarray(gen.rates, dtype=float)[order]
        self.offsets = np.searchsorted(sources, np.arange(gen.n_states + 1)).tolist()
        self.cumulative = [np.cumsum(rates[self.offsets[s]:self.offsets[s + 1]])
                           for s in range(gen.n_states)]
        self.size = gen.n_states
        self.n_observables = gen.n_observables
        self.state = 0

    def total_rate(self) -> float:
        cum = self.cumulative[self.state]
        return float(cum[-1]) if cum.size else 0.0

    def fire(self, x):
        cum = self.cumulative[self.state]
        k = min(int(np.searchsorted(cum, x, side="right")), cum.size - 1)
        index = self.offsets[self.state] + k
        self.state = self.targets[index]
        return self.increments[index]

    def accumulate(self, row, dt):
        row[self.state] += dt


class _LatticeSystem:
    """Channels with rates in a Python list; events refresh neighbouring channels only."""

    n_observables = 2

    def total_rate(self) -> float:
        return sum(self.rates)

    def fire(self, x):
        acc = 0.0
        chosen = None
        for c, rate in enumerate(self.rates):
            if rate > 0:
                chosen = c
                acc += rate
                if x < acc:
                    break
        return self.apply(chosen)

    def accumulate(self, row, dt):
        row += self.occupation * dt

    def accumulate_pairs(self, matrix, dt):
        matrix += np.outer(self.occupation, self.occupation) * dt


class _OpenChainSystem(_LatticeSystem):
    """Channel 0: left reservoir, 1: right reservoir, 2+i: bond (i, i+1)."""

    def __init__(self, params: SsepParams, rng):
        self.L = params.L
        self.size = params.L
        self.p = params
        self.occupation = np.zeros(self.L, dtype=np.int64)
        self.rates = [0.0] * (self.L + 1)
        for c in range(self.L + 1):
            self._refresh(c)

    def _refresh(self, c):
        n, p = self.occupation, self.p
        if c == 0:
            self.rates[0] = p.gamma if n[0] else p.alpha
        elif c == 1:
            self.rates[1] = p.beta if n[-1] else p.delta
        else:
            i = c - 2
            here, there = n[i], n[i + 1]
            self.rates[c] = 1.0 if here and not there else (p.r if there and not here else 0.0)

    def apply(self, c):
        n = self.occupation
        if c == 0:
            n[0] ^= 1
            touched = (0, 1, 2) if self.L == 1 else (0, 2)
            inc = (1.0 if n[0] else -1.0, 0.0)
        elif c == 1:
            n[-1] ^= 1
            touched = (0, 1) if self.L == 1 else (1, self.L)
            inc = (0.0, -1.0 if n[-1] else 1.0)
        else:
            i = c - 2
            n[i], n[i + 1] = n[i + 1], n[i]
            touched = [b for b in (c - 1, c, c + 1) if 2 <= b <= self.L]
            if i == 0:
                touched.append(0)
            if i + 1 == self.L - 1:
                touched.append(1)
            inc = (0.0, 0.0)
        for b in touched:
            if b <= self.L:
                self._refresh(b)
        return inc


class _ExclusionRingSystem(_LatticeSystem):
    """Channel i: bond (i, i+1 mod L); ``left`` counts bond (L, 1), ``right`` bond (L/2, L/2+1)."""

    def __init__(self, params: SsepParams, rng):
        self.L = params.L
        self.size = params.L
        self.r = params.r
        self.occupation = np.zeros(self.L, dtype=np.int64)
        self.occupation[: params.n_particles] = 1
        self.rates = [0.0] * self.L
        self.watch = (self.L - 1, self.L // 2 - 1)
        for b in range(self.L):
            self._refresh(b)

    def _refresh(self, b):
        n = self.occupation
        here, there = n[b], n[(b + 1) % self.L]
        self.rates[b] = 1.0 if here and not there else (self.r if there and not here else 0.0)

    def apply(self, b):
        n, L = self.occupation, self.L
        j = (b + 1) % L
        step = 1.0 if n[b] else -1.0
        n[b], n[j] = n[j], n[b]
        for c in ((b - 1) % L, b, j):
            self._refresh(c)
        return tuple(step if b == w else 0.0 for w in self.watch)


class _ZeroRangeRingSystem(_LatticeSystem):
    """Channel 2i: hop right from site i, 2i+1: hop left, each at rate u(n_i)."""

    def __init__(self, params: ZrpRingParams, rng):
        self.L = params.L
        self.size = params.L
        self.params = params
        self.occupation = np.zeros(self.L, dtype=np.int64)
        np.add.at(self.occupation, np.arange(params.n_particles) % self.L, 1)
        self.rates = [0.0] * (2 * self.L)
        self.right_bond = self.L // 2 - 1
        for i in range(self.L):
            self._refresh(i)

    def _refresh(self, i):
        rate = self.params.rate(int(self.occupation[i]))
        self.rates[2 * i] = rate
        self.rates[2 * i + 1] = rate

    def apply(self, c):
        i, left = divmod(c, 2)
        L = self.L
        j = (i - 1) % L if left else (i + 1) % L
        self.occupation[i] -= 1
        self.occupation[j] += 1
        self._refresh(i)
        self._refresh(j)
        bond = j if left else i
        sign = -1.0 if left else 1.0
        return (sign if bond == L - 1 else 0.0, sign if bond == self.right_bond else 0.0)


def _system_for(model: Model, rng):
    if isinstance(model, MarkovGenerator):
        return _GeneratorSystem(model, rng)
    if isinstance(model, SsepParams):
        return _ExclusionRingSystem(model, rng) if model.geometry == "ring" else _OpenChainSystem(model, rng)
    if isinstance(model, ZrpRingParams):
        return _ZeroRangeRingSystem(model, rng)
    raise DomainViolation(f"cannot simulate {type(model).__name__}")


def _observable_names(model: Model) -> tuple:
    if isinstance(model, MarkovGenerator):
        return tuple(model.observable_names)
    return ("left", "right")


def replica_rng(seed: int, replica: int):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(replica,)))


def _run_replica(plan: SimulationPlan, replica: int):
    rng = replica_rng(plan.seed, replica)
    system = _system_for(plan.model, rng)
    grid = plan.measurement_grid
    n_windows = grid.size - 1
    occupations = np.zeros((n_windows, system.size))
    pairs = np.zeros((n_windows, system.size, system.size)) if plan.track_pairs else None
    currents = np.zeros((grid.size, system.n_observables))
    q = [0.0] * system.n_observables

    started = time.process_time()
    t, g_idx, window, events = 0.0, 0, 0, 0
    waits, picks, k = rng.standard_exponential(RANDOM_BLOCK), rng.random(RANDOM_BLOCK), 0
    while True:
        total = system.total_rate()
        if total <= 0:
            raise ZeroTotalRate(f"absorbing configuration reached at t={t:.6g}")
        if not np.isfinite(total) or total > RATE_CAP:
            raise RateOverflow(f"total rate {total:.3g} exceeds {RATE_CAP:.0e}")
        if k == RANDOM_BLOCK:
            waits, picks, k = rng.standard_exponential(RANDOM_BLOCK), rng.random(RANDOM_BLOCK), 0
        t_next = t + waits[k] / total

        while g_idx < grid.size and grid[g_idx] < t_next:
            currents[g_idx] = q
            g_idx += 1
        start, end = max(t, grid[0]), min(t_next, grid[-1])
        while start < end:
            edge = grid[window + 1]
            stop = min(end, edge)
            system.accumulate(occupations[window], stop - start)
            if pairs is not None:
                system.accumulate_pairs(pairs[window], stop - start)
            start = stop
            if stop == edge:
                window += 1
        if t_next >= plan.t_max:
            break

        increments = system.fire(picks[k] * total)
        k += 1
        for o, value in enumerate(increments):
            q[o] += value
        t = t_next
        events += 1

    lengths = np.diff(grid)
    occupations /= lengths[:, None]
    if pairs is not None:
        pairs /= lengths[:, None, None]
    elapsed = time.process_time() - started
    logger.debug("replica %d: %d events in %.3fs", replica, events, elapsed)
    return currents, occupations, pairs, events, elapsed


def simulate(plan: SimulationPlan, n_jobs: int = 1) -> SimulationRecord:
    """
    Run every replica of a plan.

    Raises:
        RateOverflow, ZeroTotalRate
    """
    results = Parallel(n_jobs=n_jobs)(
        delayed(_run_replica)(plan, replica) for replica in plan.replica_ids
    )
    currents, occupations, pairs, events, cpu = zip(*results)
    kind = "generator" if isinstance(plan.model, MarkovGenerator) else "lattice"
    logger.info("simulated %d replica(s), %d events", plan.n_replicas, int(sum(events)))
    return SimulationRecord(
        kind=kind,
        times=plan.measurement_grid.copy(),
        currents=np.stack(currents),
        occupations=np.stack(occupations),
        pairs=np.stack(pairs) if plan.track_pairs else None,
        observable_names=_observable_names(plan.model),
        events=np.asarray(events),
        cpu_time=np.asarray(cpu),
        seed=plan.seed,
        replica_ids=np.asarray(plan.replica_ids),
        meta={"t_max": plan.t_max, "burn_in": plan.burn_in},
    )


def merge_records(first: SimulationRecord, second: SimulationRecord) -> SimulationRecord:
    """Union of two replica sets of the same plan, ordered by replica id."""
    if first.kind != second.kind or not np.array_equal(first.times, second.times) \
            or first.observable_names != second.observable_names:
        raise DimensionMismatch("records come from different plans")
    ids = np.concatenate([first.replica_ids, second.replica_ids])
    order = np.argsort(ids, kind="stable")

    def join(a, b):
        return np.concatenate([a, b])[order]

    pairs = None
    if first.pairs is not None and second.pairs is not None:
        pairs = join(first.pairs, second.pairs)
    return SimulationRecord(
        kind=first.kind, times=first.times.copy(),
        currents=join(first.currents, second.currents),
        occupations=join(first.occupations, second.occupations),
        pairs=pairs, observable_names=first.observable_names,
        events=join(first.events, second.events), cpu_time=join(first.cpu_time, second.cpu_time),
        seed=first.seed, replica_ids=ids[order], meta=dict(first.meta),
    )


# Estimators

@dataclass(frozen=True)
class CurrentStatistics:
    mean: float
    variance: float
    mean_stderr: float
    variance_stderr: float
    method: str
    samples: int


@dataclass(frozen=True, eq=False)
class OccupationStatistics:
    sites: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    connected: Optional[np.ndarray]
    connected_stderr: Optional[np.ndarray]


def _jackknife_mean_variance(x):
    """Jackknife errors of the sample mean and of the (ddof=1) sample variance."""
    x = np.asarray(x, dtype=float)
    n = x.size
    total, total_sq = x.sum(), np.sum(x * x)
    loo_mean = (total - x) / (n - 1)
    mean_err = np.sqrt((n - 1) / n * np.sum((loo_mean - loo_mean.mean()) ** 2))
    if n < 3:
        return mean_err, np.nan
    loo_var = (total_sq - x * x - (n - 1) * loo_mean ** 2) / (n - 2)
    var_err = np.sqrt((n - 1) / n * np.sum((loo_var - loo_var.mean()) ** 2))
    return mean_err, var_err


def current_statistics(record: SimulationRecord, observable=0) -> CurrentStatistics:
    """
    Mean and variance rates of an integrated observable after burn-in.

    Uses replicas (Q(t_end) - Q(t_start) per replica) when there are at
    least two, otherwise batch windows of the single replica.

    Raises:
        InsufficientData
    """
    o = observable if isinstance(observable, int) else record.observable_names.index(observable)
    series = record.currents[:, :, o]
    if record.n_replicas >= 2:
        span = record.times[-1] - record.times[0]
        samples = (series[:, -1] - series[:, 0]) / span
        scale, method = span, "replicas"
    else:
        lengths = record.window_lengths
        if lengths.size < MIN_BATCHES:
            raise InsufficientData(f"need 2 replicas or {MIN_BATCHES} batches, got {lengths.size} batch(es)")
        if not np.allclose(lengths, lengths[0]):
            raise InsufficientData("batch estimates need equal windows")
        scale, method = lengths[0], "batches"
        samples = np.diff(series[0]) / scale
    mean = float(samples.mean())
    variance = float(samples.var(ddof=1) * scale)
    mean_err, var_err = _jackknife_mean_variance(samples)
    return CurrentStatistics(mean, variance, float(mean_err), float(var_err * scale), method, samples.size)


def _units(record: SimulationRecord):
    """Independent averaging units: whole replicas, or batches of one replica."""
    weights = record.window_lengths / record.window_lengths.sum()
    if record.n_replicas >= 2:
        occ = np.einsum("rws,w->rs", record.occupations, weights)
        pairs = None if record.pairs is None else np.einsum("rwst,w->rst", record.pairs, weights)
        return occ, pairs
    if record.window_lengths.size < MIN_BATCHES:
        raise InsufficientData(f"need 2 replicas or {MIN_BATCHES} batches")
    return record.occupations[0], None if record.pairs is None else record.pairs[0]


def occupation_statistics(record: SimulationRecord) -> OccupationStatistics:
    """
    Time-averaged <n_i> and connected <n_i n_j> with standard errors over
    averaging units (delta method for the connected part).

    Raises:
        InsufficientData
    """
    occ, pairs = _units(record)
    units = occ.shape[0]
    mean = occ.mean(axis=0)
    stderr = occ.std(axis=0, ddof=1) / np.sqrt(units)
    offset = 1 if record.kind == "lattice" else 0
    sites = np.arange(mean.size) + offset
    if pairs is None:
        return OccupationStatistics(sites, mean, stderr, None, None)
    connected = pairs.mean(axis=0) - np.outer(mean, mean)
    linear = pairs - occ[:, :, None] * mean[None, None, :] - mean[None, :, None] * occ[:, None, :]
    connected_stderr = linear.std(axis=0, ddof=1) / np.sqrt(units)
    return OccupationStatistics(sites, mean, stderr, connected, connected_stderr)


def stationary_histogram(record: SimulationRecord) -> np.ndarray:
    """Pooled fraction of time spent in each state (generator records)."""
    if record.kind != "generator":
        raise DomainViolation("state histograms need a generator simulation")
    weights = record.window_lengths / record.window_lengths.sum()
    return np.einsum("rws,w->s", record.occupations, weights) / record.n_replicas


def chi_square_stationary(record: SimulationRecord, distribution):
    """
    Chi-square test of the time-averaged state occupancy against an exact
    stationary law, with covariance estimated across averaging units.

    Returns:
        (statistic, p_value, degrees of freedom)
    """
    if record.kind != "generator":
        raise DomainViolation("state histograms need a generator simulation")
    occ, _ = _units(record)
    distribution = np.asarray(distribution, dtype=float)
    if distribution.size != occ.shape[1]:
        raise DimensionMismatch("distribution does not match the number of states")
    units = occ.shape[0]
    dof = distribution.size - 1
    if units <= dof:
        raise InsufficientData(f"{units} averaging units for {dof} degrees of freedom")
    delta = (occ.mean(axis=0) - distribution)[:-1]
    cov = np.atleast_2d(np.cov(occ[:, :-1], rowvar=False)) / units
    statistic = float(delta @ np.linalg.pinv(cov) @ delta)
    return statistic, float(stats.chi2.sf(statistic, dof)), dof
