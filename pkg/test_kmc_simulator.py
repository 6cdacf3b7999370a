"""Tests for the Gillespie simulator and its estimators."""
import numpy as np
import pytest

from src.exceptions import DimensionMismatch, DomainViolation, InsufficientData
from src.kmc_simulator import (
    SimulationPlan,
    SimulationRecord,
    chi_square_stationary,
    current_statistics,
    merge_records,
    occupation_statistics,
    simulate,
    stationary_histogram,
)
from src.lattice_models import (
    SsepParams, ZrpRingParams, quantum_dot_generator, ssep_correlations_exact, ssep_generator, ssep_steady_statistics,
)
from src.markov_core import scgf_derivatives, stationary_distribution


@pytest.fixture(scope="module")
def dot_record():
    plan = SimulationPlan(quantum_dot_generator(2.0, 1.0, 1.0, 1.0), t_max=20_000.0, seed=11)
    return simulate(plan)


@pytest.fixture(scope="module")
def chain_params():
    return SsepParams(8, 1.0, 0.0, 1.0, 0.0)


@pytest.fixture(scope="module")
def chain_record(chain_params):
    return simulate(SimulationPlan(chain_params, t_max=640.0 + 20_000.0, seed=5))


# Plans

def test_default_burn_in_and_grid(chain_params):
    plan = SimulationPlan(chain_params, t_max=1000.0)
    assert plan.burn_in == 640.0
    assert plan.measurement_grid[0] == 640.0
    assert plan.measurement_grid[-1] == 1000.0
    assert plan.measurement_grid.size == 21
    assert plan.track_pairs


def test_plan_needs_time_after_burn_in(chain_params):
    with pytest.raises(DomainViolation):
        SimulationPlan(chain_params, t_max=100.0)


def test_plan_needs_a_replica():
    with pytest.raises(DomainViolation):
        SimulationPlan(quantum_dot_generator(1.0, 1.0, 1.0, 1.0), t_max=10.0, n_replicas=0)


def test_grid_must_stay_inside_the_run():
    with pytest.raises(DomainViolation):
        SimulationPlan(quantum_dot_generator(1.0, 1.0, 1.0, 1.0), t_max=10.0,
                       measurement_grid=np.array([0.0, 5.0, 12.0]))


def test_bare_generators_carry_no_site_pairs():
    gen = quantum_dot_generator(1.0, 1.0, 1.0, 1.0)
    assert not SimulationPlan(gen, t_max=10.0).track_pairs
    with pytest.raises(DomainViolation):
        SimulationPlan(gen, t_max=10.0, track_pairs=True)


# Determinism and merging

def test_same_plan_gives_identical_records():
    plan = SimulationPlan(SsepParams(4, 1.0, 0.0, 1.0, 0.0), t_max=300.0, n_replicas=2, seed=42)
    first, second = simulate(plan), simulate(plan)
    np.testing.assert_array_equal(first.currents, second.currents)
    np.testing.assert_array_equal(first.occupations, second.occupations)
    np.testing.assert_array_equal(first.events, second.events)


def test_merge_is_commutative_and_matches_a_single_run():
    params = SsepParams(3, 1.0, 0.2, 0.8, 0.1)
    whole = simulate(SimulationPlan(params, t_max=200.0, n_replicas=4, seed=3))
    head = simulate(SimulationPlan(params, t_max=200.0, n_replicas=2, seed=3))
    tail = simulate(SimulationPlan(params, t_max=200.0, n_replicas=2, seed=3, replica_offset=2))
    forward, backward = merge_records(head, tail), merge_records(tail, head)
    np.testing.assert_array_equal(forward.replica_ids, [0, 1, 2, 3])
    np.testing.assert_array_equal(forward.currents, backward.currents)
    np.testing.assert_array_equal(forward.currents, whole.currents)
    np.testing.assert_array_equal(forward.pairs, whole.pairs)


def test_merge_rejects_other_plans():
    a = simulate(SimulationPlan(quantum_dot_generator(1.0, 1.0, 1.0, 1.0), t_max=10.0))
    b = simulate(SimulationPlan(quantum_dot_generator(1.0, 1.0, 1.0, 1.0), t_max=20.0))
    with pytest.raises(DimensionMismatch):
        merge_records(a, b)


def test_record_persistence_and_tables(tmp_path):
    record = simulate(SimulationPlan(SsepParams(4, 1.0, 0.0, 1.0, 0.0), t_max=400.0, n_replicas=3, seed=1))
    loaded = SimulationRecord.load(record.save(tmp_path / "run.joblib"))
    np.testing.assert_array_equal(loaded.currents, record.currents)
    currents, occupation = loaded.to_frames()
    assert list(currents.columns) == ["replica", "t", "Q_left", "Q_right"]
    assert len(currents) == 3 * record.times.size
    assert list(occupation.columns) == ["site", "mean_n", "stderr"]
    assert occupation["site"].tolist() == [1, 2, 3, 4]


# Conservation and bounds

def test_exclusion_ring_conserves_particles():
    record = simulate(SimulationPlan(SsepParams(6, geometry="ring", n_particles=3), t_max=500.0, seed=2))
    np.testing.assert_allclose(record.occupations.sum(axis=-1), 3.0, rtol=1e-12)
    assert record.occupations.min() >= 0 and record.occupations.max() <= 1


def test_zero_range_ring_conserves_particles():
    record = simulate(SimulationPlan(ZrpRingParams(5, 7, (1.0, 2.0)), t_max=400.0, seed=9))
    np.testing.assert_allclose(record.occupations.sum(axis=-1), 7.0, rtol=1e-12)
    assert record.events[0] > 0


def test_independent_walkers_carry_no_mean_current():
    plan = SimulationPlan(ZrpRingParams(6, 6, tuple(range(1, 7))), t_max=360.0 + 4000.0, seed=4)
    stats = current_statistics(simulate(plan), "left")
    assert abs(stats.mean) <= 3 * stats.mean_stderr



def test_independent_walkers_variance_rate():
    # N = L walkers hopping at rate 1 each way: bond current variance 2N/L^2
    L = 4
    plan = SimulationPlan(ZrpRingParams(L, L, tuple(float(n) for n in range(1, L + 1))),
                          t_max=10.0 * L ** 2 + 20_000.0, seed=12, track_pairs=False)
    stats = current_statistics(simulate(plan), "left")
    assert abs(stats.variance - 2 / L) <= 4 * stats.variance_stderr

# Estimators

def test_quantum_dot_mean_current(dot_record):
    stats = current_statistics(dot_record, "left")
    assert stats.method == "batches"
    assert abs(stats.mean - 0.2) <= 3 * stats.mean_stderr


def test_quantum_dot_stationary_law(dot_record):
    p = stationary_distribution(quantum_dot_generator(2.0, 1.0, 1.0, 1.0))
    histogram = stationary_histogram(dot_record)
    assert histogram.sum() == pytest.approx(1.0)
    statistic, p_value, dof = chi_square_stationary(dot_record, p)
    assert dof == 1
    assert p_value > 0.01


def test_quantum_dot_variance_rate(dot_record):
    exact = scgf_derivatives(quantum_dot_generator(2.0, 1.0, 1.0, 1.0), "left")[1]
    assert exact == pytest.approx(0.584, rel=1e-6)
    stats = current_statistics(dot_record, "left")
    assert abs(stats.variance - exact) <= 4 * stats.variance_stderr


def test_chain_mean_current(chain_record):
    for observable in ("left", "right"):
        stats = current_statistics(chain_record, observable)
        assert abs(stats.mean - 1 / 9) <= 3 * stats.mean_stderr


def test_chain_variance_rate(chain_record, chain_params):
    exact = scgf_derivatives(ssep_generator(chain_params), "left")[1]
    stats = current_statistics(chain_record, "left")
    assert abs(stats.variance - exact) <= 4 * stats.variance_stderr


def test_chain_profile(chain_record, chain_params):
    occ = occupation_statistics(chain_record)
    exact, _ = ssep_steady_statistics(chain_params)
    assert np.all(occ.mean >= 0) and np.all(occ.mean <= 1)
    # eight sites tested at once
    assert np.all(np.abs(occ.mean - exact) <= 4 * occ.stderr)


def test_chain_end_to_end_correlation(chain_record, chain_params):
    occ = occupation_statistics(chain_record)
    exact = ssep_correlations_exact(chain_params, (1, 8))
    assert exact < 0
    assert abs(occ.connected[0, 7] - exact) <= 4 * occ.connected_stderr[0, 7]


def test_equilibrium_chain_has_no_current_or_correlations():
    params = SsepParams(4, 0.5, 0.5, 0.5, 0.5)
    record = simulate(SimulationPlan(params, t_max=160.0 + 10_000.0, seed=8))
    stats = current_statistics(record, "left")
    assert abs(stats.mean) <= 3 * stats.mean_stderr
    occ = occupation_statistics(record)
    off_diagonal = ~np.eye(4, dtype=bool)
    assert np.all(np.abs(occ.connected[off_diagonal]) <= 4 * occ.connected_stderr[off_diagonal])


def test_replica_estimates(chain_params):
    plan = SimulationPlan(SsepParams(2, 1.0, 0.0, 1.0, 0.0), t_max=40.0 + 200.0, n_replicas=40, seed=6)
    stats = current_statistics(simulate(plan), "left")
    assert stats.method == "replicas"
    assert stats.samples == 40
    assert abs(stats.mean - 1 / 3) <= 3 * stats.mean_stderr
    assert stats.variance > 0


def test_too_few_batches():
    plan = SimulationPlan(quantum_dot_generator(1.0, 1.0, 1.0, 1.0), t_max=50.0, n_batches=5)
    record = simulate(plan)
    with pytest.raises(InsufficientData):
        current_statistics(record)
    with pytest.raises(InsufficientData):
        occupation_statistics(record)


def test_histogram_needs_a_generator(chain_record):
    with pytest.raises(DomainViolation):
        stationary_histogram(chain_record)
