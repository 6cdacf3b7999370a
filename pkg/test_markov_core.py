"""Tests for finite Markov generators, SCGFs and the symmetry checks."""
import numpy as np
import pytest

from src.exceptions import (
    DimensionMismatch, IndexOutOfRange, IrreversibleTransition, NegativeRate,
    NonIrreducible, NotMultiBath, QOutOfRange,
)
from src.lattice_models import (
    SsepParams, quantum_dot_generator, quantum_dot_scgf, ssep_generator, two_level_multibath,
)
from src.markov_core import (
    ENTROPY,
    RateCurve,
    build_generator,
    detailed_balance_holds,
    entropy_production_rate,
    fano_factor,
    gc_symmetry_defect,
    generator_from_arrays,
    current_symmetry_defect,
    linear_response_matrix,
    load_generator,
    mean_rate,
    onsager_response_matrix,
    rate_function,
    rate_function_symmetry_defect,
    save_generator,
    scgf,
    scgf_curve,
    scgf_derivatives,
    scgf_value,
    stationary_distribution,
    tilted_generator,
    uniformize,
    with_entropy_observable,
)


@pytest.fixture
def driven_dot():
    return quantum_dot_generator(1.0, 0.0, 1.0, 0.0)


def random_reversible_generator(rng, n_states):
    """Ring backbone plus random chords, one channel each way per edge."""
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


# Construction

def test_quantum_dot_has_four_labelled_transitions():
    gen = build_generator(2, [
        (0, 1, 2.0, (1, 0)),
        (0, 1, 1.0, (0, -1)),
        (1, 0, 1.0, (-1, 0)),
        (1, 0, 1.0, (0, 1)),
    ], ("left", "right"))
    assert gen.n_states == 2
    assert gen.n_transitions == 4
    np.testing.assert_allclose(gen.matrix().sum(axis=0), 0.0, atol=1e-15)


def test_one_way_chain_is_rejected():
    with pytest.raises(NonIrreducible):
        build_generator(2, [(0, 1, 1.0, ())])


def test_negative_rate_is_rejected():
    with pytest.raises(NegativeRate):
        build_generator(2, [(0, 1, -1.0, ()), (1, 0, 1.0, ())])


@pytest.mark.parametrize("transition", [(0, 2, 1.0, ()), (1, 1, 1.0, ())])
def test_bad_indices_are_rejected(transition):
    with pytest.raises(IndexOutOfRange):
        build_generator(2, [(0, 1, 1.0, ()), (1, 0, 1.0, ()), transition])


def test_increment_length_must_match_observables():
    with pytest.raises(DimensionMismatch):
        build_generator(2, [(0, 1, 1.0, (1, 0)), (1, 0, 1.0, (1,))], ("a", "b"))


def test_generator_document_round_trip(tmp_path, driven_dot):
    path = save_generator(driven_dot, tmp_path / "dot.json")
    loaded = load_generator(path)
    assert loaded.observable_names == driven_dot.observable_names
    np.testing.assert_array_equal(loaded.matrix(), driven_dot.matrix())


def test_uniformized_matrix_is_stochastic(driven_dot):
    t = uniformize(driven_dot).toarray()
    assert t.min() >= 0
    np.testing.assert_allclose(t.sum(axis=0), 1.0, atol=1e-15)


# Stationary state and entropy production

def test_quantum_dot_stationary_state():
    p = stationary_distribution(quantum_dot_generator(2.0, 1.0, 1.0, 1.0))
    np.testing.assert_allclose(p, [2 / 5, 3 / 5], atol=1e-14)


def test_two_site_chain_stationary_state():
    gen = ssep_generator(SsepParams(2, 1.0, 0.0, 1.0, 0.0))
    p = stationary_distribution(gen)
    np.testing.assert_allclose(p, [1 / 6, 1 / 2, 1 / 6, 1 / 6], atol=1e-13)
    assert np.max(np.abs(gen.matrix() @ p)) <= 1e-12 * gen.max_rate


def test_symmetric_two_state_chain():
    gen = build_generator(2, [(0, 1, 3.0, ()), (1, 0, 3.0, ())])
    np.testing.assert_allclose(stationary_distribution(gen), [0.5, 0.5])


def test_entropy_production_of_driven_dot():
    s = entropy_production_rate(quantum_dot_generator(2.0, 1.0, 1.0, 1.0))
    assert s == pytest.approx(np.log(2.0) / 5.0, abs=1e-12)


def test_entropy_production_vanishes_at_equilibrium():
    gen = quantum_dot_generator(1.0, 1.0, 1.0, 1.0)
    assert entropy_production_rate(gen) <= 1e-12
    assert detailed_balance_holds(gen)


def test_entropy_production_needs_reverse_transitions():
    with pytest.raises(IrreversibleTransition):
        entropy_production_rate(ssep_generator(SsepParams(2, 1.0, 0.0, 1.0, 0.0)))


@pytest.mark.parametrize("seed", range(5))
def test_entropy_production_matches_cycle_criterion(seed):
    rng = np.random.default_rng(seed)
    gen = random_reversible_generator(rng, 6)
    s = entropy_production_rate(gen)
    assert s >= 0
    assert (s <= 1e-12) == detailed_balance_holds(gen)


def test_potential_rates_satisfy_detailed_balance():
    energies = np.array([0.0, 0.7, -0.3, 1.1])
    transitions = [(a, b, np.exp(-(energies[b] - energies[a]) / 2), ())
                   for a in range(4) for b in range(4) if a != b]
    gen = build_generator(4, transitions)
    assert detailed_balance_holds(gen)
    assert entropy_production_rate(gen) <= 1e-12


# Tilted generators and SCGF

def test_zero_tilt_is_the_base_generator(driven_dot):
    tilted = tilted_generator(driven_dot, [0.0, 0.0])
    np.testing.assert_array_equal(tilted.matrix(), driven_dot.matrix())


def test_tilted_quantum_dot_matrix():
    alpha, gamma, beta, delta, lam = 1.3, 0.4, 0.9, 0.2, 0.7
    gen = ssep_generator(SsepParams(1, alpha, gamma, beta, delta))
    m = tilted_generator(gen, [lam, 0.0, 0.0]).matrix()
    expected = np.array([
        [-(alpha + delta), beta + gamma * np.exp(-lam)],
        [alpha * np.exp(lam) + delta, -(beta + gamma)],
    ])
    np.testing.assert_allclose(m, expected, rtol=1e-14)


def test_entropy_tilt_entries():
    gen = with_entropy_observable(quantum_dot_generator(2.0, 1.0, 1.0, 1.0))
    lam = 0.3
    m = tilted_generator(gen, [0.0, 0.0, lam]).matrix()
    base = gen.matrix()
    # 0 -> 1 aggregates the alpha and delta channels, each against its own reverse
    expected = 2.0 ** (1 + lam) * 1.0 ** (-lam) + 1.0
    assert m[1, 0] == pytest.approx(expected, rel=1e-14)
    assert m[0, 0] == base[0, 0]


def test_tilt_dimension_mismatch(driven_dot):
    with pytest.raises(DimensionMismatch):
        tilted_generator(driven_dot, [0.1])


def test_scgf_of_driven_dot(driven_dot):
    result = scgf(tilted_generator(driven_dot, [2 * np.log(2), 0.0]))
    assert result.eigenvalue == pytest.approx(1.0, abs=1e-12)
    assert np.all(result.left_vector > 0) and np.all(result.right_vector > 0)
    assert result.right_vector.sum() == pytest.approx(1.0)
    assert result.left_vector @ result.right_vector == pytest.approx(1.0)


def test_scgf_at_zero_tilt_gives_stationary_vector():
    gen = ssep_generator(SsepParams(3, 0.7, 0.2, 0.5, 0.1))
    result = scgf(tilted_generator(gen, np.zeros(gen.n_observables)))
    assert abs(result.eigenvalue) <= 1e-12
    np.testing.assert_allclose(result.right_vector, stationary_distribution(gen), atol=1e-12)


def test_dense_and_power_paths_agree():
    gen = ssep_generator(SsepParams(3, 1.0, 0.0, 1.0, 0.0))
    tilted = tilted_generator(gen, [0.5, 0.0])
    dense = scgf(tilted, method="dense")
    power = scgf(tilted, method="power")
    assert power.eigenvalue == pytest.approx(dense.eigenvalue, abs=1e-10)
    assert power.iterations > 0


@pytest.mark.parametrize("seed", range(20))
def test_quantum_dot_closed_form(seed):
    rates = np.random.default_rng(seed).uniform(0.1, 3.0, 4)
    gen = quantum_dot_generator(*rates)
    for lam in np.linspace(-3.0, 3.0, 61):
        assert scgf_value(gen, lam, "left") == pytest.approx(quantum_dot_scgf(*rates, lam), abs=1e-10)


# Cumulants and rate functions

def test_driven_dot_cumulants(driven_dot):
    mean, variance = scgf_derivatives(driven_dot, "left", order=2)
    assert mean == pytest.approx(0.5, abs=1e-12)
    assert variance == pytest.approx(0.25, abs=1e-6)
    assert fano_factor(driven_dot, "left") == pytest.approx(0.5, abs=1e-6)


def test_equilibrium_dot_has_zero_mean_current():
    assert scgf_derivatives(quantum_dot_generator(1.0, 1.0, 1.0, 1.0), "left", order=1)[0] \
        == pytest.approx(0.0, abs=1e-13)


def test_mean_current_of_four_site_chain():
    gen = ssep_generator(SsepParams(4, 1.0, 0.0, 1.0, 0.0))
    assert scgf_derivatives(gen, "left", order=1)[0] == pytest.approx(0.2, abs=1e-12)
    assert mean_rate(gen, "right") == pytest.approx(0.2, abs=1e-12)


def test_rate_function_of_driven_dot(driven_dot):
    curve = rate_function(driven_dot, [0.5, 1.0], "left")
    assert curve.kind == "rate_function"
    assert curve.y[0] == pytest.approx(0.0, abs=1e-12)
    assert curve.y[1] == pytest.approx(2 * np.log(2) - 1, abs=1e-10)


def test_rate_function_is_convex(driven_dot):
    rng = np.random.default_rng(7)
    for _ in range(20):
        q1, q2 = rng.uniform(0.05, 3.0, 2)
        w = rng.uniform()
        qm = w * q1 + (1 - w) * q2
        curve = rate_function(driven_dot, [q1, q2, qm], "left")
        value = dict(zip(curve.x, curve.y))
        assert value[qm] <= w * value[q1] + (1 - w) * value[q2] + 1e-9


def test_rate_function_outside_window(driven_dot):
    with pytest.raises(QOutOfRange):
        rate_function(driven_dot, [-0.5], "left")


def test_rate_function_from_sampled_scgf(driven_dot):
    curve = scgf_curve(driven_dot, np.linspace(-4.0, 4.0, 401), "left")
    assert curve.kind == "scgf"
    assert curve.is_convex()
    sampled = rate_function(curve, [1.0])
    assert sampled.y[0] == pytest.approx(2 * np.log(2) - 1, abs=1e-6)


def test_rate_curve_needs_increasing_abscissae():
    with pytest.raises(ValueError):
        RateCurve(np.array([0.0, 0.0]), np.array([1.0, 2.0]), "scgf")


# Symmetries

def test_gallavotti_cohen_on_driven_dot():
    assert gc_symmetry_defect(quantum_dot_generator(2.0, 1.0, 1.0, 1.0)) <= 1e-10


@pytest.mark.parametrize("seed", range(10))
def test_gallavotti_cohen_on_random_chains(seed):
    rng = np.random.default_rng(100 + seed)
    gen = random_reversible_generator(rng, int(rng.integers(3, 24)))
    assert gc_symmetry_defect(gen) <= 1e-9


def test_boundary_tilt_symmetry_of_open_chain():
    params = SsepParams(4, 0.9, 0.3, 0.8, 0.2)
    gen = ssep_generator(params)
    affinity = np.log(0.9 * 0.8 / (0.3 * 0.2))
    assert current_symmetry_defect(gen, "left", affinity) <= 1e-9


@pytest.mark.parametrize("L", [1, 2, 3, 4, 5, 6])
def test_boundary_tilt_symmetry_for_small_chains(L):
    params = SsepParams(L, 1.1, 0.4, 0.7, 0.3)
    gen = ssep_generator(params)
    assert current_symmetry_defect(gen, "left", params.boundary_affinity) <= 1e-9


def test_asymmetric_chain_symmetry_shift():
    params = SsepParams(3, 0.9, 0.3, 0.8, 0.2, r=0.5)
    gen = ssep_generator(params)
    shifted = np.log(0.9 * 0.8 / (0.3 * 0.2)) - 2 * np.log(0.5)
    assert params.boundary_affinity == pytest.approx(shifted)
    assert current_symmetry_defect(gen, "left", shifted) <= 1e-9


def test_rate_function_fluctuation_relation():
    params = SsepParams(4, 0.9, 0.3, 0.8, 0.2)
    gen = ssep_generator(params)
    defect = rate_function_symmetry_defect(gen, "left", params.boundary_affinity, [0.01, 0.03, 0.05])
    assert defect <= 1e-8


def test_entropy_observable_is_appended_once():
    gen = with_entropy_observable(quantum_dot_generator(2.0, 1.0, 1.0, 1.0))
    assert gen.observable_names[-1] == ENTROPY
    assert with_entropy_observable(gen) is gen


# Onsager reciprocity

def test_onsager_reciprocity_with_three_baths():
    result = onsager_response_matrix(two_level_multibath((1.0, 1.1, 0.9)))
    assert result.symmetry_defect <= 1e-8


def test_equal_temperatures_give_symmetric_covariance():
    result = onsager_response_matrix(two_level_multibath((1.0, 1.0, 1.0)))
    assert result.matrix[0, 1] == pytest.approx(result.matrix[1, 0], abs=1e-8)
    assert result.matrix[0, 0] > 0


def test_swapped_observables_transpose_the_matrix():
    gen = two_level_multibath((1.0, 1.1, 0.9))
    forward = onsager_response_matrix(gen, (0, 1)).matrix
    backward = onsager_response_matrix(gen, (1, 0)).matrix
    np.testing.assert_allclose(backward, forward[::-1, ::-1], atol=1e-9)


def test_single_observable_is_not_multibath():
    with pytest.raises(NotMultiBath):
        onsager_response_matrix(generator_from_arrays(2, [0, 1], [1, 0], [1.0, 1.0]))


def test_linear_response_matches_equilibrium_covariance():
    temperatures = (1.0, 1.0, 1.0)
    response = linear_response_matrix(lambda t: two_level_multibath(t), temperatures)
    hessian_form = onsager_response_matrix(two_level_multibath(temperatures)).matrix
    np.testing.assert_allclose(response, hessian_form, rtol=1e-4, atol=1e-7)
