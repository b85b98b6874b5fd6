import math

import numpy as np
import pytest
from scipy.stats import chisquare

from src import analytic_formulas as af
from src.collective_protocol import (
    CollectiveVerifier,
    ProjectedEnsemble,
    RoundOutcome,
    RunStats,
    Scheme,
    default_workers,
    pass_probability_exact,
    prepare_ensemble,
    round_generator,
    run_experiment,
    run_round,
    subset_pass_probabilities,
    swap_projection_apply,
    unmeasured_fidelity_exact,
)
from src.noise_models import (
    GLOBAL_UNITARY_CONTROL,
    GLOBAL_WHITE,
    INDEPENDENT_WHITE,
    NOISE_KINDS,
    ORTHOGONAL_MIXTURE,
    NoiseSpec,
    build_ensemble,
)
from src.qstate_core import (
    DensityMatrix,
    ParameterError,
    kron_power,
    maximally_mixed,
    random_density_matrix,
)
from src.target_states import bell, dicke, ghz, homogeneous_strategy

EPSILON = 0.01


def closed_form(kind, scheme, lam, epsilon, d):
    return af.pass_probability(kind, scheme.k, scheme.t, lam, epsilon, d)


@pytest.mark.parametrize("k,t,delta", [(1, 1, 0.1), (3, 0, 0.1), (3, 4, 0.1), (3, 1, 1.0)])
def test_scheme_validation(k, t, delta):
    with pytest.raises(ParameterError):
        Scheme(k, t, delta)


def test_scheme_subsets():
    scheme = Scheme(4, 2)
    assert scheme.num_subsets == 6
    assert scheme.subsets()[0] == (0, 1)
    assert len(set(scheme.subsets())) == 6


@pytest.mark.parametrize("k", [2, 3, 4])
def test_swap_projection_leaves_target_unchanged(bell_target, k):
    ensemble = kron_power(bell_target.projector(), k)
    projected, weight = swap_projection_apply(ensemble, k, 4)
    assert weight == pytest.approx(1.0)
    np.testing.assert_allclose(projected.data, ensemble.data, atol=1e-12)


def test_swap_projection_on_maximally_mixed():
    _, weight = swap_projection_apply(maximally_mixed(16), 2, 4)
    assert weight == pytest.approx(0.5 * (1 + 1 / 4))


def test_swap_projection_is_linear(rng):
    a = random_density_matrix(4, rng)
    b = random_density_matrix(4, rng)
    mixed = DensityMatrix(0.3 * a.data + 0.7 * b.data)
    combined, _ = swap_projection_apply(mixed, 2, 4)
    first, _ = swap_projection_apply(a, 2, 4)
    second, _ = swap_projection_apply(b, 2, 4)
    np.testing.assert_allclose(combined.data, 0.3 * first.data + 0.7 * second.data, atol=1e-12)


@pytest.mark.parametrize("k", [2, 3, 4])
def test_swap_projection_weight_on_iid_ensembles(rng, k):
    sigma = random_density_matrix(1, rng)
    _, weight = swap_projection_apply(kron_power(sigma, k), k, 2)
    power = np.trace(np.linalg.matrix_power(sigma.data, k)).real
    assert weight == pytest.approx((1 + power) / 2, abs=1e-12)


def test_swap_projection_rejects_wrong_dimension(rng):
    with pytest.raises(ParameterError):
        swap_projection_apply(random_density_matrix(3, rng), 2, 4)


@pytest.mark.parametrize("k,t", [(2, 1), (2, 2), (3, 1), (3, 2), (4, 3)])
def test_pure_target_always_passes(bell_target, bell_strategy, k, t):
    ensemble = kron_power(bell_target.projector(), k)
    assert pass_probability_exact(Scheme(k, t), ensemble, bell_strategy) == pytest.approx(1.0)
    if t < k:
        assert unmeasured_fidelity_exact(Scheme(k, t), ensemble, bell_strategy) == \
            pytest.approx(1.0)


def test_bell_pair_independent_white_noise(bell_strategy):
    scheme = Scheme(2, 1)
    ensemble = prepare_ensemble(scheme, NoiseSpec(INDEPENDENT_WHITE, EPSILON), bell_strategy)
    exact = pass_probability_exact(scheme, ensemble, bell_strategy)
    assert exact == pytest.approx(af.p_in(2, 1, 1 / 3, EPSILON, 4), abs=1e-10)
    assert exact == pytest.approx(0.9867222, abs=1e-7)


def test_bell_pair_global_white_noise(bell_strategy):
    scheme = Scheme(2, 1)
    ensemble = prepare_ensemble(scheme, NoiseSpec(GLOBAL_WHITE, EPSILON), bell_strategy)
    exact = pass_probability_exact(scheme, ensemble, bell_strategy)
    assert exact == pytest.approx(af.p_cn(2, 1, 1 / 3, EPSILON, 4), abs=1e-10)
    assert exact == pytest.approx(0.9908333, abs=1e-7)


def _check_engine_against_closed_forms(target, kind, lam, epsilon, ks):
    strategy = homogeneous_strategy(target, lam)
    d = target.dimension
    for k in ks:
        ensemble = prepare_ensemble(Scheme(k, 1), NoiseSpec(kind, epsilon), strategy)
        projected = ProjectedEnsemble(ensemble, k)
        for t in range(1, k + 1):
            scheme = Scheme(k, t)
            exact = pass_probability_exact(scheme, projected, strategy)
            assert exact == pytest.approx(closed_form(kind, scheme, lam, epsilon, d),
                                          abs=1e-10), (kind, k, t)


@pytest.mark.parametrize("kind", NOISE_KINDS)
@pytest.mark.parametrize("lam", [0.0, 1 / 3, 0.9])
@pytest.mark.parametrize("epsilon", [0.0, 0.01, 0.1])
def test_exact_engine_matches_closed_forms(small_target, kind, lam, epsilon):
    ks = [2, 3, 4] if small_target.dimension == 4 else [2, 3]
    _check_engine_against_closed_forms(small_target, kind, lam, epsilon, ks)


@pytest.mark.slow
@pytest.mark.parametrize("target", [ghz(3), dicke(3, 1)], ids=["ghz3", "dicke31"])
@pytest.mark.parametrize("kind", NOISE_KINDS)
@pytest.mark.parametrize("lam", [0.0, 1 / 3, 0.9])
@pytest.mark.parametrize("epsilon", [0.0, 0.01, 0.1])
def test_exact_engine_matches_closed_forms_four_copies(target, kind, lam, epsilon):
    _check_engine_against_closed_forms(target, kind, lam, epsilon, [4])


@pytest.mark.parametrize("kind", [INDEPENDENT_WHITE, GLOBAL_UNITARY_CONTROL])
def test_rotated_subsets_share_reduced_states(bell_strategy, kind):
    scheme = Scheme(4, 2)
    ensemble = prepare_ensemble(scheme, NoiseSpec(kind, 0.1), bell_strategy)
    shared = ProjectedEnsemble(ensemble, 4)
    direct = ProjectedEnsemble(ensemble, 4)
    direct.cyclic = False
    assert subset_pass_probabilities(scheme, shared, bell_strategy) == \
        pytest.approx(subset_pass_probabilities(scheme, direct, bell_strategy), abs=1e-12)
    assert unmeasured_fidelity_exact(scheme, shared, bell_strategy) == \
        pytest.approx(unmeasured_fidelity_exact(scheme, direct, bell_strategy), abs=1e-12)
    if shared.cyclic:
        assert len(shared._reduced) < len(direct._reduced)


def test_projected_ensemble_detects_cyclic_symmetry(bell_strategy, rng):
    ensemble = prepare_ensemble(Scheme(3, 1), NoiseSpec(INDEPENDENT_WHITE, 0.1), bell_strategy)
    assert ProjectedEnsemble(ensemble, 3).cyclic
    assert not ProjectedEnsemble(random_density_matrix(4, rng), 2).cyclic


def test_projected_ensemble_must_match_scheme(bell_strategy):
    ensemble = prepare_ensemble(Scheme(2, 1), NoiseSpec(INDEPENDENT_WHITE, 0.1), bell_strategy)
    projected = ProjectedEnsemble(ensemble, 2)
    assert pass_probability_exact(Scheme(2, 1), projected, bell_strategy) == \
        pytest.approx(pass_probability_exact(Scheme(2, 1), ensemble, bell_strategy), abs=1e-14)
    with pytest.raises(ParameterError, match="projected for k=2"):
        pass_probability_exact(Scheme(4, 1), projected, bell_strategy)


@pytest.mark.parametrize("k,t", [(3, 1), (3, 2), (4, 2)])
def test_iid_subset_terms_are_equal(bell_strategy, k, t):
    scheme = Scheme(k, t)
    ensemble = prepare_ensemble(scheme, NoiseSpec(INDEPENDENT_WHITE, 0.1), bell_strategy)
    terms = subset_pass_probabilities(scheme, ensemble, bell_strategy)
    assert len(terms) == math.comb(k, t)
    assert max(terms) - min(terms) <= 1e-12


def test_pass_probability_decreases_with_epsilon(bell_strategy):
    scheme = Scheme(2, 1)
    values = []
    for epsilon in np.linspace(0.0, 0.3, 13):
        ensemble = prepare_ensemble(scheme, NoiseSpec(INDEPENDENT_WHITE, epsilon), bell_strategy)
        values.append(pass_probability_exact(scheme, ensemble, bell_strategy))
    assert all(a > b for a, b in zip(values, values[1:]))


def test_unmeasured_fidelity_needs_spare_copy(bell_target, bell_strategy):
    ensemble = kron_power(bell_target.projector(), 2)
    with pytest.raises(ParameterError, match="unmeasured"):
        unmeasured_fidelity_exact(Scheme(2, 2), ensemble, bell_strategy)


def test_unmeasured_infidelity_bell_pair(bell_strategy):
    scheme = Scheme(2, 1)
    ensemble = prepare_ensemble(scheme, NoiseSpec(INDEPENDENT_WHITE, EPSILON), bell_strategy)
    infidelity = 1 - unmeasured_fidelity_exact(scheme, ensemble, bell_strategy)
    assert infidelity == pytest.approx(
        af.output_infidelity(INDEPENDENT_WHITE, 2, 1, 1 / 3, EPSILON, 4), abs=1e-10)
    assert infidelity == pytest.approx(0.0050391, abs=1e-7)


@pytest.mark.parametrize("k", [2, 3, 4])
def test_unmeasured_infidelity_matches_exact_formula(bell_strategy, k):
    scheme = Scheme(k, 1)
    for kind in (INDEPENDENT_WHITE, ORTHOGONAL_MIXTURE, GLOBAL_WHITE):
        ensemble = prepare_ensemble(scheme, NoiseSpec(kind, EPSILON), bell_strategy)
        infidelity = 1 - unmeasured_fidelity_exact(scheme, ensemble, bell_strategy)
        assert infidelity == pytest.approx(
            af.output_infidelity(kind, k, 1, 1 / 3, EPSILON, 4), abs=1e-10), kind


@pytest.mark.parametrize("k,t", [(2, 1), (3, 1), (3, 2), (4, 2)])
def test_unmeasured_infidelity_global_unitary_control(bell_strategy, k, t):
    scheme = Scheme(k, t)
    ensemble = prepare_ensemble(scheme, NoiseSpec(GLOBAL_UNITARY_CONTROL, EPSILON),
                                bell_strategy)
    infidelity = 1 - unmeasured_fidelity_exact(scheme, ensemble, bell_strategy)
    assert infidelity == pytest.approx(EPSILON / (1 - EPSILON * (2 / 3) * t), abs=1e-11)


def test_luders_chain_reproduces_joint_probabilities(bell_strategy):
    scheme = Scheme(3, 2)
    ensemble = prepare_ensemble(scheme, NoiseSpec(GLOBAL_WHITE, 0.1), bell_strategy)
    verifier = CollectiveVerifier(scheme, ensemble, bell_strategy)
    joint = subset_pass_probabilities(scheme, ensemble, bell_strategy)
    for chain, expected in zip(verifier.chains, joint):
        assert verifier.ancilla_weight * np.prod(chain) == pytest.approx(expected, abs=1e-12)


def test_run_round_outcome(bell_target, bell_strategy):
    scheme = Scheme(3, 2)
    outcome = run_round(scheme, NoiseSpec(INDEPENDENT_WHITE, 0.0), bell_strategy,
                        round_generator(7, 0))
    assert outcome == RoundOutcome(ancilla_passed=True, qsv_passed=True,
                                   measured_indices=outcome.measured_indices)
    assert len(outcome.measured_indices) == 2
    assert outcome.passed


def test_pure_target_passes_every_round(bell_strategy):
    stats = run_experiment(Scheme(2, 1), NoiseSpec(INDEPENDENT_WHITE, 0.0), bell_strategy,
                           rounds=300, seed=11)
    assert stats.rounds_passed == stats.rounds_attempted == stats.ancilla_passes == 300
    assert stats.pass_rate == 1.0
    assert stats.posted_unmeasured_infidelity == pytest.approx(0.0, abs=1e-12)


def test_zero_rounds(bell_strategy):
    stats = run_experiment(Scheme(2, 1), NoiseSpec(INDEPENDENT_WHITE, EPSILON), bell_strategy,
                           rounds=0, seed=1)
    assert not stats.pass_rate_defined
    assert math.isnan(stats.pass_rate)
    assert all(math.isnan(x) for x in stats.wilson_ci_95)
    assert stats.subset_counts == {}


def test_same_seed_is_reproducible(bell_strategy):
    noise = NoiseSpec(INDEPENDENT_WHITE, 0.1)
    first = run_experiment(Scheme(3, 1), noise, bell_strategy, rounds=2000, seed=99)
    second = run_experiment(Scheme(3, 1), noise, bell_strategy, rounds=2000, seed=99)
    other = run_experiment(Scheme(3, 1), noise, bell_strategy, rounds=2000, seed=100)
    assert first == second
    assert first != other


def test_thread_count_does_not_change_results(bell_strategy):
    noise = NoiseSpec(GLOBAL_WHITE, 0.1)
    serial = run_experiment(Scheme(2, 1), noise, bell_strategy, rounds=10000, seed=5, workers=1)
    parallel = run_experiment(Scheme(2, 1), noise, bell_strategy, rounds=10000, seed=5,
                              workers=4)
    assert serial == parallel


def test_run_stats_merge_is_commutative():
    a = RunStats(rounds_attempted=10, rounds_passed=7, ancilla_passes=9,
                 subset_counts={(0,): 5, (1,): 4})
    b = RunStats(rounds_attempted=5, rounds_passed=5, ancilla_passes=5,
                 subset_counts={(1,): 5}, posted_unmeasured_infidelity=0.01)
    assert a.merge(b) == b.merge(a)
    merged = a.merge(b)
    assert merged.rounds_attempted == 15
    assert merged.subset_counts == {(0,): 5, (1,): 9}
    low, high = merged.wilson_ci_95
    assert low < merged.pass_rate < high


def test_round_generator_rejects_bad_seed():
    with pytest.raises(ParameterError):
        round_generator(-1, 0)


def test_default_workers_from_environment(monkeypatch):
    monkeypatch.setenv("QSV_THREADS", "3")
    assert default_workers() == 3
    monkeypatch.setenv("QSV_THREADS", "many")
    assert default_workers() == 1
    monkeypatch.delenv("QSV_THREADS")
    assert default_workers() == 1


@pytest.mark.slow
def test_monte_carlo_pass_rate_matches_closed_form():
    target = bell()
    strategy = homogeneous_strategy(target, 1 / 3)
    rounds = 100_000
    stats = run_experiment(Scheme(2, 1), NoiseSpec(INDEPENDENT_WHITE, EPSILON), strategy,
                           rounds=rounds, seed=20240601, workers=2)
    expected = af.p_in(2, 1, 1 / 3, EPSILON, 4)
    sigma = math.sqrt(expected * (1 - expected) / rounds)
    assert abs(stats.pass_rate - expected) <= 3 * sigma
    low, high = stats.wilson_ci_95
    assert low < stats.pass_rate < high


@pytest.mark.slow
def test_subset_choice_is_uniform(bell_strategy):
    rounds = 100_000
    stats = run_experiment(Scheme(3, 1), NoiseSpec(INDEPENDENT_WHITE, 0.0), bell_strategy,
                           rounds=rounds, seed=4242)
    counts = [stats.subset_counts.get((m,), 0) for m in range(3)]
    assert sum(counts) == rounds
    assert chisquare(counts).pvalue > 0.01
