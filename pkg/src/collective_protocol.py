"""
Collective QSV - Collective Protocol

This module handles the Pi_{k,t} protocol: the SWAP projection D_k on k copies,
a uniformly random choice of t copies, and standard QSV on those copies. It
evaluates the protocol exactly at operator level and samples rounds by Monte
Carlo with reproducible per-round random streams.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from math import comb
from typing import Optional

import numpy as np
from scipy.stats import binomtest

from src import config
from src.noise_models import build_ensemble
from src.qstate_core import (
    Operator,
    ParameterError,
    apply_local,
    check_dimension,
    cyclic_shift_permutation,
    partial_trace_array,
)
from src.target_states import orthogonal_eigenstate

logger = logging.getLogger(__name__)


class Scheme:
    """The pair (k, t) together with the failure budget delta"""

    def __init__(self, k, t, delta=config.DEFAULT_DELTA):
        """Initialize a scheme

        Args:
            k (int): Copies per round, k >= 2
            t (int): Measured copies per round, 1 <= t <= k
            delta (float): Failure budget, 0 < delta < 1
        """
        if k < 2:
            raise ParameterError(f"ensemble size k must be >= 2, got {k}")
        if not 1 <= t <= k:
            raise ParameterError(f"measured subset size t must lie in [1, {k}], got {t}")
        if not 0.0 < delta < 1.0:
            raise ParameterError(f"delta must lie in (0, 1), got {delta}")
        self.k = int(k)
        self.t = int(t)
        self.delta = float(delta)

    @property
    def num_subsets(self):
        return comb(self.k, self.t)

    def subsets(self):
        """All size-t subsets of copy indices, in lexicographic order"""
        return list(combinations(range(self.k), self.t))

    def __eq__(self, other):
        return (isinstance(other, Scheme)
                and (self.k, self.t, self.delta) == (other.k, other.t, other.delta))

    def __hash__(self):
        return hash((self.k, self.t, self.delta))

    def __repr__(self):
        return f"Scheme(k={self.k}, t={self.t}, delta={self.delta})"


@dataclass(frozen=True)
class RoundOutcome:
    """Result of one protocol round"""
    ancilla_passed: bool
    qsv_passed: Optional[bool]  # None when the ancilla already failed
    measured_indices: tuple = ()

    @property
    def passed(self):
        return self.ancilla_passed and bool(self.qsv_passed)


@dataclass
class RunStats:
    """Aggregated statistics of many rounds; merging is commutative"""
    rounds_attempted: int = 0
    rounds_passed: int = 0
    ancilla_passes: int = 0
    subset_counts: dict = field(default_factory=dict)
    posted_unmeasured_infidelity: Optional[float] = None

    @property
    def pass_rate_defined(self):
        return self.rounds_attempted > 0

    @property
    def pass_rate(self):
        if not self.pass_rate_defined:
            return float("nan")
        return self.rounds_passed / self.rounds_attempted

    @property
    def wilson_ci_95(self):
        """Wilson score interval of the pass rate, (nan, nan) without rounds"""
        if not self.pass_rate_defined:
            return (float("nan"), float("nan"))
        interval = binomtest(self.rounds_passed, self.rounds_attempted).proportion_ci(
            confidence_level=config.CONFIDENCE_LEVEL, method="wilson")
        return (float(interval.low), float(interval.high))

    def record(self, outcome):
        self.rounds_attempted += 1
        if outcome.ancilla_passed:
            self.ancilla_passes += 1
            key = tuple(outcome.measured_indices)
            self.subset_counts[key] = self.subset_counts.get(key, 0) + 1
        if outcome.passed:
            self.rounds_passed += 1

    def merge(self, other):
        """Combine two partial statistics into a new one"""
        counts = dict(self.subset_counts)
        for key, value in other.subset_counts.items():
            counts[key] = counts.get(key, 0) + value
        posted = self.posted_unmeasured_infidelity
        if posted is None:
            posted = other.posted_unmeasured_infidelity
        return RunStats(
            rounds_attempted=self.rounds_attempted + other.rounds_attempted,
            rounds_passed=self.rounds_passed + other.rounds_passed,
            ancilla_passes=self.ancilla_passes + other.ancilla_passes,
            subset_counts=counts,
            posted_unmeasured_infidelity=posted,
        )


def _copy_dimension(ensemble, k):
    d = int(round(ensemble.dimension ** (1.0 / k)))
    if d ** k != ensemble.dimension:
        raise ParameterError(f"ensemble dimension {ensemble.dimension} is not a {k}-th power")
    return d


def _inverse_shift(k, d):
    target = cyclic_shift_permutation(k, d)
    source = np.empty_like(target)
    source[target] = np.arange(target.size)
    return source


def swap_projection_array(entries, k, d):
    """D_k rho D_k^dagger with D_k = (1 + S_k)/2, on a raw matrix

    S_k is applied by index relabeling: (S rho)[target[i], :] = rho[i, :].
    """
    source = _inverse_shift(k, d)
    shifted_rows = entries[source, :]
    projected = entries + shifted_rows
    projected += shifted_rows[:, source]
    projected += entries[:, source]
    projected /= 4
    return projected


def swap_projection_apply(rho_ensemble, k, d):
    """Apply the SWAP projection as a Kraus operator

    Args:
        rho_ensemble (DensityMatrix): State of k copies
        k (int): Number of copies
        d (int): Per-copy dimension

    Returns:
        tuple: (Operator, float) unnormalized post-selected state and its weight
    """
    if rho_ensemble.dimension != d ** k:
        raise ParameterError(f"ensemble dimension {rho_ensemble.dimension} != {d}^{k}")
    check_dimension(d ** k, "SWAP projection")
    projected = swap_projection_array(rho_ensemble.data, k, d)
    projected += projected.conj().T
    projected /= 2
    weight = float(np.real(np.trace(projected)))
    return Operator(projected, hermitian=True), weight


def _local_product(operators):
    result = operators[0]
    for op in operators[1:]:
        result = np.kron(result, op)
    return result


def _canonical_rotation(kept_ops, k):
    """Relabel copies by the cyclic rotation giving the smallest sorted index tuple"""
    best = min(range(k), key=lambda r: sorted((m + r) % k for m in kept_ops))
    return {(m + best) % k: op for m, op in kept_ops.items()}


class ProjectedEnsemble:
    """A k-copy ensemble after the SWAP projection, shared by every subset and t

    Reduced states of the projected ensemble are cached per copy set. When the
    ensemble is invariant under the cyclic shift, so is its projection, and
    copy sets related by a rotation share one reduced state.
    """

    def __init__(self, ensemble, k):
        self.k = int(k)
        self.d = _copy_dimension(ensemble, self.k)
        projected, self.weight = swap_projection_apply(ensemble, self.k, self.d)
        self.data = projected.data

        source = _inverse_shift(self.k, self.d)
        self.cyclic = bool(np.allclose(ensemble.data[source][:, source], ensemble.data,
                                       rtol=0.0, atol=config.HERMITIAN_TOL))
        self._reduced = {}
        logger.debug("projected ensemble: k=%d d=%d weight %.6g cyclic=%s",
                     self.k, self.d, self.weight, self.cyclic)

    def reduced(self, copies):
        """Reduced projected state on the given copies, in increasing copy order"""
        copies = tuple(sorted(copies))
        if copies not in self._reduced:
            self._reduced[copies] = partial_trace_array(self.data, copies, [self.d] * self.k)
        return self._reduced[copies]

    def expectation(self, kept_ops):
        """tr[(ops on the kept copies (x) 1) projected] for a dict copy -> operator"""
        if self.cyclic:
            kept_ops = _canonical_rotation(kept_ops, self.k)
        keep = sorted(kept_ops)
        operator = _local_product([kept_ops[m] for m in keep])
        return float(np.real(np.trace(operator @ self.reduced(keep))))


def project_ensemble(scheme, ensemble):
    """ProjectedEnsemble for the scheme, reusing one that is already projected"""
    if isinstance(ensemble, ProjectedEnsemble):
        if ensemble.k != scheme.k:
            raise ParameterError(f"ensemble was projected for k={ensemble.k}, scheme has "
                                 f"k={scheme.k}")
        return ensemble
    return ProjectedEnsemble(ensemble, scheme.k)


def subset_pass_probabilities(scheme, ensemble, strategy):
    """Joint pass probability for every size-t subset, in Scheme.subsets() order

    ensemble may be a DensityMatrix or a ProjectedEnsemble built for scheme.k.
    """
    projected = project_ensemble(scheme, ensemble)
    if strategy.dimension != projected.d:
        raise ParameterError(
            f"strategy dimension {strategy.dimension} != copy dimension {projected.d}")
    omega = strategy.omega.data
    return [projected.expectation({m: omega for m in subset}) for subset in scheme.subsets()]


def pass_probability_exact(scheme, ensemble, strategy):
    """Exact passing probability of Pi_{k,t}, averaged over all subsets

    Args:
        scheme (Scheme): The (k, t) scheme
        ensemble (DensityMatrix | ProjectedEnsemble): State of the k copies
        strategy (Strategy): QSV strategy applied to each measured copy

    Returns:
        float: Probability that both the ancilla and all t tests pass
    """
    terms = subset_pass_probabilities(scheme, ensemble, strategy)
    return float(np.mean(terms))


def unmeasured_fidelity_exact(scheme, ensemble, strategy):
    """Fidelity of an unmeasured copy conditioned on the whole round passing

    Averaged over the subsets and over the unmeasured copies of each subset.

    Raises:
        ParameterError: If t == k (no copy is left unmeasured)
    """
    k, t = scheme.k, scheme.t
    if t >= k:
        raise ParameterError("t == k leaves no unmeasured copy")
    projected = project_ensemble(scheme, ensemble)
    omega = strategy.omega.data
    target = strategy.target.data
    target_projector = np.outer(target, target.conj())

    joint = []
    for subset in scheme.subsets():
        for spare in (m for m in range(k) if m not in subset):
            ops = {m: omega for m in subset}
            ops[spare] = target_projector
            joint.append(projected.expectation(ops))
    passing = pass_probability_exact(scheme, projected, strategy)
    if passing <= 0.0:
        raise ParameterError("the ensemble never passes; conditional fidelity undefined")
    return float(np.mean(joint)) / passing


def _sqrt_effect(omega):
    values, vectors = np.linalg.eigh(omega)
    values = np.sqrt(np.clip(values, 0.0, None))
    return (vectors * values) @ vectors.conj().T


class CollectiveVerifier:
    """Monte Carlo sampler for Pi_{k,t} rounds on a fixed ensemble

    Every quantity a round needs is precomputed here: the ancilla pass weight
    and, per subset, the chain of conditional pass probabilities produced by
    sequential Luders updates.
    """

    def __init__(self, scheme, ensemble, strategy):
        self.scheme = scheme
        self.strategy = strategy
        self.k = scheme.k
        self.subsets = scheme.subsets()

        projected = project_ensemble(scheme, ensemble)
        self.d = projected.d
        self.ancilla_weight = projected.weight
        self.chains = []
        if self.ancilla_weight > 0.0:
            post_state = projected.data / self.ancilla_weight
            root = _sqrt_effect(strategy.omega.data)
            for subset in self.subsets:
                self.chains.append(self._luders_chain(post_state, root, subset))
        logger.debug("verifier ready: k=%d t=%d ancilla weight %.6g",
                     self.k, scheme.t, self.ancilla_weight)

    def _luders_chain(self, state, root, subset):
        probabilities = []
        current = state
        for copy in subset:
            updated = apply_local(root, current, copy, self.k, self.d)
            probability = float(np.real(np.trace(updated)))
            probabilities.append(min(1.0, max(0.0, probability)))
            if probability <= 0.0:
                break
            current = updated / probability
        return probabilities

    def run_round(self, rng):
        """Sample one round

        Args:
            rng (np.random.Generator): The round's random stream

        Returns:
            RoundOutcome: Ancilla result, QSV result and measured copies
        """
        if rng.random() >= self.ancilla_weight:
            return RoundOutcome(ancilla_passed=False, qsv_passed=None)
        choice = int(rng.integers(len(self.subsets)))
        subset = self.subsets[choice]
        passed = True
        for probability in self.chains[choice]:
            if rng.random() >= probability:
                passed = False
                break
        if len(self.chains[choice]) < len(subset):
            passed = False
        return RoundOutcome(ancilla_passed=True, qsv_passed=passed, measured_indices=subset)

    def run_rounds(self, seed, start, stop):
        """Run rounds [start, stop) with their counter-based streams"""
        stats = RunStats()
        for index in range(start, stop):
            stats.record(self.run_round(round_generator(seed, index)))
        return stats


def round_generator(seed, round_index):
    """Random stream of one round: Philox keyed by (seed, round index)"""
    if not 0 <= seed <= config.MAX_SEED:
        raise ParameterError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.Philox(key=(int(round_index) << 64) | int(seed)))


def prepare_ensemble(scheme, noise, strategy):
    """Build the k-copy ensemble, defaulting psi_perp to the strategy's eigenstate"""
    psi_perp = noise.psi_perp
    if psi_perp is None:
        psi_perp = orthogonal_eigenstate(strategy)
    return build_ensemble(noise, strategy.target, scheme.k, psi_perp)


def run_round(scheme, noise, strategy, rng_stream):
    """Sample a single round of Pi_{k,t} for the given noise"""
    ensemble = prepare_ensemble(scheme, noise, strategy)
    return CollectiveVerifier(scheme, ensemble, strategy).run_round(rng_stream)


def default_workers():
    """Worker count from the QSV_THREADS environment variable"""
    raw = os.environ.get(config.THREADS_ENV_VAR, "")
    try:
        workers = int(raw) if raw else config.DEFAULT_THREADS
    except ValueError:
        logger.warning("ignoring non-integer %s=%r", config.THREADS_ENV_VAR, raw)
        workers = config.DEFAULT_THREADS
    return max(1, workers)


def run_experiment(scheme, noise, strategy, rounds, seed, workers=None):
    """Run many rounds and aggregate them

    Results do not depend on the worker count: round i always draws from the
    stream keyed by (seed, i).

    Args:
        scheme (Scheme): The (k, t) scheme
        noise (NoiseSpec): Noise model
        strategy (Strategy): QSV strategy
        rounds (int): Number of rounds
        seed (int): 64-bit seed
        workers (int, optional): Thread count, QSV_THREADS by default

    Returns:
        RunStats: Aggregated statistics with the exact unmeasured infidelity
    """
    if rounds < 0:
        raise ParameterError(f"rounds must be >= 0, got {rounds}")
    workers = default_workers() if workers is None else max(1, int(workers))
    ensemble = prepare_ensemble(scheme, noise, strategy)

    posted = None
    if scheme.t < scheme.k:
        posted = 1.0 - unmeasured_fidelity_exact(scheme, ensemble, strategy)
    stats = RunStats(posted_unmeasured_infidelity=posted)
    if rounds == 0:
        logger.info("no rounds requested; pass rate undefined")
        return stats

    verifier = CollectiveVerifier(scheme, ensemble, strategy)
    chunks = [(start, min(rounds, start + config.ROUND_CHUNK_SIZE))
              for start in range(0, rounds, config.ROUND_CHUNK_SIZE)]
    logger.info("running %d rounds of %r under %r on %d worker(s)",
                rounds, scheme, noise, workers)
    if workers == 1:
        partials = [verifier.run_rounds(seed, start, stop) for start, stop in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(lambda chunk: verifier.run_rounds(seed, *chunk), chunks))
    for partial in partials:
        stats = stats.merge(partial)
    return stats
