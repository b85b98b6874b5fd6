"""
Collective QSV - Analytic Formulas

This module contains the closed-form passing probabilities of Pi_{k,t} for
every noise kind, the resulting round and sample complexities, the output
infidelity of the unmeasured copies, the standard baselines and the
significance test used to tell correlated from independent noise.

Every function takes the copy dimension d as a plain Python int, so targets
with 2^100 amplitudes are fine here; powers of d are always formed as powers
of 1/d to stay in floating-point range.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import kl_div

from src.noise_models import (
    GLOBAL_UNITARY_CONTROL,
    GLOBAL_WHITE,
    INDEPENDENT_WHITE,
    NOISE_KINDS,
    ORTHOGONAL_MIXTURE,
    UNITARY_ROTATION,
)
from src.qstate_core import ParameterError

logger = logging.getLogger(__name__)


class DivergentRoundsError(ParameterError):
    """No finite number of rounds rejects the given noise"""


FIRST_ORDER = "first_order"
EXACT = "exact"
MODES = (FIRST_ORDER, EXACT)


@dataclass(frozen=True)
class ComplexityReport:
    """Rounds and samples needed by Pi_{k,t} for one noise model"""
    rounds_M: int
    samples_N: int
    unmeasured_copies: int
    output_infidelity: Optional[float]
    mode: str
    rounds_real: float


@dataclass(frozen=True)
class Baselines:
    """Sample counts of the schemes Pi_{k,t} is compared against"""
    n_opt: int
    n_std: Optional[int]
    n_adv: Optional[int]
    m_prime: Optional[int]


@dataclass(frozen=True)
class OnlinePlan:
    rounds: int
    extra_samples: int
    achieved_epsilon: float
    mode: str


@dataclass(frozen=True)
class SignificanceResult:
    """Significance exp(-KL * n) of an observed pass rate against a model"""
    observed_rate: float
    model_rate: float
    total_samples: int
    divergence: float
    significance: float


def _check_mode(mode):
    if mode not in MODES:
        raise ParameterError(f"unknown mode '{mode}', expected one of {MODES}")


def _check_common(lam, epsilon, t, k=None, d=None):
    if not 0.0 <= lam <= 1.0:
        raise ParameterError(f"lambda must lie in [0, 1], got {lam}")
    if not 0.0 <= epsilon <= 1.0:
        raise ParameterError(f"epsilon must lie in [0, 1], got {epsilon}")
    if t < 1:
        raise ParameterError(f"t must be >= 1, got {t}")
    if k is not None and not t <= k:
        raise ParameterError(f"t={t} exceeds k={k}")
    if d is not None and d < 2:
        raise ParameterError(f"copy dimension must be >= 2, got {d}")


def _log_delta_inverse(delta):
    if not 0.0 < delta < 1.0:
        raise ParameterError(f"delta must lie in (0, 1), got {delta}")
    return -math.log(delta)


def _standard_rate(lam, epsilon):
    """1 - epsilon + lambda epsilon, the single-copy pass probability"""
    return 1.0 - (1.0 - lam) * epsilon


def _orthogonal_tail(k, t, lam, epsilon, d):
    """epsilon^k lambda^t / (d-1)^(k-1)"""
    if epsilon == 0.0:
        return 0.0
    spread = epsilon / (d - 1)
    return spread ** (k - 1) * epsilon * lam ** t


def p_in(k, t, lam, epsilon, d, mode=EXACT):
    """Passing probability under independent white noise

    Args:
        k (int): Copies per round
        t (int): Measured copies
        lam (float): Second-largest eigenvalue of Omega
        epsilon (float): Per-copy infidelity
        d (int): Copy dimension
        mode (str): 'exact' or 'first_order'

    Returns:
        float: Probability that a round passes
    """
    _check_mode(mode)
    _check_common(lam, epsilon, t, k, d)
    if mode == FIRST_ORDER:
        return 1.0 - (k + t * (1 - lam)) * epsilon / 2
    return (_standard_rate(lam, epsilon) ** t + (1 - epsilon) ** k
            + _orthogonal_tail(k, t, lam, epsilon, d)) / 2


def p_mix(k, t, lam, epsilon, mode=EXACT):
    """Passing probability when each copy mixes in an orthogonal eigenstate"""
    _check_mode(mode)
    _check_common(lam, epsilon, t, k)
    if mode == FIRST_ORDER:
        return 1.0 - (k + t * (1 - lam)) * epsilon / 2
    return (_standard_rate(lam, epsilon) ** t + (1 - epsilon) ** k
            + epsilon ** k * lam ** t) / 2


def p_ur(t, lam, epsilon, mode=EXACT):
    """Passing probability for copies rotated toward an orthogonal eigenstate"""
    _check_mode(mode)
    _check_common(lam, epsilon, t)
    if mode == FIRST_ORDER:
        return 1.0 - t * (1 - lam) * epsilon
    return _standard_rate(lam, epsilon) ** t


def p_cn(k, t, lam, epsilon, d, mode=EXACT):
    """Passing probability under global white noise on the whole ensemble

    Raises:
        ParameterError: If d epsilon / (d - 1) > 1
    """
    _check_mode(mode)
    _check_common(lam, epsilon, t, k, d)
    inverse_d = 1.0 / d
    q = epsilon / (1.0 - inverse_d)
    if q > 1.0 + 1e-15:
        raise ParameterError(f"global white noise needs d*eps/(d-1) <= 1, got {q}")
    if mode == FIRST_ORDER:
        return 1.0 - epsilon * (1 + (1 - lam) * t) / 2
    diagonal = (lam + (1 - lam) * inverse_d) ** t
    # ((d-1) lambda^t + 1) / d^k with d^k kept as a power of 1/d
    cross = (1.0 - inverse_d) * lam ** t * inverse_d ** (k - 1) + inverse_d ** k
    return 1.0 - q + q / 2 * (diagonal + cross)


def p_gu(t, lam, epsilon):
    """Passing probability under the adversarial global unitary control"""
    _check_common(lam, epsilon, t)
    drop = epsilon * (1 - lam) * t
    if drop >= 1.0:
        raise ParameterError(f"global unitary control needs eps(1-lambda)t < 1, got {drop}")
    return 1.0 - drop


def p_iid(omega, sigma, k, t):
    """Passing probability for an i.i.d. ensemble sigma^{(x)k}

    Evaluates (1/2)[tr(Omega sigma)]^t + (1/2) tr[(Omega sigma)^t sigma^{k-t}],
    which holds whenever Omega and sigma commute.

    Args:
        omega (Operator): Verification operator
        sigma (DensityMatrix): Single-copy state
        k (int): Copies per round
        t (int): Measured copies

    Returns:
        float: Probability that a round passes
    """
    if not 1 <= t <= k:
        raise ParameterError(f"t must lie in [1, {k}], got {t}")
    product = omega.data @ sigma.data
    if np.max(np.abs(product - sigma.data @ omega.data)) > 1e-10:
        raise ParameterError("p_iid needs Omega and sigma to commute")
    single = float(np.real(np.trace(product)))
    cross = (np.linalg.matrix_power(product, t)
             @ np.linalg.matrix_power(sigma.data, k - t))
    return single ** t / 2 + float(np.real(np.trace(cross))) / 2


def pass_probability(noise_kind, k, t, lam, epsilon, d, mode=EXACT):
    """Dispatch to the closed form for a noise kind"""
    if noise_kind == INDEPENDENT_WHITE:
        return p_in(k, t, lam, epsilon, d, mode)
    if noise_kind == ORTHOGONAL_MIXTURE:
        return p_mix(k, t, lam, epsilon, mode)
    if noise_kind == UNITARY_ROTATION:
        return p_ur(t, lam, epsilon, mode)
    if noise_kind == GLOBAL_WHITE:
        return p_cn(k, t, lam, epsilon, d, mode)
    if noise_kind == GLOBAL_UNITARY_CONTROL:
        return p_gu(t, lam, epsilon)
    raise ParameterError(f"unknown noise kind '{noise_kind}', expected one of {NOISE_KINDS}")


def rounds_M(p, delta):
    """ceil(ln(1/delta) / ln(1/p))

    Raises:
        ParameterError: If p is not in (0, 1)
    """
    return math.ceil(_rounds_real_exact(p, delta))


def _rounds_real_exact(p, delta):
    if p == 1.0:
        raise DivergentRoundsError("passing probability is 1; rounds diverge")
    if not 0.0 < p < 1.0:
        raise ParameterError(f"passing probability must lie in (0, 1), got {p}")
    return _log_delta_inverse(delta) / -math.log(p)


def first_order_coefficient(noise_kind, k, t, lam):
    """Prefactor c in M ~ c / epsilon * ln(1/delta)"""
    drop = (1 - lam) * t
    if noise_kind in (INDEPENDENT_WHITE, ORTHOGONAL_MIXTURE):
        return 2.0 / (drop + k)
    if noise_kind == GLOBAL_WHITE:
        return 2.0 / (drop + 1)
    if noise_kind in (GLOBAL_UNITARY_CONTROL, UNITARY_ROTATION):
        if drop == 0.0:
            raise DivergentRoundsError(
                f"lambda=1 never rejects under {noise_kind}; rounds diverge")
        return 1.0 / drop
    raise ParameterError(f"unknown noise kind '{noise_kind}', expected one of {NOISE_KINDS}")


def output_infidelity(noise_kind, k, t, lam, epsilon, d, mode=EXACT):
    """Infidelity of an unmeasured copy after a passing round

    Raises:
        ParameterError: If t == k
    """
    _check_mode(mode)
    _check_common(lam, epsilon, t, k, d)
    if t >= k:
        raise ParameterError("t == k leaves no unmeasured copy")
    if epsilon == 0.0:
        return 0.0
    drop = (1 - lam) * t

    if noise_kind in (INDEPENDENT_WHITE, ORTHOGONAL_MIXTURE):
        if mode == FIRST_ORDER:
            return epsilon / 2 + (k - drop) * epsilon ** 2 / 4
        rate = _standard_rate(lam, epsilon) ** t
        if noise_kind == INDEPENDENT_WHITE:
            tail = _orthogonal_tail(k, t, lam, epsilon, d)
            passing = p_in(k, t, lam, epsilon, d)
        else:
            tail = epsilon ** k * lam ** t
            passing = p_mix(k, t, lam, epsilon)
        return (epsilon * rate + tail) / (2 * passing)

    if noise_kind == GLOBAL_WHITE:
        inverse_d = 1.0 / d
        suppression = (lam + (1 - lam) * inverse_d) ** t
        if mode == FIRST_ORDER:
            return (suppression * epsilon / 2
                    + (2 - suppression) * suppression * epsilon ** 2 / (4 * (1 - inverse_d)))
        q = epsilon / (1.0 - inverse_d)
        joint = 1.0 - q + q * (suppression * inverse_d + inverse_d ** k) / 2
        return 1.0 - joint / p_cn(k, t, lam, epsilon, d)

    if noise_kind == GLOBAL_UNITARY_CONTROL:
        if mode == FIRST_ORDER:
            return epsilon + drop * epsilon ** 2
        return epsilon / p_gu(t, lam, epsilon)

    if noise_kind == UNITARY_ROTATION:
        # Pure product copies: passing the others says nothing about this one
        return epsilon
    raise ParameterError(f"unknown noise kind '{noise_kind}', expected one of {NOISE_KINDS}")


def complexity(scheme, noise_kind, lam, epsilon, d, mode=EXACT):
    """Rounds, samples and unmeasured copies Pi_{k,t} needs

    Args:
        scheme (Scheme): The (k, t) scheme with its delta
        noise_kind (str): One of NOISE_KINDS
        lam (float): Second-largest eigenvalue; 1 encodes the worst case
        epsilon (float): Infidelity to reject
        d (int): Copy dimension
        mode (str): 'exact' or 'first_order'

    Returns:
        ComplexityReport: Counts, ceiled last
    """
    _check_mode(mode)
    k, t = scheme.k, scheme.t
    _check_common(lam, epsilon, t, k, d)
    if epsilon == 0.0:
        raise DivergentRoundsError("epsilon=0 cannot be rejected in finitely many rounds")

    if mode == FIRST_ORDER:
        rounds_real = (first_order_coefficient(noise_kind, k, t, lam) / epsilon
                       * _log_delta_inverse(scheme.delta))
    else:
        passing = pass_probability(noise_kind, k, t, lam, epsilon, d)
        rounds_real = _rounds_real_exact(passing, scheme.delta)
    rounds = math.ceil(rounds_real)

    infidelity = None
    if t < k:
        infidelity = output_infidelity(noise_kind, k, t, lam, epsilon, d, mode)
    return ComplexityReport(
        rounds_M=rounds,
        samples_N=t * rounds,
        unmeasured_copies=(k - t) * rounds,
        output_infidelity=infidelity,
        mode=mode,
        rounds_real=rounds_real,
    )


def baselines(lam, epsilon, delta, t=1):
    """N_opt, N_std, N_adv and M' for the same (lambda, epsilon, delta)

    Quantities that diverge for the given lambda are None.
    """
    _check_common(lam, epsilon, t)
    if epsilon == 0.0:
        raise ParameterError("epsilon must be > 0 for sample counts")
    budget = _log_delta_inverse(delta) / epsilon

    n_std = math.ceil(budget / (1 - lam)) if lam < 1.0 else None

    n_adv = None
    if 0.0 < lam < 1.0:
        ratio = math.log(delta) / math.log(lam)
        n_adv = math.ceil(ratio * (1 + (1 - epsilon) / (lam * epsilon)))

    m_prime = None
    drop = epsilon * (1 - lam) * t
    if drop > 0.0:
        m_prime = math.ceil(_log_delta_inverse(delta) / math.log1p(drop))

    return Baselines(n_opt=math.ceil(budget), n_std=n_std, n_adv=n_adv, m_prime=m_prime)


def _gu_coefficient(t, lam):
    _check_common(lam, 0.0, t)
    if lam >= 1.0:
        raise ParameterError("lambda=1 never rejects under global unitary control")
    return 1.0 / ((1 - lam) * t)


def gu_rounds_corrected(t, lam, epsilon, delta):
    """GU round count with its confidence correction, before ceiling"""
    coefficient = _gu_coefficient(t, lam)
    log_inv = _log_delta_inverse(delta)
    return coefficient * log_inv / epsilon - log_inv / 2


def gu_unmeasured_rounds_corrected(t, lam, epsilon, delta):
    """Rounds certifying the unmeasured copies under GU, before ceiling"""
    coefficient = _gu_coefficient(t, lam)
    log_inv = _log_delta_inverse(delta)
    return coefficient * log_inv / epsilon + log_inv / 2


def adversarial_asymptote(lam, epsilon, delta):
    """Leading behaviour (1/(1-lambda) + e - 1) ln(1/delta) / epsilon of N_adv"""
    if not 0.0 <= lam < 1.0:
        raise ParameterError(f"lambda must lie in [0, 1), got {lam}")
    if epsilon <= 0.0:
        raise ParameterError("epsilon must be > 0")
    return (1 / (1 - lam) + math.e - 1) * _log_delta_inverse(delta) / epsilon


def online_task_plan(copies_needed, scheme, lam, mode=FIRST_ORDER, d=None):
    """Plan rounds that deliver copies_needed verified copies

    Args:
        copies_needed (int): Unmeasured copies the task consumes
        scheme (Scheme): The (k, t) scheme with its delta; k > t
        lam (float): Second-largest eigenvalue; 1 encodes the worst case
        mode (str): 'first_order' inverts the linear formula; 'exact' solves
            the exact independent-white-noise round count with brentq
        d (int, optional): Copy dimension, needed in exact mode

    Returns:
        OnlinePlan: Rounds, extra measured samples and achieved epsilon
    """
    _check_mode(mode)
    k, t = scheme.k, scheme.t
    if t >= k:
        raise ParameterError("online tasks need k > t")
    if copies_needed < 1:
        raise ParameterError(f"copies_needed must be >= 1, got {copies_needed}")
    rounds = math.ceil(copies_needed / (k - t))
    log_inv = _log_delta_inverse(scheme.delta)

    if mode == FIRST_ORDER:
        achieved = 2 * log_inv / (((1 - lam) * t + k) * rounds)
    else:
        if d is None:
            raise ParameterError("exact online planning needs the copy dimension d")

        def excess(epsilon):
            return _rounds_real_exact(p_in(k, t, lam, epsilon, d), scheme.delta) - rounds

        low, high = 1e-12, 0.5
        if excess(low) * excess(high) > 0:
            raise ParameterError(f"{rounds} rounds cannot reach any epsilon in ({low}, {high})")
        achieved = brentq(excess, low, high, xtol=1e-14)
    logger.debug("online plan %r: %d rounds, epsilon %.6g (%s)", scheme, rounds, achieved, mode)
    return OnlinePlan(rounds=rounds, extra_samples=t * rounds,
                      achieved_epsilon=float(achieved), mode=mode)


def significance(observed_rate, model_rate, n_total):
    """exp(-KL(Bernoulli(f_s) || Bernoulli(model)) * n_total)

    Rates of exactly 0 or 1 follow 0 ln 0 = 0; disagreeing supports give an
    infinite divergence and significance 0.
    """
    for name, rate in (("observed rate", observed_rate), ("model rate", model_rate)):
        if not 0.0 <= rate <= 1.0 or math.isnan(rate):
            raise ParameterError(f"{name} must lie in [0, 1], got {rate}")
    if n_total < 0:
        raise ParameterError(f"n_total must be >= 0, got {n_total}")

    divergence = float(kl_div(observed_rate, model_rate)
                       + kl_div(1 - observed_rate, 1 - model_rate))
    if n_total == 0:
        value = 1.0
    elif math.isinf(divergence):
        value = 0.0
    else:
        value = math.exp(-divergence * n_total)
    return SignificanceResult(
        observed_rate=float(observed_rate),
        model_rate=float(model_rate),
        total_samples=int(n_total),
        divergence=divergence,
        significance=value,
    )
