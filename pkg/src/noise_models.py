"""
Collective QSV - Noise Models

This module builds the noisy ensembles analysed by the toolkit: independent
white noise, orthogonal mixtures, unitary rotations, global white noise on the
whole ensemble and the adversarial global unitary control. Every model is
normalized so that each single copy has fidelity 1 - epsilon with the target.
"""

import logging

import numpy as np

from src import config
from src.qstate_core import (
    DensityMatrix,
    Operator,
    ParameterError,
    check_dimension,
    kron_power,
)

logger = logging.getLogger(__name__)

INDEPENDENT_WHITE = "independent_white"
ORTHOGONAL_MIXTURE = "orthogonal_mixture"
UNITARY_ROTATION = "unitary_rotation"
GLOBAL_WHITE = "global_white"
GLOBAL_UNITARY_CONTROL = "global_unitary_control"

NOISE_KINDS = (
    INDEPENDENT_WHITE,
    ORTHOGONAL_MIXTURE,
    UNITARY_ROTATION,
    GLOBAL_WHITE,
    GLOBAL_UNITARY_CONTROL,
)
IID_KINDS = (INDEPENDENT_WHITE, ORTHOGONAL_MIXTURE, UNITARY_ROTATION)
NEEDS_ORTHOGONAL = (ORTHOGONAL_MIXTURE, UNITARY_ROTATION, GLOBAL_UNITARY_CONTROL)


class NoiseSpec:
    """Tagged description of the noise that produced an ensemble"""

    def __init__(self, kind, epsilon, psi_perp=None):
        """Initialize a noise description

        Args:
            kind (str): One of NOISE_KINDS
            epsilon (float): Per-copy infidelity, 0 <= epsilon < 1
            psi_perp (StateVector, optional): Orthogonal direction; the
                orthogonal eigenstate of the strategy is used when omitted
        """
        if kind not in NOISE_KINDS:
            raise ParameterError(f"unknown noise kind '{kind}', expected one of {NOISE_KINDS}")
        if not 0.0 <= epsilon < 1.0:
            raise ParameterError(f"epsilon must lie in [0, 1), got {epsilon}")
        if epsilon >= config.PURIFICATION_THRESHOLD:
            logger.warning("epsilon=%.4g is above the purification threshold %.2g; "
                           "the collective scheme gives no advantage there",
                           epsilon, config.PURIFICATION_THRESHOLD)
        self.kind = kind
        self.epsilon = float(epsilon)
        self.psi_perp = psi_perp

    @property
    def is_iid(self):
        return self.kind in IID_KINDS

    def check_ensemble_size(self, k):
        """The global unitary control needs k * epsilon <= 1"""
        if self.kind == GLOBAL_UNITARY_CONTROL and k * self.epsilon > 1.0:
            raise ParameterError(
                f"global unitary control needs k*epsilon <= 1, got {k}*{self.epsilon}")

    def __repr__(self):
        return f"NoiseSpec(kind={self.kind!r}, epsilon={self.epsilon})"


def _check_orthogonal(target, psi_perp):
    if psi_perp.dimension != target.dimension:
        raise ParameterError("orthogonal direction has the wrong dimension")
    if abs(target.overlap(psi_perp)) > 1e-10:
        raise ParameterError("psi_perp is not orthogonal to the target")


def white(target, epsilon):
    """(1-q)|psi><psi| + q 1/d with epsilon = q (d-1)/d

    Args:
        target (StateVector): Target state
        epsilon (float): Infidelity, 0 <= epsilon <= (d-1)/d

    Returns:
        DensityMatrix: The white-noise state
    """
    d = target.dimension
    if not 0.0 <= epsilon <= (d - 1) / d + 1e-15:
        raise ParameterError(f"white-noise epsilon must lie in [0, {(d - 1) / d}], got {epsilon}")
    q = d * epsilon / (d - 1)
    projector = np.outer(target.data, target.data.conj())
    return DensityMatrix((1 - q) * projector + q * np.eye(d) / d)


def orthogonal_mixture(target, epsilon, psi_perp):
    """(1-epsilon)|psi><psi| + epsilon |psi_perp><psi_perp|"""
    if not 0.0 <= epsilon <= 1.0:
        raise ParameterError(f"epsilon must lie in [0, 1], got {epsilon}")
    _check_orthogonal(target, psi_perp)
    entries = ((1 - epsilon) * np.outer(target.data, target.data.conj())
               + epsilon * np.outer(psi_perp.data, psi_perp.data.conj()))
    return DensityMatrix(entries)


def unitary_rotation(target, epsilon, psi_perp):
    """|psi_eps><psi_eps| with |psi_eps> = sqrt(1-eps)|psi> + sqrt(eps)|psi_perp>"""
    if not 0.0 <= epsilon <= 1.0:
        raise ParameterError(f"epsilon must lie in [0, 1], got {epsilon}")
    _check_orthogonal(target, psi_perp)
    rotated = np.sqrt(1 - epsilon) * target.data + np.sqrt(epsilon) * psi_perp.data
    return DensityMatrix(np.outer(rotated, rotated.conj()))


def global_white(target, k, epsilon):
    """(1-q)|psi><psi|^{(x)k} + q 1/d^k on the whole ensemble"""
    d = target.dimension
    if not 0.0 <= epsilon <= (d - 1) / d + 1e-15:
        raise ParameterError(f"white-noise epsilon must lie in [0, {(d - 1) / d}], got {epsilon}")
    total = d ** k
    check_dimension(total, "global white ensemble")
    q = d * epsilon / (d - 1)
    product = _product_vector([target.data] * k)
    entries = (1 - q) * np.outer(product, product.conj()) + q * np.eye(total) / total
    return DensityMatrix(entries, check_positivity=False)


def _product_vector(vectors):
    result = vectors[0]
    for vector in vectors[1:]:
        result = np.kron(result, vector)
    return result


def global_unitary_control(target, k, epsilon, psi_perp):
    """Worst-case ensemble rotation under a k-copy adversary

    |phi> = sqrt(1 - k eps)|psi>^{(x)k} + sqrt(k eps)|phi'>, where |phi'> is the
    symmetrized placement of |psi_perp> in one of the k copies.
    """
    if not 0.0 <= epsilon <= 1.0 / k:
        raise ParameterError(f"global unitary control needs k*epsilon <= 1, got {k}*{epsilon}")
    _check_orthogonal(target, psi_perp)
    check_dimension(target.dimension ** k, "global unitary ensemble")

    ideal = _product_vector([target.data] * k)
    placements = np.zeros_like(ideal)
    for slot in range(k):
        factors = [psi_perp.data if m == slot else target.data for m in range(k)]
        placements += _product_vector(factors)
    placements /= np.sqrt(k)

    weight = k * epsilon
    phi = np.sqrt(1 - weight) * ideal + np.sqrt(weight) * placements
    return DensityMatrix(np.outer(phi, phi.conj()), check_positivity=False)


def build_ensemble(noise, target, k, psi_perp=None):
    """The k-copy ensemble for a noise description

    Args:
        noise (NoiseSpec): Noise model and epsilon
        target (StateVector): Target state
        k (int): Number of copies
        psi_perp (StateVector, optional): Orthogonal direction, overrides noise.psi_perp

    Returns:
        DensityMatrix: State of all k copies
    """
    noise.check_ensemble_size(k)
    psi_perp = psi_perp if psi_perp is not None else noise.psi_perp
    if noise.kind in NEEDS_ORTHOGONAL and psi_perp is None:
        raise ParameterError(f"noise kind '{noise.kind}' needs an orthogonal direction")
    check_dimension(target.dimension ** k, "ensemble")

    if noise.kind == INDEPENDENT_WHITE:
        return kron_power(white(target, noise.epsilon), k)
    if noise.kind == ORTHOGONAL_MIXTURE:
        return kron_power(orthogonal_mixture(target, noise.epsilon, psi_perp), k)
    if noise.kind == UNITARY_ROTATION:
        return kron_power(unitary_rotation(target, noise.epsilon, psi_perp), k)
    if noise.kind == GLOBAL_WHITE:
        return global_white(target, k, noise.epsilon)
    return global_unitary_control(target, k, noise.epsilon, psi_perp)


def reduced_state_after_projection(sigma, k):
    """(sigma + sigma^k)/2, the single-copy marginal of D_k(sigma^{(x)k}) D_k^dagger

    The marginal is left unnormalized: its trace is the ancilla pass weight
    (1 + tr sigma^k)/2, so tr(Omega sigma') is the t=1 passing probability.
    """
    power = np.linalg.matrix_power(sigma.data, k)
    return Operator((sigma.data + power) / 2, hermitian=True)
