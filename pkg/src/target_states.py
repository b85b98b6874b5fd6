"""
Collective QSV - Target States

This module contains the constructors for the target entangled states (Bell,
GHZ, Dicke, custom amplitudes) and for the QSV verification strategies Omega.
A strategy enters every formula only through its second-largest eigenvalue
lambda, so lambda is always an input.
"""

import itertools
import logging
from math import comb

import numpy as np

from src import config
from src.qstate_core import (
    InvalidStateError,
    Operator,
    ParameterError,
    StateVector,
    check_dimension,
)

logger = logging.getLogger(__name__)


def bell():
    """(|00> + |11>)/sqrt(2)"""
    return ghz(2)


def ghz(n):
    """(|0...0> + |1...1>)/sqrt(2) on n qubits"""
    if n < 1:
        raise ParameterError(f"GHZ state needs n >= 1, got {n}")
    dimension = 2 ** n
    check_dimension(dimension, "GHZ state")
    amplitudes = np.zeros(dimension, dtype=np.complex128)
    amplitudes[0] = amplitudes[-1] = 1 / np.sqrt(2)
    return StateVector(amplitudes)


def dicke(n, w):
    """Uniform superposition of all n-qubit basis kets of Hamming weight w"""
    if n < 1:
        raise ParameterError(f"Dicke state needs n >= 1, got {n}")
    if not 0 <= w <= n:
        raise ParameterError(f"Dicke excitation count {w} outside [0, {n}]")
    dimension = 2 ** n
    check_dimension(dimension, "Dicke state")
    amplitudes = np.zeros(dimension, dtype=np.complex128)
    for ones in itertools.combinations(range(n), w):
        index = sum(1 << (n - 1 - q) for q in ones)
        amplitudes[index] = 1.0
    return StateVector(amplitudes / np.sqrt(comb(n, w)))


def state_from_amplitudes(amplitudes):
    """Build a target from raw amplitudes (real numbers or [re, im] pairs)

    The vector is normalized here; a zero vector is rejected.
    """
    values = []
    for entry in amplitudes:
        if isinstance(entry, (list, tuple)):
            values.append(complex(entry[0], entry[1]))
        else:
            values.append(complex(entry))
    vector = np.asarray(values, dtype=np.complex128)
    norm = np.linalg.norm(vector)
    if norm == 0:
        raise ParameterError("custom target has zero norm")
    return StateVector(vector / norm)


class Strategy:
    """A QSV strategy: verification operator, its lambda, and the target"""

    def __init__(self, omega, lam, target):
        """Initialize a strategy

        Args:
            omega (Operator): Hermitian verification operator, 0 <= Omega <= 1
            lam (float): Second-largest eigenvalue lambda
            target (StateVector): State that passes with certainty

        Raises:
            InvalidStateError: If the target does not pass with certainty
        """
        self.omega = omega
        self.lam = float(lam)
        self.target = target

        passed = omega.data @ target.data
        if np.max(np.abs(passed - target.data)) > config.SPECTRUM_TOL:
            raise InvalidStateError("target is not a +1 eigenvector of Omega")
        spectrum = np.linalg.eigvalsh(omega.data)
        if spectrum[0] < -config.SPECTRUM_TOL or spectrum[-1] > 1 + config.SPECTRUM_TOL:
            raise InvalidStateError("Omega has eigenvalues outside [0, 1]")
        if spectrum.size > 1 and abs(spectrum[-2] - self.lam) > config.SPECTRUM_TOL:
            raise InvalidStateError(
                f"second-largest eigenvalue {spectrum[-2]} differs from lambda {self.lam}")

    @property
    def dimension(self):
        return self.target.dimension

    def pass_probability(self, rho):
        """tr(Omega rho) for a single copy"""
        return float(np.real(np.trace(self.omega.data @ rho.data)))

    def is_homogeneous(self):
        spectrum = np.linalg.eigvalsh(self.omega.data)[:-1]
        return bool(np.all(np.abs(spectrum - self.lam) <= config.SPECTRUM_TOL))

    def __repr__(self):
        return f"Strategy(lambda={self.lam:.6g}, dimension={self.dimension})"


def homogeneous_strategy(target, lam):
    """Omega = |psi><psi| + lambda (1 - |psi><psi|)

    Args:
        target (StateVector): Target state
        lam (float): Second-largest eigenvalue, 0 <= lambda < 1

    Returns:
        Strategy: Homogeneous strategy
    """
    if not 0.0 <= lam < 1.0:
        raise ParameterError(f"lambda must lie in [0, 1), got {lam}")
    projector = np.outer(target.data, target.data.conj())
    omega = projector + lam * (np.eye(target.dimension) - projector)
    return Strategy(Operator(omega, hermitian=True), lam, target)


def strategy_from_operator(omega, target):
    """Wrap an arbitrary verification operator, reading lambda off its spectrum

    Lambda is the largest eigenvalue of Omega restricted to the orthogonal
    complement of the target.
    """
    projector = np.outer(target.data, target.data.conj())
    complement = np.eye(target.dimension) - projector
    restricted = complement @ omega.data @ complement
    lam = float(np.linalg.eigvalsh(restricted)[-1]) if target.dimension > 1 else 0.0
    if lam >= 1.0 - config.SPECTRUM_TOL:
        raise ParameterError("Omega does not separate the target from its complement")
    return Strategy(omega, max(0.0, lam), target)


def orthogonal_eigenstate(strategy):
    """A unit vector orthogonal to the target inside the lambda eigenspace

    Deterministic choice: Gram-Schmidt of the first computational basis ket
    whose projection onto the lambda eigenspace is not parallel to the target.
    """
    omega = strategy.omega.data
    target = strategy.target.data
    values, vectors = np.linalg.eigh(omega)
    mask = np.abs(values - strategy.lam) <= config.SPECTRUM_TOL
    eigenspace = vectors[:, mask]
    space_projector = eigenspace @ eigenspace.conj().T

    for index in range(strategy.dimension):
        candidate = space_projector[:, index].copy()
        candidate -= np.vdot(target, candidate) * target
        norm = np.linalg.norm(candidate)
        if norm > 1e-8:
            return StateVector(candidate / norm)
    raise InvalidStateError("lambda eigenspace has no direction orthogonal to the target")
