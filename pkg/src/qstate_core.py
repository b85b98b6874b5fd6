"""
Collective QSV - Quantum State Core

This module handles the dense linear algebra for multi-qubit states: state
vectors, density matrices and operators, their tensor products, partial
traces, the cyclic shift between copies and fidelities.

Register ordering is big-endian: the first listed subsystem is the most
significant index block.
"""

import logging
from typing import Sequence

import numpy as np

from src import config

logger = logging.getLogger(__name__)


class QsvError(Exception):
    """Base error for the toolkit"""


class ParameterError(QsvError, ValueError):
    """A parameter is outside its allowed range"""


class DimensionOverflowError(QsvError):
    """The exact engine would exceed its configured dimension cap"""


class InvalidStateError(QsvError):
    """A numerical invariant (norm, trace, Hermiticity, positivity) is violated"""


def check_dimension(dimension, what="operand"):
    """Raise if a Hilbert-space dimension exceeds the engine cap

    Args:
        dimension (int): Total dimension requested
        what (str): Label used in the error message
    """
    if dimension > config.MAX_TOTAL_DIMENSION:
        raise DimensionOverflowError(
            f"{what} dimension {dimension} exceeds the exact-engine cap "
            f"{config.MAX_TOTAL_DIMENSION}; use the closed forms instead")


def _qubits_for(dimension):
    num_qubits = int(round(np.log2(dimension))) if dimension > 0 else -1
    if num_qubits < 0 or 2 ** num_qubits != dimension:
        raise ParameterError(f"dimension {dimension} is not a power of 2")
    return num_qubits


def _frozen(array):
    array = np.array(array, dtype=np.complex128, copy=True)
    array.flags.writeable = False
    return array


class StateVector:
    """A normalized pure state on n qubits"""

    def __init__(self, amplitudes):
        """Initialize a state vector

        Args:
            amplitudes (array-like): Complex amplitudes, length 2^n

        Raises:
            InvalidStateError: If the vector is not normalized
        """
        data = np.asarray(amplitudes, dtype=np.complex128).reshape(-1)
        self.num_qubits = _qubits_for(data.size)
        norm = np.linalg.norm(data)
        if abs(norm - 1.0) > config.NORM_TOL:
            raise InvalidStateError(f"state vector norm is {norm}, expected 1")
        self.data = _frozen(data)

    @property
    def dimension(self):
        return self.data.size

    def projector(self):
        """Get |psi><psi| as a density matrix"""
        return DensityMatrix(np.outer(self.data, self.data.conj()))

    def overlap(self, other):
        """Inner product <self|other>"""
        return complex(np.vdot(self.data, other.data))

    def __repr__(self):
        return f"StateVector(num_qubits={self.num_qubits})"


class Operator:
    """A dense operator on a power-of-two dimensional space"""

    def __init__(self, entries, hermitian=False):
        """Initialize an operator

        Args:
            entries (array-like): Square complex matrix
            hermitian (bool): Whether the operator is flagged Hermitian

        Raises:
            InvalidStateError: If flagged Hermitian but not Hermitian
        """
        data = np.asarray(entries, dtype=np.complex128)
        if data.ndim != 2 or data.shape[0] != data.shape[1]:
            raise ParameterError(f"operator must be square, got shape {data.shape}")
        self.num_qubits = _qubits_for(data.shape[0])
        if hermitian and np.max(np.abs(data - data.conj().T), initial=0.0) > config.HERMITIAN_TOL:
            raise InvalidStateError("operator flagged Hermitian is not Hermitian")
        self.hermitian = hermitian
        self.data = _frozen(data)

    @property
    def dimension(self):
        return self.data.shape[0]

    def trace(self):
        return complex(np.trace(self.data))

    def __repr__(self):
        return f"Operator(dimension={self.dimension}, hermitian={self.hermitian})"


class DensityMatrix(Operator):
    """A valid mixed state: Hermitian, unit trace, positive semidefinite"""

    def __init__(self, entries, check_positivity=True):
        """Initialize a density matrix

        Args:
            entries (array-like): Square complex matrix
            check_positivity (bool): Run the eigenvalue check; callers skip it only
                when positivity holds by construction (tensor products of states)

        Raises:
            InvalidStateError: If any density-matrix invariant fails
        """
        super().__init__(entries, hermitian=True)
        trace = np.trace(self.data)
        if abs(trace - 1.0) > config.TRACE_TOL:
            raise InvalidStateError(f"density matrix trace is {trace}, expected 1")
        if check_positivity:
            smallest = np.linalg.eigvalsh(self.data)[0]
            if smallest < -config.PSD_TOL:
                raise InvalidStateError(f"density matrix has eigenvalue {smallest} < 0")

    def __repr__(self):
        return f"DensityMatrix(num_qubits={self.num_qubits})"


def identity(dimension):
    """Identity operator of the given dimension"""
    check_dimension(dimension)
    return Operator(np.eye(dimension), hermitian=True)


def maximally_mixed(dimension):
    """The state 1/d"""
    check_dimension(dimension)
    return DensityMatrix(np.eye(dimension) / dimension)


def kron(a, b):
    """Tensor product of two operators or two density matrices

    Args:
        a (Operator): Left factor (most significant block)
        b (Operator): Right factor

    Returns:
        Operator: DensityMatrix when both inputs are density matrices
    """
    check_dimension(a.dimension * b.dimension, "tensor product")
    entries = np.kron(a.data, b.data)
    if isinstance(a, DensityMatrix) and isinstance(b, DensityMatrix):
        return DensityMatrix(entries, check_positivity=False)
    return Operator(entries, hermitian=a.hermitian and b.hermitian)


def kron_power(a, copies):
    """a^{(x) copies}"""
    if copies < 1:
        raise ParameterError("need at least one copy")
    check_dimension(a.dimension ** copies, "tensor power")
    result = a
    for _ in range(copies - 1):
        result = kron(result, a)
    return result


def partial_trace_array(entries, keep, dims):
    """Partial trace on a raw matrix, keeping the listed subsystems in order

    Args:
        entries (np.ndarray): Square matrix of size prod(dims)
        keep (Sequence[int]): Subsystem indices to keep
        dims (Sequence[int]): Dimension of every subsystem

    Returns:
        np.ndarray: Reduced matrix over the kept subsystems
    """
    dims = [int(x) for x in dims]
    total = int(np.prod(dims))
    if entries.shape != (total, total):
        raise ParameterError(f"dims {dims} do not match matrix shape {entries.shape}")
    keep = sorted(set(int(x) for x in keep))
    if any(i < 0 or i >= len(dims) for i in keep):
        raise ParameterError(f"keep {keep} out of range for {len(dims)} subsystems")

    num = len(dims)
    tensor = entries.reshape(dims + dims)
    traced = [i for i in range(num) if i not in keep]
    # Row labels 0..num-1, column labels num..2num-1; traced columns share row labels
    row_labels = list(range(num))
    col_labels = [i if i in traced else num + i for i in range(num)]
    out_labels = keep + [num + i for i in keep]
    reduced = np.einsum(tensor, row_labels + col_labels, out_labels)
    kept_dim = int(np.prod([dims[i] for i in keep])) if keep else 1
    return reduced.reshape(kept_dim, kept_dim)


def partial_trace(rho, keep, dims):
    """Trace out every subsystem not listed in keep

    Args:
        rho (Operator): Density matrix (or unnormalized Hermitian operator)
        keep (Sequence[int]): Subsystems to keep
        dims (Sequence[int]): Subsystem dimensions

    Returns:
        Operator: Same kind as the input
    """
    reduced = partial_trace_array(rho.data, keep, dims)
    if isinstance(rho, DensityMatrix):
        return DensityMatrix(reduced)
    return Operator(reduced, hermitian=rho.hermitian)


def cyclic_shift_permutation(k, d):
    """Index map of the cyclic shift S_k on k copies of dimension d

    Basis ket |i_1 ... i_k> (flat index j) is sent to |i_k i_1 ... i_{k-1}>,
    whose flat index is target[j].

    Returns:
        np.ndarray: target indices, length d^k
    """
    if k < 2:
        raise ParameterError(f"cyclic shift needs k >= 2, got {k}")
    check_dimension(d ** k, "cyclic shift")
    flat = np.arange(d ** k).reshape([d] * k)
    return np.moveaxis(flat, 0, -1).reshape(-1)


def cyclic_shift_operator(k, d):
    """The permutation unitary S_k moving copy m to m+1 (mod k)"""
    target = cyclic_shift_permutation(k, d)
    entries = np.zeros((d ** k, d ** k), dtype=np.complex128)
    entries[target, np.arange(d ** k)] = 1.0
    return Operator(entries, hermitian=(k == 2))


def apply_local(op, rho, copy, k, d):
    """Conjugate a k-copy matrix by a single-copy operator on one copy

    Args:
        op (np.ndarray): d x d operator
        rho (np.ndarray): d^k x d^k matrix
        copy (int): Copy index the operator acts on
        k (int): Number of copies
        d (int): Per-copy dimension

    Returns:
        np.ndarray: op_copy . rho . op_copy^dagger
    """
    tensor = rho.reshape([d] * (2 * k))
    tensor = np.moveaxis(np.tensordot(op, tensor, axes=([1], [copy])), 0, copy)
    tensor = np.moveaxis(np.tensordot(op.conj(), tensor, axes=([1], [k + copy])), 0, k + copy)
    return tensor.reshape(d ** k, d ** k)


def fidelity(psi, rho):
    """<psi|rho|psi>

    Raises:
        ParameterError: If the dimensions differ
        InvalidStateError: If the result has an imaginary residue
    """
    if psi.dimension != rho.dimension:
        raise ParameterError(f"dimension mismatch: {psi.dimension} vs {rho.dimension}")
    value = np.vdot(psi.data, rho.data @ psi.data)
    if abs(value.imag) > config.IMAG_RESIDUE_TOL:
        raise InvalidStateError(f"fidelity has imaginary residue {value.imag}")
    return float(min(1.0, max(0.0, value.real)))


def purity(rho):
    """tr(rho^2)"""
    return float(np.real(np.vdot(rho.data, rho.data)))


def random_density_matrix(num_qubits, rng, rank=None):
    """Random density matrix from a Ginibre ensemble

    Args:
        num_qubits (int): Number of qubits
        rng (np.random.Generator): Random source
        rank (int, optional): Rank of the state, full rank by default

    Returns:
        DensityMatrix: A valid random state
    """
    dimension = 2 ** num_qubits
    check_dimension(dimension)
    rank = dimension if rank is None else rank
    ginibre = rng.normal(size=(dimension, rank)) + 1j * rng.normal(size=(dimension, rank))
    entries = ginibre @ ginibre.conj().T
    entries = (entries + entries.conj().T) / 2
    return DensityMatrix(entries / np.trace(entries).real)


def random_state_vector(num_qubits, rng):
    """Haar-like random pure state"""
    dimension = 2 ** num_qubits
    amplitudes = rng.normal(size=dimension) + 1j * rng.normal(size=dimension)
    return StateVector(amplitudes / np.linalg.norm(amplitudes))


def product_state(states: Sequence[DensityMatrix]):
    """Tensor product of several density matrices, in order"""
    result = states[0]
    for state in states[1:]:
        result = kron(result, state)
    return result
