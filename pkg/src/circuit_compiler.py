"""
Collective QSV - Circuit Compiler

This module lowers the ancilla-controlled cyclic shift to a chain of
controlled register-SWAPs, then to Fredkin gates and two-qubit gate counts. It
also simulates the compiled circuits, builds the distributed two-party variant
with a Bell-pair ancilla, and reads/writes the line-oriented circuit format.

Qubit layout: the ancilla qubits come first, then register r occupies qubits
num_ancillas + r*n ... num_ancillas + (r+1)*n - 1. Qubit 0 is the most
significant bit of a basis index.
"""

import logging

import numpy as np

from src import config
from src.collective_protocol import swap_projection_apply
from src.qstate_core import (
    Operator,
    ParameterError,
    StateVector,
    check_dimension,
)

logger = logging.getLogger(__name__)

CSWAPR = "CSWAPR"
FREDKIN = "FREDKIN"
U2 = "U2"
GATE_KINDS = (CSWAPR, FREDKIN, U2)

PARITY = "parity"
BELL = "bell"

_PLUS = np.array([1.0, 1.0], dtype=np.complex128) / np.sqrt(2)
_MINUS = np.array([1.0, -1.0], dtype=np.complex128) / np.sqrt(2)


class CircuitFormatError(ParameterError):
    """Malformed circuit text or an inconsistent gate"""


class Gate:
    """A controlled register-SWAP, a Fredkin gate or a generic two-qubit gate"""

    def __init__(self, kind, operands, payload=None):
        """Initialize a gate

        Args:
            kind (str): CSWAPR, FREDKIN or U2
            operands (tuple): (control, register, register) for CSWAPR,
                (control, qubit, qubit) for FREDKIN, (qubit, qubit) for U2
            payload (array-like, optional): 4x4 unitary, U2 only

        Raises:
            CircuitFormatError: If the operands or payload are inconsistent
        """
        if kind not in GATE_KINDS:
            raise CircuitFormatError(f"unknown gate kind '{kind}'")
        operands = tuple(int(x) for x in operands)
        arity = 2 if kind == U2 else 3
        if len(operands) != arity:
            raise CircuitFormatError(f"{kind} takes {arity} operands, got {operands}")
        if min(operands) < 0:
            raise CircuitFormatError(f"{kind} operands must be >= 0, got {operands}")
        # CSWAPR control indexes ancillas, its targets index registers
        distinct = operands[1:] if kind == CSWAPR else operands
        if len(set(distinct)) != len(distinct):
            raise CircuitFormatError(f"{kind} operands must be distinct, got {operands}")

        if kind == U2:
            if payload is None:
                raise CircuitFormatError("U2 gate needs a 4x4 unitary payload")
            payload = np.array(payload, dtype=np.complex128).reshape(4, 4)
            deviation = np.max(np.abs(payload @ payload.conj().T - np.eye(4)))
            if deviation > config.UNITARY_TOL:
                raise CircuitFormatError(f"U2 payload is not unitary (deviation {deviation:.3g})")
            payload.flags.writeable = False
        elif payload is not None:
            raise CircuitFormatError(f"{kind} takes no payload")

        self.kind = kind
        self.operands = operands
        self.payload = payload

    def __eq__(self, other):
        if not isinstance(other, Gate):
            return NotImplemented
        if (self.kind, self.operands) != (other.kind, other.operands):
            return False
        if self.payload is None or other.payload is None:
            return self.payload is None and other.payload is None
        return bool(np.array_equal(self.payload, other.payload))

    def __repr__(self):
        return f"Gate({self.kind}, {self.operands})"


class Circuit:
    """An ordered gate list over ancilla qubits and k registers of n qubits"""

    def __init__(self, num_ancillas, num_registers, register_size, parties=1):
        if num_ancillas < 0 or num_registers < 1 or register_size < 1:
            raise CircuitFormatError(
                f"invalid layout: ancillas={num_ancillas}, registers={num_registers}, "
                f"register size={register_size}")
        if parties < 1:
            raise CircuitFormatError(f"parties must be >= 1, got {parties}")
        self.num_ancillas = int(num_ancillas)
        self.num_registers = int(num_registers)
        self.register_size = int(register_size)
        self.parties = int(parties)
        self.gates = []

    @property
    def num_qubits(self):
        return self.num_ancillas + self.num_registers * self.register_size

    @property
    def dimension(self):
        return 2 ** self.num_qubits

    def register_qubits(self, register):
        start = self.num_ancillas + register * self.register_size
        return list(range(start, start + self.register_size))

    def append(self, gate):
        """Add a gate after checking its operands against the layout"""
        if gate.kind == CSWAPR:
            control, first, second = gate.operands
            if control >= self.num_ancillas:
                raise CircuitFormatError(f"CSWAPR control {control} is not an ancilla qubit")
            if max(first, second) >= self.num_registers:
                raise CircuitFormatError(f"CSWAPR register out of range: {gate.operands}")
        elif max(gate.operands) >= self.num_qubits:
            raise CircuitFormatError(f"{gate.kind} qubit out of range: {gate.operands}")
        self.gates.append(gate)

    def counts(self):
        """Number of gates of each kind"""
        tally = {kind: 0 for kind in GATE_KINDS}
        for gate in self.gates:
            tally[gate.kind] += 1
        return tally

    def copy_layout(self):
        return Circuit(self.num_ancillas, self.num_registers, self.register_size, self.parties)

    def __eq__(self, other):
        if not isinstance(other, Circuit):
            return NotImplemented
        return ((self.num_ancillas, self.num_registers, self.register_size, self.parties)
                == (other.num_ancillas, other.num_registers, other.register_size, other.parties)
                and self.gates == other.gates)

    def __repr__(self):
        return (f"Circuit(ancillas={self.num_ancillas}, registers={self.num_registers}x"
                f"{self.register_size}, gates={len(self.gates)})")


def build_cswap_chain(k, n):
    """Controlled cyclic shift of k registers as k-1 controlled register-SWAPs

    The swaps run from the last pair down to the first, so the compiled
    permutation sends register m to m+1 (mod k), the same direction as
    cyclic_shift_operator.

    Args:
        k (int): Number of registers, k >= 2
        n (int): Qubits per register, n >= 1

    Returns:
        Circuit: One ancilla qubit followed by k registers
    """
    if k < 2:
        raise ParameterError(f"chain needs k >= 2, got {k}")
    if n < 1:
        raise ParameterError(f"register size must be >= 1, got {n}")
    circuit = Circuit(num_ancillas=1, num_registers=k, register_size=n)
    for register in range(k - 2, -1, -1):
        circuit.append(Gate(CSWAPR, (0, register, register + 1)))
    return circuit


def _fredkins_for(circuit, gate):
    control, first, second = gate.operands
    pairs = zip(circuit.register_qubits(first), circuit.register_qubits(second))
    return [Gate(FREDKIN, (control, a, b)) for a, b in pairs]


def lower_to_fredkin(circuit):
    """Replace every controlled register-SWAP by n qubit-wise Fredkin gates"""
    lowered = circuit.copy_layout()
    for gate in circuit.gates:
        for replacement in (_fredkins_for(circuit, gate) if gate.kind == CSWAPR else [gate]):
            lowered.append(replacement)
    return lowered


def fredkin_count(circuit):
    """Fredkin gates after lowering"""
    tally = circuit.counts()
    return tally[FREDKIN] + tally[CSWAPR] * circuit.register_size


def two_qubit_count(circuit):
    """Two-qubit gates after lowering, at five per Fredkin gate"""
    return config.FREDKIN_TWO_QUBIT_COST * fredkin_count(circuit) + circuit.counts()[U2]


def gate_bounds(k, n):
    """Upper bounds nk Fredkin and 5nk two-qubit gates for a k-register chain"""
    return {"fredkin": n * k, "two_qubit": config.FREDKIN_TWO_QUBIT_COST * n * k}


def summarize(circuit):
    """Gate counts alongside the nk upper bounds"""
    bounds = gate_bounds(circuit.num_registers, circuit.register_size)
    tally = circuit.counts()
    return {
        "registers": circuit.num_registers,
        "register_size": circuit.register_size,
        "controlled_register_swaps": tally[CSWAPR],
        "fredkin": fredkin_count(circuit),
        "two_qubit": two_qubit_count(circuit),
        "fredkin_bound": bounds["fredkin"],
        "two_qubit_bound": bounds["two_qubit"],
    }


def _bit_shift(qubit, num_qubits):
    return num_qubits - 1 - qubit


def _fredkin_permutation(control, a, b, num_qubits):
    indices = np.arange(2 ** num_qubits)
    shift_c = _bit_shift(control, num_qubits)
    shift_a = _bit_shift(a, num_qubits)
    shift_b = _bit_shift(b, num_qubits)
    active = ((indices >> shift_c) & 1) == 1
    differ = (((indices >> shift_a) ^ (indices >> shift_b)) & 1) == 1
    flip = (1 << shift_a) | (1 << shift_b)
    return np.where(active & differ, indices ^ flip, indices)


def _apply_gate(circuit, gate, columns):
    """Apply one gate to every column of a (2^N, m) array"""
    num_qubits = circuit.num_qubits
    if gate.kind == FREDKIN:
        swapped = _fredkin_permutation(*gate.operands, num_qubits)
        result = np.empty_like(columns)
        result[swapped] = columns
        return result
    if gate.kind == CSWAPR:
        for fredkin in _fredkins_for(circuit, gate):
            columns = _apply_gate(circuit, fredkin, columns)
        return columns

    first, second = gate.operands
    width = columns.shape[1]
    tensor = columns.reshape([2] * num_qubits + [width])
    payload = gate.payload.reshape(2, 2, 2, 2)
    tensor = np.tensordot(payload, tensor, axes=([2, 3], [first, second]))
    tensor = np.moveaxis(tensor, [0, 1], [first, second])
    return tensor.reshape(2 ** num_qubits, width)


def simulate_circuit(circuit, state):
    """Apply the gates in order to a state vector on all circuit qubits

    Args:
        circuit (Circuit): Circuit to run
        state (StateVector): Input on circuit.num_qubits qubits

    Returns:
        StateVector: Output state
    """
    check_dimension(circuit.dimension, "circuit simulation")
    if state.dimension != circuit.dimension:
        raise ParameterError(f"state dimension {state.dimension} != circuit dimension "
                             f"{circuit.dimension}")
    columns = np.array(state.data).reshape(-1, 1)
    for gate in circuit.gates:
        columns = _apply_gate(circuit, gate, columns)
    return StateVector(columns[:, 0])


def circuit_unitary(circuit):
    """The full unitary of a circuit"""
    check_dimension(circuit.dimension, "circuit unitary")
    columns = np.eye(circuit.dimension, dtype=np.complex128)
    for gate in circuit.gates:
        columns = _apply_gate(circuit, gate, columns)
    return columns


def _ancilla_kraus(circuit, ancilla_state, outcome):
    """<outcome| U |ancilla_state> as an operator on the registers"""
    unitary = circuit_unitary(circuit)
    ancilla_dim = 2 ** circuit.num_ancillas
    register_dim = circuit.dimension // ancilla_dim
    blocks = unitary.reshape(ancilla_dim, register_dim, ancilla_dim, register_dim)
    return np.einsum("x,xiyj,y->ij", outcome.conj(), blocks, ancilla_state)


def _apply_kraus(kraus_ops, rho):
    result = sum(op @ rho.data @ op.conj().T for op in kraus_ops)
    result = (result + result.conj().T) / 2
    return Operator(result, hermitian=True), float(np.real(np.trace(result)))


def simulate_projection(circuit, rho):
    """Prepare the ancilla in |+>, run the circuit, post-select the ancilla on |+>

    Args:
        circuit (Circuit): Single-ancilla circuit, e.g. from build_cswap_chain
        rho (DensityMatrix): Input state of all registers

    Returns:
        tuple: (Operator, float) unnormalized post-selected state and its weight
    """
    if circuit.num_ancillas != 1:
        raise ParameterError("ancilla projection expects exactly one ancilla qubit")
    if rho.dimension * 2 != circuit.dimension:
        raise ParameterError(f"input dimension {rho.dimension} does not match the registers")
    return _apply_kraus([_ancilla_kraus(circuit, _PLUS, _PLUS)], rho)


def fredkin_unitary():
    """The 8x8 Fredkin matrix on (control, a, b)"""
    circuit = Circuit(num_ancillas=0, num_registers=3, register_size=1)
    circuit.append(Gate(FREDKIN, (0, 1, 2)))
    return circuit_unitary(circuit)


def validate_fredkin_decomposition(gates):
    """Check that two-qubit gates on qubits (0, 1, 2) realize Fredkin(0; 1, 2)

    Any length is accepted; a warning is logged when it is not five.

    Args:
        gates (list): U2 gates on the control (0) and the swapped qubits (1, 2)

    Returns:
        float: Largest entrywise deviation from the Fredkin matrix

    Raises:
        CircuitFormatError: If a gate is not U2 or the product is not Fredkin
    """
    circuit = Circuit(num_ancillas=0, num_registers=3, register_size=1)
    for gate in gates:
        if gate.kind != U2:
            raise CircuitFormatError(f"decompositions use U2 gates only, got {gate.kind}")
        circuit.append(gate)
    if len(gates) != config.EXPECTED_DECOMPOSITION_LENGTH:
        logger.warning("Fredkin decomposition has %d gates, expected %d",
                       len(gates), config.EXPECTED_DECOMPOSITION_LENGTH)
    deviation = float(np.max(np.abs(circuit_unitary(circuit) - fredkin_unitary())))
    if deviation > config.DECOMPOSITION_TOL:
        raise CircuitFormatError(f"decomposition differs from Fredkin by {deviation:.3g}")
    return deviation


def lower_to_two_qubit(circuit, decomposition):
    """Expand every Fredkin gate with a validated two-qubit decomposition"""
    validate_fredkin_decomposition(decomposition)
    fredkins = lower_to_fredkin(circuit)
    lowered = circuit.copy_layout()
    for gate in fredkins.gates:
        if gate.kind != FREDKIN:
            lowered.append(gate)
            continue
        mapping = gate.operands
        for template in decomposition:
            operands = tuple(mapping[q] for q in template.operands)
            lowered.append(Gate(U2, operands, template.payload))
    return lowered


def distributed_construct(n_parties=2, k=2, register_size=1):
    """Two-party SWAP projection with a Bell-pair ancilla

    Each copy is split between parties A and B, so the registers are laid out
    A1, B1, A2, B2. Party A swaps A1 with A2 controlled by its half of the
    ancilla (qubit 0) and party B does the same with qubit 1.
    """
    if n_parties != 2 or k != 2:
        raise ParameterError("distributed construction supports two parties and k=2 only")
    circuit = Circuit(num_ancillas=2, num_registers=4, register_size=register_size,
                      parties=n_parties)
    circuit.append(Gate(CSWAPR, (0, 0, 2)))
    circuit.append(Gate(CSWAPR, (1, 1, 3)))
    return circuit


def distributed_projection(circuit, rho, projector=PARITY):
    """Run the distributed circuit from |Phi> and post-select the ancilla pair

    Args:
        circuit (Circuit): Output of distributed_construct
        rho (DensityMatrix): Two-copy state on registers A1, B1, A2, B2
        projector (str): 'parity' for |++><++| + |--><--|, 'bell' for |Phi><Phi|

    Returns:
        tuple: (Operator, float) unnormalized post-selected state and its weight
    """
    if circuit.num_ancillas != 2:
        raise ParameterError("distributed projection expects a two-qubit ancilla")
    bell_pair = np.zeros(4, dtype=np.complex128)
    bell_pair[0] = bell_pair[3] = 1 / np.sqrt(2)
    if projector == PARITY:
        outcomes = [np.kron(_PLUS, _PLUS), np.kron(_MINUS, _MINUS)]
    elif projector == BELL:
        outcomes = [bell_pair]
    else:
        raise ParameterError(f"unknown projector '{projector}', expected '{PARITY}' or '{BELL}'")
    return _apply_kraus([_ancilla_kraus(circuit, bell_pair, out) for out in outcomes], rho)


def verify_distributed_identity(rho, projector=PARITY):
    """Largest entrywise deviation between the distributed and monolithic maps

    Args:
        rho (DensityMatrix): Two-copy state; each copy is split evenly between A and B
        projector (str): Ancilla post-selection, 'parity' or 'bell'

    Returns:
        float: max |distributed - swap_projection_apply|
    """
    num_qubits = rho.num_qubits
    if num_qubits % 4:
        raise ParameterError(f"a two-party two-copy state needs 4n qubits, got {num_qubits}")
    register_size = num_qubits // 4
    check_dimension(rho.dimension * 4, "distributed circuit")
    circuit = distributed_construct(register_size=register_size)
    distributed, _ = distributed_projection(circuit, rho, projector)
    monolithic, _ = swap_projection_apply(rho, 2, 2 ** (2 * register_size))
    return float(np.max(np.abs(distributed.data - monolithic.data)))


def emit_circuit(circuit):
    """Serialize a circuit to the line-oriented text format"""
    lines = [
        config.CIRCUIT_SCHEMA_LINE,
        f"ANCILLA {circuit.num_ancillas}",
        f"REGISTERS {circuit.num_registers} {circuit.register_size}",
    ]
    if circuit.parties != 1:
        lines.append(f"PARTIES {circuit.parties}")
    for gate in circuit.gates:
        fields = [gate.kind] + [str(x) for x in gate.operands]
        if gate.payload is not None:
            fields += [repr(complex(x)) for x in gate.payload.reshape(-1)]
        lines.append(" ".join(fields))
    return "\n".join(lines) + "\n"


def _parse_ints(fields, count, line_number):
    if len(fields) != count:
        raise CircuitFormatError(f"line {line_number}: expected {count} integers, got {fields}")
    try:
        return [int(x) for x in fields]
    except ValueError as error:
        raise CircuitFormatError(f"line {line_number}: {error}") from error


def parse_circuit(text):
    """Parse the text written by emit_circuit

    Raises:
        CircuitFormatError: On unknown keywords, bad operands or missing headers
    """
    header = {}
    gates = []
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        keyword, *fields = line.split()
        if keyword == "ANCILLA":
            header["ancilla"] = _parse_ints(fields, 1, line_number)[0]
        elif keyword == "REGISTERS":
            header["registers"] = _parse_ints(fields, 2, line_number)
        elif keyword == "PARTIES":
            header["parties"] = _parse_ints(fields, 1, line_number)[0]
        elif keyword in (CSWAPR, FREDKIN):
            gates.append((line_number, Gate(keyword, _parse_ints(fields, 3, line_number))))
        elif keyword == U2:
            if len(fields) != 18:
                raise CircuitFormatError(f"line {line_number}: U2 needs 2 qubits and 16 entries")
            operands = _parse_ints(fields[:2], 2, line_number)
            try:
                payload = [complex(x) for x in fields[2:]]
            except ValueError as error:
                raise CircuitFormatError(f"line {line_number}: {error}") from error
            gates.append((line_number, Gate(U2, operands, payload)))
        else:
            raise CircuitFormatError(f"line {line_number}: unknown keyword '{keyword}'")

    if "ancilla" not in header or "registers" not in header:
        raise CircuitFormatError("circuit text needs ANCILLA and REGISTERS headers")
    num_registers, register_size = header["registers"]
    circuit = Circuit(header["ancilla"], num_registers, register_size, header.get("parties", 1))
    for line_number, gate in gates:
        try:
            circuit.append(gate)
        except CircuitFormatError as error:
            raise CircuitFormatError(f"line {line_number}: {error}") from error
    return circuit
