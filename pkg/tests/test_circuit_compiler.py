import logging

import numpy as np
import pytest

from src.circuit_compiler import (
    BELL,
    CSWAPR,
    FREDKIN,
    PARITY,
    U2,
    Circuit,
    CircuitFormatError,
    Gate,
    build_cswap_chain,
    circuit_unitary,
    distributed_construct,
    distributed_projection,
    emit_circuit,
    fredkin_count,
    fredkin_unitary,
    lower_to_fredkin,
    lower_to_two_qubit,
    parse_circuit,
    simulate_circuit,
    simulate_projection,
    summarize,
    two_qubit_count,
    validate_fredkin_decomposition,
    verify_distributed_identity,
)
from src.collective_protocol import swap_projection_apply
from src.noise_models import white
from src.qstate_core import (
    DensityMatrix,
    ParameterError,
    StateVector,
    cyclic_shift_operator,
    kron,
    kron_power,
    random_density_matrix,
)

V = np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]]) / 2
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


def controlled(op):
    matrix = np.eye(4, dtype=complex)
    matrix[2:, 2:] = op
    return matrix


def sleator_weinfurter_fredkin():
    # CNOT(b->a), Toffoli(c, a -> b), CNOT(b->a) with c=0, a=1, b=2
    return [
        Gate(U2, (2, 1), CNOT),
        Gate(U2, (1, 2), controlled(V)),
        Gate(U2, (0, 1), CNOT),
        Gate(U2, (1, 2), controlled(V.conj().T)),
        Gate(U2, (0, 1), CNOT),
        Gate(U2, (0, 2), controlled(V)),
        Gate(U2, (2, 1), CNOT),
    ]


def basis_state(index, num_qubits):
    data = np.zeros(2 ** num_qubits)
    data[index] = 1.0
    return StateVector(data)


@pytest.mark.parametrize("k,n", [(2, 1), (3, 1), (3, 2), (5, 3)])
def test_chain_gate_counts(k, n):
    chain = build_cswap_chain(k, n)
    assert chain.counts()[CSWAPR] == k - 1
    assert fredkin_count(chain) == n * (k - 1)
    assert two_qubit_count(chain) == 5 * n * (k - 1)
    summary = summarize(chain)
    assert summary["fredkin"] == n * (k - 1)
    assert summary["fredkin_bound"] == n * k
    assert summary["two_qubit_bound"] == 5 * n * k
    assert summary["controlled_register_swaps"] == k - 1


@pytest.mark.parametrize("k,n", [(2, 1), (3, 1), (2, 2), (3, 2)])
def test_chain_is_controlled_cyclic_shift(k, n):
    unitary = circuit_unitary(build_cswap_chain(k, n))
    register_dim = 2 ** (n * k)
    blocks = unitary.reshape(2, register_dim, 2, register_dim)
    np.testing.assert_allclose(blocks[0, :, 0, :], np.eye(register_dim))
    np.testing.assert_allclose(blocks[1, :, 1, :], cyclic_shift_operator(k, 2 ** n).data)
    assert not blocks[0, :, 1, :].any()
    assert not blocks[1, :, 0, :].any()


@pytest.mark.parametrize("k,n", [(3, 1), (3, 2), (4, 1)])
def test_fredkin_lowering_preserves_unitary(k, n):
    chain = build_cswap_chain(k, n)
    lowered = lower_to_fredkin(chain)
    assert lowered.counts()[FREDKIN] == n * (k - 1)
    assert lowered.counts()[CSWAPR] == 0
    unitary = circuit_unitary(lowered)
    np.testing.assert_array_equal(unitary, circuit_unitary(chain))
    assert set(np.unique(unitary)) <= {0, 1}


def test_simulate_circuit_on_basis_states():
    chain = build_cswap_chain(2, 1)
    np.testing.assert_allclose(simulate_circuit(chain, basis_state(0b001, 3)).data,
                               basis_state(0b001, 3).data)
    np.testing.assert_allclose(simulate_circuit(chain, basis_state(0b101, 3)).data,
                               basis_state(0b110, 3).data)
    with pytest.raises(ParameterError, match="dimension"):
        simulate_circuit(chain, basis_state(0, 2))


def test_fredkin_unitary_swaps_when_control_set():
    fredkin = fredkin_unitary()
    np.testing.assert_allclose(fredkin @ basis_state(0b101, 3).data, basis_state(0b110, 3).data)
    np.testing.assert_allclose(fredkin @ basis_state(0b001, 3).data, basis_state(0b001, 3).data)


@pytest.mark.parametrize("k,n", [(2, 1), (3, 1), (2, 2), (3, 2)])
def test_ancilla_projection_matches_operator_engine(rng, k, n):
    rho = random_density_matrix(n * k, rng)
    compiled, weight = simulate_projection(build_cswap_chain(k, n), rho)
    expected, expected_weight = swap_projection_apply(rho, k, 2 ** n)
    np.testing.assert_allclose(compiled.data, expected.data, atol=1e-10)
    assert weight == pytest.approx(expected_weight, abs=1e-10)


def test_projection_needs_matching_input(rng):
    with pytest.raises(ParameterError, match="does not match"):
        simulate_projection(build_cswap_chain(2, 1), random_density_matrix(3, rng))
    with pytest.raises(ParameterError, match="one ancilla"):
        simulate_projection(distributed_construct(), random_density_matrix(4, rng))


def test_fredkin_decomposition_is_validated(caplog):
    with caplog.at_level(logging.WARNING):
        deviation = validate_fredkin_decomposition(sleator_weinfurter_fredkin())
    assert deviation < 1e-10
    assert "expected 5" in caplog.text


def test_bad_decompositions_are_rejected():
    with pytest.raises(CircuitFormatError, match="differs from Fredkin"):
        validate_fredkin_decomposition(sleator_weinfurter_fredkin()[:-1])
    with pytest.raises(CircuitFormatError, match="U2 gates only"):
        validate_fredkin_decomposition([Gate(FREDKIN, (0, 1, 2))])


@pytest.mark.parametrize("k,n", [(2, 1), (3, 1)])
def test_two_qubit_lowering_preserves_unitary(k, n):
    chain = build_cswap_chain(k, n)
    decomposition = sleator_weinfurter_fredkin()
    lowered = lower_to_two_qubit(chain, decomposition)
    assert lowered.counts()[U2] == len(decomposition) * n * (k - 1)
    assert lowered.counts()[FREDKIN] == 0
    np.testing.assert_allclose(circuit_unitary(lowered), circuit_unitary(chain), atol=1e-10)


def test_gate_validation():
    with pytest.raises(CircuitFormatError, match="distinct"):
        Gate(FREDKIN, (0, 1, 1))
    with pytest.raises(CircuitFormatError, match="not unitary"):
        Gate(U2, (0, 1), np.ones((4, 4)))
    with pytest.raises(CircuitFormatError, match="no payload"):
        Gate(FREDKIN, (0, 1, 2), np.eye(4))
    with pytest.raises(CircuitFormatError, match="unknown gate"):
        Gate("TOFFOLI", (0, 1, 2))
    with pytest.raises(CircuitFormatError, match=">= 0"):
        Gate(FREDKIN, (-1, 1, 2))


def test_register_swap_control_may_share_index_with_register():
    gate = Gate(CSWAPR, (0, 0, 1))
    assert gate.operands == (0, 0, 1)
    circuit = Circuit(num_ancillas=1, num_registers=2, register_size=1)
    circuit.append(gate)
    assert circuit.counts()[CSWAPR] == 1
    with pytest.raises(CircuitFormatError, match="distinct"):
        Gate(CSWAPR, (0, 1, 1))
    with pytest.raises(CircuitFormatError, match="distinct"):
        Gate(U2, (2, 2), np.eye(4))


def test_circuit_append_checks_layout():
    circuit = Circuit(num_ancillas=1, num_registers=2, register_size=1)
    with pytest.raises(CircuitFormatError, match="not an ancilla"):
        circuit.append(Gate(CSWAPR, (1, 0, 1)))
    with pytest.raises(CircuitFormatError, match="out of range"):
        circuit.append(Gate(CSWAPR, (0, 0, 2)))
    with pytest.raises(CircuitFormatError, match="out of range"):
        circuit.append(Gate(FREDKIN, (0, 1, 3)))


def test_distributed_construct_layout():
    circuit = distributed_construct(register_size=2)
    assert circuit.parties == 2
    assert circuit.num_ancillas == 2
    assert fredkin_count(circuit) == 4
    with pytest.raises(ParameterError):
        distributed_construct(k=3)


@pytest.mark.parametrize("projector", [PARITY, BELL])
def test_distributed_identity_on_pure_and_noisy_pairs(bell_target, projector):
    pure = kron_power(bell_target.projector(), 2)
    assert verify_distributed_identity(pure, projector) < 1e-10
    noisy = kron_power(white(bell_target, 0.1), 2)
    assert verify_distributed_identity(noisy, projector) < 1e-10


@pytest.mark.parametrize("projector", [PARITY, BELL])
def test_distributed_identity_on_random_inputs(rng, projector):
    for _ in range(3):
        assert verify_distributed_identity(random_density_matrix(4, rng), projector) < 1e-10


def test_distributed_projectors_agree(rng):
    rho = kron(random_density_matrix(2, rng), random_density_matrix(2, rng))
    circuit = distributed_construct()
    parity, parity_weight = distributed_projection(circuit, rho, PARITY)
    bell_state, bell_weight = distributed_projection(circuit, rho, BELL)
    np.testing.assert_allclose(parity.data, bell_state.data, atol=1e-10)
    assert parity_weight == pytest.approx(bell_weight)
    with pytest.raises(ParameterError, match="unknown projector"):
        distributed_projection(circuit, rho, "ghz")


def test_distributed_identity_needs_even_split(rng):
    with pytest.raises(ParameterError, match="4n qubits"):
        verify_distributed_identity(random_density_matrix(3, rng))


def test_emit_and_parse():
    lowered = lower_to_two_qubit(build_cswap_chain(2, 1), sleator_weinfurter_fredkin())
    text = emit_circuit(lowered)
    assert text.startswith("# collective-qsv circuit v1\n")
    assert parse_circuit(text) == lowered

    distributed = distributed_construct()
    text = emit_circuit(distributed)
    assert "PARTIES 2" in text
    assert parse_circuit(text) == distributed


def test_emitted_chain_lists_fredkin_lines():
    text = emit_circuit(lower_to_fredkin(build_cswap_chain(3, 2)))
    lines = text.splitlines()
    assert lines[1:3] == ["ANCILLA 1", "REGISTERS 3 2"]
    assert sum(line.startswith("FREDKIN ") for line in lines) == 4


@pytest.mark.parametrize("text,message", [
    ("ANCILLA 1\nREGISTERS 2 1\nTOFFOLI 0 1 2\n", "unknown keyword"),
    ("REGISTERS 2 1\nCSWAPR 0 0 1\n", "headers"),
    ("ANCILLA 1\nREGISTERS 2 1\nCSWAPR 0 0 2\n", "line 3"),
    ("ANCILLA 1\nREGISTERS 2 1\nCSWAPR 0 x 1\n", "line 3"),
    ("ANCILLA 1\nREGISTERS 2 1\nU2 1 2 1 0\n", "16 entries"),
    ("ANCILLA one\nREGISTERS 2 1\n", "line 1"),
])
def test_parse_errors(text, message):
    with pytest.raises(CircuitFormatError, match=message):
        parse_circuit(text)


def test_identity_input_is_fixed_by_projection():
    rho = DensityMatrix(np.eye(4) / 4)
    projected, weight = simulate_projection(build_cswap_chain(2, 1), rho)
    expected, expected_weight = swap_projection_apply(rho, 2, 2)
    np.testing.assert_allclose(projected.data, expected.data, atol=1e-12)
    assert weight == pytest.approx(0.75)
    assert expected_weight == pytest.approx(0.75)
