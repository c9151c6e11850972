import numpy as np
import pytest

from oracles import dense_forward, random_state
from qclab.circuit import (
    Architecture,
    CircuitModel,
    DecodingRule,
    build_fully_connected,
    build_qcnn,
    check_pooling_program,
    forward,
    forward_batch,
    init_params,
    predict,
    predict_probs,
)
from qclab.statevector import (
    DimensionMismatchError,
    GateKind,
    GateOp,
    InvalidGateError,
    Statevector,
)


# ---------------------------------------------------------------------------
# fully connected builder
# ---------------------------------------------------------------------------

def test_fc_parameter_and_gate_counts():
    m = build_fully_connected(12, 20)
    assert m.n_params == 720  # 3 rotations * 12 qubits * 20 layers
    assert len(m.gates) == 960  # 720 rotations + 12 CNOTs * 20 layers
    assert m.decode.measure_qubit == 11
    assert m.arch is Architecture.FULLY_CONNECTED


def test_fc_small_counts():
    m = build_fully_connected(2, 1)
    assert m.n_params == 6
    assert sum(g.kind is GateKind.CNOT for g in m.gates) == 2


def test_fc_3x2_hand_enumeration():
    """Full by-hand enumeration of the (3 qubits, depth 2) gate program."""
    m = build_fully_connected(3, 2)
    expected = []
    p = 0
    for _ in range(2):
        for q in range(3):
            for kind in (GateKind.RX, GateKind.RZ, GateKind.RX):
                expected.append(GateOp(kind, (q,), p))
                p += 1
        expected += [
            GateOp(GateKind.CNOT, (0, 1)),
            GateOp(GateKind.CNOT, (1, 2)),
            GateOp(GateKind.CNOT, (2, 0)),  # ring wraparound
        ]
    assert list(m.gates) == expected
    assert m.n_params == 18


def test_fc_rejects_bad_shapes():
    with pytest.raises(ValueError):
        build_fully_connected(1, 3)
    with pytest.raises(ValueError):
        build_fully_connected(4, 0)


# ---------------------------------------------------------------------------
# QCNN builder
# ---------------------------------------------------------------------------

def test_qcnn_12_20_counts_and_survivors():
    m = build_qcnn(12, 20)
    # round 1: 6 pairs * 5 conv params + 6 pool = 36; round 2: 3 pairs -> 18
    # tail: 3 qubits * 3 rotations * 20 layers = 180; total 234
    assert m.n_params == 234
    assert m.decode.measure_qubit == 11
    touched_late = {q for g in m.gates[-9 * 20 :] for q in g.targets}
    assert touched_late == {3, 7, 11}  # survivors after 12 -> 6 -> 3


def test_qcnn_4_1_hand_enumeration():
    """By-hand program for the smallest QCNN (4 qubits, tail depth 1)."""
    m = build_qcnn(4, 1)
    g = list(m.gates)
    expected = []
    p = 0
    # round 1 conv on pairs (0,1) and (2,3)
    for a, b in [(0, 1), (2, 3)]:
        for q in (a, b):
            expected.append(GateOp(GateKind.RX, (q,), p)); p += 1
            expected.append(GateOp(GateKind.RZ, (q,), p)); p += 1
        expected.append(GateOp(GateKind.CRX, (a, b), p)); p += 1
    # round 1 pool: 0 -> 1, 2 -> 3
    expected.append(GateOp(GateKind.CRX, (0, 1), p)); p += 1
    expected.append(GateOp(GateKind.CRX, (2, 3), p)); p += 1
    # round 2 conv on the pair (1, 3), pool 1 -> 3
    for q in (1, 3):
        expected.append(GateOp(GateKind.RX, (q,), p)); p += 1
        expected.append(GateOp(GateKind.RZ, (q,), p)); p += 1
    expected.append(GateOp(GateKind.CRX, (1, 3), p)); p += 1
    expected.append(GateOp(GateKind.CRX, (1, 3), p)); p += 1
    # tail on the lone survivor: 3 rotations, no CNOT ring possible
    for kind in (GateKind.RX, GateKind.RZ, GateKind.RX):
        expected.append(GateOp(kind, (3,), p)); p += 1
    assert g == expected
    assert m.n_params == p == 21
    assert m.decode.measure_qubit == 3


def test_qcnn_rejects_bad_width():
    with pytest.raises(ValueError):
        build_qcnn(10, 5)


def test_pooling_check_flags_retired_qubit_use():
    gates = [
        GateOp(GateKind.CRX, (0, 1), 0),  # pools qubit 0 away
        GateOp(GateKind.RX, (0,), 1),  # illegal: acts on the retired qubit
    ]
    with pytest.raises(InvalidGateError):
        check_pooling_program(gates, pooled={0})


def test_model_rejects_unused_parameter_slot():
    with pytest.raises(InvalidGateError):
        CircuitModel(
            n_qubits=2,
            gates=(GateOp(GateKind.RX, (0,), 0),),
            n_params=2,  # slot 1 drives nothing
            decode=DecodingRule(1),
            arch=Architecture.FULLY_CONNECTED,
            depth=1,
        )


# ---------------------------------------------------------------------------
# forward pass
# ---------------------------------------------------------------------------

def test_forward_all_zero_angles_on_zero_state():
    m = build_fully_connected(4, 2)
    p0, p1 = forward(m, np.zeros(m.n_params), Statevector.zero(4))
    assert p0 == pytest.approx(1.0, abs=1e-12)
    assert p1 == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("builder,args", [
    (build_fully_connected, (3, 2)),
    (build_fully_connected, (4, 3)),
    (build_qcnn, (4, 2)),
])
def test_forward_matches_dense_matrix_oracle(builder, args):
    m = builder(*args)
    rng = np.random.default_rng(42)
    for _ in range(5):
        theta = rng.uniform(0, 2 * np.pi, m.n_params)
        amps = random_state(m.n_qubits, rng)
        got = forward(m, theta, Statevector(m.n_qubits, amps))
        want = dense_forward(m, theta, amps)
        np.testing.assert_allclose(got, want, atol=1e-10)


def test_forward_probabilities_sum_to_one():
    m = build_fully_connected(3, 3)
    rng = np.random.default_rng(5)
    theta = rng.uniform(0, 2 * np.pi, m.n_params)
    p = forward_batch(m, theta, np.stack([random_state(3, rng) for _ in range(8)]))
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all(p >= -1e-15)


def test_forward_is_4pi_periodic():
    m = build_fully_connected(3, 2)
    rng = np.random.default_rng(9)
    theta = rng.uniform(0, 2 * np.pi, m.n_params)
    amps = random_state(3, rng)
    a = forward(m, theta, Statevector(3, amps))
    b = forward(m, theta + 4 * np.pi, Statevector(3, amps))
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_forward_deterministic_bitwise():
    m = build_fully_connected(4, 3)
    rng = np.random.default_rng(1)
    theta = rng.uniform(0, 2 * np.pi, m.n_params)
    sv = Statevector(4, random_state(4, rng))
    a = forward(m, theta, sv)
    b = forward(m, theta, sv.copy())
    assert a == b  # bit-identical, not just close


def test_forward_shape_errors():
    m = build_fully_connected(3, 1)
    with pytest.raises(DimensionMismatchError):
        forward(m, np.zeros(m.n_params + 1), Statevector.zero(3))
    with pytest.raises(DimensionMismatchError):
        forward(m, np.zeros(m.n_params), Statevector.zero(4))
    with pytest.raises(ValueError):
        forward(m, np.full(m.n_params, np.nan), Statevector.zero(3))


def test_predict_threshold_and_tie():
    assert predict_probs(0.6, 0.4) == 0
    assert predict_probs(0.4, 0.6) == 1
    assert predict_probs(0.5, 0.5) == 0  # tie -> class 0


def test_predict_on_flipped_decode_qubit():
    m = build_fully_connected(2, 1)
    theta = np.zeros(m.n_params)
    theta[3] = np.pi  # first RX on qubit 1 (the decode qubit)
    assert predict(m, theta, Statevector.zero(2)) == 1


def test_init_params_range_and_determinism():
    m = build_fully_connected(12, 20)
    a = init_params(m, 123)
    b = init_params(m, 123)
    c = init_params(m, 124)
    assert a.shape == (720,)
    assert np.all((a >= 0.0) & (a < 2 * np.pi))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
