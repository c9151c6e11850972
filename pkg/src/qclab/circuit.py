"""Classifier architectures as gate programs over a shared parameter vector.

Two builders are provided: a hardware-efficient fully connected ansatz
(Rx-Rz-Rx rotations per qubit, CNOT ring entangler, repeated `depth` times)
and a QCNN (two convolution+pooling rounds 12->6->3 followed by a fully
connected tail on the survivors). Decoding measures one qubit against two
one-hot diagonal operators with a 0.5 threshold; exact ties go to class 0.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .statevector import (
    DimensionMismatchError,
    GateKind,
    GateOp,
    InvalidGateError,
    Statevector,
    _apply_gate_inplace,
    _probs_batch,
)


class Architecture(Enum):
    FULLY_CONNECTED = "fully_connected"
    QCNN = "qcnn"


@dataclass(frozen=True)
class DecodingRule:
    measure_qubit: int
    threshold: float = 0.5


@dataclass(frozen=True)
class CircuitModel:
    n_qubits: int
    gates: tuple[GateOp, ...]
    n_params: int
    decode: DecodingRule
    arch: Architecture
    depth: int  # fully connected depth (the tail depth for QCNN)

    def __post_init__(self):
        seen = set()
        for g in self.gates:
            if g.param_index is not None:
                if not 0 <= g.param_index < self.n_params:
                    raise InvalidGateError(
                        f"param_index {g.param_index} outside [0, {self.n_params})"
                    )
                seen.add(g.param_index)
        if len(seen) != self.n_params:
            raise InvalidGateError("every parameter slot must drive exactly one gate")


def _fc_layers(gates: list[GateOp], active: list[int], depth: int, next_param: int) -> int:
    """Append `depth` units of Rx-Rz-Rx rotations + CNOT ring over `active`."""
    for _ in range(depth):
        for q in active:
            for kind in (GateKind.RX, GateKind.RZ, GateKind.RX):
                gates.append(GateOp(kind, (q,), next_param))
                next_param += 1
        if len(active) >= 2:
            for i in range(len(active) - 1):
                gates.append(GateOp(GateKind.CNOT, (active[i], active[i + 1])))
            gates.append(GateOp(GateKind.CNOT, (active[-1], active[0])))
    return next_param


def build_fully_connected(n_qubits: int, depth: int) -> CircuitModel:
    """Hardware-efficient ansatz: 3*n_qubits*depth parameters."""
    if n_qubits < 2:
        raise ValueError("need at least 2 qubits")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    gates: list[GateOp] = []
    n_params = _fc_layers(gates, list(range(n_qubits)), depth, 0)
    return CircuitModel(
        n_qubits=n_qubits,
        gates=tuple(gates),
        n_params=n_params,
        decode=DecodingRule(measure_qubit=n_qubits - 1),
        arch=Architecture.FULLY_CONNECTED,
        depth=depth,
    )


def build_qcnn(n_qubits: int = 12, fc_depth: int = 20) -> CircuitModel:
    """QCNN: two conv+pool rounds halving the active register twice, then a
    fully connected tail of depth `fc_depth` on the survivors.

    Conv acts on disjoint adjacent pairs of the active register: RX,RZ on each
    qubit of the pair plus CRX(first->second). Pool retires the first qubit of
    each pair through CRX(dropped->kept); retired qubits receive no further
    gates.
    """
    if n_qubits % 4 != 0:
        raise ValueError("QCNN needs a qubit count divisible by 4")
    if fc_depth < 1:
        raise ValueError("fc_depth must be >= 1")
    gates: list[GateOp] = []
    next_param = 0
    active = list(range(n_qubits))
    for _ in range(2):
        # convolution over disjoint adjacent pairs
        for i in range(0, len(active), 2):
            a, b = active[i], active[i + 1]
            for q in (a, b):
                gates.append(GateOp(GateKind.RX, (q,), next_param))
                next_param += 1
                gates.append(GateOp(GateKind.RZ, (q,), next_param))
                next_param += 1
            gates.append(GateOp(GateKind.CRX, (a, b), next_param))
            next_param += 1
        # pooling: drop the first qubit of each pair into its partner
        kept = []
        for i in range(0, len(active), 2):
            dropped, keep = active[i], active[i + 1]
            gates.append(GateOp(GateKind.CRX, (dropped, keep), next_param))
            next_param += 1
            kept.append(keep)
        active = kept
    next_param = _fc_layers(gates, active, fc_depth, next_param)
    check_pooling_program(gates, pooled={q for q in range(n_qubits) if q not in active})
    return CircuitModel(
        n_qubits=n_qubits,
        gates=tuple(gates),
        n_params=next_param,
        decode=DecodingRule(measure_qubit=active[-1]),
        arch=Architecture.QCNN,
        depth=fc_depth,
    )


def check_pooling_program(gates: list[GateOp], pooled: set[int]) -> None:
    """Build-time invariant: once a qubit is pooled away it stays idle.

    A pooled qubit's final CRX-as-control is its pooling gate (convolutions
    may also use it as a control earlier); any gate after that pooling gate
    touching the qubit is a program-construction error.
    """
    for q in pooled:
        pool_at = -1
        for idx, g in enumerate(gates):
            if g.kind is GateKind.CRX and g.targets[0] == q:
                pool_at = idx
        if pool_at < 0:
            raise InvalidGateError(f"qubit {q} marked pooled but never pooled")
        for g in gates[pool_at + 1 :]:
            if q in g.targets:
                raise InvalidGateError(f"gate on retired qubit {q}: {g}")


def _check_theta(model: CircuitModel, theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (model.n_params,):
        raise DimensionMismatchError(
            f"expected {model.n_params} parameters, got shape {theta.shape}"
        )
    if not np.all(np.isfinite(theta)):
        raise ValueError("non-finite circuit parameter")
    return theta


def run_circuit_batch(model: CircuitModel, theta: np.ndarray, states: np.ndarray) -> np.ndarray:
    """Apply the full gate program to a (..., 2**n) batch; returns a new array."""
    theta = _check_theta(model, theta)
    if states.shape[-1] != 1 << model.n_qubits:
        raise DimensionMismatchError(
            f"state dimension {states.shape[-1]} != 2**{model.n_qubits}"
        )
    out = np.array(states, dtype=np.complex128)
    for g in model.gates:
        t = theta[g.param_index] if g.param_index is not None else 0.0
        _apply_gate_inplace(out, model.n_qubits, g, t)
    return out


def forward_batch(model: CircuitModel, theta: np.ndarray, states: np.ndarray) -> np.ndarray:
    """Class probabilities (..., 2) for a batch of encoded statevectors."""
    out = run_circuit_batch(model, theta, states)
    return _probs_batch(out, model.n_qubits, model.decode.measure_qubit)


def forward(model: CircuitModel, theta: np.ndarray, input: Statevector) -> tuple[float, float]:
    """(p0, p1) on the decode qubit after running the circuit on `input`."""
    if input.n_qubits != model.n_qubits:
        raise DimensionMismatchError(
            f"input has {input.n_qubits} qubits, model expects {model.n_qubits}"
        )
    p = forward_batch(model, theta, input.amps)
    return float(p[0]), float(p[1])


def predict_probs(p0: float, p1: float) -> int:
    return 0 if p0 >= p1 else 1  # exact tie resolved as class 0


def predict(model: CircuitModel, theta: np.ndarray, input: Statevector) -> int:
    p0, p1 = forward(model, theta, input)
    return predict_probs(p0, p1)


def init_params(model: CircuitModel, seed) -> np.ndarray:
    """Uniform [0, 2*pi) initialization from a seeded PRNG (PCG64)."""
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, 2.0 * np.pi, size=model.n_params)
