"""Dense complex statevector storage and gate application.

Qubit ordering is little-endian: qubit 0 is the least significant bit of the
basis-state index. Rotation convention: RX(t) = exp(+i t/2 X) and
RZ(t) = exp(+i t/2 Z); the gradient code depends on this sign, do not flip it.

The private ``_apply_*`` kernels operate in place on arrays of shape
(..., 2**n) so that whole batches of states evolve with one numpy call per
gate; the public API wraps single states.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from math import cos, sin

import numpy as np

try:
    from . import _kernels
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    _kernels = None

NORM_TOL = 1e-12


class InvalidGateError(ValueError):
    """Gate description inconsistent with the state it is applied to."""


class DegenerateInputError(ValueError):
    """Input vector cannot be normalized (zero norm)."""


class DimensionMismatchError(ValueError):
    """Operands live in different Hilbert spaces."""


class GateKind(Enum):
    RX = "rx"
    RZ = "rz"
    CNOT = "cnot"
    CRX = "crx"


_ARITY = {GateKind.RX: 1, GateKind.RZ: 1, GateKind.CNOT: 2, GateKind.CRX: 2}
_PARAMETERIZED = {GateKind.RX, GateKind.RZ, GateKind.CRX}


@dataclass(frozen=True)
class GateOp:
    """One gate in a program: kind, target qubits, optional parameter slot.

    For two-qubit kinds targets = (control, target). CNOT carries no
    parameter; RX/RZ/CRX carry exactly one index into the model's theta.
    """

    kind: GateKind
    targets: tuple[int, ...]
    param_index: int | None = None

    def __post_init__(self):
        if len(self.targets) != _ARITY[self.kind]:
            raise InvalidGateError(
                f"{self.kind.name} takes {_ARITY[self.kind]} targets, got {self.targets}"
            )
        if len(set(self.targets)) != len(self.targets):
            raise InvalidGateError(f"duplicate qubit in targets {self.targets}")
        if self.kind in _PARAMETERIZED:
            if self.param_index is None:
                raise InvalidGateError(f"{self.kind.name} requires a param_index")
        elif self.param_index is not None:
            raise InvalidGateError("CNOT carries no parameter")


@dataclass
class Statevector:
    """Unit-norm complex amplitude vector over 2**n_qubits basis states."""

    n_qubits: int
    amps: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.amps = np.asarray(self.amps, dtype=np.complex128)
        if self.amps.shape != (2**self.n_qubits,):
            raise DimensionMismatchError(
                f"expected {2**self.n_qubits} amplitudes, got {self.amps.shape}"
            )

    @classmethod
    def zero(cls, n_qubits: int) -> "Statevector":
        amps = np.zeros(2**n_qubits, dtype=np.complex128)
        amps[0] = 1.0
        return cls(n_qubits, amps)

    @classmethod
    def basis(cls, n_qubits: int, index: int) -> "Statevector":
        amps = np.zeros(2**n_qubits, dtype=np.complex128)
        amps[index] = 1.0
        return cls(n_qubits, amps)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def normalize(self) -> "Statevector":
        n = self.norm()
        if n == 0.0:
            raise DegenerateInputError("cannot normalize the zero vector")
        self.amps /= n
        return self

    def copy(self) -> "Statevector":
        return Statevector(self.n_qubits, self.amps.copy())


def normalize(raw: np.ndarray) -> Statevector:
    """Map a raw real or complex vector of length 2**n to a unit statevector."""
    raw = np.asarray(raw)
    size = raw.shape[-1] if raw.ndim else 0
    if raw.ndim != 1 or size == 0 or (size & (size - 1)) != 0:
        raise DimensionMismatchError(f"length {size} is not a power of two")
    nrm = np.linalg.norm(raw)
    if nrm == 0.0:
        raise DegenerateInputError("cannot normalize the zero vector")
    n_qubits = int(size).bit_length() - 1
    return Statevector(n_qubits, raw.astype(np.complex128) / nrm)


# ---------------------------------------------------------------------------
# in-place batched kernels, arrays of shape (..., 2**n)
# ---------------------------------------------------------------------------

def _split1(arr: np.ndarray, n: int, q: int) -> np.ndarray:
    """View exposing bit q as an axis of length 2: (..., high, 2, low)."""
    return arr.reshape(arr.shape[:-1] + (1 << (n - 1 - q), 2, 1 << q))


def _apply_rx(arr: np.ndarray, n: int, q: int, theta: float) -> None:
    c, s = cos(theta / 2.0), sin(theta / 2.0)
    v = _split1(arr, n, q)
    a0 = v[..., 0, :].copy()
    a1 = v[..., 1, :]
    v[..., 0, :] = c * a0 + (1j * s) * a1
    v[..., 1, :] = (1j * s) * a0 + c * a1


def _apply_rz(arr: np.ndarray, n: int, q: int, theta: float) -> None:
    v = _split1(arr, n, q)
    v[..., 0, :] *= np.exp(0.5j * theta)
    v[..., 1, :] *= np.exp(-0.5j * theta)


def _split2(arr: np.ndarray, n: int, qa: int, qb: int):
    """Views of the four (bit qa, bit qb) blocks. qa, qb distinct."""
    hi, lo = (qa, qb) if qa > qb else (qb, qa)
    v = arr.reshape(
        arr.shape[:-1]
        + (1 << (n - 1 - hi), 2, 1 << (hi - lo - 1), 2, 1 << lo)
    )
    def block(ba: int, bb: int) -> np.ndarray:
        bits = {qa: ba, qb: bb}
        return v[..., bits[hi], :, bits[lo], :]
    return block


def _apply_cnot(arr: np.ndarray, n: int, control: int, target: int) -> None:
    block = _split2(arr, n, control, target)
    b10 = block(1, 0)
    b11 = block(1, 1)
    tmp = b10.copy()
    b10[...] = b11
    b11[...] = tmp


def _apply_crx(arr: np.ndarray, n: int, control: int, target: int, theta: float) -> None:
    c, s = cos(theta / 2.0), sin(theta / 2.0)
    block = _split2(arr, n, control, target)
    b10 = block(1, 0)
    b11 = block(1, 1)
    a0 = b10.copy()
    b10[...] = c * a0 + (1j * s) * b11
    b11[...] = (1j * s) * a0 + c * b11


def _apply_gate_inplace(arr: np.ndarray, n: int, gate: GateOp, theta: float) -> None:
    if _kernels is not None and arr.flags.c_contiguous:
        a2 = arr.reshape(-1, arr.shape[-1])
        if gate.kind is GateKind.RX:
            _kernels.rx_inplace(a2, gate.targets[0], cos(theta / 2.0), sin(theta / 2.0))
        elif gate.kind is GateKind.RZ:
            _kernels.rz_inplace(a2, gate.targets[0], theta)
        elif gate.kind is GateKind.CNOT:
            _kernels.cnot_inplace(a2, gate.targets[0], gate.targets[1])
        else:
            _kernels.crx_inplace(
                a2, gate.targets[0], gate.targets[1], cos(theta / 2.0), sin(theta / 2.0)
            )
        return
    _apply_gate_numpy(arr, n, gate, theta)


def _apply_gate_numpy(arr: np.ndarray, n: int, gate: GateOp, theta: float) -> None:
    if gate.kind is GateKind.RX:
        _apply_rx(arr, n, gate.targets[0], theta)
    elif gate.kind is GateKind.RZ:
        _apply_rz(arr, n, gate.targets[0], theta)
    elif gate.kind is GateKind.CNOT:
        _apply_cnot(arr, n, gate.targets[0], gate.targets[1])
    else:
        _apply_crx(arr, n, gate.targets[0], gate.targets[1], theta)


def _apply_pauli_generator(arr: np.ndarray, n: int, gate: GateOp) -> np.ndarray:
    """Return (i/2)*P*arr where P is the generator of the gate's rotation.

    dU/dtheta = (i/2) P U under the exp(+i theta/2 P) convention; for CRX the
    generator is X on the target restricted to the control=1 subspace.
    """
    out = np.zeros_like(arr)
    if gate.kind is GateKind.RX:
        v_in = _split1(arr, n, gate.targets[0])
        v_out = _split1(out, n, gate.targets[0])
        v_out[..., 0, :] = 0.5j * v_in[..., 1, :]
        v_out[..., 1, :] = 0.5j * v_in[..., 0, :]
    elif gate.kind is GateKind.RZ:
        v_in = _split1(arr, n, gate.targets[0])
        v_out = _split1(out, n, gate.targets[0])
        v_out[..., 0, :] = 0.5j * v_in[..., 0, :]
        v_out[..., 1, :] = -0.5j * v_in[..., 1, :]
    elif gate.kind is GateKind.CRX:
        control, target = gate.targets
        bi = _split2(arr, n, control, target)
        bo = _split2(out, n, control, target)
        bo(1, 0)[...] = 0.5j * bi(1, 1)
        bo(1, 1)[...] = 0.5j * bi(1, 0)
    else:
        raise InvalidGateError("CNOT has no rotation parameter")
    return out


def _validate_gate(gate: GateOp, n_qubits: int) -> None:
    for q in gate.targets:
        if not 0 <= q < n_qubits:
            raise InvalidGateError(f"qubit {q} out of range for {n_qubits} qubits")


# ---------------------------------------------------------------------------
# public single-state operations
# ---------------------------------------------------------------------------

def apply_gate(state: Statevector, gate: GateOp, theta: float = 0.0) -> Statevector:
    """Return the unitarily evolved state; the input is left untouched."""
    _validate_gate(gate, state.n_qubits)
    out = state.amps.copy()
    _apply_gate_inplace(out, state.n_qubits, gate, theta)
    return Statevector(state.n_qubits, out)


def expectation_diagonal(state: Statevector, qubit: int, outcome: int) -> float:
    """Probability that measuring `qubit` yields `outcome` (0 or 1)."""
    if not 0 <= qubit < state.n_qubits:
        raise InvalidGateError(f"qubit {qubit} out of range")
    if outcome not in (0, 1):
        raise InvalidGateError(f"outcome must be 0 or 1, got {outcome}")
    v = _split1(state.amps, state.n_qubits, qubit)
    return float(np.sum(np.abs(v[..., outcome, :]) ** 2))


def _probs_batch(arr: np.ndarray, n: int, qubit: int) -> np.ndarray:
    """(p0, p1) for each state in a (..., 2**n) batch; shape (..., 2)."""
    v = _split1(arr, n, qubit)
    mag = np.abs(v) ** 2
    p = mag.sum(axis=(-3, -1))
    return p


def fidelity(a: Statevector, b: Statevector) -> float:
    """|<a|b>|^2 between two unit statevectors."""
    if a.n_qubits != b.n_qubits:
        raise DimensionMismatchError(
            f"qubit counts differ: {a.n_qubits} vs {b.n_qubits}"
        )
    return float(np.abs(np.vdot(a.amps, b.amps)) ** 2)


def _fidelity_batch(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.abs(np.einsum("...i,...i->...", a.conj(), b)) ** 2
