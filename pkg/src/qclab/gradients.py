"""Exact reverse-mode (adjoint) differentiation of the classifier loss.

One forward sweep plus one backward sweep over the gate program yields the
gradient with respect to every circuit parameter and every input amplitude.
The backward sweep exploits unitarity: gates are undone by applying their
inverse, so no intermediate states are stored.

Loss: cross-entropy -sum_k y_k log p_k with a 1e-12 probability floor inside
the log. Pixel-space gradients chain through the normalization map
x -> x/||x|| analytically.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuit import CircuitModel, _check_theta, run_circuit_batch
from .statevector import (
    DimensionMismatchError,
    GateKind,
    Statevector,
    _apply_gate_inplace,
    _apply_pauli_generator,
    _kernels,
    _probs_batch,
    _split1,
)

PROB_FLOOR = 1e-12


class NumericalError(RuntimeError):
    """Non-finite value encountered during gradient evaluation."""


@dataclass
class GradientBundle:
    """Gradients of the scalar loss for one sample.

    d_theta: dL/dtheta, length n_params.
    d_input: Wirtinger derivative dL/d(amp*), length 2**n.
    d_raw:   dL/d(raw pixel) through the normalization map, length 2**n.
    """

    d_theta: np.ndarray
    d_input: np.ndarray
    d_raw: np.ndarray


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """-sum_k y_k log max(p_k, floor); batched over leading axes."""
    return -np.sum(labels * np.log(np.maximum(probs, PROB_FLOOR)), axis=-1)


def _backward(
    model: CircuitModel,
    theta: np.ndarray,
    psi: np.ndarray,
    w01: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Adjoint sweep from the final states `psi` (shape (B, 2**n)).

    w01[b, k] is the derivative of the scalar objective with respect to the
    decode-qubit probability p_k of sample b. Returns per-sample parameter
    gradients (B, n_params) and the back-transported adjoint state
    lam = U^dagger (w * psi), whose entries are dL/d(amp*) of the input.
    Both `psi` buffers are consumed.
    """
    n = model.n_qubits
    q = model.decode.measure_qubit
    lam = psi.copy()
    v = _split1(lam, n, q)
    v[..., 0, :] *= w01[:, 0, None, None]
    v[..., 1, :] *= w01[:, 1, None, None]
    dtheta = np.zeros((psi.shape[0], model.n_params))
    fused = _kernels is not None and psi.flags.c_contiguous and lam.flags.c_contiguous
    buf = np.empty(psi.shape[0]) if fused else None
    for g in reversed(model.gates):
        if g.param_index is not None:
            if fused:
                if g.kind is GateKind.RX:
                    _kernels.rx_grad(lam, psi, g.targets[0], buf)
                elif g.kind is GateKind.RZ:
                    _kernels.rz_grad(lam, psi, g.targets[0], buf)
                else:
                    _kernels.crx_grad(lam, psi, g.targets[0], g.targets[1], buf)
                dtheta[:, g.param_index] += buf
            else:
                d = _apply_pauli_generator(psi, n, g)
                dtheta[:, g.param_index] += 2.0 * np.real(
                    np.einsum("bi,bi->b", lam.conj(), d)
                )
            t = theta[g.param_index]
        else:
            t = 0.0
        _apply_gate_inplace(psi, n, g, -t)
        _apply_gate_inplace(lam, n, g, -t)
    return dtheta, lam


def _loss_weights(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    # derivative of -y log(max(p, floor)): zero below the floor
    w = np.where(probs > PROB_FLOOR, -labels / np.maximum(probs, PROB_FLOOR), 0.0)
    return w


def pixel_gradient(g_state: np.ndarray, raw: np.ndarray) -> np.ndarray:
    """Chain a real-direction state gradient through x -> x/||x||.

    g_state[b] = dL/d(Re amp) of the encoded state, raw[b] the raw vector
    (real pixels, or real amplitudes for quantum samples).
    """
    r = np.linalg.norm(raw, axis=-1, keepdims=True)
    phi = raw / r
    proj = np.sum(g_state * phi, axis=-1, keepdims=True)
    return (g_state - proj * phi) / r


def loss_and_gradients_batch(
    model: CircuitModel,
    theta: np.ndarray,
    states: np.ndarray,
    labels: np.ndarray,
    raw: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-sample (loss, d_theta, d_raw) over a batch of encoded states.

    `raw` defaults to the real part of the amplitudes (quantum samples).
    """
    theta = _check_theta(model, theta)
    states = np.asarray(states, dtype=np.complex128)
    labels = np.asarray(labels, dtype=np.float64)
    psi = run_circuit_batch(model, theta, states)
    probs = _probs_batch(psi, model.n_qubits, model.decode.measure_qubit)
    losses = cross_entropy(probs, labels)
    dtheta, lam = _backward(model, theta, psi, _loss_weights(probs, labels))
    g_state = 2.0 * np.real(lam)
    if raw is None:
        raw = np.real(states)
    d_raw = pixel_gradient(g_state, np.asarray(raw, dtype=np.float64))
    if not (
        np.all(np.isfinite(losses))
        and np.all(np.isfinite(dtheta))
        and np.all(np.isfinite(d_raw))
    ):
        raise NumericalError("non-finite loss or gradient")
    return losses, dtheta, d_raw


def loss_and_gradients(
    model: CircuitModel,
    theta: np.ndarray,
    input: Statevector,
    label: tuple[float, float] | np.ndarray,
    raw: np.ndarray | None = None,
) -> tuple[float, GradientBundle]:
    """Loss and exact gradients for a single sample."""
    if input.n_qubits != model.n_qubits:
        raise DimensionMismatchError(
            f"input has {input.n_qubits} qubits, model expects {model.n_qubits}"
        )
    label = np.asarray(label, dtype=np.float64)
    if label.shape != (2,) or not (
        tuple(label) == (1.0, 0.0) or tuple(label) == (0.0, 1.0)
    ):
        raise ValueError(f"label must be one-hot (1,0) or (0,1), got {label}")
    theta = _check_theta(model, theta)
    psi = run_circuit_batch(model, theta, input.amps[None, :])
    probs = _probs_batch(psi, model.n_qubits, model.decode.measure_qubit)
    loss = float(cross_entropy(probs, label[None, :])[0])
    dtheta, lam = _backward(model, theta, psi, _loss_weights(probs, label[None, :]))
    g_state = 2.0 * np.real(lam[0])
    raw_vec = np.real(input.amps) if raw is None else np.asarray(raw, dtype=np.float64)
    d_raw = pixel_gradient(g_state[None, :], raw_vec[None, :])[0]
    bundle = GradientBundle(d_theta=dtheta[0], d_input=lam[0], d_raw=d_raw)
    if not (
        np.isfinite(loss)
        and np.all(np.isfinite(bundle.d_theta))
        and np.all(np.isfinite(bundle.d_input))
    ):
        raise NumericalError("non-finite loss or gradient")
    return loss, bundle


def outcome_probability_gradients_batch(
    model: CircuitModel,
    theta: np.ndarray,
    states: np.ndarray,
    labels: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample (p_true, d p_true/dtheta); the Fisher computation's core."""
    theta = _check_theta(model, theta)
    psi = run_circuit_batch(model, theta, np.asarray(states, dtype=np.complex128))
    probs = _probs_batch(psi, model.n_qubits, model.decode.measure_qubit)
    labels = np.asarray(labels, dtype=np.float64)
    expect = np.sum(probs * labels, axis=-1)
    dtheta, _ = _backward(model, theta, psi, labels)
    return expect, dtheta


def mean_input_gradient(
    model: CircuitModel,
    theta: np.ndarray,
    dataset,
    chunk: int = 200,
) -> np.ndarray:
    """Mean raw-pixel gradient of the per-sample loss over a dataset.

    Samples are reduced in ascending index order for bit-reproducibility.
    """
    n = len(dataset)
    if n == 0:
        raise ValueError("empty dataset")
    total = np.zeros(1 << model.n_qubits)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        raw = dataset.raw[lo:hi] if dataset.raw is not None else None
        _, _, d_raw = loss_and_gradients_batch(
            model, theta, dataset.states[lo:hi], dataset.labels[lo:hi], raw=raw
        )
        total += d_raw.sum(axis=0)
    return total / n
