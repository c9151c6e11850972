"""Universal adversarial perturbations via the quantum-adapted basic
iterative method, plus a per-sample FGSM baseline.

The universal direction is the sign of the dataset-mean pixel gradient,
computed once from the unperturbed samples (a flag switches to recomputing it
every iteration). Each iteration adds epsilon_step * sign(J) to every
sample's working pixels, clips classical pixels to [0, 1), renormalizes onto
the unit-state manifold, and records overall and per-task metrics; row 0 is
the unperturbed baseline. Quantum samples (no raw pixel rows) are perturbed
on their real amplitudes and are not clipped: clipping signed amplitudes
would itself be a large perturbation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .circuit import CircuitModel
from .datasets import Dataset, write_pgm
from .gradients import loss_and_gradients_batch, mean_input_gradient, pixel_gradient
from .statevector import DegenerateInputError, Statevector, _fidelity_batch, normalize
from .training import evaluate

# [0, 1) clip: largest double below 1.0 keeps the interval half-open
_CLIP_HI = np.nextafter(1.0, 0.0)


class AttackConfigError(ValueError):
    """Inconsistent attack configuration."""


@dataclass
class AttackConfig:
    epsilon_step: float
    n_iterations: int
    epsilon_total: float | None = None
    recompute_gradient_each_iter: bool = False

    def __post_init__(self):
        if self.epsilon_step < 0:
            raise AttackConfigError("epsilon_step must be nonnegative")
        if self.n_iterations < 1:
            raise AttackConfigError("n_iterations must be >= 1")
        if self.epsilon_total is not None:
            if abs(self.epsilon_step * self.n_iterations - self.epsilon_total) > 1e-12:
                raise AttackConfigError(
                    "epsilon_step * n_iterations does not match epsilon_total"
                )

    @classmethod
    def from_total(cls, epsilon_total: float, n_iterations: int, **kw) -> "AttackConfig":
        return cls(
            epsilon_step=epsilon_total / n_iterations,
            n_iterations=n_iterations,
            epsilon_total=epsilon_total,
            **kw,
        )


@dataclass
class AttackReport:
    """Per-iteration traces (index 0 = unperturbed baseline) and the final
    adversarial datasets, one per task."""

    accuracy: np.ndarray
    mean_loss: np.ndarray
    mean_fidelity: np.ndarray
    task_accuracy: tuple[np.ndarray, np.ndarray]
    task_loss: tuple[np.ndarray, np.ndarray]
    task_fidelity: tuple[np.ndarray, np.ndarray]
    adversarial: tuple[Dataset, Dataset]
    originals: tuple[Dataset, Dataset]
    metadata: dict = field(default_factory=dict)


class _Working:
    """Mutable perturbation state for one task's dataset."""

    def __init__(self, dataset: Dataset):
        self.dataset = dataset
        self.classical = dataset.raw is not None
        # classical: raw pixels; quantum: complex amplitudes (real for SPT data)
        self.pixels = dataset.raw.copy() if self.classical else dataset.states.copy()
        self.states = dataset.states.copy()

    def perturb(self, delta: np.ndarray) -> None:
        self.pixels = self.pixels + delta
        if self.classical:
            np.clip(self.pixels, 0.0, _CLIP_HI, out=self.pixels)
        norms = np.linalg.norm(self.pixels, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            raise DegenerateInputError("perturbed sample collapsed to zero")
        self.states = self.pixels.astype(np.complex128) / norms

    def snapshot(self) -> Dataset:
        return Dataset(
            raw=self.pixels.copy() if self.classical else None,
            states=self.states.copy(),
            labels=self.dataset.labels.copy(),
            task_tag=self.dataset.task_tag + "_adv",
        )


def _metrics(model, theta, work: _Working) -> tuple[float, float, float]:
    current = Dataset(
        raw=None, states=work.states, labels=work.dataset.labels, task_tag="_"
    )
    acc, loss, _ = evaluate(model, theta, current)
    fid = float(np.mean(_fidelity_batch(work.dataset.states, work.states)))
    return acc, loss, fid


def universal_qbim(
    model: CircuitModel,
    theta: np.ndarray,
    dataset_a: Dataset,
    dataset_b: Dataset,
    config: AttackConfig,
) -> AttackReport:
    """Iterated universal sign-gradient attack on the merged two-task model."""
    if len(dataset_a) == 0 or len(dataset_b) == 0:
        raise ValueError("empty dataset")
    works = (_Working(dataset_a), _Working(dataset_b))
    n_a, n_b = len(dataset_a), len(dataset_b)

    def mean_gradient() -> np.ndarray:
        # fixed order: task A samples then task B samples, index ascending
        parts = []
        for w in works:
            current = Dataset(
                raw=np.real(w.pixels) if not w.classical else w.pixels,
                states=w.states,
                labels=w.dataset.labels,
                task_tag="_",
            )
            parts.append(mean_input_gradient(model, theta, current) * len(current))
        return (parts[0] + parts[1]) / (n_a + n_b)

    grad = mean_gradient()
    rows = {k: [] for k in ("acc", "loss", "fid", "acc_a", "loss_a", "fid_a",
                            "acc_b", "loss_b", "fid_b")}

    def record() -> None:
        (acc_a, loss_a, fid_a) = _metrics(model, theta, works[0])
        (acc_b, loss_b, fid_b) = _metrics(model, theta, works[1])
        rows["acc"].append((acc_a * n_a + acc_b * n_b) / (n_a + n_b))
        rows["loss"].append((loss_a * n_a + loss_b * n_b) / (n_a + n_b))
        rows["fid"].append((fid_a * n_a + fid_b * n_b) / (n_a + n_b))
        for key, val in (("acc_a", acc_a), ("loss_a", loss_a), ("fid_a", fid_a),
                         ("acc_b", acc_b), ("loss_b", loss_b), ("fid_b", fid_b)):
            rows[key].append(val)

    record()  # baseline row
    for _ in range(config.n_iterations):
        if config.recompute_gradient_each_iter:
            grad = mean_gradient()
        delta = config.epsilon_step * np.sign(grad)
        for w in works:
            w.perturb(delta)
        record()

    return AttackReport(
        accuracy=np.array(rows["acc"]),
        mean_loss=np.array(rows["loss"]),
        mean_fidelity=np.array(rows["fid"]),
        task_accuracy=(np.array(rows["acc_a"]), np.array(rows["acc_b"])),
        task_loss=(np.array(rows["loss_a"]), np.array(rows["loss_b"])),
        task_fidelity=(np.array(rows["fid_a"]), np.array(rows["fid_b"])),
        adversarial=(works[0].snapshot(), works[1].snapshot()),
        originals=(dataset_a, dataset_b),
        metadata={
            "epsilon_step": config.epsilon_step,
            "n_iterations": config.n_iterations,
            "recompute_gradient_each_iter": config.recompute_gradient_each_iter,
        },
    )


def fgsm_per_sample(
    model: CircuitModel,
    theta: np.ndarray,
    sample: Statevector,
    label,
    epsilon: float,
    raw: np.ndarray | None = None,
) -> tuple[np.ndarray, Statevector]:
    """One-step sign-gradient perturbation of a single sample.

    Returns the adversarial working pixels and the renormalized statevector.
    Classical samples (raw given) are clipped to [0, 1); quantum samples are
    perturbed on their real amplitudes without clipping.
    """
    labels = np.asarray(label, dtype=np.float64)[None, :]
    classical = raw is not None
    pixels = (
        np.asarray(raw, dtype=np.float64) if classical else np.real(sample.amps)
    )
    _, _, d_raw = loss_and_gradients_batch(
        model, theta, sample.amps[None, :], labels,
        raw=pixels[None, :] if classical else None,
    )
    adv = pixels + epsilon * np.sign(d_raw[0])
    if classical:
        adv = np.clip(adv, 0.0, _CLIP_HI)
    return adv, normalize(adv)


def export_adversarial_pairs(
    report: AttackReport,
    indices: list[tuple[int, int]],
    out_dir: str | Path,
    side: int = 64,
) -> list[Path]:
    """Write original/adversarial grids as 8-bit grayscale PGM files.

    indices are (task, sample) pairs; pixel value = v / max(v) * 255, rounded.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for task, i in indices:
        for tag, ds in (("orig", report.originals[task]), ("adv", report.adversarial[task])):
            vec = ds.raw[i] if ds.raw is not None else np.abs(ds.states[i])
            peak = vec.max()
            if peak == 0.0:
                raise DegenerateInputError(f"all-zero image at task {task} index {i}")
            img = np.rint(vec / peak * 255.0).astype(np.uint8).reshape(side, side)
            path = out_dir / f"task{task}_sample{i}_{tag}.pgm"
            write_pgm(path, img)
            written.append(path)
    return written
