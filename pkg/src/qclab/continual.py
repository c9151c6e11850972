"""Fisher-information diagonal and EWC-penalized continual training.

The Fisher diagonal is the mean over task-A samples of the squared score
(grad p_true / p_true), evaluated at the trained parameters theta_A. During
task-B training the quadratic penalty (lambda/2) sum_i F_i (theta_i -
theta_A_i)^2 is injected through its exact gradient
lambda * F_i * (theta_i - theta_A_i).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuit import CircuitModel, _check_theta
from .datasets import Dataset
from .gradients import outcome_probability_gradients_batch
from .training import TrainConfig, TrainReport, train

EXPECT_FLOOR = 1e-12


@dataclass
class FisherDiagonal:
    """Per-parameter importance weights anchored at the task-A optimum.

    n_skipped counts samples dropped because their true-class probability
    fell below the division guard.
    """

    f: np.ndarray
    anchor_theta: np.ndarray
    n_skipped: int = 0

    def __post_init__(self):
        if self.f.shape != self.anchor_theta.shape:
            raise ValueError("fisher/anchor length mismatch")
        if np.any(self.f < 0):
            raise ValueError("fisher entries must be nonnegative")


@dataclass
class EwcConfig:
    lambda_ewc: float = 750.0

    def __post_init__(self):
        if self.lambda_ewc < 0:
            raise ValueError("lambda_ewc must be nonnegative")


def fisher_information(
    model: CircuitModel,
    theta_a: np.ndarray,
    dataset: Dataset,
    chunk: int = 200,
) -> FisherDiagonal:
    """Diagonal Fisher information of the decoded true-class probability.

    Per sample: expect = p_true, grad = d expect / d theta, score g =
    grad/expect; the diagonal of the accumulated g g^T outer products divided
    by the sample count is g*g elementwise, computed directly.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    theta_a = _check_theta(model, theta_a)
    total = np.zeros(model.n_params)
    skipped = 0
    for lo in range(0, len(dataset), chunk):
        hi = min(lo + chunk, len(dataset))
        expect, grads = outcome_probability_gradients_batch(
            model, theta_a, dataset.states[lo:hi], dataset.labels[lo:hi]
        )
        ok = expect > EXPECT_FLOOR
        skipped += int(np.count_nonzero(~ok))
        score = grads[ok] / expect[ok, None]
        total += np.sum(score**2, axis=0)
    return FisherDiagonal(f=total / len(dataset), anchor_theta=theta_a.copy(), n_skipped=skipped)


def ewc_penalty_gradient(
    theta: np.ndarray,
    fisher: FisherDiagonal,
    config: EwcConfig,
) -> np.ndarray:
    """Exact gradient of (lambda/2) sum_i F_i (theta_i - theta_A_i)^2."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != fisher.f.shape:
        raise ValueError("theta/fisher length mismatch")
    return config.lambda_ewc * fisher.f * (theta - fisher.anchor_theta)


def continual_train(
    model: CircuitModel,
    theta_a: np.ndarray,
    dataset_b: Dataset,
    fisher: FisherDiagonal,
    train_config: TrainConfig,
    ewc_config: EwcConfig,
    epoch_hook=None,
) -> TrainReport:
    """Task-B training from theta_A with the EWC penalty gradient injected."""
    theta_a = _check_theta(model, theta_a)
    if not np.array_equal(fisher.anchor_theta, theta_a):
        raise ValueError("fisher anchor does not match theta_A")
    report = train(
        model,
        theta_a,
        dataset_b,
        train_config,
        extra_gradient=lambda th: ewc_penalty_gradient(th, fisher, ewc_config),
        epoch_hook=epoch_hook,
    )
    report.metadata["ewc_lambda"] = ewc_config.lambda_ewc
    report.metadata["fisher_skipped"] = fisher.n_skipped
    return report
