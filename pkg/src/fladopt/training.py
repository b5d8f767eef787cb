"""Minibatch training loop shared by the classifier and the CL harness."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .oracles import Batch, LossOracle
from .optim import HyperParams, OptimizerState, Schedule, NumericalAbort, optimizer_step, schedule_at

__all__ = ["TrainResult", "run_training"]


@dataclass
class TrainResult:
    w: np.ndarray
    state: OptimizerState
    epoch_losses: list[float]
    epoch_accuracies: list[float]
    sharp_steps: int
    total_steps: int


def run_training(
    oracle: LossOracle,
    w: np.ndarray,
    inputs: np.ndarray,
    labels: np.ndarray,
    *,
    kind: str,
    hp: HyperParams,
    schedule: Schedule,
    epochs: int,
    batch_size: int,
    shuffle_rng: np.random.Generator,
    variant: str = "standard",
    state: OptimizerState | None = None,
    track_metrics: bool = True,
    epoch_callback=None,
) -> TrainResult:
    """Train for a fixed epoch budget over (inputs, labels).

    Each epoch reshuffles the data, resolves the schedule (learning rate,
    radius, and whether the sharpness machinery is active this epoch), and
    steps once per minibatch; the trailing partial batch is kept. Outside
    the sharpness window every kind falls back to plain SGD. Epoch loss and
    accuracy are measured on the full training pool after each epoch.
    """
    if epochs < 1:
        raise ValueError("epochs must be at least 1")
    n = inputs.shape[0]
    if n < 1:
        raise ValueError("training pool is empty")
    bs = max(1, min(batch_size, n))
    if state is None:
        state = OptimizerState.fresh(w.shape[0])

    losses: list[float] = []
    accuracies: list[float] = []
    sharp_steps = 0
    total_steps = 0
    for epoch in range(1, epochs + 1):
        eta_i, rho_i, active = schedule_at(schedule, epoch, epochs, hp.eta, hp.rho)
        hp_i = replace(hp, eta=eta_i, rho=rho_i)
        effective_kind = kind if (active or kind == "sgd") else "sgd"
        effective_variant = variant if effective_kind != "sgd" else "standard"
        perm = shuffle_rng.permutation(n)
        for start in range(0, n, bs):
            idx = perm[start : start + bs]
            batch = Batch(inputs[idx], labels[idx])
            try:
                w, state = optimizer_step(
                    effective_kind, oracle, w, batch, state, hp_i, effective_variant
                )
            except NumericalAbort as abort:
                abort.context.setdefault("epoch", epoch)
                raise
            total_steps += 1
            if effective_kind != "sgd":
                sharp_steps += 1
        state = replace(state, epoch_in_task=epoch)
        if track_metrics:
            pool = Batch(inputs, labels)
            losses.append(oracle.loss(w, pool))
            if hasattr(oracle, "predict_proba"):
                pred = np.argmax(oracle.predict_proba(w, inputs), axis=1)
                accuracies.append(float(np.mean(pred == labels)))
        if epoch_callback is not None:
            epoch_callback(epoch, w)
    return TrainResult(w, state, losses, accuracies, sharp_steps, total_steps)
