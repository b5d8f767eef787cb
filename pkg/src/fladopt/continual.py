"""Class-incremental learning harness: task streams, replay, metrics.

A stream splits a labelled dataset into class-disjoint phases. Training
walks the phases in order, feeding each phase's data plus the replay
buffer to the classifier's `partial_fit`; evaluation is always over all
classes seen so far (no task identity at inference). The accuracy matrix
feeds the two summary metrics: final average accuracy and average anytime
accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datasets import SplitData
from .estimator import FladClassifier
from .seeding import child_rng

__all__ = [
    "TaskStream",
    "ReplayBuffer",
    "MetricsLedger",
    "build_stream",
    "phase_pool",
    "run_phase",
    "run_stream",
    "evaluate",
    "acc_final",
    "aaa",
]


@dataclass
class TaskStream:
    """Ordered class-disjoint phases over one train/test split."""

    data: SplitData
    phases: tuple[tuple[int, ...], ...]

    @property
    def n_phases(self) -> int:
        return len(self.phases)

    def phase_classes(self, phase: int) -> tuple[int, ...]:
        return self.phases[phase]

    def seen_classes(self, phase: int) -> tuple[int, ...]:
        out: list[int] = []
        for p in range(phase + 1):
            out.extend(self.phases[p])
        return tuple(out)

    def phase_train(self, phase: int) -> tuple[np.ndarray, np.ndarray]:
        mask = np.isin(self.data.train.labels, self.phases[phase])
        return self.data.train.inputs[mask], self.data.train.labels[mask]

    def task_test(self, phase: int) -> tuple[np.ndarray, np.ndarray]:
        mask = np.isin(self.data.test.labels, self.phases[phase])
        if not mask.any():
            raise ValueError(f"no test examples for phase {phase}")
        return self.data.test.inputs[mask], self.data.test.labels[mask]


def build_stream(
    data: SplitData, n_phases: int, classes_per_phase: int, seed: int | None = None
) -> TaskStream:
    """Assign classes to phases: ascending label order, or permuted by seed."""
    total = n_phases * classes_per_phase
    if total > data.n_classes:
        raise ValueError(
            f"{n_phases} phases x {classes_per_phase} classes need {total} classes, "
            f"dataset has {data.n_classes}"
        )
    order = np.arange(data.n_classes)
    if seed is not None:
        order = child_rng(seed, "phase-order").permutation(order)
    order = order[:total]
    phases = tuple(
        tuple(int(c) for c in order[p * classes_per_phase : (p + 1) * classes_per_phase])
        for p in range(n_phases)
    )
    return TaskStream(data, phases)


class ReplayBuffer:
    """Class-balanced reservoir of past exemplars with a hard capacity.

    After each phase the per-class quota is capacity // classes_seen
    (earliest classes absorb the remainder), old classes are downsampled
    to quota, and the new classes' data is sampled in. Per-class counts
    therefore never differ by more than one.
    """

    def __init__(self, capacity: int, seed: int = 0):
        if capacity < 0:
            raise ValueError("capacity must be non-negative")
        self.capacity = capacity
        self._rng = child_rng(seed, "replay")
        self._store: dict[int, tuple[np.ndarray, int]] = {}  # class -> (rows, phase of origin)

    def __len__(self) -> int:
        return sum(rows.shape[0] for rows, _ in self._store.values())

    @property
    def classes(self) -> list[int]:
        return sorted(self._store)

    def update(self, inputs: np.ndarray, labels: np.ndarray, phase: int) -> None:
        """Fold one finished phase's data in and rebalance every class."""
        if self.capacity == 0:
            return
        for cls in np.unique(labels):
            rows = inputs[labels == cls]
            self._store[int(cls)] = (rows.copy(), phase)
        n_classes = len(self._store)
        quota, remainder = divmod(self.capacity, n_classes)
        for slot, cls in enumerate(sorted(self._store)):
            keep = quota + (1 if slot < remainder else 0)
            rows, origin = self._store[cls]
            if rows.shape[0] > keep:
                pick = self._rng.choice(rows.shape[0], size=keep, replace=False)
                pick.sort()
                self._store[cls] = (rows[pick], origin)

    def contents(self) -> tuple[np.ndarray, np.ndarray]:
        if not self._store:
            return np.empty((0, 0)), np.empty(0, dtype=np.int64)
        xs, ys = [], []
        for cls in sorted(self._store):
            rows, _ = self._store[cls]
            xs.append(rows)
            ys.append(np.full(rows.shape[0], cls, dtype=np.int64))
        return np.concatenate(xs), np.concatenate(ys)

    def per_class_counts(self) -> dict[int, int]:
        return {cls: rows.shape[0] for cls, (rows, _) in sorted(self._store.items())}


@dataclass
class MetricsLedger:
    """Lower-triangular accuracy matrix: rows[p][t] = accuracy on task t
    after finishing phase p."""

    rows: list[list[float]] = field(default_factory=list)

    def add_row(self, row: list[float]) -> None:
        if len(row) != len(self.rows) + 1:
            raise ValueError(
                f"row after phase {len(self.rows)} must have {len(self.rows) + 1} entries"
            )
        if any(not 0 <= v <= 1 for v in row):
            raise ValueError("accuracies must lie in [0, 1]")
        self.rows.append([float(v) for v in row])

    @property
    def n_phases(self) -> int:
        return len(self.rows)


def acc_final(ledger: MetricsLedger) -> float:
    """Mean accuracy over all tasks after the last phase."""
    if not ledger.rows:
        raise ValueError("ledger is empty")
    return float(np.mean(ledger.rows[-1]))


def aaa(ledger: MetricsLedger) -> float:
    """Average anytime accuracy: mean over phases of that phase's row mean."""
    if not ledger.rows:
        raise ValueError("ledger is empty")
    return float(np.mean([np.mean(row) for row in ledger.rows]))


def evaluate(clf: FladClassifier, stream: TaskStream, up_to_phase: int) -> list[float]:
    """Per-task test accuracy through `up_to_phase`, classifying over all
    seen classes."""
    row = []
    for task in range(up_to_phase + 1):
        inputs, labels = stream.task_test(task)
        row.append(float(np.mean(clf.predict(inputs) == labels)))
    return row


def phase_pool(
    stream: TaskStream, phase: int, replay: ReplayBuffer
) -> tuple[np.ndarray, np.ndarray]:
    """This phase's training data joined with the replay buffer contents."""
    phase_x, phase_y = stream.phase_train(phase)
    buf_x, buf_y = replay.contents()
    if buf_x.size:
        return np.concatenate([phase_x, buf_x]), np.concatenate([phase_y, buf_y])
    return phase_x, phase_y


def run_phase(
    stream: TaskStream,
    phase: int,
    clf: FladClassifier,
    replay: ReplayBuffer,
) -> FladClassifier:
    """Train one phase on its data plus the replay buffer, then update the
    buffer with the phase's raw data."""
    pool_x, pool_y = phase_pool(stream, phase, replay)
    try:
        clf.partial_fit(pool_x, pool_y, classes=stream.phase_classes(phase))
    except ArithmeticError as abort:
        if hasattr(abort, "context"):
            abort.context["phase"] = phase
        raise
    phase_x, phase_y = stream.phase_train(phase)
    replay.update(phase_x, phase_y, phase)
    return clf


def run_stream(
    stream: TaskStream,
    clf: FladClassifier,
    replay_capacity: int = 200,
    replay_seed: int = 0,
    phase_callback=None,
) -> MetricsLedger:
    """Walk every phase, evaluating after each; returns the filled ledger.

    `phase_callback(phase, clf)` runs after each phase's evaluation, for
    diagnostics hooks.
    """
    replay = ReplayBuffer(replay_capacity, seed=replay_seed)
    ledger = MetricsLedger()
    for phase in range(stream.n_phases):
        run_phase(stream, phase, clf, replay)
        ledger.add_row(evaluate(clf, stream, phase))
        if phase_callback is not None:
            phase_callback(phase, clf)
    return ledger
