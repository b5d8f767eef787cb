"""Experiment orchestration: configs in, records and artifacts out.

One seeded run builds the dataset, the class-incremental stream, and the
classifier from a RunConfig, walks the phases (optionally collecting
curvature diagnostics), and packs everything into a RunRecord. Sweeps fan
out override grids across seeds, optionally in parallel processes.
"""

from __future__ import annotations

import itertools
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig, apply_overrides, parse_config
from .continual import (
    MetricsLedger,
    ReplayBuffer,
    TaskStream,
    aaa,
    acc_final,
    build_stream,
    evaluate,
    phase_pool,
)
from .datasets import SplitData, generate_dataset, load_csv_pair
from .diagnostics import landscape_slice, random_direction, spectrum_report, top_eigenpairs, tr_h_sigma
from .estimator import FladClassifier
from .mlp import MlpOracle
from .oracles import Batch
from .persist import RunRecord, persist_run, spectrum_to_dict, write_aggregate_csv, write_landscape
from .seeding import child_rng

__all__ = [
    "build_data",
    "build_classifier",
    "run_experiment",
    "aggregate_metrics",
    "expand_grid",
    "run_sweep_cell",
    "build_landscapes",
]

# diagnostics budgets: phase-end report vs per-epoch time series
_REPORT_BATCHES = 32
_SERIES_BATCHES = 16
_SERIES_K = 3
_SERIES_ITERS = 40


def build_data(cfg: RunConfig) -> SplitData:
    ds = cfg.dataset
    if ds.generator == "csv":
        return load_csv_pair(ds.train_csv, ds.test_csv)
    params = {
        "classes": ds.classes,
        "dim": ds.dim,
        "separation": ds.separation,
        "samples_per_class": ds.samples_per_class,
        "noise": ds.noise,
    }
    return generate_dataset(ds.generator, params, seed=ds.seed)


def build_classifier(cfg: RunConfig, seed: int) -> FladClassifier:
    opt = cfg.optimizer
    sched = cfg.schedule
    return FladClassifier(
        hidden_widths=tuple(cfg.model.hidden),
        activation=cfg.model.activation,
        optimizer=opt.kind,
        variant=opt.variant,
        eta=opt.eta,
        rho=opt.rho,
        gamma=opt.gamma,
        sigma=opt.sigma,
        lambda0=opt.lambda0,
        lambda1=opt.lambda1,
        c=opt.c,
        momentum=opt.momentum,
        weight_decay=opt.weight_decay,
        epochs=cfg.run.epochs,
        batch_size=cfg.run.batchsize,
        lr_decay_points=tuple(cfg.schedule.lr_decay_points),
        theorem_mode=sched.theorem_mode,
        flad_window=tuple(sched.flad_window),
        anchor=cfg.stream.anchor,
        random_state=seed,
    )


def _probe_batches(
    inputs: np.ndarray, labels: np.ndarray, n_batches: int, rng: np.random.Generator
) -> list[Batch]:
    n = inputs.shape[0]
    n_batches = max(2, min(n_batches, n // 2))
    chunks = np.array_split(rng.permutation(n), n_batches)
    return [Batch(inputs[c], labels[c]) for c in chunks if c.size]


def _encode_labels(clf: FladClassifier, labels: np.ndarray) -> np.ndarray:
    index_of = {cls: i for i, cls in enumerate(clf.classes_)}
    return np.fromiter((index_of[c] for c in labels), dtype=np.int64, count=len(labels))


@dataclass
class StreamOutcome:
    clf: FladClassifier
    stream: TaskStream
    ledger: MetricsLedger
    wall_clock: list
    spectra: list
    series: list


def _walk_stream(cfg: RunConfig, seed: int, *, single_task: bool, diagnose: bool) -> StreamOutcome:
    data = build_data(cfg)
    if single_task:
        n_phases, cpp = 1, data.n_classes
    else:
        n_phases, cpp = cfg.stream.phases, cfg.stream.classes_per_phase
    order_seed = None if cfg.stream.order_seed < 0 else cfg.stream.order_seed
    stream = build_stream(data, n_phases, cpp, order_seed)
    clf = build_classifier(cfg, seed)
    replay = ReplayBuffer(cfg.stream.replay_capacity, seed=seed)
    ledger = MetricsLedger()
    wall_clock, spectra, series = [], [], []

    for phase in range(stream.n_phases):
        pool_x, pool_y = phase_pool(stream, phase, replay)
        if diagnose:
            probe_rng = child_rng(seed, "diagnose", phase)
            probe_state = {}

            def record_trhsigma(epoch, w, phase=phase, pool_x=pool_x, pool_y=pool_y,
                                probe_rng=probe_rng, probe_state=probe_state):
                if "batches" not in probe_state:
                    encoded = _encode_labels(clf, pool_y)
                    probe_state["batches"] = _probe_batches(
                        pool_x, encoded, _SERIES_BATCHES, probe_rng
                    )
                    probe_state["oracle"] = MlpOracle(clf.model_spec_)
                value = tr_h_sigma(
                    probe_state["oracle"], w, probe_state["batches"],
                    k=_SERIES_K, seed=int(probe_rng.integers(2**31)),
                )
                series.append({"phase": phase, "epoch": epoch, "value": float(value)})

            clf._epoch_callback = record_trhsigma
        started = time.perf_counter()
        try:
            clf.partial_fit(pool_x, pool_y, classes=stream.phase_classes(phase))
        except ArithmeticError as abort:
            if hasattr(abort, "context"):
                abort.context["phase"] = phase
            raise
        finally:
            if diagnose:
                clf._epoch_callback = None
        wall_clock.append(time.perf_counter() - started)
        phase_x, phase_y = stream.phase_train(phase)
        replay.update(phase_x, phase_y, phase)
        ledger.add_row(evaluate(clf, stream, phase))
        if diagnose:
            oracle = MlpOracle(clf.model_spec_)
            batches = _probe_batches(
                pool_x, _encode_labels(clf, pool_y), _REPORT_BATCHES,
                child_rng(seed, "diagnose-report", phase),
            )
            report = spectrum_report(oracle, clf.params_.values, batches, seed=seed)
            spectra.append(spectrum_to_dict(report))
    return StreamOutcome(clf, stream, ledger, wall_clock, spectra, series)


def run_experiment(
    cfg: RunConfig, seed: int, *, single_task: bool = False, diagnose: bool = False
) -> tuple[RunRecord, StreamOutcome]:
    """One seeded run; returns the serializable record plus live objects."""
    outcome = _walk_stream(cfg, seed, single_task=single_task, diagnose=diagnose)
    clf = outcome.clf
    record = RunRecord(
        config=cfg.to_dict(),
        seed=seed,
        acc_matrix=[list(row) for row in outcome.ledger.rows],
        final_accuracy=acc_final(outcome.ledger),
        anytime_accuracy=aaa(outcome.ledger),
        train_loss=[h["train_loss"] for h in clf.history_],
        train_accuracy=[h["train_accuracy"] for h in clf.history_],
        sharp_steps=clf.sharp_steps_,
        total_steps=clf.total_steps_,
        wall_clock_per_phase=outcome.wall_clock,
        spectra=outcome.spectra,
        tr_h_sigma_series=outcome.series,
    )
    return record, outcome


def aggregate_metrics(records: list[RunRecord]) -> dict:
    accs = [r.final_accuracy for r in records]
    aaas = [r.anytime_accuracy for r in records]
    return {
        "seeds": [r.seed for r in records],
        "acc_mean": statistics.fmean(accs),
        "acc_std": statistics.pstdev(accs) if len(accs) > 1 else 0.0,
        "aaa_mean": statistics.fmean(aaas),
        "aaa_std": statistics.pstdev(aaas) if len(aaas) > 1 else 0.0,
    }


def persist_records(records: list[RunRecord], out_dir) -> None:
    out_dir = Path(out_dir)
    for record in records:
        persist_run(record, out_dir / f"seed_{record.seed}")
    write_aggregate_csv(records, out_dir / "aggregate.csv")


# -- sweeps -------------------------------------------------------------------


def expand_grid(grid_specs: list[str]) -> list[list[str]]:
    """Turn repeated `--grid key=v1,v2` specs into override combinations."""
    axes = []
    for spec in grid_specs:
        key, eq, values_text = spec.partition("=")
        if not eq or not values_text:
            raise ValueError(f"grid spec {spec!r} must look like section.key=v1,v2,...")
        values = [v.strip() for v in values_text.split(",") if v.strip()]
        axes.append([(key.strip(), v) for v in values])
    combos = []
    for combo in itertools.product(*axes):
        combos.append([f"{k}={v}" for k, v in combo])
    return combos


def run_sweep_cell(args: tuple) -> dict:
    """Worker for one (cell, seed) pair; top-level so it pickles."""
    raw, overrides, seed = args
    cfg = parse_config(apply_overrides(raw, overrides))
    record, _ = run_experiment(cfg, seed)
    return {
        "overrides": tuple(overrides),
        "seed": seed,
        "acc": record.final_accuracy,
        "aaa": record.anytime_accuracy,
    }


def run_sweep(raw_config: dict, grid_specs: list[str], seeds: list[int], jobs: int = 1) -> list[dict]:
    """Cross product of grid overrides x seeds; returns per-cell summaries."""
    combos = expand_grid(grid_specs)
    tasks = [(raw_config, combo, seed) for combo in combos for seed in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_sweep_cell, tasks))
    else:
        results = [run_sweep_cell(task) for task in tasks]
    rows = []
    for combo in combos:
        cell = [r for r in results if r["overrides"] == tuple(combo)]
        accs = [r["acc"] for r in cell]
        aaas = [r["aaa"] for r in cell]
        row = {"cell": ";".join(combo) if combo else "base"}
        row["acc_mean"] = statistics.fmean(accs)
        row["acc_std"] = statistics.pstdev(accs) if len(accs) > 1 else 0.0
        row["aaa_mean"] = statistics.fmean(aaas)
        row["aaa_std"] = statistics.pstdev(aaas) if len(aaas) > 1 else 0.0
        rows.append(row)
    return rows


# -- landscapes ----------------------------------------------------------------


def build_landscapes(
    cfg: RunConfig,
    seed: int,
    out_dir,
    mode: str = "eigen",
    points: int = 41,
    span: float = 1.0,
) -> list:
    """Train per config, then slice the loss around the final parameters.

    `eigen` mode slices along the top-2 Hessian eigenvectors; `random`
    uses filter-normalized random directions. Writes 1-D and 2-D CSV+SVG
    under out_dir and returns the slices.
    """
    if mode not in ("eigen", "random"):
        raise ValueError("landscape mode must be 'eigen' or 'random'")
    if points < 3 or points % 2 == 0:
        raise ValueError("points must be an odd number >= 3 so the grid contains 0")
    outcome = _walk_stream(cfg, seed, single_task=False, diagnose=False)
    clf = outcome.clf
    oracle = MlpOracle(clf.model_spec_)
    train = outcome.stream.data.train
    pool = Batch(train.inputs, _encode_labels(clf, train.labels))
    w = clf.params_.values
    if mode == "eigen":
        report = top_eigenpairs(oracle, w, pool, k=2, iters=100, seed=seed)
        d1, d2 = report.eigenvectors[0], report.eigenvectors[1]
    else:
        rng = child_rng(seed, "landscape")
        d1 = random_direction(clf.params_, rng)
        d2 = random_direction(clf.params_, rng)
    grid = np.linspace(-1.0, 1.0, points)
    slice_1d = landscape_slice(oracle, w, np.stack([d1]), grid=grid, scale=span, batch=pool)
    slice_2d = landscape_slice(oracle, w, np.stack([d1, d2]), grid=grid, scale=span, batch=pool)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_landscape(slice_1d, out_dir / f"landscape_{mode}_1d.csv", out_dir / f"landscape_{mode}_1d.svg")
    write_landscape(slice_2d, out_dir / f"landscape_{mode}_2d.csv", out_dir / f"landscape_{mode}_2d.svg")
    return [slice_1d, slice_2d]
