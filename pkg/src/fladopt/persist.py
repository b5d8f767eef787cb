"""Run records and on-disk artifacts: JSON manifest, CSV tables, SVG plots.

Serialization never recomputes anything: every persisted number comes
from a RunRecord field. Output is byte-deterministic for identical
records (shortest round-trip float formatting, sorted JSON keys, fixed
SVG hash salt, no timestamps).
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .diagnostics import LandscapeSlice, SpectrumReport  # noqa: E402

__all__ = [
    "RunRecord",
    "persist_run",
    "output_lock",
    "write_landscape",
    "write_sweep_csv",
    "write_aggregate_csv",
]

LIBRARY_VERSION = "0.1.0"

matplotlib.rcParams["svg.hashsalt"] = "fladopt"


@dataclass
class RunRecord:
    """Everything one seeded run produced, in plain-JSON types."""

    config: dict
    seed: int
    acc_matrix: list  # lower-triangular rows
    final_accuracy: float
    anytime_accuracy: float
    train_loss: list  # per phase, per epoch
    train_accuracy: list
    sharp_steps: int
    total_steps: int
    wall_clock_per_phase: list
    library_version: str = LIBRARY_VERSION
    spectra: list = field(default_factory=list)  # per-phase spectrum dicts
    tr_h_sigma_series: list = field(default_factory=list)  # {phase, epoch, value}

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunRecord":
        return cls(**raw)


def spectrum_to_dict(report: SpectrumReport) -> dict:
    return {
        "eigenvalues": [float(v) for v in report.eigenvalues],
        "residuals": [float(r) for r in report.residuals],
        "converged": list(report.converged) if report.converged is not None else [],
        "trace_estimate": report.trace_estimate,
        "trace_stderr": report.trace_stderr,
        "hutchinson_samples": report.hutchinson_samples,
        "tr_h_sigma": report.tr_h_sigma,
    }


class output_lock:
    """Exclusive ownership of an output directory via a lock file."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.path = self.directory / ".lock"

    def __enter__(self):
        self.directory.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise RuntimeError(
                f"output directory {self.directory} is locked by another run "
                f"(remove {self.path} if that run is dead)"
            ) from None
        os.close(fd)
        return self

    def __exit__(self, *exc_info):
        try:
            os.unlink(self.path)
        except FileNotFoundError:
            pass
        return False


def _json_default(value):
    raise TypeError(f"not JSON-serializable: {value!r}")


def persist_run(record: RunRecord, out_dir: str | Path) -> Path:
    """Write run.json plus metric/spectrum CSVs; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = out_dir / "run.json"
    manifest.write_text(
        json.dumps(record.to_dict(), sort_keys=True, indent=2, default=_json_default) + "\n"
    )

    lines = ["phase,task,accuracy"]
    for p, row in enumerate(record.acc_matrix):
        for t, value in enumerate(row):
            lines.append(f"{p},{t},{value!r}")
    lines.append(f"Acc,,{record.final_accuracy!r}")
    lines.append(f"AAA,,{record.anytime_accuracy!r}")
    (out_dir / "metrics.csv").write_text("\n".join(lines) + "\n")

    for p, spectrum in enumerate(record.spectra):
        rows = ["quantity,index,value"]
        for i, v in enumerate(spectrum["eigenvalues"]):
            rows.append(f"eigenvalue,{i},{v!r}")
        for i, r in enumerate(spectrum["residuals"]):
            rows.append(f"residual,{i},{r!r}")
        for key in ("trace_estimate", "trace_stderr", "tr_h_sigma"):
            if spectrum.get(key) is not None:
                rows.append(f"{key},,{spectrum[key]!r}")
        (out_dir / f"spectrum_phase{p}.csv").write_text("\n".join(rows) + "\n")

    if record.tr_h_sigma_series:
        rows = ["phase,epoch,tr_h_sigma"]
        for entry in record.tr_h_sigma_series:
            rows.append(f"{entry['phase']},{entry['epoch']},{entry['value']!r}")
        (out_dir / "trhsigma.csv").write_text("\n".join(rows) + "\n")
    return manifest


def write_landscape(slc: LandscapeSlice, csv_path: str | Path, svg_path: str | Path | None = None) -> None:
    """Persist a slice as CSV and, optionally, a standalone SVG plot."""
    csv_path = Path(csv_path)
    if slc.losses.ndim == 1:
        rows = ["alpha,loss"]
        for a, v in zip(slc.grid, slc.losses):
            rows.append(f"{a!r},{v!r}")
    else:
        rows = ["alpha,beta,loss"]
        for i, a in enumerate(slc.grid):
            for j, b in enumerate(slc.grid):
                rows.append(f"{a!r},{b!r},{slc.losses[i, j]!r}")
    csv_path.write_text("\n".join(rows) + "\n")

    if svg_path is None:
        return
    fig, ax = plt.subplots(figsize=(4.0, 3.0))
    if slc.losses.ndim == 1:
        ax.plot(slc.grid * slc.scale, slc.losses)
        ax.set_xlabel("offset")
        ax.set_ylabel("loss")
    else:
        contour = ax.contourf(slc.grid * slc.scale, slc.grid * slc.scale, slc.losses.T, levels=21)
        fig.colorbar(contour, ax=ax)
        ax.set_xlabel("direction 1")
        ax.set_ylabel("direction 2")
    fig.tight_layout()
    fig.savefig(svg_path, format="svg", metadata={"Date": None})
    plt.close(fig)


def write_sweep_csv(rows: list[dict], path: str | Path) -> None:
    """Sweep summary: one row per grid cell with mean/std metrics."""
    if not rows:
        raise ValueError("no sweep rows to write")
    keys = list(rows[0])
    lines = [",".join(keys)]
    for row in rows:
        lines.append(",".join(_cell(row[k]) for k in keys))
    Path(path).write_text("\n".join(lines) + "\n")


def write_aggregate_csv(records: list[RunRecord], path: str | Path) -> None:
    lines = ["seed,Acc,AAA"]
    for rec in records:
        lines.append(f"{rec.seed},{rec.final_accuracy!r},{rec.anytime_accuracy!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def _cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)
