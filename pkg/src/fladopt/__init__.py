"""Sharpness-decomposition optimizers, a class-incremental learning
harness, and curvature diagnostics, built over exact gradients and
Hessian-vector products for small dense classifiers."""

from .continual import (
    MetricsLedger,
    ReplayBuffer,
    TaskStream,
    aaa,
    acc_final,
    build_stream,
    evaluate,
    run_phase,
    run_stream,
)
from .datasets import Dataset, SplitData, gaussian_blobs, generate_dataset, load_csv_pair, spirals
from .diagnostics import (
    LandscapeSlice,
    SpectrumReport,
    hutchinson_trace,
    landscape_slice,
    spectrum_report,
    top_eigenpairs,
    tr_h_sigma,
)
from .estimator import FladClassifier
from .mlp import MlpOracle, ModelSpec, grow_head, init_params
from .optim import (
    KINDS,
    VARIANTS,
    HyperParams,
    NumericalAbort,
    OptimizerState,
    Schedule,
    baseline_step,
    decompose,
    flad_step,
    optimizer_step,
    schedule_at,
    update_ema,
    variant_perturbation,
    zeroth_perturbation,
)
from .oracles import (
    AnchoredOracle,
    Batch,
    CountingOracle,
    LossOracle,
    QuadraticOracle,
    fd_grad,
    fd_grad_norm_grad,
    fd_hvp,
)
from .params import ParamLayout, ParamVector
from .training import TrainResult, run_training

__version__ = "0.1.0"

__all__ = [
    "AnchoredOracle",
    "Batch",
    "CountingOracle",
    "Dataset",
    "FladClassifier",
    "HyperParams",
    "KINDS",
    "LandscapeSlice",
    "LossOracle",
    "MetricsLedger",
    "MlpOracle",
    "ModelSpec",
    "NumericalAbort",
    "OptimizerState",
    "ParamLayout",
    "ParamVector",
    "QuadraticOracle",
    "ReplayBuffer",
    "Schedule",
    "SpectrumReport",
    "SplitData",
    "TaskStream",
    "TrainResult",
    "VARIANTS",
    "aaa",
    "acc_final",
    "baseline_step",
    "build_stream",
    "decompose",
    "evaluate",
    "fd_grad",
    "fd_grad_norm_grad",
    "fd_hvp",
    "flad_step",
    "gaussian_blobs",
    "generate_dataset",
    "grow_head",
    "hutchinson_trace",
    "init_params",
    "landscape_slice",
    "load_csv_pair",
    "optimizer_step",
    "run_phase",
    "run_stream",
    "run_training",
    "schedule_at",
    "spectrum_report",
    "spirals",
    "top_eigenpairs",
    "tr_h_sigma",
    "update_ema",
    "variant_perturbation",
    "zeroth_perturbation",
]
