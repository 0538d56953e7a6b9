"""Replay-free class-incremental hyperspectral image classification.

A base-phase teacher is trained on the initial classes; the student inherits
its weights and learns the new classes without any stored old samples.
Forgetting is countered by teacher-driven relabeling of lookalike samples and
a distillation loss restricted to the base-class block of the softmax.
"""

from .data import HsiCube, PatchSet, SplitSpec, load_cube, slice_patches, split, synth_cube, write_cube
from .distill import ClassPartition, DistillConfig
from .errors import (
    ConvergenceError,
    DimensionError,
    FormatError,
    GenerationError,
    HsikdError,
    SplitError,
    UndefinedKappaError,
    UpdateError,
    ValidationError,
)
from .net import MlpModel, init_model, load_checkpoint, save_checkpoint
from .numkit import PcaModel, eigh_symmetric, pca_fit, pca_project
from .retention import RetentionConfig, relabel_dataset
from .trainer import (
    ExperimentResult,
    RunConfig,
    RunResult,
    run_ablation,
    run_experiment,
    run_patch_sweep,
    train_base,
    train_incremental,
)

__version__ = "0.1.0"

__all__ = [
    "ClassPartition",
    "ConvergenceError",
    "DimensionError",
    "DistillConfig",
    "ExperimentResult",
    "FormatError",
    "GenerationError",
    "HsiCube",
    "HsikdError",
    "MlpModel",
    "PatchSet",
    "PcaModel",
    "RetentionConfig",
    "RunConfig",
    "RunResult",
    "SplitError",
    "SplitSpec",
    "UndefinedKappaError",
    "UpdateError",
    "ValidationError",
    "eigh_symmetric",
    "init_model",
    "load_checkpoint",
    "load_cube",
    "pca_fit",
    "pca_project",
    "relabel_dataset",
    "run_ablation",
    "run_experiment",
    "run_patch_sweep",
    "save_checkpoint",
    "slice_patches",
    "split",
    "synth_cube",
    "train_base",
    "train_incremental",
    "write_cube",
]
