"""Two-phase training pipeline and the experiment harnesses built on it.

Phase 1 trains the teacher on base-class samples with plain cross-entropy.
Phase 2 clones the teacher into the student and trains it on incremental
samples only (the base training set is discarded: no replay), with optional
teacher-based relabeling and a distillation term against the frozen teacher.

Each repetition r of an experiment runs the entire pipeline with seed
``cfg.seed + r`` for initialization, shuffling, and splitting, so multi-run
results are reproducible bit-for-bit. Repetitions are independent; the
``HSIKD_THREADS`` environment variable caps how many execute concurrently.
"""

from __future__ import annotations

import dataclasses
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import HsiCube, PatchSet, SplitSpec, slice_patches, split
from .distill import ClassPartition, DistillConfig, loss_grads
from .errors import UpdateError, ValidationError
from .metrics import (
    aggregate,
    average_accuracy,
    confuse,
    kappa,
    overall_accuracy,
    per_class_accuracy,
)
from .net import (
    MlpModel,
    adam_init,
    adam_step,
    backward,
    clone_params,
    forward,
    forward_logits,
    init_model,
    save_checkpoint,
)
from .numkit import pca_fit
from .retention import (
    RetentionConfig,
    effective_labels,
    relabel_dataset,
    write_relabel_log,
)

EVAL_BATCH = 2048


@dataclass(frozen=True)
class RunConfig:
    partition: ClassPartition
    patch_size: int = 9
    pca_components: int = 20
    hidden_dims: tuple[int, ...] = (256, 128)
    lr: float = 1e-3
    epochs: int = 100
    batch_size: int = 256
    alpha: float = 0.8
    temperature: float = 2.0
    lambda_kd: float = 1.0
    train_fraction: float = 0.1
    seed: int = 0
    runs: int = 5
    review_enabled: bool = True
    mask_enabled: bool = True

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(d) for d in self.hidden_dims))
        if self.epochs < 1:
            raise ValidationError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be at least 1")
        if self.runs < 1:
            raise ValidationError("runs must be at least 1")
        if self.patch_size % 2 == 0 or self.patch_size < 3:
            raise ValidationError("patch_size must be odd and at least 3")
        if self.pca_components < 1:
            raise ValidationError("pca_components must be positive")
        if not (self.lr > 0):
            raise ValidationError("lr must be positive")
        if not (0.0 < self.alpha < 1.0):
            raise ValidationError("alpha must lie strictly between 0 and 1")
        if not (self.temperature > 0):
            raise ValidationError("temperature must be positive")
        if self.lambda_kd < 0:
            raise ValidationError("lambda_kd must be non-negative")
        if not (0.0 < self.train_fraction < 1.0):
            raise ValidationError("train_fraction must lie in (0, 1)")

    def distill_config(self) -> DistillConfig:
        return DistillConfig(
            temperature=self.temperature,
            lambda_kd=self.lambda_kd,
            mask_enabled=self.mask_enabled,
        )


@dataclass
class RunResult:
    run: int
    seed: int
    per_class_accuracy: dict[int, float]  # 1-based class id -> accuracy %
    oa: float
    aa: float
    kappa: float
    phase_history: list[tuple[int, str, float]]
    relabel_count: int
    confusion: np.ndarray


@dataclass
class ExperimentResult:
    config: RunConfig
    runs: list[RunResult]
    oa: tuple[float, float]
    aa: tuple[float, float]
    kappa: tuple[float, float]
    per_class: dict[int, tuple[float, float]]

    def block_aa(self, class_ids) -> tuple[float, float]:
        """Mean/std over runs of the mean per-class accuracy of a class block."""
        vals = [
            float(np.mean([r.per_class_accuracy[c] for c in class_ids])) for r in self.runs
        ]
        return aggregate(vals)


def _train_epochs(model, x, y, teacher, part, dcfg, phase, cfg, rng, history):
    state = adam_init(model)
    n = x.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            sel = order[start : start + cfg.batch_size]
            xb = x[sel]
            yb = y[sel]
            zt = forward_logits(teacher, xb) if teacher is not None else None
            zs, cache = forward(model, xb)
            loss, d_zs = loss_grads(zt, zs, yb, part, dcfg, phase)
            grads = backward(model, cache, d_zs)
            adam_step(model, grads, state, cfg.lr)
            total += loss * sel.size
        epoch_loss = total / n
        if not np.isfinite(epoch_loss):
            raise UpdateError(f"non-finite loss in {phase} phase at epoch {epoch}")
        if history is not None:
            history.append((epoch, phase, epoch_loss))


def train_base(data: PatchSet, cfg: RunConfig, history: list | None = None) -> MlpModel:
    """Phase 1: train the teacher on base-class samples with cross-entropy."""
    if len(data) == 0:
        raise ValidationError("base training set is empty")
    part = cfg.partition
    stray = set(np.unique(data.labels).tolist()) - set(part.base)
    if stray:
        raise ValidationError(f"base-phase labels outside P: {sorted(stray)}")
    dims = [data.patches.shape[1], *cfg.hidden_dims, part.n_classes]
    model = init_model(dims, cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    _train_epochs(
        model, data.patches, data.labels.astype(np.int64), None, part, None,
        "base", cfg, rng, history,
    )
    return model


def train_incremental(
    teacher: MlpModel,
    data: PatchSet,
    cfg: RunConfig,
    part: ClassPartition,
    history: list | None = None,
    decisions_out: list | None = None,
) -> MlpModel:
    """Phase 2: clone the teacher and train the student on incremental samples.

    When review is enabled, relabeling runs once up front against the frozen
    teacher and the effective labels replace the originals. Every sample,
    relabeled or not, contributes to the distillation term.
    """
    if len(data) == 0:
        raise ValidationError("incremental training set is empty")
    if data.patches.shape[1] != teacher.n_inputs:
        raise ValidationError(
            f"incremental samples have {data.patches.shape[1]} features, "
            f"teacher expects {teacher.n_inputs}"
        )
    stray = set(np.unique(data.labels).tolist()) - set(part.incremental)
    if stray:
        raise ValidationError(f"incremental-phase labels outside N: {sorted(stray)}")

    y = data.labels.astype(np.int64)
    if cfg.review_enabled:
        decisions = relabel_dataset(
            teacher, data, part, RetentionConfig(alpha=cfg.alpha, enabled=True)
        )
        y = effective_labels(decisions, len(data)).astype(np.int64)
        if decisions_out is not None:
            decisions_out.extend(decisions)

    student = clone_params(teacher)
    rng = np.random.default_rng(cfg.seed)
    _train_epochs(
        student, data.patches, y, teacher, part, cfg.distill_config(),
        "incremental", cfg, rng, history,
    )
    return student


def evaluate_model(model: MlpModel, test_sets, n_classes: int) -> np.ndarray:
    """Confusion matrix of argmax predictions over the union of test sets."""
    xs = [ps.patches for ps in test_sets if len(ps)]
    ys = [ps.labels for ps in test_sets if len(ps)]
    if not xs:
        raise ValidationError("no test samples to evaluate")
    x = np.concatenate(xs, axis=0)
    y = np.concatenate(ys, axis=0)
    preds = np.empty(x.shape[0], dtype=np.int64)
    for start in range(0, x.shape[0], EVAL_BATCH):
        logits = forward_logits(model, x[start : start + EVAL_BATCH])
        preds[start : start + logits.shape[0]] = np.argmax(logits, axis=1) + 1
    return confuse(y, preds, n_classes)


@dataclass
class _RunOutput:
    result: RunResult
    teacher: MlpModel
    student: MlpModel
    decisions: list


def _single_run(run: int, cfg: RunConfig, ps: PatchSet) -> _RunOutput:
    part = cfg.partition
    run_cfg = dataclasses.replace(cfg, seed=cfg.seed + run)
    base_train, base_test, incr_train, incr_test = split(
        ps, SplitSpec(cfg.train_fraction, run_cfg.seed, part)
    )
    history: list[tuple[int, str, float]] = []
    decisions: list = []
    teacher = train_base(base_train, run_cfg, history=history)
    student = train_incremental(
        teacher, incr_train, run_cfg, part, history=history, decisions_out=decisions
    )
    cm = evaluate_model(student, [base_test, incr_test], part.n_classes)
    result = RunResult(
        run=run,
        seed=run_cfg.seed,
        per_class_accuracy=per_class_accuracy(cm),
        oa=overall_accuracy(cm),
        aa=average_accuracy(cm),
        kappa=kappa(cm),
        phase_history=history,
        relabel_count=sum(1 for d in decisions if d.relabeled),
        confusion=cm,
    )
    return _RunOutput(result=result, teacher=teacher, student=student, decisions=decisions)


def _worker_count(n_tasks: int) -> int:
    raw = os.environ.get("HSIKD_THREADS", "1")
    try:
        workers = int(raw)
    except ValueError:
        raise ValidationError(f"HSIKD_THREADS must be an integer, got {raw!r}")
    return max(1, min(workers, n_tasks))


def run_experiment(
    cfg: RunConfig, cube: HsiCube, out_dir=None
) -> ExperimentResult:
    """PCA -> slice -> split -> two-phase train -> evaluate, once per run.

    Feature extraction is shared across runs (it is seed-independent); each
    run then splits and trains with its own derived seed. When ``out_dir`` is
    given the run-directory artifacts are written there.
    """
    part = cfg.partition
    if part.n_classes != cube.n_classes:
        raise ValidationError(
            f"partition spans {part.n_classes} classes, cube declares {cube.n_classes}"
        )
    spectra = cube.values.reshape(-1, cube.bands).astype(np.float64)
    pca = pca_fit(spectra, cfg.pca_components)
    ps = slice_patches(cube, pca, cfg.patch_size)

    workers = _worker_count(cfg.runs)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(lambda r: _single_run(r, cfg, ps), range(cfg.runs)))
    else:
        outputs = [_single_run(r, cfg, ps) for r in range(cfg.runs)]

    results = [o.result for o in outputs]
    res = ExperimentResult(
        config=cfg,
        runs=results,
        oa=aggregate([r.oa for r in results]),
        aa=aggregate([r.aa for r in results]),
        kappa=aggregate([r.kappa for r in results]),
        per_class={
            c: aggregate([r.per_class_accuracy[c] for r in results])
            for c in range(1, part.n_classes + 1)
        },
    )
    if out_dir is not None:
        write_run_dir(Path(out_dir), res, outputs, cube.class_names)
    return res


def write_run_dir(out_dir: Path, res: ExperimentResult, outputs, class_names) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = res.config
    (out_dir / "config.json").write_text(
        json.dumps(config_to_dict(cfg, class_names), indent=2) + "\n",
        encoding="utf-8",
    )
    save_checkpoint(outputs[0].teacher, out_dir / "teacher.ckpt", class_names)
    save_checkpoint(outputs[0].student, out_dir / "student.ckpt", class_names)

    relabel_path = out_dir / "relabels.csv"
    if relabel_path.exists():
        relabel_path.unlink()
    for o in outputs:
        write_relabel_log(o.decisions, relabel_path, run=o.result.run)

    (out_dir / "metrics.json").write_text(
        json.dumps(metrics_document(res, class_names), indent=2) + "\n",
        encoding="utf-8",
    )
    for o in outputs:
        r = o.result
        header = ",".join(class_names)
        rows = [",".join(str(int(v)) for v in row) for row in r.confusion]
        (out_dir / f"confusion_{r.run}.csv").write_text(
            header + "\n" + "\n".join(rows) + "\n", encoding="utf-8"
        )
        hist_lines = ["epoch,phase,loss"] + [
            f"{e},{p},{loss!r}" for e, p, loss in r.phase_history
        ]
        (out_dir / f"history_{r.run}.csv").write_text(
            "\n".join(hist_lines) + "\n", encoding="utf-8"
        )


def metrics_document(res: ExperimentResult, class_names) -> dict:
    """The metrics.json payload: per-run values plus mean/std aggregates."""
    def name(c: int) -> str:
        return class_names[c - 1]

    return {
        "runs": [
            {
                "oa": r.oa,
                "aa": r.aa,
                "kappa": r.kappa,
                "per_class": {name(c): v for c, v in sorted(r.per_class_accuracy.items())},
            }
            for r in res.runs
        ],
        "aggregate": {
            "oa": {"mean": res.oa[0], "std": res.oa[1]},
            "aa": {"mean": res.aa[0], "std": res.aa[1]},
            "kappa": {"mean": res.kappa[0], "std": res.kappa[1]},
            "per_class": {
                name(c): {"mean": m, "std": s}
                for c, (m, s) in sorted(res.per_class.items())
            },
        },
    }


ABLATION_ROWS = (
    ("baseline", False, False),
    ("review", True, False),
    ("mask", False, True),
    ("both", True, True),
)


@dataclass
class AblationRow:
    name: str
    review: bool
    mask: bool
    result: ExperimentResult


def run_ablation(cfg: RunConfig, cube: HsiCube) -> list[AblationRow]:
    """The four review/mask flag combinations with identical seeds."""
    rows = []
    for name, review, mask in ABLATION_ROWS:
        row_cfg = dataclasses.replace(cfg, review_enabled=review, mask_enabled=mask)
        rows.append(
            AblationRow(
                name=name, review=review, mask=mask,
                result=run_experiment(row_cfg, cube),
            )
        )
    return rows


@dataclass
class SweepRow:
    patch_size: int
    result: ExperimentResult


def run_patch_sweep(cfg: RunConfig, cube: HsiCube, sizes) -> list[SweepRow]:
    """Full pipeline per slice size; raises before starting on an even size."""
    sizes = [int(s) for s in sizes]
    for s in sizes:
        if s % 2 == 0:
            raise ValidationError(f"patch sizes must be odd, got {s}")
    rows = []
    for s in sizes:
        row_cfg = dataclasses.replace(cfg, patch_size=s)
        rows.append(SweepRow(patch_size=s, result=run_experiment(row_cfg, cube)))
    return rows


def config_to_dict(cfg: RunConfig, class_names) -> dict:
    """Flat JSON-ready form of a config; the partition becomes two name lists."""
    def name(c: int) -> str:
        return class_names[c - 1]

    return {
        "patch_size": cfg.patch_size,
        "pca_components": cfg.pca_components,
        "hidden_dims": list(cfg.hidden_dims),
        "lr": cfg.lr,
        "epochs": cfg.epochs,
        "batch_size": cfg.batch_size,
        "alpha": cfg.alpha,
        "temperature": cfg.temperature,
        "lambda_kd": cfg.lambda_kd,
        "train_fraction": cfg.train_fraction,
        "seed": cfg.seed,
        "runs": cfg.runs,
        "review_enabled": cfg.review_enabled,
        "mask_enabled": cfg.mask_enabled,
        "base_classes": [name(c) for c in cfg.partition.base],
        "incremental_classes": [name(c) for c in cfg.partition.incremental],
    }


def config_from_dict(doc: dict, class_names) -> RunConfig:
    """Inverse of config_to_dict, resolving class names against a cube."""
    known = {
        "patch_size", "pca_components", "hidden_dims", "lr", "epochs",
        "batch_size", "alpha", "temperature", "lambda_kd", "train_fraction",
        "seed", "runs", "review_enabled", "mask_enabled",
        "base_classes", "incremental_classes",
    }
    unknown = set(doc) - known
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    for key in ("base_classes", "incremental_classes"):
        if key not in doc:
            raise ValidationError(f"config is missing {key!r}")

    index = {n: i + 1 for i, n in enumerate(class_names)}

    def resolve(names):
        ids = []
        for n in names:
            if n not in index:
                raise ValidationError(
                    f"class {n!r} not found in cube classes {class_names}"
                )
            ids.append(index[n])
        return tuple(ids)

    part = ClassPartition(
        n_classes=len(class_names),
        base=resolve(doc["base_classes"]),
        incremental=resolve(doc["incremental_classes"]),
    )
    kwargs = {k: v for k, v in doc.items() if k not in ("base_classes", "incremental_classes")}
    if "hidden_dims" in kwargs:
        kwargs["hidden_dims"] = tuple(kwargs["hidden_dims"])
    return RunConfig(partition=part, **kwargs)
