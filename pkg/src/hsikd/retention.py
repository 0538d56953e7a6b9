"""Teacher-based relabeling of incremental samples that resemble base classes.

A frozen teacher scores every incremental-phase sample by its softmax over the
base classes only (renormalized, so untrained incremental logits cannot dilute
the score). Samples at or above the threshold have their training label
replaced by the best-scoring base class, giving replay-free pseudo-rehearsal.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import PatchSet
from .distill import ClassPartition
from .errors import DimensionError, ValidationError
from .net import MlpModel, forward_logits


@dataclass(frozen=True)
class RetentionConfig:
    alpha: float = 0.8
    enabled: bool = True

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ValidationError("alpha must lie strictly between 0 and 1")


@dataclass(frozen=True)
class RelabelDecision:
    sample_index: int
    original_label: int  # class in N
    effective_label: int  # class in D
    teacher_score: float
    relabeled: bool


def _base_scores(teacher: MlpModel, batch: np.ndarray, part: ClassPartition):
    """Renormalized base-class softmax rows; returns (best class ids, scores)."""
    logits = forward_logits(teacher, batch)
    zb = logits[:, part.base_index]
    zb = zb - zb.max(axis=1, keepdims=True)
    probs = np.exp(zb)
    probs /= probs.sum(axis=1, keepdims=True)
    best_pos = np.argmax(probs, axis=1)  # first max -> lowest class id wins ties
    best_ids = np.asarray(part.base, dtype=np.int64)[best_pos]
    scores = probs[np.arange(probs.shape[0]), best_pos]
    return best_ids, scores


def score_against_base(
    teacher: MlpModel, sample, part: ClassPartition
) -> tuple[int, float]:
    """Best base class and its renormalized probability for one feature vector."""
    x = np.asarray(sample, dtype=np.float64)
    if x.ndim != 1:
        raise ValidationError("sample must be a 1-D feature vector")
    if x.shape[0] != teacher.n_inputs:
        raise DimensionError(
            f"sample has {x.shape[0]} features, teacher expects {teacher.n_inputs}"
        )
    best_ids, scores = _base_scores(teacher, x[None, :], part)
    return int(best_ids[0]), float(scores[0])


def relabel_dataset(
    teacher: MlpModel,
    incremental_samples: PatchSet,
    part: ClassPartition,
    cfg: RetentionConfig,
) -> list[RelabelDecision]:
    """One decision per sample, in input order.

    Samples scoring at or above alpha get the best base class as their
    effective label; all others keep their original label. The teacher is
    treated as frozen, so the decision list is a pure function of its inputs.
    """
    labels = incremental_samples.labels
    incr = set(part.incremental)
    bad = [int(c) for c in np.unique(labels) if int(c) not in incr]
    if bad:
        raise ValidationError(
            f"incremental samples carry non-incremental labels: {bad}"
        )
    if incremental_samples.patches.shape[1] != teacher.n_inputs:
        raise DimensionError(
            f"samples have {incremental_samples.patches.shape[1]} features, "
            f"teacher expects {teacher.n_inputs}"
        )

    best_ids, scores = _base_scores(teacher, incremental_samples.patches, part)
    decisions = []
    for i in range(len(incremental_samples)):
        hit = bool(scores[i] >= cfg.alpha) if cfg.enabled else False
        decisions.append(
            RelabelDecision(
                sample_index=i,
                original_label=int(labels[i]),
                effective_label=int(best_ids[i]) if hit else int(labels[i]),
                teacher_score=float(scores[i]),
                relabeled=hit,
            )
        )
    return decisions


def effective_labels(decisions, n: int) -> np.ndarray:
    """Dense effective-label vector from a decision list."""
    out = np.zeros(n, dtype=np.int32)
    for d in decisions:
        out[d.sample_index] = d.effective_label
    return out


def write_relabel_log(decisions, path, run: int | None = None) -> int:
    """Append relabeled samples to a CSV audit log; returns rows written.

    Creates the file with a header when it does not exist yet.
    """
    path = Path(path)
    new_file = not path.exists()
    mode = "w" if new_file else "a"
    with open(path, mode, newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        if new_file:
            header = ["sample_index", "original_label", "effective_label", "score"]
            if run is not None:
                header = ["run"] + header
            writer.writerow(header)
        count = 0
        for d in decisions:
            if not d.relabeled:
                continue
            row = [d.sample_index, d.original_label, d.effective_label, repr(d.teacher_score)]
            if run is not None:
                row = [run] + row
            writer.writerow(row)
            count += 1
    return count
