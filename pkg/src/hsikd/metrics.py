"""Confusion matrix and the evaluation statistics reported by the harness.

Rates are kept in [0, 1] internally and scaled to percent only at the
reporting boundary. ``aggregate`` uses the population (1/n) standard
deviation, matching the mean-over-runs convention of the result tables.
"""

from __future__ import annotations

import numpy as np

from .errors import UndefinedKappaError, ValidationError


def confuse(true_labels, predicted, n_classes: int) -> np.ndarray:
    """Tally an (n_classes, n_classes) count matrix, rows = true, cols = predicted.

    Labels are 1-based class ids.
    """
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(predicted, dtype=np.int64)
    if t.shape != p.shape or t.ndim != 1:
        raise ValidationError(
            f"label lists must be equal-length 1-D, got {t.shape} and {p.shape}"
        )
    if n_classes < 1:
        raise ValidationError("n_classes must be at least 1")
    for name, arr in (("true", t), ("predicted", p)):
        if arr.size and (arr.min() < 1 or arr.max() > n_classes):
            raise ValidationError(f"{name} labels must lie in 1..{n_classes}")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (t - 1, p - 1), 1)
    return cm


def _check_counts(cm) -> np.ndarray:
    m = np.asarray(cm, dtype=np.int64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"confusion matrix must be square, got {m.shape}")
    if (m < 0).any():
        raise ValidationError("confusion matrix entries must be non-negative")
    if m.sum() == 0:
        raise ValidationError("confusion matrix is empty")
    return m


def overall_accuracy(cm) -> float:
    """Percent of samples on the diagonal: 100 * trace / total."""
    m = _check_counts(cm)
    return 100.0 * float(np.trace(m)) / float(m.sum())


def average_accuracy(cm) -> float:
    """Percent mean of per-class recall (diagonal over row sum)."""
    m = _check_counts(cm)
    row_sums = m.sum(axis=1)
    empty = np.nonzero(row_sums == 0)[0]
    if empty.size:
        raise ValidationError(f"class {int(empty[0]) + 1} has no samples")
    recalls = np.diag(m) / row_sums
    return 100.0 * float(recalls.mean())


def per_class_accuracy(cm) -> dict[int, float]:
    """Per-class recall in percent, keyed by 1-based class id."""
    m = _check_counts(cm)
    row_sums = m.sum(axis=1)
    out = {}
    for i in range(m.shape[0]):
        if row_sums[i] == 0:
            raise ValidationError(f"class {i + 1} has no samples")
        out[i + 1] = 100.0 * float(m[i, i]) / float(row_sums[i])
    return out


def kappa(cm) -> float:
    """Cohen's kappa in percent: 100 * (p_o - p_e) / (1 - p_e)."""
    m = _check_counts(cm)
    total = float(m.sum())
    p_o = float(np.trace(m)) / total
    row = m.sum(axis=1).astype(np.float64)
    col = m.sum(axis=0).astype(np.float64)
    p_e = float((row * col).sum()) / (total * total)
    if p_e == 1.0:
        raise UndefinedKappaError("expected agreement is 1 (single-cell matrix)")
    return 100.0 * (p_o - p_e) / (1.0 - p_e)


def aggregate(values) -> tuple[float, float]:
    """Arithmetic mean and population (1/n) standard deviation."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValidationError("aggregate needs a non-empty 1-D list of values")
    mean = float(v.mean())
    std = float(np.sqrt(((v - mean) ** 2).mean()))
    return mean, std


def format_mean_std(mean: float, std: float) -> str:
    """Render a statistic as 'mean±std' with two decimals."""
    return f"{mean:.2f}±{std:.2f}"
