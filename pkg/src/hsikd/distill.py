"""Losses for two-phase distillation training.

Provides temperature softmax, the coupled teacher/student KL loss, its exact
three-term decomposition over a base/incremental class split, the masked
variant that restricts and renormalizes the distributions over base classes
only, cross-entropy, and the analytic logit-gradients of the combined
objective.

Class ids are 1-based throughout (0 is reserved for unlabeled pixels); the
partition converts them to 0-based logit indices internally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

# Probabilities are clamped to this floor inside logarithms; together with the
# p*log(p) = 0 convention at p = 0 this keeps every loss finite.
_LOG_FLOOR = 1e-300


@dataclass(frozen=True)
class ClassPartition:
    """Disjoint split of the full label set into base and incremental classes.

    ``n_classes`` is |D|; ``base`` and ``incremental`` are tuples of 1-based
    class ids whose union must be exactly 1..n_classes. Both sides must be
    non-empty.
    """

    n_classes: int
    base: tuple[int, ...]
    incremental: tuple[int, ...]

    def __post_init__(self):
        base = tuple(sorted(self.base))
        incr = tuple(sorted(self.incremental))
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "incremental", incr)
        if self.n_classes < 2:
            raise ValidationError("a partition needs at least 2 classes")
        if not base or not incr:
            raise ValidationError("base and incremental sets must be non-empty")
        if set(base) & set(incr):
            raise ValidationError("base and incremental sets overlap")
        if sorted(base + incr) != list(range(1, self.n_classes + 1)):
            raise ValidationError(
                f"base ∪ incremental must equal 1..{self.n_classes}"
            )

    @property
    def base_index(self) -> np.ndarray:
        """0-based logit indices of the base classes, ascending."""
        return np.asarray(self.base, dtype=np.intp) - 1

    @property
    def incr_index(self) -> np.ndarray:
        """0-based logit indices of the incremental classes, ascending."""
        return np.asarray(self.incremental, dtype=np.intp) - 1


@dataclass(frozen=True)
class DistillConfig:
    temperature: float = 2.0
    lambda_kd: float = 1.0
    mask_enabled: bool = True

    def __post_init__(self):
        if not (self.temperature > 0):
            raise ValidationError("temperature must be positive")
        if self.lambda_kd < 0:
            raise ValidationError("lambda_kd must be non-negative")


def _check_logits(z, name: str = "logits") -> np.ndarray:
    v = np.asarray(z, dtype=np.float64)
    if v.ndim != 1:
        raise ValidationError(f"{name} must be a 1-D vector")
    if not np.isfinite(v).all():
        raise ValidationError(f"{name} contain non-finite entries")
    return v


def softmax_t(z, temperature: float) -> np.ndarray:
    """Temperature softmax with max-subtraction for stability."""
    v = _check_logits(z)
    if not (temperature > 0):
        raise ValidationError("temperature must be positive")
    scaled = (v - v.max()) / temperature
    e = np.exp(scaled)
    return e / e.sum()


def _log_softmax(z: np.ndarray, temperature: float) -> np.ndarray:
    scaled = (z - z.max()) / temperature
    return scaled - np.log(np.exp(scaled).sum())


def nontarget_mass(p, part: ClassPartition) -> float:
    """Total probability assigned to the incremental classes."""
    v = np.asarray(p, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != part.n_classes:
        raise ValidationError(
            f"probability vector length {v.shape} does not match |D|={part.n_classes}"
        )
    if abs(v.sum() - 1.0) > 1e-9:
        raise ValidationError("probabilities must sum to 1 within 1e-9")
    return float(v[part.incr_index].sum())


def within_n_dist(z, part: ClassPartition, temperature: float) -> np.ndarray:
    """Distribution over the incremental classes only (renormalized softmax)."""
    v = _check_logits(z)
    if v.shape[0] != part.n_classes:
        raise ValidationError("logit length does not match partition")
    return softmax_t(v[part.incr_index], temperature)


def _kl(p_t: np.ndarray, p_s: np.ndarray) -> float:
    # Elementwise sum of p_t*log(p_t/p_s); 0*log(0/x) = 0, probabilities
    # floored inside the log. Also valid for partial slices of a softmax.
    mask = p_t > 0.0
    pt = p_t[mask]
    ps = np.maximum(p_s[mask], _LOG_FLOOR)
    return float(np.sum(pt * (np.log(np.maximum(pt, _LOG_FLOOR)) - np.log(ps))))


def kl_coupled(zt, zs, part: ClassPartition, temperature: float) -> float:
    """KL divergence between teacher and student temperature softmaxes over D."""
    t = _check_logits(zt, "teacher logits")
    s = _check_logits(zs, "student logits")
    if t.shape != s.shape or t.shape[0] != part.n_classes:
        raise ValidationError("logit vectors must both cover the full class set")
    return _kl(softmax_t(t, temperature), softmax_t(s, temperature))


def kl_decoupled(
    zt, zs, part: ClassPartition, temperature: float
) -> tuple[float, float, float]:
    """Split the coupled KL into (base_term, mass_term, within_n_term).

    base_term sums the base-class contributions of the full-softmax KL;
    mass_term compares the total incremental-class mass of teacher and
    student; within_n_term is the teacher's incremental mass times the KL
    between the renormalized within-incremental distributions. The three
    terms sum back to ``kl_coupled`` exactly (up to float rounding).
    """
    t = _check_logits(zt, "teacher logits")
    s = _check_logits(zs, "student logits")
    if t.shape != s.shape or t.shape[0] != part.n_classes:
        raise ValidationError("logit vectors must both cover the full class set")

    p_t = softmax_t(t, temperature)
    p_s = softmax_t(s, temperature)
    b = part.base_index

    base_term = _kl(p_t[b], p_s[b])

    m_t = float(p_t[part.incr_index].sum())
    m_s = float(p_s[part.incr_index].sum())
    if m_t > 0.0:
        mass_term = m_t * (
            np.log(max(m_t, _LOG_FLOOR)) - np.log(max(m_s, _LOG_FLOOR))
        )
    else:
        mass_term = 0.0

    w_t = within_n_dist(t, part, temperature)
    w_s = within_n_dist(s, part, temperature)
    within_term = m_t * _kl(w_t, w_s)
    return base_term, float(mass_term), float(within_term)


def kd_loss_masked(zt, zs, part: ClassPartition, temperature: float) -> float:
    """KL between teacher and student distributions restricted to base classes.

    Both distributions are renormalized over the base set before comparing, so
    incremental-class logits have exactly zero influence: the computation never
    reads them.
    """
    t = _check_logits(zt, "teacher logits")
    s = _check_logits(zs, "student logits")
    if t.shape != s.shape or t.shape[0] != part.n_classes:
        raise ValidationError("logit vectors must both cover the full class set")
    b = part.base_index
    if b.size == 0:
        raise ValidationError("base class set is empty")
    return _kl(softmax_t(t[b], temperature), softmax_t(s[b], temperature))


def cross_entropy(z, label: int) -> float:
    """Negative log softmax probability of the 1-based true class."""
    v = _check_logits(z)
    if not (1 <= label <= v.shape[0]):
        raise ValidationError(f"label {label} out of range 1..{v.shape[0]}")
    return float(-_log_softmax(v, 1.0)[label - 1])


# Batch helpers used by loss_grads; rows are samples.

def _softmax_rows(z: np.ndarray, temperature: float) -> np.ndarray:
    scaled = (z - z.max(axis=1, keepdims=True)) / temperature
    e = np.exp(scaled)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax_rows(z: np.ndarray, temperature: float) -> np.ndarray:
    scaled = (z - z.max(axis=1, keepdims=True)) / temperature
    return scaled - np.log(np.exp(scaled).sum(axis=1, keepdims=True))


def loss_grads(
    zt,
    zs,
    labels,
    part: ClassPartition,
    cfg: DistillConfig | None,
    phase: str,
) -> tuple[float, np.ndarray]:
    """Mean training loss for a batch and its exact gradient w.r.t. student logits.

    Base phase: plain cross-entropy on the full-D softmax; ``zt`` and ``cfg``
    are ignored. Incremental phase: cross-entropy on the effective labels plus
    ``lambda_kd * T^2`` times the mean distillation loss (masked or coupled per
    the config); teacher logits are treated as constants.
    """
    s = np.asarray(zs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if s.ndim != 2:
        raise ValidationError("student logits must be a 2-D batch")
    n, d = s.shape
    if d != part.n_classes:
        raise ValidationError("student logit width does not match |D|")
    if y.shape != (n,):
        raise ValidationError("labels must be one 1-based class id per row")
    if y.size and (y.min() < 1 or y.max() > d):
        raise ValidationError(f"labels must lie in 1..{d}")
    if n == 0:
        raise ValidationError("empty batch")
    if not np.isfinite(s).all():
        raise ValidationError("student logits contain non-finite entries")

    p_s1 = _softmax_rows(s, 1.0)
    logp_s1 = _log_softmax_rows(s, 1.0)
    rows = np.arange(n)
    ce = float(-logp_s1[rows, y - 1].mean())
    d_ce = p_s1.copy()
    d_ce[rows, y - 1] -= 1.0
    d_ce /= n

    if phase == "base":
        return ce, d_ce
    if phase != "incremental":
        raise ValidationError(f"unknown phase {phase!r}")
    if cfg is None:
        raise ValidationError("incremental phase requires a DistillConfig")
    t = np.asarray(zt, dtype=np.float64) if zt is not None else None
    if t is None or t.shape != s.shape:
        raise ValidationError("incremental phase requires teacher logits of matching shape")
    if not np.isfinite(t).all():
        raise ValidationError("teacher logits contain non-finite entries")

    temp = cfg.temperature
    lam = cfg.lambda_kd
    if lam == 0.0:
        return ce, d_ce

    if cfg.mask_enabled:
        b = part.base_index
        pt = _softmax_rows(t[:, b], temp)
        ps = _softmax_rows(s[:, b], temp)
        logps = _log_softmax_rows(s[:, b], temp)
        logpt = np.log(np.maximum(pt, _LOG_FLOOR))
        kd = float(np.sum(pt * (logpt - logps)) / n)
        d_kd = np.zeros_like(s)
        d_kd[:, b] = (ps - pt) / (temp * n)
    else:
        pt = _softmax_rows(t, temp)
        ps = _softmax_rows(s, temp)
        logps = _log_softmax_rows(s, temp)
        logpt = np.log(np.maximum(pt, _LOG_FLOOR))
        kd = float(np.sum(pt * (logpt - logps)) / n)
        d_kd = (ps - pt) / (temp * n)

    scale = lam * temp * temp
    return ce + scale * kd, d_ce + scale * d_kd
