"""Distillation losses: decomposition identity, mask semantics, gradients.

The batched training loss is cross-checked against the scalar reference
functions (kl_coupled / kd_loss_masked / cross_entropy), and every analytic
logit-gradient is checked against central finite differences.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hsikd.distill import (
    ClassPartition,
    DistillConfig,
    cross_entropy,
    kd_loss_masked,
    kl_coupled,
    kl_decoupled,
    loss_grads,
    nontarget_mass,
    softmax_t,
    within_n_dist,
)
from hsikd.errors import ValidationError

PART64 = ClassPartition(n_classes=10, base=(1, 2, 3, 4, 5, 6), incremental=(7, 8, 9, 10))


def random_partition(rng):
    n = int(rng.integers(4, 17))
    ids = rng.permutation(n) + 1
    cut = int(rng.integers(1, n))
    return ClassPartition(n, tuple(ids[:cut].tolist()), tuple(ids[cut:].tolist()))


# ---------------------------------------------------------------------------
# partition


def test_partition_validation():
    with pytest.raises(ValidationError):
        ClassPartition(3, (1, 2), (2, 3))  # overlap
    with pytest.raises(ValidationError):
        ClassPartition(4, (1, 2), (4,))  # gap
    with pytest.raises(ValidationError):
        ClassPartition(2, (1, 2), ())  # empty side
    with pytest.raises(ValidationError):
        ClassPartition(1, (1,), ())


def test_partition_sorts_and_indexes():
    p = ClassPartition(5, (3, 1), (5, 2, 4))
    assert p.base == (1, 3)
    assert p.incremental == (2, 4, 5)
    assert p.base_index.tolist() == [0, 2]
    assert p.incr_index.tolist() == [1, 3, 4]


# ---------------------------------------------------------------------------
# softmax


def test_softmax_sums_to_one_and_orders():
    z = np.array([1.0, 3.0, 2.0])
    p = softmax_t(z, 1.0)
    assert abs(p.sum() - 1.0) <= 1e-12
    assert p[1] > p[2] > p[0]


def test_softmax_temperature_flattens():
    z = np.array([1.0, 3.0, 2.0])
    sharp = softmax_t(z, 0.5)
    flat = softmax_t(z, 10.0)
    assert sharp.max() > flat.max()
    assert flat.max() - 1.0 / 3.0 < 0.1


def test_softmax_rejects_bad_input():
    with pytest.raises(ValidationError):
        softmax_t(np.ones((2, 2)), 1.0)
    with pytest.raises(ValidationError):
        softmax_t(np.array([1.0, np.inf]), 1.0)
    with pytest.raises(ValidationError):
        softmax_t(np.array([1.0, 2.0]), 0.0)


@settings(max_examples=100, deadline=None)
@given(
    seed=st.integers(min_value=0, max_value=2**31 - 1),
    shift=st.floats(min_value=-50, max_value=50, allow_nan=False),
    temp=st.floats(min_value=0.05, max_value=10.0),
)
def test_softmax_shift_invariance(seed, shift, temp):
    rng = np.random.default_rng(seed)
    z = rng.normal(scale=5.0, size=int(rng.integers(2, 12)))
    assert np.abs(softmax_t(z + shift, temp) - softmax_t(z, temp)).max() <= 1e-9


# ---------------------------------------------------------------------------
# decomposition identity


def test_decomposition_sums_to_coupled_kl():
    rng = np.random.default_rng(11)
    for _ in range(300):
        part = random_partition(rng)
        scale = float(rng.choice([0.5, 3.0, 10.0]))
        zt = rng.normal(scale=scale, size=part.n_classes)
        zs = rng.normal(scale=scale, size=part.n_classes)
        temp = float(rng.choice([0.5, 1.0, 2.0, 4.0]))
        whole = kl_coupled(zt, zs, part, temp)
        base, mass, within = kl_decoupled(zt, zs, part, temp)
        assert abs(whole - (base + mass + within)) <= 1e-9


@settings(max_examples=150, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**31 - 1))
def test_decomposition_identity_property(seed):
    rng = np.random.default_rng(seed)
    part = random_partition(rng)
    zt = rng.normal(scale=3.0, size=part.n_classes)
    zs = rng.normal(scale=3.0, size=part.n_classes)
    whole = kl_coupled(zt, zs, part, 2.0)
    base, mass, within = kl_decoupled(zt, zs, part, 2.0)
    assert abs(whole - (base + mass + within)) <= 1e-9


def test_kl_terms_are_individually_sane():
    rng = np.random.default_rng(12)
    zt = rng.normal(size=10)
    zs = rng.normal(size=10)
    assert kl_coupled(zt, zs, PART64, 2.0) >= 0.0
    assert kl_coupled(zt, zt, PART64, 2.0) == 0.0
    base, mass, within = kl_decoupled(zt, zt, PART64, 2.0)
    assert base == 0.0 and mass == 0.0 and within == 0.0
    assert within >= 0.0


def test_nontarget_mass_and_within_dist():
    rng = np.random.default_rng(13)
    z = rng.normal(size=10)
    p = softmax_t(z, 2.0)
    assert abs(nontarget_mass(p, PART64) - p[PART64.incr_index].sum()) <= 1e-15
    w = within_n_dist(z, PART64, 2.0)
    assert np.abs(w - softmax_t(z[PART64.incr_index], 2.0)).max() == 0.0
    with pytest.raises(ValidationError):
        nontarget_mass(p * 0.5, PART64)  # not normalized


# ---------------------------------------------------------------------------
# mask semantics


def test_masked_loss_never_reads_incremental_logits():
    rng = np.random.default_rng(21)
    for _ in range(100):
        part = random_partition(rng)
        zt = rng.normal(scale=3.0, size=part.n_classes)
        zs = rng.normal(scale=3.0, size=part.n_classes)
        before = kd_loss_masked(zt, zs, part, 2.0)
        zt2, zs2 = zt.copy(), zs.copy()
        zt2[part.incr_index] += rng.normal(scale=100.0, size=part.incr_index.size)
        zs2[part.incr_index] += rng.normal(scale=100.0, size=part.incr_index.size)
        after = kd_loss_masked(zt2, zs2, part, 2.0)
        assert before == after  # bit-identical, not merely close
        b = part.base_index
        assert softmax_t(zt2[b], 2.0).tobytes() == softmax_t(zt[b], 2.0).tobytes()
        assert softmax_t(zs2[b], 2.0).tobytes() == softmax_t(zs[b], 2.0).tobytes()


def test_masked_loss_equals_restricted_kl():
    rng = np.random.default_rng(22)
    zt = rng.normal(size=10)
    zs = rng.normal(size=10)
    b = PART64.base_index
    pt = softmax_t(zt[b], 2.0)
    ps = softmax_t(zs[b], 2.0)
    oracle = float(np.sum(pt * (np.log(pt) - np.log(ps))))
    assert abs(kd_loss_masked(zt, zs, PART64, 2.0) - oracle) <= 1e-12


# ---------------------------------------------------------------------------
# cross-entropy


def test_cross_entropy_oracle():
    rng = np.random.default_rng(31)
    z = rng.normal(size=6)
    for label in range(1, 7):
        p = np.exp(z - z.max())
        p /= p.sum()
        assert abs(cross_entropy(z, label) + np.log(p[label - 1])) <= 1e-12
    with pytest.raises(ValidationError):
        cross_entropy(z, 0)
    with pytest.raises(ValidationError):
        cross_entropy(z, 7)


# ---------------------------------------------------------------------------
# combined batch loss and its gradient


def fd_logit_grad(fn, zs, h=1e-6):
    g = np.zeros_like(zs)
    it = np.nditer(zs, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        keep = zs[idx]
        zs[idx] = keep + h
        up = fn(zs)
        zs[idx] = keep - h
        down = fn(zs)
        zs[idx] = keep
        g[idx] = (up - down) / (2 * h)
        it.iternext()
    return g


def rel_err(a, b):
    return np.abs(a - b) / np.maximum.reduce([np.abs(a), np.abs(b), np.full_like(a, 1e-8)])


@pytest.mark.parametrize(
    "phase,mask",
    [("base", None), ("incremental", False), ("incremental", True)],
)
def test_loss_grads_match_finite_differences(phase, mask):
    rng = np.random.default_rng(41)
    n, d = 5, 10
    zt = rng.normal(scale=2.0, size=(n, d))
    zs = rng.normal(scale=2.0, size=(n, d))
    labels = rng.integers(1, d + 1, size=n)
    cfg = None if mask is None else DistillConfig(2.0, 1.0, mask)
    _, grad = loss_grads(zt, zs, labels, PART64, cfg, phase)
    fd = fd_logit_grad(lambda z: loss_grads(zt, z, labels, PART64, cfg, phase)[0], zs.copy())
    assert rel_err(grad, fd).max() <= 1e-4


def test_masked_gradient_is_zero_on_incremental_columns():
    rng = np.random.default_rng(42)
    n, d = 4, 10
    zt = rng.normal(size=(n, d))
    zs = rng.normal(size=(n, d))
    labels = rng.integers(7, 11, size=n)
    cfg = DistillConfig(temperature=2.0, lambda_kd=1.0, mask_enabled=True)
    loss_ce, grad_ce = loss_grads(None, zs, labels, PART64, None, "base")
    _, grad = loss_grads(zt, zs, labels, PART64, cfg, "incremental")
    kd_part = grad - grad_ce
    assert np.abs(kd_part[:, PART64.incr_index]).max() == 0.0


def test_batch_loss_matches_scalar_reference_functions():
    rng = np.random.default_rng(43)
    n, d = 6, 10
    zt = rng.normal(scale=2.0, size=(n, d))
    zs = rng.normal(scale=2.0, size=(n, d))
    labels = rng.integers(1, d + 1, size=n)
    temp, lam = 2.0, 0.7

    ce = np.mean([cross_entropy(zs[i], int(labels[i])) for i in range(n)])
    for mask, kd_fn in ((False, kl_coupled), (True, kd_loss_masked)):
        kd = np.mean([kd_fn(zt[i], zs[i], PART64, temp) for i in range(n)])
        oracle = ce + lam * temp * temp * kd
        loss, _ = loss_grads(
            zt, zs, labels, PART64, DistillConfig(temp, lam, mask), "incremental"
        )
        assert abs(loss - oracle) <= 1e-12


def test_lambda_zero_reduces_to_plain_cross_entropy():
    rng = np.random.default_rng(44)
    n, d = 5, 10
    zt = rng.normal(size=(n, d))
    zs = rng.normal(size=(n, d))
    labels = rng.integers(1, d + 1, size=n)
    base_loss, base_grad = loss_grads(None, zs, labels, PART64, None, "base")
    for mask in (False, True):
        cfg = DistillConfig(temperature=2.0, lambda_kd=0.0, mask_enabled=mask)
        loss, grad = loss_grads(zt, zs, labels, PART64, cfg, "incremental")
        assert loss == base_loss
        assert grad.tobytes() == base_grad.tobytes()


def test_loss_grads_validation():
    zs = np.zeros((2, 10))
    labels = np.array([1, 2])
    with pytest.raises(ValidationError):
        loss_grads(None, np.zeros(10), labels, PART64, None, "base")
    with pytest.raises(ValidationError):
        loss_grads(None, np.zeros((2, 4)), labels, PART64, None, "base")
    with pytest.raises(ValidationError):
        loss_grads(None, zs, np.array([0, 2]), PART64, None, "base")
    with pytest.raises(ValidationError):
        loss_grads(None, zs, labels, PART64, None, "warmup")
    with pytest.raises(ValidationError):
        loss_grads(None, zs, labels, PART64, None, "incremental")  # no config
    cfg = DistillConfig(2.0, 1.0, True)
    with pytest.raises(ValidationError):
        loss_grads(None, zs, labels, PART64, cfg, "incremental")  # no teacher
    with pytest.raises(ValidationError):
        loss_grads(np.zeros((3, 10)), zs, labels, PART64, cfg, "incremental")


def test_distill_config_validation():
    with pytest.raises(ValidationError):
        DistillConfig(temperature=0.0)
    with pytest.raises(ValidationError):
        DistillConfig(lambda_kd=-0.1)
