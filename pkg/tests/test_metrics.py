"""Evaluation statistics against independently coded formula oracles.

The oracles below use different algebraic forms than the implementation
(e.g. kappa via N*trace - sum(row*col) rather than p_o/p_e), so agreement is
a genuine cross-check rather than the same code twice.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hsikd.errors import UndefinedKappaError, ValidationError
from hsikd.metrics import (
    aggregate,
    average_accuracy,
    confuse,
    format_mean_std,
    kappa,
    overall_accuracy,
    per_class_accuracy,
)


def oa_oracle(cm):
    cm = np.asarray(cm, dtype=np.float64)
    return 100.0 * sum(cm[i, i] for i in range(cm.shape[0])) / cm.sum()


def aa_oracle(cm):
    cm = np.asarray(cm, dtype=np.float64)
    recalls = [cm[i, i] / cm[i].sum() for i in range(cm.shape[0])]
    return 100.0 * sum(recalls) / len(recalls)


def kappa_oracle(cm):
    cm = np.asarray(cm, dtype=np.float64)
    n = cm.sum()
    diag = sum(cm[i, i] for i in range(cm.shape[0]))
    marg = sum(cm[i].sum() * cm[:, i].sum() for i in range(cm.shape[0]))
    return 100.0 * (n * diag - marg) / (n * n - marg)


def random_confusion(rng):
    n = int(rng.integers(2, 9))
    cm = rng.integers(0, 50, size=(n, n))
    cm[np.arange(n), np.arange(n)] += 1  # every class keeps at least one sample
    return cm


def test_metrics_match_oracles_on_random_matrices():
    rng = np.random.default_rng(7)
    for _ in range(100):
        cm = random_confusion(rng)
        assert abs(overall_accuracy(cm) - oa_oracle(cm)) <= 1e-10
        assert abs(average_accuracy(cm) - aa_oracle(cm)) <= 1e-10
        assert abs(kappa(cm) - kappa_oracle(cm)) <= 1e-10


def test_per_class_accuracy_matches_rows():
    cm = np.array([[8, 2], [1, 9]])
    acc = per_class_accuracy(cm)
    assert acc == {1: 80.0, 2: 90.0}


def test_kappa_of_balanced_coin_is_exactly_zero():
    assert kappa([[25, 25], [25, 25]]) == 0.0


def test_diagonal_matrix_scores_100():
    cm = np.diag([3, 7, 11])
    assert overall_accuracy(cm) == 100.0
    assert average_accuracy(cm) == 100.0
    assert kappa(cm) == 100.0


def test_kappa_single_cell_is_undefined():
    with pytest.raises(UndefinedKappaError):
        kappa([[5]])


def test_confuse_counts_by_true_row_predicted_column():
    cm = confuse([1, 1, 2, 3], [1, 2, 2, 3], n_classes=3)
    assert cm.tolist() == [[1, 1, 0], [0, 1, 0], [0, 0, 1]]


def test_confuse_rejects_bad_labels():
    with pytest.raises(ValidationError):
        confuse([0, 1], [1, 1], n_classes=2)
    with pytest.raises(ValidationError):
        confuse([1, 2], [1, 3], n_classes=2)
    with pytest.raises(ValidationError):
        confuse([1, 2], [1], n_classes=2)


def test_empty_class_row_is_an_error():
    cm = np.array([[5, 0], [0, 0]])
    with pytest.raises(ValidationError):
        average_accuracy(cm)
    with pytest.raises(ValidationError):
        per_class_accuracy(cm)


def test_matrix_validation():
    with pytest.raises(ValidationError):
        overall_accuracy(np.zeros((2, 3), dtype=int))
    with pytest.raises(ValidationError):
        overall_accuracy(np.zeros((2, 2), dtype=int))
    with pytest.raises(ValidationError):
        overall_accuracy(np.array([[1, -1], [0, 1]]))


def test_aggregate_uses_population_std():
    values = [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]
    mean, std = aggregate(values)
    assert mean == np.mean(values)
    assert abs(std - np.std(values)) <= 1e-12  # numpy default is 1/n
    assert aggregate([3.5]) == (3.5, 0.0)


def test_format_mean_std_two_decimals():
    assert format_mean_std(98.47, 0.65) == "98.47±0.65"
    assert format_mean_std(98.466, 0.654) == "98.47±0.65"
    assert format_mean_std(100.0, 0.0) == "100.00±0.00"


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**31 - 1))
def test_metrics_invariant_under_class_relabeling(seed):
    # permuting class ids permutes rows and columns together; OA/AA/kappa
    # must not care what the classes are called
    rng = np.random.default_rng(seed)
    cm = random_confusion(rng)
    perm = rng.permutation(cm.shape[0])
    pcm = cm[np.ix_(perm, perm)]
    assert abs(overall_accuracy(cm) - overall_accuracy(pcm)) <= 1e-12
    assert abs(average_accuracy(cm) - average_accuracy(pcm)) <= 1e-12
    assert abs(kappa(cm) - kappa(pcm)) <= 1e-12
