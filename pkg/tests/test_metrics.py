import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fcvi.errors import ContractError
from fcvi.metrics import ConfusionMatrix, compute_metrics, confusion, evaluate


def test_confusion_hand_tally():
    truths = [0, 0, 0, 0, 1, 1, 1, 1, 1, 1]
    preds = [0, 0, 0, 1, 0, 1, 1, 1, 1, 1]
    np.testing.assert_array_equal(confusion(preds, truths, 2).counts, [[3, 1], [1, 5]])


def test_confusion_diagonal_and_empty():
    cm = confusion([0, 1, 2, 2], [0, 1, 2, 2], 3)
    assert np.count_nonzero(cm.counts - np.diag(np.diag(cm.counts))) == 0
    assert confusion([], [], 3).counts.sum() == 0


def test_confusion_rejects_bad_input():
    with pytest.raises(ContractError):
        confusion([0, 1], [0], 2)
    with pytest.raises(ContractError):
        confusion([0, 2], [0, 1], 2)


def test_metrics_on_hand_tally():
    m = compute_metrics(ConfusionMatrix(np.array([[3, 1], [1, 5]])))
    assert abs(m.accuracy - 0.8) <= 1e-12
    np.testing.assert_allclose(m.precision, [3 / 4, 5 / 6], atol=1e-12)
    np.testing.assert_allclose(m.recall, [3 / 4, 5 / 6], atol=1e-12)
    np.testing.assert_allclose(m.f1, [3 / 4, 5 / 6], atol=1e-12)
    assert abs(m.macro_f1 - 19 / 24) <= 1e-12


def test_diagonal_and_antidiagonal():
    m = compute_metrics(ConfusionMatrix(np.diag([4, 2, 7])))
    assert m.accuracy == m.macro_precision == m.macro_recall == m.macro_f1 == 1.0
    anti = compute_metrics(ConfusionMatrix(np.array([[0, 3], [5, 0]])))
    assert anti.accuracy == 0.0 and anti.macro_f1 == 0.0


def test_zero_denominators_score_zero():
    # class 2 is never predicted and never present
    m = compute_metrics(ConfusionMatrix(np.array([[2, 0, 0], [0, 3, 0], [0, 0, 0]])))
    assert m.precision[2] == 0.0 and m.recall[2] == 0.0 and m.f1[2] == 0.0


def test_empty_matrix_rejected():
    with pytest.raises(ContractError):
        compute_metrics(ConfusionMatrix(np.zeros((2, 2), dtype=int)))


def test_f1_forms_agree_on_random_matrices():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        L = int(rng.integers(2, 8))
        C = rng.integers(0, 20, (L, L))
        C[0, 0] += 1
        m = compute_metrics(ConfusionMatrix(C))
        P, R = np.array(m.precision), np.array(m.recall)
        harmonic = np.where(P + R > 0, 2 * P * R / np.where(P + R > 0, P + R, 1), 0.0)
        assert np.max(np.abs(harmonic - np.array(m.f1))) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**31))
def test_accuracy_invariant_under_relabeling(seed):
    rng = np.random.default_rng(seed)
    L = int(rng.integers(2, 6))
    C = rng.integers(0, 10, (L, L))
    C[0, 0] += 1
    perm = rng.permutation(L)
    a = compute_metrics(ConfusionMatrix(C))
    b = compute_metrics(ConfusionMatrix(C[np.ix_(perm, perm)]))
    assert a.accuracy == b.accuracy
    f1, P, R = np.array(a.f1), np.array(a.precision), np.array(a.recall)
    assert np.all(f1 <= np.maximum(P, R) + 1e-12) and np.all(f1 >= np.minimum(P, R) - 1e-12)
    assert all(0.0 <= v <= 1.0 for v in (a.accuracy, a.macro_precision, a.macro_recall, a.macro_f1))


def test_evaluate_and_json():
    rec = evaluate([0, 1, 1], [0, 1, 0], 2).to_json()
    assert rec["accuracy"] == pytest.approx(2 / 3)
    assert set(rec["per_class"]) == {"precision", "recall", "f1"}
