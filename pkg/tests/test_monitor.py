import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from fcvi.errors import ContractError, MonitorInconclusive
from fcvi.monitor import (ClassCase, MonitorThresholds, classify_case, compute_report,
                          estimate_R, per_class_deltas, ratio_scalar, summarize_ratios)
from fcvi.nn_core import backward, init_params, set_output_row, sgd_step


def test_per_class_deltas():
    p = init_params(3, 4, 3, seed=0)
    assert all(np.all(d.delta == 0) for d in per_class_deltas(p, p))
    q = set_output_row(p, 1, np.ones(5))
    ds = per_class_deltas(p, q)
    assert [bool(np.any(d.delta != 0)) for d in ds] == [False, True, False]
    g = backward(p, np.ones((2, 3)), [0, 2])
    r = sgd_step(p, g, 0.01)
    for l, d in enumerate(per_class_deltas(p, r)):
        expected = -0.01 * np.append(g.output_weights[l], g.output_bias[l])
        np.testing.assert_allclose(d.delta, expected, atol=1e-15)
    with pytest.raises(ContractError):
        per_class_deltas(p, init_params(3, 5, 3, 0))


def test_ratio_scalar_examples():
    v = np.array([0.5, -1.0, 2.0])
    assert ratio_scalar(v, v, 1e-9) == 1.0
    assert ratio_scalar(v, 2 * v, 1e-9) == 2.0
    assert ratio_scalar(np.zeros(3), v, 1e-9) is None
    assert ratio_scalar(v, -v, 1e-9) == -1.0
    with pytest.raises(ContractError):
        ratio_scalar(v, v[:2], 1e-9)


def test_estimate_R_examples():
    assert estimate_R(1.0, 3, 3) == 1.0
    assert estimate_R(0.5, 2, 4) == 1.0
    assert estimate_R(None, 2, 4) is None
    with pytest.raises(ContractError):
        estimate_R(1.0, 0, 1)


@pytest.mark.parametrize("R,case", [
    (2.0, ClassCase.INCREASE), (0.0, ClassCase.VANISHED), (None, ClassCase.NEW),
    (0.5, ClassCase.DECREASE), (1.03, ClassCase.STEADY), (0.049, ClassCase.VANISHED),
    (-0.3, ClassCase.NEW),
])
def test_classify_case(R, case):
    assert classify_case(R) is case


def test_classify_rejects_overlapping_thresholds():
    with pytest.raises(ContractError):
        classify_case(1.0, eps_zero=0.6, eps_steady=0.5)


def test_mu_worked_example():
    rep = summarize_ratios([0.5, 2.0], 4, 4)
    assert rep.r_min == 0.5
    assert rep.mu.tolist() == [1.0, 0.25]


def test_all_steady_gives_unit_mu():
    rep = summarize_ratios([1.0, 1.0, 1.0], 5, 5)
    assert rep.mu.tolist() == [1.0, 1.0, 1.0]
    assert all(c is ClassCase.STEADY for c in rep.cases)


def test_vanished_and_new_get_unit_mu():
    rep = summarize_ratios([0.0, None, 0.5, 1.5], 4, 5)
    assert rep.mu.tolist() == [1.0, 1.0, 1.0, 1 / 3]
    assert rep.vanished == [0]


def test_inconclusive_carries_fallback_report():
    with pytest.raises(MonitorInconclusive) as exc:
        summarize_ratios([0.0, None], 2, 1)
    rep = exc.value.report
    assert rep.mu.tolist() == [1.0, 1.0] and rep.vanished == [0] and rep.r_min is None


def _rows(rng, L=4, s=6):
    # positive part for own-class signal, nonpositive elsewhere
    return rng.uniform(-1, 1, (L, s + 1)) + 0.5


def test_compute_report_presence_rules():
    rng = np.random.default_rng(0)
    P = _rows(rng)
    C = 2 * P
    P[3] = -np.abs(P[3])          # class 3 absent in the earlier round
    C[1] = -0.2 * np.abs(C[1])    # class 1 absent now
    rep = compute_report(P, C, 4, 4)
    assert rep.cases[1] is ClassCase.VANISHED and rep.ratios[1] == 0.0
    assert rep.cases[3] is ClassCase.NEW and rep.ratios[3] is None
    assert rep.cases[0] is ClassCase.INCREASE and rep.ratios[0] == pytest.approx(2.0)
    assert rep.mu[1] == rep.mu[3] == 1.0


def test_compute_report_reversed_direction_is_flagged():
    rng = np.random.default_rng(1)
    P = _rows(rng)
    C = P.copy()
    P[2] = np.ones(7)
    C[2] = np.append(-np.ones(6), 0.5)  # has own signal but points the other way
    rep = compute_report(P, C, 3, 3)
    assert rep.ratios[2] < 0
    assert rep.reversed_classes == (2,) and rep.cases[2] is ClassCase.NEW
    assert rep.mu[2] == 1.0 and 2 not in rep.vanished


def test_report_json_shape():
    rep = summarize_ratios([0.5, 2.0, None], 4, 5)
    js = rep.to_json()
    assert js["R"][2] is None and js["cases"] == ["decrease", "increase", "new"]
    assert js["k_prev"] == 4 and js["k_curr"] == 5


def test_thresholds_validation():
    with pytest.raises(ContractError):
        MonitorThresholds(eps_zero=-1)
    with pytest.raises(ContractError):
        MonitorThresholds(eps_zero=0.5, eps_steady=0.6)


deltas = st.integers(0, 2**31).map(lambda s: np.random.default_rng(s).uniform(-1, 1, (5, 7)) + 0.3)


@settings(max_examples=1000, deadline=None)
@given(P=deltas, C=deltas, c=st.floats(1e-3, 1e3), kp=st.integers(1, 8), kc=st.integers(1, 8))
def test_scale_invariance(P, C, c, kp, kc):
    try:
        a = compute_report(P, C, kp, kc)
        b = compute_report(c * P, c * C, kp, kc)
    except MonitorInconclusive:
        with pytest.raises(MonitorInconclusive):
            compute_report(c * P, c * C, kp, kc)
        return
    assert a.cases == b.cases
    for x, y in zip(a.ratios, b.ratios):
        assert (x is None and y is None) or x == pytest.approx(y, rel=1e-9, abs=1e-12)
    np.testing.assert_allclose(a.mu, b.mu, rtol=1e-9)
    assert a.r_min == pytest.approx(b.r_min, rel=1e-9)


@settings(max_examples=1000, deadline=None)
@given(R=st.lists(st.one_of(st.none(), st.just(0.0), st.floats(0.06, 10.0)),
                  min_size=2, max_size=8))
def test_mu_ordering_and_bounds(R):
    assume(any(r is not None and r > 0.05 for r in R))
    rep = summarize_ratios(R, 3, 3)
    pos = [l for l, c in enumerate(rep.cases) if c.positive]
    for p in pos:
        assert 0 < rep.mu[p] <= 1.0
        for q in pos:
            if rep.ratios[p] <= rep.ratios[q]:
                assert rep.mu[p] >= rep.mu[q]
    argmin = min(pos, key=lambda l: rep.ratios[l])
    assert rep.mu[argmin] == 1.0


def test_doubling_k_curr_doubles_R_keeps_mu():
    rng = np.random.default_rng(4)
    P, C = _rows(rng), _rows(rng)
    a, b = compute_report(P, C, 3, 3), compute_report(P, C, 3, 6)
    for x, y, ca in zip(a.ratios, b.ratios, a.cases):
        if ca.positive and x is not None:
            assert y == pytest.approx(2 * x)
    pos = [l for l in range(4) if a.cases[l].positive and b.cases[l].positive]
    np.testing.assert_allclose(a.mu[pos], b.mu[pos])
