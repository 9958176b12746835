import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from covdetect import detection, model


def truth(N=10, K=4, Q=2, g=1.0, seed=0):
    cfg = model.SystemConfig(N=N, Q=Q, L=4, M=4, K=K, sigma_w_sq=1.0, g=g)
    return model.sample_activity(cfg, np.random.default_rng(seed))


def test_exact_recovery_from_truth():
    t = truth(g=0.3)
    det = detection.detect(t.gamma_true, detection.default_threshold(0.3), 2)
    np.testing.assert_array_equal(det.chi, t.chi)
    rep = detection.score(det, t.chi)
    assert (rep.missed, rep.false_alarm, rep.data_error) == (0, 0, 0)


def test_zero_gamma_all_inactive():
    det = detection.detect(np.zeros(20), 0.5, 2)
    assert not det.active.any() and np.all(det.q_hat == -1)


def test_argmax_row():
    det = detection.detect(np.array([0.4, 0.6]), 0.5, 2)
    assert det.active[0] and det.q_hat[0] == 1


def test_ties_pick_first():
    det = detection.detect(np.array([0.7, 0.7]), 0.5, 2)
    assert det.q_hat[0] == 0


def test_negative_threshold_rejected():
    with pytest.raises(ValueError):
        detection.detect(np.zeros(2), -1.0, 2)


def test_false_alarms_and_misses():
    chi = np.zeros((10, 2), dtype=int)
    gh = np.zeros(20)
    gh[[0, 4, 8]] = 1.0
    rep = detection.score(detection.detect(gh, 0.5, 2), chi)
    assert rep.false_alarm == 3 and rep.false_alarm_rate == 0.3
    t = truth(K=4)
    rep = detection.score(detection.detect(np.zeros(20), 0.5, 2), t.chi)
    assert rep.missed == 4 and rep.missed_rate == 1.0 and rep.device_error_rate == 0.4


def test_data_error_counted():
    chi = np.zeros((3, 2), dtype=int)
    chi[1, 0] = 1
    gh = np.zeros(6)
    gh[3] = 1.0
    rep = detection.score(detection.detect(gh, 0.5, 2), chi)
    assert (rep.missed, rep.false_alarm, rep.data_error) == (0, 0, 1)
    assert set(rep.to_dict()) >= {"missed", "device_error_rate"}


def test_shape_mismatch():
    with pytest.raises(ValueError):
        detection.score(detection.detect(np.zeros(6), 0.5, 2), np.zeros((4, 2)))


@settings(max_examples=100, deadline=None)
@given(arrays(float, 12, elements=st.floats(0, 5)), st.floats(0.01, 3), st.floats(0.1, 10))
def test_scale_consistency(gh, theta, c):
    a = detection.detect(gh, theta, 3)
    b = detection.detect(c * gh, c * theta, 3)
    # scaling can push a value onto the threshold only through rounding
    close = np.isclose(gh.reshape(4, 3).max(axis=1), theta, rtol=1e-12)
    np.testing.assert_array_equal(a.active[~close], b.active[~close])
    np.testing.assert_array_equal(a.q_hat[~close], b.q_hat[~close])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_permutation_keeps_counts(seed):
    rng = np.random.default_rng(seed)
    t = truth(N=12, K=5, seed=seed)
    gh = t.gamma_true + rng.choice([0.0, 1.0], size=24, p=[0.85, 0.15])
    perm = rng.permutation(12)
    det = detection.detect(gh, 0.5, 2)
    detp = detection.detect(gh.reshape(12, 2)[perm].ravel(), 0.5, 2)
    np.testing.assert_array_equal(detp.active, det.active[perm])
    a, b = detection.score(det, t.chi), detection.score(detp, t.chi[perm])
    assert a == b
