import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from covdetect import model, objective, oracles
from covdetect.objective import GammaVector, StaleStateError


def test_zero_gamma_state():
    rng = np.random.default_rng(0)
    S = model.complex_normal(rng, (4, 6))
    X = model.complex_normal(rng, (4, 9))
    shat = X @ X.conj().T / 9
    s2 = 0.7
    st_ = objective.build_state(S, np.zeros(6), shat, s2)
    np.testing.assert_allclose(st_.sigma, s2 * np.eye(4))
    np.testing.assert_allclose(st_.A, np.eye(4) / s2)
    np.testing.assert_allclose(st_.B, shat / s2 ** 2, rtol=1e-12)
    f = objective.evaluate(st_, shat)
    assert f == pytest.approx(4 * np.log(s2) + np.trace(shat).real / s2, rel=1e-13)


def test_single_column_state_and_values():
    S = np.array([[1.0], [0.0]], dtype=complex)
    st_ = objective.build_state(S, np.array([1.0]), np.eye(2), 1.0)
    np.testing.assert_allclose(st_.sigma, np.diag([2.0, 1.0]))
    assert objective.evaluate(objective.build_state(S, [0.0], np.eye(2), 1.0), np.eye(2)) == pytest.approx(2.0)
    g = objective.gradient(objective.build_state(S, [0.0], np.diag([2.0, 1.0]), 1.0), S)
    assert g[0] == pytest.approx(-1.0)


def test_state_reconstruction_and_dense_agreement(small):
    rng = np.random.default_rng(5)
    gamma = np.where(rng.random(40) < 0.3, rng.exponential(size=40), 0.0)
    st_ = objective.build_state(small.S, gamma, small.sigma_hat, 1.0)
    Sig = model.model_covariance(small.S, gamma, 1.0)
    rel = np.linalg.norm(st_.chol @ st_.chol.conj().T - Sig) / np.linalg.norm(Sig)
    assert rel < 1e-10
    for M in (st_.A, st_.B):
        np.testing.assert_array_equal(M, M.conj().T)
    f = objective.evaluate(st_, small.sigma_hat)
    assert f == pytest.approx(oracles.dense_objective(small.S, gamma, small.sigma_hat, 1.0), rel=1e-10)
    np.testing.assert_allclose(objective.gradient(st_, small.S),
                               oracles.dense_gradient(small.S, gamma, small.sigma_hat, 1.0),
                               rtol=1e-9, atol=1e-10)


def test_restricted_gradient_matches_full(small):
    gamma = np.linspace(0, 1, 40)
    st_ = objective.build_state(small.S, gamma, small.sigma_hat, 1.0)
    full = objective.gradient(st_, small.S)
    idx = np.array([3, 17, 0, 39])
    np.testing.assert_allclose(objective.gradient(st_, small.S, idx), full[idx])


def test_gradient_zero_when_model_is_exact(small):
    gamma = np.abs(np.sin(np.arange(40.0)))
    Sig = model.model_covariance(small.S, gamma, 1.0)
    st_ = objective.build_state(small.S, gamma, Sig, 1.0)
    assert np.max(np.abs(objective.gradient(st_, small.S))) < 1e-10


def test_gradient_vs_finite_differences(small):
    rng = np.random.default_rng(2)
    gamma = rng.exponential(size=40) + 0.01
    g = objective.gradient(objective.build_state(small.S, gamma, small.sigma_hat, 1.0), small.S)
    for j in rng.choice(40, 8, replace=False):
        fd = oracles.central_difference(small.S, gamma, small.sigma_hat, 1.0, j)
        assert abs(g[j] - fd) <= 1e-5 * max(abs(fd), 1e-3)


def test_stale_state_rejected(small):
    gv = GammaVector.zeros(20, 2)
    st_ = objective.build_state(small.S, gv, small.sigma_hat, 1.0)
    objective.gradient(st_, small.S)
    gv[3, 1] = 0.5
    assert gv[7] == 0.5
    with pytest.raises(StaleStateError):
        objective.gradient(st_, small.S)


def test_gamma_vector_rules():
    with pytest.raises(ValueError):
        GammaVector([1.0, -1.0])
    gv = GammaVector([0.0, 2.0, 0.0, 1.0], Q=2)
    np.testing.assert_array_equal(gv.support, [1, 3])
    with pytest.raises(ValueError):
        gv[0] = -1.0
    with pytest.raises(ValueError):
        gv.values[0] = 1.0
    assert gv.as_matrix().shape == (2, 2)


def test_invalid_noise_rejected(small):
    with pytest.raises(ValueError):
        objective.build_state(small.S, np.zeros(40), small.sigma_hat, 0.0)
    with pytest.raises(ValueError):
        objective.build_state(small.S, -np.ones(40), small.sigma_hat, 1.0)


@pytest.mark.parametrize("gamma,grad,expected", [
    ([0.0, 0.0], [1.0, 2.0], 0.0),
    ([0.0, 0.0, 0.0], [-3.0, 0.0, 0.0], 3.0),
    ([1.0, 0.0], [0.0, 2.0], 0.0),
])
def test_kkt_examples(gamma, grad, expected):
    assert objective.kkt_residual(np.array(gamma), np.array(grad)) == pytest.approx(expected)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 40), st.integers(-40, 40)), min_size=1, max_size=20))
def test_kkt_zero_iff_entrywise_conditions(pairs):
    # quarter-integers keep gamma - grad exact
    gamma = np.array([p[0] for p in pairs]) / 4.0
    grad = np.array([p[1] for p in pairs]) / 4.0
    r = objective.kkt_residual(gamma, grad)
    entrywise = np.all(np.where(gamma > 0, grad == 0, grad >= 0))
    assert (r == 0) == entrywise


def test_objective_permutation_invariant(small):
    rng = np.random.default_rng(3)
    gamma = rng.exponential(size=40)
    perm = rng.permutation(20)
    cols = (perm[:, None] * 2 + np.arange(2)).ravel()
    f1 = objective.objective(small.S, gamma, small.sigma_hat, 1.0)
    f2 = objective.objective(small.S[:, cols], gamma[cols], small.sigma_hat, 1.0)
    assert f1 == pytest.approx(f2, rel=1e-12)


def test_lower_bound_attained_at_exact_covariance(small):
    rng = np.random.default_rng(4)
    gstar = rng.exponential(size=40)
    shat = model.model_covariance(small.S, gstar, 1.0)
    bound = shat.shape[0] + np.linalg.slogdet(shat)[1]
    assert objective.objective(small.S, gstar, shat, 1.0) == pytest.approx(bound, rel=1e-12)
    for _ in range(10):
        assert objective.objective(small.S, rng.exponential(size=40), shat, 1.0) >= bound


def test_trace_writer_format():
    buf = io.StringIO()
    tw = objective.TraceWriter(buf)
    tw(0, 5, 1.5, 0.25, 0.001)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "k,active_size,objective,kkt,elapsed_s"
    assert lines[1].split(",")[:2] == ["0", "5"]
