"""Negative log-likelihood of the covariance model and its gradient.

    f(gamma) = log|Sigma| + tr(Sigma^{-1} Sigma_hat),
    Sigma    = S diag(gamma) S^H + sigma_w_sq I.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack

log = logging.getLogger(__name__)


class StaleStateError(RuntimeError):
    """A CovarianceState was used after its gamma vector changed."""


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    pass


class GammaVector:
    """Nonnegative length-NQ vector with a mutation counter.

    Entries are addressed by flat index or by ``(n, q)`` pair. Every write
    bumps :attr:`version`, which lets a :class:`CovarianceState` detect that
    it no longer describes the vector it was built from.
    """

    __slots__ = ("_values", "Q", "version")

    def __init__(self, values, Q: int = 1):
        values = np.array(values, dtype=float).ravel()
        if np.any(values < 0):
            raise ValueError("gamma must be entrywise nonnegative")
        if values.size % Q:
            raise ValueError("length must be a multiple of Q")
        self._values = values
        self.Q = Q
        self.version = 0

    @classmethod
    def zeros(cls, N: int, Q: int = 1) -> "GammaVector":
        return cls(np.zeros(N * Q), Q)

    @property
    def values(self) -> np.ndarray:
        view = self._values.view()
        view.flags.writeable = False
        return view

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self._values > 0)

    def _flat(self, idx):
        if isinstance(idx, tuple) and len(idx) == 2:
            n, q = idx
            return n * self.Q + q
        return idx

    def __getitem__(self, idx):
        return self._values[self._flat(idx)]

    def __setitem__(self, idx, value):
        value = np.asarray(value, dtype=float)
        if np.any(value < 0):
            raise ValueError("gamma must be entrywise nonnegative")
        self._values[self._flat(idx)] = value
        self.version += 1

    def __len__(self):
        return self._values.size

    def __array__(self, dtype=None, copy=None):
        return self._values.astype(dtype) if dtype is not None else self._values.copy()

    def as_matrix(self) -> np.ndarray:
        """Values reshaped to (N, Q)."""
        return self._values.reshape(-1, self.Q).copy()


def _hermitian_from_lower(T: np.ndarray) -> np.ndarray:
    low = np.tril(T)
    return low + np.tril(T, -1).conj().T


@dataclass(frozen=True, eq=False)
class CovarianceState:
    """Factorized Sigma(gamma) plus the two matrices the gradient needs.

    ``A`` is Sigma^{-1} and ``B`` is Sigma^{-1} Sigma_hat Sigma^{-1}.
    """

    sigma: np.ndarray
    chol: np.ndarray
    A: np.ndarray
    B: np.ndarray
    gamma_snapshot: np.ndarray
    source: GammaVector | None = None
    version: int = 0

    @property
    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol).real)))

    def check_fresh(self):
        if self.source is not None and self.source.version != self.version:
            raise StaleStateError(
                f"state built at gamma version {self.version}, gamma is now at {self.source.version}")


def build_state(S: np.ndarray, gamma, sigma_hat: np.ndarray, sigma_w_sq: float) -> CovarianceState:
    """Assemble and factor Sigma(gamma) from the support of gamma only."""
    if not sigma_w_sq > 0:
        raise ValueError("sigma_w_sq must be positive")
    source = gamma if isinstance(gamma, GammaVector) else None
    g = np.array(gamma, dtype=float).ravel()
    if g.size != S.shape[1]:
        raise ValueError(f"gamma has {g.size} entries, S has {S.shape[1]} columns")
    if np.any(g < 0):
        raise ValueError("gamma must be entrywise nonnegative")

    L = S.shape[0]
    sup = np.flatnonzero(g)
    Ss = S[:, sup]
    sigma = (Ss * g[sup]) @ Ss.conj().T
    sigma = 0.5 * (sigma + sigma.conj().T)
    sigma[np.diag_indices(L)] += sigma_w_sq

    chol, info = lapack.zpotrf(sigma, lower=1, clean=1)
    if info != 0:
        raise NotPositiveDefiniteError(f"Cholesky failed (info={info}); Sigma is not positive definite")
    inv_low, info = lapack.zpotri(chol, lower=1)
    if info != 0:
        raise NotPositiveDefiniteError(f"inverse from Cholesky failed (info={info})")
    A = _hermitian_from_lower(inv_low)
    B = A @ sigma_hat @ A
    B = 0.5 * (B + B.conj().T)
    return CovarianceState(sigma=sigma, chol=chol, A=A, B=B, gamma_snapshot=g,
                           source=source, version=source.version if source is not None else 0)


def evaluate(state: CovarianceState, sigma_hat: np.ndarray) -> float:
    """log|Sigma| + tr(Sigma^{-1} Sigma_hat)."""
    # tr(A X) for Hermitian A, X is sum(A * X^T); X^T = conj(X)
    trace = float(np.sum(state.A * sigma_hat.conj()).real)
    return state.logdet + trace


def gradient(state: CovarianceState, S: np.ndarray, indices=None) -> np.ndarray:
    """Partial derivatives s^H A s - s^H B s over ``indices`` (all if None).

    Costs O(|indices| L^2).
    """
    state.check_fresh()
    cols = S if indices is None else S[:, indices]
    D = state.A - state.B
    return np.einsum("ij,ij->j", cols.conj(), D @ cols).real


def kkt_residual(gamma, grad_full) -> float:
    """Euclidean norm of [gamma - grad]_+ - gamma."""
    gamma = np.asarray(gamma, dtype=float)
    return float(np.linalg.norm(np.maximum(gamma - grad_full, 0.0) - gamma))


def objective(S, gamma, sigma_hat, sigma_w_sq) -> float:
    """Convenience: f(gamma) from scratch."""
    return evaluate(build_state(S, gamma, sigma_hat, sigma_w_sq), sigma_hat)


def objective_and_gradient(S, gamma, sigma_hat, sigma_w_sq, indices=None):
    state = build_state(S, gamma, sigma_hat, sigma_w_sq)
    return evaluate(state, sigma_hat), gradient(state, S, indices), state


class TraceWriter:
    """CSV lines ``k,active,f,kkt,elapsed`` for per-iteration diagnostics."""

    header = "k,active_size,objective,kkt,elapsed_s"

    def __init__(self, stream):
        self.stream = stream
        self.stream.write(self.header + "\n")

    def __call__(self, k, active_size, f, kkt, elapsed):
        self.stream.write(f"{k},{active_size},{f:.12g},{kkt:.6g},{elapsed:.6f}\n")
