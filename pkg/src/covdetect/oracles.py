"""Independent reference computations used to validate the fast paths.

Nothing here shares code with :mod:`covdetect.objective` or the solvers:
the objective is evaluated with an explicit dense inverse and ``slogdet``
(or in multiprecision), derivatives by finite differences and 1-D minima by
golden-section search.
"""
from __future__ import annotations

import math

import mpmath
import numpy as np

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def dense_objective(S, gamma, sigma_hat, sigma_w_sq) -> float:
    """log|Sigma| + tr(Sigma^{-1} Sigma_hat) via slogdet and inv.

    Accepts slightly negative gamma as long as Sigma stays positive definite,
    which central differences at the boundary need.
    """
    Sigma = (S * np.asarray(gamma, dtype=float)) @ S.conj().T + sigma_w_sq * np.eye(S.shape[0])
    sign, logdet = np.linalg.slogdet(Sigma)
    if sign.real <= 0:
        raise ValueError("Sigma is not positive definite")
    return float(logdet + np.trace(np.linalg.inv(Sigma) @ sigma_hat).real)


def dense_gradient(S, gamma, sigma_hat, sigma_w_sq) -> np.ndarray:
    Sigma = (S * np.asarray(gamma, dtype=float)) @ S.conj().T + sigma_w_sq * np.eye(S.shape[0])
    Ainv = np.linalg.inv(Sigma)
    V = Ainv @ S
    return (np.sum(S.conj() * V, axis=0) - np.sum(V.conj() * (sigma_hat @ V), axis=0)).real


def central_difference(S, gamma, sigma_hat, sigma_w_sq, index, step=1e-6) -> float:
    e = np.zeros(S.shape[1])
    e[index] = step
    g = np.asarray(gamma, dtype=float)
    fp = dense_objective(S, g + e, sigma_hat, sigma_w_sq)
    fm = dense_objective(S, g - e, sigma_hat, sigma_w_sq)
    return (fp - fm) / (2.0 * step)


def golden_section(fun, lo: float, hi: float, tol: float = 1e-12, max_iter: int = 500) -> float:
    """Minimizer of a unimodal ``fun`` on [lo, hi]."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


class CoordinateLine:
    """f(gamma + d e_j) in extended precision, for checking CD step sizes.

    Double precision cannot locate a smooth minimum better than about
    sqrt(eps) relative, so the line function is evaluated with mpmath.
    """

    def __init__(self, S, gamma, sigma_hat, sigma_w_sq, index, dps: int = 40):
        self.ctx = mpmath.MPContext()
        self.ctx.dps = dps
        mpf, mpc = self.ctx.mpf, self.ctx.mpc
        L = S.shape[0]
        g = np.asarray(gamma, dtype=float)
        M = self.ctx.matrix(L, L)
        for i in range(L):
            M[i, i] = mpf(sigma_w_sq)
        for col in np.flatnonzero(g):
            s = [mpc(complex(z)) for z in S[:, col]]
            w = mpf(float(g[col]))
            for i in range(L):
                for k in range(L):
                    M[i, k] += w * s[i] * self.ctx.conj(s[k])
        self.sigma = M
        self.s = [mpc(complex(z)) for z in S[:, index]]
        self.shat = self.ctx.matrix([[mpc(complex(sigma_hat[i, k])) for k in range(L)] for i in range(L)])
        self.L = L
        self.gamma_j = float(g[index])

    def __call__(self, d: float):
        ctx, L, s = self.ctx, self.L, self.s
        d = ctx.mpf(d)
        M = self.sigma.copy()
        for i in range(L):
            for k in range(L):
                M[i, k] += d * s[i] * ctx.conj(s[k])
        logdet = ctx.log(ctx.re(ctx.det(M)))
        X = ctx.inverse(M) * self.shat
        return logdet + ctx.re(sum(X[i, i] for i in range(L)))

    def minimize(self, tol: float = 1e-12) -> float:
        """Golden-section minimizer over d >= -gamma_j, bracket grown by doubling."""
        lo = -self.gamma_j
        f = lambda d: float(self(d))  # noqa: E731
        step = 1.0
        while f(lo + 2.0 * step) < f(lo + step):
            step *= 2.0
            if step > 1e12:
                raise RuntimeError("objective not bounded along the coordinate")
        return golden_section(self, lo, lo + 2.0 * step, tol=tol)
