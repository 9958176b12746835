"""Solvers for min f(gamma) s.t. gamma >= 0.

* :func:`active_set_pg` -- outer loop selecting a small working set of
  coordinates and solving the restricted problem with spectral PG.
* :func:`spectral_pg` -- nonmonotone projected gradient with alternating
  Barzilai-Borwein steps.
* :func:`coordinate_descent` -- random-permutation CD with closed-form
  coordinate minimization and rank-one inverse updates.
* :func:`oracle_solve` -- either method restricted to a known support.
"""
from __future__ import annotations

import logging
import time
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import blas, cho_solve, lapack

from .objective import (
    CovarianceState,
    NotPositiveDefiniteError,
    build_state,
    evaluate,
    gradient,
    kkt_residual,
)

log = logging.getLogger(__name__)


# --- configuration ---------------------------------------------------------

@dataclass(frozen=True)
class PgConfig:
    alpha_min: float = 1e-10
    alpha_max: float = 1e10
    window: int = 10
    delta: float = 1e-4
    shrink: float = 0.5
    max_inner: int = 5000

    def __post_init__(self):
        if not 0 < self.alpha_min < self.alpha_max:
            raise ValueError("need 0 < alpha_min < alpha_max")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must lie in (0, 1)")
        if self.max_inner < 1:
            raise ValueError("max_inner must be >= 1")


def _omega_default(k: int) -> float:
    return 10.0 ** (-6 - k)


def _nu_default(k: int, grad: np.ndarray) -> float:
    return min(10.0 ** (4 - k), 0.5 * abs(float(np.min(grad))))


def _eps_default(k: int) -> float:
    return max(10.0 ** (-k), 0.8e-3)


@dataclass(frozen=True)
class ActiveSetSchedule:
    """Per-iteration thresholds of the active-set loop.

    ``nu`` receives the full gradient at the current point so that
    data-dependent rules can be expressed.
    """

    omega: Callable[[int], float] = _omega_default
    nu: Callable[[int, np.ndarray], float] = _nu_default
    eps_k: Callable[[int], float] = _eps_default
    eps: float = 1e-3
    max_outer: int = 50

    def check(self, horizon: int = 40, grad_probe: np.ndarray | None = None):
        """Check the decay hypotheses on the first ``horizon`` terms."""
        probe = np.array([-1e6]) if grad_probe is None else grad_probe
        om = np.array([self.omega(k) for k in range(horizon)])
        nu = np.array([self.nu(k, probe) for k in range(horizon)])
        ek = np.array([self.eps_k(k) for k in range(horizon)])
        if not (np.all(om > 0) and np.all(np.diff(om) < 0)):
            raise ValueError("omega_k must be positive and strictly decreasing")
        if not (np.all(nu > 0) and np.all(np.diff(nu) <= 0)):
            raise ValueError("nu_k must be positive and nonincreasing")
        if not (np.all(ek > 0) and ek[-1] < self.eps):
            raise ValueError("eps_k must be positive with a tail below eps")
        if self.eps <= 0 or self.max_outer < 1:
            raise ValueError("eps must be positive and max_outer >= 1")
        return self


@dataclass
class SolveResult:
    gamma: np.ndarray
    objective: float
    kkt: float
    converged: bool
    method: str
    outer_iters: int = 0
    inner_iters_total: int = 0
    active_set_sizes: list[int] = field(default_factory=list)
    wall_time: float = 0.0
    message: str = ""

    def to_dict(self, include_gamma: bool = True) -> dict:
        d = asdict(self)
        d["gamma"] = self.gamma.tolist() if include_gamma else None
        return d


@dataclass
class PgResult:
    x: np.ndarray
    objective: float
    residual: float
    iterations: int
    evaluations: int
    converged: bool


# --- restricted objective evaluators ---------------------------------------

def hermitian_sqrt_factor(sigma_hat: np.ndarray) -> np.ndarray:
    """R with R R^H = sigma_hat (negative rounding eigenvalues clipped)."""
    w, U = np.linalg.eigh(sigma_hat)
    keep = w > 0
    return U[:, keep] * np.sqrt(w[keep])


class _FullSpaceObjective:
    """f and gradient over the columns of S_sub via an L x L Cholesky factor.

    With Sigma = C C^H, Sigma_hat = R R^H, Z = C^-1 R and w_i = C^-1 s_i:

        f      = log|Sigma| + ||Z||_F^2
        grad_i = ||w_i||^2 - ||Z^H w_i||^2
    """

    def __init__(self, S_sub, sigma_hat, sigma_w_sq, root=None):
        self.S = np.asfortranarray(S_sub)
        self.L = S_sub.shape[0]
        self.s2 = sigma_w_sq
        self.R = hermitian_sqrt_factor(sigma_hat) if root is None else root
        self._chol = self._Z = None

    def value(self, x) -> float:
        sup = np.flatnonzero(x)
        Sig = blas.zherk(1.0, np.asfortranarray(self.S[:, sup] * np.sqrt(x[sup])), lower=1)
        Sig[np.diag_indices(self.L)] += self.s2
        chol, info = lapack.zpotrf(Sig, lower=1, clean=1, overwrite_a=1)
        if info != 0:
            raise NotPositiveDefiniteError(f"Cholesky failed (info={info})")
        Z, info = lapack.ztrtrs(chol, self.R, lower=1)
        self._chol, self._Z = chol, Z
        logdet = 2.0 * np.sum(np.log(np.diag(chol).real))
        return float(logdet + np.sum(Z.real ** 2 + Z.imag ** 2))

    def grad(self) -> np.ndarray:
        W = blas.ztrsm(1.0, self._chol, self.S, lower=1)
        V = self._Z.conj().T @ W
        return (W.real ** 2 + W.imag ** 2).sum(0) - (V.real ** 2 + V.imag ** 2).sum(0)


class _ReducedSpaceObjective:
    """Same function computed in the p-dimensional column space of S_sub.

    With D = diag(sqrt(x)), G = S^H S, P = S^H Sigma_hat S and
    C = s2 I + D G D, the matrix inversion lemma gives

        log|Sigma|           = (L - p) log s2 + log|C|
        tr(Sigma^-1 Sigma_hat) = (tr Sigma_hat - tr(D C^-1 D P)) / s2
        Sigma^-1 S           = S T / s2,  T = I - D C^-1 D G

    so each evaluation is O(p^3) instead of O(L^3 + p L^2). Worth it when p < L.
    """

    def __init__(self, S_sub, sigma_hat, sigma_w_sq):
        self.L, self.p = S_sub.shape
        self.s2 = sigma_w_sq
        self.G = S_sub.conj().T @ S_sub
        self.P = S_sub.conj().T @ (sigma_hat @ S_sub)
        self.G = 0.5 * (self.G + self.G.conj().T)
        self.P = 0.5 * (self.P + self.P.conj().T)
        self.trace_hat = float(np.trace(sigma_hat).real)
        self._W = None

    def value(self, x) -> float:
        r = np.sqrt(x)
        C = (r[:, None] * self.G) * r[None, :]
        C[np.diag_indices(self.p)] += self.s2
        chol, info = lapack.zpotrf(C, lower=1, clean=1)
        if info != 0:
            raise NotPositiveDefiniteError(f"reduced Cholesky failed (info={info})")
        W = r[:, None] * cho_solve((chol, True), np.diag(r).astype(complex))
        self._W = W
        logdet = (self.L - self.p) * np.log(self.s2) + 2.0 * np.sum(np.log(np.diag(chol).real))
        trace = (self.trace_hat - float(np.sum(W * self.P.T).real)) / self.s2
        return float(logdet + trace)

    def grad(self) -> np.ndarray:
        G, W = self.G, self._W
        WG = W @ G
        a = np.diag(G).real - np.einsum("ij,ji->i", G, WG).real
        T = -WG
        T[np.diag_indices(self.p)] += 1.0
        b = np.einsum("ji,ji->i", T.conj(), self.P @ T).real
        return a / self.s2 - b / self.s2 ** 2


def _restricted_objective(S_sub, sigma_hat, sigma_w_sq, reduced: bool | None = None, root=None):
    if reduced is None:
        reduced = S_sub.shape[1] < S_sub.shape[0]
    if reduced:
        return _ReducedSpaceObjective(S_sub, sigma_hat, sigma_w_sq)
    return _FullSpaceObjective(S_sub, sigma_hat, sigma_w_sq, root)


# --- spectral projected gradient -------------------------------------------

def _initial_step(g, cfg: PgConfig) -> float:
    gmax = float(np.max(np.abs(g)))
    return min(max(1.0 / gmax, cfg.alpha_min), cfg.alpha_max) if gmax > 0 else cfg.alpha_max


def _proj_residual(x, g) -> float:
    return float(np.linalg.norm(np.maximum(x - g, 0.0) - x))


def spectral_pg(S_sub, sigma_hat, sigma_w_sq, gamma_init, eps_k, cfg: PgConfig = PgConfig(),
                *, reduced: bool | None = None, root=None, on_accept=None) -> PgResult:
    """Nonmonotone spectral projected gradient on the restricted problem.

    Iterates ``x+ = x + lam * ([x - alpha g]_+ - x)``, with ``lam = 1`` first
    and shrunk until the nonmonotone sufficient-decrease test

        f(x+) <= max(last `window` f values) - delta * <g, x - x+>

    holds. ``alpha`` alternates BB1 (odd steps) and BB2 (even steps), clipped
    to ``[alpha_min, alpha_max]``. When the curvature estimate <dx, dg> is not
    positive the step restarts at 1 / ||g||_inf, the same rule as the first
    step. Stops once the projected-gradient residual drops below ``eps_k``;
    on hitting ``max_inner`` the lowest-objective iterate is returned.

    ``on_accept(f_new, f_ref, decrease)`` is called at every accepted step,
    where ``decrease = <g, x - x+>``; tests use it to audit the line search.
    """
    obj = _restricted_objective(S_sub, sigma_hat, sigma_w_sq, reduced, root)
    x = np.maximum(np.asarray(gamma_init, dtype=float).copy(), 0.0)
    if x.size == 0:
        f0 = _FullSpaceObjective(S_sub, sigma_hat, sigma_w_sq, root).value(x)
        return PgResult(x, f0, 0.0, 0, 1, True)

    f = obj.value(x)
    g = obj.grad()
    n_eval = 1
    res = _proj_residual(x, g)
    if res < eps_k:
        return PgResult(x, f, res, 0, n_eval, True)

    alpha = _initial_step(g, cfg)
    history = deque([f], maxlen=cfg.window)
    best = (f, x, res)

    it = 0
    converged = False
    while it < cfg.max_inner:
        it += 1
        d = np.maximum(x - alpha * g, 0.0) - x
        gtd = float(g @ d)
        f_ref = max(history)
        lam = 1.0
        while True:
            x_new = x + lam * d
            f_new = obj.value(x_new)
            n_eval += 1
            if f_new <= f_ref + cfg.delta * lam * gtd:
                break
            lam *= cfg.shrink
            if lam < 1e-30:
                break
        if f_new > f_ref + cfg.delta * lam * gtd:
            log.debug("line search stalled at inner iteration %d", it)
            break
        np.maximum(x_new, 0.0, out=x_new)
        if on_accept is not None:
            on_accept(f_new, f_ref, -lam * gtd)
        g_new = obj.grad()

        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy <= 0:
            # nonpositive curvature: restart the step scale from the gradient
            alpha = _initial_step(g_new, cfg)
        else:
            alpha = float(s @ s) / sy if it % 2 == 1 else sy / float(y @ y)
            alpha = min(max(alpha, cfg.alpha_min), cfg.alpha_max)

        x, f, g = x_new, f_new, g_new
        history.append(f)
        res = _proj_residual(x, g)
        if f < best[0]:
            best = (f, x, res)
        if res < eps_k:
            converged = True
            break

    if not converged:
        f, x, res = best
    return PgResult(x, f, res, it, n_eval, converged)


def projected_gradient(S, sigma_hat, sigma_w_sq, eps=1e-3, cfg: PgConfig = PgConfig(),
                       gamma_init=None) -> SolveResult:
    """Spectral PG over all columns of S, started from zero."""
    t0 = time.perf_counter()
    x0 = np.zeros(S.shape[1]) if gamma_init is None else gamma_init
    r = spectral_pg(S, sigma_hat, sigma_w_sq, x0, eps, cfg)
    wall = time.perf_counter() - t0
    return SolveResult(gamma=r.x, objective=r.objective, kkt=r.residual, converged=r.converged,
                       method="pg", outer_iters=1, inner_iters_total=r.iterations,
                       active_set_sizes=[S.shape[1]], wall_time=wall,
                       message="" if r.converged else "inner iteration cap reached")


# --- active-set loop -------------------------------------------------------

def select_active_set(gamma, grad_full, omega: float, nu: float) -> np.ndarray:
    """Indices with gamma > omega or grad < -nu, ascending."""
    gamma = np.asarray(gamma, dtype=float)
    return np.flatnonzero((gamma > omega) | (grad_full < -nu))


def active_set_pg(S, sigma_hat, sigma_w_sq, schedule: ActiveSetSchedule = ActiveSetSchedule(),
                  cfg: PgConfig = PgConfig(), *, trace=None) -> SolveResult:
    """Active-set spectral PG from gamma = 0.

    ``trace(k, active_size, f, kkt, elapsed)`` is called once per outer
    iteration when given.
    """
    t0 = time.perf_counter()
    NQ = S.shape[1]
    gamma = np.zeros(NQ)
    root = hermitian_sqrt_factor(sigma_hat)
    sizes: list[int] = []
    inner = 0
    k = 0
    message = ""
    while True:
        state = build_state(S, gamma, sigma_hat, sigma_w_sq)
        grad = gradient(state, S)
        f = evaluate(state, sigma_hat)
        res = kkt_residual(gamma, grad)
        if trace is not None:
            trace(k, sizes[-1] if sizes else 0, f, res, time.perf_counter() - t0)
        if res < schedule.eps:
            converged = True
            break
        if k >= schedule.max_outer:
            converged = False
            message = "outer iteration cap reached"
            break

        omega, nu = schedule.omega(k), schedule.nu(k, grad)
        active = select_active_set(gamma, grad, omega, nu)
        halvings = 0
        while active.size == 0 and halvings < 64 and nu > 0:
            nu *= 0.5
            halvings += 1
            active = select_active_set(gamma, grad, omega, nu)
        if active.size == 0:
            # nu cannot help when no gradient entry is negative
            active = np.flatnonzero((gamma > 0) | (grad < 0))
        if halvings:
            log.info("outer %d: empty active set, nu halved %d times", k, halvings)

        x0 = gamma[active]
        gamma[:] = 0.0
        sub = spectral_pg(S[:, active], sigma_hat, sigma_w_sq, x0, schedule.eps_k(k), cfg, root=root)
        gamma[active] = sub.x
        sizes.append(int(active.size))
        inner += sub.iterations
        k += 1

    wall = time.perf_counter() - t0
    return SolveResult(gamma=gamma, objective=f, kkt=res, converged=converged,
                       method="active_set_pg", outer_iters=k, inner_iters_total=inner,
                       active_set_sizes=sizes, wall_time=wall, message=message)


# --- coordinate descent ----------------------------------------------------

def cd_step(a: float, b: float, gamma_j: float) -> float:
    """Exact minimizer over d >= -gamma_j of log(1 + d a) - d b / (1 + d a).

    ``a = s^H Sigma^-1 s`` and ``b = s^H Sigma^-1 Sigma_hat Sigma^-1 s``; the
    function is f(gamma + d e_j) - f(gamma), unimodal on 1 + d a > 0.
    """
    return max((b - a) / (a * a), -gamma_j)


def cd_coordinate_update(state: CovarianceState, s: np.ndarray, gamma_j: float, sigma_hat,
                         index: int | None = None):
    """One exact coordinate step; returns ``(d, new_state)``.

    A and B are updated in O(L^2) by the rank-one inverse identity; the
    Cholesky factor of the new Sigma is recomputed. ``index`` locates the
    coordinate inside ``state.gamma_snapshot`` so the snapshot stays in step.
    """
    state.check_fresh()
    if gamma_j < 0:
        raise ValueError("gamma_j must be nonnegative")
    v = state.A @ s
    u = state.B @ s
    a = float(np.vdot(s, v).real)
    b = float(np.vdot(s, u).real)
    d = cd_step(a, b, gamma_j)
    snap = state.gamma_snapshot.copy()
    if index is not None:
        snap[index] = max(gamma_j + d, 0.0)
    if d == 0.0:
        return 0.0, CovarianceState(state.sigma, state.chol, state.A, state.B, snap)

    denom = 1.0 + d * a
    sigma = state.sigma + d * np.outer(s, s.conj())
    if denom <= 0:
        # infeasible step cannot get here; fall back to a fresh factorization
        log.warning("rank-one denominator %.3g <= 0, refactorizing", denom)
        return d, _state_from_sigma(sigma, sigma_hat, snap)
    c = d / denom
    # A' = A - c v v^H ;  B' = A' Sigma_hat A'
    A = state.A - c * np.outer(v, v.conj())
    B = (state.B - c * (np.outer(v, u.conj()) + np.outer(u, v.conj()))
         + c * c * b * np.outer(v, v.conj()))
    chol, info = lapack.zpotrf(sigma, lower=1, clean=1)
    if info != 0:
        raise NotPositiveDefiniteError("Sigma lost positive definiteness")
    return d, CovarianceState(sigma=sigma, chol=chol, A=A, B=B, gamma_snapshot=snap)


def _state_from_sigma(sigma, sigma_hat, snap) -> CovarianceState:
    chol, info = lapack.zpotrf(sigma, lower=1, clean=1)
    if info != 0:
        raise NotPositiveDefiniteError("Sigma is not positive definite")
    A = np.linalg.inv(sigma)
    A = 0.5 * (A + A.conj().T)
    return CovarianceState(sigma=sigma, chol=chol, A=A, B=A @ sigma_hat @ A, gamma_snapshot=snap)


def rank_one_update(Ainv: np.ndarray, v: np.ndarray, c: float) -> np.ndarray:
    """``Ainv + c v v^H``, in place when ``Ainv`` is Fortran-ordered complex."""
    return blas.zgerc(c, v, v, a=Ainv, overwrite_a=1)


def _fresh_inverse(S, gamma, sigma_hat, sigma_w_sq) -> np.ndarray:
    return np.asfortranarray(build_state(S, gamma, sigma_hat, sigma_w_sq).A)


def coordinate_descent(S, sigma_hat, sigma_w_sq, eps=1e-3, max_sweeps=500, rng=None, *,
                       refresh_every: int = 1000, on_update=None, trace=None) -> SolveResult:
    """Random-permutation coordinate descent from gamma = 0.

    Each sweep visits every coordinate once in a fresh random order and
    applies the closed-form step of :func:`cd_step`, keeping Sigma^-1 current
    with a BLAS rank-one update. The inverse is rebuilt from scratch every
    ``refresh_every`` updates and at the end of each sweep, where the KKT
    residual is measured from that fresh factorization.

    ``on_update(j, d, Ainv)`` sees every coordinate update (tests only; slow).
    """
    rng = np.random.default_rng(rng)
    t0 = time.perf_counter()
    NQ = S.shape[1]
    gamma = np.zeros(NQ)
    SF = np.asfortranarray(S)
    shat = np.ascontiguousarray(sigma_hat)
    Ainv = np.asfortranarray(np.eye(S.shape[0], dtype=complex) / sigma_w_sq)
    since_refresh = 0
    sweeps = 0
    converged = False
    message = ""

    state = build_state(S, gamma, sigma_hat, sigma_w_sq)
    res = kkt_residual(gamma, gradient(state, S))
    f = evaluate(state, sigma_hat)
    if res < eps:
        converged = True
    while not converged and sweeps < max_sweeps:
        for j in rng.permutation(NQ):
            s = SF[:, j]
            v = Ainv @ s
            a = np.vdot(s, v).real
            b = np.vdot(v, shat @ v).real
            d = max((b - a) / (a * a), -gamma[j])
            if d == 0.0:
                continue
            gamma[j] = max(gamma[j] + d, 0.0)
            denom = 1.0 + d * a
            if denom <= 0:
                Ainv = _fresh_inverse(S, gamma, sigma_hat, sigma_w_sq)
                since_refresh = 0
            else:
                Ainv = rank_one_update(Ainv, v, -d / denom)
                since_refresh += 1
                if since_refresh >= refresh_every:
                    Ainv = _fresh_inverse(S, gamma, sigma_hat, sigma_w_sq)
                    since_refresh = 0
            if on_update is not None:
                on_update(j, d, Ainv)
        sweeps += 1
        state = build_state(S, gamma, sigma_hat, sigma_w_sq)
        Ainv = np.asfortranarray(state.A)
        since_refresh = 0
        res = kkt_residual(gamma, gradient(state, S))
        f = evaluate(state, sigma_hat)
        if trace is not None:
            trace(sweeps, int(np.count_nonzero(gamma)), f, res, time.perf_counter() - t0)
        if res < eps:
            converged = True
    if not converged:
        message = "sweep cap reached"
    wall = time.perf_counter() - t0
    return SolveResult(gamma=gamma, objective=f, kkt=res, converged=converged, method="cd",
                       outer_iters=sweeps, inner_iters_total=sweeps * NQ,
                       active_set_sizes=[], wall_time=wall, message=message)


# --- oracle baselines ------------------------------------------------------

def oracle_solve(S, sigma_hat, sigma_w_sq, true_support, method: str = "pg", eps=1e-3, *,
                 rng=None, cfg: PgConfig = PgConfig(), max_sweeps: int = 500) -> SolveResult:
    """Solve the problem restricted to ``true_support`` (simulation only).

    The reported KKT residual is that of the restricted problem.
    """
    support = np.asarray(true_support, dtype=np.intp)
    NQ = S.shape[1]
    if support.size == 0:
        f = evaluate(build_state(S, np.zeros(NQ), sigma_hat, sigma_w_sq), sigma_hat)
        return SolveResult(gamma=np.zeros(NQ), objective=f, kkt=0.0, converged=True,
                           method=f"ideal_{method}")
    S_sub = S[:, support]
    if method == "pg":
        r = projected_gradient(S_sub, sigma_hat, sigma_w_sq, eps, cfg)
    elif method == "cd":
        r = coordinate_descent(S_sub, sigma_hat, sigma_w_sq, eps, max_sweeps, rng)
    else:
        raise ValueError(f"unknown method {method!r}")
    gamma = np.zeros(NQ)
    gamma[support] = r.gamma
    r.gamma = gamma
    r.method = f"ideal_{method}"
    return r


SOLVERS = ("active_set_pg", "cd", "ideal_pg", "ideal_cd", "pg")
