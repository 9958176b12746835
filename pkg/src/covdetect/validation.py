"""Oracle suites: analytic gradient vs finite differences, CD steps vs a 1-D search.

Both suites draw small random instances so the dense and multiprecision
references stay cheap.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model, objective, oracles, solvers


@dataclass
class CheckSummary:
    name: str
    count: int
    worst: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.count > 0 and self.worst < self.tolerance

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.count} checks, worst {self.worst:.3e} (tol {self.tolerance:.0e})"


def random_small_instance(rng: np.random.Generator, L: int, N: int, Q: int, M: int = 64,
                          K: int | None = None, sigma_w_sq: float = 1.0, g: float = 1.0):
    K = max(1, N // 4) if K is None else K
    cfg = model.SystemConfig(N=N, Q=Q, L=L, M=M, K=K, sigma_w_sq=sigma_w_sq, g=g)
    return model.generate_instance(cfg, rng.integers(2**63))


def _random_gamma(rng, n, density=0.5, scale=1.0):
    return np.where(rng.random(n) < density, scale * rng.exponential(size=n), 0.0)


def gradient_check(n_instances: int = 50, seed: int = 0, step: float = 1e-6) -> CheckSummary:
    """Worst relative error ||g - g_fd|| / ||g_fd|| over random interior points."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        L = int(rng.integers(4, 31))
        Q = int(rng.integers(1, 4))
        N = int(rng.integers(2, 60 // Q + 1))
        inst = random_small_instance(rng, L, N, Q, K=max(1, N // 3))
        s2 = inst.cfg.sigma_w_sq
        # strictly positive so central differences never leave the domain
        gamma = rng.exponential(size=N * Q) + 1e-3
        state = objective.build_state(inst.S, gamma, inst.sigma_hat, s2)
        g = objective.gradient(state, inst.S)
        fd = np.array([oracles.central_difference(inst.S, gamma, inst.sigma_hat, s2, j, step)
                       for j in range(N * Q)])
        worst = max(worst, float(np.linalg.norm(g - fd) / np.linalg.norm(fd)))
    return CheckSummary("gradient vs central differences", n_instances, worst, 1e-5)


def cd_line_check(n_coords: int = 200, seed: int = 0, tol: float = 1e-8) -> tuple[CheckSummary, int]:
    """Worst |d_closed_form - d_line_search| and the number of boundary steps seen."""
    rng = np.random.default_rng(seed)
    worst, done, boundary = 0.0, 0, 0
    while done < n_coords:
        L = int(rng.integers(2, 5))
        N, Q = int(rng.integers(2, 5)), 2
        inst = random_small_instance(rng, L, N, Q, M=int(rng.integers(4, 40)), K=1)
        gamma = _random_gamma(rng, N * Q, scale=float(rng.choice([0.1, 1.0, 5.0])))
        state = objective.build_state(inst.S, gamma, inst.sigma_hat, 1.0)
        for j in rng.permutation(N * Q)[:4]:
            s = inst.S[:, j]
            a = float(np.vdot(s, state.A @ s).real)
            b = float(np.vdot(s, state.B @ s).real)
            d = solvers.cd_step(a, b, gamma[j])
            ref = oracles.CoordinateLine(inst.S, gamma, inst.sigma_hat, 1.0, j, dps=30).minimize(1e-10)
            worst = max(worst, abs(d - ref))
            boundary += bool(gamma[j] > 0 and d == -gamma[j])
            done += 1
    return CheckSummary("CD step vs 1-D line search", done, worst, tol), boundary
