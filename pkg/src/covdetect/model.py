"""Uplink random-access system model: signatures, activity, channels, noise.

All draws are circularly-symmetric complex Gaussian with E[|x|^2] equal to
the stated variance (real and imaginary parts each carry half of it).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

STREAMS = ("signatures", "activity", "channel", "noise")


@dataclass(frozen=True)
class SystemConfig:
    """Dimensions and link parameters of one random-access block.

    ``g`` is either a scalar shared by all devices or a length-N vector.
    ``sigma_w_sq`` is the noise power normalized by the transmit power.
    """

    N: int
    Q: int
    L: int
    M: int
    K: int
    sigma_w_sq: float
    g: float | np.ndarray = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("N", "Q", "L", "M"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0 <= self.K <= self.N:
            raise ValueError(f"K must satisfy 0 <= K <= N, got K={self.K}, N={self.N}")
        if not self.sigma_w_sq > 0:
            raise ValueError("sigma_w_sq must be positive")
        g = np.asarray(self.g, dtype=float)
        if g.ndim not in (0, 1) or (g.ndim == 1 and g.shape[0] != self.N):
            raise ValueError("g must be a scalar or a length-N vector")
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise ValueError("g must be finite and nonnegative")

    @property
    def n_columns(self) -> int:
        return self.N * self.Q

    def gains(self) -> np.ndarray:
        """Per-device large-scale gain as a length-N vector."""
        return np.broadcast_to(np.asarray(self.g, dtype=float), (self.N,)).copy()


@dataclass(frozen=True)
class TruthAssignment:
    """Ground-truth sequence selection ``chi`` (N x Q) and the implied gamma."""

    chi: np.ndarray
    gamma_true: np.ndarray

    @property
    def active_devices(self) -> np.ndarray:
        return np.flatnonzero(self.chi.sum(axis=1))

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.chi.ravel())


@dataclass(frozen=True)
class Instance:
    """A fully generated problem: what the receiver sees plus the truth."""

    cfg: SystemConfig
    S: np.ndarray
    truth: TruthAssignment
    Y: np.ndarray | None
    sigma_hat: np.ndarray
    extras: dict = field(default_factory=dict)


def complex_normal(rng: np.random.Generator, shape, var: float = 1.0) -> np.ndarray:
    """Draw CN(0, var) entries."""
    scale = np.sqrt(var / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def rng_streams(seed) -> dict[str, np.random.Generator]:
    """Split one seed into independent named generators.

    ``seed`` may be an int, a sequence of ints or a ``SeedSequence``.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return {name: np.random.default_rng(child) for name, child in zip(STREAMS, ss.spawn(len(STREAMS)))}


def generate_signatures(cfg: SystemConfig, rng: np.random.Generator) -> np.ndarray:
    """L x NQ matrix of i.i.d. CN(0, 1) signatures; column n*Q + q is s_{n,q}."""
    return complex_normal(rng, (cfg.L, cfg.N * cfg.Q))


def sample_activity(cfg: SystemConfig, rng: np.random.Generator) -> TruthAssignment:
    if cfg.K > cfg.N:
        raise ValueError("K must not exceed N")
    chi = np.zeros((cfg.N, cfg.Q), dtype=np.int8)
    active = np.sort(rng.choice(cfg.N, size=cfg.K, replace=False))
    chosen = rng.integers(cfg.Q, size=cfg.K)
    chi[active, chosen] = 1
    gamma_true = (cfg.gains()[:, None] * chi).ravel()
    return TruthAssignment(chi=chi, gamma_true=gamma_true)


def simulate_received(
    S: np.ndarray,
    truth: TruthAssignment,
    cfg: SystemConfig,
    rng_channel: np.random.Generator,
    rng_noise: np.random.Generator | None = None,
    *,
    noise_var: float | None = None,
) -> np.ndarray:
    """Received block Y = sum_n sum_q chi_{n,q} s_{n,q} sqrt(g_n) h_n^T + W.

    Rayleigh vectors ``h_n`` are drawn only for active devices, in increasing
    device order. ``noise_var`` overrides ``cfg.sigma_w_sq`` (0 gives the
    noiseless block, useful for structural checks).
    """
    S = np.asarray(S)
    if S.shape != (cfg.L, cfg.N * cfg.Q):
        raise ValueError(f"S has shape {S.shape}, expected {(cfg.L, cfg.N * cfg.Q)}")
    if truth.chi.shape != (cfg.N, cfg.Q):
        raise ValueError(f"chi has shape {truth.chi.shape}, expected {(cfg.N, cfg.Q)}")
    if rng_noise is None:
        rng_noise = rng_channel
    var = cfg.sigma_w_sq if noise_var is None else float(noise_var)
    if var < 0:
        raise ValueError("noise variance must be nonnegative")

    devices, seqs = np.nonzero(truth.chi)
    H = complex_normal(rng_channel, (devices.size, cfg.M))
    amp = np.sqrt(cfg.gains()[devices])
    Y = S[:, devices * cfg.Q + seqs] @ (amp[:, None] * H)
    if var > 0:
        Y = Y + complex_normal(rng_noise, (cfg.L, cfg.M), var)
    else:
        Y = Y.astype(complex, copy=False)
    return Y


def sample_covariance(Y: np.ndarray) -> np.ndarray:
    """Y Y^H / M, symmetrized."""
    Y = np.asarray(Y)
    C = (Y @ Y.conj().T) / Y.shape[1]
    return 0.5 * (C + C.conj().T)


def model_covariance(S: np.ndarray, gamma: np.ndarray, sigma_w_sq: float) -> np.ndarray:
    """S diag(gamma) S^H + sigma_w_sq I."""
    return (S * gamma) @ S.conj().T + sigma_w_sq * np.eye(S.shape[0])


def generate_instance(cfg: SystemConfig, seed=None, *, keep_signal: bool = False) -> Instance:
    """Draw signatures, activity, channels and noise from one seed."""
    streams = rng_streams(cfg.seed if seed is None else seed)
    S = generate_signatures(cfg, streams["signatures"])
    truth = sample_activity(cfg, streams["activity"])
    Y = simulate_received(S, truth, cfg, streams["channel"], streams["noise"])
    return Instance(cfg=cfg, S=S, truth=truth, Y=Y if keep_signal else None,
                    sigma_hat=sample_covariance(Y))


# --- link budget -----------------------------------------------------------

def pathloss_db(distance_m: float) -> float:
    """Default macro-cell path loss 128.1 + 37.6 log10(d / 1 km)."""
    return 128.1 + 37.6 * np.log10(distance_m / 1000.0)


def noise_power_dbm(noise_psd_dbm_hz: float, bandwidth_hz: float) -> float:
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth must be positive")
    return noise_psd_dbm_hz + 10.0 * np.log10(bandwidth_hz)


def gain_from_link_budget(tx_power_dbm: float, noise_psd_dbm_hz: float,
                          bandwidth_hz: float, pathloss_db: float) -> tuple[float, float]:
    """Return ``(g, sigma_w_sq)`` with noise normalized by the transmit power."""
    noise = noise_power_dbm(noise_psd_dbm_hz, bandwidth_hz)
    sigma_w_sq = 10.0 ** ((noise - tx_power_dbm) / 10.0)
    g = 10.0 ** (-pathloss_db / 10.0)
    return float(g), float(sigma_w_sq)


def noise_normalized(g, sigma_w_sq: float):
    """Rescale ``(g, sigma_w_sq)`` so the noise variance is 1.

    The likelihood is equivariant under a joint rescaling of gamma and the
    noise, but absolute stopping tolerances are not, so solvers are run in
    these units.
    """
    return np.asarray(g, dtype=float) / sigma_w_sq if np.ndim(g) else float(g) / sigma_w_sq, 1.0


def cell_edge_link_budget(distance_m: float = 1000.0, *, normalize: bool = True):
    """Cell-edge link budget: 25 dBm transmit, -169 dBm/Hz over 10 MHz."""
    g, s2 = gain_from_link_budget(25.0, -169.0, 10e6, pathloss_db(distance_m))
    return noise_normalized(g, s2) if normalize else (g, s2)
