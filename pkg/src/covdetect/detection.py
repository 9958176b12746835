"""Turn an estimated gamma into per-device decisions and count errors."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class DetectionResult:
    """``active[n]`` flags device n; ``q_hat[n]`` is its 0-based sequence or -1."""

    active: np.ndarray
    q_hat: np.ndarray
    threshold: float
    Q: int = 1

    @property
    def chi(self) -> np.ndarray:
        Q = self.Q
        out = np.zeros((self.active.size, Q), dtype=np.int8)
        n = np.flatnonzero(self.active)
        out[n, self.q_hat[n]] = 1
        return out


@dataclass(frozen=True)
class ErrorReport:
    missed: int
    false_alarm: int
    data_error: int
    n_devices: int
    n_active: int

    @property
    def missed_rate(self) -> float:
        return self.missed / self.n_active if self.n_active else 0.0

    @property
    def false_alarm_rate(self) -> float:
        inactive = self.n_devices - self.n_active
        return self.false_alarm / inactive if inactive else 0.0

    @property
    def data_error_rate(self) -> float:
        detected = self.n_active - self.missed
        return self.data_error / detected if detected else 0.0

    @property
    def device_error_rate(self) -> float:
        """(missed + false alarms + data errors) / N."""
        return (self.missed + self.false_alarm + self.data_error) / self.n_devices

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(missed_rate=self.missed_rate, false_alarm_rate=self.false_alarm_rate,
                 data_error_rate=self.data_error_rate, device_error_rate=self.device_error_rate)
        return d


def detect(gamma_hat, theta: float, Q: int) -> DetectionResult:
    """Device n is active iff max_q gamma_hat[n, q] > theta; q_hat is the argmax.

    Ties go to the smallest q.
    """
    if theta < 0:
        raise ValueError("threshold must be nonnegative")
    G = np.asarray(gamma_hat, dtype=float).reshape(-1, Q)
    q_star = np.argmax(G, axis=1)
    active = G[np.arange(G.shape[0]), q_star] > theta
    return DetectionResult(active=active, q_hat=np.where(active, q_star, -1), threshold=float(theta), Q=Q)


def score(result: DetectionResult, chi_true) -> ErrorReport:
    """Compare decisions with the true N x Q selection matrix."""
    chi_true = np.asarray(chi_true)
    if chi_true.shape != (result.active.size, result.Q):
        raise ValueError(f"truth has shape {chi_true.shape}, decisions cover "
                         f"{(result.active.size, result.Q)}")
    truly_active = chi_true.sum(axis=1) > 0
    q_true = np.where(truly_active, np.argmax(chi_true, axis=1), -1)
    missed = int(np.sum(truly_active & ~result.active))
    false_alarm = int(np.sum(~truly_active & result.active))
    data_error = int(np.sum(truly_active & result.active & (result.q_hat != q_true)))
    return ErrorReport(missed=missed, false_alarm=false_alarm, data_error=data_error,
                       n_devices=int(chi_true.shape[0]), n_active=int(truly_active.sum()))


def default_threshold(g) -> float:
    """Half the nominal large-scale gain (mean gain when gains differ)."""
    return 0.5 * float(np.mean(g))
