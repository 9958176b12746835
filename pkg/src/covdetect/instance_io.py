"""Binary instance container and CSV export.

Layout (all little-endian)::

    b"COVD1"
    uint32 N, Q, L, M
    float64 sigma_w_sq
    float64[L * N*Q * 2]   S, row-major, (real, imag) interleaved
    float64[L * L * 2]     Sigma_hat, same layout
    float64[N*Q]           gamma_true (real)
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"COVD1"
_HEADER = struct.Struct("<5sIIIId")


class ContainerError(ValueError):
    pass


@dataclass(frozen=True)
class InstanceFile:
    N: int
    Q: int
    L: int
    M: int
    sigma_w_sq: float
    S: np.ndarray
    sigma_hat: np.ndarray
    gamma_true: np.ndarray


def _complex_to_bytes(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<c16").view("<f8").tobytes()


def write_instance(path, S, sigma_hat, gamma_true, *, N, Q, M, sigma_w_sq) -> None:
    S = np.asarray(S)
    L = S.shape[0]
    if S.shape != (L, N * Q) or np.shape(sigma_hat) != (L, L) or np.size(gamma_true) != N * Q:
        raise ContainerError("array shapes do not match the header dimensions")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, N, Q, L, M, float(sigma_w_sq)))
        fh.write(_complex_to_bytes(S))
        fh.write(_complex_to_bytes(sigma_hat))
        fh.write(np.ascontiguousarray(gamma_true, dtype="<f8").tobytes())


def read_instance(path) -> InstanceFile:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ContainerError("file too short for header")
    magic, N, Q, L, M, s2 = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ContainerError(f"bad magic {magic!r}")
    nq = N * Q
    sizes = (L * nq * 2, L * L * 2, nq)
    expected = _HEADER.size + 8 * sum(sizes)
    if len(data) != expected:
        raise ContainerError(f"expected {expected} bytes, found {len(data)}")
    flat = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    a, b = sizes[0], sizes[0] + sizes[1]
    S = flat[:a].view("<c16").reshape(L, nq).astype(complex)
    sigma_hat = flat[a:b].view("<c16").reshape(L, L).astype(complex)
    gamma = flat[b:].astype(float)
    return InstanceFile(N=N, Q=Q, L=L, M=M, sigma_w_sq=s2, S=S, sigma_hat=sigma_hat, gamma_true=gamma)


def write_gamma_csv(path, gamma, Q: int) -> None:
    """One row per (device, sequence): ``device,sequence,gamma`` (0-based)."""
    gamma = np.asarray(gamma, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["device", "sequence", "gamma"])
        for j, val in enumerate(gamma):
            w.writerow([j // Q, j % Q, repr(float(val))])
