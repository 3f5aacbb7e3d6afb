"""Perturbed OFDM/OTFS transmit signal synthesis in the time-frequency domain.

Vectors of length ``M*N`` map onto ``M x N`` grids column-major, with the
subcarrier (delay) index ``m`` running fastest, so ``w[n*M + m]`` is the
weight of TF bin ``(m, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class WaveformKind(str, Enum):
    OFDM = "ofdm"
    OTFS = "otfs"


class ConstellationKind(str, Enum):
    QAM16 = "qam16"
    QPSK = "qpsk"


# Gray-coded PAM levels for one 16QAM axis, index = 2-bit label.
_GRAY_PAM4 = np.array([-3.0, -1.0, 3.0, 1.0])


@dataclass(frozen=True)
class Constellation:
    kind: ConstellationKind
    points: np.ndarray

    @classmethod
    def make(cls, kind: ConstellationKind | str) -> "Constellation":
        kind = ConstellationKind(kind)
        if kind is ConstellationKind.QPSK:
            pts = np.array([1 + 1j, -1 + 1j, 1 - 1j, -1 - 1j]) / np.sqrt(2.0)
        else:
            # label b3b2b1b0 -> I from (b3, b2), Q from (b1, b0)
            labels = np.arange(16)
            i = _GRAY_PAM4[labels >> 2]
            q = _GRAY_PAM4[labels & 3]
            pts = (i + 1j * q) / np.sqrt(10.0)
        pts.setflags(write=False)
        return cls(kind, pts)


@dataclass(frozen=True)
class SymbolVector:
    data: np.ndarray
    constellation: Constellation

    def __len__(self) -> int:
        return self.data.size


@dataclass(frozen=True)
class PerturbationWeights:
    """Diagonal of the TF perturbation matrix, ``sum |w|^2 == M*N``."""

    w: np.ndarray

    def __len__(self) -> int:
        return self.w.size

    @property
    def power(self) -> float:
        return float(np.sum(np.abs(self.w) ** 2))

    @classmethod
    def ones(cls, size: int) -> "PerturbationWeights":
        return cls(np.ones(size, dtype=complex))

    def grid(self, M: int, N: int) -> np.ndarray:
        return unvec(self.w, M, N)


def vec(grid: np.ndarray) -> np.ndarray:
    return np.asarray(grid).reshape(-1, order="F")


def unvec(v: np.ndarray, M: int, N: int) -> np.ndarray:
    v = np.asarray(v)
    if v.size != M * N:
        raise ValueError(f"cannot reshape length {v.size} into {M}x{N}")
    return v.reshape(M, N, order="F")


def draw_symbols(
    constellation: Constellation | ConstellationKind | str,
    count: int,
    seed: int | np.random.Generator,
) -> SymbolVector:
    """Draw ``count`` i.i.d. uniform symbols from ``constellation``."""
    if count <= 0:
        raise ValueError("symbol count must be positive")
    if not isinstance(constellation, Constellation):
        constellation = Constellation.make(constellation)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, constellation.points.size, size=count)
    return SymbolVector(constellation.points[idx], constellation)


def dft_matrix(n: int) -> np.ndarray:
    """Unitary DFT matrix, ``F[k, i] = exp(-j 2 pi k i / n) / sqrt(n)``."""
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)


def modulation_transform(kind: WaveformKind | str, M: int, N: int) -> np.ndarray:
    """Dense ``MN x MN`` transform taking symbols to TF samples.

    OFDM is the identity; OTFS is the inverse symplectic finite Fourier
    transform ``kron(F_N^H, F_M)``. :func:`apply_transform` is the fast path.
    """
    if M < 1 or N < 1:
        raise ValueError("M and N must be >= 1")
    if WaveformKind(kind) is WaveformKind.OFDM:
        return np.eye(M * N, dtype=complex)
    return np.kron(dft_matrix(N).conj().T, dft_matrix(M))


def apply_transform(
    kind: WaveformKind | str, s: np.ndarray, M: int, N: int, adjoint: bool = False
) -> np.ndarray:
    """Apply ``U`` (or ``U^H``) to a length-``MN`` vector via FFTs."""
    s = np.asarray(s, dtype=complex)
    if WaveformKind(kind) is WaveformKind.OFDM:
        return s.copy()
    grid = unvec(s, M, N)
    if adjoint:
        out = np.fft.fft(np.fft.ifft(grid, axis=0, norm="ortho"), axis=1, norm="ortho")
    else:
        # kron(A, B) vec(X) = vec(B X A^T): DFT down columns, IDFT along rows
        out = np.fft.ifft(np.fft.fft(grid, axis=0, norm="ortho"), axis=1, norm="ortho")
    return vec(out)


def normalize_weights(w: np.ndarray, p_max: float | None = None) -> PerturbationWeights:
    """Scale ``w`` so its total power is ``p_max`` (default ``len(w)``)."""
    w = np.asarray(w, dtype=complex).ravel()
    power = float(np.sum(np.abs(w) ** 2))
    if power == 0.0 or not np.isfinite(power):
        raise ValueError("cannot normalize an all-zero or non-finite weight vector")
    target = float(w.size if p_max is None else p_max)
    return PerturbationWeights(w * np.sqrt(target / power))


def modulate(
    s: SymbolVector | np.ndarray,
    kind: WaveformKind | str,
    w: PerturbationWeights,
    M: int,
    N: int,
) -> np.ndarray:
    """Return the ``M x N`` TF grid ``vec^-1(W U s)``."""
    data = s.data if isinstance(s, SymbolVector) else np.asarray(s)
    if data.size != M * N or len(w) != M * N:
        raise ValueError(
            f"dimension mismatch: symbols {data.size}, weights {len(w)}, grid {M}x{N}"
        )
    return unvec(w.w * apply_transform(kind, data, M, N), M, N)


def to_time_domain(x_tf: np.ndarray) -> np.ndarray:
    """Per-slot IFFT ``(I_N kron F_M^H) vec(X)``; CP handling is not modelled."""
    return vec(np.fft.ifft(np.asarray(x_tf), axis=0, norm="ortho"))
