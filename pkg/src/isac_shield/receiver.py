"""Per-bin TF receive filters and the TF -> range-Doppler transform."""

from __future__ import annotations

from enum import Enum

import numpy as np


class FilterKind(str, Enum):
    LMMSE = "lmmse"
    MF = "mf"
    ZF = "zf"
    RF = "rf"  # reciprocal filter, 1/x per bin (same form as ZF)


class SingularFilterError(ZeroDivisionError):
    pass


def per_bin_filter(x: np.ndarray, kind: FilterKind | str, noise_var: float = 0.0) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    kind = FilterKind(kind)
    p = np.abs(x) ** 2
    if kind is FilterKind.MF:
        return x.conj()
    if kind is FilterKind.LMMSE:
        denom = p + noise_var
        if np.any(denom == 0):
            raise SingularFilterError("LMMSE filter undefined for zero bin with zero noise")
        return x.conj() / denom
    if np.any(p == 0):
        raise SingularFilterError(f"{kind.value} filter hits a zero TF bin")
    return x.conj() / p


def estimate_channel(r: np.ndarray, g: np.ndarray) -> np.ndarray:
    return np.asarray(g) * np.asarray(r)


def to_rd_map(h: np.ndarray) -> np.ndarray:
    """``F_M^H H F_N``.

    ``RD[l, k] = (MN)^-1/2 sum_{m,n} H[m, n] exp(j2pi(m l/M - n k/N))``:
    inverse DFT over subcarriers, forward DFT over slots.
    """
    h = np.asarray(h)
    return np.fft.fft(np.fft.ifft(h, axis=-2, norm="ortho"), axis=-1, norm="ortho")


def response_grid(x: np.ndarray, kind: FilterKind | str, noise_var: float = 0.0) -> np.ndarray:
    """Noise-free filter output for a unit target at lag zero, ``G * X``."""
    return estimate_channel(np.asarray(x), per_bin_filter(x, kind, noise_var))


def filter_response(x: np.ndarray, kind: FilterKind | str, noise_var: float = 0.0) -> np.ndarray:
    """RD response of the receive filter to a unit target at (0, 0).

    For the matched filter this is the waveform's ambiguity function on the
    integer delay-Doppler grid.
    """
    return to_rd_map(response_grid(x, kind, noise_var))


def process(r: np.ndarray, reference: np.ndarray, kind: FilterKind | str, noise_var: float = 0.0) -> np.ndarray:
    """Filter a received grid against ``reference`` and return its RD map."""
    return to_rd_map(estimate_channel(r, per_bin_filter(reference, kind, noise_var)))
