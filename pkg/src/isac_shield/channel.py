"""Communication, sensing and Eve direct-link channel models.

All channels use integer delay/Doppler bins. Sensing channels act per TF
bin (Hadamard product with the transmit grid); the communication channel
is an ``MN x MN`` matrix mapped into the symbol domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .waveform import WaveformKind, dft_matrix, modulation_transform


def _rng(seed: int | np.random.Generator) -> np.random.Generator:
    return np.random.default_rng(seed)


def crandn(rng: np.random.Generator, shape, var: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with variance ``var``."""
    scale = math.sqrt(var / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def _rician_split(kappa: float) -> tuple[float, float]:
    if kappa < 0:
        raise ValueError("Rician factor must be non-negative")
    if math.isinf(kappa):
        return 1.0, 0.0
    return math.sqrt(kappa / (kappa + 1.0)), math.sqrt(1.0 / (kappa + 1.0))


@dataclass(frozen=True)
class CommChannelSpec:
    alpha_c: complex = 1.0
    kappa_c: float = 10.0
    l_c: int = 2
    k_c: int = 3
    noise_var: float = 10 ** (-2.5)
    # "row": NLoS entries CN(0, 1/MN) so kappa_c is the LoS/NLoS power ratio;
    # "entry": NLoS entries CN(0, 1)
    nlos_scale: str = "row"

    def __post_init__(self):
        if self.kappa_c < 0:
            raise ValueError("kappa_c must be >= 0")
        if self.nlos_scale not in ("row", "entry"):
            raise ValueError("nlos_scale must be 'row' or 'entry'")
        if self.noise_var <= 0:
            raise ValueError("noise_var must be > 0")


@dataclass(frozen=True)
class Target:
    """One point target.

    ``alpha0`` is the standard deviation of the target coefficient as seen in
    the range-Doppler map; the TF-domain channel carries ``alpha / sqrt(MN)``
    so that an ideal filter returns ``alpha`` at the target's RD bin.
    """

    alpha0: float
    l: int
    k: int

    def __post_init__(self):
        if self.alpha0 < 0:
            raise ValueError("alpha0 must be >= 0")


@dataclass(frozen=True)
class TargetSet:
    bs_targets: tuple[Target, ...]
    eve_targets: tuple[Target, ...]
    desired_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "bs_targets", tuple(self.bs_targets))
        object.__setattr__(self, "eve_targets", tuple(self.eve_targets))
        if len(self.bs_targets) != len(self.eve_targets) or not self.bs_targets:
            raise ValueError("BS and Eve target lists must be non-empty and equal length")
        if not 0 <= self.desired_index < len(self.bs_targets):
            raise ValueError("desired_index out of range")

    def __len__(self) -> int:
        return len(self.bs_targets)

    def side(self, side: str) -> tuple[Target, ...]:
        return self.bs_targets if side.lower() == "bs" else self.eve_targets


@dataclass(frozen=True)
class EveDirectSpec:
    alpha_d: complex = 1.0
    kappa_e: float = 1.0
    l_d: int = 0
    k_d: int = 0
    noise_var: float = 1.0

    def __post_init__(self):
        if self.kappa_e < 0:
            raise ValueError("kappa_e must be >= 0")


def delay_shift_matrix(size: int, shift: int) -> np.ndarray:
    """Circular down-shift ``Pi^shift``: ``(Pi x)[i] = x[i - shift]``."""
    return np.roll(np.eye(size, dtype=complex), shift, axis=0)


def doppler_phase_matrix(size: int, shift: int) -> np.ndarray:
    return np.diag(np.exp(2j * np.pi * shift * np.arange(size) / size))


def comm_channel_matrix(spec: CommChannelSpec, M: int, N: int, seed) -> np.ndarray:
    """Time-domain Rician channel ``H_c`` (``MN x MN``)."""
    size = M * N
    los, nlos = _rician_split(spec.kappa_c)
    H = spec.alpha_c * los * (
        delay_shift_matrix(size, spec.l_c) @ doppler_phase_matrix(size, spec.k_c)
    )
    if nlos > 0:
        var = 1.0 / size if spec.nlos_scale == "row" else 1.0
        H = H + spec.alpha_c * nlos * crandn(_rng(seed), (size, size), var)
    return H


def comm_effective_channel(
    spec: CommChannelSpec, kind: WaveformKind | str, M: int, N: int, seed
) -> np.ndarray:
    """``U^H (I_N kron F_M) H_c (I_N kron F_M^H)`` in the symbol domain."""
    H = comm_channel_matrix(spec, M, N, seed)
    B = np.kron(np.eye(N), dft_matrix(M))
    U = modulation_transform(kind, M, N)
    return U.conj().T @ B @ H @ B.conj().T


def apply_comm_channel(
    H_eff: np.ndarray, x_precoded: np.ndarray, noise_var: float, seed
) -> np.ndarray:
    y = H_eff @ np.asarray(x_precoded)
    if noise_var > 0:
        y = y + crandn(_rng(seed), y.shape, noise_var)
    return y


def phase_grid(l: int, k: int, M: int, N: int) -> np.ndarray:
    """``psi(l)^H phi(k)``: ``exp(-j2pi m l/M) * exp(+j2pi n k/N)``."""
    m = np.arange(M)[:, None]
    n = np.arange(N)[None, :]
    return np.exp(-2j * np.pi * m * l / M) * np.exp(2j * np.pi * n * k / N)


def sensing_channel_grid(
    targets: list[Target] | tuple[Target, ...], alphas, M: int, N: int
) -> np.ndarray:
    """Sum of per-target phase grids weighted by the complex ``alphas``."""
    alphas = np.atleast_1d(np.asarray(alphas, dtype=complex))
    if alphas.size != len(targets):
        raise ValueError("need one alpha per target")
    H = np.zeros((M, N), dtype=complex)
    for t, a in zip(targets, alphas):
        if a != 0:
            H += a * phase_grid(t.l, t.k, M, N)
    return H


def draw_target_alphas(targets, seed) -> np.ndarray:
    """``alpha_p ~ CN(0, alpha0_p^2)`` independently per target."""
    scales = np.array([t.alpha0 for t in targets], dtype=float)
    return scales * crandn(_rng(seed), scales.shape)


def receive_sensing(x: np.ndarray, h: np.ndarray, noise_var: float, seed) -> np.ndarray:
    x = np.asarray(x)
    h = np.asarray(h)
    if x.shape != h.shape:
        raise ValueError("signal and channel grids differ in shape")
    r = h * x
    if noise_var > 0:
        r = r + crandn(_rng(seed), r.shape, noise_var)
    return r


@dataclass(frozen=True)
class ReferenceDraw:
    """Components of Eve's extracted reference for inspection in tests."""

    reference: np.ndarray
    los_grid: np.ndarray
    nlos_ratio: np.ndarray = field(repr=False)
    noise_ratio: np.ndarray = field(repr=False)


def extract_reference(x: np.ndarray, spec: EveDirectSpec, seed, detail: bool = False):
    """Eve's reciprocal-filter reference: ``R_E,d / H_E,d,LoS``.

    Raises ``ZeroDivisionError`` for a zero LoS bin or a pure-NLoS link.
    """
    x = np.asarray(x)
    M, N = x.shape
    if spec.kappa_e == 0:
        raise ZeroDivisionError("direct link has no LoS component to invert")
    los_grid = phase_grid(spec.l_d, spec.k_d, M, N)
    if np.any(np.abs(los_grid) == 0):
        raise ZeroDivisionError("LoS grid has a zero bin")
    rng = _rng(seed)
    los, nlos = _rician_split(spec.kappa_e)
    h_nlos = crandn(rng, (M, N)) if nlos > 0 else np.zeros((M, N), dtype=complex)
    z = crandn(rng, (M, N), spec.noise_var) if spec.noise_var > 0 else np.zeros((M, N), dtype=complex)
    h_d = spec.alpha_d * (los * los_grid + nlos * h_nlos)
    r_d = h_d * x + z
    ref = r_d / los_grid
    if detail:
        return ReferenceDraw(ref, los_grid, h_nlos / los_grid, z / los_grid)
    return ref


def tf_sensing_alphas(alphas_rd: np.ndarray, M: int, N: int) -> np.ndarray:
    """Convert RD-domain target coefficients to TF channel amplitudes."""
    return np.asarray(alphas_rd) / math.sqrt(M * N)

