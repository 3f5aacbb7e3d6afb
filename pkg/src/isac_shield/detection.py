"""Two-dimensional cell-averaging CFAR on periodic range-Doppler maps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class CfarConfig:
    guard_cells: int = 1
    training_cells: int = 2
    threshold_db: float = 10.0
    wrap: bool = True

    def __post_init__(self):
        if self.guard_cells < 0 or self.training_cells < 0:
            raise ValueError("guard and training cell counts must be >= 0")

    @property
    def threshold_factor(self) -> float:
        return 10 ** (self.threshold_db / 10)

    @property
    def n_training(self) -> int:
        outer = 2 * (self.guard_cells + self.training_cells) + 1
        inner = 2 * self.guard_cells + 1
        return outer * outer - inner * inner

    def kernel(self) -> np.ndarray:
        half = self.guard_cells + self.training_cells
        k = np.ones((2 * half + 1, 2 * half + 1))
        g = self.guard_cells
        k[half - g : half + g + 1, half - g : half + g + 1] = 0
        return k

    def validate(self, shape: tuple[int, int]) -> None:
        if self.n_training == 0:
            raise ValueError("CFAR window has no training cells")
        span = 2 * (self.guard_cells + self.training_cells) + 1
        if self.wrap and (span > shape[0] or span > shape[1]):
            raise ValueError(f"CFAR window {span}x{span} does not fit a {shape} map")

    def analytic_pfa(self) -> float:
        """False-alarm probability for exponential noise, ``(1 + a/Nt)^-Nt``."""
        nt = self.n_training
        return (1 + self.threshold_factor / nt) ** (-nt)


@dataclass(frozen=True)
class DetectionOutcome:
    detected: bool
    test_statistic: float
    local_noise_estimate: float


def local_noise(power: np.ndarray, cfg: CfarConfig) -> np.ndarray:
    """Training-cell mean of ``power`` for every cell; leading axes are a batch."""
    power = np.asarray(power, dtype=float)
    cfg.validate(power.shape[-2:])
    kernel = cfg.kernel()
    kernel = kernel.reshape((1,) * (power.ndim - 2) + kernel.shape)
    mode = "wrap" if cfg.wrap else "constant"
    total = ndimage.correlate(power, kernel, mode=mode, cval=0.0)
    if cfg.wrap:
        return total / cfg.n_training
    count = ndimage.correlate(np.ones(power.shape[-2:]), cfg.kernel(), mode="constant", cval=0.0)
    if np.any(count == 0):
        raise ValueError("some cells have an empty training set")
    return total / count


def cfar_mask(rd: np.ndarray, cfg: CfarConfig) -> np.ndarray:
    """Detection decisions for every cell of one map or a stack of maps."""
    power = np.abs(np.asarray(rd)) ** 2
    return power > cfg.threshold_factor * local_noise(power, cfg)


def ca_cfar(rd: np.ndarray, cfg: CfarConfig, bins) -> list[DetectionOutcome]:
    power = np.abs(np.asarray(rd)) ** 2
    noise = local_noise(power, cfg)
    out = []
    for l, k in bins:
        t = float(power[l, k])
        n = float(noise[l, k])
        out.append(DetectionOutcome(t > cfg.threshold_factor * n, t, n))
    return out


def detection_probability(scenario, side, w, trials, seed, **kwargs) -> float:
    """Monte Carlo detection probability at the desired target's bin."""
    from .simulation import detection_probability as _pd

    return _pd(scenario, side, w, trials, seed, **kwargs)
