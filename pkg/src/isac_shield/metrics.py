"""Closed-form RD power decomposition, KLD detection metrics and comm metrics.

Sides are ``"bs"`` (LMMSE receiver by default) and ``"eve"`` (matched
filter by default). For a per-bin filter ``g`` applied to the transmit
grid ``x`` the unit-target response is ``gamma = g * x`` and

* mainlobe mean     ``mu  = alpha0 / MN * sum(gamma)``
* noise power       ``P_n = sigma^2 / MN * sum(|g|^2)``
* ISL               ``(sum(gamma^2) - |sum(gamma)|^2 / MN) / MN``
* interference      ``P_i = 1 / MN * sum_{q != p} alpha0_q^2 * ISL``

with ``alpha0`` the RD-domain coefficient scale of each target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .channel import TargetSet
from .receiver import FilterKind, filter_response, per_bin_filter
from .waveform import PerturbationWeights, SymbolVector, WaveformKind, apply_transform

PSLR_CAP_DB = 300.0
GAP_FLOOR = 1e-12
_ASYMPTOTIC_X = 700.0


class DegenerateStatsError(ValueError):
    pass


def default_filter(side: str) -> FilterKind:
    side = side.lower()
    if side == "bs":
        return FilterKind.LMMSE
    if side == "eve":
        return FilterKind.MF
    raise ValueError(f"unknown side {side!r}")


@dataclass(frozen=True)
class DetectionStats:
    mu: complex
    sigma2: float
    side: str = "bs"

    @property
    def snr(self) -> float:
        """``|mu|^2 / sigma^2``, the only quantity the KLDs depend on."""
        if self.sigma2 <= 0:
            raise DegenerateStatsError("effective noise variance must be positive")
        return abs(self.mu) ** 2 / self.sigma2


@dataclass(frozen=True)
class PowerBreakdown:
    p_signal: float
    p_noise: float
    p_interf: float
    isl: float

    @property
    def sinr(self) -> float:
        return self.p_signal / (self.p_interf + self.p_noise)


# -- log-domain Bessel helpers ------------------------------------------------


def log_i0(x):
    """``ln I0(x)`` for ``x >= 0`` without overflow."""
    x = np.asarray(x, dtype=float)
    small = x <= _ASYMPTOTIC_X
    out = np.empty_like(x)
    xs = x[small]
    out[small] = np.log(special.i0e(xs)) + xs
    xl = x[~small]
    # I0(x) ~ e^x / sqrt(2 pi x) * (1 + 1/(8x) + 9/(128x^2))
    out[~small] = xl - 0.5 * np.log(2 * np.pi * xl) + np.log1p(1 / (8 * xl) + 9 / (128 * xl**2))
    return out if out.ndim else float(out)


def log_i1(x):
    """``ln I1(x)`` for ``x > 0``."""
    x = np.asarray(x, dtype=float)
    small = x <= _ASYMPTOTIC_X
    out = np.empty_like(x)
    xs = x[small]
    with np.errstate(divide="ignore"):
        out[small] = np.log(special.i1e(xs)) + xs
    xl = x[~small]
    out[~small] = xl - 0.5 * np.log(2 * np.pi * xl) + np.log1p(-3 / (8 * xl) - 15 / (128 * xl**2))
    return out if out.ndim else float(out)


# -- power decomposition --------------------------------------------------------


def _resolve(side: str, kind: FilterKind | str | None) -> FilterKind:
    return default_filter(side) if kind is None else FilterKind(kind)


def gamma_grid(x: np.ndarray, side: str, noise_var: float, kind=None) -> np.ndarray:
    """Per-bin unit-target gain ``g * x`` (real for all supported filters)."""
    kind = _resolve(side, kind)
    if kind is FilterKind.LMMSE and noise_var <= 0:
        raise ValueError("LMMSE gamma needs a positive noise variance")
    x = np.asarray(x)
    return np.real(per_bin_filter(x, kind, noise_var) * x)


def mainlobe_mean(x: np.ndarray, alpha0: float, side: str, noise_var: float, kind=None) -> complex:
    gamma = gamma_grid(x, side, noise_var, kind)
    return complex(alpha0 * gamma.sum() / gamma.size)


def noise_power(x: np.ndarray, side: str, noise_var: float, kind=None) -> float:
    kind = _resolve(side, kind)
    x = np.asarray(x)
    if noise_var == 0:
        return 0.0
    g = per_bin_filter(x, kind, noise_var)
    return float(noise_var * np.sum(np.abs(g) ** 2) / x.size)


def isl(x: np.ndarray, side: str, noise_var: float, kind=None) -> float:
    gamma = gamma_grid(x, side, noise_var, kind)
    mn = gamma.size
    return float((np.sum(gamma**2) - gamma.sum() ** 2 / mn) / mn)


def isl_from_response(response: np.ndarray) -> float:
    """Sidelobe energy of an RD filter response, over ``MN``."""
    energy = np.abs(response) ** 2
    return float((energy.sum() - energy[0, 0]) / energy.size)


def interference_power(
    x: np.ndarray,
    targets: TargetSet,
    side: str,
    noise_var: float,
    kind=None,
    form: str = "isl",
) -> float:
    """Power leaked into the desired target's bin by the other targets.

    ``form="isl"`` uses the lag-averaged ISL; ``form="exact"`` evaluates the
    filter response at each actual lag difference.
    """
    tlist = targets.side(side)
    p = targets.desired_index
    others = [t for i, t in enumerate(tlist) if i != p]
    if not others:
        return 0.0
    x = np.asarray(x)
    mn = x.size
    if form == "isl":
        level = isl(x, side, noise_var, kind)
        return float(sum(t.alpha0**2 for t in others) * level / mn)
    if form != "exact":
        raise ValueError(f"unknown interference form {form!r}")
    M, N = x.shape
    resp = filter_response(x, _resolve(side, kind), noise_var)
    tp = tlist[p]
    total = 0.0
    for t in others:
        total += t.alpha0**2 * abs(resp[(tp.l - t.l) % M, (tp.k - t.k) % N]) ** 2
    return float(total / mn)


def power_breakdown(x, targets: TargetSet, side: str, noise_var: float, kind=None, form="isl") -> PowerBreakdown:
    alpha0 = targets.side(side)[targets.desired_index].alpha0
    mu = mainlobe_mean(x, alpha0, side, noise_var, kind)
    return PowerBreakdown(
        p_signal=abs(mu) ** 2,
        p_noise=noise_power(x, side, noise_var, kind),
        p_interf=interference_power(x, targets, side, noise_var, kind, form),
        isl=isl(x, side, noise_var, kind),
    )


def detection_stats(x, targets: TargetSet, side: str, noise_var: float, kind=None, form="isl") -> DetectionStats:
    """Mainlobe mean and effective noise variance ``P_i + P_n``.

    A zero variance is returned as-is; the KLD functions reject it.
    """
    alpha0 = targets.side(side)[targets.desired_index].alpha0
    mu = mainlobe_mean(x, alpha0, side, noise_var, kind)
    sigma2 = noise_power(x, side, noise_var, kind) + interference_power(
        x, targets, side, noise_var, kind, form
    )
    return DetectionStats(mu, sigma2, side.lower())


def sinr(x, targets: TargetSet, side: str, noise_var: float, kind=None) -> float:
    return power_breakdown(x, targets, side, noise_var, kind).sinr


# -- KLD ------------------------------------------------------------------------


def _check(stats: DetectionStats) -> float:
    if not stats.sigma2 > 0:
        raise DegenerateStatsError("effective noise variance must be positive")
    return stats.snr


def rice_first_moment(nu: float, sigma2: float) -> float:
    """``E|z|`` for ``z ~ CN(nu, sigma2)`` (Rice with per-axis variance sigma2/2)."""
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    rho = nu * nu / sigma2
    # exp(-rho/2) I_v(rho/2) == ive(v, rho/2)
    bracket = (1.0 + rho) * special.i0e(rho / 2) + rho * special.i1e(rho / 2)
    return float(math.sqrt(sigma2) * math.sqrt(math.pi) / 2 * bracket)


def kld_surrogate(stats: DetectionStats) -> float:
    """Jensen lower bound ``ln I0(2|mu| E[R] / sigma^2) - |mu|^2 / sigma^2``."""
    rho = _check(stats)
    if rho == 0:
        return 0.0
    nu = abs(stats.mu)
    arg = 2 * nu * rice_first_moment(nu, stats.sigma2) / stats.sigma2
    return float(log_i0(arg) - rho)


def kld_surrogate_from_snr(rho):
    """Vectorised surrogate KLD as a function of ``|mu|^2 / sigma^2``."""
    rho = np.asarray(rho, dtype=float)
    er = math.sqrt(math.pi) / 2 * ((1 + rho) * special.i0e(rho / 2) + rho * special.i1e(rho / 2))
    return log_i0(2 * np.sqrt(rho) * er) - rho


def kld_exact(stats: DetectionStats) -> float:
    """``E_{T~f1}[ln I0(2|mu| sqrt(T) / sigma^2)] - |mu|^2 / sigma^2``.

    Integrates over ``u = sqrt(T) / sigma`` whose density is
    ``2u exp(-(u - a)^2) i0e(2au)`` with ``a = |mu| / sigma``.
    """
    rho = _check(stats)
    if rho == 0:
        return 0.0
    a = math.sqrt(rho)

    def integrand(u):
        z = 2 * a * u
        dens = 2 * u * math.exp(-((u - a) ** 2)) * special.i0e(z)
        return dens * log_i0(z)

    lo = max(0.0, a - 12.0)
    hi = a + 12.0
    pts = [a] if lo < a < hi else None
    val, _ = integrate.quad(integrand, lo, hi, points=pts, epsabs=1e-10, epsrel=1e-12, limit=400)
    return float(max(val - rho, 0.0))


def kld_monte_carlo(stats: DetectionStats, samples: int, seed) -> tuple[float, float]:
    """Sample-mean estimate of the exact KLD and its standard error."""
    rho = _check(stats)
    rng = np.random.default_rng(seed)
    a = math.sqrt(rho)
    z = a + (rng.standard_normal(samples) + 1j * rng.standard_normal(samples)) / math.sqrt(2)
    vals = log_i0(2 * a * np.abs(z)) - rho
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(samples))


def gap_from_stats(bs: DetectionStats, eve: DetectionStats) -> tuple[float, bool]:
    """``D~_BS / D~_E`` with the denominator floored; returns ``(gap, guarded)``."""
    d_bs = kld_surrogate(bs)
    d_eve = kld_surrogate(eve)
    guarded = d_eve <= GAP_FLOOR
    return d_bs / max(d_eve, GAP_FLOOR), guarded


def kld_gap(x, targets: TargetSet, bs_noise: float, eve_noise: float, return_flag: bool = False):
    bs = detection_stats(x, targets, "bs", bs_noise)
    eve = detection_stats(x, targets, "eve", eve_noise)
    gap, guarded = gap_from_stats(bs, eve)
    return (gap, guarded) if return_flag else gap


# -- communication ----------------------------------------------------------------


def comm_mismatch(
    H_eff: np.ndarray,
    w: PerturbationWeights,
    kind: WaveformKind | str,
    s: SymbolVector | np.ndarray,
    M: int | None = None,
    N: int | None = None,
) -> float:
    """``||H_eff W U s - s||^2``; ``M, N`` are needed only for OTFS."""
    data = s.data if isinstance(s, SymbolVector) else np.asarray(s)
    if WaveformKind(kind) is WaveformKind.OTFS and (M is None or N is None):
        raise ValueError("OTFS mismatch needs the grid dimensions")
    us = apply_transform(kind, data, M or data.size, N or 1)
    resid = H_eff @ (w.w * us) - data
    return float(np.vdot(resid, resid).real)


def achievable_rate(mismatch: float, s_energy: float, noise_energy: float) -> float:
    """Rate in bits: ``log2(1 + ||s||^2 / (mismatch + ||z||^2))``."""
    denom = mismatch + noise_energy
    if denom <= 0:
        raise ValueError("mismatch plus noise energy must be positive")
    return math.log2(1.0 + s_energy / denom)


def pslr(rd: np.ndarray, mainlobe_bin: tuple[int, int], exclude=()) -> float:
    """Peak-to-sidelobe ratio in dB at ``mainlobe_bin``.

    ``exclude`` lists further bins (e.g. other targets' own peaks) left out of
    the sidelobe maximum. An empty sidelobe region is an error; a zero
    sidelobe maximum returns ``PSLR_CAP_DB``.
    """
    power = np.abs(np.asarray(rd)) ** 2
    if power.size < 2:
        raise ValueError("PSLR needs at least two bins")
    mask = np.ones(power.shape, dtype=bool)
    mask[tuple(mainlobe_bin)] = False
    for b in exclude:
        mask[tuple(b)] = False
    if not mask.any():
        raise ValueError("no sidelobe bins left")
    side = power[mask].max()
    peak = power[tuple(mainlobe_bin)]
    if side == 0 or peak / side > 10 ** (PSLR_CAP_DB / 10):
        return PSLR_CAP_DB
    return float(10 * np.log10(peak / side))
