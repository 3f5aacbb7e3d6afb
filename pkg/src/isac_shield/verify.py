"""Self-checks behind ``isac-shield verify``: closed forms against brute force."""

from __future__ import annotations

import numpy as np

from . import metrics
from .channel import Target, TargetSet
from .detection import CfarConfig, cfar_mask
from .receiver import FilterKind, filter_response
from .waveform import PerturbationWeights, WaveformKind, apply_transform, modulation_transform, normalize_weights


def _random_grid(rng, M=8, N=8):
    return (rng.standard_normal((M, N)) + 1j * rng.standard_normal((M, N))) / np.sqrt(2)


def check_isl_oracle(rng, grids: int = 100) -> float:
    """Worst relative error between the TF closed-form ISL and the RD sidelobe sum."""
    worst = 0.0
    for _ in range(grids):
        x = _random_grid(rng)
        for side, kind in (("bs", FilterKind.LMMSE), ("eve", FilterKind.MF)):
            closed = metrics.isl(x, side, 0.1, kind)
            brute = metrics.isl_from_response(filter_response(x, kind, 0.1))
            worst = max(worst, abs(closed - brute) / abs(brute))
    return worst


def check_kld_bound(points: int = 20) -> float:
    """Smallest ``D_exact - D~`` over a log grid of SNRs (should be >= 0)."""
    worst = np.inf
    for rho in np.logspace(-3, 3, points):
        st = metrics.DetectionStats(complex(np.sqrt(rho)), 1.0, "bs")
        worst = min(worst, metrics.kld_exact(st) - metrics.kld_surrogate(st))
    return float(worst)


def check_cfar_pfa(rng, maps: int = 20000) -> tuple[float, float]:
    """``(|empirical - analytic| / stderr, analytic)`` on exponential noise."""
    cfg = CfarConfig()
    power = rng.exponential(size=(maps, 8, 8))
    hits = cfar_mask(np.sqrt(power), cfg)[:, 0, 0]
    pfa = cfg.analytic_pfa()
    se = np.sqrt(pfa * (1 - pfa) / maps)
    return float(abs(hits.mean() - pfa) / se), pfa


def run_checks(seed: int = 0) -> list[tuple[str, bool, float, float]]:
    rng = np.random.default_rng(seed)
    out = []
    err = check_isl_oracle(rng)
    out.append(("isl_closed_form_vs_rd_sum", err <= 1e-9, err, 1e-9))
    margin = check_kld_bound()
    out.append(("kld_surrogate_below_exact", margin >= -1e-9, margin, 1e-9))
    z, _ = check_cfar_pfa(rng)
    out.append(("cfar_pfa_zscore", z <= 3.0, z, 3.0))

    zero = metrics.kld_surrogate(metrics.DetectionStats(0j, 1.0, "bs"))
    out.append(("kld_zero_at_zero_mean", zero == 0.0, zero, 0.0))
    const = np.exp(2j * np.pi * rng.random((8, 8)))
    v = metrics.isl(const, "eve", 0.0, FilterKind.MF)
    out.append(("isl_zero_constant_modulus", abs(v) <= 1e-12, abs(v), 1e-12))
    d = float(np.abs(modulation_transform(WaveformKind.OFDM, 8, 8) - np.eye(64)).max())
    out.append(("ofdm_identity_transform", d == 0.0, d, 0.0))
    w = normalize_weights(np.ones(64))
    d = float(np.abs(w.w - PerturbationWeights.ones(64).w).max())
    out.append(("all_ones_normalization", d == 0.0, d, 0.0))
    s = _random_grid(rng).ravel()
    d = abs(np.linalg.norm(apply_transform(WaveformKind.OTFS, s, 8, 8)) - np.linalg.norm(s))
    out.append(("otfs_parseval", bool(d <= 1e-12), float(d), 1e-12))
    rd = _random_grid(rng)
    same = bool(np.array_equal(cfar_mask(rd, CfarConfig()), cfar_mask(7.3 * rd, CfarConfig())))
    out.append(("cfar_scale_invariance", same, float(same), 1.0))
    ts = TargetSet((Target(1.0, 0, 0),), (Target(1.0, 0, 0),), 0)
    lone = metrics.detection_stats(const, ts, "eve", 0.0)
    out.append(("lone_target_no_interference", lone.sigma2 == 0.0, lone.sigma2, 0.0))
    return out
