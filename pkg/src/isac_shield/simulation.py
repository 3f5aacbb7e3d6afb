"""Monte Carlo trial generation for BS and Eve range-Doppler maps."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import (
    TargetSet,
    comm_effective_channel,
    crandn,
    extract_reference,
    sensing_channel_grid,
    tf_sensing_alphas,
)
from .config import ScenarioConfig
from .detection import cfar_mask
from .receiver import FilterKind, process
from .waveform import PerturbationWeights, SymbolVector, draw_symbols, modulate

# stream ids under one (seed, sequence) pair
_SYMBOLS, _COMM, _DRAWS = 0, 1, 2


def sequence_rng(seed: int, sequence: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, sequence, stream]))


@dataclass(frozen=True)
class SequenceContext:
    """One transmitted data sequence and the comm channel it sees."""

    index: int
    s: SymbolVector
    H_eff: np.ndarray


def make_sequence(cfg: ScenarioConfig, index: int, seed: int | None = None) -> SequenceContext:
    seed = cfg.seed if seed is None else seed
    s = draw_symbols(cfg.constellation, cfg.size, sequence_rng(seed, index, _SYMBOLS))
    H = comm_effective_channel(cfg.comm_spec(), cfg.waveform, cfg.M, cfg.N, sequence_rng(seed, index, _COMM))
    return SequenceContext(index, s, H)


def unit_draws(rng: np.random.Generator, K: int, desired_index: int, fading: str) -> np.ndarray:
    """Unit-variance path gains shared by the BS and Eve geometries."""
    g = crandn(rng, K)
    if fading == "fixed":
        g[desired_index] = 1.0
    return g


def side_alphas(targets, g: np.ndarray) -> np.ndarray:
    return np.array([t.alpha0 for t in targets]) * g


def echo_grid(x: np.ndarray, targets, g: np.ndarray, present: bool, desired_index: int) -> np.ndarray:
    M, N = x.shape
    a = side_alphas(targets, g)
    if not present:
        a[desired_index] = 0.0
    return sensing_channel_grid(targets, tf_sensing_alphas(a, M, N), M, N) * x


@dataclass(frozen=True)
class TrialMaps:
    bs: np.ndarray
    eve: dict[str, np.ndarray]


def simulate_maps(
    x: np.ndarray,
    targets: TargetSet,
    bs_noise: float,
    eve_noise: float,
    rng: np.random.Generator,
    eve_filters=("mf",),
    fading: str = "fixed",
    present: bool = True,
    eve_reference: np.ndarray | None = None,
) -> TrialMaps:
    """BS (LMMSE) and Eve RD maps for one realisation of gains and noise."""
    M, N = x.shape
    p = targets.desired_index
    g = unit_draws(rng, len(targets), p, fading)
    r_bs = echo_grid(x, targets.bs_targets, g, present, p) + crandn(rng, (M, N), bs_noise)
    r_eve = echo_grid(x, targets.eve_targets, g, present, p) + crandn(rng, (M, N), eve_noise)
    bs_map = process(r_bs, x, FilterKind.LMMSE, bs_noise)
    ref = x if eve_reference is None else eve_reference
    eve_maps = {}
    for f in eve_filters:
        eve_maps[f] = process(r_eve, ref, FilterKind(f), eve_noise)
    return TrialMaps(bs_map, eve_maps)


@dataclass
class SequenceOutcome:
    """Detection counts for one sequence under one set of weights."""

    bs_hits: int
    eve_hits: dict[str, int]
    draws: int


def run_draws(
    cfg: ScenarioConfig,
    ctx: SequenceContext,
    w: PerturbationWeights,
    snr_db: float,
    ladder=None,
    draw_seed: int | None = None,
    present: bool = True,
    eve_filters=None,
) -> SequenceOutcome:
    """CFAR decisions at the desired bins over ``cfg.draws_per_sequence`` draws."""
    eve_filters = tuple(cfg.eve_filters if eve_filters is None else eve_filters)
    targets = cfg.targets(snr_db, ladder)
    bs_noise = cfg.bs_noise_var(snr_db)
    eve_noise = cfg.eve_noise_var(snr_db)
    x = modulate(ctx.s, cfg.waveform, w, cfg.M, cfg.N)
    rng = sequence_rng(cfg.seed if draw_seed is None else draw_seed, ctx.index, _DRAWS)
    p = targets.desired_index
    bs_bin = (targets.bs_targets[p].l, targets.bs_targets[p].k)
    eve_bin = (targets.eve_targets[p].l, targets.eve_targets[p].k)
    bs_maps = []
    eve_maps = {f: [] for f in eve_filters}
    for _ in range(cfg.draws_per_sequence):
        ref = None
        if cfg.eve_reference == "extracted":
            ref = extract_reference(x, cfg.eve_direct_spec(), rng)
        maps = simulate_maps(
            x, targets, bs_noise, eve_noise, rng, eve_filters, cfg.desired_fading, present, ref
        )
        bs_maps.append(maps.bs)
        for f in eve_filters:
            eve_maps[f].append(maps.eve[f])
    bs_hits = int(cfar_mask(np.stack(bs_maps), cfg.cfar)[:, bs_bin[0], bs_bin[1]].sum())
    eve_hits = {
        f: int(cfar_mask(np.stack(m), cfg.cfar)[:, eve_bin[0], eve_bin[1]].sum())
        for f, m in eve_maps.items()
    }
    return SequenceOutcome(bs_hits, eve_hits, cfg.draws_per_sequence)


def proportion(hits: int, n: int) -> tuple[float, float]:
    p = hits / n
    return p, math.sqrt(max(p * (1 - p), 1.0 / n) / n)


def detection_probability(
    cfg: ScenarioConfig,
    side: str,
    w: PerturbationWeights | None,
    trials: int,
    seed: int,
    snr_db: float | None = None,
    kind: str | None = None,
    present: bool = True,
) -> float:
    """Fraction of trials in which the desired target's bin passes the CFAR.

    Every trial draws fresh symbols, path gains and noise. ``present=False``
    removes the desired echo, so the estimate becomes a false-alarm rate.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if side not in ("bs", "eve"):
        raise ValueError(f"unknown side {side!r}")
    w = PerturbationWeights.ones(cfg.size) if w is None else w
    kind = kind or "mf"
    one = cfg.with_(draws_per_sequence=1, eve_filters=(kind,))
    hits = 0
    for t in range(trials):
        rng = sequence_rng(seed, t, _SYMBOLS)
        s = draw_symbols(cfg.constellation, cfg.size, rng)
        ctx = SequenceContext(t, s, np.eye(cfg.size))
        out = run_draws(one, ctx, w, one.target_snr_db if snr_db is None else snr_db, draw_seed=seed, present=present)
        hits += out.bs_hits if side == "bs" else out.eve_hits[kind]
    return hits / trials
