"""Scenario configuration: Table-style parameters, presets and TOML parsing.

All SNRs and Rician factors are stored in dB and converted to linear power
once, through the properties below.
"""

from __future__ import annotations

import math
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .channel import CommChannelSpec, EveDirectSpec, Target, TargetSet
from .detection import CfarConfig
from .waveform import ConstellationKind, WaveformKind

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    pass


def db2lin(db: float) -> float:
    return 10.0 ** (db / 10.0)


def expand_ladder(lower_db: float, upper_db: float, count: int) -> list[float]:
    """``count`` dB values stepping uniformly from ``upper_db`` down to ``lower_db``."""
    if count < 1:
        raise ConfigError("ladder needs at least one value")
    if count == 1:
        return [float(upper_db)]
    step = (upper_db - lower_db) / (count - 1)
    return [float(upper_db - i * step) for i in range(count)]


def ladder_label(ladder: tuple[float, float]) -> str:
    lo, hi = ladder
    return f"[{lo:g}, {hi:g}] dB"


def sensing_levels(target_snr_db: float, M: int, N: int) -> tuple[float, float]:
    """Desired-target RD coefficient scale and TF noise variance for a target SNR.

    The target SNR is the echo-to-noise energy ratio over one frame at the
    receiver input. The desired echo has unit TF amplitude (RD coefficient
    ``sqrt(MN)``) and the per-bin noise variance carries the SNR.
    """
    return math.sqrt(M * N), 10.0 ** (-target_snr_db / 10.0)


@dataclass(frozen=True)
class SaSettings:
    initial_temp: float | None = None
    cooling_rate: float = 0.95
    iters_per_temp: int = 50
    min_temp_ratio: float = 1e-4
    move_scale_amp: float = 0.3
    move_scale_phase: float = 0.5
    batch: int = 1
    max_evals: int = 200_000
    seed: int = 0


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "table1"
    waveform: WaveformKind = WaveformKind.OTFS
    M: int = 8
    N: int = 8
    constellation: ConstellationKind = ConstellationKind.QAM16
    beta: float = 1.0
    trials: int = 100
    draws_per_sequence: int = 10
    seed: int = 1
    # communication link
    l_c: int = 2
    k_c: int = 3
    alpha_c: float = 1.0
    snr_c_db: float = 25.0
    kappa_c_db: float = 10.0
    nlos_scale: str = "row"
    # targets, desired first; bins as (l, k)
    K: int = 3
    bs_bins: tuple[tuple[int, int], ...] = ((1, 1), (5, 3), (3, 6))
    eve_bins: tuple[tuple[int, int], ...] = ((2, 5), (6, 1), (4, 2))
    clutter_range_db: tuple[float, float] = (-15.0, 10.0)
    target_snr_db: float = 10.0
    snr_sweep_db: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0)
    desired_fading: str = "fixed"
    # eavesdropper
    ref_snr_db: float = 0.0
    kappa_ref_db: float = 0.0
    l_d: int = 0
    k_d: int = 0
    eve_noise_offset_db: float = 0.0
    eve_reference: str = "ideal"
    eve_filters: tuple[str, ...] = ("mf", "zf", "lmmse", "rf")
    eve_mode: str = "aware"
    surrogate_clutter_range_db: tuple[float, float] | None = None
    surrogate_noise_offset_db: float | None = None
    # trade-off sweep
    beta_sweep: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    clutter_ladders_db: tuple[tuple[float, float], ...] = ((-18.0, 7.0), (-15.0, 10.0), (-12.0, 13.0))
    # optimisation
    amortized: bool = False
    sa: SaSettings = field(default_factory=SaSettings)
    sa_per_sequence_evals: int = 3000
    cfar: CfarConfig = field(default_factory=CfarConfig)

    def __post_init__(self):
        object.__setattr__(self, "waveform", WaveformKind(self.waveform))
        object.__setattr__(self, "constellation", ConstellationKind(self.constellation))
        self.validate()

    # -- validation ----------------------------------------------------------
    def validate(self) -> None:
        if self.M < 1 or self.N < 1:
            raise ConfigError("M and N must be positive")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.draws_per_sequence < 1:
            raise ConfigError("draws_per_sequence must be >= 1")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError("beta must lie in [0, 1]")
        if any(not 0.0 <= b <= 1.0 for b in self.beta_sweep):
            raise ConfigError("beta sweep values must lie in [0, 1]")
        if self.K < 1 or len(self.bs_bins) != self.K or len(self.eve_bins) != self.K:
            raise ConfigError("need exactly K target bins for both BS and Eve")
        for l, k in (*self.bs_bins, *self.eve_bins):
            if not (0 <= l < self.M and 0 <= k < self.N):
                raise ConfigError(f"target bin {(l, k)} outside the {self.M}x{self.N} grid")
        if self.nlos_scale not in ("row", "entry"):
            raise ConfigError("nlos_scale must be 'row' or 'entry'")
        if self.desired_fading not in ("fixed", "rayleigh"):
            raise ConfigError("desired_fading must be 'fixed' or 'rayleigh'")
        if self.eve_reference not in ("ideal", "extracted"):
            raise ConfigError("eve_reference must be 'ideal' or 'extracted'")
        if self.eve_mode not in ("aware", "agnostic"):
            raise ConfigError("eve_mode must be 'aware' or 'agnostic'")
        for f in self.eve_filters:
            if f not in ("mf", "zf", "lmmse", "rf"):
                raise ConfigError(f"unknown Eve filter {f!r}")
        self.cfar.validate((self.M, self.N))

    # -- derived quantities --------------------------------------------------
    @property
    def size(self) -> int:
        return self.M * self.N

    def clutter_db(self, ladder: tuple[float, float] | None = None) -> list[float]:
        lo, hi = self.clutter_range_db if ladder is None else ladder
        return expand_ladder(lo, hi, self.K - 1) if self.K > 1 else []

    def targets(self, snr_db: float | None = None, ladder=None) -> TargetSet:
        """Target set at a target SNR; clutter dB values are relative to the desired echo."""
        a_des, _ = sensing_levels(self.target_snr_db if snr_db is None else snr_db, self.M, self.N)
        scales = [a_des] + [a_des * 10 ** (db / 20) for db in self.clutter_db(ladder)]
        bs = [Target(a, l, k) for a, (l, k) in zip(scales, self.bs_bins)]
        eve = [Target(a, l, k) for a, (l, k) in zip(scales, self.eve_bins)]
        return TargetSet(tuple(bs), tuple(eve), 0)

    def bs_noise_var(self, snr_db: float | None = None) -> float:
        return sensing_levels(self.target_snr_db if snr_db is None else snr_db, self.M, self.N)[1]

    def eve_noise_var(self, snr_db: float | None = None) -> float:
        return self.bs_noise_var(snr_db) * db2lin(self.eve_noise_offset_db)

    def comm_spec(self) -> CommChannelSpec:
        return CommChannelSpec(
            alpha_c=self.alpha_c,
            kappa_c=db2lin(self.kappa_c_db),
            l_c=self.l_c,
            k_c=self.k_c,
            noise_var=self.alpha_c**2 * 10 ** (-self.snr_c_db / 10),
            nlos_scale=self.nlos_scale,
        )

    def eve_direct_spec(self) -> EveDirectSpec:
        return EveDirectSpec(
            alpha_d=1.0,
            kappa_e=db2lin(self.kappa_ref_db),
            l_d=self.l_d,
            k_d=self.k_d,
            noise_var=10 ** (-self.ref_snr_db / 10),
        )

    def surrogate_eve(self, snr_db: float | None = None, ladder=None) -> tuple[TargetSet, float]:
        """Eve targets and noise the optimiser assumes (truth when Eve-aware)."""
        truth = self.targets(snr_db, ladder)
        noise = self.eve_noise_var(snr_db)
        if self.eve_mode == "aware":
            return truth, noise
        rng = self.surrogate_clutter_range_db or (ladder or self.clutter_range_db)
        guess = self.targets(snr_db, rng)
        off = self.surrogate_noise_offset_db if self.surrogate_noise_offset_db is not None else self.eve_noise_offset_db
        eve_targets = guess.eve_targets
        return TargetSet(truth.bs_targets, eve_targets, 0), self.bs_noise_var(snr_db) * db2lin(off)

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["waveform"] = self.waveform.value
        d["constellation"] = self.constellation.value
        return d


# -- presets ----------------------------------------------------------------


def table1(waveform: WaveformKind | str = "otfs", **overrides) -> ScenarioConfig:
    """Sensing-security-centric parameters (beta = 1, 8x8, K = 3)."""
    return ScenarioConfig(name="table1", waveform=WaveformKind(waveform), **overrides)


def table2(waveform: WaveformKind | str = "otfs", **overrides) -> ScenarioConfig:
    """Trade-off parameters: target SNR 25 dB, direct link 20 dB / 10 dB."""
    base = dict(
        name="table2",
        waveform=WaveformKind(waveform),
        target_snr_db=25.0,
        ref_snr_db=20.0,
        kappa_ref_db=10.0,
    )
    base.update(overrides)
    return ScenarioConfig(**base)


def case_study(waveform: WaveformKind | str = "otfs", **overrides) -> ScenarioConfig:
    """16x16 grid, five targets, target SNR 20 dB."""
    base = dict(
        name="case_study",
        waveform=WaveformKind(waveform),
        M=16,
        N=16,
        K=5,
        bs_bins=((3, 4), (10, 2), (6, 12), (13, 9), (1, 14)),
        eve_bins=((5, 9), (12, 14), (2, 3), (9, 6), (14, 11)),
        target_snr_db=20.0,
        trials=1,
        draws_per_sequence=1,
    )
    base.update(overrides)
    return ScenarioConfig(**base)


# -- TOML -------------------------------------------------------------------

_SECTIONS = {
    "scenario": {
        "name": "name",
        "waveform": "waveform",
        "subcarriers_M": "M",
        "time_slots_N": "N",
        "constellation": "constellation",
        "isac_balance_weight_beta": "beta",
        "trials": "trials",
        "draws_per_sequence": "draws_per_sequence",
        "seed": "seed",
        "amortized": "amortized",
    },
    "communication": {
        "channel_delay_l_c": "l_c",
        "channel_doppler_k_c": "k_c",
        "channel_coefficient_alpha_c": "alpha_c",
        "snr_c_db": "snr_c_db",
        "rician_factor_kappa_c_db": "kappa_c_db",
        "nlos_scale": "nlos_scale",
    },
    "targets": {
        "number_of_targets_K": "K",
        "bs_bins": "bs_bins",
        "eve_bins": "eve_bins",
        "unintended_coeff_range_db": "clutter_range_db",
        "target_snr_db": "target_snr_db",
        "target_snr_sweep_db": "snr_sweep_db",
        "desired_fading": "desired_fading",
    },
    "eve": {
        "direct_link_snr_ref_db": "ref_snr_db",
        "direct_link_rician_factor_kappa_ref_db": "kappa_ref_db",
        "direct_link_delay_l_d": "l_d",
        "direct_link_doppler_k_d": "k_d",
        "surveillance_noise_offset_db": "eve_noise_offset_db",
        "reference": "eve_reference",
        "filters": "eve_filters",
        "mode": "eve_mode",
        "surrogate_coeff_range_db": "surrogate_clutter_range_db",
        "surrogate_noise_offset_db": "surrogate_noise_offset_db",
    },
    "tradeoff": {
        "beta_sweep": "beta_sweep",
        "clutter_ladders_db": "clutter_ladders_db",
    },
    "optimizer": {
        "per_sequence_evals": "sa_per_sequence_evals",
    },
}


def _tupleize(value):
    if isinstance(value, list):
        return tuple(_tupleize(v) for v in value)
    return value


def from_dict(data: dict, base: ScenarioConfig | None = None) -> ScenarioConfig:
    """Build a config from TOML-shaped sections layered over ``base``."""
    base = base or ScenarioConfig()
    changes: dict = {}
    for section, body in data.items():
        if section == "annealing":
            known = {f.name for f in fields(SaSettings)}
            bad = set(body) - known
            if bad:
                raise ConfigError(f"unknown annealing keys: {sorted(bad)}")
            changes["sa"] = replace(base.sa, **body)
            continue
        if section == "cfar":
            known = {f.name for f in fields(CfarConfig)}
            bad = set(body) - known
            if bad:
                raise ConfigError(f"unknown cfar keys: {sorted(bad)}")
            changes["cfar"] = replace(base.cfar, **body)
            continue
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        mapping = _SECTIONS[section]
        for key, value in body.items():
            if key not in mapping:
                raise ConfigError(f"unknown key {section}.{key}")
            changes[mapping[key]] = _tupleize(value)
    try:
        return replace(base, **changes)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


PRESETS = {"table1": table1, "table2": table2, "case_study": case_study}


def load_config(path: str | Path) -> ScenarioConfig:
    """Parse a TOML scenario file; an optional top-level ``preset`` picks the base."""
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    preset = data.pop("preset", "table1")
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}")
    base = PRESETS[preset](data.get("scenario", {}).get("waveform", "otfs"))
    return from_dict(data, base)


def config_to_sections(cfg: ScenarioConfig) -> dict:
    """Inverse of :func:`from_dict`, used for result metadata."""
    flat = cfg.to_dict()
    out: dict = {}
    for section, mapping in _SECTIONS.items():
        out[section] = {key: flat[attr] for key, attr in mapping.items()}
    out["annealing"] = asdict(cfg.sa)
    out["cfar"] = asdict(cfg.cfar)
    return out
