"""Simulated annealing over the TF perturbation weights.

The objective is ``beta * D~_BS / D~_E - (1 - beta) * ||H_eff W U s - s||^2``
under ``sum |w|^2 = p_max``. The power constraint is enforced with equality:
every proposal is renormalised onto the sphere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import metrics
from .channel import TargetSet
from .config import SaSettings, ScenarioConfig
from .metrics import GAP_FLOOR, kld_surrogate_from_snr
from .waveform import PerturbationWeights, SymbolVector, WaveformKind, apply_transform, normalize_weights, unvec

FEASIBILITY_TOL = 1e-9
_SQRT_PI_2 = math.sqrt(math.pi) / 2


class ConstraintViolation(ValueError):
    pass


@dataclass(frozen=True)
class SideModel:
    """x-independent parameters of one sensing side."""

    alpha0: float
    clutter_power: float  # sum of alpha0_q^2 over unintended targets
    noise_var: float

    @classmethod
    def from_targets(cls, targets: TargetSet, side: str, noise_var: float) -> "SideModel":
        tl = targets.side(side)
        p = targets.desired_index
        clutter = sum(t.alpha0**2 for i, t in enumerate(tl) if i != p)
        return cls(tl[p].alpha0, float(clutter), float(noise_var))


def _surrogate(rho: float) -> float:
    """Scalar fast path of :func:`metrics.kld_surrogate_from_snr`."""
    if rho > 1400.0:
        return float(kld_surrogate_from_snr(rho))
    h = rho / 2
    er = _SQRT_PI_2 * ((1 + rho) * special.i0e(h) + rho * special.i1e(h))
    z = 2 * math.sqrt(rho) * er
    return math.log(special.i0e(z)) + z - rho


@dataclass
class Objective:
    beta: float
    H_eff: np.ndarray
    kind: WaveformKind
    s: np.ndarray
    M: int
    N: int
    bs: SideModel
    eve: SideModel
    targets_bs: TargetSet | None = None
    targets_eve: TargetSet | None = None
    p_max: float | None = None
    us: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        self.kind = WaveformKind(self.kind)
        self.s = np.asarray(self.s.data if isinstance(self.s, SymbolVector) else self.s, dtype=complex)
        if self.p_max is None:
            self.p_max = float(self.M * self.N)
        if self.p_max <= 0:
            raise ValueError("p_max must be positive")
        self.us = apply_transform(self.kind, self.s, self.M, self.N)

    @classmethod
    def build(
        cls,
        beta: float,
        H_eff: np.ndarray,
        kind,
        s,
        M: int,
        N: int,
        targets: TargetSet,
        bs_noise: float,
        eve_targets: TargetSet,
        eve_noise: float,
        p_max: float | None = None,
    ) -> "Objective":
        return cls(
            beta=beta,
            H_eff=H_eff,
            kind=kind,
            s=s,
            M=M,
            N=N,
            bs=SideModel.from_targets(targets, "bs", bs_noise),
            eve=SideModel.from_targets(eve_targets, "eve", eve_noise),
            targets_bs=targets,
            targets_eve=eve_targets,
            p_max=p_max,
        )

    # -- fast evaluation -----------------------------------------------------
    def _side_snr(self, p: np.ndarray, side: SideModel, lmmse: bool) -> float:
        mn = p.size
        s2 = side.noise_var
        if lmmse:
            gamma = p / (p + s2)
            pn = s2 * float(np.dot(gamma, 1.0 / (p + s2))) / mn
        else:
            gamma = p
            pn = s2 * float(p.sum()) / mn
        gm = float(gamma.sum()) / mn
        isl = float(np.dot(gamma, gamma)) / mn - gm * gm
        sigma2 = pn + side.clutter_power * isl / mn
        mu = side.alpha0 * gm
        if sigma2 <= 0:
            raise metrics.DegenerateStatsError("effective noise variance must be positive")
        return mu * mu / sigma2

    def parts(self, w: np.ndarray) -> tuple[float, float]:
        """``(kld_gap, mismatch)`` for raw weights ``w``."""
        x = w * self.us
        p = (x * x.conj()).real
        rho_bs = self._side_snr(p, self.bs, lmmse=True)
        rho_eve = self._side_snr(p, self.eve, lmmse=False)
        gap = _surrogate(rho_bs) / max(_surrogate(rho_eve), GAP_FLOOR)
        r = self.H_eff @ x - self.s
        return float(gap), float(np.vdot(r, r).real)

    def value(self, w: np.ndarray) -> float:
        gap, mismatch = self.parts(w)
        if self.beta == 1.0:
            return gap
        if self.beta == 0.0:
            return -mismatch
        return self.beta * gap - (1.0 - self.beta) * mismatch


def _check_feasible(w: PerturbationWeights, p_max: float) -> None:
    if w.power > p_max * (1 + FEASIBILITY_TOL):
        raise ConstraintViolation(f"trace power {w.power:.12g} exceeds budget {p_max:.12g}")


def evaluate_objective(w: PerturbationWeights, obj: Objective) -> float:
    _check_feasible(w, obj.p_max)
    return obj.value(w.w)


def evaluate_objective_reference(w: PerturbationWeights, obj: Objective) -> float:
    """Recompute the objective through :mod:`metrics` without any caching."""
    _check_feasible(w, obj.p_max)
    if obj.targets_bs is None or obj.targets_eve is None:
        raise ValueError("reference evaluation needs the target sets")
    x = w.w * apply_transform(obj.kind, obj.s, obj.M, obj.N)
    grid = unvec(x, obj.M, obj.N)
    bs = metrics.detection_stats(grid, obj.targets_bs, "bs", obj.bs.noise_var)
    eve = metrics.detection_stats(grid, obj.targets_eve, "eve", obj.eve.noise_var)
    gap, _ = metrics.gap_from_stats(bs, eve)
    mismatch = metrics.comm_mismatch(obj.H_eff, w, obj.kind, obj.s, obj.M, obj.N)
    if obj.beta == 1.0:
        return gap
    if obj.beta == 0.0:
        return -mismatch
    return obj.beta * gap - (1.0 - obj.beta) * mismatch


def propose_move(w: PerturbationWeights, cfg: SaSettings, rng: np.random.Generator, p_max: float | None = None) -> PerturbationWeights:
    """Log-normal amplitude and Gaussian phase kick on a few random bins."""
    p_max = float(len(w)) if p_max is None else p_max
    new = w.w.copy()
    if cfg.batch == 1:
        idx = rng.integers(new.size, size=1)
    else:
        idx = rng.choice(new.size, size=min(cfg.batch, new.size), replace=False)
    amp = np.exp(rng.normal(0.0, cfg.move_scale_amp, idx.size)) if cfg.move_scale_amp > 0 else 1.0
    phase = rng.normal(0.0, cfg.move_scale_phase, idx.size) if cfg.move_scale_phase > 0 else 0.0
    new[idx] = new[idx] * amp * np.exp(1j * phase)
    return normalize_weights(new, p_max)


@dataclass
class SaResult:
    best_w: PerturbationWeights
    best_value: float
    initial_value: float
    trace: list[tuple[float, float, float]]
    evaluations: int
    budget_exhausted: bool
    accepted: int


def calibrate_temperature(w0: PerturbationWeights, obj: Objective, cfg: SaSettings, rng, samples: int = 100, accept: float = 0.8) -> float:
    """Temperature at which ~``accept`` of random worsening moves from ``w0`` pass."""
    f0 = obj.value(w0.w)
    worse = []
    for _ in range(samples):
        d = obj.value(propose_move(w0, cfg, rng, obj.p_max).w) - f0
        if d < 0 and np.isfinite(d):
            worse.append(-d)
    if not worse:
        return 1.0
    return float(np.mean(worse) / -math.log(accept))


def simulated_annealing(init: PerturbationWeights, obj: Objective, cfg: SaSettings) -> SaResult:
    """Maximise ``obj`` from ``init`` with Metropolis acceptance and geometric cooling.

    The trace holds one ``(temperature, current, best)`` row per temperature
    level.
    """
    _check_feasible(init, obj.p_max)
    rng = np.random.default_rng(cfg.seed)
    cur = normalize_weights(init.w, obj.p_max)
    f_cur = obj.value(cur.w)
    best, f_best = cur, f_cur
    temp = cfg.initial_temp if cfg.initial_temp is not None else calibrate_temperature(cur, obj, cfg, rng)
    if temp <= 0:
        raise ValueError("initial temperature must be positive")
    min_temp = temp * cfg.min_temp_ratio
    trace: list[tuple[float, float, float]] = []
    evals = 0
    accepted = 0
    exhausted = False
    while temp >= min_temp:
        for _ in range(cfg.iters_per_temp):
            if evals >= cfg.max_evals:
                exhausted = True
                break
            cand = propose_move(cur, cfg, rng, obj.p_max)
            f_cand = obj.value(cand.w)
            evals += 1
            delta = f_cand - f_cur
            if delta >= 0 or rng.random() < math.exp(delta / temp):
                cur, f_cur = cand, f_cand
                accepted += 1
                if f_cur > f_best:
                    best, f_best = cur, f_cur
        trace.append((temp, f_cur, f_best))
        if exhausted:
            break
        temp *= cfg.cooling_rate
    return SaResult(best, f_best, obj.value(init.w), trace, evals, exhausted, accepted)


# -- scenario-level entry point -------------------------------------------------


@dataclass(frozen=True)
class EveAssumption:
    mode: str
    eve_targets: TargetSet
    eve_noise_var: float


def eve_assumption(cfg: ScenarioConfig, snr_db: float | None = None, ladder=None) -> EveAssumption:
    targets, noise = cfg.surrogate_eve(snr_db, ladder)
    return EveAssumption(cfg.eve_mode, targets, noise)


def build_objective(
    cfg: ScenarioConfig,
    s,
    H_eff: np.ndarray,
    beta: float,
    eve: EveAssumption,
    snr_db: float | None = None,
    ladder=None,
) -> Objective:
    targets = cfg.targets(snr_db, ladder)
    return Objective.build(
        beta,
        H_eff,
        cfg.waveform,
        s,
        cfg.M,
        cfg.N,
        targets,
        cfg.bs_noise_var(snr_db),
        eve.eve_targets,
        eve.eve_noise_var,
    )


def optimize_for_sequence(
    cfg: ScenarioConfig,
    s,
    H_eff: np.ndarray,
    beta: float,
    eve: EveAssumption,
    sa: SaSettings,
    snr_db: float | None = None,
    ladder=None,
) -> PerturbationWeights:
    """Run SA for one data sequence, starting from the all-ones weights."""
    obj = build_objective(cfg, s, H_eff, beta, eve, snr_db, ladder)
    return simulated_annealing(PerturbationWeights.ones(cfg.size), obj, sa).best_w
