"""Experiment runners, result emission and the ``isac-shield`` CLI."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import metrics
from .channel import crandn
from .config import ConfigError, ScenarioConfig, config_to_sections, ladder_label, load_config
from .optimizer import eve_assumption, optimize_for_sequence
from .receiver import FilterKind, filter_response
from .simulation import SequenceContext, make_sequence, proportion, run_draws, sequence_rng
from .waveform import PerturbationWeights, WaveformKind, modulate

log = logging.getLogger("isac_shield")

_COMM_NOISE = 3
_SA_STREAM = 4
_AMORTIZED_INDEX = 2**31 - 1

DETECTION_COLUMNS = (
    "snr_db",
    "beta",
    "waveform",
    "side",
    "filter",
    "secure",
    "pd",
    "pd_stderr",
    "kld_exact",
    "kld_surrogate",
    "rate_bits",
    "mismatch",
    "pslr_db",
)
EVE_COMPARE_COLUMNS = ("mode",) + DETECTION_COLUMNS
TRADEOFF_COLUMNS = (
    "ladder",
    "beta",
    "waveform",
    "pd_bs",
    "pd_bs_stderr",
    "pd_eve",
    "pd_eve_stderr",
    "pd_gap",
    "pd_gap_stderr",
    "rate_bits",
    "mismatch",
    "kld_gap",
)
CASE_COLUMNS = ("waveform", "beta", "record", "side", "l", "k", "value")
VERIFY_COLUMNS = ("check", "passed", "value", "tolerance")


@dataclass
class ExperimentResult:
    experiment: str
    columns: tuple[str, ...]
    rows: list[dict] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def sorted_rows(self) -> list[dict]:
        return sorted(self.rows, key=lambda r: tuple(_sort_key(r[c]) for c in self.columns))


def _sort_key(v):
    if isinstance(v, (bool, np.bool_)):
        return (0, int(v), "")
    if isinstance(v, (int, float)):
        return (0, float(v), "")
    return (1, 0.0, str(v))


# -- emission -------------------------------------------------------------------


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        if math.isnan(v):
            return "nan"
        return f"{float(v):.6g}"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _json_value(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (float, np.floating)):
        if not math.isfinite(v):
            return None
        return float(f"{float(v):.6g}")
    if isinstance(v, (int, np.integer)):
        return int(v)
    return v


def build_id() -> str:
    """Content hash of the package sources, stable across runs."""
    h = hashlib.sha256()
    for path in sorted(Path(__file__).parent.glob("*.py")):
        h.update(path.name.encode())
        h.update(path.read_bytes())
    return h.hexdigest()[:12]


def emit_results(result: ExperimentResult, path: str | Path, fmt: str = "csv") -> None:
    path = Path(path)
    rows = result.sorted_rows()
    meta = {"experiment": result.experiment, **result.metadata}
    if fmt == "json":
        doc = {
            "metadata": meta,
            "columns": list(result.columns),
            "rows": [{c: _json_value(r[c]) for c in result.columns} for r in rows],
        }
        text = json.dumps(doc, indent=2, sort_keys=False) + "\n"
        path.write_text(text, encoding="utf-8")
        return
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for key in sorted(meta):
            fh.write(f"# {key}: {json.dumps(meta[key], sort_keys=True)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(result.columns)
        for r in rows:
            writer.writerow([format_value(r[c]) for c in result.columns])


def read_csv_rows(path: str | Path) -> tuple[dict, list[dict]]:
    """Parse an emitted CSV back into ``(metadata, rows)`` with string values."""
    meta = {}
    body = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition(": ")
            meta[key] = json.loads(value)
        else:
            body.append(line)
    return meta, list(csv.DictReader(body))


def base_metadata(cfg: ScenarioConfig, **extra) -> dict:
    cw = cfg.cfar
    meta = {
        "build_id": build_id(),
        "seed": cfg.seed,
        "trials": cfg.trials,
        "draws_per_sequence": cfg.draws_per_sequence,
        "amortized": cfg.amortized,
        "sa_budget": cfg.sa.max_evals if cfg.amortized else cfg.sa_per_sequence_evals,
        "cfar_window": f"guard={cw.guard_cells},training={cw.training_cells},threshold_db={cw.threshold_db:g},wrap={cw.wrap}",
        "config": config_to_sections(cfg),
    }
    meta.update(extra)
    return meta


# -- work items -----------------------------------------------------------------


def _sa_settings(cfg: ScenarioConfig, sequence: int, tag: int, full: bool = False):
    seed = int(np.random.SeedSequence([cfg.seed, sequence, _SA_STREAM, tag]).generate_state(1)[0])
    if cfg.amortized or full:
        return replace(cfg.sa, seed=seed)
    return replace(cfg.sa, seed=seed, max_evals=cfg.sa_per_sequence_evals)


def design_weights(
    cfg: ScenarioConfig, ctx: SequenceContext, beta: float, snr_db: float, ladder=None, tag: int = 0, full: bool = False
):
    """SA weights for one sequence; ``full`` uses the whole annealing budget."""
    eve = eve_assumption(cfg, snr_db, ladder)
    sa = _sa_settings(cfg, ctx.index, tag, full)
    return optimize_for_sequence(cfg, ctx.s, ctx.H_eff, beta, eve, sa, snr_db, ladder)


def amortized_weights(cfg: ScenarioConfig, beta: float, snr_db: float, ladder=None, tag: int = 0):
    """Weights optimised once on a dedicated sequence and reused everywhere."""
    ctx = make_sequence(cfg, _AMORTIZED_INDEX)
    return design_weights(cfg, ctx, beta, snr_db, ladder, tag)


def comm_terms(cfg: ScenarioConfig, ctx: SequenceContext, w: PerturbationWeights) -> tuple[float, float]:
    """``(mismatch, rate_bits)`` for one sequence; the receiver noise is seeded per sequence."""
    mismatch = metrics.comm_mismatch(ctx.H_eff, w, cfg.waveform, ctx.s, cfg.M, cfg.N)
    z = crandn(sequence_rng(cfg.seed, ctx.index, _COMM_NOISE), cfg.size, cfg.comm_spec().noise_var)
    s_energy = float(np.vdot(ctx.s.data, ctx.s.data).real)
    rate = metrics.achievable_rate(mismatch, s_energy, float(np.vdot(z, z).real))
    return mismatch, rate


def _side_stats(x, targets, side, kind, noise_var):
    stats = metrics.detection_stats(x, targets, side, noise_var, kind=kind)
    try:
        return metrics.kld_exact(stats), metrics.kld_surrogate(stats)
    except metrics.DegenerateStatsError:
        return float("nan"), float("nan")


def _ambiguity_pslr(x, kind, noise_var) -> float:
    return metrics.pslr(filter_response(x, kind, noise_var), (0, 0))


def _sequence_item(args) -> dict:
    """All per-sequence quantities for one SNR point and one weight choice."""
    cfg, index, snr_db, beta, secure, shared_w, ladder = args
    ctx = make_sequence(cfg, index)
    if not secure:
        w = PerturbationWeights.ones(cfg.size)
    elif shared_w is not None:
        w = shared_w
    else:
        w = design_weights(cfg, ctx, beta, snr_db, ladder)
    out = run_draws(cfg, ctx, w, snr_db, ladder)
    mismatch, rate = comm_terms(cfg, ctx, w)
    x = modulate(ctx.s, cfg.waveform, w, cfg.M, cfg.N)
    targets = cfg.targets(snr_db, ladder)
    bs_noise, eve_noise = cfg.bs_noise_var(snr_db), cfg.eve_noise_var(snr_db)
    item = {
        "bs_hits": out.bs_hits,
        "eve_hits": out.eve_hits,
        "draws": out.draws,
        "mismatch": mismatch,
        "rate": rate,
        "filters": {},
    }
    entries = [("bs", "lmmse", bs_noise)] + [("eve", f, eve_noise) for f in cfg.eve_filters]
    for side, f, nv in entries:
        ke, ks = _side_stats(x, targets, side, FilterKind(f), nv)
        item["filters"][(side, f)] = (ke, ks, _ambiguity_pslr(x, FilterKind(f), nv))
    bs_stats = metrics.detection_stats(x, targets, "bs", bs_noise)
    eve_stats = metrics.detection_stats(x, targets, "eve", eve_noise)
    item["kld_gap"] = metrics.gap_from_stats(bs_stats, eve_stats)[0]
    return item


def _map(fn, items, threads: int):
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * threads))))
    return [fn(i) for i in items]


def _nanmean(values) -> float:
    arr = np.asarray(values, dtype=float)
    arr = arr[np.isfinite(arr)]
    return float(arr.mean()) if arr.size else float("nan")


def _detection_rows(cfg: ScenarioConfig, snr_db: float, beta: float, secure: bool, items: list[dict]) -> list[dict]:
    n = sum(it["draws"] for it in items)
    mismatch = float(np.mean([it["mismatch"] for it in items]))
    rate = float(np.mean([it["rate"] for it in items]))
    rows = []
    entries = [("bs", "lmmse")] + [("eve", f) for f in cfg.eve_filters]
    for side, f in entries:
        hits = sum(it["bs_hits"] if side == "bs" else it["eve_hits"][f] for it in items)
        pd, se = proportion(hits, n)
        vals = [it["filters"][(side, f)] for it in items]
        rows.append(
            {
                "snr_db": float(snr_db),
                "beta": float(beta),
                "waveform": cfg.waveform.value,
                "side": side,
                "filter": f,
                "secure": secure,
                "pd": pd,
                "pd_stderr": se,
                "kld_exact": _nanmean([v[0] for v in vals]),
                "kld_surrogate": _nanmean([v[1] for v in vals]),
                "rate_bits": rate,
                "mismatch": mismatch,
                "pslr_db": _nanmean([v[2] for v in vals]),
            }
        )
    return rows


def detection_rows(cfg: ScenarioConfig, threads: int = 1) -> list[dict]:
    rows = []
    for snr in cfg.snr_sweep_db:
        shared = amortized_weights(cfg, cfg.beta, snr) if cfg.amortized else None
        for secure in (False, True):
            items = _map(
                _sequence_item,
                [(cfg, i, snr, cfg.beta, secure, shared, None) for i in range(cfg.trials)],
                threads,
            )
            rows.extend(_detection_rows(cfg, snr, cfg.beta, secure, items))
        log.info("snr %g dB done", snr)
    return rows


# -- experiments ------------------------------------------------------------------


def run_detection_sweep(cfg: ScenarioConfig, threads: int = 1) -> ExperimentResult:
    """Pd, KLDs, rate and PSLR over the target-SNR sweep, baseline and secure."""
    cfg.validate()
    return ExperimentResult("detection-sweep", DETECTION_COLUMNS, detection_rows(cfg, threads), base_metadata(cfg))


def run_eve_mode_comparison(cfg: ScenarioConfig, threads: int = 1) -> ExperimentResult:
    """The detection sweep once Eve-aware and once Eve-agnostic."""
    cfg.validate()
    rows = []
    for mode in ("aware", "agnostic"):
        for r in detection_rows(cfg.with_(eve_mode=mode), threads):
            rows.append({"mode": mode, **r})
    return ExperimentResult("eve-compare", EVE_COMPARE_COLUMNS, rows, base_metadata(cfg))


def _tradeoff_item(args) -> dict:
    cfg, index, snr_db, beta, ladder, shared_w = args
    ctx = make_sequence(cfg, index)
    w = shared_w if shared_w is not None else design_weights(cfg, ctx, beta, snr_db, ladder)
    out = run_draws(cfg, ctx, w, snr_db, ladder, eve_filters=("mf",))
    mismatch, rate = comm_terms(cfg, ctx, w)
    x = modulate(ctx.s, cfg.waveform, w, cfg.M, cfg.N)
    targets = cfg.targets(snr_db, ladder)
    bs = metrics.detection_stats(x, targets, "bs", cfg.bs_noise_var(snr_db))
    eve = metrics.detection_stats(x, targets, "eve", cfg.eve_noise_var(snr_db))
    # per-draw detection pairs give the paired gap variance
    return {
        "bs_hits": out.bs_hits,
        "eve_hits": out.eve_hits["mf"],
        "draws": out.draws,
        "mismatch": mismatch,
        "rate": rate,
        "kld_gap": metrics.gap_from_stats(bs, eve)[0],
    }


def run_tradeoff_sweep(cfg: ScenarioConfig, threads: int = 1) -> ExperimentResult:
    """Pd gap and average rate over the beta grid for every clutter ladder."""
    cfg.validate()
    snr = cfg.target_snr_db
    rows = []
    for ladder in cfg.clutter_ladders_db:
        label = ladder_label(ladder)
        for beta in cfg.beta_sweep:
            shared = amortized_weights(cfg, beta, snr, ladder) if cfg.amortized else None
            items = _map(_tradeoff_item, [(cfg, i, snr, beta, ladder, shared) for i in range(cfg.trials)], threads)
            n = sum(it["draws"] for it in items)
            pb, sb = proportion(sum(it["bs_hits"] for it in items), n)
            pe, se = proportion(sum(it["eve_hits"] for it in items), n)
            rows.append(
                {
                    "ladder": label,
                    "beta": float(beta),
                    "waveform": cfg.waveform.value,
                    "pd_bs": pb,
                    "pd_bs_stderr": sb,
                    "pd_eve": pe,
                    "pd_eve_stderr": se,
                    "pd_gap": pb - pe,
                    "pd_gap_stderr": math.hypot(sb, se),
                    "rate_bits": float(np.mean([it["rate"] for it in items])),
                    "mismatch": float(np.mean([it["mismatch"] for it in items])),
                    "kld_gap": float(np.mean([it["kld_gap"] for it in items])),
                }
            )
            log.info("ladder %s beta %g done", label, beta)
    return ExperimentResult("tradeoff-sweep", TRADEOFF_COLUMNS, rows, base_metadata(cfg))


@dataclass
class CaseDesign:
    waveform: str
    beta: float
    tf_power: np.ndarray
    rd: dict[str, np.ndarray]
    pslr_db: dict[str, float]


def case_design(cfg: ScenarioConfig, beta: float) -> CaseDesign:
    """One fixed sequence, one design, one noisy BS and Eve RD map each."""
    ctx = make_sequence(cfg, 0)
    snr = cfg.target_snr_db
    w = design_weights(cfg, ctx, beta, snr, tag=int(round(beta * 1000)), full=True)
    x = modulate(ctx.s, cfg.waveform, w, cfg.M, cfg.N)
    targets = cfg.targets(snr)
    from .simulation import simulate_maps

    rng = sequence_rng(cfg.seed, ctx.index, 2)
    maps = simulate_maps(
        x, targets, cfg.bs_noise_var(snr), cfg.eve_noise_var(snr), rng, ("mf",), cfg.desired_fading
    )
    rd = {"bs": maps.bs, "eve": maps.eve["mf"]}
    p = targets.desired_index
    out = {}
    for side, tl in (("bs", targets.bs_targets), ("eve", targets.eve_targets)):
        others = [(t.l, t.k) for i, t in enumerate(tl) if i != p]
        out[side] = metrics.pslr(rd[side], (tl[p].l, tl[p].k), exclude=others)
    return CaseDesign(cfg.waveform.value, beta, np.abs(w.grid(cfg.M, cfg.N)) ** 2, rd, out)


def run_case_study(cfg: ScenarioConfig, threads: int = 1) -> ExperimentResult:
    """RD maps, PSLRs and TF power grids for beta in {0, 1} and both waveforms."""
    cfg.validate()
    rows = []
    targets = cfg.targets()
    p = targets.desired_index
    bins = {"bs": targets.bs_targets[p], "eve": targets.eve_targets[p]}
    for wf in (WaveformKind.OTFS, WaveformKind.OFDM):
        wcfg = cfg.with_(waveform=wf)
        for beta in (0.0, 1.0):
            d = case_design(wcfg, beta)
            base = {"waveform": wf.value, "beta": beta}
            for side in ("bs", "eve"):
                t = bins[side]
                rows.append({**base, "record": "pslr_db", "side": side, "l": t.l, "k": t.k, "value": d.pslr_db[side]})
                for (l, k), v in np.ndenumerate(np.abs(d.rd[side]) ** 2):
                    rows.append({**base, "record": "rd_power", "side": side, "l": l, "k": k, "value": float(v)})
            for (m, n), v in np.ndenumerate(d.tf_power):
                rows.append({**base, "record": "tf_power", "side": "tx", "l": m, "k": n, "value": float(v)})
    return ExperimentResult("case-study", CASE_COLUMNS, rows, base_metadata(cfg))


def run_verify(cfg: ScenarioConfig, threads: int = 1) -> ExperimentResult:
    """Fast oracle and identity checks that need no test runner."""
    from .verify import run_checks

    rows = [
        {"check": name, "passed": ok, "value": value, "tolerance": tol}
        for name, ok, value, tol in run_checks(cfg.seed)
    ]
    return ExperimentResult("verify", VERIFY_COLUMNS, rows, base_metadata(cfg))


RUNNERS = {
    "detection-sweep": run_detection_sweep,
    "case-study": run_case_study,
    "tradeoff-sweep": run_tradeoff_sweep,
    "eve-compare": run_eve_mode_comparison,
    "verify": run_verify,
}


# -- CLI --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="isac-shield", description="Sensing-secure ISAC waveform experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=name != "verify", help="TOML scenario file")
        p.add_argument("--out", required=True, help="output file")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--amortized", action="store_true", help="optimise once and reuse the weights")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config) if args.config else ScenarioConfig()
        changes = {}
        if args.seed is not None:
            changes["seed"] = args.seed
        if args.amortized:
            changes["amortized"] = True
        if changes:
            cfg = cfg.with_(**changes)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    result = RUNNERS[args.command](cfg, threads=args.threads)
    try:
        emit_results(result, args.out, args.format)
    except OSError as exc:
        print(f"error: cannot write {args.out}: {exc}", file=sys.stderr)
        return 1
    if args.command == "verify" and not all(r["passed"] for r in result.rows):
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
