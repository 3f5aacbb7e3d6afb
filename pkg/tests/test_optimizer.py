import numpy as np
import pytest

from isac_shield import metrics
from isac_shield.config import SaSettings, table1
from isac_shield.optimizer import (
    ConstraintViolation,
    Objective,
    build_objective,
    eve_assumption,
    evaluate_objective,
    evaluate_objective_reference,
    optimize_for_sequence,
    propose_move,
    simulated_annealing,
)
from isac_shield.simulation import make_sequence
from isac_shield.waveform import PerturbationWeights, normalize_weights, unvec


def crand(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def table1_objective(beta, kind="otfs", index=0):
    cfg = table1(kind)
    ctx = make_sequence(cfg, index)
    return build_objective(cfg, ctx.s, ctx.H_eff, beta, eve_assumption(cfg)), cfg, ctx


class ConstantObjective(Objective):
    def value(self, w):
        return 3.0


class TestObjective:
    @pytest.mark.parametrize("kind", ["ofdm", "otfs"])
    def test_beta_one_is_gap(self, kind):
        obj, cfg, ctx = table1_objective(1.0, kind)
        w = normalize_weights(crand(np.random.default_rng(0), 64))
        x = unvec(w.w * obj.us, 8, 8)
        gap = metrics.kld_gap(x, cfg.targets(), cfg.bs_noise_var(), cfg.eve_noise_var())
        assert evaluate_objective(w, obj) == pytest.approx(gap, rel=1e-9)

    @pytest.mark.parametrize("kind", ["ofdm", "otfs"])
    def test_beta_zero_is_negative_mismatch(self, kind):
        obj, cfg, ctx = table1_objective(0.0, kind)
        w = normalize_weights(crand(np.random.default_rng(1), 64))
        mm = metrics.comm_mismatch(ctx.H_eff, w, kind, ctx.s, 8, 8)
        assert evaluate_objective(w, obj) == pytest.approx(-mm, rel=1e-12)

    @pytest.mark.parametrize("beta", [0.0, 0.3, 0.75, 1.0])
    @pytest.mark.parametrize("kind", ["ofdm", "otfs"])
    def test_fast_matches_reference(self, beta, kind):
        obj, _, _ = table1_objective(beta, kind)
        rng = np.random.default_rng(2)
        for _ in range(20):
            w = normalize_weights(crand(rng, 64))
            fast = evaluate_objective(w, obj)
            ref = evaluate_objective_reference(w, obj)
            assert fast == pytest.approx(ref, rel=1e-12, abs=1e-12)

    def test_infeasible_weights(self):
        obj, _, _ = table1_objective(0.5)
        with pytest.raises(ConstraintViolation):
            evaluate_objective(PerturbationWeights(np.full(64, 2.0 + 0j)), obj)

    def test_invalid_beta(self):
        obj, _, _ = table1_objective(0.5)
        with pytest.raises(ValueError):
            Objective(1.5, obj.H_eff, "otfs", obj.s, 8, 8, obj.bs, obj.eve)


class TestProposeMove:
    def test_zero_scales_identity(self):
        w = normalize_weights(crand(np.random.default_rng(0), 64))
        sa = SaSettings(move_scale_amp=0.0, move_scale_phase=0.0, batch=4)
        np.testing.assert_allclose(propose_move(w, sa, np.random.default_rng(1)).w, w.w, rtol=1e-14)

    def test_feasible_power(self):
        rng = np.random.default_rng(2)
        w = PerturbationWeights.ones(64)
        for batch in (1, 3, 64):
            for _ in range(50):
                w = propose_move(w, SaSettings(batch=batch), rng)
                assert w.power == pytest.approx(64.0, rel=1e-12)

    def test_touches_batch_bins_only(self):
        w = PerturbationWeights.ones(64)
        new = propose_move(w, SaSettings(batch=3), np.random.default_rng(3))
        ratio = new.w / w.w
        # untouched bins share one real renormalisation factor
        common = np.median(np.abs(ratio))
        changed = ~np.isclose(ratio, common, rtol=1e-12)
        assert 1 <= changed.sum() <= 3

    def test_mean_power_moves(self):
        rng = np.random.default_rng(4)
        w = PerturbationWeights.ones(64)
        p = np.mean([propose_move(w, SaSettings(), rng).power for _ in range(10_000)])
        assert p == pytest.approx(64.0, rel=1e-12)


class TestAnnealing:
    def test_constant_objective(self):
        obj, _, _ = table1_objective(0.5)
        const = ConstantObjective(0.5, obj.H_eff, "otfs", obj.s, 8, 8, obj.bs, obj.eve)
        init = PerturbationWeights.ones(64)
        res = simulated_annealing(init, const, SaSettings(initial_temp=1.0, max_evals=500, seed=1))
        assert res.best_value == 3.0
        assert res.initial_value == 3.0
        np.testing.assert_array_equal(res.best_w.w, init.w)

    def test_comm_only_identity_optimum(self):
        # OFDM with H = I: all-ones is the global optimum with zero mismatch
        obj, _, ctx = table1_objective(0.0, "ofdm")
        obj = Objective(0.0, np.eye(64), "ofdm", ctx.s, 8, 8, obj.bs, obj.eve)
        res = simulated_annealing(PerturbationWeights.ones(64), obj, SaSettings(seed=2))
        assert -res.best_value <= 1e-3
        assert res.best_value >= res.initial_value

    def test_comm_only_improves_from_random_start(self):
        rng = np.random.default_rng(5)
        obj, _, ctx = table1_objective(0.0, "ofdm")
        obj = Objective(0.0, np.eye(64), "ofdm", ctx.s, 8, 8, obj.bs, obj.eve)
        init = normalize_weights(1.0 + 0.3 * crand(rng, 64))
        res = simulated_annealing(init, obj, SaSettings(seed=2))
        assert res.best_value > res.initial_value

    def test_gap_run_lowers_eve_kld(self):
        obj, cfg, _ = table1_objective(1.0)
        res = simulated_annealing(PerturbationWeights.ones(64), obj, SaSettings(max_evals=3000, seed=1))

        def d_eve(w):
            x = unvec(w.w * obj.us, 8, 8)
            return metrics.kld_surrogate(metrics.detection_stats(x, cfg.targets(), "eve", cfg.eve_noise_var()))

        assert d_eve(res.best_w) < d_eve(PerturbationWeights.ones(64))

    def test_gap_improves_table1(self):
        for seed in range(10):
            obj, _, _ = table1_objective(1.0, "otfs", index=seed)
            res = simulated_annealing(PerturbationWeights.ones(64), obj, SaSettings(max_evals=3000, seed=seed))
            assert res.best_value > res.initial_value

    def test_best_is_monotone_and_feasible(self):
        obj, _, _ = table1_objective(0.5)
        res = simulated_annealing(PerturbationWeights.ones(64), obj, SaSettings(max_evals=2000, seed=3))
        best = [b for _, _, b in res.trace]
        assert all(b2 >= b1 for b1, b2 in zip(best, best[1:]))
        assert res.best_w.power == pytest.approx(64.0, rel=1e-12)
        assert res.best_value == pytest.approx(evaluate_objective(res.best_w, obj), rel=1e-12)
        assert res.budget_exhausted
        assert res.evaluations == 2000

    def test_deterministic(self):
        obj, _, _ = table1_objective(0.5)
        sa = SaSettings(max_evals=1000, seed=9)
        a = simulated_annealing(PerturbationWeights.ones(64), obj, sa)
        b = simulated_annealing(PerturbationWeights.ones(64), obj, sa)
        np.testing.assert_array_equal(a.best_w.w, b.best_w.w)
        assert a.trace == b.trace

    def test_frozen_temperature_is_hill_climb(self):
        obj, _, _ = table1_objective(0.0)
        res = simulated_annealing(
            PerturbationWeights.ones(64), obj, SaSettings(initial_temp=1e-300, max_evals=1000, seed=4)
        )
        cur = [c for _, c, _ in res.trace]
        assert all(c2 >= c1 for c1, c2 in zip(cur, cur[1:]))
        assert cur[-1] == res.best_value


class TestEveModes:
    def test_agnostic_with_true_surrogate_equals_aware(self):
        aware = table1("otfs")
        agnostic = aware.with_(
            eve_mode="agnostic",
            surrogate_clutter_range_db=aware.clutter_range_db,
            surrogate_noise_offset_db=aware.eve_noise_offset_db,
        )
        ctx = make_sequence(aware, 0)
        sa = SaSettings(max_evals=1500, seed=6)
        w1 = optimize_for_sequence(aware, ctx.s, ctx.H_eff, 1.0, eve_assumption(aware), sa)
        w2 = optimize_for_sequence(agnostic, ctx.s, ctx.H_eff, 1.0, eve_assumption(agnostic), sa)
        np.testing.assert_array_equal(w1.w, w2.w)

    def test_agnostic_uses_surrogate_noise(self):
        cfg = table1(eve_mode="agnostic", surrogate_noise_offset_db=10.0)
        assert eve_assumption(cfg).eve_noise_var == pytest.approx(10 * cfg.bs_noise_var())
