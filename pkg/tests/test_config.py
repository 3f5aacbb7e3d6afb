import math
from pathlib import Path

import pytest

from isac_shield.config import (
    ConfigError,
    ScenarioConfig,
    case_study,
    config_to_sections,
    expand_ladder,
    from_dict,
    ladder_label,
    load_config,
    sensing_levels,
    table1,
    table2,
)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


class TestLadder:
    def test_table1_ladder(self):
        assert expand_ladder(-15.0, 10.0, 2) == [10.0, -15.0]
        assert sorted(expand_ladder(-15.0, 10.0, 3)) == [-15.0, -2.5, 10.0]

    def test_upper_to_lower(self):
        assert expand_ladder(-12.0, 13.0, 3) == [13.0, 0.5, -12.0]

    def test_single_value(self):
        assert expand_ladder(-15.0, 10.0, 1) == [10.0]

    def test_empty_rejected(self):
        with pytest.raises(ConfigError):
            expand_ladder(-15.0, 10.0, 0)

    def test_label(self):
        assert ladder_label((-15.0, 10.0)) == "[-15, 10] dB"
        assert ladder_label((-12.5, 13.0)) == "[-12.5, 13] dB"

    def test_clutter_levels_relative_to_desired(self):
        cfg = table1()
        ts = cfg.targets()
        a0 = ts.bs_targets[0].alpha0
        assert ts.bs_targets[1].alpha0 == pytest.approx(a0 * 10 ** (10 / 20))
        assert ts.bs_targets[2].alpha0 == pytest.approx(a0 * 10 ** (-15 / 20))


class TestLevels:
    def test_snr_convention(self):
        a, nv = sensing_levels(10.0, 8, 8)
        assert a == pytest.approx(8.0)
        assert nv == pytest.approx(0.1)

    def test_eve_offset(self):
        cfg = table1(eve_noise_offset_db=3.0)
        assert cfg.eve_noise_var() == pytest.approx(cfg.bs_noise_var() * 10**0.3)

    def test_comm_spec_conversion(self):
        spec = table1().comm_spec()
        assert spec.kappa_c == pytest.approx(10.0)
        assert spec.noise_var == pytest.approx(10**-2.5)


class TestValidation:
    @pytest.mark.parametrize(
        "change",
        [
            {"trials": 0},
            {"draws_per_sequence": 0},
            {"beta": 1.5},
            {"beta_sweep": (0.0, 1.2)},
            {"K": 2},
            {"bs_bins": ((8, 0), (5, 3), (3, 6))},
            {"eve_mode": "psychic"},
            {"eve_filters": ("mf", "bogus")},
            {"desired_fading": "nakagami"},
            {"nlos_scale": "column"},
        ],
    )
    def test_rejected(self, change):
        with pytest.raises((ConfigError, ValueError)):
            table1(**change)

    def test_cfar_window_must_fit(self):
        with pytest.raises(ValueError):
            table1(M=4, N=4, bs_bins=((0, 0), (1, 1), (2, 2)), eve_bins=((0, 0), (1, 1), (2, 2)))

    def test_unknown_section_and_key(self):
        with pytest.raises(ConfigError):
            from_dict({"nonsense": {}})
        with pytest.raises(ConfigError):
            from_dict({"scenario": {"colour": "red"}})
        with pytest.raises(ConfigError):
            from_dict({"annealing": {"speed": 1}})

    def test_bad_value_is_config_error(self):
        with pytest.raises(ConfigError):
            from_dict({"scenario": {"trials": 0}})


class TestToml:
    def test_presets_match_shipped_files(self):
        assert load_config(CONFIGS / "table1_otfs.toml") == table1("otfs")
        assert load_config(CONFIGS / "table1_ofdm.toml") == table1("ofdm")
        assert load_config(CONFIGS / "table2_otfs.toml") == table2("otfs")
        assert load_config(CONFIGS / "case_study.toml") == case_study()

    def test_sections(self, tmp_path):
        p = tmp_path / "c.toml"
        p.write_text(
            'preset = "table2"\n'
            "[scenario]\nwaveform = \"ofdm\"\ntrials = 7\n"
            "[annealing]\ncooling_rate = 0.9\n"
            "[cfar]\nthreshold_db = 12.0\n"
            "[eve]\nfilters = [\"mf\"]\n"
        )
        cfg = load_config(p)
        assert cfg.name == "table2"
        assert cfg.waveform.value == "ofdm"
        assert cfg.trials == 7
        assert cfg.sa.cooling_rate == 0.9
        assert cfg.cfar.threshold_db == 12.0
        assert cfg.eve_filters == ("mf",)
        assert cfg.target_snr_db == 25.0

    def test_unknown_preset(self, tmp_path):
        p = tmp_path / "c.toml"
        p.write_text('preset = "table9"\n')
        with pytest.raises(ConfigError):
            load_config(p)

    @pytest.mark.parametrize("make", [table1, table2, case_study])
    def test_sections_round_trip(self, make):
        cfg = make("ofdm", trials=3, seed=17, eve_mode="agnostic", surrogate_noise_offset_db=2.0)
        assert from_dict(config_to_sections(cfg)) == cfg

    def test_db_values_converted_once(self):
        cfg = table2()
        assert cfg.eve_direct_spec().kappa_e == pytest.approx(10.0)
        assert cfg.eve_direct_spec().noise_var == pytest.approx(0.01)
        assert math.isinf(ScenarioConfig(kappa_c_db=math.inf).comm_spec().kappa_c)
