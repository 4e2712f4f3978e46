"""Unit tests for configuration parsing, validation and presets."""

import json

import pytest

from mcfqkd.config import (
    ConfigError,
    dumps_config,
    geometry_from_config,
    loads_config,
    preset,
    preset_inner,
    preset_outer,
    preset_stability,
    selected_pairs,
    window_capture_fraction,
    worker_count,
)

MINIMAL = {"source": {"pair_rate": 1000.0}}


class TestParsing:
    def test_minimal_config(self):
        cfg = loads_config(json.dumps(MINIMAL))
        assert cfg.source.pair_rate == 1000.0
        assert cfg.ring == "inner"
        assert cfg.analysis.window_ps == 300

    def test_round_trip_idempotent(self):
        cfg = preset_outer()
        text = dumps_config(cfg)
        again = dumps_config(loads_config(text))
        assert text == again

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="detector_model: unknown key"):
            loads_config(json.dumps({**MINIMAL, "detector_model": 1}))

    def test_unknown_nested_key_reports_path(self):
        bad = {"source": {"pair_rate": 1.0, "brightness": 2.0}}
        with pytest.raises(ConfigError, match="source.brightness: unknown key"):
            loads_config(json.dumps(bad))

    def test_type_errors_report_path(self):
        bad = {"source": {"pair_rate": "fast"}}
        with pytest.raises(ConfigError, match="source.pair_rate"):
            loads_config(json.dumps(bad))
        bad = {"source": {"pair_rate": 1.0}, "analysis": {"window_ps": 0.5}}
        with pytest.raises(ConfigError, match="analysis.window_ps"):
            loads_config(json.dumps(bad))

    def test_invalid_json(self):
        with pytest.raises(ConfigError, match="invalid JSON"):
            loads_config("{nope")

    def test_semantic_validation(self):
        with pytest.raises(ConfigError, match="ring"):
            loads_config(json.dumps({**MINIMAL, "ring": "middle"}))
        with pytest.raises(ConfigError, match="pairs"):
            loads_config(json.dumps({**MINIMAL, "pairs": [0, 12]}))
        with pytest.raises(ConfigError, match="seed"):
            loads_config(json.dumps({**MINIMAL, "seed": -1}))

    def test_file_round_trip(self, tmp_path):
        from mcfqkd.config import dump_config, load_config

        cfg = preset_stability()
        path = tmp_path / "run.json"
        dump_config(cfg, path)
        assert dumps_config(load_config(path)) == dumps_config(cfg)


class TestPresets:
    def test_inner_preset_hits_target_rate(self):
        cfg = preset_inner()
        _, coupling = geometry_from_config(cfg)
        pairs = selected_pairs(cfg, coupling)
        assert len(pairs) == 3
        t = cfg.link.to_link_params().transmission
        eta = window_capture_fraction(cfg.analysis.window_ps, cfg.link.jitter_sigma_ps)
        keep = (1 - cfg.link.crosstalk_prob) ** 2
        mean_rate = (
            cfg.source.pair_rate
            * sum(p.coupling_prob for p in pairs)
            * t
            * t
            * eta
            * keep
            / len(pairs)
        )
        assert mean_rate == pytest.approx(4262.6, rel=1e-9)

    def test_outer_preset_hits_target_rate(self):
        cfg = preset_outer()
        _, coupling = geometry_from_config(cfg)
        pairs = selected_pairs(cfg, coupling)
        assert len(pairs) == 6
        t = cfg.link.to_link_params().transmission
        eta = window_capture_fraction(cfg.analysis.window_ps, cfg.link.jitter_sigma_ps)
        keep = (1 - cfg.link.crosstalk_prob) ** 2
        total = cfg.source.pair_rate * sum(p.coupling_prob for p in pairs) * t * t * eta * keep
        assert total == pytest.approx(6 * 7832.0, rel=1e-9)
        assert cfg.schedule.rate_scales["DA"] == pytest.approx(7770.0 / 7832.0)

    def test_stability_preset_is_single_pair_with_drift(self):
        cfg = preset_stability()
        assert cfg.pairs == [0]
        assert cfg.drift.rate_deg_per_hour > 0

    def test_preset_lookup(self):
        assert preset("inner").ring == "inner"
        with pytest.raises(ConfigError, match="unknown preset"):
            preset("nope")

    def test_explicit_empty_pairs_rejected(self):
        cfg = preset_inner()
        cfg.pairs = []
        _, coupling = geometry_from_config(cfg)
        with pytest.raises(ConfigError, match="empty pair set"):
            selected_pairs(cfg, coupling)


class TestWorkerCount:
    def test_env_cap(self, monkeypatch):
        monkeypatch.setenv("MCFQKD_THREADS", "2")
        assert worker_count(8) == 2
        assert worker_count(1) == 1

    def test_invalid_env(self, monkeypatch):
        monkeypatch.setenv("MCFQKD_THREADS", "many")
        with pytest.raises(ConfigError):
            worker_count(4)
        monkeypatch.setenv("MCFQKD_THREADS", "0")
        with pytest.raises(ConfigError):
            worker_count(4)

    def test_default_positive(self, monkeypatch):
        monkeypatch.delenv("MCFQKD_THREADS", raising=False)
        assert worker_count(4) >= 1
