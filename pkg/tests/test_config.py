import json

import pytest

from compactformer.config import ConfigError, RunConfig, load_config


class TestRoundTrip:
    def test_defaults(self):
        cfg = RunConfig()
        assert RunConfig.from_dict(json.loads(cfg.to_json())) == cfg

    def test_non_default(self):
        cfg = RunConfig(seed=4).with_overrides("grid", patch_lengths=(8,), families=("informer", "autoformer"),
                                               regimes=("clean", "noisy"), epochs=3)
        cfg = cfg.with_overrides("probsparse", c=3.0, lazy_mode="topk")
        back = RunConfig.from_dict(json.loads(cfg.to_json()))
        assert back == cfg and back.grid.patch_lengths == (8,)

    def test_empty_document_is_defaults(self):
        assert RunConfig.from_dict({}) == RunConfig()

    def test_load(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"seed": 9, "koopformer": {"system": "lorenz"}}))
        cfg = load_config(path)
        assert cfg.seed == 9 and cfg.koopformer.patch == 200 and cfg.koopformer.n_epochs == 3000


class TestRejects:
    @pytest.mark.parametrize("doc", [
        {"sed": 1},
        {"grid": {"patches": [4]}},
        {"probsparse": {"factor": 5}},
        {"koopformer": {"latent": 8}},
    ])
    def test_unknown_keys(self, doc):
        with pytest.raises(ConfigError, match="unknown config keys"):
            RunConfig.from_dict(doc)

    @pytest.mark.parametrize("doc", [
        {"config_version": 2},
        {"seed": -1},
        {"seed": "zero"},
        {"grid": {"signals": ["square"]}},
        {"grid": {"regimes": ["dirty"]}},
        {"grid": {"split_fraction": 1.0}},
        {"probsparse": {"lazy_mode": "median"}},
        {"noise": {"shift_prob": 2.0}},
        {"koopformer": {"backbone": "rnn"}},
        {"koopformer": {"system": "duffing"}},
        [],
    ])
    def test_invalid_values(self, doc):
        with pytest.raises(ConfigError):
            RunConfig.from_dict(doc)

    def test_unreadable_file(self, tmp_path):
        (tmp_path / "bad.json").write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(tmp_path / "bad.json")
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.json")


class TestDerived:
    def test_grid_spec_carries_seed_and_noise(self):
        spec = RunConfig(seed=3).grid_spec(noise=True)
        assert spec.seed == 3 and spec.noise and spec.noise_config.seed == 3
        assert spec.n_epochs == 600 and len(spec.cells()) == 750

    def test_overrides_skip_none(self):
        cfg = RunConfig()
        assert cfg.with_overrides("grid", epochs=None) is cfg

    def test_koopformer_config(self):
        k = RunConfig().koopformer_config(d_state=2)
        assert (k.P, k.H, k.d_latent, k.d_ff) == (16, 5, 16, 64)
