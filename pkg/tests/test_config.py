import numpy as np
import pytest
import yaml

from svdd.config import (
    BackendSettings,
    ConfigError,
    OptimSettings,
    RunConfig,
    dump_config,
    load_config,
    parse_chain,
)
from svdd.rawboost import IsdParams, LnLParams, ParameterError, SsiParams


class TestLoadConfig:
    def test_empty_file_gives_defaults(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("")
        assert load_config(path) == RunConfig()

    def test_nested_override(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("optim:\n  epochs: 3\n  batch_size: 4\n"
                        "aggregation:\n  kind: attm\n")
        cfg = load_config(path)
        assert cfg.optim.epochs == 3
        assert cfg.optim.batch_size == 4
        assert cfg.aggregation.kind == "attm"
        assert cfg.optim.lr == 1e-6  # untouched default

    def test_unknown_top_key_rejected(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("optimizer:\n  epochs: 3\n")
        with pytest.raises(ConfigError, match="optimizer"):
            load_config(path)

    def test_unknown_nested_key_has_dotted_path(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("optim:\n  learning_rate: 1\n")
        with pytest.raises(ConfigError, match="optim.learning_rate"):
            load_config(path)

    def test_invalid_value_reported(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("optim:\n  lr: 1.0e-12\n")
        # validation fires when the derived optimizer config is built
        with pytest.raises(ValueError, match="lr_min"):
            load_config(path).optim.to_optim_config()

    def test_non_mapping_rejected(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("- a\n- b\n")
        with pytest.raises(ConfigError, match="mapping"):
            load_config(path)

    def test_bad_feature_source(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("features:\n  source: wavlm\n")
        with pytest.raises(ConfigError, match="toy or svdf"):
            load_config(path)


class TestDumpConfig:
    def test_roundtrip_preserves_defaults(self, tmp_path):
        text = dump_config(RunConfig())
        path = tmp_path / "dumped.yaml"
        path.write_text(text)
        assert load_config(path) == RunConfig()

    def test_every_section_present(self):
        data = yaml.safe_load(dump_config(RunConfig()))
        assert set(data) == {"paths", "augmentation", "features",
                             "aggregation", "backend", "optim", "focal",
                             "evaluation"}
        assert data["optim"]["lr"] == 1e-6
        assert data["backend"]["block_strides"] == [[1, 1], [2, 2], [2, 2]]


class TestDerivedConfigs:
    def test_backend_settings_to_config(self):
        cfg = BackendSettings().to_backend_config()
        assert len(cfg.encoder) == 3
        assert cfg.encoder[1].stride == (2, 2)
        assert cfg.node_dim == 16

    def test_backend_settings_length_mismatch(self):
        with pytest.raises(ConfigError, match="equal lengths"):
            BackendSettings(block_channels=(8, 8), block_kernels=(3, 3, 3))

    def test_optim_settings_to_config(self):
        oc = OptimSettings(lr=1e-3, lr_min=1e-5).to_optim_config()
        assert oc.lr == 1e-3 and oc.betas == (0.9, 0.999)


class TestParseChain:
    def test_none(self):
        assert parse_chain("none") is None

    def test_single_step(self):
        chain = parse_chain("lnl")
        assert chain.mode == "series"
        assert chain.steps[0][0] == "lnl"
        assert isinstance(chain.steps[0][1], LnLParams)

    def test_series_two_steps(self):
        chain = parse_chain("series:lnl+isd")
        assert [k for k, _ in chain.steps] == ["lnl", "isd"]

    def test_parallel(self):
        chain = parse_chain("parallel:lnl+ssi")
        assert chain.mode == "parallel"
        assert isinstance(chain.steps[1][1], SsiParams)

    def test_unknown_step(self):
        with pytest.raises(ParameterError, match="reverb"):
            parse_chain("series:reverb")

    def test_parallel_needs_two(self):
        with pytest.raises(ParameterError, match="exactly two"):
            parse_chain("parallel:lnl")

    def test_empty_rejected(self):
        with pytest.raises(ParameterError, match="empty"):
            parse_chain("series:")
