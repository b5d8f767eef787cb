import pytest

from fladopt.config import (
    ConfigError,
    RunConfig,
    apply_overrides,
    load_config,
    parse_config,
    save_config,
)


def write(tmp_path, text):
    path = tmp_path / "config.toml"
    path.write_text(text)
    return path


def test_empty_optimizer_section_gets_reference_defaults(tmp_path):
    cfg = load_config(write(tmp_path, "[optimizer]\n"))
    assert cfg.optimizer.eta == 0.1
    assert cfg.optimizer.rho == 0.2
    assert cfg.optimizer.momentum == 0.9
    assert cfg.optimizer.weight_decay == 5e-4
    assert cfg.run.batchsize == 128


def test_negative_rho_rejected_naming_the_field(tmp_path):
    path = write(tmp_path, "[optimizer]\nrho = -1.0\n")
    with pytest.raises(ConfigError, match="rho"):
        load_config(path)


def test_round_trip_save_load_is_identity(tmp_path):
    original = load_config(
        write(
            tmp_path,
            """
[dataset]
generator = "spirals"
classes = 3
noise = 0.35

[stream]
phases = 3
classes_per_phase = 1

[optimizer]
kind = "zeroth"
rho = 0.05
c = 1e-12

[schedule]
theorem_mode = true
flad_window = [0.25, 0.75]

[run]
epochs = 7
seeds = [4, 5]
""",
        )
    )
    out = tmp_path / "saved.toml"
    save_config(original, out)
    assert load_config(out) == original


def test_unknown_key_and_section_are_located(tmp_path):
    with pytest.raises(ConfigError, match=r"optimizer\.rh0"):
        load_config(write(tmp_path, "[optimizer]\nrh0 = 0.1\n"))
    with pytest.raises(ConfigError, match=r"\[optimiser\]"):
        load_config(write(tmp_path, "[optimiser]\nrho = 0.1\n"))


def test_parse_error_carries_position(tmp_path):
    with pytest.raises(ConfigError, match="line"):
        load_config(write(tmp_path, "[optimizer\nrho = 0.1\n"))


def test_missing_file_is_config_error():
    with pytest.raises(ConfigError, match="no such config"):
        load_config("/nonexistent/path.toml")


def test_type_errors_name_the_path(tmp_path):
    with pytest.raises(ConfigError, match=r"optimizer\.rho: expected a number"):
        load_config(write(tmp_path, '[optimizer]\nrho = "big"\n'))
    with pytest.raises(ConfigError, match=r"run\.epochs: expected an integer"):
        load_config(write(tmp_path, "[run]\nepochs = 2.5\n"))
    with pytest.raises(ConfigError, match=r"schedule\.theorem_mode"):
        load_config(write(tmp_path, '[schedule]\ntheorem_mode = "yes"\n'))


def test_stream_capacity_and_phase_constraints(tmp_path):
    with pytest.raises(ConfigError, match="exceed"):
        load_config(write(tmp_path, "[dataset]\nclasses = 4\n[stream]\nphases = 3\n"))
    with pytest.raises(ConfigError, match="replay_capacity"):
        load_config(write(tmp_path, "[stream]\nreplay_capacity = -5\nphases = 2\n"))


def test_csv_generator_requires_paths(tmp_path):
    with pytest.raises(ConfigError, match="train_csv"):
        load_config(write(tmp_path, '[dataset]\ngenerator = "csv"\n'))


def test_flad_variant_pinned(tmp_path):
    with pytest.raises(ConfigError, match="noise-component"):
        load_config(write(tmp_path, '[optimizer]\nkind = "flad"\nvariant = "random"\n'))


def test_overrides_parse_toml_scalars():
    raw = RunConfig().to_dict()
    merged = apply_overrides(
        raw, ["optimizer.rho=0.05", "optimizer.kind=zeroth", "run.seeds=[9]", "schedule.theorem_mode=true"]
    )
    cfg = parse_config(merged)
    assert cfg.optimizer.rho == 0.05
    assert cfg.optimizer.kind == "zeroth"
    assert cfg.run.seeds == (9,)
    assert cfg.schedule.theorem_mode is True


def test_override_syntax_errors():
    raw = RunConfig().to_dict()
    with pytest.raises(ConfigError, match="section.key=value"):
        apply_overrides(raw, ["optimizerrho0.05"])
    with pytest.raises(ConfigError, match="section.key"):
        apply_overrides(raw, ["optimizer.rho.extra=1"])
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config(apply_overrides(raw, ["optimizer.learningrate=0.1"]))


def test_defaults_build_without_any_file():
    cfg = parse_config({})
    assert cfg == RunConfig()
    assert cfg.stream.phases == 5
    assert cfg.stream.replay_capacity == 200
