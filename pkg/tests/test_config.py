# tests/test_config.py

import json
from pathlib import Path

import pytest

from moonshot_sim.core import config
from moonshot_sim.core.config import AdversaryStrategy, Mutation, SimConfig, parse_config_text
from moonshot_sim.core.errors import ConfigError
from moonshot_sim.core.utils import output_path, parse_seed_range


def test_defaults():
    cfg = SimConfig()
    assert (cfg.f, cfg.n, cfg.byzantine, cfg.honest) == (1, 4, (), (0, 1, 2, 3))
    assert cfg.adversary_strategy is AdversaryStrategy.PASSIVE
    assert cfg.mutation is None


def test_parse_config_text():
    cfg = parse_config_text(
        """
        # adversarial run
        f = 2
        byzantine = 6, 1
        seed = 42
        drop_probability = 0.1
        adversary_strategy = vote-splitter
        mutation = none
        quiescent_timers = true
        """
    )
    assert cfg.n == 7
    assert cfg.byzantine == (1, 6)
    assert cfg.honest == (0, 2, 3, 4, 5)
    assert cfg.adversary_strategy is AdversaryStrategy.VOTE_SPLITTER
    assert cfg.mutation is None
    assert cfg.quiescent_timers


@pytest.mark.parametrize(
    "text",
    [
        "f = 1\nbyzantine = 2,3",
        "byzantine = 4",
        "byzantine = 1,1",
        "f = -1",
        "drop_probability = 1.5",
        "colour = red",
        "seed = 1\nseed = 2",
        "just words",
        "adversary_strategy = sneaky",
        "adversary_strategy = scripted",
        "mutation = Everything",
    ],
)
def test_invalid_config_text(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_f_zero_single_validator():
    cfg = parse_config_text("f = 0")
    assert cfg.n == 1 and cfg.honest == (0,)


@pytest.mark.parametrize("raw", ["WeakQuorum", "weak_quorum", "WEAK-QUORUM", Mutation.WEAK_QUORUM])
def test_mutation_names_are_forgiving(raw):
    assert SimConfig(mutation=raw).mutation is Mutation.WEAK_QUORUM


def test_with_overrides_ignores_none():
    cfg = SimConfig(seed=3, max_steps=10)
    changed = cfg.with_overrides(seed=9, max_steps=None, mutation="NoLockCheck")
    assert (changed.seed, changed.max_steps) == (9, 10)
    assert changed.mutation is Mutation.NO_LOCK_CHECK
    assert cfg.seed == 3


def test_with_overrides_revalidates():
    with pytest.raises(ConfigError):
        SimConfig().with_overrides(byzantine=(0, 1))


def test_canonical_rebuilds_the_same_config():
    cfg = SimConfig(f=2, byzantine=(4,), mutation="MixedQcKinds")
    assert config.build_config(json.loads(cfg.canonical())) == cfg


def test_load_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        config.load_config(str(tmp_path / "none.cfg"))


def test_load_config_defaults_without_path():
    assert config.load_config(None) == SimConfig()


def test_output_dir_from_environment(monkeypatch):
    monkeypatch.setenv(config.OUTPUT_DIR_ENV_VAR, "/tmp/elsewhere")
    assert config.default_output_dir() == "/tmp/elsewhere"
    monkeypatch.delenv(config.OUTPUT_DIR_ENV_VAR)
    assert config.default_output_dir() == config.DEFAULT_OUTPUT_DIR


@pytest.mark.parametrize("text, expected", [("0..99", (0, 99)), ("5", (5, 5)), (" 3 .. 4 ", (3, 4))])
def test_parse_seed_range(text, expected):
    assert parse_seed_range(text) == expected


@pytest.mark.parametrize("text", ["9..3", "a..b", "-1..2", ""])
def test_parse_bad_seed_range(text):
    with pytest.raises(ValueError):
        parse_seed_range(text)


def test_output_path(tmp_path):
    target = tmp_path / "out"
    path = output_path(str(target), config.TRACE_FILENAME_TEMPLATE, 12)
    assert path == str(target / "trace-seed12.log")
    assert target.is_dir()
    assert output_path(None, config.TRACE_FILENAME_TEMPLATE, 12) is None


CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.mark.parametrize("name", ["base.cfg", "equivocator.cfg", "liveness.cfg", "explore.cfg"])
def test_shipped_configs_load(name):
    cfg = config.load_config(str(CONFIGS / name))
    assert cfg.f == 1


def test_shipped_bad_config_is_rejected():
    with pytest.raises(ConfigError):
        config.load_config(str(CONFIGS / "bad.cfg"))
