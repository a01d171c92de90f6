"""Tests for config module."""

import pathlib

import pytest

import kbnav.config
import kbnav.errors


@pytest.fixture(autouse=True)
def clean_env(monkeypatch) -> None:
    for name in (
        "KBNAV_SPARQL_ENDPOINT",
        "KBNAV_API_ENDPOINT",
        "KBNAV_CACHE_DIR",
        "KBNAV_MODEL",
        "XDG_CACHE_HOME",
    ):
        monkeypatch.delenv(name, raising=False)


def test_load_settings_defaults_without_file(
    tmp_path: pathlib.Path, monkeypatch
) -> None:
    """load_settings falls back to defaults when the default file is missing."""
    monkeypatch.setenv("XDG_CONFIG_HOME", str(tmp_path))
    settings = kbnav.config.load_settings()
    assert settings.client.sparql_endpoint_url == kbnav.config.DEFAULT_SPARQL_ENDPOINT
    assert settings.agent.max_steps == 30
    assert settings.llm.model == "gpt-4o"


def test_load_settings_reads_python_file(tmp_path: pathlib.Path) -> None:
    """Module-level attributes override defaults; unknown names are ignored."""
    config_fpath = tmp_path / "config.py"
    config_fpath.write_text(
        'sparql_endpoint_url = "http://localhost:9999/sparql"\n'
        "max_steps = 12\n"
        "policy_temperature = 1\n"
        f'cache_dir = "{tmp_path / "cache"}"\n'
        "unrelated = object()\n"
    )

    settings = kbnav.config.load_settings(config_fpath)
    assert settings.client.sparql_endpoint_url == "http://localhost:9999/sparql"
    assert settings.agent.max_steps == 12
    assert settings.agent.policy_temperature == 1.0
    assert isinstance(settings.agent.policy_temperature, float)
    assert settings.client.cache_dpath == tmp_path / "cache"


def test_load_settings_rejects_wrong_type(tmp_path: pathlib.Path) -> None:
    """A badly typed attribute names the file."""
    config_fpath = tmp_path / "config.py"
    config_fpath.write_text('max_steps = "thirty"\n')

    with pytest.raises(kbnav.errors.ConfigError, match="max_steps"):
        kbnav.config.load_settings(config_fpath)


def test_load_settings_rejects_bool_for_int(tmp_path: pathlib.Path) -> None:
    """bool is not accepted where an int is expected."""
    config_fpath = tmp_path / "config.py"
    config_fpath.write_text("max_resets = True\n")

    with pytest.raises(kbnav.errors.ConfigError, match="max_resets"):
        kbnav.config.load_settings(config_fpath)


def test_load_settings_missing_explicit_file(tmp_path: pathlib.Path) -> None:
    """An explicit config path must exist."""
    with pytest.raises(kbnav.errors.ConfigError, match="does not exist"):
        kbnav.config.load_settings(tmp_path / "nope.py")


def test_load_settings_broken_file(tmp_path: pathlib.Path) -> None:
    """A config file that fails to import raises ConfigError."""
    config_fpath = tmp_path / "config.py"
    config_fpath.write_text("raise RuntimeError('boom')\n")

    with pytest.raises(kbnav.errors.ConfigError, match="Failed to load"):
        kbnav.config.load_settings(config_fpath)


def test_load_settings_validation_names_file(tmp_path: pathlib.Path) -> None:
    """Out-of-range values are reported with the config file."""
    config_fpath = tmp_path / "config.py"
    config_fpath.write_text("request_timeout = 120\n")

    with pytest.raises(kbnav.errors.ConfigError) as exc_info:
        kbnav.config.load_settings(config_fpath)
    assert str(config_fpath) in exc_info.value.message
    assert exc_info.value.path == config_fpath


def test_env_overrides(tmp_path: pathlib.Path, monkeypatch) -> None:
    """Environment variables override the config file."""
    config_fpath = tmp_path / "config.py"
    config_fpath.write_text('llm_model = "from-file"\n')
    monkeypatch.setenv("KBNAV_MODEL", "from-env")
    monkeypatch.setenv("KBNAV_SPARQL_ENDPOINT", "http://env/sparql")
    monkeypatch.setenv("KBNAV_CACHE_DIR", str(tmp_path / "env-cache"))

    settings = kbnav.config.load_settings(config_fpath)
    assert settings.llm.model == "from-env"
    assert settings.client.sparql_endpoint_url == "http://env/sparql"
    assert settings.client.cache_dpath == tmp_path / "env-cache"


def test_get_cache_dpath_respects_xdg(tmp_path: pathlib.Path, monkeypatch) -> None:
    """XDG_CACHE_HOME decides the cache directory when KBNAV_CACHE_DIR is unset."""
    monkeypatch.setenv("XDG_CACHE_HOME", str(tmp_path))
    assert kbnav.config.get_cache_dpath() == tmp_path / "kbnav"


def test_get_config_fpath_respects_xdg(tmp_path: pathlib.Path, monkeypatch) -> None:
    """XDG_CONFIG_HOME decides the config file location."""
    monkeypatch.setenv("XDG_CONFIG_HOME", str(tmp_path))
    assert kbnav.config.get_config_fpath() == tmp_path / "kbnav" / "config.py"


def test_client_config_caps_timeout() -> None:
    """Request timeouts above the service limit are rejected."""
    with pytest.raises(kbnav.errors.ConfigError, match="request_timeout"):
        kbnav.config.ClientConfig(request_timeout=61.0)


def test_agent_config_rejects_zero_steps() -> None:
    """max_steps must be positive."""
    with pytest.raises(kbnav.errors.ConfigError, match="max_steps"):
        kbnav.config.AgentConfig(max_steps=0)
