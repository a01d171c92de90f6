"""Configuration loading and validation.

Config files are plain Python files. Every recognised module-level attribute
overrides the matching default; anything else in the file is ignored:

    sparql_endpoint_url = "https://query.wikidata.org/sparql"
    llm_model = "gpt-4o"
    max_steps = 30
"""

import dataclasses
import importlib.util
import os
import pathlib
import types
import typing as tp

import beartype

import kbnav.errors

DEFAULT_SPARQL_ENDPOINT = "https://query.wikidata.org/sparql"
DEFAULT_API_ENDPOINT = "https://www.wikidata.org/w/api.php"
DEFAULT_USER_AGENT = (
    "kbnav/0.1 (https://github.com/samuelstevens/kbnav; "
    "samuel.robert.stevens@gmail.com) python-requests"
)

# The public query service kills queries after 60 seconds.
MAX_SPARQL_TIMEOUT_S = 60.0


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class ClientConfig:
    """Knowledge-base client settings."""

    sparql_endpoint_url: str = DEFAULT_SPARQL_ENDPOINT
    api_endpoint_url: str = DEFAULT_API_ENDPOINT
    request_timeout: float = MAX_SPARQL_TIMEOUT_S
    """Seconds per HTTP request."""
    user_agent: str = DEFAULT_USER_AGENT
    max_retries: int = 3
    cache_dpath: pathlib.Path | None = None
    """Persist responses here; None keeps them in memory only."""
    min_request_interval: float = 0.0
    """Seconds between any two requests from this process."""
    max_response_bytes: int = 10 * 1024 * 1024
    offline: bool = False
    """Serve only from cache."""
    bypass_cache: bool = False
    """Always hit the network, but still refresh the cache."""

    def __post_init__(self) -> None:
        if self.request_timeout <= 0 or self.request_timeout > MAX_SPARQL_TIMEOUT_S:
            raise kbnav.errors.ConfigError(
                message=(
                    f"request_timeout must be in (0, 60], got {self.request_timeout}"
                ),
                hint="The public query service stops queries after 60 seconds.",
            )
        if self.min_request_interval < 0:
            raise kbnav.errors.ConfigError(
                message=(
                    "min_request_interval must be >= 0, "
                    f"got {self.min_request_interval}"
                ),
            )
        if self.max_retries < 0:
            raise kbnav.errors.ConfigError(
                message=f"max_retries must be >= 0, got {self.max_retries}",
            )
        if not self.user_agent.strip():
            raise kbnav.errors.ConfigError(
                message="user_agent must not be empty",
                hint="Wikimedia requires a descriptive User-Agent with contact info.",
            )


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class LlmConfig:
    """LLM provider settings."""

    provider: str = "openai"
    model: str = "gpt-4o"
    endpoint: str | None = None
    """Base URL for OpenAI-compatible servers; None uses the provider default."""
    api_key_env: str = "OPENAI_API_KEY"
    max_calls: int | None = None
    """Hard cap on calls per gateway; None is unlimited."""
    max_retries: int = 3


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class AgentConfig:
    """Agent loop settings."""

    max_steps: int = 30
    max_resets: int = 3
    max_parse_failures: int = 3
    """Consecutive unparseable policy outputs before giving up."""
    policy_temperature: float = 1.0
    policy_top_p: float = 0.9
    policy_max_tokens: int = 2048
    prune_max_tokens: int = 4096
    prune_entries: bool = True
    action_timeout: float = 90.0
    """Seconds before a single action is abandoned."""

    def __post_init__(self) -> None:
        if self.max_steps < 1:
            raise kbnav.errors.ConfigError(
                message=f"max_steps must be >= 1, got {self.max_steps}",
            )
        if self.max_resets < 0:
            raise kbnav.errors.ConfigError(
                message=f"max_resets must be >= 0, got {self.max_resets}",
            )
        if self.max_parse_failures < 1:
            raise kbnav.errors.ConfigError(
                message=(
                    f"max_parse_failures must be >= 1, got {self.max_parse_failures}"
                ),
            )
        if self.action_timeout <= 0:
            raise kbnav.errors.ConfigError(
                message=f"action_timeout must be > 0, got {self.action_timeout}",
            )


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class Settings:
    """Everything a command needs."""

    client: ClientConfig = dataclasses.field(default_factory=ClientConfig)
    llm: LlmConfig = dataclasses.field(default_factory=LlmConfig)
    agent: AgentConfig = dataclasses.field(default_factory=AgentConfig)


# (attribute in config file, section, field, expected type)
_ATTRS: tuple[tuple[str, str, str, type | tuple[type, ...]], ...] = (
    ("sparql_endpoint_url", "client", "sparql_endpoint_url", str),
    ("api_endpoint_url", "client", "api_endpoint_url", str),
    ("request_timeout", "client", "request_timeout", (int, float)),
    ("user_agent", "client", "user_agent", str),
    ("max_retries", "client", "max_retries", int),
    ("cache_dir", "client", "cache_dpath", (str, pathlib.Path)),
    ("min_request_interval", "client", "min_request_interval", (int, float)),
    ("max_response_bytes", "client", "max_response_bytes", int),
    ("llm_provider", "llm", "provider", str),
    ("llm_model", "llm", "model", str),
    ("llm_endpoint", "llm", "endpoint", str),
    ("llm_api_key_env", "llm", "api_key_env", str),
    ("llm_max_calls", "llm", "max_calls", int),
    ("llm_max_retries", "llm", "max_retries", int),
    ("max_steps", "agent", "max_steps", int),
    ("max_resets", "agent", "max_resets", int),
    ("max_parse_failures", "agent", "max_parse_failures", int),
    ("policy_temperature", "agent", "policy_temperature", (int, float)),
    ("policy_top_p", "agent", "policy_top_p", (int, float)),
    ("policy_max_tokens", "agent", "policy_max_tokens", int),
    ("prune_max_tokens", "agent", "prune_max_tokens", int),
    ("prune_entries", "agent", "prune_entries", bool),
    ("action_timeout", "agent", "action_timeout", (int, float)),
)

_FLOAT_FIELDS = {
    "request_timeout",
    "min_request_interval",
    "policy_temperature",
    "policy_top_p",
    "action_timeout",
}


@beartype.beartype
def get_config_fpath() -> pathlib.Path:
    """Get the default config file path, respecting XDG_CONFIG_HOME."""
    xdg_config = os.environ.get("XDG_CONFIG_HOME")
    if xdg_config:
        return pathlib.Path(xdg_config) / "kbnav" / "config.py"
    return pathlib.Path.home() / ".config" / "kbnav" / "config.py"


@beartype.beartype
def get_cache_dpath() -> pathlib.Path:
    """Get the default cache directory (KBNAV_CACHE_DIR, then XDG_CACHE_HOME)."""
    env_cache = os.environ.get("KBNAV_CACHE_DIR")
    if env_cache:
        return pathlib.Path(env_cache)
    xdg_cache = os.environ.get("XDG_CACHE_HOME")
    if xdg_cache:
        return pathlib.Path(xdg_cache) / "kbnav"
    return pathlib.Path.home() / ".cache" / "kbnav"


@beartype.beartype
def load_settings(config_fpath: pathlib.Path | None = None) -> Settings:
    """Load settings from a config file (if any) and apply env overrides.

    An explicit config_fpath must exist; the default path is optional.
    """
    explicit = config_fpath is not None
    if config_fpath is None:
        config_fpath = get_config_fpath()

    overrides: dict[str, dict[str, tp.Any]] = {"client": {}, "llm": {}, "agent": {}}
    if config_fpath.exists():
        module = _load_module(config_fpath)
        for attr, section, field, expected in _ATTRS:
            value = _get_optional_attr(module, attr, expected, config_fpath)
            if value is None:
                continue
            if field in _FLOAT_FIELDS:
                value = float(value)
            if field == "cache_dpath":
                value = pathlib.Path(value).expanduser()
            overrides[section][field] = value
    elif explicit:
        raise kbnav.errors.ConfigError(
            message=f"Config file does not exist: {config_fpath}",
            hint="Pass an existing file to --config, or omit it to use defaults.",
            path=config_fpath,
        )

    _apply_env(overrides)

    try:
        return Settings(
            client=ClientConfig(**overrides["client"]),
            llm=LlmConfig(**overrides["llm"]),
            agent=AgentConfig(**overrides["agent"]),
        )
    except kbnav.errors.ConfigError as err:
        raise kbnav.errors.ConfigError(
            message=f"{err.message} (in {config_fpath})",
            hint=err.hint,
            path=config_fpath,
        ) from None


@beartype.beartype
def _apply_env(overrides: dict[str, dict[str, tp.Any]]) -> None:
    """Apply environment variable overrides in place."""
    sparql = os.environ.get("KBNAV_SPARQL_ENDPOINT")
    if sparql:
        overrides["client"]["sparql_endpoint_url"] = sparql
    api = os.environ.get("KBNAV_API_ENDPOINT")
    if api:
        overrides["client"]["api_endpoint_url"] = api
    if os.environ.get("KBNAV_CACHE_DIR"):
        overrides["client"]["cache_dpath"] = get_cache_dpath()
    model = os.environ.get("KBNAV_MODEL")
    if model:
        overrides["llm"]["model"] = model


@beartype.beartype
def _load_module(config_fpath: pathlib.Path) -> types.ModuleType:
    """Import a config file as a Python module."""
    module_name = f"kbnav_config_{config_fpath.stem}"
    spec = importlib.util.spec_from_file_location(module_name, config_fpath)
    if spec is None or spec.loader is None:
        raise kbnav.errors.ConfigError(
            message=f"Unable to import config file: {config_fpath}",
            path=config_fpath,
        )

    module = importlib.util.module_from_spec(spec)
    try:
        spec.loader.exec_module(module)
    except Exception as err:
        raise kbnav.errors.ConfigError(
            message=f"Failed to load config file {config_fpath}: {err}",
            path=config_fpath,
        ) from None

    return module


@beartype.beartype
def _get_optional_attr(
    module: types.ModuleType,
    name: str,
    expected_type: type | tuple[type, ...],
    config_fpath: pathlib.Path,
) -> tp.Any:
    """Fetch an optional attribute from a module and validate its type."""
    if not hasattr(module, name):
        return None

    value = getattr(module, name)
    if value is None:
        return None
    # bool is an int subclass; only accept it where bool is expected.
    bool_ok = expected_type is bool or (
        isinstance(expected_type, tuple) and bool in expected_type
    )
    sneaky_bool = isinstance(value, bool) and not bool_ok
    if sneaky_bool or not isinstance(value, expected_type):
        names = (
            expected_type.__name__
            if isinstance(expected_type, type)
            else " or ".join(t.__name__ for t in expected_type)
        )
        raise kbnav.errors.ConfigError(
            message=f"Invalid type for '{name}' in {config_fpath} (expected {names})",
            path=config_fpath,
        )

    return value
