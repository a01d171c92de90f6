"""User-facing errors with actionable context.

Errors are messages for humans. Each error should answer:
1. What went wrong?
2. What was the context?
3. What can the user do about it?

See https://fast.github.io/blog/stop-forwarding-errors-start-designing-them
"""

import dataclasses
import pathlib

import beartype


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class KbnavError(Exception):
    """Base error with structured context for user-facing messages."""

    message: str
    """What went wrong."""

    hint: str | None = None
    """What the user can do about it."""

    def __str__(self) -> str:
        parts = [self.message]
        if self.hint:
            parts.append(f"Hint: {self.hint}")
        return "\n".join(parts)


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class ConfigError(KbnavError):
    """Configuration is missing or invalid."""

    path: pathlib.Path | None = None
    """Related path, if any."""


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class LockError(KbnavError):
    """Another kbnav process holds a lock we need."""

    lock_fpath: pathlib.Path = dataclasses.field(kw_only=True)
    """Path to the lock file."""

    @staticmethod
    def make(lock_fpath: pathlib.Path) -> "LockError":
        """Create a LockError with default message and hint."""
        return LockError(
            message=f"Timed out waiting for lock {lock_fpath}",
            hint=f"Wait for the other run to finish, or delete {lock_fpath} if stale.",
            lock_fpath=lock_fpath,
        )


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class CacheError(KbnavError):
    """A cache or checkpoint file is corrupted."""

    fpath: pathlib.Path = dataclasses.field(kw_only=True)
    """Offending file."""

    @staticmethod
    def make(message: str, fpath: pathlib.Path) -> "CacheError":
        """Create a CacheError with default hint."""
        return CacheError(
            message=message,
            hint=f"Delete {fpath} to force it to be rebuilt.",
            fpath=fpath,
        )


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class InvalidIdError(KbnavError):
    """A QID or PID is syntactically invalid."""


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class EmptyQueryError(KbnavError):
    """A search or SPARQL query was empty."""


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class NetworkError(KbnavError):
    """The knowledge base could not be reached after retries."""


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class UnknownEntityError(KbnavError):
    """The knowledge base has no entity with this QID."""


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class UnknownPropertyError(KbnavError):
    """The knowledge base has no property with this PID."""


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class PromptError(KbnavError):
    """A prompt template could not be rendered."""


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class ProviderError(KbnavError):
    """The LLM provider failed after retries."""


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class BudgetExceededError(KbnavError):
    """The configured LLM call cap was reached."""

    @staticmethod
    def make(max_calls: int) -> "BudgetExceededError":
        """Create a BudgetExceededError with default hint."""
        return BudgetExceededError(
            message=f"LLM call budget of {max_calls} calls exhausted",
            hint="Raise llm_max_calls in your config file.",
        )


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class UnparseableOutputError(KbnavError):
    """Model output contains no recognizable action."""

    raw: str = dataclasses.field(default="", kw_only=True)
    """The raw model output."""


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class PolicyFailureError(KbnavError):
    """The policy kept producing unparseable output."""


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class IndexOutOfRangeError(KbnavError):
    """A reset index lies outside the agent state."""


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class UnresolvableBindingError(KbnavError):
    """A SPARQL result binding could not be turned into a result cell."""


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class UnsupportedSyntaxError(KbnavError):
    """The query uses SPARQL outside the analyzer's grammar subset."""


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class SchemaError(KbnavError):
    """A dataset file does not match its declared schema."""

    fpath: pathlib.Path = dataclasses.field(kw_only=True)
    """Dataset file."""

    index: int | None = dataclasses.field(default=None, kw_only=True)
    """Offending record index, if any."""

    @staticmethod
    def make(message: str, fpath: pathlib.Path, index: int | None) -> "SchemaError":
        """Create a SchemaError that points at the offending record."""
        where = f"record {index} of {fpath}" if index is not None else str(fpath)
        return SchemaError(
            message=f"{message} ({where})",
            hint="Check the file against the --source you passed.",
            fpath=fpath,
            index=index,
        )


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class GoldExecutionError(KbnavError):
    """A gold query failed or came back empty on the live endpoint."""

    example_id: str = dataclasses.field(kw_only=True)
    """Dataset example whose gold query failed."""

    kind: str = dataclasses.field(kw_only=True)
    """One of syntax, timeout, network, too-large, empty."""

    @staticmethod
    def make(example_id: str, kind: str, detail: str) -> "GoldExecutionError":
        """Create a GoldExecutionError with a drift hint."""
        return GoldExecutionError(
            message=f"Gold query for {example_id} failed ({kind}): {detail}",
            hint="The live knowledge base may have drifted; check the query by hand.",
            example_id=example_id,
            kind=kind,
        )
