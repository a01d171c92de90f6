"""The five actions the agent can take."""

import dataclasses
import re
import typing as tp

import beartype

import kbnav.errors
import kbnav.wikidata


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class SearchWikidata:
    name: tp.ClassVar[str] = "search_wikidata"
    query: str

    def __post_init__(self) -> None:
        _require_text(self.name, self.query)

    @property
    def argument(self) -> str:
        return self.query


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class GetWikidataEntry:
    name: tp.ClassVar[str] = "get_wikidata_entry"
    id: kbnav.wikidata.EntityId

    @property
    def argument(self) -> str:
        return self.id.value


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class GetPropertyExamples:
    name: tp.ClassVar[str] = "get_property_examples"
    id: kbnav.wikidata.PropertyId

    @property
    def argument(self) -> str:
        return self.id.value


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class ExecuteSparql:
    name: tp.ClassVar[str] = "execute_sparql"
    query: str

    def __post_init__(self) -> None:
        _require_text(self.name, self.query)

    @property
    def argument(self) -> str:
        return self.query


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class Stop:
    name: tp.ClassVar[str] = "stop"

    @property
    def argument(self) -> str:
        return ""


Action = SearchWikidata | GetWikidataEntry | GetPropertyExamples | ExecuteSparql | Stop

ACTION_NAMES: tuple[str, ...] = (
    SearchWikidata.name,
    GetWikidataEntry.name,
    GetPropertyExamples.name,
    ExecuteSparql.name,
    Stop.name,
)


@beartype.beartype
def _require_text(name: str, text: str) -> None:
    if not text.strip():
        raise kbnav.errors.EmptyQueryError(message=f"{name} needs a non-empty argument")


@beartype.beartype
def make_action(name: str, argument: str) -> Action:
    """Build an action from its name and raw argument text."""
    if name == SearchWikidata.name:
        return SearchWikidata(argument)
    if name == GetWikidataEntry.name:
        return GetWikidataEntry(kbnav.wikidata.EntityId(argument))
    if name == GetPropertyExamples.name:
        return GetPropertyExamples(kbnav.wikidata.PropertyId(argument))
    if name == ExecuteSparql.name:
        return ExecuteSparql(argument)
    if name == Stop.name:
        return Stop()
    raise ValueError(f"Unknown action '{name}'")


@beartype.beartype
def render_action(action: Action) -> str:
    """Canonical text form, e.g. `get_wikidata_entry(Q7604)`."""
    return f"{action.name}({action.argument})"


@beartype.beartype
def action_key(action: Action) -> tuple[str, str]:
    """Identity used for repetition detection.

    SPARQL text is compared with whitespace collapsed; other arguments exactly.
    """
    if isinstance(action, ExecuteSparql):
        return (action.name, re.sub(r"\s+", " ", action.query).strip())
    return (action.name, action.argument)


@beartype.beartype
def action_to_json(action: Action) -> dict[str, str]:
    return {"name": action.name, "argument": action.argument}


@beartype.beartype
def action_from_json(data: dict[str, tp.Any]) -> Action:
    return make_action(str(data["name"]), str(data.get("argument", "")))
