"""Agent state: the ordered thought/action/observation history and its reset rules."""

import dataclasses
import typing as tp

import beartype

import kbnav.actions
import kbnav.errors
import kbnav.render
import kbnav.wikidata


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class Step:
    """One executed action."""

    thought: str
    action: kbnav.actions.Action
    observation: str
    """Rendered raw_payload, or the error text when the action failed."""
    raw_payload: kbnav.render.Payload | None = None
    """Structured source of the observation; None for stop and failed actions."""


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class AgentState:
    """Everything the agent remembers. Starts empty."""

    steps: tuple[Step, ...] = ()
    resets: int = 0
    """How many times this state has been rolled back."""

    def __len__(self) -> int:
        return len(self.steps)

    def append(self, step: Step) -> "AgentState":
        return dataclasses.replace(self, steps=self.steps + (step,))


@beartype.beartype
def detect_repetition(
    state: AgentState, next_action: kbnav.actions.Action
) -> int | None:
    """Index of the first occurrence if next_action continues a repetition cycle.

    A cycle is in progress when next_action equals the immediately preceding
    action; the state is then rolled back to before its first occurrence.
    """
    if not state.steps:
        return None
    key = kbnav.actions.action_key(next_action)
    if kbnav.actions.action_key(state.steps[-1].action) != key:
        return None
    for i, step in enumerate(state.steps):
        if kbnav.actions.action_key(step.action) == key:
            return i
    return None


@beartype.beartype
def reset_state(state: AgentState, to_index: int) -> AgentState:
    """Keep only the steps strictly before to_index."""
    if to_index < 0 or to_index > len(state.steps):
        raise kbnav.errors.IndexOutOfRangeError(
            message=(
                f"Cannot reset to step {to_index}; "
                f"state has {len(state.steps)} steps"
            ),
        )
    return AgentState(steps=state.steps[:to_index], resets=state.resets + 1)


@beartype.beartype
def last_sparql_step(state: AgentState) -> Step | None:
    for step in reversed(state.steps):
        if isinstance(step.action, kbnav.actions.ExecuteSparql):
            return step
    return None


@beartype.beartype
def validate_stop(state: AgentState) -> tp.Literal["accept", "reset"]:
    """Accept stop only if the last executed query produced an answer."""
    step = last_sparql_step(state)
    if step is None:
        return "reset"
    payload = step.raw_payload
    if isinstance(payload, kbnav.wikidata.SparqlBoolean):
        return "accept"
    if isinstance(payload, kbnav.wikidata.SparqlTable) and payload.rows:
        return "accept"
    return "reset"
