"""Trace documents: one JSON file per agent run, and re-driving a run from one.

A trace mirrors the Thought/Action/Observation blocks the policy sees. Query
results are stored structurally so a recorded run can be replayed offline
with RecordedTools and a ReplayProvider built by policy_transcript.
"""

import collections
import dataclasses
import pathlib
import threading
import typing as tp

import beartype

import kbnav.actions
import kbnav.agent
import kbnav.cache
import kbnav.config
import kbnav.errors
import kbnav.llm
import kbnav.parsing
import kbnav.prompts
import kbnav.render
import kbnav.state
import kbnav.wikidata


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class TraceDocument:
    """A loaded trace."""

    question: str
    steps: tuple[kbnav.state.Step, ...]
    """Final state."""
    history: tuple[kbnav.state.Step, ...]
    """Every executed step in execution order."""
    final_sparql: str | None
    stop_reason: str
    actions_taken: int


@beartype.beartype
def step_to_json(step: kbnav.state.Step) -> dict[str, object]:
    data: dict[str, object] = {
        "thought": step.thought,
        "action": kbnav.actions.action_to_json(step.action),
        "observation": step.observation,
    }
    payload = step.raw_payload
    if isinstance(payload, kbnav.wikidata.SparqlResponse):
        data["sparql_response"] = kbnav.wikidata.response_to_json(payload)
    return data


@beartype.beartype
def step_from_json(data: dict[str, tp.Any]) -> kbnav.state.Step:
    payload = None
    if "sparql_response" in data:
        payload = kbnav.wikidata.response_from_json(data["sparql_response"])
    return kbnav.state.Step(
        thought=str(data["thought"]),
        action=kbnav.actions.action_from_json(data["action"]),
        observation=str(data["observation"]),
        raw_payload=payload,
    )


@beartype.beartype
def outcome_to_json(
    outcome: kbnav.agent.AgentOutcome, config: kbnav.config.AgentConfig
) -> dict[str, object]:
    """The full run as a JSON-compatible dict."""
    final_result = None
    if outcome.final_result is not None:
        final_result = kbnav.wikidata.response_to_json(outcome.final_result)
    return {
        "question": outcome.question,
        "config": dataclasses.asdict(config),
        "steps": [step_to_json(step) for step in outcome.trace.steps],
        "history": [step_to_json(step) for step in outcome.history],
        "resets": [
            {
                "at_action": event.at_action,
                "reason": event.reason,
                "to_index": event.to_index,
                "action": kbnav.actions.action_to_json(event.action),
                "discarded": len(event.discarded),
            }
            for event in outcome.resets
        ],
        "outcome": {
            "final_sparql": outcome.final_sparql,
            "final_result": final_result,
            "stop_reason": outcome.stop_reason,
            "actions_taken": outcome.actions_taken,
            "llm_calls": outcome.llm_calls,
        },
    }


@beartype.beartype
def write_trace(
    fpath: pathlib.Path,
    outcome: kbnav.agent.AgentOutcome,
    config: kbnav.config.AgentConfig,
) -> None:
    kbnav.cache.write_json_atomic(fpath, outcome_to_json(outcome, config))


@beartype.beartype
def load_trace(fpath: pathlib.Path) -> TraceDocument:
    data = kbnav.cache.read_json(fpath)
    try:
        steps = tuple(step_from_json(step) for step in data["steps"])
        recorded = data.get("history", data["steps"])
        history = tuple(step_from_json(step) for step in recorded)
        outcome = data["outcome"]
        return TraceDocument(
            question=str(data["question"]),
            steps=steps,
            history=history,
            final_sparql=outcome.get("final_sparql"),
            stop_reason=str(outcome["stop_reason"]),
            actions_taken=int(outcome["actions_taken"]),
        )
    except (KeyError, TypeError, ValueError, kbnav.errors.KbnavError) as err:
        message = f"Malformed trace {fpath}: {err}"
        raise kbnav.errors.CacheError.make(message, fpath) from None


class RecordedTools:
    """Serves the observations of a recorded run instead of calling the knowledge base.

    Observations are matched by action (name and normalized argument) and
    served in recorded order when the same action ran more than once.
    """

    def __init__(self, steps: tp.Iterable[kbnav.state.Step]) -> None:
        self._recorded: dict[
            tuple[str, str], collections.deque[tuple[str, kbnav.render.Payload | None]]
        ] = {}
        for step in steps:
            if isinstance(step.action, kbnav.actions.Stop):
                continue
            key = kbnav.actions.action_key(step.action)
            self._recorded.setdefault(key, collections.deque()).append(
                (step.observation, step.raw_payload)
            )
        self._lock = threading.Lock()

    @beartype.beartype
    def apply_action(
        self, action: kbnav.actions.Action
    ) -> tuple[str, kbnav.render.Payload | None]:
        with self._lock:
            queue = self._recorded.get(kbnav.actions.action_key(action))
            if not queue:
                rendered = kbnav.actions.render_action(action)
                return f"Error: no recorded observation for {rendered}", None
            return queue.popleft()


@beartype.beartype
def policy_transcript(
    doc: TraceDocument, config: kbnav.config.AgentConfig
) -> list[dict[str, str]]:
    """Transcript records that make a ReplayProvider re-issue the trace's actions.

    Each record is keyed by the digest of the prompt the policy saw before
    that step, re-rendered from the trace.
    """
    records = []
    state = kbnav.state.AgentState()
    for step in doc.steps:
        request = kbnav.llm.LlmRequest.policy(
            kbnav.prompts.policy_variables(doc.question, state),
            temperature=config.policy_temperature,
            top_p=config.policy_top_p,
            max_output_tokens=config.policy_max_tokens,
        )
        messages = kbnav.prompts.render_messages("policy", request.variables)
        parsed = kbnav.parsing.ParsedAgentOutput(
            thought=step.thought, action=step.action
        )
        records.append({
            "digest": kbnav.llm.request_digest(request, messages),
            "response": kbnav.parsing.render_agent_output(parsed),
        })
        state = state.append(step)
    return records
