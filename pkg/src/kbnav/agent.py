"""The agent loop: ask the policy for a thought and an action, run it, repeat."""

import concurrent.futures
import dataclasses
import logging
import threading
import typing as tp

import beartype

import kbnav.actions
import kbnav.config
import kbnav.errors
import kbnav.llm
import kbnav.parsing
import kbnav.prompts
import kbnav.prune
import kbnav.render
import kbnav.state
import kbnav.wikidata

logger = logging.getLogger(__name__)

StopReason = tp.Literal["stopped", "budget_exhausted", "reset_limit"]


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class ResetEvent:
    """One rollback of the state."""

    at_action: int
    """actions_taken when the rollback happened."""
    reason: tp.Literal["repetition", "empty_stop"]
    to_index: int
    action: kbnav.actions.Action
    """The action that triggered the rollback."""
    discarded: tuple[kbnav.state.Step, ...]


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class AgentOutcome:
    question: str
    final_sparql: str | None
    final_result: kbnav.wikidata.SparqlResponse | None
    trace: kbnav.state.AgentState
    stop_reason: StopReason
    actions_taken: int
    llm_calls: int = 0
    resets: tuple[ResetEvent, ...] = ()
    history: tuple[kbnav.state.Step, ...] = ()
    """Every executed step, including the ones later discarded by resets."""

    def __post_init__(self) -> None:
        if self.stop_reason == "stopped":
            assert self.final_sparql is not None
            assert kbnav.wikidata.has_answer(self.final_result)


@tp.runtime_checkable
class KnowledgeBase(tp.Protocol):
    def search_items(self, query: str) -> kbnav.wikidata.SearchResult: ...

    def fetch_entity_entry(
        self, entity_id: kbnav.wikidata.EntityId
    ) -> kbnav.wikidata.EntityEntry: ...

    def fetch_property_examples(
        self, property_id: kbnav.wikidata.PropertyId
    ) -> kbnav.wikidata.PropertyExamples: ...

    def run_sparql(self, query: str) -> kbnav.wikidata.SparqlResponse: ...


@tp.runtime_checkable
class Tools(tp.Protocol):
    """Executes actions outside the agent."""

    def apply_action(
        self, action: kbnav.actions.Action
    ) -> tuple[str, kbnav.render.Payload | None]: ...


class KbTools:
    """Runs actions against a knowledge base, pruning entity entries with the LLM."""

    def __init__(
        self,
        kb: KnowledgeBase,
        *,
        gateway: kbnav.llm.Gateway,
        question: str,
        config: kbnav.config.AgentConfig,
    ) -> None:
        self._kb = kb
        self._gateway = gateway
        self._question = question
        self._config = config

    @beartype.beartype
    def apply_action(
        self, action: kbnav.actions.Action
    ) -> tuple[str, kbnav.render.Payload | None]:
        """Run an action. Failures become observations; budget exhaustion raises."""
        pool = concurrent.futures.ThreadPoolExecutor(max_workers=1)
        abandoned = threading.Event()
        try:
            future = pool.submit(self._execute, action, abandoned)
            payload = future.result(timeout=self._config.action_timeout)
        except concurrent.futures.TimeoutError:
            abandoned.set()
            logger.warning("%s timed out", kbnav.actions.render_action(action))
            timeout = self._config.action_timeout
            return f"Error: the action timed out after {timeout:g} seconds", None
        except kbnav.errors.BudgetExceededError:
            raise
        except kbnav.errors.KbnavError as err:
            return f"Error: {err.message}", None
        finally:
            pool.shutdown(wait=False)
        return kbnav.render.render_observation(payload), payload

    @beartype.beartype
    def _execute(
        self, action: kbnav.actions.Action, abandoned: threading.Event
    ) -> kbnav.render.Payload:
        """Run one action; once abandoned it makes no further LLM calls."""
        if isinstance(action, kbnav.actions.SearchWikidata):
            return self._kb.search_items(action.query)
        if isinstance(action, kbnav.actions.GetWikidataEntry):
            entry = self._kb.fetch_entity_entry(action.id)
            if abandoned.is_set():
                logger.debug("Dropping %s after its timeout", action.id)
                return entry
            if self._config.prune_entries:
                entry = kbnav.prune.prune_entry(
                    self._question,
                    entry,
                    gateway=self._gateway,
                    max_tokens=self._config.prune_max_tokens,
                )
            return entry
        if isinstance(action, kbnav.actions.GetPropertyExamples):
            return self._kb.fetch_property_examples(action.id)
        if isinstance(action, kbnav.actions.ExecuteSparql):
            return self._kb.run_sparql(action.query)
        raise ValueError(f"{action.name} is handled by the agent loop")


@beartype.beartype
def run_agent(
    question: str,
    config: kbnav.config.AgentConfig,
    *,
    gateway: kbnav.llm.Gateway,
    tools: Tools,
) -> AgentOutcome:
    """Answer a question by exploring the knowledge base until stop() or a budget.

    Every parsed action counts toward max_steps, including stops and
    repetitions that trigger a rollback. Unparseable outputs are retried
    up to max_parse_failures times in a row and do not count.
    """
    question = question.strip()
    if not question:
        raise kbnav.errors.EmptyQueryError(message="Question is empty")

    calls_before = gateway.calls
    state = kbnav.state.AgentState()
    history: list[kbnav.state.Step] = []
    resets: list[ResetEvent] = []
    actions_taken = 0
    parse_failures = 0

    while True:
        if actions_taken >= config.max_steps:
            logger.info("Action budget of %d exhausted", config.max_steps)
            stop_reason: StopReason = "budget_exhausted"
            break

        request = kbnav.llm.LlmRequest.policy(
            kbnav.prompts.policy_variables(question, state),
            temperature=config.policy_temperature,
            top_p=config.policy_top_p,
            max_output_tokens=config.policy_max_tokens,
        )
        try:
            raw = gateway.complete(request)
        except kbnav.errors.BudgetExceededError as err:
            logger.warning("%s", err.message)
            stop_reason = "budget_exhausted"
            break

        try:
            parsed = kbnav.parsing.parse_agent_output(raw)
        except kbnav.errors.UnparseableOutputError as err:
            parse_failures += 1
            logger.warning(
                "Unparseable policy output (%d/%d): %s",
                parse_failures,
                config.max_parse_failures,
                err.message,
            )
            if parse_failures >= config.max_parse_failures:
                raise kbnav.errors.PolicyFailureError(
                    message=(
                        f"Policy output was unparseable {parse_failures} times in a row"
                    ),
                    hint="Check that the model follows the Thought/Action format.",
                ) from None
            continue
        parse_failures = 0

        action = parsed.action
        actions_taken += 1
        logger.info("Action %d: %s", actions_taken, kbnav.actions.render_action(action))

        to_index: int | None
        if isinstance(action, kbnav.actions.Stop):
            if kbnav.state.validate_stop(state) == "accept":
                step = kbnav.state.Step(
                    thought=parsed.thought, action=action, observation=""
                )
                state = state.append(step)
                history.append(step)
                stop_reason = "stopped"
                break
            reason: tp.Literal["repetition", "empty_stop"] = "empty_stop"
            to_index = 0
        else:
            reason = "repetition"
            to_index = kbnav.state.detect_repetition(state, action)

        if to_index is not None:
            if len(resets) >= config.max_resets:
                logger.warning("Reset limit of %d reached", config.max_resets)
                stop_reason = "reset_limit"
                break
            logger.warning("Resetting to step %d (%s)", to_index, reason)
            resets.append(
                ResetEvent(
                    at_action=actions_taken,
                    reason=reason,
                    to_index=to_index,
                    action=action,
                    discarded=state.steps[to_index:],
                )
            )
            state = kbnav.state.reset_state(state, to_index)
            continue

        try:
            observation, payload = tools.apply_action(action)
        except kbnav.errors.BudgetExceededError as err:
            logger.warning("%s", err.message)
            stop_reason = "budget_exhausted"
            break
        step = kbnav.state.Step(
            thought=parsed.thought,
            action=action,
            observation=observation,
            raw_payload=payload,
        )
        state = state.append(step)
        history.append(step)

    if stop_reason == "stopped":
        final = kbnav.state.last_sparql_step(state)
    else:
        final = _best_so_far(history)

    final_sparql = None
    final_result = None
    if final is not None:
        assert isinstance(final.action, kbnav.actions.ExecuteSparql)
        assert isinstance(final.raw_payload, kbnav.wikidata.SparqlResponse)
        final_sparql = final.action.query
        final_result = final.raw_payload

    return AgentOutcome(
        question=question,
        final_sparql=final_sparql,
        final_result=final_result,
        trace=state,
        stop_reason=stop_reason,
        actions_taken=actions_taken,
        llm_calls=gateway.calls - calls_before,
        resets=tuple(resets),
        history=tuple(history),
    )


@beartype.beartype
def _best_so_far(history: list[kbnav.state.Step]) -> kbnav.state.Step | None:
    """The last executed query that returned an answer."""
    for step in reversed(history):
        is_query = isinstance(step.action, kbnav.actions.ExecuteSparql)
        if is_query and kbnav.wikidata.has_answer(step.raw_payload):
            return step
    return None
