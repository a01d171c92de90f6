"""Tests for prompts module."""

import pytest

import kbnav.actions
import kbnav.errors
import kbnav.prompts
import kbnav.state


def test_shipped_template_slots() -> None:
    """Each shipped template declares the slots the agent binds."""
    assert kbnav.prompts.load_template("policy").slots == {
        "question",
        "action_history",
    }
    assert kbnav.prompts.load_template("prune").slots == {
        "entity_and_description",
        "outgoing_edges",
        "question",
    }


def test_policy_messages_without_history() -> None:
    """An empty history leaves the question followed by the output cue."""
    messages = kbnav.prompts.render_messages(
        "policy", {"question": "Who advised Euler?", "action_history": ""}
    )
    assert [m.role for m in messages] == ["system", "user"]
    assert "execute_sparql(SPARQL)" in messages[0].content
    assert messages[1].content == (
        'Question: Who advised Euler?\n\nOutput one "Thought" and one "Action":'
    )


def test_prune_messages_alternate_roles() -> None:
    """Few-shot examples become user/assistant turns before the real input."""
    messages = kbnav.prompts.render_messages(
        "prune",
        {
            "entity_and_description": "Leonhard Euler (Q7604)",
            "outgoing_edges": "{}",
            "question": "Who advised Euler?",
        },
    )
    roles = [m.role for m in messages]
    assert roles == ["system", "user", "assistant", "user", "assistant", "user"]
    assert messages[-1].content.startswith(
        'Wikidata entry for "Leonhard Euler (Q7604)":\n{}'
    )


def test_render_messages_missing_slot() -> None:
    """Unbound slots are named in the error."""
    with pytest.raises(kbnav.errors.PromptError, match="action_history"):
        kbnav.prompts.render_messages("policy", {"question": "q"})


def test_slot_values_are_not_expanded_twice() -> None:
    """A value that looks like a slot is inserted literally."""
    messages = kbnav.prompts.render_messages(
        "policy", {"question": "{{ action_history }}", "action_history": "X"}
    )
    assert messages[-1].content.startswith("Question: {{ action_history }}\n\nX")


def test_parse_template_roles() -> None:
    """Headers decide roles; text before the first header is ignored."""
    template = kbnav.prompts.parse_template(
        "t",
        "preamble\n# instruction\nA\n# few-shot example 1, input\nB\n"
        "# few-shot example 1, output\nC\n# input\n{{ x }}\n",
    )
    assert template.sections == (
        ("system", "A"),
        ("user", "B"),
        ("assistant", "C"),
        ("user", "{{ x }}"),
    )
    assert template.slots == {"x"}


def test_parse_template_without_headers() -> None:
    """Text with no section headers is not a template."""
    with pytest.raises(kbnav.errors.PromptError):
        kbnav.prompts.parse_template("t", "just some text")


def test_render_history() -> None:
    """Steps become Thought/Action/Observation blocks separated by blank lines."""
    state = kbnav.state.AgentState(
        steps=(
            kbnav.state.Step(
                thought="Find Euler.",
                action=kbnav.actions.SearchWikidata("Euler"),
                observation="Entities:\n- Leonhard Euler (Q7604)",
            ),
            kbnav.state.Step(
                thought="Done.", action=kbnav.actions.Stop(), observation=""
            ),
        )
    )
    assert kbnav.prompts.render_history(state) == (
        "Thought: Find Euler.\n"
        "Action: search_wikidata(Euler)\n"
        "Observation: Entities:\n- Leonhard Euler (Q7604)\n\n"
        "Thought: Done.\n"
        "Action: stop()\n"
        "Observation: \n\n"
    )


def test_render_policy_prompt_includes_history() -> None:
    """The flat prompt carries the question and every step."""
    state = kbnav.state.AgentState().append(
        kbnav.state.Step(
            thought="t",
            action=kbnav.actions.SearchWikidata("Euler"),
            observation="o",
        )
    )
    prompt = kbnav.prompts.render_policy_prompt("Who advised Euler?", state)
    assert "Question: Who advised Euler?" in prompt
    assert "Action: search_wikidata(Euler)\nObservation: o\n\n" in prompt
    assert prompt.endswith('Output one "Thought" and one "Action":')
