"""Prompt templates shipped with the package, and rendering them into chat messages.

Templates are plain text split by section headers:

    # instruction                  -> system message
    # input                        -> user message
    # few-shot example 1, input    -> user message
    # few-shot example 1, output   -> assistant message

Slots are written `{{ name }}` and must all be bound when rendering.
"""

import dataclasses
import functools
import importlib.resources
import re
import typing as tp

import beartype

import kbnav.actions
import kbnav.errors
import kbnav.state

TemplateId = tp.Literal["policy", "prune"]
Role = tp.Literal["system", "user", "assistant"]

_SECTION_RE = re.compile(
    r"^# (instruction|input|few-shot example \d+, (?:input|output))\s*$", re.MULTILINE
)
_SLOT_RE = re.compile(r"\{\{\s*(\w+)\s*\}\}")


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class Message:
    role: Role
    content: str


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class Template:
    template_id: str
    sections: tuple[tuple[Role, str], ...]

    @property
    def slots(self) -> frozenset[str]:
        """Names of all slots used anywhere in the template."""
        return frozenset(
            match.group(1)
            for _, text in self.sections
            for match in _SLOT_RE.finditer(text)
        )


@functools.cache
@beartype.beartype
def load_template(template_id: TemplateId) -> Template:
    """Read and split a shipped template."""
    templates = importlib.resources.files("kbnav") / "templates"
    resource = templates / f"{template_id}.prompt"
    try:
        text = resource.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise kbnav.errors.PromptError(
            message=f"Prompt template '{template_id}' is missing from the package",
            hint="Reinstall kbnav.",
        ) from None
    return parse_template(template_id, text)


@beartype.beartype
def parse_template(template_id: str, text: str) -> Template:
    headers = list(_SECTION_RE.finditer(text))
    if not headers:
        raise kbnav.errors.PromptError(
            message=f"Prompt template '{template_id}' has no section headers",
        )

    sections: list[tuple[Role, str]] = []
    for i, header in enumerate(headers):
        end = headers[i + 1].start() if i + 1 < len(headers) else len(text)
        body = text[header.end() : end].strip("\n")
        name = header.group(1)
        if name == "instruction":
            role: Role = "system"
        elif name.endswith("output"):
            role = "assistant"
        else:
            role = "user"
        sections.append((role, body))
    return Template(template_id=template_id, sections=tuple(sections))


@beartype.beartype
def render_messages(
    template_id: TemplateId, variables: dict[str, str]
) -> list[Message]:
    """Bind every slot and turn sections into chat messages.

    Empty sections are skipped and consecutive sections with the same role
    are merged with a blank line.
    """
    template = load_template(template_id)
    missing = sorted(template.slots - variables.keys())
    if missing:
        raise kbnav.errors.PromptError(
            message=f"Unbound slots in '{template_id}' prompt: {', '.join(missing)}",
            hint="Pass a value for every {{ slot }} in the template.",
        )

    messages: list[Message] = []
    for role, body in template.sections:
        # Single pass, so values containing `{{ x }}` are not expanded again.
        content = _SLOT_RE.sub(lambda m: variables[m.group(1)], body).strip("\n")
        if not content.strip():
            continue
        if messages and messages[-1].role == role:
            merged = f"{messages[-1].content}\n\n{content}"
            messages[-1] = Message(role=role, content=merged)
        else:
            messages.append(Message(role=role, content=content))
    return messages


@beartype.beartype
def flatten(messages: list[Message]) -> str:
    """The prompt as one string, sections separated by a blank line."""
    return "\n\n".join(message.content for message in messages)


@beartype.beartype
def render_step(step: kbnav.state.Step) -> str:
    return (
        f"Thought: {step.thought}\n"
        f"Action: {kbnav.actions.render_action(step.action)}\n"
        f"Observation: {step.observation}"
    )


@beartype.beartype
def render_history(state: kbnav.state.AgentState) -> str:
    """Every step as a Thought/Action/Observation block plus a blank line."""
    return "".join(f"{render_step(step)}\n\n" for step in state.steps)


@beartype.beartype
def policy_variables(question: str, state: kbnav.state.AgentState) -> dict[str, str]:
    return {"question": question, "action_history": render_history(state)}


@beartype.beartype
def render_policy_prompt(question: str, state: kbnav.state.AgentState) -> str:
    """The full policy prompt for the next step."""
    return flatten(render_messages("policy", policy_variables(question, state)))
