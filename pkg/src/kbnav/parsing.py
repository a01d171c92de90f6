"""Parse free-text policy output into one thought and one action.

The grammar is tolerant: the action may sit in code fences or backticks, the
argument may be quoted, and ids may carry prefixes or labels (`wd:Q7604`,
`"Q7604"`, `Q7604 (Leonhard Euler)`). Only the first action is used.
"""

import dataclasses
import re

import beartype

import kbnav.actions
import kbnav.errors
import kbnav.wikidata

_ACTION_MARKER_RE = re.compile(r"^[ \t]*\**Action\**[ \t]*:[ \t]*", re.MULTILINE)
_THOUGHT_MARKER_RE = re.compile(r"^[ \t]*\**Thought\**[ \t]*:[ \t]*", re.MULTILINE)
# Text the model may hallucinate after its first action.
_SEGMENT_END_RE = re.compile(
    r"\n[ \t]*\**(?:Observation|Thought|Action)\**[ \t]*:", re.MULTILINE
)
_BARE_ACTION_RE = re.compile(
    r"^[ \t`]*(" + "|".join(kbnav.actions.ACTION_NAMES) + r")[ \t]*\(", re.MULTILINE
)
_CALL_RE = re.compile(r"^(\w+)[ \t]*(?:\((.*)|)$", re.DOTALL)
_QID_RE = re.compile(r"(?<![A-Za-z0-9])Q\d+")
_PID_RE = re.compile(r"(?<![A-Za-z0-9])P\d+")
_QUOTES = "\"'`"


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class ParsedAgentOutput:
    thought: str
    action: kbnav.actions.Action


@beartype.beartype
def parse_agent_output(raw: str) -> ParsedAgentOutput:
    """Extract the thought and the first action from raw model text."""
    text = raw.replace("\r\n", "\n")

    marker = _ACTION_MARKER_RE.search(text)
    if marker is not None:
        before, segment = text[: marker.start()], text[marker.end() :]
    else:
        bare = _BARE_ACTION_RE.search(text)
        if bare is None:
            raise kbnav.errors.UnparseableOutputError(
                message="Model output contains no action",
                hint='Expected a line like "Action: search_wikidata(Euler)".',
                raw=raw,
            )
        before, segment = text[: bare.start()], text[bare.start() :]

    end = _SEGMENT_END_RE.search(segment)
    if end is not None:
        segment = segment[: end.start()]

    thought_marker = _THOUGHT_MARKER_RE.search(before)
    if thought_marker is not None:
        before = before[thought_marker.end() :]
    thought = before.strip()

    name, argument = _split_call(_strip_fences(segment), raw)
    return ParsedAgentOutput(thought=thought, action=_make_action(name, argument, raw))


@beartype.beartype
def render_agent_output(parsed: ParsedAgentOutput) -> str:
    """Canonical text that parses back to the same value.

    An argument that starts or ends with a quote is wrapped in triple quotes,
    which argument parsing strips instead of the argument's own.
    """
    action = parsed.action
    call = kbnav.actions.render_action(action)
    argument = action.argument
    if argument and (argument[0] in _QUOTES or argument[-1] in _QUOTES):
        call = f'{action.name}("""{argument}""")'
    return f"Thought: {parsed.thought}\nAction: {call}"


@beartype.beartype
def _strip_fences(text: str) -> str:
    text = text.strip()
    if text.startswith("```"):
        first_newline = text.find("\n")
        text = text[first_newline + 1 :] if first_newline >= 0 else text[3:]
    if text.endswith("```"):
        text = text[:-3]
    text = text.strip()
    if len(text) >= 2 and text[0] == "`" and text[-1] == "`":
        text = text[1:-1].strip()
    return text


@beartype.beartype
def _split_call(segment: str, raw: str) -> tuple[str, str]:
    """Split `name(argument)` into its parts."""
    match = _CALL_RE.match(segment)
    if match is None:
        raise kbnav.errors.UnparseableOutputError(
            message=f"Could not read the action '{_preview(segment)}'",
            hint='Write the action as name(argument), e.g. "get_wikidata_entry(Q7604)"',
            raw=raw,
        )
    name, rest = match.group(1), match.group(2)
    if rest is None:
        # Bare name, as in "Action: stop".
        return name, ""

    close = _closing_paren(rest)
    if close is None:
        raise kbnav.errors.UnparseableOutputError(
            message=f"Unbalanced parentheses in action '{_preview(segment)}'",
            raw=raw,
        )
    return name, rest[:close]


@beartype.beartype
def _closing_paren(rest: str) -> int | None:
    """Index of the parenthesis that closes the call.

    Prefer the last `)` when only whitespace or fences follow it, so
    arguments with unbalanced parentheses inside strings still parse.
    """
    stripped = rest.rstrip().rstrip("`").rstrip()
    if stripped.endswith(")"):
        return len(stripped) - 1

    depth = 0
    quote = ""
    for i, char in enumerate(rest):
        if quote:
            if char == quote:
                quote = ""
        elif char in "\"'":
            quote = char
        elif char == "(":
            depth += 1
        elif char == ")":
            if depth == 0:
                return i
            depth -= 1
    return None


@beartype.beartype
def _unquote(text: str) -> str:
    text = text.strip()
    text = _strip_fences(text) if text.startswith("```") else text
    for quote in ('"""', "'''", '"', "'", "`"):
        quoted = text.startswith(quote) and text.endswith(quote)
        if quoted and len(text) >= 2 * len(quote):
            return text[len(quote) : -len(quote)].strip()
    return text


@beartype.beartype
def _make_action(name: str, argument: str, raw: str) -> kbnav.actions.Action:
    if name not in kbnav.actions.ACTION_NAMES:
        closest = closest_action_name(name)
        valid = ", ".join(kbnav.actions.ACTION_NAMES)
        raise kbnav.errors.UnparseableOutputError(
            message=f"Unknown action '{name}'",
            hint=f"Did you mean {closest}? Valid actions: {valid}.",
            raw=raw,
        )

    if name == kbnav.actions.Stop.name:
        return kbnav.actions.Stop()

    value = _unquote(argument)
    if name == kbnav.actions.GetWikidataEntry.name:
        match = _QID_RE.search(value)
        if match is None:
            raise kbnav.errors.UnparseableOutputError(
                message=f"{name} needs a QID, got '{_preview(value)}'",
                hint="Entity ids look like Q7604; use search_wikidata to find one.",
                raw=raw,
            )
        return kbnav.actions.GetWikidataEntry(kbnav.wikidata.EntityId(match.group(0)))
    if name == kbnav.actions.GetPropertyExamples.name:
        match = _PID_RE.search(value)
        if match is None:
            raise kbnav.errors.UnparseableOutputError(
                message=f"{name} needs a PID, got '{_preview(value)}'",
                hint="Property ids look like P184; use search_wikidata to find one.",
                raw=raw,
            )
        property_id = kbnav.wikidata.PropertyId(match.group(0))
        return kbnav.actions.GetPropertyExamples(property_id)

    if not value:
        raise kbnav.errors.UnparseableOutputError(
            message=f"{name} needs a non-empty argument",
            raw=raw,
        )
    if name == kbnav.actions.SearchWikidata.name:
        return kbnav.actions.SearchWikidata(value)
    return kbnav.actions.ExecuteSparql(value)


@beartype.beartype
def closest_action_name(name: str) -> str:
    """The valid action name with the smallest edit distance to name."""
    target = name.lower()
    return min(
        kbnav.actions.ACTION_NAMES,
        key=lambda valid: (_levenshtein(target, valid), valid),
    )


@beartype.beartype
def _levenshtein(left: str, right: str) -> int:
    """Compute Levenshtein edit distance."""
    if left == right:
        return 0
    if not left:
        return len(right)
    if not right:
        return len(left)

    previous = list(range(len(right) + 1))
    for i, left_char in enumerate(left, start=1):
        current = [i]
        for j, right_char in enumerate(right, start=1):
            insert_cost = current[j - 1] + 1
            delete_cost = previous[j] + 1
            replace_cost = previous[j - 1] + (left_char != right_char)
            current.append(min(insert_cost, delete_cost, replace_cost))
        previous = current
    return previous[-1]


@beartype.beartype
def _preview(text: str, limit: int = 80) -> str:
    text = " ".join(text.split())
    return text if len(text) <= limit else text[: limit - 3] + "..."
