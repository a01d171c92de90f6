"""Drop the parts of an entity entry that cannot help answer the question."""

import dataclasses
import json
import logging
import re

import beartype

import kbnav.errors
import kbnav.llm
import kbnav.render
import kbnav.wikidata

logger = logging.getLogger(__name__)

_PID_KEY_RE = re.compile(r"\((P\d+)\)\s*$")
_TRAILING_COMMA_RE = re.compile(r",(\s*[}\]])")
_ELLIPSIS_LINE_RE = re.compile(r"^\s*\.\.\.,?\s*$", re.MULTILINE)


@beartype.beartype
def prune_entry(
    question: str,
    entry: kbnav.wikidata.EntityEntry,
    *,
    gateway: kbnav.llm.Gateway,
    max_tokens: int = 4096,
) -> kbnav.wikidata.EntityEntry:
    """Keep only the claims the model judges helpful.

    The result's claims are always a subset of the input's, in input order.
    Any failure (provider error, unreadable output) returns the entry as is.
    An exhausted call budget is not a failure of pruning and propagates.
    """
    if not entry.claims:
        return entry

    subject = f"{entry.label} ({entry.subject}"
    subject += f", {entry.description})" if entry.description else ")"
    request = kbnav.llm.LlmRequest.prune(
        {
            "entity_and_description": subject,
            "outgoing_edges": kbnav.render.render_claims(entry),
            "question": question,
        },
        max_output_tokens=max_tokens,
    )

    try:
        raw = gateway.complete(request)
    except kbnav.errors.BudgetExceededError:
        raise
    except kbnav.errors.KbnavError as err:
        logger.warning(
            "Pruning %s failed, keeping the full entry: %s", entry.subject, err
        )
        return entry

    kept = parse_kept_properties(raw)
    if kept is None:
        logger.warning(
            "Could not read pruned entry for %s, keeping it whole", entry.subject
        )
        return entry

    claims = tuple(claim for claim in entry.claims if claim.property.value in kept)
    logger.debug(
        "Pruned %s from %d to %d claims", entry.subject, len(entry.claims), len(claims)
    )
    return dataclasses.replace(entry, claims=claims)


@beartype.beartype
def parse_kept_properties(raw: str) -> frozenset[str] | None:
    """PIDs of the top-level keys of the JSON object in raw, or None if unreadable."""
    start, end = raw.find("{"), raw.rfind("}")
    if start < 0 or end <= start:
        return None
    text = raw[start : end + 1]
    text = _ELLIPSIS_LINE_RE.sub("", text)
    text = _TRAILING_COMMA_RE.sub(r"\1", text)
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        return None
    if not isinstance(data, dict):
        return None

    kept = set()
    for key in data:
        match = _PID_KEY_RE.search(key)
        if match:
            kept.add(match.group(1))
    return frozenset(kept)
