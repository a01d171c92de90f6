"""Human-readable observations for knowledge-base payloads."""

import json
import typing as tp

import beartype

import kbnav.wikidata

# Tables longer than this are shown as head + tail.
MAX_TABLE_ROWS = 10
HEAD_ROWS = 5
TAIL_ROWS = 5

Payload = (
    kbnav.wikidata.SearchResult
    | kbnav.wikidata.EntityEntry
    | kbnav.wikidata.PropertyExamples
    | kbnav.wikidata.SparqlTable
    | kbnav.wikidata.SparqlBoolean
    | kbnav.wikidata.SparqlError
)


@beartype.beartype
def render_observation(payload: Payload) -> str:
    """Render a payload as the text the agent sees. Deterministic."""
    if isinstance(payload, kbnav.wikidata.SearchResult):
        return _render_search(payload)
    if isinstance(payload, kbnav.wikidata.EntityEntry):
        return render_entry(payload)
    if isinstance(payload, kbnav.wikidata.PropertyExamples):
        return _render_examples(payload)
    if isinstance(payload, kbnav.wikidata.SparqlTable):
        return _render_table(payload)
    if isinstance(payload, kbnav.wikidata.SparqlBoolean):
        return "true" if payload.value else "false"
    return f"Error ({payload.kind}): {payload.message}"


@beartype.beartype
def render_entry(entry: kbnav.wikidata.EntityEntry) -> str:
    """Render an entry as a header line followed by labeled JSON."""
    header = f"Wikidata entry for {entry.label} ({entry.subject}"
    header += f", {entry.description}):" if entry.description else "):"
    return f"{header}\n{render_claims(entry)}"


@beartype.beartype
def render_claims(entry: kbnav.wikidata.EntityEntry) -> str:
    """The claims of an entry as `"label (PID)": value` JSON."""
    data: dict[str, tp.Any] = {}
    for claim in entry.claims:
        key = f"{claim.label} ({claim.property})"
        if not any(statement.qualifiers for statement in claim.statements):
            for statement in claim.statements:
                _merge(data, key, _value_text(statement.value))
            continue

        # Qualified claims map each value to its qualifiers.
        by_value: dict[str, tp.Any] = {}
        for statement in claim.statements:
            qualifiers: dict[str, tp.Any] = {}
            for qualifier in statement.qualifiers:
                qkey = f"{qualifier.label} ({qualifier.property})"
                _merge(qualifiers, qkey, _value_text(qualifier.value))
            slot = by_value.setdefault(_value_text(statement.value), {})
            if qualifiers:
                slot.setdefault("Qualifiers", []).append(qualifiers)
        data[key] = by_value
    return json.dumps(data, indent=2, ensure_ascii=False)


@beartype.beartype
def _merge(data: dict[str, tp.Any], key: str, value: tp.Any) -> None:
    """Add value under key, turning repeated keys into lists."""
    if key not in data:
        data[key] = value
    elif isinstance(data[key], list):
        data[key].append(value)
    else:
        data[key] = [data[key], value]


@beartype.beartype
def _value_text(value: kbnav.wikidata.ClaimValue) -> str:
    if value.kind == "entity":
        return f"{value.label or value.value} ({value.value})"
    if value.kind == "quantity" and value.unit:
        return f"{value.value} {value.unit_label or value.unit}"
    return value.value


@beartype.beartype
def _render_search(result: kbnav.wikidata.SearchResult) -> str:
    lines = ["Entities:"]
    for hit in result.entities:
        lines.append(_hit_line(hit.label, str(hit.id), hit.description))
    if not result.entities:
        lines.append("- (none)")
    lines.append("Properties:")
    for hit in result.properties:
        lines.append(_hit_line(hit.label, str(hit.id), hit.description))
    if not result.properties:
        lines.append("- (none)")
    return "\n".join(lines)


@beartype.beartype
def _hit_line(label: str, id_: str, description: str) -> str:
    line = f"- {label} ({id_})"
    return f"{line}: {description}" if description else line


@beartype.beartype
def _render_examples(examples: kbnav.wikidata.PropertyExamples) -> str:
    lines = [f"Examples of {examples.label} ({examples.property}):"]
    for pair in examples.pairs:
        lines.append(
            f"- {pair.subject_label} ({pair.subject}) -> {_value_text(pair.value)}"
        )
    if not examples.pairs:
        lines.append("- (no uses found)")
    return "\n".join(lines)


@beartype.beartype
def _render_table(table: kbnav.wikidata.SparqlTable) -> str:
    n_rows = len(table.rows)
    if n_rows == 0:
        return "Query returned no results."

    header = "| " + " | ".join(table.columns) + " |"
    rule = "|" + "|".join("---" for _ in table.columns) + "|"
    lines = [header, rule]
    if n_rows > MAX_TABLE_ROWS:
        lines.extend(_row_line(row) for row in table.rows[:HEAD_ROWS])
        lines.append(f"... ({n_rows - HEAD_ROWS - TAIL_ROWS} rows omitted) ...")
        lines.extend(_row_line(row) for row in table.rows[-TAIL_ROWS:])
        lines.append(
            f"({n_rows} rows total, showing the first {HEAD_ROWS} and last {TAIL_ROWS})"
        )
    else:
        lines.extend(_row_line(row) for row in table.rows)
        lines.append(f"({n_rows} row{'s' if n_rows != 1 else ''})")
    return "\n".join(lines)


@beartype.beartype
def _row_line(row: tuple[kbnav.wikidata.Binding | None, ...]) -> str:
    return "| " + " | ".join(_cell_text(cell) for cell in row) + " |"


@beartype.beartype
def _cell_text(cell: kbnav.wikidata.Binding | None) -> str:
    if cell is None:
        return ""
    if cell.kind == "uri":
        entity_id = kbnav.wikidata.entity_id_from_uri(cell.value)
        return entity_id if entity_id else f"<{cell.value}>"
    return cell.value.replace("|", "\\|").replace("\n", " ")
