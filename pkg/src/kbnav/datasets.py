"""Question/SPARQL datasets in the formats we read."""

import dataclasses
import json
import pathlib
import typing as tp

import beartype

import kbnav.errors
import kbnav.metrics
import kbnav.wikidata

Source = tp.Literal["spinach-dev", "spinach-test", "custom", "qald", "wwq"]
SOURCES: tuple[str, ...] = tp.get_args(Source)


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class DatasetExample:
    id: str
    question: str
    gold_sparql: str
    source: Source
    gold_results: kbnav.metrics.ResultTable | None = None
    """Cached gold results, when the file ships them."""


@beartype.beartype
def load_dataset(fpath: pathlib.Path, source: Source) -> list[DatasetExample]:
    """Parse a dataset file; missing ids default to `<source>-<index>`."""
    records = _read_records(fpath)
    if source == "qald":
        records = _qald_records(records, fpath)
    elif isinstance(records, dict):
        # A JSON Lines file with a single record.
        records = [records]

    examples = []
    seen: set[str] = set()
    for index, record in enumerate(records):
        if not isinstance(record, dict):
            raise kbnav.errors.SchemaError.make("Record is not an object", fpath, index)
        example = _parse_record(record, source, fpath, index)
        if example.id in seen:
            raise kbnav.errors.SchemaError.make(
                f"Duplicate id '{example.id}'", fpath, index
            )
        seen.add(example.id)
        examples.append(example)
    return examples


@beartype.beartype
def _read_records(fpath: pathlib.Path) -> list[tp.Any] | dict[str, tp.Any]:
    """Read a JSON document or JSON Lines file."""
    if not fpath.exists():
        raise kbnav.errors.SchemaError.make("Dataset file does not exist", fpath, None)
    text = fpath.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        data = None
    if isinstance(data, list | dict):
        return data

    records = []
    for index, line in enumerate(line for line in text.splitlines() if line.strip()):
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as err:
            raise kbnav.errors.SchemaError.make(
                f"Invalid JSON: {err}", fpath, index
            ) from None
    return records


@beartype.beartype
def _qald_records(
    data: list[tp.Any] | dict[str, tp.Any], fpath: pathlib.Path
) -> list[tp.Any]:
    """Flatten QALD's multilingual questions into plain records with English text."""
    if not isinstance(data, dict) or not isinstance(data.get("questions"), list):
        raise kbnav.errors.SchemaError.make(
            "QALD file needs a 'questions' list", fpath, None
        )

    records = []
    for index, item in enumerate(data["questions"]):
        if not isinstance(item, dict):
            raise kbnav.errors.SchemaError.make(
                "Question is not an object", fpath, index
            )
        english = [
            q.get("string", "")
            for q in item.get("question", [])
            if isinstance(q, dict) and q.get("language") == "en"
        ]
        if not english:
            raise kbnav.errors.SchemaError.make(
                "Question has no English text", fpath, index
            )
        query = item.get("query") or {}
        record = {
            "question": english[0],
            "sparql": query.get("sparql", "") if isinstance(query, dict) else "",
        }
        if "id" in item:
            record["id"] = str(item["id"])
        records.append(record)
    return records


@beartype.beartype
def _parse_record(
    record: dict[str, tp.Any], source: Source, fpath: pathlib.Path, index: int
) -> DatasetExample:
    question = record.get("question")
    if question is None and source == "wwq":
        question = record.get("utterance")
    sparql = record.get("sparql", record.get("gold_sparql"))

    if not isinstance(question, str) or not question.strip():
        raise kbnav.errors.SchemaError.make("Missing or empty 'question'", fpath, index)
    if not isinstance(sparql, str) or not sparql.strip():
        raise kbnav.errors.SchemaError.make("Missing or empty 'sparql'", fpath, index)

    raw_id = record.get("id")
    example_id = str(raw_id) if raw_id is not None else f"{source}-{index}"
    gold_results = None
    if isinstance(record.get("gold_results"), dict):
        try:
            response = kbnav.wikidata.response_from_json(record["gold_results"])
            gold_results = kbnav.metrics.normalize_results(response)
        except (KeyError, TypeError, ValueError, kbnav.errors.KbnavError) as err:
            raise kbnav.errors.SchemaError.make(
                f"Unreadable 'gold_results': {err}", fpath, index
            ) from None
    return DatasetExample(
        id=example_id,
        question=question.strip(),
        gold_sparql=sparql.strip(),
        source=source,
        gold_results=gold_results,
    )


@beartype.beartype
def load_predictions(fpath: pathlib.Path) -> dict[str, str]:
    """Read `{id, sparql}` records into a map from id to predicted query."""
    data = _read_records(fpath)
    if isinstance(data, dict):
        data = [data]

    predictions = {}
    for index, record in enumerate(data):
        if not isinstance(record, dict) or "id" not in record:
            raise kbnav.errors.SchemaError.make(
                "Prediction needs an 'id'", fpath, index
            )
        sparql = record.get("sparql")
        if sparql is not None and not isinstance(sparql, str):
            raise kbnav.errors.SchemaError.make(
                "'sparql' must be a string", fpath, index
            )
        predictions[str(record["id"])] = sparql or ""
    return predictions
