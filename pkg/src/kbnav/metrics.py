"""Exact match and F1 over query results, including multi-column tables.

Tables are scored row-major: gold and predicted rows are matched one-to-one
so that total row recall is as large as possible (ties broken toward more
matched pairs), then

    tp = sum of matched recalls
    fn = number of gold rows - tp
    fp = number of unmatched predicted rows
    f1 = 2 tp / (2 tp + fp + fn)

With a single column this is exactly set-based F1. Rows are compared as sets
of cells, so extra predicted columns are never penalized.
"""

import collections.abc
import dataclasses
import decimal
import fractions
import logging
import math
import re
import typing as tp
import unicodedata

import beartype
import numpy as np
import scipy.optimize

import kbnav.cache
import kbnav.errors
import kbnav.wikidata

logger = logging.getLogger(__name__)

XSD = "http://www.w3.org/2001/XMLSchema#"
_NUMERIC_TYPES = {
    f"{XSD}{name}"
    for name in (
        "integer",
        "decimal",
        "double",
        "float",
        "int",
        "long",
        "short",
        "byte",
        "nonNegativeInteger",
        "positiveInteger",
        "negativeInteger",
        "nonPositiveInteger",
        "unsignedInt",
        "unsignedLong",
    )
}
_WIKIDATA_ENTITY_PREFIX_RE = re.compile(r"^https?://www\.wikidata\.org/entity/")
_ENTITY_SUFFIX_RE = re.compile(r"^[QPL]\d+$")
_DATETIME_RE = re.compile(
    r"^(-?\d+)-(\d\d)-(\d\d)"
    r"(?:T(\d\d):(\d\d):(\d\d)(?:\.\d+)?)?"
    r"(Z|[+-]\d\d:\d\d)?$"
)
# Numbers match when they differ by at most this share of the larger magnitude.
_NUMBER_REL_TOL = fractions.Fraction(1, 10**9)

# Largest integer a float64 weight holds exactly.
_MAX_EXACT_WEIGHT = 2**53


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class Entity:
    id: str


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class Literal:
    text: str


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class Number:
    value: decimal.Decimal
    """Exact and normalized; scoring matches numbers within a relative tolerance."""


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class Date:
    text: str
    """ISO text truncated to precision: 2021, 2021-06, 2021-06-23 or full timestamp."""
    precision: tp.Literal["year", "month", "day", "second"]


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class Boolean:
    value: bool


ResultCell = Entity | Literal | Number | Date | Boolean


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class ResultTable:
    """Normalized query result: a table, or a boolean with no columns or rows."""

    columns: tuple[str, ...] = ()
    rows: tuple[tuple[ResultCell | None, ...], ...] = ()
    """None marks an unbound cell."""
    boolean: bool | None = None

    def __post_init__(self) -> None:
        if self.boolean is not None and (self.columns or self.rows):
            raise ValueError("A boolean result has no columns or rows")
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError(
                    f"Row has {len(row)} cells but there are "
                    f"{len(self.columns)} columns"
                )

    @property
    def is_boolean(self) -> bool:
        return self.boolean is not None


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class EvalOutcome:
    tp: float
    fp: float
    fn: float
    f1: float
    em: int

    def to_json(self) -> dict[str, float | int]:
        return dataclasses.asdict(self)


@beartype.beartype
def normalize_results(
    raw: kbnav.wikidata.SparqlResponse,
    mode: tp.Literal["id", "label"] = "id",
    labels: dict[str, str] | None = None,
) -> ResultTable:
    """Turn endpoint bindings into comparable cells and drop duplicate rows.

    In label mode entities become their English labels (falling back to the
    id) and all literal text is case-folded with whitespace collapsed.
    """
    if isinstance(raw, kbnav.wikidata.SparqlError):
        raise ValueError(f"Cannot score a failed query ({raw.kind})")
    if isinstance(raw, kbnav.wikidata.SparqlBoolean):
        return ResultTable(boolean=raw.value)

    labels = labels or {}
    seen = set()
    rows = []
    for raw_row in raw.rows:
        row = tuple(_cell(binding, mode, labels) for binding in raw_row)
        if row in seen:
            continue
        seen.add(row)
        rows.append(row)
    return ResultTable(columns=raw.columns, rows=tuple(rows))


@beartype.beartype
def _cell(
    binding: kbnav.wikidata.Binding | None,
    mode: tp.Literal["id", "label"],
    labels: dict[str, str],
) -> ResultCell | None:
    if binding is None:
        return None

    if binding.kind == "uri":
        if _WIKIDATA_ENTITY_PREFIX_RE.match(binding.value):
            suffix = _WIKIDATA_ENTITY_PREFIX_RE.sub("", binding.value)
            if not _ENTITY_SUFFIX_RE.match(suffix):
                raise kbnav.errors.UnresolvableBindingError(
                    message=f"Malformed entity URI '{binding.value}'",
                )
            if mode == "label":
                return Literal(_fold(labels.get(suffix, suffix)))
            return Entity(suffix)
        return Literal(binding.value)

    if binding.kind == "bnode":
        return Literal(f"_:{binding.value}")

    datatype = binding.datatype or ""
    if datatype in _NUMERIC_TYPES:
        number = canonical_number(binding.value)
        if number is not None:
            return Number(number)
    elif datatype in {f"{XSD}dateTime", f"{XSD}date"}:
        date = parse_date(binding.value)
        if date is not None:
            return date
    elif datatype == f"{XSD}gYear":
        return Date(text=binding.value.lstrip("+"), precision="year")
    elif datatype == f"{XSD}gYearMonth":
        return Date(text=binding.value.lstrip("+"), precision="month")
    elif datatype == f"{XSD}boolean":
        return Boolean(binding.value.strip().lower() in {"true", "1"})

    text = unicodedata.normalize("NFC", binding.value).strip()
    return Literal(_fold(text) if mode == "label" else text)


@beartype.beartype
def _fold(text: str) -> str:
    return " ".join(unicodedata.normalize("NFC", text).casefold().split())


@beartype.beartype
def canonical_number(text: str) -> decimal.Decimal | None:
    """The exact value with trailing zeros dropped, so "1.50" and "1.5" agree."""
    try:
        value = decimal.Decimal(text.strip())
    except decimal.InvalidOperation:
        return None
    if not value.is_finite():
        return None
    if value == 0:
        return decimal.Decimal(0)
    digits = len(value.as_tuple().digits)
    return value.normalize(decimal.Context(prec=digits))


@beartype.beartype
def parse_date(text: str) -> Date | None:
    """Parse xsd:date/xsd:dateTime. Midnight UTC timestamps are day precision."""
    match = _DATETIME_RE.match(text.strip().lstrip("+"))
    if match is None:
        return None
    year, month, day, hour, minute, second, _zone = match.groups()
    date_text = f"{year}-{month}-{day}"
    if hour is None or (hour, minute, second) == ("00", "00", "00"):
        return Date(text=date_text, precision="day")
    return Date(text=f"{date_text}T{hour}:{minute}:{second}", precision="second")


@beartype.beartype
def _outcome(
    tp_: fractions.Fraction, fp: fractions.Fraction, fn: fractions.Fraction
) -> EvalOutcome:
    denominator = 2 * tp_ + fp + fn
    f1 = fractions.Fraction(1) if denominator == 0 else 2 * tp_ / denominator
    return EvalOutcome(
        tp=float(tp_), fp=float(fp), fn=float(fn), f1=float(f1), em=int(f1 == 1)
    )


@beartype.beartype
def scalar_f1(
    gold: tp.Sequence[ResultCell] | bool, pred: tp.Sequence[ResultCell] | bool
) -> EvalOutcome:
    """Set-based EM/F1 for flat answer lists; booleans score 1 only when equal."""
    one, zero = fractions.Fraction(1), fractions.Fraction(0)
    if isinstance(gold, bool) or isinstance(pred, bool):
        if isinstance(gold, bool) and isinstance(pred, bool) and gold == pred:
            return _outcome(one, zero, zero)
        return _outcome(zero, one, one)

    gold_set, pred_set = frozenset(gold), frozenset(pred)
    n_found = _overlap(gold_set, pred_set)
    return _outcome(
        fractions.Fraction(n_found),
        fractions.Fraction(len(pred_set) - _overlap(pred_set, gold_set)),
        fractions.Fraction(len(gold_set) - n_found),
    )


@beartype.beartype
def cells_match(left: ResultCell, right: ResultCell) -> bool:
    """Equal cells, or numbers within a relative tolerance of 1e-9."""
    if isinstance(left, Number) and isinstance(right, Number):
        x, y = fractions.Fraction(left.value), fractions.Fraction(right.value)
        return abs(x - y) <= _NUMBER_REL_TOL * max(abs(x), abs(y))
    return left == right


@beartype.beartype
def _overlap(
    gold: collections.abc.Set[ResultCell], pred: collections.abc.Set[ResultCell]
) -> int:
    """How many gold cells have a matching predicted cell."""
    numbers = [cell for cell in pred if isinstance(cell, Number)]
    n = 0
    for cell in gold:
        if cell in pred:
            n += 1
        elif isinstance(cell, Number) and any(cells_match(cell, x) for x in numbers):
            n += 1
    return n


@beartype.beartype
def _row_set(row: tp.Sequence[ResultCell | None]) -> frozenset[ResultCell]:
    return frozenset(cell for cell in row if cell is not None)


@beartype.beartype
def _recall(
    gold: frozenset[ResultCell], pred: frozenset[ResultCell]
) -> fractions.Fraction:
    return fractions.Fraction(_overlap(gold, pred), len(gold))


@beartype.beartype
def row_recall(
    gold_row: tp.Sequence[ResultCell | None], pred_row: tp.Sequence[ResultCell | None]
) -> float:
    """Fraction of the gold row's cells present in the predicted row."""
    gold = _row_set(gold_row)
    if not gold:
        raise ValueError("Gold row has no bound cells")
    return float(_recall(gold, _row_set(pred_row)))


@beartype.beartype
def _distinct_rows(table: ResultTable) -> list[frozenset[ResultCell]]:
    """Rows as cell sets, without duplicates or fully unbound rows, in order."""
    rows = []
    seen = set()
    for row in table.rows:
        cells = _row_set(row)
        if cells and cells not in seen:
            seen.add(cells)
            rows.append(cells)
    return rows


@beartype.beartype
def best_assignment(gold: ResultTable, pred: ResultTable) -> list[tuple[int, int]]:
    """Match gold rows to predicted rows, maximizing total recall.

    Returns (gold index, pred index) pairs, indexes into the tables' distinct
    rows. Among matchings with maximal recall the one with the most pairs is
    chosen. Pairs with zero recall are never returned.
    """
    return _assign(_distinct_rows(gold), _distinct_rows(pred))


@beartype.beartype
def _assign(
    gold: list[frozenset[ResultCell]], pred: list[frozenset[ResultCell]]
) -> list[tuple[int, int]]:
    if not gold or not pred:
        return []

    overlap = np.array([[_overlap(g, p) for p in pred] for g in gold], dtype=np.int64)
    sizes = [len(g) for g in gold]
    # Every recall is a multiple of 1/lcm; K exceeds the largest possible pair count,
    # so recall dominates and pair count breaks ties.
    lcm = math.lcm(*sizes)
    k = min(len(gold), len(pred)) + 1
    scale = np.array([lcm // size * k for size in sizes], dtype=np.int64)[:, None]
    if lcm * k * (min(len(gold), len(pred)) + 1) < _MAX_EXACT_WEIGHT:
        weights = np.where(overlap > 0, overlap * scale + 1, 0).astype(np.float64)
    else:
        logger.debug("Row weights exceed float precision; using approximate weights")
        recall = overlap / np.array(sizes, dtype=np.float64)[:, None]
        weights = np.where(overlap > 0, recall * k + 1, 0.0)

    rows, cols = scipy.optimize.linear_sum_assignment(weights, maximize=True)
    return [
        (int(i), int(j)) for i, j in zip(rows, cols, strict=True) if overlap[i, j] > 0
    ]


@beartype.beartype
def row_major_scores(gold: ResultTable, pred: ResultTable) -> EvalOutcome:
    """Row-major EM/F1. Boolean results only match booleans."""
    one, zero = fractions.Fraction(1), fractions.Fraction(0)
    if gold.is_boolean or pred.is_boolean:
        if gold.is_boolean and pred.is_boolean and gold.boolean == pred.boolean:
            return _outcome(one, zero, zero)
        return _outcome(zero, one, one)

    gold_rows, pred_rows = _distinct_rows(gold), _distinct_rows(pred)
    pairs = _assign(gold_rows, pred_rows)
    tp_ = sum((_recall(gold_rows[i], pred_rows[j]) for i, j in pairs), zero)
    fn = len(gold_rows) - tp_
    fp = fractions.Fraction(len(pred_rows) - len(pairs))
    return _outcome(tp_, fp, fn)


@beartype.beartype
def cell_to_json(cell: ResultCell | None) -> dict[str, object] | None:
    if cell is None:
        return None
    if isinstance(cell, Entity):
        return {"type": "entity", "value": cell.id}
    if isinstance(cell, Literal):
        return {"type": "literal", "value": cell.text}
    if isinstance(cell, Number):
        return {"type": "number", "value": str(cell.value)}
    if isinstance(cell, Date):
        return {"type": "date", "value": cell.text, "precision": cell.precision}
    return {"type": "boolean", "value": cell.value}


@beartype.beartype
def table_to_json(table: ResultTable) -> dict[str, object]:
    if table.is_boolean:
        return {"boolean": table.boolean}
    return {
        "columns": list(table.columns),
        "rows": [[cell_to_json(cell) for cell in row] for row in table.rows],
    }


@beartype.beartype
def table_digest(table: ResultTable) -> str:
    """SHA-256 of the canonical JSON of a normalized table."""
    return kbnav.cache.digest(table_to_json(table))
