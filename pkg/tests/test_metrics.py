"""Tests for EM/F1 scoring."""

import decimal
import fractions
import functools

import hypothesis
import hypothesis.strategies as st
import pytest

import kbnav.errors
import kbnav.metrics
import kbnav.wikidata

ENTITY = "http://www.wikidata.org/entity/"
XSD = "http://www.w3.org/2001/XMLSchema#"

A, B, C, D, E, F, X, Z = (kbnav.metrics.Entity(q) for q in "ABCDEFXZ")


def table(
    *rows: tuple[kbnav.metrics.ResultCell | None, ...],
) -> kbnav.metrics.ResultTable:
    width = len(rows[0]) if rows else 1
    columns = tuple(f"c{i}" for i in range(width))
    return kbnav.metrics.ResultTable(columns=columns, rows=tuple(rows))


def scores(
    gold: kbnav.metrics.ResultTable, pred: kbnav.metrics.ResultTable
) -> tuple[float, float, float, float, int]:
    outcome = kbnav.metrics.row_major_scores(gold, pred)
    return outcome.tp, outcome.fp, outcome.fn, outcome.f1, outcome.em


def uri(qid: str) -> kbnav.wikidata.Binding:
    return kbnav.wikidata.Binding(kind="uri", value=f"{ENTITY}{qid}")


def typed(value: str, datatype: str) -> kbnav.wikidata.Binding:
    datatype = f"{XSD}{datatype}"
    return kbnav.wikidata.Binding(kind="literal", value=value, datatype=datatype)


def normalize_cell(binding: kbnav.wikidata.Binding) -> kbnav.metrics.ResultCell | None:
    raw = kbnav.wikidata.SparqlTable(columns=("x",), rows=((binding,),))
    return kbnav.metrics.normalize_results(raw).rows[0][0]


# Normalization


def test_normalize_entity_uri() -> None:
    """Entity URIs become ids in id mode."""
    assert normalize_cell(uri("Q7604")) == kbnav.metrics.Entity("Q7604")


def test_normalize_midnight_datetime_is_a_day() -> None:
    """A midnight UTC timestamp compares as a calendar day."""
    cell = normalize_cell(typed("2021-06-23T00:00:00Z", "dateTime"))
    assert cell == kbnav.metrics.Date(text="2021-06-23", precision="day")
    assert normalize_cell(typed("2021-06-23", "date")) == cell


def test_normalize_datetime_keeps_time() -> None:
    """Non-midnight timestamps keep second precision."""
    cell = normalize_cell(typed("1707-04-15T12:30:00Z", "dateTime"))
    assert cell == kbnav.metrics.Date(text="1707-04-15T12:30:00", precision="second")


def test_normalize_year_does_not_match_day() -> None:
    """A year and a full date in that year are different cells."""
    year = normalize_cell(typed("2021", "gYear"))
    day = normalize_cell(typed("2021-01-01T00:00:00Z", "dateTime"))
    assert year == kbnav.metrics.Date(text="2021", precision="year")
    assert year != day


@pytest.mark.parametrize(
    ("left", "right"),
    [("1", "1.0"), ("1e3", "1000"), ("1.50", "1.5"), ("-0", "0")],
)
def test_normalize_numbers_compare_by_value(left: str, right: str) -> None:
    """Decimal formatting drift does not change the cell."""
    assert normalize_cell(typed(left, "decimal")) == normalize_cell(
        typed(right, "double")
    )


def test_canonical_number() -> None:
    """Numbers keep every digit; only trailing zeros go."""
    assert kbnav.metrics.canonical_number("3.14159265358979") == decimal.Decimal(
        "3.14159265358979"
    )
    assert str(kbnav.metrics.canonical_number("2.50000000000000")) == "2.5"
    assert kbnav.metrics.canonical_number("NaN") is None
    assert kbnav.metrics.canonical_number("abc") is None


def number(text: str) -> kbnav.metrics.Number:
    value = kbnav.metrics.canonical_number(text)
    assert value is not None
    return kbnav.metrics.Number(value)


def test_numbers_within_tolerance_match() -> None:
    """Numbers a rounding error apart score as the same answer."""
    gold = table((number("1.00000000049"),))
    pred = table((number("1.00000000051"),))
    assert scores(gold, pred) == (1.0, 0.0, 0.0, 1.0, 1)
    assert kbnav.metrics.scalar_f1([number("0.3")], [number("0.30000000000000004")]).em


def test_numbers_outside_tolerance_differ() -> None:
    """A relative difference above 1e-9 is a different number."""
    gold = table((number("1"),))
    pred = table((number("1.000000002"),))
    assert scores(gold, pred) == (0.0, 1.0, 1.0, 0.0, 0)


@hypothesis.given(
    x=st.decimals(
        min_value=-(10**12), max_value=10**12, places=6, allow_nan=False
    ),
    sign=st.sampled_from([-1, 1]),
)
def test_relative_number_drift_matches(x: decimal.Decimal, sign: int) -> None:
    """x and x * (1 +/- 5e-10) are the same answer, alone or in a wider row."""
    drifted = x * (1 + sign * decimal.Decimal("5e-10"))
    gold = table((number(str(x)), A))
    pred = table((number(str(drifted)), A))
    assert scores(gold, pred) == (1.0, 0.0, 0.0, 1.0, 1)
    assert kbnav.metrics.cells_match(number(str(drifted)), number(str(x)))


def test_normalize_plain_literals() -> None:
    """Untyped literals keep their text; booleans are parsed."""
    literal = kbnav.wikidata.Binding(kind="literal", value=" Basel ", lang="en")
    assert normalize_cell(literal) == kbnav.metrics.Literal("Basel")
    assert normalize_cell(typed("true", "boolean")) == kbnav.metrics.Boolean(True)
    assert normalize_cell(typed("abc", "integer")) == kbnav.metrics.Literal("abc")


def test_normalize_label_mode() -> None:
    """Label mode swaps entities for folded labels and folds literals."""
    raw = kbnav.wikidata.SparqlTable(
        columns=("x", "y"),
        rows=(
            (uri("Q7604"), kbnav.wikidata.Binding(kind="literal", value="Swiss  MATH")),
            (uri("Q1"), None),
        ),
    )
    result = kbnav.metrics.normalize_results(
        raw, "label", labels={"Q7604": "Leonhard Euler"}
    )
    assert result.rows == (
        (kbnav.metrics.Literal("leonhard euler"), kbnav.metrics.Literal("swiss math")),
        (kbnav.metrics.Literal("q1"), None),
    )


def test_normalize_drops_duplicate_rows() -> None:
    """Identical rows are kept once, in first-seen order."""
    raw = kbnav.wikidata.SparqlTable(
        columns=("x",), rows=((uri("Q2"),), (uri("Q1"),), (uri("Q2"),))
    )
    result = kbnav.metrics.normalize_results(raw)
    assert result.rows == ((kbnav.metrics.Entity("Q2"),), (kbnav.metrics.Entity("Q1"),))


def test_normalize_boolean() -> None:
    """ASK results become a boolean table."""
    result = kbnav.metrics.normalize_results(kbnav.wikidata.SparqlBoolean(value=True))
    assert result.is_boolean
    assert result.boolean is True
    assert result.rows == ()


def test_normalize_rejects_errors_and_bad_uris() -> None:
    """Failed queries and malformed entity URIs cannot be scored."""
    error = kbnav.wikidata.SparqlError(kind="timeout", message="slow")
    with pytest.raises(ValueError):
        kbnav.metrics.normalize_results(error)
    bad = kbnav.wikidata.Binding(kind="uri", value=f"{ENTITY}Euler")
    with pytest.raises(kbnav.errors.UnresolvableBindingError):
        normalize_cell(bad)


def test_non_wikidata_uris_are_literals() -> None:
    """Other URIs compare by their full text."""
    binding = kbnav.wikidata.Binding(kind="uri", value="http://example.org/x")
    assert normalize_cell(binding) == kbnav.metrics.Literal("http://example.org/x")


# Scalar and row scores


def test_scalar_f1() -> None:
    """Set arithmetic over flat answers."""
    outcome = kbnav.metrics.scalar_f1([A, B], [A, C])
    assert (outcome.tp, outcome.fp, outcome.fn, outcome.f1, outcome.em) == (
        1.0,
        1.0,
        1.0,
        0.5,
        0,
    )
    assert kbnav.metrics.scalar_f1([A, B], [B, A]).em == 1


def test_scalar_f1_booleans() -> None:
    """Booleans score 1 only when equal, and never against a list."""
    assert kbnav.metrics.scalar_f1(True, True).f1 == 1.0
    assert kbnav.metrics.scalar_f1(True, False).f1 == 0.0
    assert kbnav.metrics.scalar_f1(True, [A]).f1 == 0.0


def test_row_recall() -> None:
    """Recall of the gold row's cells; extra predicted cells are free."""
    assert kbnav.metrics.row_recall((A, B), (A, B)) == 1.0
    assert kbnav.metrics.row_recall((A,), (A, X)) == 1.0
    assert kbnav.metrics.row_recall((A, B), (A,)) == 0.5
    with pytest.raises(ValueError):
        kbnav.metrics.row_recall((None,), (A,))


def test_best_assignment() -> None:
    """The matching maximizes total recall and skips zero-recall pairs."""
    assert sorted(
        kbnav.metrics.best_assignment(table((A,), (B,)), table((B,), (A,)))
    ) == [(0, 1), (1, 0)]
    assert kbnav.metrics.best_assignment(table((A,)), table((Z,))) == []
    assert kbnav.metrics.best_assignment(table((A, B), (A, C)), table((A, C))) == [
        (1, 0)
    ]


def test_row_major_worked_examples() -> None:
    """Hand-computed scores."""
    assert scores(table((A, B), (C, D)), table((A, B), (E, F))) == (
        1.0,
        1.0,
        1.0,
        0.5,
        0,
    )
    tp_, fp, fn, f1, em = scores(table((A, B)), table((A,)))
    assert (tp_, fp, fn, em) == (0.5, 0.0, 0.5, 0)
    assert f1 == pytest.approx(2 / 3)
    assert scores(table((A, B), (C, D)), table((C, D), (B, A))) == (
        2.0,
        0.0,
        0.0,
        1.0,
        1,
    )


def test_row_major_single_column_matches_scalar() -> None:
    """One column reduces to set-based F1."""
    row_major = kbnav.metrics.row_major_scores(table((A,), (B,)), table((A,), (C,)))
    assert row_major == kbnav.metrics.scalar_f1([A, B], [A, C])
    assert row_major.f1 == 0.5


def test_row_major_empty_tables() -> None:
    """An empty prediction scores 0; two empty tables score 1."""
    assert kbnav.metrics.row_major_scores(table((A,)), table()).f1 == 0.0
    assert kbnav.metrics.row_major_scores(table(), table()).em == 1


def test_row_major_boolean_mismatch() -> None:
    """A boolean never matches a table."""
    yes = kbnav.metrics.ResultTable(boolean=True)
    assert kbnav.metrics.row_major_scores(yes, yes).em == 1
    no = kbnav.metrics.ResultTable(boolean=False)
    assert kbnav.metrics.row_major_scores(yes, no).f1 == 0.0
    assert kbnav.metrics.row_major_scores(yes, table((A,))).f1 == 0.0


def test_result_table_rejects_ragged_rows() -> None:
    """Rows must match the column count."""
    with pytest.raises(ValueError):
        kbnav.metrics.ResultTable(columns=("a", "b"), rows=((A,),))
    with pytest.raises(ValueError):
        kbnav.metrics.ResultTable(columns=("a",), boolean=True)


def test_table_digest_identifies_tables() -> None:
    """Equal tables share a digest; different ones do not."""
    assert kbnav.metrics.table_digest(table((A,))) == kbnav.metrics.table_digest(
        table((A,))
    )
    assert kbnav.metrics.table_digest(table((A,))) != kbnav.metrics.table_digest(
        table((B,))
    )


# Properties

SYMBOLS = [kbnav.metrics.Entity(q) for q in "ABCDE"]
cells = st.one_of(st.none(), st.sampled_from(SYMBOLS))


@st.composite
def tables(
    draw: st.DrawFn, *, max_rows: int = 6, width: int | None = None
) -> kbnav.metrics.ResultTable:
    n_cols = width or draw(st.integers(min_value=1, max_value=3))
    rows = draw(
        st.lists(st.tuples(*[cells] * n_cols), min_size=0, max_size=max_rows)
    )
    columns = tuple(f"c{i}" for i in range(n_cols))
    return kbnav.metrics.ResultTable(columns=columns, rows=tuple(rows))


def distinct_row_sets(t: kbnav.metrics.ResultTable) -> list[frozenset]:
    out: list[frozenset] = []
    for row in t.rows:
        cells_ = frozenset(c for c in row if c is not None)
        if cells_ and cells_ not in out:
            out.append(cells_)
    return out


def brute_force(
    gold: kbnav.metrics.ResultTable, pred: kbnav.metrics.ResultTable
) -> tuple[float, float, float, float, int]:
    """Exhaustive search over injective matchings for (total recall, pairs)."""
    gold_rows, pred_rows = distinct_row_sets(gold), distinct_row_sets(pred)

    @functools.cache
    def best(i: int, used: frozenset[int]) -> tuple[fractions.Fraction, int]:
        if i == len(gold_rows):
            return fractions.Fraction(0), 0
        options = [best(i + 1, used)]
        for j, pred_row in enumerate(pred_rows):
            overlap = len(gold_rows[i] & pred_row)
            if j in used or overlap == 0:
                continue
            rest_recall, rest_pairs = best(i + 1, used | {j})
            recall = fractions.Fraction(overlap, len(gold_rows[i]))
            options.append((rest_recall + recall, rest_pairs + 1))
        return max(options)

    tp_, pairs = best(0, frozenset())
    fn = len(gold_rows) - tp_
    fp = fractions.Fraction(len(pred_rows) - pairs)
    denominator = 2 * tp_ + fp + fn
    f1 = fractions.Fraction(1) if denominator == 0 else 2 * tp_ / denominator
    return float(tp_), float(fp), float(fn), float(f1), int(f1 == 1)


@pytest.mark.timeout(900)
@hypothesis.settings(max_examples=10_000, deadline=None)
@hypothesis.given(gold=tables(), pred=tables())
def test_row_major_matches_brute_force(
    gold: kbnav.metrics.ResultTable, pred: kbnav.metrics.ResultTable
) -> None:
    """The assignment solver finds the same optimum as exhaustive search."""
    expected = brute_force(gold, pred)
    assert scores(gold, pred) == expected
    _, _, _, f1, em = expected
    assert 0.0 <= f1 <= 1.0
    assert em == int(f1 == 1.0)


@pytest.mark.timeout(300)
@hypothesis.settings(max_examples=1_000, deadline=None)
@hypothesis.given(
    gold=st.lists(st.sampled_from(SYMBOLS), max_size=6),
    pred=st.lists(st.sampled_from(SYMBOLS), max_size=6),
)
def test_single_column_reduces_to_scalar(
    gold: list[kbnav.metrics.Entity], pred: list[kbnav.metrics.Entity]
) -> None:
    """With one column, row-major scores equal set-based scores exactly."""
    gold_table = table(*[(cell,) for cell in gold])
    pred_table = table(*[(cell,) for cell in pred])
    assert kbnav.metrics.row_major_scores(
        gold_table, pred_table
    ) == kbnav.metrics.scalar_f1(gold, pred)


@hypothesis.settings(deadline=None)
@hypothesis.given(data=st.data(), gold=tables(), pred=tables())
def test_row_order_does_not_matter(
    data: st.DataObject,
    gold: kbnav.metrics.ResultTable,
    pred: kbnav.metrics.ResultTable,
) -> None:
    """Shuffling rows of either table leaves every score unchanged."""
    shuffled_gold = kbnav.metrics.ResultTable(
        columns=gold.columns, rows=tuple(data.draw(st.permutations(gold.rows)))
    )
    shuffled_pred = kbnav.metrics.ResultTable(
        columns=pred.columns, rows=tuple(data.draw(st.permutations(pred.rows)))
    )
    assert scores(shuffled_gold, shuffled_pred) == scores(gold, pred)


@hypothesis.settings(deadline=None)
@hypothesis.given(data=st.data(), gold=tables(width=1), pred=tables())
def test_extra_predicted_column_never_hurts(
    data: st.DataObject,
    gold: kbnav.metrics.ResultTable,
    pred: kbnav.metrics.ResultTable,
) -> None:
    """Appending a column to every predicted row never lowers F1."""
    extra = data.draw(
        st.lists(cells, min_size=len(pred.rows), max_size=len(pred.rows))
    )
    widened = kbnav.metrics.ResultTable(
        columns=(*pred.columns, "extra"),
        rows=tuple((*row, cell) for row, cell in zip(pred.rows, extra, strict=True)),
    )

    # Only meaningful when the extra cells neither merge nor split distinct rows.
    def as_set(row: tuple) -> frozenset:
        return frozenset(c for c in row if c is not None)

    before = [as_set(row) for row in pred.rows]
    after = [as_set(row) for row in widened.rows]
    pairs = set(zip(before, after, strict=True))
    hypothesis.assume(len(pairs) == len(set(before)) == len(set(after)))
    # A row of only unbound cells is dropped, so it must stay that way.
    hypothesis.assume(
        all(bool(b) == bool(a) for b, a in zip(before, after, strict=True))
    )

    narrow = kbnav.metrics.row_major_scores(gold, pred)
    wide = kbnav.metrics.row_major_scores(gold, widened)
    assert wide.f1 >= narrow.f1
