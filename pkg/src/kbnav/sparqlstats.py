"""Query complexity statistics over the rdflib SPARQL parse tree.

Clauses are the atomic nodes of the query:

- each SELECT (subqueries included) or ASK
- each subject-relation-object triple (a property path is one triple)
- GROUP BY, HAVING, ORDER BY, each FILTER, each MINUS and each BIND
- each join: UNION (one per keyword) and OPTIONAL

VALUES blocks add their values to the objects but no clause. SERVICE blocks
(the label service in particular) only format results and are ignored, as are
Blazegraph `hint:` triples. LIMIT and OFFSET numbers are not literals.

Prefixes are never resolved, so Wikidata's undeclared `wd:`/`wdt:` names parse
as they are written.
"""

import collections.abc
import dataclasses
import logging
import math
import re

import beartype
import pyparsing
import rdflib
import rdflib.plugins.sparql.parser
import rdflib.plugins.sparql.parserutils

import kbnav.errors

logger = logging.getLogger(__name__)

_PID_RE = re.compile(r"(?:^|[:/])(P\d+)$")
_HINT_NAMESPACE = "http://www.bigdata.com/queryHints#"
_COLLECTION_PREDICATES = (rdflib.RDF.first, rdflib.RDF.rest)
_CompValue = rdflib.plugins.sparql.parserutils.CompValue

METRICS = (
    "clauses",
    "projections",
    "relations",
    "subjects",
    "predicates",
    "objects",
    "literals",
)


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class QueryStats:
    clauses: int
    projections: int
    relations: int
    subjects: int
    predicates: int
    objects: int
    literals: int

    def __post_init__(self) -> None:
        assert all(getattr(self, name) >= 0 for name in METRICS)
        assert self.relations <= self.clauses


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class AggregateStats:
    """Per-metric means over the queries that could be analyzed."""

    means: dict[str, float]
    n_analyzed: int
    n_excluded: int


def _unsupported(what: str) -> kbnav.errors.UnsupportedSyntaxError:
    return kbnav.errors.UnsupportedSyntaxError(
        message=f"Unsupported SPARQL: {what}",
        hint="The analyzer covers SELECT/ASK queries without RDF collections.",
    )


def _flatten(node: object) -> list[object]:
    if isinstance(node, list | pyparsing.ParseResults):
        return [leaf for item in node for leaf in _flatten(item)]
    return [node]


def _is_literal(term: object) -> bool:
    if isinstance(term, _CompValue):
        return term.name == "literal"
    return isinstance(term, rdflib.term.Literal)


def _term_key(term: object) -> str:
    """A textual identity for a term as written: pnames stay unexpanded."""
    if isinstance(term, _CompValue):
        if term.name == "pname":
            return f"{term.get('prefix') or ''}:{term.get('localname') or ''}"
        if term.name == "literal":
            key = rdflib.term.Literal(str(term.get("string"))).n3()
            if term.get("lang"):
                key += f"@{term.get('lang')}"
            if term.get("datatype") is not None:
                key += f"^^{_term_key(term.get('datatype'))}"
            return key
        raise _unsupported(f"unexpected {term.name} term")
    if isinstance(term, rdflib.term.Node):
        return term.n3()
    raise _unsupported(f"unexpected term {term!r}")


def _iris(node: object) -> collections.abc.Iterator[tuple[str | None, str]]:
    """(prefix, text) of every IRI under a predicate or property path."""
    if isinstance(node, _CompValue):
        if node.name == "pname":
            yield node.get("prefix"), _term_key(node)
            return
        for key in node:
            yield from _iris(node.get(key))
    elif isinstance(node, list | pyparsing.ParseResults):
        for item in node:
            yield from _iris(item)
    elif isinstance(node, rdflib.term.URIRef):
        yield None, str(node)


def _is_hint(predicate: object) -> bool:
    return any(
        prefix == "hint" or text.startswith(_HINT_NAMESPACE)
        for prefix, text in _iris(predicate)
    )


class _Analyzer:
    """Walks one parsed query, counting as it goes."""

    def __init__(self) -> None:
        self.clauses = 0
        self.projections: int | None = 0
        self.relations = 0
        self.subjects: set[str] = set()
        self.predicates: set[str] = set()
        self.objects: set[str] = set()
        self.literals: set[str] = set()
        self.variables: set[str] = set()

    def query(self, body: _CompValue) -> None:
        if body.name == "SelectQuery":
            self.select(body, top=True)
        elif body.name == "AskQuery":
            self.clauses += 1
            self.group(body.get("where"))
            self.modifiers(body)
        else:
            raise _unsupported(f"{body.name} is not analyzed")

    def select(self, select: _CompValue, *, top: bool) -> None:
        self.clauses += 1
        projection = select.get("projection")
        if top:
            # None marks SELECT *
            self.projections = len(projection) if projection else None
        for item in projection or ():
            self.expression(item.get("expr"))
        self.group(select.get("where"))
        self.modifiers(select)

    def modifiers(self, query: _CompValue) -> None:
        for key in ("groupby", "having", "orderby"):
            clause = query.get(key)
            if clause is not None:
                self.clauses += 1
                self.expression(clause)
        if query.get("valuesClause") is not None:
            self.values(query.get("valuesClause"))

    def group(self, pattern: _CompValue | None) -> None:
        if pattern is None:
            return
        if pattern.name == "SubSelect":
            self.select(pattern, top=False)
            return

        for part in pattern.get("part") or ():
            if part.name == "TriplesBlock":
                for triples in part.get("triples") or ():
                    self.triples(_flatten(triples))
            elif part.name == "GroupOrUnionGraphPattern":
                graphs = part.get("graph") or []
                self.clauses += len(graphs) - 1
                for graph in graphs:
                    self.group(graph)
            elif part.name in {"OptionalGraphPattern", "MinusGraphPattern"}:
                self.clauses += 1
                self.group(part.get("graph"))
            elif part.name == "Filter":
                self.clauses += 1
                self.expression(part.get("expr"))
            elif part.name == "Bind":
                self.clauses += 1
                self.expression(part.get("expr"))
                self.variables.add(_term_key(part.get("var")))
            elif part.name == "InlineData":
                self.values(part)
            elif part.name == "GraphGraphPattern":
                self.group(part.get("graph"))
            elif part.name != "ServiceGraphPattern":
                raise _unsupported(f"{part.name} is not analyzed")

    def triples(self, terms: list[object]) -> None:
        if len(terms) % 3:
            raise _unsupported("malformed triple block")
        for i in range(0, len(terms), 3):
            subject, predicate, obj = terms[i : i + 3]
            if isinstance(predicate, rdflib.term.URIRef):
                if predicate in _COLLECTION_PREDICATES:
                    raise _unsupported("RDF collections are not supported")
            if _is_hint(predicate):
                continue

            self.clauses += 1
            self.relations += 1
            self.subjects.add(self.term(subject))
            self.objects.add(self.term(obj))
            if isinstance(predicate, rdflib.term.Variable):
                self.variables.add(_term_key(predicate))
            for _, text in _iris(predicate):
                match = _PID_RE.search(text)
                if match:
                    self.predicates.add(match.group(1))

    def term(self, term: object) -> str:
        key = _term_key(term)
        if isinstance(term, rdflib.term.Variable):
            self.variables.add(key)
        elif _is_literal(term):
            self.literals.add(key)
        return key

    def values(self, block: _CompValue) -> None:
        for var in block.get("var") or ():
            self.variables.add(_term_key(var))
        for value in _flatten(block.get("value") or []):
            if not isinstance(value, _CompValue | rdflib.term.Node):
                # UNDEF
                continue
            self.objects.add(self.term(value))

    def expression(self, node: object) -> None:
        if isinstance(node, _CompValue):
            if node.name in {"Builtin_EXISTS", "Builtin_NOTEXISTS"}:
                self.group(node.get("graph"))
            elif node.name == "literal":
                self.literals.add(_term_key(node))
            elif node.name != "pname":
                for key in node:
                    self.expression(node.get(key))
        elif isinstance(node, list | pyparsing.ParseResults):
            for item in node:
                self.expression(item)
        elif isinstance(node, rdflib.term.Variable | rdflib.term.Literal):
            self.term(node)

    def stats(self) -> QueryStats:
        projections = self.projections
        if projections is None:
            projections = len(self.variables)
        return QueryStats(
            clauses=self.clauses,
            projections=projections,
            relations=self.relations,
            subjects=len(self.subjects),
            predicates=len(self.predicates),
            objects=len(self.objects),
            literals=len(self.literals),
        )


@beartype.beartype
def analyze_query(query: str) -> QueryStats:
    """Count the atomic nodes and unique terms of a query."""
    try:
        parsed = rdflib.plugins.sparql.parser.parseQuery(query)
    except (pyparsing.ParseBaseException, ValueError) as err:
        raise kbnav.errors.UnsupportedSyntaxError(
            message=f"Cannot parse query: {err}",
            hint="Check the query in the Wikidata query service editor.",
        ) from None

    analyzer = _Analyzer()
    # The prologue comes first; the query form is last.
    analyzer.query(parsed[-1])
    return analyzer.stats()


@beartype.beartype
def aggregate_stats(queries: collections.abc.Sequence[str]) -> AggregateStats:
    """Mean of every metric over the queries the analyzer supports."""
    if not queries:
        raise ValueError("No queries to analyze")

    analyzed: list[QueryStats] = []
    n_excluded = 0
    for query in queries:
        try:
            analyzed.append(analyze_query(query))
        except kbnav.errors.UnsupportedSyntaxError as err:
            n_excluded += 1
            logger.info("Excluding query: %s", err.message)

    means = {}
    for name in METRICS:
        values = [float(getattr(stats, name)) for stats in analyzed]
        means[name] = math.fsum(values) / len(values) if values else 0.0
    return AggregateStats(means=means, n_analyzed=len(analyzed), n_excluded=n_excluded)
