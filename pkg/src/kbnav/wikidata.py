"""Wikidata access: text search, entity entries, property examples and SPARQL."""

import collections.abc
import dataclasses
import json
import logging
import re
import threading
import time
import typing as tp

import beartype
import requests

import kbnav.cache
import kbnav.config
import kbnav.errors

logger = logging.getLogger(__name__)

MAX_SEARCH_ENTITIES = 8
MAX_SEARCH_PROPERTIES = 4
N_PROPERTY_EXAMPLES = 5
# wbgetentities accepts at most 50 ids per call.
_LABEL_BATCH = 50

_QID_RE = re.compile(r"Q\d+")
_PID_RE = re.compile(r"P\d+")
_ENTITY_URI_RE = re.compile(r"^https?://www\.wikidata\.org/entity/([QPL]\d+)$")

_MONTHS = (
    "January",
    "February",
    "March",
    "April",
    "May",
    "June",
    "July",
    "August",
    "September",
    "October",
    "November",
    "December",
)


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class EntityId:
    """A QID such as Q7604."""

    value: str

    def __post_init__(self) -> None:
        if not _QID_RE.fullmatch(self.value):
            raise kbnav.errors.InvalidIdError(
                message=f"Invalid entity id '{self.value}'",
                hint="Entity ids look like Q7604.",
            )

    def __str__(self) -> str:
        return self.value


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class PropertyId:
    """A PID such as P184."""

    value: str

    def __post_init__(self) -> None:
        if not _PID_RE.fullmatch(self.value):
            raise kbnav.errors.InvalidIdError(
                message=f"Invalid property id '{self.value}'",
                hint="Property ids look like P184.",
            )

    def __str__(self) -> str:
        return self.value


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class EntityHit:
    id: EntityId
    label: str
    description: str


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class PropertyHit:
    id: PropertyId
    label: str
    description: str


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class SearchResult:
    """Search matches, already truncated."""

    query: str
    entities: tuple[EntityHit, ...]
    properties: tuple[PropertyHit, ...]

    def __post_init__(self) -> None:
        assert len(self.entities) <= MAX_SEARCH_ENTITIES
        assert len(self.properties) <= MAX_SEARCH_PROPERTIES


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class ClaimValue:
    """One value of a claim or qualifier."""

    kind: tp.Literal["entity", "literal", "quantity"]
    value: str
    """Entity id, literal text, or decimal amount."""
    label: str | None = None
    """English label for entity values."""
    unit: str | None = None
    unit_label: str | None = None


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class Qualifier:
    property: PropertyId
    label: str
    value: ClaimValue


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class Statement:
    value: ClaimValue
    qualifiers: tuple[Qualifier, ...] = ()


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class Claim:
    """All statements of one property on one entity."""

    property: PropertyId
    label: str
    statements: tuple[Statement, ...]


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class EntityEntry:
    """Outgoing edges of an entity, with labels resolved."""

    subject: EntityId
    label: str
    description: str
    claims: tuple[Claim, ...]

    def claim_keys(self) -> tuple[tuple[PropertyId, str], ...]:
        return tuple((claim.property, claim.label) for claim in self.claims)


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class ExamplePair:
    subject: EntityId
    subject_label: str
    value: ClaimValue


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class PropertyExamples:
    property: PropertyId
    label: str
    pairs: tuple[ExamplePair, ...]


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class Binding:
    """One cell of a SPARQL JSON result."""

    kind: tp.Literal["uri", "literal", "bnode"]
    value: str
    datatype: str | None = None
    lang: str | None = None


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class SparqlTable:
    columns: tuple[str, ...]
    rows: tuple[tuple[Binding | None, ...], ...]
    """None marks an unbound variable."""

    def __post_init__(self) -> None:
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError(
                    f"Row has {len(row)} cells but there are "
                    f"{len(self.columns)} columns"
                )


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class SparqlBoolean:
    value: bool


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class SparqlError:
    kind: tp.Literal["syntax", "timeout", "network", "too-large"]
    message: str


SparqlResponse = SparqlTable | SparqlBoolean | SparqlError


@beartype.beartype
def has_answer(response: SparqlResponse | None) -> bool:
    """True for a boolean or a table with at least one row."""
    if isinstance(response, SparqlBoolean):
        return True
    return isinstance(response, SparqlTable) and len(response.rows) > 0


@beartype.beartype
def entity_id_from_uri(uri: str) -> str | None:
    """Return Q42 for http://www.wikidata.org/entity/Q42, else None."""
    match = _ENTITY_URI_RE.match(uri)
    return match.group(1) if match else None


@beartype.beartype
def response_to_json(response: SparqlResponse) -> dict[str, object]:
    """Encode a response in the W3C SPARQL JSON results shape (plus errors)."""
    if isinstance(response, SparqlError):
        return {"error": {"kind": response.kind, "message": response.message}}
    if isinstance(response, SparqlBoolean):
        return {"head": {}, "boolean": response.value}

    bindings = []
    for row in response.rows:
        binding: dict[str, object] = {}
        for column, cell in zip(response.columns, row, strict=True):
            if cell is None:
                continue
            encoded: dict[str, str] = {"type": cell.kind, "value": cell.value}
            if cell.datatype:
                encoded["datatype"] = cell.datatype
            if cell.lang:
                encoded["xml:lang"] = cell.lang
            binding[column] = encoded
        bindings.append(binding)
    return {"head": {"vars": list(response.columns)}, "results": {"bindings": bindings}}


@beartype.beartype
def response_from_json(data: dict[str, tp.Any]) -> SparqlResponse:
    """Decode SPARQL JSON results (or an encoded error)."""
    if "error" in data:
        error = data["error"]
        return SparqlError(kind=error["kind"], message=error["message"])
    if "boolean" in data:
        return SparqlBoolean(value=bool(data["boolean"]))

    columns = tuple(data.get("head", {}).get("vars", []))
    rows = []
    for binding in data.get("results", {}).get("bindings", []):
        row = []
        for column in columns:
            cell = binding.get(column)
            if cell is None:
                row.append(None)
                continue
            kind = cell.get("type", "literal")
            # Some stores report "typed-literal" from the 2005 draft.
            if kind == "typed-literal":
                kind = "literal"
            row.append(
                Binding(
                    kind=kind,
                    value=str(cell.get("value", "")),
                    datatype=cell.get("datatype"),
                    lang=cell.get("xml:lang"),
                )
            )
        rows.append(tuple(row))
    return SparqlTable(columns=columns, rows=tuple(rows))


_INVALID_JSON = SparqlError(
    kind="network", message="Query service returned invalid JSON"
)


class _QueryTimeout(Exception):
    """Raised internally when a request times out and must not be retried."""


class WikidataClient:
    """Wikidata API and query service client with caching, pacing and retries.

    Safe to share between threads: the cache and rate limiter are thread-safe
    and requests.Session is only used for independent requests.
    """

    def __init__(
        self,
        config: kbnav.config.ClientConfig,
        *,
        session: requests.Session | None = None,
        sleep: collections.abc.Callable[[float], None] = time.sleep,
    ) -> None:
        self._config = config
        self._session = session if session is not None else requests.Session()
        self._sleep = sleep
        self._cache = kbnav.cache.ResponseCache(config.cache_dpath)
        self._limiter = kbnav.cache.RateLimiter(
            config.min_request_interval, sleep=sleep
        )
        self._count_lock = threading.Lock()
        self._network_calls = 0

    @property
    def network_calls(self) -> int:
        """Number of HTTP requests sent so far."""
        with self._count_lock:
            return self._network_calls

    @beartype.beartype
    def search_items(self, query: str) -> SearchResult:
        """Search item and property labels/aliases, like the search box."""
        query = query.strip()
        if not query:
            raise kbnav.errors.EmptyQueryError(
                message="Search query is empty",
                hint="Pass the text you would type into the Wikidata search box.",
            )

        entities = []
        for item in self._search(query, "item", MAX_SEARCH_ENTITIES):
            entity_id = item.get("id", "")
            if not _QID_RE.fullmatch(entity_id):
                continue
            entities.append(
                EntityHit(
                    id=EntityId(entity_id),
                    label=str(item.get("label") or entity_id),
                    description=str(item.get("description") or ""),
                )
            )

        properties = []
        for item in self._search(query, "property", MAX_SEARCH_PROPERTIES):
            property_id = item.get("id", "")
            if not _PID_RE.fullmatch(property_id):
                continue
            properties.append(
                PropertyHit(
                    id=PropertyId(property_id),
                    label=str(item.get("label") or property_id),
                    description=str(item.get("description") or ""),
                )
            )

        return SearchResult(
            query=query,
            entities=tuple(entities[:MAX_SEARCH_ENTITIES]),
            properties=tuple(properties[:MAX_SEARCH_PROPERTIES]),
        )

    @beartype.beartype
    def fetch_entity_entry(self, entity_id: EntityId) -> EntityEntry:
        """Fetch all direct claims of an entity, qualifiers included."""
        data = self._api_json({
            "action": "wbgetentities",
            "ids": entity_id.value,
            "props": "labels|descriptions|claims",
            "languages": "en",
            "format": "json",
        })
        entity = _pick_entity(data, entity_id.value)
        if entity is None:
            raise kbnav.errors.UnknownEntityError(
                message=f"Wikidata has no entity {entity_id}",
                hint="Use search_wikidata to find the right QID.",
            )

        raw_claims: dict[str, list[dict[str, tp.Any]]] = entity.get("claims") or {}
        ids: set[str] = set()
        for pid, statements in raw_claims.items():
            ids.add(pid)
            for statement in statements:
                ids.update(_snak_ids(statement.get("mainsnak", {})))
                for qpid, snaks in (statement.get("qualifiers") or {}).items():
                    ids.add(qpid)
                    for snak in snaks:
                        ids.update(_snak_ids(snak))
        labels = self.fetch_labels(sorted(ids))

        claims = []
        for pid, statements in raw_claims.items():
            if not _PID_RE.fullmatch(pid):
                continue
            parsed = []
            for statement in statements:
                value = _snak_value(statement.get("mainsnak", {}), labels)
                qualifiers = []
                order = statement.get("qualifiers-order") or list(
                    (statement.get("qualifiers") or {}).keys()
                )
                for qpid in order:
                    if not _PID_RE.fullmatch(qpid):
                        continue
                    for snak in (statement.get("qualifiers") or {}).get(qpid, []):
                        qualifiers.append(
                            Qualifier(
                                property=PropertyId(qpid),
                                label=labels.get(qpid, qpid),
                                value=_snak_value(snak, labels),
                            )
                        )
                parsed.append(Statement(value=value, qualifiers=tuple(qualifiers)))
            claims.append(
                Claim(
                    property=PropertyId(pid),
                    label=labels.get(pid, pid),
                    statements=tuple(parsed),
                )
            )

        return EntityEntry(
            subject=entity_id,
            label=_english(entity.get("labels")) or entity_id.value,
            description=_english(entity.get("descriptions")),
            claims=tuple(claims),
        )

    @beartype.beartype
    def fetch_property_examples(self, property_id: PropertyId) -> PropertyExamples:
        """Return a few subject-object pairs that use the property."""
        query = (
            f"SELECT ?s ?o WHERE {{ ?s wdt:{property_id.value} ?o }} "
            f"LIMIT {N_PROPERTY_EXAMPLES}"
        )
        response = self.run_sparql(query)
        if isinstance(response, SparqlError):
            raise kbnav.errors.NetworkError(
                message=(
                    f"Could not fetch examples for {property_id}: {response.message}"
                ),
            )
        assert isinstance(response, SparqlTable)

        raw_pairs = []
        ids = {property_id.value}
        for subject, value in response.rows:
            if subject is None or value is None:
                continue
            subject_id = entity_id_from_uri(subject.value)
            if subject_id is None or not _QID_RE.fullmatch(subject_id):
                continue
            ids.add(subject_id)
            object_id = entity_id_from_uri(value.value) if value.kind == "uri" else None
            if object_id is not None:
                ids.add(object_id)
            raw_pairs.append((subject_id, value, object_id))

        labels = self.fetch_labels(sorted(ids))
        if property_id.value not in labels and not raw_pairs:
            if not self._exists(property_id.value):
                raise kbnav.errors.UnknownPropertyError(
                    message=f"Wikidata has no property {property_id}",
                    hint="Use search_wikidata to find the right PID.",
                )

        pairs = []
        for subject_id, value, object_id in raw_pairs:
            if object_id is not None:
                claim_value = ClaimValue(
                    kind="entity",
                    value=object_id,
                    label=labels.get(object_id, object_id),
                )
            else:
                claim_value = ClaimValue(kind="literal", value=value.value)
            pairs.append(
                ExamplePair(
                    subject=EntityId(subject_id),
                    subject_label=labels.get(subject_id, subject_id),
                    value=claim_value,
                )
            )

        return PropertyExamples(
            property=property_id,
            label=labels.get(property_id.value, property_id.value),
            pairs=tuple(pairs),
        )

    @beartype.beartype
    def run_sparql(self, query: str) -> SparqlResponse:
        """Run a query on the query service. Service failures become SparqlError."""
        query = query.strip()
        if not query:
            raise kbnav.errors.EmptyQueryError(message="SPARQL query is empty")

        url = self._config.sparql_endpoint_url
        key = kbnav.cache.digest("sparql", url, query)
        if not self._config.bypass_cache:
            cached = self._cache.get(key)
            if cached is not None:
                return response_from_json(cached)
        if self._config.offline:
            return SparqlError(
                kind="network", message="Offline and the query is not cached"
            )

        try:
            response = self._send(
                "POST",
                url,
                data={"query": query, "format": "json"},
                headers={"Accept": "application/sparql-results+json"},
                stream=True,
                retry_timeouts=False,
            )
        except _QueryTimeout:
            timeout = self._config.request_timeout
            return SparqlError(
                kind="timeout", message=f"Query timed out after {timeout:g} seconds"
            )
        except kbnav.errors.NetworkError as err:
            return SparqlError(kind="network", message=err.message)

        try:
            body = _read_capped(response, self._config.max_response_bytes)
        except _QueryTimeout:
            return SparqlError(
                kind="timeout", message="Query timed out while streaming results"
            )
        except requests.RequestException as err:
            return SparqlError(kind="network", message=f"Connection dropped: {err}")
        if body is None:
            mb = self._config.max_response_bytes / (1024 * 1024)
            return SparqlError(
                kind="too-large",
                message=(
                    f"Result is larger than {mb:g} MB; add a LIMIT or narrow the query"
                ),
            )
        text = body.decode("utf-8", errors="replace")

        if response.status_code == 400:
            result: SparqlResponse = SparqlError(
                kind="syntax", message=_service_message(text)
            )
            self._cache.put(key, response_to_json(result))
            return result
        if "TimeoutException" in text or response.status_code == 504:
            return SparqlError(kind="timeout", message="Query timed out on the service")
        if response.status_code >= 400:
            return SparqlError(
                kind="network",
                message=(
                    f"Query service error ({response.status_code}): "
                    f"{_service_message(text)}"
                ),
            )

        try:
            data = json.loads(text)
        except json.JSONDecodeError:
            return _INVALID_JSON
        if not isinstance(data, dict):
            return _INVALID_JSON

        result = response_from_json(data)
        self._cache.put(key, response_to_json(result))
        return result

    @beartype.beartype
    def fetch_labels(self, ids: collections.abc.Sequence[str]) -> dict[str, str]:
        """English labels for QIDs/PIDs. Ids without a label are left out."""
        wanted = sorted(
            {i for i in ids if _QID_RE.fullmatch(i) or _PID_RE.fullmatch(i)}
        )
        labels: dict[str, str] = {}
        for start in range(0, len(wanted), _LABEL_BATCH):
            chunk = wanted[start : start + _LABEL_BATCH]
            data = self._api_json({
                "action": "wbgetentities",
                "ids": "|".join(chunk),
                "props": "labels",
                "languages": "en",
                "format": "json",
            })
            if "error" in data:
                logger.debug("Label lookup failed for %s: %s", chunk, data["error"])
                continue
            for entity_id, entity in (data.get("entities") or {}).items():
                label = _english(entity.get("labels"))
                if label:
                    labels[entity_id] = label
        return labels

    @beartype.beartype
    def _exists(self, entity_id: str) -> bool:
        data = self._api_json({
            "action": "wbgetentities",
            "ids": entity_id,
            "props": "info",
            "format": "json",
        })
        return _pick_entity(data, entity_id) is not None

    @beartype.beartype
    def _search(
        self, query: str, namespace: str, limit: int
    ) -> list[dict[str, tp.Any]]:
        data = self._api_json({
            "action": "wbsearchentities",
            "search": query,
            "language": "en",
            "uselang": "en",
            "type": namespace,
            "limit": str(limit),
            "format": "json",
        })
        results = data.get("search")
        if not isinstance(results, list):
            return []
        return [item for item in results if isinstance(item, dict)][:limit]

    @beartype.beartype
    def _api_json(self, params: dict[str, str]) -> dict[str, tp.Any]:
        """GET the action API as JSON, through the cache."""
        url = self._config.api_endpoint_url
        key = kbnav.cache.digest("api", url, params)
        if not self._config.bypass_cache:
            cached = self._cache.get(key)
            if cached is not None:
                return cached
        if self._config.offline:
            raise kbnav.errors.NetworkError(
                message=f"Offline and {params.get('action')} request is not cached",
                hint="Run once without offline mode to fill the cache.",
            )

        response = self._send(
            "GET", url, params=params, stream=False, retry_timeouts=True
        )
        if response.status_code >= 400:
            raise kbnav.errors.NetworkError(
                message=(
                    f"Wikidata API error ({response.status_code}) "
                    f"for {params.get('action')}"
                ),
            )
        try:
            data = response.json()
        except (json.JSONDecodeError, ValueError) as err:
            raise kbnav.errors.NetworkError(
                message=f"Invalid JSON response from Wikidata API: {err}",
            ) from None
        if not isinstance(data, dict):
            raise kbnav.errors.NetworkError(
                message="Unexpected response from Wikidata API"
            )

        self._cache.put(key, data)
        return data

    @beartype.beartype
    def _send(
        self,
        method: str,
        url: str,
        *,
        params: dict[str, str] | None = None,
        data: dict[str, str] | None = None,
        headers: dict[str, str] | None = None,
        stream: bool,
        retry_timeouts: bool,
    ) -> requests.Response:
        """Perform a request with pacing and retries.

        Retries connection errors, 429 (honouring Retry-After), 502 and 503.
        Other statuses are returned for the caller to interpret.
        """
        all_headers = {"User-Agent": self._config.user_agent}
        all_headers.update(headers or {})
        attempts = self._config.max_retries + 1
        last_err = "no attempts made"
        for attempt in range(attempts):
            self._limiter.wait()
            with self._count_lock:
                self._network_calls += 1
            try:
                response = self._session.request(
                    method,
                    url,
                    params=params,
                    data=data,
                    headers=all_headers,
                    timeout=self._config.request_timeout,
                    stream=stream,
                )
            except requests.Timeout as err:
                if not retry_timeouts:
                    raise _QueryTimeout() from None
                last_err = str(err)
                logger.debug("Timeout on %s (attempt %d): %s", url, attempt + 1, err)
            except requests.RequestException as err:
                last_err = str(err)
                logger.debug(
                    "Network error on %s (attempt %d): %s", url, attempt + 1, err
                )
            else:
                if response.status_code == 429:
                    last_err = "rate limited (429)"
                    wait = _retry_after(response, default=2.0**attempt)
                    logger.debug("Rate limited by %s, waiting %.1fs", url, wait)
                    response.close()
                    if attempt < attempts - 1:
                        self._sleep(wait)
                    continue
                if response.status_code in {502, 503}:
                    last_err = f"service unavailable ({response.status_code})"
                    response.close()
                    if attempt < attempts - 1:
                        self._sleep(2.0**attempt)
                    continue
                return response

            if attempt < attempts - 1:
                self._sleep(2.0**attempt)

        raise kbnav.errors.NetworkError(
            message=f"Network error contacting {url}: {last_err}",
            hint="Check your connection, or raise max_retries in your config file.",
        )


@beartype.beartype
def _read_capped(response: requests.Response, max_bytes: int) -> bytes | None:
    """Read the body, or return None once it exceeds max_bytes."""
    chunks = []
    total = 0
    try:
        for chunk in response.iter_content(chunk_size=64 * 1024):
            if not chunk:
                continue
            total += len(chunk)
            if total > max_bytes:
                return None
            chunks.append(chunk)
    except requests.Timeout:
        raise _QueryTimeout() from None
    finally:
        response.close()
    return b"".join(chunks)


@beartype.beartype
def _retry_after(response: requests.Response, default: float) -> float:
    value = response.headers.get("Retry-After")
    if value is None:
        return default
    try:
        return max(float(value), 0.0)
    except ValueError:
        return default


@beartype.beartype
def _service_message(text: str, max_lines: int = 12) -> str:
    """Trim a Java stack trace down to its informative head."""
    lines = [line.rstrip() for line in text.strip().splitlines() if line.strip()]
    for i, line in enumerate(lines):
        if "MalformedQueryException" in line or "QueryParseException" in line:
            lines = lines[i:]
            break
    lines = [line for line in lines if not line.lstrip().startswith("at ")]
    return "\n".join(lines[:max_lines])


@beartype.beartype
def _pick_entity(data: dict[str, tp.Any], entity_id: str) -> dict[str, tp.Any] | None:
    """Find the entity in a wbgetentities response, following redirects."""
    if "error" in data:
        return None
    entities = data.get("entities") or {}
    entity = entities.get(entity_id)
    if entity is None and len(entities) == 1:
        entity = next(iter(entities.values()))
    if not isinstance(entity, dict) or "missing" in entity:
        return None
    return entity


@beartype.beartype
def _english(field: dict[str, tp.Any] | None) -> str:
    if not field:
        return ""
    value = field.get("en")
    if not isinstance(value, dict):
        return ""
    return str(value.get("value", ""))


@beartype.beartype
def _snak_ids(snak: dict[str, tp.Any]) -> set[str]:
    """Ids referenced by a snak's value (items and quantity units)."""
    datavalue = snak.get("datavalue") or {}
    value = datavalue.get("value")
    kind = datavalue.get("type")
    if kind == "wikibase-entityid" and isinstance(value, dict):
        entity_id = value.get("id")
        return {entity_id} if isinstance(entity_id, str) else set()
    if kind == "quantity" and isinstance(value, dict):
        unit = entity_id_from_uri(str(value.get("unit", "")))
        return {unit} if unit else set()
    return set()


@beartype.beartype
def _snak_value(snak: dict[str, tp.Any], labels: dict[str, str]) -> ClaimValue:
    """Convert a snak into a ClaimValue with labels filled in."""
    snaktype = snak.get("snaktype", "value")
    if snaktype == "somevalue":
        return ClaimValue(kind="literal", value="unknown value")
    if snaktype == "novalue":
        return ClaimValue(kind="literal", value="no value")

    datavalue = snak.get("datavalue") or {}
    kind = datavalue.get("type")
    value = datavalue.get("value")

    if kind == "wikibase-entityid" and isinstance(value, dict):
        entity_id = str(value.get("id", ""))
        return ClaimValue(
            kind="entity", value=entity_id, label=labels.get(entity_id, entity_id)
        )
    if kind == "quantity" and isinstance(value, dict):
        amount = str(value.get("amount", "")).lstrip("+")
        unit = entity_id_from_uri(str(value.get("unit", "")))
        return ClaimValue(
            kind="quantity",
            value=amount,
            unit=unit,
            unit_label=labels.get(unit, unit) if unit else None,
        )
    if kind == "time" and isinstance(value, dict):
        return ClaimValue(kind="literal", value=format_time(value))
    if kind == "monolingualtext" and isinstance(value, dict):
        return ClaimValue(kind="literal", value=str(value.get("text", "")))
    if kind == "globecoordinate" and isinstance(value, dict):
        return ClaimValue(
            kind="literal", value=f"{value.get('latitude')}, {value.get('longitude')}"
        )
    if isinstance(value, str):
        return ClaimValue(kind="literal", value=value)
    return ClaimValue(kind="literal", value=json.dumps(value, sort_keys=True))


@beartype.beartype
def format_time(value: dict[str, tp.Any]) -> str:
    """Format a Wikidata time value at its stated precision."""
    raw = str(value.get("time", ""))
    precision = int(value.get("precision", 11))
    match = re.match(r"^([+-])(\d+)-(\d\d)-(\d\d)", raw)
    if match is None:
        return raw
    sign, year_s, month_s, day_s = match.groups()
    year, month, day = int(year_s), int(month_s), int(day_s)
    era = " BCE" if sign == "-" else ""

    if precision >= 11 and month and day:
        return f"{day} {_MONTHS[month - 1]} {year}{era}"
    if precision == 10 and month:
        return f"{_MONTHS[month - 1]} {year}{era}"
    if precision == 8:
        return f"{year // 10 * 10}s{era}"
    if precision == 7:
        century = (year - 1) // 100 + 1
        return f"{century}{_ordinal_suffix(century)} century{era}"
    return f"{year}{era}"


@beartype.beartype
def _ordinal_suffix(n: int) -> str:
    if n % 100 in {11, 12, 13}:
        return "th"
    return {1: "st", 2: "nd", 3: "rd"}.get(n % 10, "th")
