"""Gold results, benchmark runs and reports.

A benchmark run answers every dataset question with the agent and scores the
final query against the gold query's results. Output directory layout:

    <out>/checkpoint.jsonl         one finished RunRecord per line
    <out>/traces/<name>.json       full agent trace (name from safe_name)
    <out>/transcripts/<name>.jsonl LLM transcript (live runs only)
    <out>/report.json, report.txt

A live run's output directory can be passed back as the replay directory: the
replay re-drives each example from its transcript and trace without touching
the network.
"""

import collections
import concurrent.futures
import dataclasses
import datetime
import json
import logging
import math
import pathlib
import re
import threading
import time
import typing as tp

import beartype
import numpy as np

import kbnav.agent
import kbnav.cache
import kbnav.config
import kbnav.datasets
import kbnav.errors
import kbnav.llm
import kbnav.metrics
import kbnav.traces
import kbnav.wikidata

logger = logging.getLogger(__name__)

Mode = tp.Literal["live", "replay"]
ScoreMode = tp.Literal["id", "label"]

CHECKPOINT_NAME = "checkpoint.jsonl"


class GoldCache:
    """Gold query results, executed at most once per query and kept with a timestamp.

    With a directory, entries survive across runs and processes; without one
    they live for the lifetime of the object.
    """

    def __init__(self, dpath: pathlib.Path | None) -> None:
        self._dpath = dpath
        self._entries = kbnav.cache.ResponseCache(dpath)
        self._locks: dict[str, threading.Lock] = collections.defaultdict(threading.Lock)
        self._guard = threading.Lock()

    @beartype.beartype
    def fetch(
        self, query: str, client: kbnav.agent.KnowledgeBase
    ) -> tuple[kbnav.wikidata.SparqlResponse, str]:
        """The cached response and its fetch time, running the query on a miss."""
        key = kbnav.cache.digest("gold", query.strip())
        with self._guard:
            lock = self._locks[key]

        with lock:
            if self._dpath is None:
                return self._fetch_locked(key, query, client)
            with kbnav.cache.acquire_lock(self._dpath / "locks" / f"{key}.lock"):
                return self._fetch_locked(key, query, client)

    @beartype.beartype
    def fetched_at(self, query: str) -> str | None:
        entry = self._entries.get(kbnav.cache.digest("gold", query.strip()))
        return None if entry is None else str(entry["fetched_at"])

    @beartype.beartype
    def _fetch_locked(
        self, key: str, query: str, client: kbnav.agent.KnowledgeBase
    ) -> tuple[kbnav.wikidata.SparqlResponse, str]:
        entry = self._entries.get(key)
        if entry is not None:
            response = kbnav.wikidata.response_from_json(entry["response"])
            return response, str(entry["fetched_at"])

        logger.info("Executing gold query %s", key[:12])
        response = client.run_sparql(query)
        fetched_at = _now()
        # Failures are not cached so drift can be retried later.
        if not isinstance(response, kbnav.wikidata.SparqlError):
            self._entries.put(
                key,
                {
                    "query": query.strip(),
                    "response": kbnav.wikidata.response_to_json(response),
                    "fetched_at": fetched_at,
                },
            )
        return response, fetched_at


@beartype.beartype
def materialize_gold(
    example: kbnav.datasets.DatasetExample,
    *,
    client: kbnav.agent.KnowledgeBase,
    cache: GoldCache,
    mode: ScoreMode = "id",
) -> kbnav.metrics.ResultTable:
    """The example's gold table, from the dataset file or the gold cache.

    Shipped gold results are used in id mode only; label mode needs the raw
    bindings and always goes through the cache.
    """
    if example.gold_results is not None and mode == "id":
        return example.gold_results

    response, _ = cache.fetch(example.gold_sparql, client)
    if isinstance(response, kbnav.wikidata.SparqlError):
        raise kbnav.errors.GoldExecutionError.make(
            example.id, response.kind, response.message
        )
    if not kbnav.wikidata.has_answer(response):
        raise kbnav.errors.GoldExecutionError.make(
            example.id, "empty", "the query returned no rows"
        )
    return to_table(response, mode, client)


@beartype.beartype
def to_table(
    response: kbnav.wikidata.SparqlResponse,
    mode: ScoreMode,
    client: kbnav.agent.KnowledgeBase,
) -> kbnav.metrics.ResultTable:
    """Normalize a response for scoring; failed queries score as empty tables."""
    if isinstance(response, kbnav.wikidata.SparqlError):
        return kbnav.metrics.ResultTable()
    labels: dict[str, str] = {}
    if mode == "label" and isinstance(response, kbnav.wikidata.SparqlTable):
        labels = _labels(response, client)
    try:
        return kbnav.metrics.normalize_results(response, mode, labels)
    except kbnav.errors.UnresolvableBindingError as err:
        logger.warning("%s; scoring as an empty result", err.message)
        return kbnav.metrics.ResultTable()


@beartype.beartype
def _labels(
    table: kbnav.wikidata.SparqlTable, client: kbnav.agent.KnowledgeBase
) -> dict[str, str]:
    ids = set()
    for row in table.rows:
        for binding in row:
            if binding is None or binding.kind != "uri":
                continue
            entity_id = kbnav.wikidata.entity_id_from_uri(binding.value)
            if entity_id:
                ids.add(entity_id)
    fetch_labels = getattr(client, "fetch_labels", None)
    if not ids or fetch_labels is None:
        return {}
    try:
        return fetch_labels(sorted(ids))
    except kbnav.errors.KbnavError as err:
        logger.warning("Label lookup failed, scoring with ids: %s", err.message)
        return {}


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class RunRecord:
    """One example's benchmark result."""

    example_id: str
    question: str
    final_sparql: str | None
    stop_reason: str
    """An agent stop reason, or error / gold_error."""
    actions_taken: int
    llm_calls: int
    resets: int
    score: kbnav.metrics.EvalOutcome | None
    """None when the example is excluded because its gold query failed."""
    gold_digest: str | None = None
    pred_digest: str | None = None
    gold_fetched_at: str | None = None
    trace_file: str | None = None
    """Relative to the output directory."""
    error: str | None = None
    duration_s: float | None = None
    """Wall-clock seconds; live runs only."""

    @property
    def excluded(self) -> bool:
        return self.score is None


@beartype.beartype
def record_to_json(record: RunRecord) -> dict[str, object]:
    data = dataclasses.asdict(record)
    data["score"] = None if record.score is None else record.score.to_json()
    if record.duration_s is None:
        del data["duration_s"]
    return data


@beartype.beartype
def record_from_json(data: dict[str, tp.Any]) -> RunRecord:
    fields = dict(data)
    if fields.get("score") is not None:
        score = fields["score"]
        fields["score"] = kbnav.metrics.EvalOutcome(
            tp=float(score["tp"]),
            fp=float(score["fp"]),
            fn=float(score["fn"]),
            f1=float(score["f1"]),
            em=int(score["em"]),
        )
    return RunRecord(**fields)


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class Report:
    """Aggregate scores over a benchmark run."""

    records: tuple[RunRecord, ...]
    macro_em: float
    macro_f1: float
    n_scored: int
    n_excluded: int
    action_quartiles: tuple[float, float, float] | None
    """25th, 50th and 75th percentile of actions taken; None if nothing was scored."""
    stop_reasons: dict[str, int]
    snapshot_date: str | None
    """Latest date a gold result was fetched, when any came from the endpoint."""
    mode: Mode
    score_mode: ScoreMode
    model: str

    def __post_init__(self) -> None:
        assert self.n_scored + self.n_excluded == len(self.records)


@beartype.beartype
def summarize(
    records: tp.Sequence[RunRecord], *, mode: Mode, score_mode: ScoreMode, model: str
) -> Report:
    """Macro EM/F1 over scored examples plus the action-count distribution."""
    scored = [r for r in records if r.score is not None]
    n = len(scored)
    macro_em = math.fsum(r.score.em for r in scored) / n if n else 0.0
    macro_f1 = math.fsum(r.score.f1 for r in scored) / n if n else 0.0

    quartiles = None
    if scored:
        q1, q2, q3 = np.percentile([r.actions_taken for r in scored], [25, 50, 75])
        quartiles = (float(q1), float(q2), float(q3))

    stop_reasons = collections.Counter(r.stop_reason for r in records)
    fetched = [r.gold_fetched_at for r in records if r.gold_fetched_at]
    return Report(
        records=tuple(records),
        macro_em=macro_em,
        macro_f1=macro_f1,
        n_scored=n,
        n_excluded=len(records) - n,
        action_quartiles=quartiles,
        stop_reasons=dict(sorted(stop_reasons.items())),
        snapshot_date=max(fetched)[:10] if fetched else None,
        mode=mode,
        score_mode=score_mode,
        model=model,
    )


@beartype.beartype
def report_to_json(report: Report) -> dict[str, object]:
    quartiles = report.action_quartiles
    return {
        "mode": report.mode,
        "score_mode": report.score_mode,
        "model": report.model,
        "snapshot_date": report.snapshot_date,
        "macro_em": report.macro_em,
        "macro_f1": report.macro_f1,
        "n_scored": report.n_scored,
        "n_excluded": report.n_excluded,
        "actions": None
        if quartiles is None
        else {"q1": quartiles[0], "median": quartiles[1], "q3": quartiles[2]},
        "stop_reasons": report.stop_reasons,
        "records": [record_to_json(r) for r in report.records],
    }


@beartype.beartype
def render_report(report: Report) -> str:
    """Aligned plain-text summary."""
    lines = []
    width = max([len("id"), *(len(r.example_id) for r in report.records)])
    lines.append(f"{'id':<{width}}  {'em':>2}  {'f1':>6}  {'actions':>7}  stop")
    for record in report.records:
        if record.score is None:
            em, f1 = "-", "-"
        else:
            em, f1 = str(record.score.em), f"{record.score.f1:.4f}"
        lines.append(
            f"{record.example_id:<{width}}  {em:>2}  {f1:>6}  "
            f"{record.actions_taken:>7}  {record.stop_reason}"
        )

    lines.append("")
    lines.append(f"Examples:  {report.n_scored} scored, {report.n_excluded} excluded")
    lines.append(f"Macro EM:  {100 * report.macro_em:.1f}")
    lines.append(f"Macro F1:  {100 * report.macro_f1:.1f}")
    if report.action_quartiles is not None:
        q1, median, q3 = report.action_quartiles
        lines.append(f"Actions:   median {median:g} (quartiles {q1:g}, {q3:g})")
    reasons = ", ".join(f"{k} {v}" for k, v in report.stop_reasons.items())
    lines.append(f"Stops:     {reasons}")
    if report.snapshot_date:
        lines.append(f"Gold snapshot: {report.snapshot_date}")
    return "\n".join(lines) + "\n"


@beartype.beartype
def write_report(report: Report, out_dpath: pathlib.Path) -> None:
    kbnav.cache.write_json_atomic(out_dpath / "report.json", report_to_json(report))
    (out_dpath / "report.txt").write_text(render_report(report), encoding="utf-8")


@beartype.beartype
def run_benchmark(
    dataset: tp.Sequence[kbnav.datasets.DatasetExample],
    settings: kbnav.config.Settings,
    *,
    out_dpath: pathlib.Path,
    mode: Mode = "replay",
    replay_dpath: pathlib.Path | None = None,
    parallelism: int = 4,
    score_mode: ScoreMode = "id",
    resume: bool = False,
    client: kbnav.agent.KnowledgeBase | None = None,
    provider: kbnav.llm.Provider | None = None,
) -> Report:
    """Run the agent on every example, score it and checkpoint as we go.

    Per-example failures are recorded, never raised. Pass client or provider
    to replace the live knowledge base or LLM (tests do).
    """
    if not dataset:
        raise ValueError("Dataset is empty")
    if parallelism < 1:
        raise ValueError(f"parallelism must be >= 1, got {parallelism}")
    if mode == "replay" and replay_dpath is None:
        raise kbnav.errors.ConfigError(
            message="Replay mode needs a replay directory",
            hint="Pass --replay DIR, or --live to call the model.",
        )

    if client is None:
        client_config = settings.client
        if mode == "replay":
            client_config = dataclasses.replace(client_config, offline=True)
        client = kbnav.wikidata.WikidataClient(client_config)
    if mode == "live" and provider is None:
        provider = kbnav.llm.make_provider(settings.llm)

    cache_dpath = settings.client.cache_dpath or kbnav.config.get_cache_dpath()
    gold_cache = GoldCache(cache_dpath / "gold")

    out_dpath.mkdir(parents=True, exist_ok=True)
    checkpoint = Checkpoint(out_dpath / CHECKPOINT_NAME)
    finished = checkpoint.load() if resume else {}
    if not resume:
        checkpoint.clear()
    wanted = {example.id for example in dataset}
    finished = {k: v for k, v in finished.items() if k in wanted}
    todo = [example for example in dataset if example.id not in finished]
    logger.info("%d examples to run, %d already finished", len(todo), len(finished))

    runner = _Runner(
        settings=settings,
        out_dpath=out_dpath,
        mode=mode,
        replay_dpath=replay_dpath,
        score_mode=score_mode,
        client=client,
        provider=provider,
        gold_cache=gold_cache,
    )
    with concurrent.futures.ThreadPoolExecutor(max_workers=parallelism) as pool:
        futures = {pool.submit(runner.run, example): example for example in todo}
        for future in concurrent.futures.as_completed(futures):
            record = future.result()
            finished[record.example_id] = record
            try:
                checkpoint.append(record)
            except kbnav.errors.KbnavError as err:
                logger.warning(
                    "Not checkpointed %s: %s", record.example_id, err.message
                )

    records = [finished[example.id] for example in dataset]
    return summarize(
        records, mode=mode, score_mode=score_mode, model=settings.llm.model
    )


class Checkpoint:
    """Append-only JSON Lines of finished records, shared by all workers."""

    def __init__(self, fpath: pathlib.Path) -> None:
        self._fpath = fpath
        self._lock_fpath = fpath.with_name(fpath.name + ".lock")
        self._lock = threading.Lock()

    @beartype.beartype
    def load(self) -> dict[str, RunRecord]:
        if not self._fpath.exists():
            return {}
        records = {}
        text = self._fpath.read_text(encoding="utf-8")
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                record = record_from_json(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as err:
                # A run killed mid-write leaves a partial last line.
                logger.warning("Skipping line %d of %s: %s", lineno, self._fpath, err)
                continue
            records[record.example_id] = record
        return records

    @beartype.beartype
    def clear(self) -> None:
        with self._lock, kbnav.cache.acquire_lock(self._lock_fpath):
            self._fpath.write_text("", encoding="utf-8")

    @beartype.beartype
    def append(self, record: RunRecord) -> None:
        line = json.dumps(record_to_json(record), ensure_ascii=False, sort_keys=True)
        with self._lock, kbnav.cache.acquire_lock(self._lock_fpath):
            with self._fpath.open("a", encoding="utf-8") as fd:
                fd.write(line + "\n")


class _Runner:
    """Runs and scores one example. Shared by all worker threads."""

    def __init__(
        self,
        *,
        settings: kbnav.config.Settings,
        out_dpath: pathlib.Path,
        mode: Mode,
        replay_dpath: pathlib.Path | None,
        score_mode: ScoreMode,
        client: kbnav.agent.KnowledgeBase,
        provider: kbnav.llm.Provider | None,
        gold_cache: GoldCache,
    ) -> None:
        self._settings = settings
        self._out_dpath = out_dpath
        self._mode = mode
        self._replay_dpath = replay_dpath
        self._score_mode = score_mode
        self._client = client
        self._provider = provider
        self._gold_cache = gold_cache

    @beartype.beartype
    def run(self, example: kbnav.datasets.DatasetExample) -> RunRecord:
        """Never raises for a KbnavError: the failure is recorded instead."""
        try:
            gold = materialize_gold(
                example,
                client=self._client,
                cache=self._gold_cache,
                mode=self._score_mode,
            )
            fetched_at = None
            if example.gold_results is None or self._score_mode == "label":
                fetched_at = self._gold_cache.fetched_at(example.gold_sparql)
        except kbnav.errors.KbnavError as err:
            logger.warning("Excluding %s: %s", example.id, err.message)
            return RunRecord(
                example_id=example.id,
                question=example.question,
                final_sparql=None,
                stop_reason="gold_error",
                actions_taken=0,
                llm_calls=0,
                resets=0,
                score=None,
                error=err.message,
            )

        started = time.monotonic()
        try:
            return self._attempt(example, gold, fetched_at, started)
        except kbnav.errors.KbnavError as err:
            logger.warning("Run failed for %s: %s", example.id, err.message)
            return self._failed(example, gold, fetched_at, err.message, started, 0)

    @beartype.beartype
    def _attempt(
        self,
        example: kbnav.datasets.DatasetExample,
        gold: kbnav.metrics.ResultTable,
        fetched_at: str | None,
        started: float,
    ) -> RunRecord:
        name = safe_name(example.id)
        gateway = self._gateway(name)
        tools = self._tools(name, example.question, gateway)
        try:
            outcome = kbnav.agent.run_agent(
                example.question, self._settings.agent, gateway=gateway, tools=tools
            )
        except Exception as err:
            if isinstance(err, kbnav.errors.KbnavError):
                message = err.message
                logger.warning("Run failed for %s: %s", example.id, message)
            else:
                message = f"Unexpected error: {err}"
                logger.exception("Run crashed for %s", example.id)
            return self._failed(
                example, gold, fetched_at, message, started, gateway.calls
            )

        trace_file = f"traces/{name}.json"
        kbnav.traces.write_trace(
            self._out_dpath / trace_file, outcome, self._settings.agent
        )

        pred = kbnav.metrics.ResultTable()
        if outcome.final_result is not None:
            pred = to_table(outcome.final_result, self._score_mode, self._client)
        score = kbnav.metrics.row_major_scores(gold, pred)
        logger.info(
            "%s: f1 %.3f after %d actions (%s)",
            example.id,
            score.f1,
            outcome.actions_taken,
            outcome.stop_reason,
        )
        return RunRecord(
            example_id=example.id,
            question=example.question,
            final_sparql=outcome.final_sparql,
            stop_reason=outcome.stop_reason,
            actions_taken=outcome.actions_taken,
            llm_calls=outcome.llm_calls,
            resets=len(outcome.resets),
            score=score,
            gold_digest=kbnav.metrics.table_digest(gold),
            pred_digest=kbnav.metrics.table_digest(pred),
            gold_fetched_at=fetched_at,
            trace_file=trace_file,
            duration_s=self._duration(started),
        )

    @beartype.beartype
    def _failed(
        self,
        example: kbnav.datasets.DatasetExample,
        gold: kbnav.metrics.ResultTable,
        fetched_at: str | None,
        message: str,
        started: float,
        llm_calls: int,
    ) -> RunRecord:
        """A failed run scores as an empty prediction."""
        return RunRecord(
            example_id=example.id,
            question=example.question,
            final_sparql=None,
            stop_reason="error",
            actions_taken=0,
            llm_calls=llm_calls,
            resets=0,
            score=kbnav.metrics.row_major_scores(gold, kbnav.metrics.ResultTable()),
            gold_digest=kbnav.metrics.table_digest(gold),
            gold_fetched_at=fetched_at,
            error=message,
            duration_s=self._duration(started),
        )

    @beartype.beartype
    def _gateway(self, name: str) -> kbnav.llm.Gateway:
        llm = self._settings.llm
        if self._mode == "live":
            assert self._provider is not None
            transcript_fpath = self._out_dpath / "transcripts" / f"{name}.jsonl"
            # A fresh run of this example replaces its old transcript.
            transcript_fpath.unlink(missing_ok=True)
            return kbnav.llm.Gateway(
                self._provider,
                model=llm.model,
                max_calls=llm.max_calls,
                max_retries=llm.max_retries,
                transcript_fpath=transcript_fpath,
            )

        assert self._replay_dpath is not None
        provider = self._provider
        if provider is None:
            fpath = self._replay_dpath / "transcripts" / f"{name}.jsonl"
            provider = kbnav.llm.ReplayProvider.from_file(fpath)
        return kbnav.llm.Gateway(
            provider, model=llm.model, max_calls=llm.max_calls, max_retries=0
        )

    @beartype.beartype
    def _tools(
        self, name: str, question: str, gateway: kbnav.llm.Gateway
    ) -> kbnav.agent.Tools:
        if self._mode == "replay":
            assert self._replay_dpath is not None
            trace_fpath = self._replay_dpath / "traces" / f"{name}.json"
            if trace_fpath.exists():
                doc = kbnav.traces.load_trace(trace_fpath)
                return kbnav.traces.RecordedTools(doc.history)
        return kbnav.agent.KbTools(
            self._client,
            gateway=gateway,
            question=question,
            config=self._settings.agent,
        )

    @beartype.beartype
    def _duration(self, started: float) -> float | None:
        if self._mode == "replay":
            return None
        return round(time.monotonic() - started, 3)


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class PredictionScore:
    """Score of one stored prediction against gold."""

    example_id: str
    gold_digest: str | None
    pred_digest: str | None
    score: kbnav.metrics.EvalOutcome


@beartype.beartype
def evaluate_predictions(
    dataset: tp.Sequence[kbnav.datasets.DatasetExample],
    predictions: dict[str, str],
    *,
    client: kbnav.agent.KnowledgeBase,
    gold_cache: GoldCache,
    score_mode: ScoreMode = "id",
) -> list[PredictionScore]:
    """Execute each predicted query and score it. Gold failures raise.

    Examples without a prediction score as empty results.
    """
    scores = []
    for example in dataset:
        gold = materialize_gold(
            example, client=client, cache=gold_cache, mode=score_mode
        )
        pred = kbnav.metrics.ResultTable()
        query = predictions.get(example.id, "").strip()
        if query:
            pred = to_table(client.run_sparql(query), score_mode, client)
        scores.append(
            PredictionScore(
                example_id=example.id,
                gold_digest=kbnav.metrics.table_digest(gold),
                pred_digest=kbnav.metrics.table_digest(pred),
                score=kbnav.metrics.row_major_scores(gold, pred),
            )
        )
    return scores


@beartype.beartype
def safe_name(example_id: str) -> str:
    """A file name for an example id, distinct for distinct ids."""
    stem = re.sub(r"[^A-Za-z0-9._-]", "_", example_id)
    return f"{stem}-{kbnav.cache.digest(example_id)[:8]}"


@beartype.beartype
def _now() -> str:
    return datetime.datetime.now(datetime.UTC).strftime("%Y-%m-%dT%H:%M:%SZ")
