"""Tests for benchmark runs, replays and reports."""

import json
import pathlib
import threading

import pytest

import kbnav.bench
import kbnav.cache
import kbnav.config
import kbnav.datasets
import kbnav.errors
import kbnav.llm
import kbnav.metrics
import kbnav.prompts
import kbnav.wikidata

ENTITY = "http://www.wikidata.org/entity/"

ADVISOR = "SELECT ?x WHERE { wd:Q7604 wdt:P184 ?x }"
ADVISOR_OR_STUDENT = (
    "SELECT ?x WHERE { { wd:Q7604 wdt:P184 ?x } UNION { wd:Q7604 wdt:P185 ?x } }"
)
TIMES_OUT = "SELECT ?x WHERE { ?x ?p ?o }"

ROWS = {
    ADVISOR: ("Q85992",),
    ADVISOR_OR_STUDENT: ("Q85992", "Q57164"),
}


def say(action: str) -> str:
    return f"Thought: next\nAction: {action}"


SCRIPTS = {
    "Who was Euler's doctoral advisor?": [
        say(f"execute_sparql({ADVISOR})"),
        say("stop()"),
    ],
    "Name an advisor or a student of Euler.": [
        say(f"execute_sparql({ADVISOR})"),
        say("stop()"),
    ],
    "Who were Euler's children?": [
        say(f"search_wikidata(child {i})") for i in range(3)
    ],
}


class BenchKb:
    """Answers the handful of queries these tests use."""

    def __init__(self) -> None:
        self.calls: list[str] = []
        self._lock = threading.Lock()

    def _log(self, call: str) -> None:
        with self._lock:
            self.calls.append(call)

    def search_items(self, query: str) -> kbnav.wikidata.SearchResult:
        self._log(f"search:{query}")
        return kbnav.wikidata.SearchResult(query=query, entities=(), properties=())

    def fetch_entity_entry(
        self, entity_id: kbnav.wikidata.EntityId
    ) -> kbnav.wikidata.EntityEntry:
        self._log(f"entry:{entity_id}")
        return kbnav.wikidata.EntityEntry(
            subject=entity_id, label="", description="", claims=()
        )

    def fetch_property_examples(
        self, property_id: kbnav.wikidata.PropertyId
    ) -> kbnav.wikidata.PropertyExamples:
        self._log(f"examples:{property_id}")
        return kbnav.wikidata.PropertyExamples(property=property_id, label="", pairs=())

    def run_sparql(self, query: str) -> kbnav.wikidata.SparqlResponse:
        self._log(f"sparql:{query}")
        if query == TIMES_OUT:
            return kbnav.wikidata.SparqlError(kind="timeout", message="too slow")
        rows = tuple(
            (kbnav.wikidata.Binding(kind="uri", value=f"{ENTITY}{qid}"),)
            for qid in ROWS.get(query, ())
        )
        return kbnav.wikidata.SparqlTable(columns=("x",), rows=rows)

    def fetch_labels(self, ids: list[str]) -> dict[str, str]:
        return {"Q85992": "Johann Bernoulli"}


class ScriptedProvider:
    """Answers policy calls from a per-question script."""

    def __init__(self, scripts: dict[str, list[str]] | None = None) -> None:
        self.scripts = {q: list(outputs) for q, outputs in (scripts or {}).items()}
        self.calls = 0
        self._lock = threading.Lock()

    def complete(
        self,
        *,
        messages: list[kbnav.prompts.Message],
        request: kbnav.llm.LlmRequest,
        digest: str,
    ) -> str:
        with self._lock:
            self.calls += 1
            return self.scripts[request.variables["question"]].pop(0)


def example(
    example_id: str, question: str, gold_sparql: str
) -> kbnav.datasets.DatasetExample:
    return kbnav.datasets.DatasetExample(
        id=example_id, question=question, gold_sparql=gold_sparql, source="custom"
    )


DATASET = [
    example("advisor", "Who was Euler's doctoral advisor?", ADVISOR),
    example("either", "Name an advisor or a student of Euler.", ADVISOR_OR_STUDENT),
    example("children", "Who were Euler's children?", ADVISOR),
]


def make_settings(tmp_path: pathlib.Path) -> kbnav.config.Settings:
    return kbnav.config.Settings(
        client=kbnav.config.ClientConfig(cache_dpath=tmp_path / "cache"),
        llm=kbnav.config.LlmConfig(model="scripted"),
        agent=kbnav.config.AgentConfig(max_steps=3, prune_entries=False),
    )


def run_live(
    tmp_path: pathlib.Path,
    dataset: list[kbnav.datasets.DatasetExample] = DATASET,
    **kwargs: object,
) -> kbnav.bench.Report:
    return kbnav.bench.run_benchmark(
        dataset,
        make_settings(tmp_path),
        out_dpath=tmp_path / "live",
        mode="live",
        client=BenchKb(),
        provider=ScriptedProvider(SCRIPTS),
        **kwargs,
    )


def run_replay(
    tmp_path: pathlib.Path, name: str, kb: BenchKb | None = None
) -> kbnav.bench.Report:
    return kbnav.bench.run_benchmark(
        DATASET,
        make_settings(tmp_path),
        out_dpath=tmp_path / name,
        mode="replay",
        replay_dpath=tmp_path / "live",
        client=kb or BenchKb(),
    )


def by_id(report: kbnav.bench.Report) -> dict[str, kbnav.bench.RunRecord]:
    return {record.example_id: record for record in report.records}


def test_live_run_scores_every_example(tmp_path: pathlib.Path) -> None:
    """Perfect, partial and empty answers average into macro scores."""
    report = run_live(tmp_path)
    records = by_id(report)

    assert [r.example_id for r in report.records] == ["advisor", "either", "children"]
    assert records["advisor"].score is not None
    assert records["advisor"].score.f1 == 1.0
    assert records["advisor"].score.em == 1
    assert records["either"].score is not None
    assert records["either"].score.f1 == pytest.approx(2 / 3)
    assert records["either"].score.em == 0
    assert records["children"].score is not None
    assert records["children"].score.f1 == 0.0
    assert records["children"].stop_reason == "budget_exhausted"
    assert records["children"].final_sparql is None

    assert report.macro_f1 == pytest.approx((1 + 2 / 3 + 0) / 3)
    assert report.macro_em == pytest.approx(1 / 3)
    assert report.n_scored == 3
    assert report.n_excluded == 0
    assert report.action_quartiles == (2.0, 2.0, 2.5)
    assert report.stop_reasons == {"budget_exhausted": 1, "stopped": 2}
    assert report.snapshot_date is not None
    assert report.mode == "live"
    assert report.model == "scripted"


def test_live_run_writes_artifacts(tmp_path: pathlib.Path) -> None:
    """Traces, transcripts and the checkpoint land in the output directory."""
    run_live(tmp_path)
    out = tmp_path / "live"

    for example_id in ("advisor", "either", "children"):
        name = kbnav.bench.safe_name(example_id)
        assert (out / "traces" / f"{name}.json").exists()
        assert (out / "transcripts" / f"{name}.jsonl").exists()
    lines = (out / kbnav.bench.CHECKPOINT_NAME).read_text().splitlines()
    assert len(lines) == 3
    assert all(json.loads(line)["duration_s"] >= 0 for line in lines)


def test_unreadable_gold_cache_is_excluded(tmp_path: pathlib.Path) -> None:
    """A corrupt gold cache entry excludes that example and the run goes on."""
    run_live(tmp_path)
    key = kbnav.cache.digest("gold", ADVISOR_OR_STUDENT.strip())
    fpath = tmp_path / "cache" / "gold" / key[:2] / f"{key}.json"
    assert fpath.exists()
    fpath.write_text("{not json")

    report = run_live(tmp_path)
    records = by_id(report)
    assert records["either"].stop_reason == "gold_error"
    assert records["either"].score is None
    assert records["either"].error is not None
    assert "Invalid JSON" in records["either"].error
    assert records["advisor"].score is not None
    assert records["advisor"].score.f1 == 1.0
    assert report.n_excluded == 1
    assert report.n_scored == 2


def test_unreadable_replay_trace_is_an_error(tmp_path: pathlib.Path) -> None:
    """A corrupt recorded trace fails only its own example."""
    run_live(tmp_path)
    name = kbnav.bench.safe_name("advisor")
    (tmp_path / "live" / "traces" / f"{name}.json").write_text("{not json")

    report = run_replay(tmp_path, "replay")
    records = by_id(report)
    assert records["advisor"].stop_reason == "error"
    assert records["advisor"].score is not None
    assert records["advisor"].score.f1 == 0.0
    assert records["either"].stop_reason == "stopped"
    assert len(report.records) == 3


def test_gold_failures_are_excluded(tmp_path: pathlib.Path) -> None:
    """An example whose gold query fails is reported but not scored."""
    dataset = [*DATASET, example("broken", "Anything?", TIMES_OUT)]
    report = run_live(tmp_path, dataset)
    broken = by_id(report)["broken"]

    assert broken.excluded
    assert broken.stop_reason == "gold_error"
    assert broken.llm_calls == 0
    assert broken.error is not None
    assert "timeout" in broken.error
    assert report.n_scored == 3
    assert report.n_excluded == 1
    assert report.macro_f1 == pytest.approx(5 / 9)


def test_empty_dataset(tmp_path: pathlib.Path) -> None:
    """There is nothing to benchmark on an empty dataset."""
    with pytest.raises(ValueError, match="empty"):
        run_live(tmp_path, [])


def test_replay_needs_a_directory(tmp_path: pathlib.Path) -> None:
    """Replay mode without recordings is a configuration error."""
    with pytest.raises(kbnav.errors.ConfigError):
        kbnav.bench.run_benchmark(
            DATASET, make_settings(tmp_path), out_dpath=tmp_path / "out"
        )


def test_replay_reproduces_live_run(tmp_path: pathlib.Path) -> None:
    """A replay gives the live answers without touching the knowledge base."""
    live = run_live(tmp_path)
    kb = BenchKb()
    replay = run_replay(tmp_path, "replay", kb)

    assert kb.calls == []
    assert replay.mode == "replay"
    assert replay.macro_f1 == live.macro_f1
    for live_record, replay_record in zip(live.records, replay.records, strict=True):
        assert replay_record.final_sparql == live_record.final_sparql
        assert replay_record.score == live_record.score
        assert replay_record.actions_taken == live_record.actions_taken
        assert replay_record.pred_digest == live_record.pred_digest
        assert replay_record.duration_s is None


@pytest.mark.timeout(120)
def test_replay_reports_are_identical(tmp_path: pathlib.Path) -> None:
    """Five replays write byte-identical reports."""
    run_live(tmp_path)

    reports = []
    for i in range(5):
        report = run_replay(tmp_path, f"replay-{i}")
        out = tmp_path / f"replay-{i}"
        kbnav.bench.write_report(report, out)
        reports.append(((out / "report.json").read_bytes(), (out / "report.txt")))
    assert len({data for data, _ in reports}) == 1
    assert len({fpath.read_bytes() for _, fpath in reports}) == 1


def test_resume_skips_finished_examples(tmp_path: pathlib.Path) -> None:
    """A resumed run reuses checkpointed records and calls nothing."""
    first = run_live(tmp_path)
    checkpoint = tmp_path / "live" / kbnav.bench.CHECKPOINT_NAME
    with checkpoint.open("a") as fd:
        fd.write('{"example_id": "partial')

    provider = ScriptedProvider()
    resumed = kbnav.bench.run_benchmark(
        DATASET,
        make_settings(tmp_path),
        out_dpath=tmp_path / "live",
        mode="live",
        client=BenchKb(),
        provider=provider,
        resume=True,
    )
    assert provider.calls == 0
    assert resumed == first


def test_interrupted_replay_resumes_to_same_report(tmp_path: pathlib.Path) -> None:
    """A replay cut short and resumed reports exactly what an unbroken one does."""
    run_live(tmp_path)
    unbroken = run_replay(tmp_path, "unbroken")

    run_replay(tmp_path, "broken")
    checkpoint = tmp_path / "broken" / kbnav.bench.CHECKPOINT_NAME
    first_line = checkpoint.read_text().splitlines()[0]
    checkpoint.write_text(first_line + "\n")

    resumed = kbnav.bench.run_benchmark(
        DATASET,
        make_settings(tmp_path),
        out_dpath=tmp_path / "broken",
        mode="replay",
        replay_dpath=tmp_path / "live",
        client=BenchKb(),
        resume=True,
    )
    assert resumed == unbroken
    assert kbnav.bench.report_to_json(resumed) == kbnav.bench.report_to_json(unbroken)


def test_fresh_run_clears_checkpoint(tmp_path: pathlib.Path) -> None:
    """Without resume, earlier records are discarded."""
    run_live(tmp_path)
    run_live(tmp_path)
    lines = (tmp_path / "live" / kbnav.bench.CHECKPOINT_NAME).read_text().splitlines()
    assert len(lines) == 3


def test_gold_cache_runs_each_query_once(tmp_path: pathlib.Path) -> None:
    """Gold results are fetched once and shared across cache instances."""
    kb = BenchKb()
    first, fetched_at = kbnav.bench.GoldCache(tmp_path).fetch(ADVISOR, kb)
    second, again_at = kbnav.bench.GoldCache(tmp_path).fetch(f"  {ADVISOR}\n", kb)

    assert kb.calls == [f"sparql:{ADVISOR}"]
    assert first == second
    assert fetched_at == again_at
    assert kbnav.bench.GoldCache(tmp_path).fetched_at(ADVISOR) == fetched_at


def test_gold_cache_does_not_keep_failures(tmp_path: pathlib.Path) -> None:
    """Failed gold queries run again next time."""
    kb = BenchKb()
    cache = kbnav.bench.GoldCache(tmp_path)
    cache.fetch(TIMES_OUT, kb)
    cache.fetch(TIMES_OUT, kb)

    assert len(kb.calls) == 2
    assert cache.fetched_at(TIMES_OUT) is None


def test_materialize_gold_prefers_shipped_results(tmp_path: pathlib.Path) -> None:
    """Shipped results are used in id mode; label mode goes to the endpoint."""
    shipped = kbnav.metrics.ResultTable(
        columns=("x",), rows=((kbnav.metrics.Entity("Q1"),),)
    )
    item = kbnav.datasets.DatasetExample(
        id="a", question="q", gold_sparql=ADVISOR, source="custom", gold_results=shipped
    )
    kb = BenchKb()
    cache = kbnav.bench.GoldCache(None)

    assert kbnav.bench.materialize_gold(item, client=kb, cache=cache) == shipped
    assert kb.calls == []

    labelled = kbnav.bench.materialize_gold(item, client=kb, cache=cache, mode="label")
    assert labelled.rows == ((kbnav.metrics.Literal("johann bernoulli"),),)


def test_materialize_gold_rejects_empty_results(tmp_path: pathlib.Path) -> None:
    """A gold query with no rows cannot be scored against."""
    item = example("nothing", "q", "SELECT ?x WHERE { wd:Q7604 wdt:P40 ?x }")
    with pytest.raises(kbnav.errors.GoldExecutionError) as exc_info:
        kbnav.bench.materialize_gold(
            item, client=BenchKb(), cache=kbnav.bench.GoldCache(None)
        )
    assert exc_info.value.kind == "empty"
    assert exc_info.value.example_id == "nothing"


def test_evaluate_predictions(tmp_path: pathlib.Path) -> None:
    """Stored predictions are executed and scored; missing ones score as empty."""
    scores = kbnav.bench.evaluate_predictions(
        DATASET,
        {"advisor": ADVISOR, "either": f"\n{ADVISOR}\n"},
        client=BenchKb(),
        gold_cache=kbnav.bench.GoldCache(tmp_path),
    )

    assert [s.example_id for s in scores] == ["advisor", "either", "children"]
    assert [s.score.f1 for s in scores] == pytest.approx([1.0, 2 / 3, 0.0])
    assert scores[0].gold_digest == scores[0].pred_digest


def test_evaluate_predictions_raises_on_gold_failure(tmp_path: pathlib.Path) -> None:
    """Stored predictions cannot be scored against a failed gold query."""
    with pytest.raises(kbnav.errors.GoldExecutionError):
        kbnav.bench.evaluate_predictions(
            [example("broken", "q", TIMES_OUT)],
            {},
            client=BenchKb(),
            gold_cache=kbnav.bench.GoldCache(tmp_path),
        )


def test_render_report(tmp_path: pathlib.Path) -> None:
    """The text report lists every example and the macro scores."""
    text = kbnav.bench.render_report(run_live(tmp_path))

    assert text.splitlines()[0].split() == ["id", "em", "f1", "actions", "stop"]
    assert "either     0  0.6667        2  stopped" in text
    assert "Macro EM:  33.3" in text
    assert "Macro F1:  55.6" in text
    assert "Actions:   median 2 (quartiles 2, 2.5)" in text


def test_safe_name() -> None:
    """Ids become distinct file names."""
    name = kbnav.bench.safe_name("qald/12 b")
    assert name.startswith("qald_12_b-")
    assert "/" not in name
    assert kbnav.bench.safe_name("spinach-dev-3.1").startswith("spinach-dev-3.1-")
    assert kbnav.bench.safe_name("a/b") != kbnav.bench.safe_name("a_b")
    assert kbnav.bench.safe_name("a/b") == kbnav.bench.safe_name("a/b")


def test_colliding_ids_keep_separate_traces(tmp_path: pathlib.Path) -> None:
    """Ids that sanitize to the same text still get their own trace files."""
    question = "Who was Euler's doctoral advisor?"
    dataset = [example("q/1", question, ADVISOR), example("q_1", question, ADVISOR)]
    scripts = {question: SCRIPTS[question] * 2}
    kbnav.bench.run_benchmark(
        dataset,
        make_settings(tmp_path),
        out_dpath=tmp_path / "live",
        mode="live",
        client=BenchKb(),
        provider=ScriptedProvider(scripts),
        parallelism=1,
    )
    assert len(list((tmp_path / "live" / "traces").glob("*.json"))) == 2
