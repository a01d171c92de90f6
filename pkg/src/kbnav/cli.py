"""CLI definition using tyro."""

import dataclasses
import json
import logging
import math
import pathlib
import sys

import beartype
import tyro

import kbnav.agent
import kbnav.bench
import kbnav.config
import kbnav.datasets
import kbnav.errors
import kbnav.llm
import kbnav.prompts
import kbnav.render
import kbnav.sparqlstats
import kbnav.traces
import kbnav.wikidata


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class Ask:
    """Answer one question live and print the trace, final SPARQL and results."""

    question: tyro.conf.Positional[str]
    """The natural-language question."""

    trace: pathlib.Path | None = None
    """Also write the trace as JSON here."""

    config: pathlib.Path | None = None
    """Config file (default: ~/.config/kbnav/config.py)."""

    verbose: bool = False
    """Log each action and every HTTP retry."""


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class Evaluate:
    """Score stored predictions against a dataset's gold queries."""

    dataset: pathlib.Path
    """Dataset file."""

    predictions: pathlib.Path
    """JSON or JSON Lines of {id, sparql} records."""

    source: kbnav.datasets.Source = "custom"
    """Dataset file format."""

    mode: kbnav.bench.ScoreMode = "id"
    """Compare entities by id, or by English label."""

    config: pathlib.Path | None = None
    """Config file (default: ~/.config/kbnav/config.py)."""

    verbose: bool = False
    """Show detailed output."""


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class Stats:
    """Structural statistics of a dataset's gold queries."""

    dataset: pathlib.Path
    """Dataset file."""

    source: kbnav.datasets.Source = "custom"
    """Dataset file format."""

    verbose: bool = False
    """List queries that could not be analyzed."""


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class RunBenchmark:
    """Run the agent over a dataset and write a report."""

    dataset: pathlib.Path
    """Dataset file."""

    out: pathlib.Path
    """Output directory for traces, checkpoint and report."""

    replay: pathlib.Path | None = None
    """Replay transcripts and traces from this directory (a previous run's --out)."""

    live: bool = False
    """Call the LLM and the knowledge base instead of replaying."""

    source: kbnav.datasets.Source = "custom"
    """Dataset file format."""

    mode: kbnav.bench.ScoreMode = "id"
    """Compare entities by id, or by English label."""

    parallelism: int = 4
    """Examples run at once."""

    resume: bool = False
    """Skip examples already in the output directory's checkpoint."""

    config: pathlib.Path | None = None
    """Config file (default: ~/.config/kbnav/config.py)."""

    verbose: bool = False
    """Show detailed output."""


@beartype.beartype
def run_ask(cmd: Ask) -> None:
    """Run the ask command."""
    settings = _load_settings(cmd.config)
    client = kbnav.wikidata.WikidataClient(settings.client)
    gateway = kbnav.llm.Gateway(
        kbnav.llm.make_provider(settings.llm),
        model=settings.llm.model,
        max_calls=settings.llm.max_calls,
        max_retries=settings.llm.max_retries,
    )
    tools = kbnav.agent.KbTools(
        client, gateway=gateway, question=cmd.question, config=settings.agent
    )
    outcome = kbnav.agent.run_agent(
        cmd.question, settings.agent, gateway=gateway, tools=tools
    )

    for step in outcome.trace.steps:
        print(kbnav.prompts.render_step(step))
        print("")

    print(f"Stopped: {outcome.stop_reason} after {outcome.actions_taken} actions")
    if outcome.final_sparql is None or outcome.final_result is None:
        print("No answer found.")
    else:
        print("")
        print(outcome.final_sparql)
        print("")
        print(kbnav.render.render_observation(outcome.final_result))

    if cmd.trace is not None:
        kbnav.traces.write_trace(cmd.trace, outcome, settings.agent)


@beartype.beartype
def run_evaluate(cmd: Evaluate) -> None:
    """Run the evaluate command."""
    settings = _load_settings(cmd.config)
    dataset = kbnav.datasets.load_dataset(cmd.dataset, cmd.source)
    predictions = kbnav.datasets.load_predictions(cmd.predictions)
    unknown = sorted(set(predictions) - {example.id for example in dataset})
    if unknown:
        print(
            f"Warning: {len(unknown)} prediction(s) match no example", file=sys.stderr
        )

    client = kbnav.wikidata.WikidataClient(settings.client)
    assert settings.client.cache_dpath is not None
    scores = kbnav.bench.evaluate_predictions(
        dataset,
        predictions,
        client=client,
        gold_cache=kbnav.bench.GoldCache(settings.client.cache_dpath / "gold"),
        score_mode=cmd.mode,
    )

    for score in scores:
        record = {
            "id": score.example_id,
            "gold_digest": score.gold_digest,
            "pred_digest": score.pred_digest,
            **score.score.to_json(),
        }
        print(json.dumps(record, sort_keys=True))

    n = len(scores)
    if n == 0:
        print("No examples to score.")
        return
    macro_em = math.fsum(s.score.em for s in scores) / n
    macro_f1 = math.fsum(s.score.f1 for s in scores) / n
    print(f"Macro EM: {100 * macro_em:.1f}  Macro F1: {100 * macro_f1:.1f}  (n={n})")


@beartype.beartype
def run_stats(cmd: Stats) -> None:
    """Run the stats command."""
    dataset = kbnav.datasets.load_dataset(cmd.dataset, cmd.source)
    if not dataset:
        raise kbnav.errors.SchemaError.make(
            "Dataset has no examples", cmd.dataset, None
        )
    if cmd.verbose:
        for example in dataset:
            try:
                kbnav.sparqlstats.analyze_query(example.gold_sparql)
            except kbnav.errors.UnsupportedSyntaxError as err:
                print(f"{example.id}: skipped ({err.message})")

    stats = kbnav.sparqlstats.aggregate_stats([e.gold_sparql for e in dataset])
    width = max(len(name) for name in kbnav.sparqlstats.METRICS)
    for name in kbnav.sparqlstats.METRICS:
        print(f"{name:<{width}}  {stats.means[name]:.2f}")
    print(f"Analyzed {stats.n_analyzed} queries, excluded {stats.n_excluded}.")
    summary = {
        "means": stats.means,
        "n_analyzed": stats.n_analyzed,
        "n_excluded": stats.n_excluded,
    }
    print(json.dumps(summary, sort_keys=True))


@beartype.beartype
def run_benchmark(cmd: RunBenchmark) -> None:
    """Run the run-benchmark command."""
    if cmd.live == (cmd.replay is not None):
        raise kbnav.errors.ConfigError(
            message="Pass exactly one of --live or --replay DIR",
            hint="Replay a previous run with --replay <its --out directory>.",
        )

    settings = _load_settings(cmd.config)
    dataset = kbnav.datasets.load_dataset(cmd.dataset, cmd.source)
    if not dataset:
        raise kbnav.errors.SchemaError.make(
            "Dataset has no examples", cmd.dataset, None
        )

    report = kbnav.bench.run_benchmark(
        dataset,
        settings,
        out_dpath=cmd.out,
        mode="live" if cmd.live else "replay",
        replay_dpath=cmd.replay,
        parallelism=cmd.parallelism,
        score_mode=cmd.mode,
        resume=cmd.resume,
    )
    kbnav.bench.write_report(report, cmd.out)
    print(kbnav.bench.render_report(report), end="")


@beartype.beartype
def main() -> None:
    """Main entry point."""
    command = tyro.cli(Ask | Evaluate | Stats | RunBenchmark)  # type: ignore[arg-type]
    _setup_logging(command.verbose)

    try:
        match command:
            case Ask() as cmd:
                run_ask(cmd)
            case Evaluate() as cmd:
                run_evaluate(cmd)
            case Stats() as cmd:
                run_stats(cmd)
            case RunBenchmark() as cmd:
                run_benchmark(cmd)
    except (
        kbnav.errors.ConfigError,
        kbnav.errors.LockError,
        kbnav.errors.CacheError,
        kbnav.errors.SchemaError,
        kbnav.errors.GoldExecutionError,
        kbnav.errors.EmptyQueryError,
        kbnav.errors.NetworkError,
        kbnav.errors.ProviderError,
        kbnav.errors.PolicyFailureError,
    ) as err:
        print(f"Error: {err}", file=sys.stderr)
        sys.exit(1)


@beartype.beartype
def _load_settings(config_fpath: pathlib.Path | None) -> kbnav.config.Settings:
    """Load settings, giving the CLI a persistent cache directory."""
    settings = kbnav.config.load_settings(config_fpath)
    if settings.client.cache_dpath is not None:
        return settings
    client = dataclasses.replace(
        settings.client, cache_dpath=kbnav.config.get_cache_dpath()
    )
    return dataclasses.replace(settings, client=client)


@beartype.beartype
def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )

