"""LLM gateway: provider-neutral chat completion with budgets, retries and transcripts.

Every call is identified by a digest of the rendered messages and sampling
settings. Transcripts (one JSON record per call) can be replayed later with
ReplayProvider, which serves the n-th recorded response for the n-th
identical request.
"""

import collections
import collections.abc
import dataclasses
import datetime
import json
import logging
import os
import pathlib
import threading
import time
import typing as tp

import beartype
import openai

import kbnav.cache
import kbnav.config
import kbnav.errors
import kbnav.prompts

logger = logging.getLogger(__name__)


@beartype.beartype
@dataclasses.dataclass(frozen=True)
class LlmRequest:
    """A template plus slot values and sampling settings."""

    template_id: kbnav.prompts.TemplateId
    variables: dict[str, str]
    temperature: float
    top_p: float
    """Nucleus sampling mass."""
    max_output_tokens: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must be in [0, 2], got {self.temperature}")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError(f"top_p must be in (0, 1], got {self.top_p}")
        if self.max_output_tokens < 1:
            raise ValueError(
                f"max_output_tokens must be >= 1, got {self.max_output_tokens}"
            )

    @staticmethod
    def policy(
        variables: dict[str, str],
        *,
        temperature: float = 1.0,
        top_p: float = 0.9,
        max_output_tokens: int = 2048,
    ) -> "LlmRequest":
        return LlmRequest(
            template_id="policy",
            variables=variables,
            temperature=temperature,
            top_p=top_p,
            max_output_tokens=max_output_tokens,
        )

    @staticmethod
    def prune(
        variables: dict[str, str], *, max_output_tokens: int = 4096
    ) -> "LlmRequest":
        """Pruning is greedy."""
        return LlmRequest(
            template_id="prune",
            variables=variables,
            temperature=0.0,
            top_p=1.0,
            max_output_tokens=max_output_tokens,
        )

    def sampling(self) -> dict[str, float | int]:
        return {
            "temperature": self.temperature,
            "top_p": self.top_p,
            "max_output_tokens": self.max_output_tokens,
        }


class TransientProviderError(Exception):
    """A provider failure worth retrying (rate limit, timeout, 5xx)."""


@tp.runtime_checkable
class Provider(tp.Protocol):
    """Something that turns chat messages into text."""

    def complete(
        self,
        *,
        messages: list[kbnav.prompts.Message],
        request: LlmRequest,
        digest: str,
    ) -> str: ...


class OpenAIProvider:
    """Chat completions from OpenAI or any OpenAI-compatible server."""

    def __init__(
        self,
        model: str,
        *,
        api_key: str,
        endpoint: str | None = None,
        timeout: float = 120.0,
    ) -> None:
        self._model = model
        # Retries are handled by the Gateway.
        self._client = openai.OpenAI(
            api_key=api_key, base_url=endpoint, timeout=timeout, max_retries=0
        )

    def complete(
        self,
        *,
        messages: list[kbnav.prompts.Message],
        request: LlmRequest,
        digest: str,
    ) -> str:
        try:
            response = self._client.chat.completions.create(
                model=self._model,
                messages=[{"role": m.role, "content": m.content} for m in messages],
                temperature=request.temperature,
                top_p=request.top_p,
                max_tokens=request.max_output_tokens,
            )
        except (
            openai.APIConnectionError,
            openai.APITimeoutError,
            openai.RateLimitError,
            openai.InternalServerError,
        ) as err:
            raise TransientProviderError(str(err)) from None
        except openai.OpenAIError as err:
            raise kbnav.errors.ProviderError(
                message=f"{self._model} request failed: {err}",
                hint="Check llm_model, llm_endpoint and your API key.",
            ) from None

        if not response.choices:
            raise TransientProviderError("response has no choices")
        return response.choices[0].message.content or ""


class ReplayProvider:
    """Serves recorded responses keyed by request digest. Never touches the network."""

    def __init__(self, records: collections.abc.Iterable[dict[str, tp.Any]]) -> None:
        self._responses: dict[str, collections.deque[str]] = {}
        for record in records:
            self._responses.setdefault(record["digest"], collections.deque()).append(
                record["response"]
            )
        self._lock = threading.Lock()

    @staticmethod
    def from_file(transcript_fpath: pathlib.Path) -> "ReplayProvider":
        return ReplayProvider(read_transcript(transcript_fpath))

    def complete(
        self,
        *,
        messages: list[kbnav.prompts.Message],
        request: LlmRequest,
        digest: str,
    ) -> str:
        with self._lock:
            queue = self._responses.get(digest)
            if not queue:
                raise kbnav.errors.ProviderError(
                    message=(
                        f"No recorded {request.template_id} response "
                        f"for request {digest[:12]}"
                    ),
                    hint="The transcript does not match this run; record it live.",
                )
            return queue.popleft()


@beartype.beartype
def read_transcript(fpath: pathlib.Path) -> list[dict[str, tp.Any]]:
    """Read a JSON Lines transcript."""
    if not fpath.exists():
        raise kbnav.errors.ProviderError(
            message=f"Transcript not found: {fpath}",
            hint="Run the benchmark live once to record transcripts.",
        )
    records = []
    lines = fpath.read_text(encoding="utf-8").splitlines()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as err:
            raise kbnav.errors.CacheError.make(
                f"Invalid JSON on line {lineno} of {fpath}: {err}", fpath
            ) from None
    return records


_PROVIDERS = {"openai": OpenAIProvider}


@beartype.beartype
def make_provider(config: kbnav.config.LlmConfig) -> Provider:
    """Build a live provider from config, reading the API key from the environment."""
    cls = _PROVIDERS.get(config.provider)
    if cls is None:
        raise kbnav.errors.ConfigError(
            message=f"Unsupported LLM provider '{config.provider}'",
            hint=f"Supported providers: {', '.join(sorted(_PROVIDERS))}.",
        )
    api_key = os.environ.get(config.api_key_env)
    if not api_key:
        raise kbnav.errors.ConfigError(
            message=f"Missing API key: {config.api_key_env} is not set",
            hint=(
                f"export {config.api_key_env}=... "
                "or set llm_api_key_env in your config file."
            ),
        )
    return cls(config.model, api_key=api_key, endpoint=config.endpoint)


@beartype.beartype
def request_digest(request: LlmRequest, messages: list[kbnav.prompts.Message]) -> str:
    """Identity of a call: template, rendered messages and sampling settings."""
    return kbnav.cache.digest(
        request.template_id,
        [[m.role, m.content] for m in messages],
        request.sampling(),
    )


class Gateway:
    """The only place the package talks to a language model. Thread-safe."""

    def __init__(
        self,
        provider: Provider,
        *,
        model: str,
        max_calls: int | None = None,
        max_retries: int = 3,
        transcript_fpath: pathlib.Path | None = None,
        sleep: collections.abc.Callable[[float], None] = time.sleep,
    ) -> None:
        self._provider = provider
        self._model = model
        self._max_calls = max_calls
        self._max_retries = max_retries
        self._transcript_fpath = transcript_fpath
        self._sleep = sleep
        self._lock = threading.Lock()
        self._calls = 0

    @property
    def calls(self) -> int:
        """Calls started so far (each counts once, however many retries it took)."""
        with self._lock:
            return self._calls

    @beartype.beartype
    def complete(self, request: LlmRequest) -> str:
        """Render the request, call the provider and return the raw text."""
        messages = kbnav.prompts.render_messages(request.template_id, request.variables)
        digest = request_digest(request, messages)

        with self._lock:
            if self._max_calls is not None and self._calls >= self._max_calls:
                raise kbnav.errors.BudgetExceededError.make(self._max_calls)
            self._calls += 1

        started_at = _now()
        last_err = ""
        for attempt in range(self._max_retries + 1):
            try:
                response = self._provider.complete(
                    messages=messages, request=request, digest=digest
                )
                break
            except TransientProviderError as err:
                last_err = str(err)
                logger.debug("Provider error (attempt %d): %s", attempt + 1, err)
                if attempt < self._max_retries:
                    self._sleep(2.0**attempt)
        else:
            raise kbnav.errors.ProviderError(
                message=(
                    f"{self._model} failed after {self._max_retries + 1} "
                    f"attempts: {last_err}"
                ),
                hint="Try again later, or raise llm_max_retries in your config file.",
            )

        if self._transcript_fpath is not None:
            self._record({
                "digest": digest,
                "template_id": request.template_id,
                "model": self._model,
                "sampling": request.sampling(),
                "messages": [dataclasses.asdict(m) for m in messages],
                "response": response,
                "started_at": started_at,
                "finished_at": _now(),
            })
        return response

    @beartype.beartype
    def _record(self, record: dict[str, tp.Any]) -> None:
        assert self._transcript_fpath is not None
        fpath = self._transcript_fpath
        fpath.parent.mkdir(parents=True, exist_ok=True)
        line = json.dumps(record, ensure_ascii=False, sort_keys=True)
        lock_fpath = fpath.with_name(fpath.name + ".lock")
        with self._lock, kbnav.cache.acquire_lock(lock_fpath):
            with fpath.open("a", encoding="utf-8") as fd:
                fd.write(line + "\n")


@beartype.beartype
def _now() -> str:
    return datetime.datetime.now(datetime.UTC).strftime("%Y-%m-%dT%H:%M:%S.%fZ")
