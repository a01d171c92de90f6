"""Content-addressed response cache, file locking and request pacing."""

import collections
import collections.abc
import contextlib
import hashlib
import json
import logging
import os
import pathlib
import tempfile
import threading
import time
import typing as tp

import beartype
import filelock

import kbnav.errors

logger = logging.getLogger(__name__)

# Seconds to wait for another worker to finish writing an entry.
LOCK_TIMEOUT_S = 120.0

# Entries a memory-only cache holds before dropping the least recently used.
MEMORY_MAX_ENTRIES = 4096


@beartype.beartype
def digest(*parts: object) -> str:
    """SHA-256 hex digest of the canonical JSON encoding of parts."""
    text = json.dumps(parts, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@contextlib.contextmanager
@beartype.beartype
def acquire_lock(
    lock_fpath: pathlib.Path, timeout: float = LOCK_TIMEOUT_S
) -> collections.abc.Iterator[None]:
    """Acquire an exclusive lock, waiting up to timeout seconds."""
    lock_fpath.parent.mkdir(parents=True, exist_ok=True)

    lock = filelock.FileLock(lock_fpath)
    try:
        lock.acquire(timeout=timeout)
    except filelock.Timeout:
        raise kbnav.errors.LockError.make(lock_fpath) from None

    try:
        yield
    finally:
        lock.release()


@beartype.beartype
def read_json(fpath: pathlib.Path) -> tp.Any:
    """Read a JSON file written by write_json_atomic."""
    text = fpath.read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as err:
        message = f"Invalid JSON in {fpath}: {err}"
        raise kbnav.errors.CacheError.make(message, fpath) from None


@beartype.beartype
def write_json_atomic(fpath: pathlib.Path, data: object) -> None:
    """Write JSON atomically so readers never see a partial file."""
    fpath.parent.mkdir(parents=True, exist_ok=True)

    # Atomic write: write to temp file, then rename
    with tempfile.NamedTemporaryFile(
        mode="w", dir=fpath.parent, delete=False, suffix=".tmp", encoding="utf-8"
    ) as fd:
        json.dump(data, fd, indent=2, ensure_ascii=False, sort_keys=True)
        tmp_fpath = pathlib.Path(fd.name)

    os.replace(tmp_fpath, fpath)


class ResponseCache:
    """Maps request digests to JSON payloads.

    With a directory, each entry is one JSON document `<dir>/<xx>/<digest>.json`.
    Reads take no lock (writes are atomic renames); writers serialize on a
    per-entry file lock. Without a directory, the most recently used
    max_entries entries live in memory.
    """

    def __init__(
        self, dpath: pathlib.Path | None, *, max_entries: int = MEMORY_MAX_ENTRIES
    ) -> None:
        if max_entries < 1:
            raise ValueError(f"max_entries must be >= 1, got {max_entries}")
        self._dpath = dpath
        self._max_entries = max_entries
        self._memory: collections.OrderedDict[str, object] = collections.OrderedDict()
        self._lock = threading.Lock()

    @beartype.beartype
    def get(self, key: str) -> tp.Any | None:
        """Return the cached payload or None."""
        if self._dpath is None:
            with self._lock:
                if key not in self._memory:
                    return None
                self._memory.move_to_end(key)
                return self._memory[key]

        fpath = self._entry_fpath(key)
        if not fpath.exists():
            return None
        logger.debug("Cache hit %s", key[:12])
        return read_json(fpath)["payload"]

    @beartype.beartype
    def put(self, key: str, payload: object) -> None:
        """Store a payload under key."""
        if self._dpath is None:
            with self._lock:
                self._memory[key] = payload
                self._memory.move_to_end(key)
                while len(self._memory) > self._max_entries:
                    self._memory.popitem(last=False)
            return

        fpath = self._entry_fpath(key)
        with acquire_lock(fpath.with_suffix(".json.lock")):
            write_json_atomic(fpath, {"key": key, "payload": payload})

    @beartype.beartype
    def _entry_fpath(self, key: str) -> pathlib.Path:
        assert self._dpath is not None
        return self._dpath / key[:2] / f"{key}.json"


class RateLimiter:
    """Spaces out calls by at least min_interval seconds across all threads."""

    def __init__(
        self,
        min_interval: float,
        *,
        clock: collections.abc.Callable[[], float] = time.monotonic,
        sleep: collections.abc.Callable[[float], None] = time.sleep,
    ) -> None:
        self._min_interval = min_interval
        self._clock = clock
        self._sleep = sleep
        self._next_slot = 0.0
        self._lock = threading.Lock()

    @beartype.beartype
    def wait(self) -> None:
        """Block until this caller's slot arrives."""
        if self._min_interval <= 0:
            return
        with self._lock:
            now = self._clock()
            slot = max(now, self._next_slot)
            self._next_slot = slot + self._min_interval
        delay = slot - now
        if delay > 0:
            self._sleep(delay)
