"""Tests for cache module."""

import json
import pathlib
import threading

import filelock
import pytest

import kbnav.cache
import kbnav.errors


def test_digest_is_order_insensitive_for_dict_keys() -> None:
    """digest canonicalizes dicts."""
    assert kbnav.cache.digest({"a": 1, "b": 2}) == kbnav.cache.digest({"b": 2, "a": 1})
    assert kbnav.cache.digest("a", "b") != kbnav.cache.digest("b", "a")


def test_write_json_atomic_roundtrip(tmp_path: pathlib.Path) -> None:
    """write_json_atomic writes sorted, readable JSON and leaves no temp files."""
    fpath = tmp_path / "nested" / "doc.json"
    kbnav.cache.write_json_atomic(fpath, {"b": 1, "a": [1, 2]})

    assert kbnav.cache.read_json(fpath) == {"a": [1, 2], "b": 1}
    assert list(fpath.parent.iterdir()) == [fpath]


def test_read_json_invalid(tmp_path: pathlib.Path) -> None:
    """Corrupt JSON raises CacheError with a delete hint."""
    fpath = tmp_path / "bad.json"
    fpath.write_text("{not json")

    with pytest.raises(kbnav.errors.CacheError) as exc_info:
        kbnav.cache.read_json(fpath)
    assert exc_info.value.fpath == fpath
    assert "Delete" in str(exc_info.value)


def test_response_cache_on_disk(tmp_path: pathlib.Path) -> None:
    """Disk entries survive a new cache object."""
    key = kbnav.cache.digest("q")
    kbnav.cache.ResponseCache(tmp_path).put(key, {"x": 1})

    assert kbnav.cache.ResponseCache(tmp_path).get(key) == {"x": 1}
    entry_fpath = tmp_path / key[:2] / f"{key}.json"
    assert json.loads(entry_fpath.read_text())["key"] == key


def test_response_cache_in_memory() -> None:
    """Without a directory, entries live in memory."""
    cache = kbnav.cache.ResponseCache(None)
    assert cache.get("k") is None
    cache.put("k", [1])
    assert cache.get("k") == [1]


def test_response_cache_in_memory_evicts_least_recently_used() -> None:
    """A memory cache keeps at most max_entries, dropping the stalest first."""
    cache = kbnav.cache.ResponseCache(None, max_entries=2)
    cache.put("a", 1)
    cache.put("b", 2)
    assert cache.get("a") == 1
    cache.put("c", 3)

    assert cache.get("b") is None
    assert cache.get("a") == 1
    assert cache.get("c") == 3


def test_response_cache_needs_room() -> None:
    """A memory cache must hold at least one entry."""
    with pytest.raises(ValueError):
        kbnav.cache.ResponseCache(None, max_entries=0)


def test_acquire_lock_timeout(tmp_path: pathlib.Path) -> None:
    """A held lock times out with LockError."""
    lock_fpath = tmp_path / "x.lock"
    held = threading.Event()
    release = threading.Event()

    def hold() -> None:
        lock = filelock.FileLock(lock_fpath, thread_local=False)
        with lock:
            held.set()
            release.wait(5)

    thread = threading.Thread(target=hold)
    thread.start()
    held.wait(5)
    try:
        with pytest.raises(kbnav.errors.LockError):
            with kbnav.cache.acquire_lock(lock_fpath, timeout=0.05):
                pass
    finally:
        release.set()
        thread.join()


def test_rate_limiter_spaces_calls() -> None:
    """Consecutive calls wait out the interval."""
    now = [100.0]
    sleeps: list[float] = []
    limiter = kbnav.cache.RateLimiter(
        0.5, clock=lambda: now[0], sleep=lambda s: sleeps.append(s)
    )

    limiter.wait()
    limiter.wait()
    limiter.wait()
    assert sleeps == [0.5, 1.0]


def test_rate_limiter_disabled() -> None:
    """A zero interval never sleeps."""
    sleeps: list[float] = []
    limiter = kbnav.cache.RateLimiter(0.0, sleep=lambda s: sleeps.append(s))
    limiter.wait()
    limiter.wait()
    assert sleeps == []
