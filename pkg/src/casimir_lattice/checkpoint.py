"""Resumable execution of independent work items.

Each completed item is appended as one JSON line to a checkpoint file, so an
interrupted run restarted with ``resume=True`` skips everything already on
disk.  Results are always returned in the order of their keys, whatever
order the workers finish in.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

log = logging.getLogger(__name__)


class NodeCache:
    """Key to JSON-serializable result, optionally backed by a JSON-lines file."""

    def __init__(self, path=None, resume: bool = False):
        self.path = Path(path) if path is not None else None
        self._data: dict[str, object] = {}
        self._lock = threading.Lock()
        if self.path is None:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if resume and self.path.exists():
            with open(self.path) as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        rec = json.loads(line)
                    except json.JSONDecodeError:
                        # a line cut short by the interruption
                        log.warning("ignoring truncated checkpoint line in %s", self.path)
                        continue
                    self._data[rec["key"]] = rec["value"]
            log.info("resumed %d checkpointed items from %s", len(self._data), self.path)
        elif self.path.exists():
            self.path.unlink()

    def __contains__(self, key: str) -> bool:
        return key in self._data

    def __len__(self) -> int:
        return len(self._data)

    def get(self, key: str):
        return self._data[key]

    def put(self, key: str, value) -> None:
        with self._lock:
            self._data[key] = value
            if self.path is not None:
                with open(self.path, "a") as fh:
                    fh.write(json.dumps({"key": key, "value": value}) + "\n")
                    fh.flush()
                    os.fsync(fh.fileno())


class Runner:
    """Worker pool plus checkpoint cache shared by one run."""

    def __init__(self, threads: int = 1, cache: NodeCache | None = None):
        if threads < 1:
            raise ValueError("need at least one worker thread")
        self.threads = int(threads)
        self.cache = cache if cache is not None else NodeCache()
        self.computed = 0
        self.reused = 0


def run_nodes(keys, thunks, runner: Runner | None = None) -> list:
    """Evaluate ``thunks[i]()`` for every key not already cached."""
    runner = runner if runner is not None else Runner()
    keys = list(keys)
    if len(set(keys)) != len(keys):
        raise ValueError("work item keys must be unique")
    todo = [i for i, k in enumerate(keys) if k not in runner.cache]
    runner.reused += len(keys) - len(todo)

    def one(i):
        value = thunks[i]()
        runner.cache.put(keys[i], value)
        return value

    if runner.threads == 1 or len(todo) <= 1:
        for i in todo:
            one(i)
    else:
        with ThreadPoolExecutor(max_workers=runner.threads) as pool:
            for fut in [pool.submit(one, i) for i in todo]:
                fut.result()
    runner.computed += len(todo)
    return [runner.cache.get(k) for k in keys]
