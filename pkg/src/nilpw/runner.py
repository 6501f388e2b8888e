"""Parallel map over chart-grid slots with a resumable manifest.

Each slot is an independent computation whose result is a numpy array.
Results land in disjoint, preallocated positions; the decomposition into
slots never depends on the worker count, so the assembled output is
bit-identical for any number of workers and across interrupted runs.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Optional

import numpy as np

log = logging.getLogger(__name__)


class Interrupted(RuntimeError):
    """Raised when a run stops early on request; completed slots are kept."""


def config_digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


class SlotStore:
    """Directory of finished slot arrays plus ``manifest.json``.

    The manifest records the digest of the configuration that produced the
    slots; a mismatching digest discards them.
    """

    def __init__(self, root, digest: str, n_slots: int):
        self.root = Path(root)
        self.digest = digest
        self.n_slots = n_slots
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest = self.root / "manifest.json"
        done = []
        if self.manifest.exists():
            data = json.loads(self.manifest.read_text())
            if data.get("digest") == digest and data.get("slots") == n_slots:
                done = [i for i in data.get("completed", []) if self._path(i).exists()]
            else:
                log.info("manifest at %s belongs to another configuration; starting over", self.root)
        self.completed = set(done)

    def _path(self, i: int) -> Path:
        return self.root / f"slot_{i:05d}.npy"

    def load(self, i: int) -> np.ndarray:
        return np.load(self._path(i), allow_pickle=False)

    def save(self, i: int, value: np.ndarray) -> None:
        tmp = self.root / f".slot_{i:05d}.tmp.npy"
        np.save(tmp, np.asarray(value), allow_pickle=False)
        os.replace(tmp, self._path(i))
        self.completed.add(i)

    def write_manifest(self) -> None:
        data = {"digest": self.digest, "slots": self.n_slots, "completed": sorted(self.completed)}
        tmp = self.manifest.with_suffix(".tmp")
        tmp.write_text(json.dumps(data, indent=1))
        os.replace(tmp, self.manifest)


def slot_map(func: Callable[[int], np.ndarray], n_slots: int, workers: int = 1,
             store: Optional[SlotStore] = None, stop_after: Optional[int] = None) -> list:
    """``[func(0), ..., func(n_slots - 1)]`` computed by a thread pool.

    With a ``store``, finished slots are persisted as they complete and skipped
    on the next call.  ``stop_after`` computes at most that many new slots and
    then raises :class:`Interrupted` (used to exercise resumption).
    """
    results: list = [None] * n_slots
    todo = []
    for i in range(n_slots):
        if store is not None and i in store.completed:
            results[i] = store.load(i)
        else:
            todo.append(i)
    if stop_after is not None:
        todo, skipped = todo[:stop_after], len(todo) > stop_after
    else:
        skipped = False

    def run(i):
        value = np.asarray(func(i))
        if store is not None:
            store.save(i, value)
        return i, value

    if workers <= 1:
        for i in todo:
            results[i] = run(i)[1]
            if store is not None:
                store.write_manifest()
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for i, value in pool.map(run, todo):
                results[i] = value
                if store is not None:
                    store.write_manifest()
    if skipped:
        raise Interrupted(f"stopped after {len(todo)} new slots; rerun to resume")
    return results
