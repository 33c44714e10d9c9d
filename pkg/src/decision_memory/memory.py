"""Trajectories, state-action tuples, batch memories and their on-disk format."""

from __future__ import annotations

import copy
import hashlib
import json
import os
import tempfile
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .errors import EmptyInput, MemoryIoError, SchemaVersionMismatch, UnknownGoalType
from .llm.grammar import Status
from .llm.prompts import render_subgoals

SCHEMA_VERSION = 1
NEW_TYPE = 0  # sentinel obs_type_id: create a fresh observation type under the goal type
NO_PAST = "No past actions."
MANIFEST = "memory.json"


class Source(str, Enum):
    DEMONSTRATION = "Demonstration"
    EXPLORATION = "Exploration"


@dataclass(frozen=True)
class Trajectory:
    id: str
    goal: str
    steps: tuple[tuple[str, str], ...]
    seed: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple((o, a) for o, a in self.steps))
        if not self.steps:
            raise ValueError(f"trajectory {self.id!r} has no steps")
        if not self.goal.strip():
            raise ValueError(f"trajectory {self.id!r} has an empty goal")
        for i, (obs, act) in enumerate(self.steps, 1):
            if not obs.strip() or not act.strip():
                raise ValueError(f"trajectory {self.id!r} step {i} has an empty observation or action")

    @property
    def length(self) -> int:
        return len(self.steps)

    def to_dict(self) -> dict:
        return {"id": self.id, "goal": self.goal, "seed": self.seed,
                "steps": [{"observation": o, "action": a} for o, a in self.steps]}

    @classmethod
    def from_dict(cls, d: dict) -> "Trajectory":
        return cls(d["id"], d["goal"], tuple((s["observation"], s["action"]) for s in d["steps"]), d.get("seed"))


def write_trajectories(path: str | Path, trajectories: Iterable[Trajectory]) -> int:
    lines = [json.dumps(t.to_dict(), ensure_ascii=False) for t in trajectories]
    atomic_write(Path(path), "".join(line + "\n" for line in lines))
    return len(lines)


def read_trajectories(path: str | Path) -> list[Trajectory]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise MemoryIoError(f"cannot read trajectories from {path}: {exc}") from exc
    return [Trajectory.from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]


@dataclass(frozen=True)
class HistoryInfo:
    summary: str
    subgoals: tuple[tuple[str, Status], ...] = ()

    def __post_init__(self) -> None:
        if not self.summary.strip():
            raise ValueError("history summary must be nonempty")
        object.__setattr__(self, "subgoals", tuple((s, Status(st)) for s, st in self.subgoals))

    @property
    def evaluation(self) -> str:
        return render_subgoals((s, st.value) for s, st in self.subgoals)


@dataclass(frozen=True)
class StateActionTuple:
    goal: str
    history: HistoryInfo
    observation: str
    action: str
    source: Source
    origin: str
    step: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "source", Source(self.source))
        for name in ("goal", "observation", "action", "origin"):
            if not getattr(self, name).strip():
                raise ValueError(f"tuple field {name} must be nonempty")
        if self.step < 1:
            raise ValueError("step index is 1-based")


def exploration_origin(goal: str, actions: Sequence[str]) -> str:
    digest = hashlib.sha1("\n".join([goal, *actions]).encode("utf-8")).hexdigest()
    return "explore-" + digest[:12]


# --- index ------------------------------------------------------------------


@dataclass
class ObservationType:
    id: int
    name: str


@dataclass
class GoalType:
    id: int
    name: str
    examples: list[str]
    obs_types: list[ObservationType] = field(default_factory=list)

    def obs_type(self, obs_type_id: int) -> ObservationType | None:
        return next((o for o in self.obs_types if o.id == obs_type_id), None)


@dataclass
class MemoryIndex:
    goal_types: list[GoalType] = field(default_factory=list)
    cells: dict[tuple[int, int], list[int]] = field(default_factory=dict)

    def goal_type(self, goal_type_id: int) -> GoalType:
        for g in self.goal_types:
            if g.id == goal_type_id:
                return g
        raise UnknownGoalType(goal_type_id)

    @property
    def cell_size(self) -> dict[int, int]:
        """Observation count per goal type: the sum of its cells' sizes."""
        sizes = {g.id: 0 for g in self.goal_types}
        for (k, _), ids in self.cells.items():
            sizes[k] += len(ids)
        return sizes

    def add_obs_type(self, goal_type_id: int, name: str) -> int:
        g = self.goal_type(goal_type_id)
        new_id = max((o.id for o in g.obs_types), default=0) + 1
        g.obs_types.append(ObservationType(new_id, name))
        self.cells[(goal_type_id, new_id)] = []
        return new_id

    def cell_of(self, tuple_id: int) -> tuple[int, int] | None:
        for key, ids in self.cells.items():
            if tuple_id in ids:
                return key
        return None


@dataclass(frozen=True)
class Capacity:
    total: int  # N trajectories overall
    batch_size: int  # B
    batch_count: int  # n


@dataclass(eq=False)
class BatchMemory:
    batch_id: int
    capacity: Capacity
    index: MemoryIndex = field(default_factory=MemoryIndex)
    tuples: dict[int, StateActionTuple] = field(default_factory=dict)
    _lock: threading.RLock = field(default_factory=threading.RLock, repr=False)

    def __post_init__(self) -> None:
        self._by_content = {t: i for i, t in self.tuples.items()}

    def __len__(self) -> int:
        return len(self.tuples)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BatchMemory):
            return NotImplemented
        return (self.batch_id, self.capacity, self.index, list(self.tuples.items())) == (
            other.batch_id, other.capacity, other.index, list(other.tuples.items()))

    @property
    def lock(self) -> threading.RLock:
        return self._lock

    def snapshot(self) -> "BatchMemory":
        """Independent copy for lock-free reads during inference."""
        with self._lock:
            return BatchMemory(self.batch_id, self.capacity, copy.deepcopy(self.index), dict(self.tuples))

    def find(self, tup: StateActionTuple) -> int | None:
        return self._by_content.get(tup)

    def _store(self, tup: StateActionTuple) -> int:
        new_id = max(self.tuples, default=0) + 1
        self.tuples[new_id] = tup
        self._by_content[tup] = new_id
        return new_id


def partition_trajectories(trajectories: Sequence[Trajectory], batch_size: int) -> list[list[Trajectory]]:
    if batch_size < 1:
        raise ValueError("batch size must be at least 1")
    if not trajectories:
        raise EmptyInput("no trajectories to partition")
    items = list(trajectories)
    return [items[i:i + batch_size] for i in range(0, len(items), batch_size)]


def insert_tuple(memory: BatchMemory, tup: StateActionTuple, goal_type_id: int, obs_type_id: int,
                 new_type_name: str = "New type") -> int:
    """Store and index ``tup``; a byte-identical tuple already present is returned as-is."""
    with memory.lock:
        goal_type = memory.index.goal_type(goal_type_id)
        existing = memory.find(tup)
        if existing is not None:
            return existing
        if obs_type_id == NEW_TYPE:
            obs_type_id = memory.index.add_obs_type(goal_type_id, new_type_name)
        elif goal_type.obs_type(obs_type_id) is None:
            raise KeyError(f"goal type {goal_type_id} has no observation type {obs_type_id}")
        tuple_id = memory._store(tup)
        memory.index.cells.setdefault((goal_type_id, obs_type_id), []).append(tuple_id)
        return tuple_id


def lookup(memory: BatchMemory, goal_type_id: int, obs_type_id: int, k: int) -> list[StateActionTuple]:
    """Up to ``k`` tuples from the cell, newest first; an empty cell falls back to the goal type."""
    if k < 1:
        raise ValueError("k must be at least 1")
    with memory.lock:
        memory.index.goal_type(goal_type_id)
        ids = memory.index.cells.get((goal_type_id, obs_type_id), [])
        if not ids:
            ids = sorted(i for (gk, _), cell in memory.index.cells.items() if gk == goal_type_id for i in cell)
        return [memory.tuples[i] for i in sorted(ids, reverse=True)[:k]]


# --- persistence --------------------------------------------------------------


@dataclass(eq=True)
class MemorySet:
    batches: list[BatchMemory] = field(default_factory=list)
    seed: int | None = None

    def batch(self, batch_id: int) -> BatchMemory:
        for b in self.batches:
            if b.batch_id == batch_id:
                return b
        raise KeyError(f"no batch {batch_id}")

    @property
    def tuple_count(self) -> int:
        return sum(len(b) for b in self.batches)


def atomic_write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise MemoryIoError(f"cannot write {path}: {exc}") from exc


def _dump(obj: object) -> str:
    return json.dumps(obj, ensure_ascii=False, indent=1) + "\n"


def _batch_stem(batch_id: int) -> str:
    return f"batch_{batch_id:03d}"


def tuple_records(memory: BatchMemory) -> list[dict]:
    where = {i: key for key, ids in memory.index.cells.items() for i in ids}
    records = []
    for tuple_id, t in memory.tuples.items():
        k, o = where[tuple_id]
        records.append({
            "id": tuple_id, "batch_id": memory.batch_id, "goal": t.goal, "summary": t.history.summary,
            "subgoals": [[s, st.value] for s, st in t.history.subgoals], "observation": t.observation,
            "action": t.action, "source": t.source.value, "origin": t.origin, "step": t.step,
            "goal_type": k, "obs_type": o,
        })
    return records


def index_document(memory: BatchMemory) -> dict:
    cap = memory.capacity
    return {
        "schema_version": SCHEMA_VERSION,
        "batch_id": memory.batch_id,
        "capacity": {"N": cap.total, "B": cap.batch_size, "n": cap.batch_count},
        "goal_types": [
            {"id": g.id, "name": g.name, "examples": list(g.examples),
             "obs_types": [{"id": o.id, "name": o.name} for o in g.obs_types]}
            for g in memory.index.goal_types
        ],
        "cells": {f"{k}:{o}": list(ids) for (k, o), ids in memory.index.cells.items()},
    }


def save_memory(memories: MemorySet, directory: str | Path) -> list[Path]:
    """Write one JSON-lines file and one index file per batch plus a manifest."""
    root = Path(directory)
    written = []
    for b in memories.batches:
        with b.lock:
            lines = "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in tuple_records(b))
            index = _dump(index_document(b))
        stem = _batch_stem(b.batch_id)
        atomic_write(root / f"{stem}.jsonl", lines)
        atomic_write(root / f"{stem}.index.json", index)
        written += [root / f"{stem}.jsonl", root / f"{stem}.index.json"]
    manifest = {"schema_version": SCHEMA_VERSION, "seed": memories.seed,
                "batches": [b.batch_id for b in memories.batches]}
    atomic_write(root / MANIFEST, _dump(manifest))
    written.append(root / MANIFEST)
    return written


def _read_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise MemoryIoError(f"cannot read {path}: {exc}") from exc


def _check_version(doc: dict, path: Path) -> None:
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"{path}: schema_version {doc.get('schema_version')!r}, expected {SCHEMA_VERSION}")


def load_memory(directory: str | Path) -> MemorySet:
    root = Path(directory)
    manifest = _read_json(root / MANIFEST)
    _check_version(manifest, root / MANIFEST)
    batches = []
    for batch_id in manifest["batches"]:
        stem = _batch_stem(batch_id)
        doc = _read_json(root / f"{stem}.index.json")
        _check_version(doc, root / f"{stem}.index.json")
        cap = doc["capacity"]
        index = MemoryIndex(
            [GoalType(g["id"], g["name"], list(g["examples"]), [ObservationType(o["id"], o["name"]) for o in g["obs_types"]])
             for g in doc["goal_types"]],
            {tuple(int(x) for x in key.split(":")): list(ids) for key, ids in doc["cells"].items()},
        )
        try:
            text = (root / f"{stem}.jsonl").read_text(encoding="utf-8")
        except OSError as exc:
            raise MemoryIoError(f"cannot read {stem}.jsonl: {exc}") from exc
        tuples = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            r = json.loads(line)
            history = HistoryInfo(r["summary"], tuple((s, Status(st)) for s, st in r["subgoals"]))
            tuples[r["id"]] = StateActionTuple(r["goal"], history, r["observation"], r["action"],
                                               Source(r["source"]), r["origin"], r["step"])
        batches.append(BatchMemory(doc["batch_id"], Capacity(cap["N"], cap["B"], cap["n"]), index, tuples))
    return MemorySet(batches, manifest.get("seed"))
