"""Memory formation: demonstration trajectories to indexed batch memories."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from .errors import EmptyInput, FormatViolation
from .llm.backends import Backend, ask
from .llm.grammar import Status, parse_cluster, parse_evaluation, parse_summary
from .llm.prompts import PromptKind, make_request, numbered_items_payload, past_process_payload
from .memory import (NO_PAST, BatchMemory, Capacity, GoalType, HistoryInfo, MemoryIndex, MemorySet, ObservationType,
                     Source, StateActionTuple, Trajectory, insert_tuple, partition_trajectories)

OTHER = "Other"


@dataclass(frozen=True)
class FormationConfig:
    batch_size: int = 100
    retrieval_k: int = 5
    summary_max_steps: int = 20
    workers: int = 1

    def __post_init__(self) -> None:
        if self.batch_size < 1 or self.retrieval_k < 1 or self.summary_max_steps < 1 or self.workers < 1:
            raise ValueError("formation settings must be positive")


def summarize_history(backend: Backend, goal: str, prefix: Sequence[tuple[str, str]],
                      max_steps: int = 20) -> HistoryInfo:
    """Summary and subgoal status of the steps before the current observation."""
    recent = list(prefix)[-max_steps:]
    payload = past_process_payload(goal, recent)
    subgoals = ask(backend, make_request(PromptKind.EVALUATION, payload), parse_evaluation)
    if not recent:
        return HistoryInfo(NO_PAST, tuple((s, Status.INCOMPLETE) for s, _ in subgoals))
    summary = ask(backend, make_request(PromptKind.SUMMARIZATION, payload), parse_summary)
    return HistoryInfo(summary, tuple(subgoals))


def tuples_from_trajectory(backend: Backend, trajectory: Trajectory, max_steps: int = 20) -> list[StateActionTuple]:
    out = []
    for step, (observation, action) in enumerate(trajectory.steps, start=1):
        history = summarize_history(backend, trajectory.goal, trajectory.steps[:step - 1], max_steps)
        out.append(StateActionTuple(trajectory.goal, history, observation, action, Source.DEMONSTRATION,
                                    trajectory.id, step))
    return out


@dataclass(frozen=True)
class Cluster:
    name: str
    members: tuple[int, ...]  # 1-based positions in the clustered list


def _cluster(backend: Backend, kind: PromptKind, header: str, items: Sequence[str], preamble: str = "") -> list[Cluster]:
    """Cluster ``items`` with full coverage: one reprompt, then an ``Other`` catch-all."""
    if not items:
        raise EmptyInput("nothing to cluster")
    request = make_request(kind, numbered_items_payload(header, items, preamble))
    valid = set(range(1, len(items) + 1))

    def attempt(req) -> list[tuple[str, list[int]]]:
        try:
            return ask(backend, req, parse_cluster)
        except FormatViolation:
            return []

    types = attempt(request)
    covered = {i for _, ids in types for i in ids}
    if not valid <= covered:
        retry = attempt(request.with_retry_suffix())
        if valid <= {i for _, ids in retry for i in ids}:
            types = retry
    clusters, seen = [], set()
    for name, ids in types:
        members = tuple(i for i in ids if i in valid and i not in seen)
        seen.update(members)
        if members:
            clusters.append(Cluster(name, members))
    missing = tuple(sorted(valid - seen))
    if missing:
        other = next((c for c in clusters if c.name == OTHER), None)
        if other is None:
            clusters.append(Cluster(OTHER, missing))
        else:
            clusters[clusters.index(other)] = Cluster(OTHER, other.members + missing)
    return clusters


def cluster_goals(backend: Backend, goals: Sequence[str]) -> list[Cluster]:
    return _cluster(backend, PromptKind.CLUSTER_GOALS, "Goals:", goals)


def cluster_observations(backend: Backend, goal_type: str, observations: Sequence[str]) -> list[Cluster]:
    return _cluster(backend, PromptKind.CLUSTER_OBSERVATIONS, "Observations:", observations,
                    preamble=f"Goal type: {goal_type}")


def _distinct(items: Sequence[str]) -> list[str]:
    return list(dict.fromkeys(items))


def build_batch_memory(backend: Backend, trajectories: Sequence[Trajectory], config: FormationConfig = FormationConfig(),
                       batch_id: int = 1, capacity: Capacity | None = None) -> BatchMemory:
    if not trajectories:
        raise EmptyInput("cannot build a memory from an empty batch")
    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            per_traj = list(pool.map(lambda t: tuples_from_trajectory(backend, t, config.summary_max_steps), trajectories))
    else:
        per_traj = [tuples_from_trajectory(backend, t, config.summary_max_steps) for t in trajectories]
    tuples = [t for group in per_traj for t in group]

    goals = _distinct([t.goal for t in trajectories])
    goal_clusters = cluster_goals(backend, goals)
    goal_type_of = {goals[i - 1]: k for k, c in enumerate(goal_clusters, start=1) for i in c.members}

    index = MemoryIndex()
    placement: dict[int, tuple[int, int]] = {}  # position in `tuples` -> cell
    for k, gc in enumerate(goal_clusters, start=1):
        members = [n for n, t in enumerate(tuples) if goal_type_of[t.goal] == k]
        observations = _distinct([tuples[n].observation for n in members])
        obs_clusters = cluster_observations(backend, gc.name, observations)
        obs_type_of = {observations[i - 1]: o for o, c in enumerate(obs_clusters, start=1) for i in c.members}
        index.goal_types.append(GoalType(k, gc.name, [goals[i - 1] for i in gc.members],
                                         [ObservationType(o, c.name) for o, c in enumerate(obs_clusters, start=1)]))
        for o in range(1, len(obs_clusters) + 1):
            index.cells[(k, o)] = []
        for n in members:
            placement[n] = (k, obs_type_of[tuples[n].observation])

    if capacity is None:
        capacity = Capacity(len(trajectories), len(trajectories), 1)
    memory = BatchMemory(batch_id, capacity, index)
    for n, t in enumerate(tuples):
        insert_tuple(memory, t, *placement[n])
    return memory


def form_memory(backend: Backend, trajectories: Sequence[Trajectory], config: FormationConfig = FormationConfig(),
                seed: int | None = None) -> MemorySet:
    """Partition into batches and build one independent memory per batch."""
    batches = partition_trajectories(trajectories, config.batch_size)
    capacity = Capacity(len(trajectories), config.batch_size, len(batches))
    jobs = list(enumerate(batches, start=1))
    if config.workers > 1 and len(jobs) > 1:
        inner = FormationConfig(config.batch_size, config.retrieval_k, config.summary_max_steps, 1)
        with ThreadPoolExecutor(config.workers) as pool:
            memories = list(pool.map(lambda job: build_batch_memory(backend, job[1], inner, job[0], capacity), jobs))
    else:
        memories = [build_batch_memory(backend, batch, config, b, capacity) for b, batch in jobs]
    return MemorySet(memories, seed)
