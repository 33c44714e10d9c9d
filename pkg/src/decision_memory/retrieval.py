"""Context retrieval: classify goal and observation, then look up the cell."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .errors import EmptyInput, FormatViolation
from .llm.backends import Backend, complete
from .llm.grammar import parse_classification
from .llm.prompts import PromptKind, examples_block, make_request, types_payload
from .memory import NEW_TYPE, BatchMemory, StateActionTuple, lookup
from .textutil import content_tokens

logger = logging.getLogger(__name__)

GOAL_EXAMPLES_SHOWN = 3
OBS_EXAMPLES_SHOWN = 2
EXAMPLE_CHARS = 240


@dataclass(frozen=True)
class ContextPrompt:
    tuples: tuple[StateActionTuple, ...]
    goal_type_id: int
    obs_type_id: int
    rendered: str

    def examples(self) -> list[tuple[str, str, str, str, str]]:
        return example_rows(self.tuples)


def example_rows(tuples) -> list[tuple[str, str, str, str, str]]:
    return [(t.goal, t.history.summary, t.history.evaluation, t.observation, t.action) for t in tuples]


def _ask_type(backend: Backend, kind: PromptKind, payload: str, valid: set[int]) -> int | None:
    """The classified id if valid, after at most one reprompt; ``None`` otherwise."""
    request = make_request(kind, payload)
    for req in (request, request.with_retry_suffix()):
        try:
            type_id = parse_classification(complete(backend, req).raw)
        except FormatViolation:
            continue
        if type_id in valid:
            return type_id
    return None


def _overlap_choice(text: str, named: list[tuple[int, str]]) -> tuple[int, int]:
    """(id, score) of the name sharing the most tokens with ``text``; lowest id on ties."""
    q = content_tokens(text)
    best_id, best_score = None, -1
    for type_id, name in sorted(named):
        score = len(q & content_tokens(name))
        if score > best_score:
            best_id, best_score = type_id, score
    return best_id, best_score


def classify_goal(backend: Backend, memory: BatchMemory, goal: str) -> int:
    types = memory.index.goal_types
    if not types:
        raise EmptyInput("memory index has no goal types")
    if len(types) == 1:
        return types[0].id
    payload = types_payload([(g.id, g.name, g.examples[:GOAL_EXAMPLES_SHOWN]) for g in types], "New goal", goal)
    chosen = _ask_type(backend, PromptKind.INDEX_GOAL, payload, {g.id for g in types})
    if chosen is None:
        chosen, _ = _overlap_choice(goal, [(g.id, g.name) for g in types])
        logger.debug("goal classification fell back to token overlap: %s", chosen)
    return chosen


def _obs_examples(memory: BatchMemory, goal_type_id: int, obs_type_id: int) -> list[str]:
    ids = memory.index.cells.get((goal_type_id, obs_type_id), [])[:OBS_EXAMPLES_SHOWN]
    return [memory.tuples[i].observation[:EXAMPLE_CHARS] for i in ids]


def classify_observation(backend: Backend, memory: BatchMemory, goal_type_id: int, observation: str,
                         allow_new: bool = False) -> int:
    """Observation type id within the goal type.

    With ``allow_new`` an observation that neither the model nor the overlap
    fallback can place returns ``NEW_TYPE``.
    """
    goal_type = memory.index.goal_type(goal_type_id)
    obs_types = goal_type.obs_types
    if not obs_types:
        if allow_new:
            return NEW_TYPE
        raise EmptyInput(f"goal type {goal_type_id} has no observation types")
    if len(obs_types) == 1:
        return obs_types[0].id
    payload = types_payload(
        [(o.id, o.name, _obs_examples(memory, goal_type_id, o.id)) for o in obs_types], "New observation", observation)
    chosen = _ask_type(backend, PromptKind.INDEX_OBSERVATION, payload, {o.id for o in obs_types})
    if chosen is None:
        chosen, score = _overlap_choice(observation, [(o.id, o.name) for o in obs_types])
        if allow_new and score == 0:
            return NEW_TYPE
    return chosen


def retrieve_context(backend: Backend, memory: BatchMemory, goal: str, observation: str, k: int = 5) -> ContextPrompt:
    if k < 1:
        raise ValueError("k must be at least 1")
    goal_type_id = classify_goal(backend, memory, goal)
    obs_type_id = classify_observation(backend, memory, goal_type_id, observation)
    tuples = tuple(lookup(memory, goal_type_id, obs_type_id, k))
    return ContextPrompt(tuples, goal_type_id, obs_type_id, examples_block(example_rows(tuples)))
