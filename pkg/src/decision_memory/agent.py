"""Memory-guided decision episodes and the cross-batch final choice."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .envs.base import Environment
from .errors import BackendError, EmptyAction, EmptyInput, FormatViolation, InvalidAction
from .formation import summarize_history
from .llm.backends import Backend, complete
from .llm.grammar import parse_classification
from .llm.prompts import PromptKind, decision_payload, make_request, processes_payload
from .memory import BatchMemory, HistoryInfo
from .retrieval import ContextPrompt, retrieve_context
from .textutil import content_tokens

logger = logging.getLogger(__name__)

DEFAULT_MAX_STEPS = {"toyshop": 15, "toyhouse": 50}


class Termination(str, Enum):
    GOAL_REACHED = "GoalReached"
    STEP_LIMIT = "StepLimit"
    INVALID_ACTION_LIMIT = "InvalidActionLimit"
    ERROR = "Error"  # backend failure; the process is diagnostic only


@dataclass(frozen=True)
class ProcessStep:
    observation: str
    action: str
    history: HistoryInfo


@dataclass
class DecisionProcess:
    goal: str
    steps: list[ProcessStep]
    reward: float | None
    batch_id: int
    terminated: Termination
    error: str = ""

    @property
    def actions(self) -> list[str]:
        return [s.action for s in self.steps]

    def to_trace(self) -> dict:
        trace = {
            "goal": self.goal,
            "batch_id": self.batch_id,
            "steps": [{"observation": s.observation, "action": s.action, "summary": s.history.summary}
                      for s in self.steps],
            "reward": self.reward,
            "terminated": self.terminated.value,
        }
        if self.error:
            trace["error"] = self.error
        return trace


@dataclass(frozen=True)
class AgentConfig:
    max_steps: int = 15
    invalid_action_retries: int = 5
    retrieval_k: int = 5
    summary_max_steps: int = 20

    def __post_init__(self) -> None:
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if self.invalid_action_retries < 0:
            raise ValueError("invalid_action_retries must be nonnegative")
        if self.retrieval_k < 1:
            raise ValueError("retrieval_k must be at least 1")

    @classmethod
    def for_family(cls, family: str, **overrides) -> "AgentConfig":
        return cls(**{"max_steps": DEFAULT_MAX_STEPS.get(family, 15), **overrides})


def clean_action(raw: str) -> str:
    """First nonempty line of a reply, without a leading ``Action:`` label."""
    for line in raw.splitlines():
        line = line.strip()
        if line.lower().startswith("action:"):
            line = line[len("action:"):].strip()
        if line:
            return line
    return ""


def next_action(backend: Backend, goal: str, history: HistoryInfo, observation: str, context: ContextPrompt,
                rejected: Sequence[tuple[str, str]] = ()) -> str:
    payload = decision_payload(context.examples(), goal, history.summary, history.evaluation, observation, rejected)
    response = backend.complete(make_request(PromptKind.ACTION, payload))
    action = clean_action(response.raw)
    if not action:
        raise EmptyAction("the model returned no action")
    return action


def run_episode(backend: Backend, env: Environment, memory: BatchMemory, config: AgentConfig = AgentConfig()) -> DecisionProcess:
    """Act from the environment's current (freshly reset) state until it terminates or a limit is hit."""
    goal = env.goal
    steps: list[ProcessStep] = []
    prefix: list[tuple[str, str]] = []
    try:
        for _ in range(config.max_steps):
            observation = env.observation
            history = summarize_history(backend, goal, prefix, config.summary_max_steps)
            context = retrieve_context(backend, memory, goal, observation, config.retrieval_k)
            rejected: list[tuple[str, str]] = []
            while True:
                action = next_action(backend, goal, history, observation, context, rejected)
                try:
                    result = env.step(action)
                    break
                except InvalidAction as exc:
                    rejected.append((action, exc.reason))
                    if len(rejected) > config.invalid_action_retries:
                        steps.append(ProcessStep(observation, action, history))
                        reward = env.state.reward
                        return DecisionProcess(goal, steps, 0.0 if reward is None else reward, memory.batch_id,
                                               Termination.INVALID_ACTION_LIMIT)
            steps.append(ProcessStep(observation, action, history))
            prefix.append((observation, action))
            if result.done:
                return DecisionProcess(goal, steps, result.reward, memory.batch_id, Termination.GOAL_REACHED)
    except (BackendError, FormatViolation) as exc:
        logger.warning("episode aborted by backend failure: %s", exc)
        return DecisionProcess(goal, steps, None, memory.batch_id, Termination.ERROR, error=f"{type(exc).__name__}: {exc}")
    return DecisionProcess(goal, steps, env.exhaustion_reward(), memory.batch_id, Termination.STEP_LIMIT)


def choose_final(backend: Backend, processes: Sequence[DecisionProcess]) -> DecisionProcess:
    if not processes:
        raise EmptyInput("no processes to choose from")
    if len(processes) == 1:
        return processes[0]
    if all(p.reward is not None for p in processes):
        return max(processes, key=lambda p: (p.reward, -p.batch_id))
    goal = processes[0].goal
    payload = processes_payload(goal, [p.actions for p in processes], choice_format=True)
    try:
        index = parse_classification(complete(backend, make_request(PromptKind.FINAL_CHOICE, payload)).raw)
        if 1 <= index <= len(processes):
            return processes[index - 1]
    except (FormatViolation, BackendError) as exc:
        logger.debug("final choice fell back to goal overlap: %s", exc)
    wanted = content_tokens(goal)
    return max(processes, key=lambda p: (len(wanted & content_tokens(" ".join(p.actions))), -p.batch_id))
