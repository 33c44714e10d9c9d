"""Memory refinement by confidence-scored tree exploration.

Each node either follows the majority action of its retrieved tuples (when
they agree strongly enough) or branches over model-proposed actions.  Live
paths are pruned to the ``top_n`` most confident after every depth.  The
best finished process is compared with the plain ground episode and, when it
earns strictly more reward, its steps from the key step on are added to the
batch memory that guided the search.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .agent import AgentConfig, DecisionProcess, ProcessStep, Termination, run_episode
from .envs.base import Environment, Snapshot
from .errors import EmptyInput, FormatViolation, InvalidAction, NoValidProposal
from .formation import summarize_history
from .llm.backends import Backend, ask
from .llm.grammar import normalize_proposals, parse_key_step, parse_proposals
from .llm.prompts import PromptKind, decision_payload, make_request, processes_payload
from .memory import BatchMemory, Source, StateActionTuple, exploration_origin, insert_tuple
from .retrieval import ContextPrompt, classify_goal, classify_observation, retrieve_context

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExplorerConfig:
    top_n: int = 4
    threshold: float = 0.7
    max_depth: int = 15
    max_children: int = 4
    retrieval_k: int = 5
    summary_max_steps: int = 20

    def __post_init__(self) -> None:
        if self.top_n < 1 or self.max_depth < 1 or self.max_children < 1 or self.retrieval_k < 1:
            raise ValueError("explorer limits must be positive")
        if not 0.5 < self.threshold <= 1.0:
            raise ValueError("concentration threshold must lie in (0.5, 1]")


@dataclass(frozen=True)
class ActionProposal:
    action: str
    confidence: float


@dataclass(frozen=True)
class MajorityAction:
    action: str


@dataclass(frozen=True)
class Branch:
    proposals: tuple[ActionProposal, ...]


def action_distribution(tuples: Sequence[StateActionTuple]) -> dict[str, float]:
    if not tuples:
        raise EmptyInput("no retrieved tuples")
    counts = Counter(t.action for t in tuples)
    return {action: n / len(tuples) for action, n in counts.items()}


def path_confidence(node_confidences: Sequence[float]) -> float:
    for c in node_confidences:
        if not 0.0 < c <= 1.0:
            raise ValueError(f"node confidence {c} outside (0, 1]")
    return math.prod(node_confidences)


def _majority(distribution: dict[str, float]) -> tuple[str, float]:
    # first-seen order breaks frequency ties, and tuples arrive newest first
    return max(distribution.items(), key=lambda kv: kv[1])


def propose(backend: Backend, goal: str, history, observation: str, context: ContextPrompt, max_children: int,
            rejected: Sequence[tuple[str, str]] = ()) -> list[ActionProposal]:
    payload = decision_payload(context.examples(), goal, history.summary, history.evaluation, observation,
                               rejected, proposal_format=True)
    pairs = ask(backend, make_request(PromptKind.TREE_EXPLORATION, payload), parse_proposals)
    top = sorted(enumerate(pairs), key=lambda ip: (-ip[1][1], ip[0]))[:max_children]
    kept = normalize_proposals([pair for _, pair in sorted(top)])
    total = math.fsum(c for _, c in kept)
    if abs(total - 1.0) > 1e-9:
        kept = [(a, c / total) for a, c in kept]
    return [ActionProposal(a, c) for a, c in kept]


def select_or_branch(backend: Backend, goal: str, history, observation: str, context: ContextPrompt,
                     config: ExplorerConfig, rejected: Sequence[tuple[str, str]] = ()) -> MajorityAction | Branch:
    if context.tuples:
        action, share = _majority(action_distribution(context.tuples))
        if share >= config.threshold and action not in {a for a, _ in rejected}:
            return MajorityAction(action)
    try:
        return Branch(tuple(propose(backend, goal, history, observation, context, config.max_children, rejected)))
    except NoValidProposal:
        if not context.tuples:
            raise
        return MajorityAction(_majority(action_distribution(context.tuples))[0])


# --- frontier -------------------------------------------------------------------


@dataclass
class TreeNode:
    action: str
    confidence: float
    path_confidence: float
    pruned: bool = False
    invalid: str = ""
    children: list["TreeNode"] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = {"action": self.action, "confidence": self.confidence, "path_confidence": self.path_confidence,
             "pruned": self.pruned}
        if self.invalid:
            d["invalid"] = self.invalid
        d["children"] = [c.to_dict() for c in self.children]
        return d


@dataclass
class ExplorationPath:
    steps: list[ProcessStep]
    node_confidences: list[float]
    snapshot: Snapshot | None = None
    done: bool = False
    reward: float | None = None
    node: TreeNode | None = field(default=None, repr=False, compare=False)

    @property
    def confidence(self) -> float:
        return path_confidence(self.node_confidences)

    @property
    def actions(self) -> tuple[str, ...]:
        return tuple(s.action for s in self.steps)


def prune_frontier(paths: Sequence[ExplorationPath], top_n: int) -> list[ExplorationPath]:
    """Keep the ``top_n`` most confident live paths, then every finished path.

    Confidence ties go to the lexicographically smaller action sequence.
    """
    if top_n < 1:
        raise ValueError("top_n must be at least 1")
    live = sorted((p for p in paths if not p.done), key=lambda p: (-p.confidence, p.actions))
    for p in live[top_n:]:
        if p.node is not None:
            p.node.pruned = True
    return live[:top_n] + [p for p in paths if p.done]


@dataclass
class ExplorationResult:
    processes: list[DecisionProcess]
    tree: TreeNode
    expansions: int = 0

    @property
    def best(self) -> DecisionProcess | None:
        return self.processes[0] if self.processes else None


def _rank_key(p: DecisionProcess, confidence: float):
    reward = -math.inf if p.reward is None else p.reward
    return (-reward, -confidence, tuple(p.actions))


def explore(backend: Backend, env: Environment, memory: BatchMemory, config: ExplorerConfig = ExplorerConfig()) -> ExplorationResult:
    """Beam-style expansion from the environment's current (freshly reset) state."""
    goal = env.goal
    root = TreeNode("<start>", 1.0, 1.0)
    live = [ExplorationPath([], [], env.snapshot(), node=root)]
    finished: list[ExplorationPath] = []
    expansions = 0
    for _ in range(config.max_depth):
        if not live:
            break
        children: list[ExplorationPath] = []
        for path in live:
            env.restore(path.snapshot)
            observation = env.observation
            prefix = [(s.observation, s.action) for s in path.steps]
            history = summarize_history(backend, goal, prefix, config.summary_max_steps)
            context = retrieve_context(backend, memory, goal, observation, config.retrieval_k)
            decision = select_or_branch(backend, goal, history, observation, context, config)
            expansions += 1
            if isinstance(decision, MajorityAction):
                options = [ActionProposal(decision.action, 1.0)]
            else:
                options = list(decision.proposals)
            produced = _expand(env, path, history, observation, options)
            if isinstance(decision, MajorityAction) and not produced:
                # the remembered majority action does not apply here; branch instead
                rejected = [(decision.action, path.node.children[-1].invalid)]
                decision = select_or_branch(backend, goal, history, observation, context, config, rejected)
                produced = _expand(env, path, history, observation, list(decision.proposals)
                                   if isinstance(decision, Branch) else [ActionProposal(decision.action, 1.0)])
            for child in produced:
                (finished if child.done else children).append(child)
        live = prune_frontier(children, config.top_n)
    exhaustion = None
    results: list[tuple[DecisionProcess, float]] = []
    for path in finished:
        results.append((DecisionProcess(goal, path.steps, path.reward, memory.batch_id, Termination.GOAL_REACHED),
                        path.confidence))
    for path in live:
        env.restore(path.snapshot)
        exhaustion = env.exhaustion_reward()
        results.append((DecisionProcess(goal, path.steps, exhaustion, memory.batch_id, Termination.STEP_LIMIT),
                        path.confidence))
    results.sort(key=lambda pc: _rank_key(*pc))
    return ExplorationResult([p for p, _ in results[:config.top_n]], root, expansions)


def _expand(env: Environment, path: ExplorationPath, history, observation: str,
            options: Sequence[ActionProposal]) -> list[ExplorationPath]:
    produced = []
    for proposal in options:
        env.restore(path.snapshot)
        node = TreeNode(proposal.action, proposal.confidence, path.confidence * proposal.confidence)
        path.node.children.append(node)
        try:
            result = env.step(proposal.action)
        except InvalidAction as exc:
            node.invalid, node.pruned = exc.reason, True
            continue
        confs = path.node_confidences + [proposal.confidence]
        node.path_confidence = path_confidence(confs)
        produced.append(ExplorationPath(
            path.steps + [ProcessStep(observation, proposal.action, history)], confs, env.snapshot(),
            result.done, result.reward if result.done else None, node))
    return produced


# --- comparison and enhancement --------------------------------------------------


def first_divergence(best: Sequence[str], ground: Sequence[str]) -> int:
    for i, (a, b) in enumerate(zip(best, ground), start=1):
        if a != b:
            return i
    return min(len(best), len(ground)) + 1


def find_key_step(backend: Backend, best: DecisionProcess, ground: DecisionProcess) -> int:
    """1-based step of ``best`` from which its suffix is worth remembering."""
    if not best.steps:
        raise EmptyInput("best process has no steps")
    fallback = min(max(first_divergence(best.actions, ground.actions), 1), len(best.steps))
    payload = processes_payload(best.goal, [best.actions, ground.actions], choice_format=False)
    try:
        step = ask(backend, make_request(PromptKind.COMPARE, payload), parse_key_step)
    except FormatViolation:
        return fallback
    return step if 1 <= step <= len(best.steps) else fallback


def _known(reward: float | None) -> float:
    return 0.0 if reward is None else reward


def improves(best: DecisionProcess | None, ground: DecisionProcess) -> bool:
    return best is not None and best.reward is not None and best.reward > _known(ground.reward)


def _new_type_name(observation: str) -> str:
    first = observation.strip().splitlines()[0] if observation.strip() else "observation"
    return first[:60]


def enhance_memory(backend: Backend, memory: BatchMemory, best: DecisionProcess, ground: DecisionProcess,
                   key_step: int) -> int:
    """Add ``best``'s steps from ``key_step`` on; returns how many tuples were new."""
    if not improves(best, ground):
        return 0
    if not 1 <= key_step <= len(best.steps):
        raise ValueError(f"key step {key_step} outside 1..{len(best.steps)}")
    origin = exploration_origin(best.goal, best.actions)
    added = 0
    with memory.lock:
        goal_type = classify_goal(backend, memory, best.goal)
        for tau in range(key_step, len(best.steps) + 1):
            step = best.steps[tau - 1]
            tup = StateActionTuple(best.goal, step.history, step.observation, step.action, Source.EXPLORATION, origin, tau)
            if memory.find(tup) is not None:
                continue
            obs_type = classify_observation(backend, memory, goal_type, step.observation, allow_new=True)
            insert_tuple(memory, tup, goal_type, obs_type, _new_type_name(step.observation))
            added += 1
    return added


@dataclass
class RefinementRecord:
    goal: str
    ground_reward: float | None
    best_reward: float | None
    key_step: int | None
    tuples_added: int
    tree: TreeNode | None = None

    def to_dict(self, with_tree: bool = False) -> dict:
        d = {"goal": self.goal, "ground_reward": self.ground_reward, "best_reward": self.best_reward,
             "key_step": self.key_step, "tuples_added": self.tuples_added}
        if with_tree and self.tree is not None:
            d["tree"] = self.tree.to_dict()
        return d


def refine_goal(backend: Backend, env: Environment, memory: BatchMemory, goal: str, seed: int = 0,
                explorer: ExplorerConfig = ExplorerConfig(), agent: AgentConfig = AgentConfig(),
                apply: bool = True) -> RefinementRecord:
    """Ground episode, exploration, key step and (when strictly better) enhancement."""
    env.reset(goal, seed)
    ground = run_episode(backend, env, memory, agent)
    env.reset(goal, seed)
    result = explore(backend, env, memory, explorer)
    best = result.best
    best_reward = best.reward if best is not None else None
    if not improves(best, ground):
        return RefinementRecord(env.goal, ground.reward, best_reward, None, 0, result.tree)
    key_step = find_key_step(backend, best, ground)
    added = enhance_memory(backend, memory, best, ground, key_step) if apply else 0
    return RefinementRecord(env.goal, ground.reward, best_reward, key_step, added, result.tree)
