"""Prompt kinds, their instruction templates and the payload layouts.

Each request is ``instruction + "\\n\\n" + payload``.  The instruction is the
fixed template for the kind; everything state-dependent lives in the payload.
Payload layouts are plain text with a few line markers so that both a live
model and the rule-based fallback can read them.  Multi-line observations
are always indented by ``INDENT`` so that item headers stay unambiguous.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

INDENT = "  "
RETRY_SUFFIX = "\nStrictly follow the format."


class PromptKind(str, Enum):
    EVALUATION = "Evaluation"
    SUMMARIZATION = "Summarization"
    CLUSTER_GOALS = "ClusterGoals"
    CLUSTER_OBSERVATIONS = "ClusterObservations"
    INDEX_GOAL = "IndexGoal"
    INDEX_OBSERVATION = "IndexObservation"
    ACTION = "Action"
    TREE_EXPLORATION = "TreeExploration"
    COMPARE = "Compare"
    # Not part of the original prompt table; see FINAL_CHOICE template.
    FINAL_CHOICE = "FinalChoice"


INVENTED_KINDS = frozenset({PromptKind.FINAL_CHOICE})

TEMPLATES: dict[PromptKind, str] = {
    PromptKind.EVALUATION: (
        "I will give you a task goal and agent past action process.\n"
        "You should partition the goal into some subgoal and judge the past actions "
        "whether complete these subgoals.\n"
        "The desired format is:\n"
        "subgoal 1:goal  - complete or in complete\n"
        "etc.\n"
        "Do not give me explanation."
    ),
    PromptKind.SUMMARIZATION: (
        "I will give you the past process and you should summarize the past process.\n"
        "The desired format must be:\n"
        "Summary:\n"
        "Do not give me explanation."
    ),
    PromptKind.CLUSTER_GOALS: (
        "I will give you a few numbered task goals.\n"
        "You need to help me classify these goals into some types. The number of each "
        "category should be almost average. The category must be high-level type.\n"
        "The desired format is:\n"
        "High-level Type1: type name [number]\n"
        "High-level Type2: type name [number]\n"
        "High-level Type3: type name [number]\n"
        "etc."
    ),
    PromptKind.CLUSTER_OBSERVATIONS: (
        "I will give you a few numbered observations.\n"
        "You need to help me classify these observations into some types. The number of "
        "each category should be almost average. The category must be high-level type.\n"
        "The desired format is:\n"
        "High-level Type1: type name [number]\n"
        "High-level Type2: type name [number]\n"
        "High-level Type3: type name [number]\n"
        "etc."
    ),
    PromptKind.INDEX_GOAL: (
        "I will give you some numbered goal types and examples of this type.\n"
        "You should judge the new goal belongs to which type.\n"
        "The desired format is:\n"
        "[Type number]: reason\n"
        "Do not give me other information."
    ),
    PromptKind.INDEX_OBSERVATION: (
        "I will give you some observation numbered types and examples of this type.\n"
        "You should judge the new observation belongs to which type.\n"
        "The desired format is:\n"
        "[Type number]: reason\n"
        "Do not give me other information."
    ),
    PromptKind.ACTION: (
        "I give some numbered examples and a new observation.\n"
        "You should imitate the actions in the example and give me the next action."
    ),
    PromptKind.TREE_EXPLORATION: (
        "I give some numbered examples and a new observation.\n"
        "You should imitate the actions in the example and give me some possible next "
        "actions and the confidence of each action. All confidence should sum equal 1."
    ),
    PromptKind.COMPARE: (
        "I will give you two decision process. Each process have some numbered step.\n"
        "The first process is better than the second, Can you tell me the first number "
        "that two process different.\n"
        "The desired format is:\n"
        "Number: Reason.\n"
        "Do not give any other information and strictly follow the format."
    ),
    PromptKind.FINAL_CHOICE: (
        "I will give you a task goal and some numbered decision processes.\n"
        "You should choose the process that best accomplishes the goal.\n"
        "The desired format is:\n"
        "[Process number]: reason\n"
        "Do not give me other information."
    ),
}

DEFAULT_BUDGETS: dict[PromptKind, int] = {
    PromptKind.EVALUATION: 128,
    PromptKind.SUMMARIZATION: 128,
    PromptKind.CLUSTER_GOALS: 512,
    PromptKind.CLUSTER_OBSERVATIONS: 512,
    PromptKind.INDEX_GOAL: 64,
    PromptKind.INDEX_OBSERVATION: 64,
    PromptKind.ACTION: 64,
    PromptKind.TREE_EXPLORATION: 256,
    PromptKind.COMPARE: 64,
    PromptKind.FINAL_CHOICE: 64,
}


@dataclass(frozen=True)
class LlmRequest:
    kind: PromptKind
    instruction: str
    payload: str
    budget: int = 256

    def __post_init__(self) -> None:
        if self.budget < 1:
            raise ValueError("budget must be a positive token count")

    @property
    def text(self) -> str:
        return f"{self.instruction}\n\n{self.payload}"

    def with_retry_suffix(self) -> "LlmRequest":
        return LlmRequest(self.kind, self.instruction, self.payload + RETRY_SUFFIX, self.budget)


def make_request(kind: PromptKind, payload: str, budget: int | None = None) -> LlmRequest:
    return LlmRequest(kind, TEMPLATES[kind], payload, budget or DEFAULT_BUDGETS[kind])


# --- payload layout -------------------------------------------------------


def indent_block(text: str) -> str:
    return "\n".join(INDENT + line for line in text.splitlines() or [""])


def one_line(text: str) -> str:
    return " ".join(text.split())


def past_process_payload(goal: str, prefix: Sequence[tuple[str, str]]) -> str:
    lines = [f"Goal: {one_line(goal)}", "Past process:"]
    if not prefix:
        lines.append("none")
    for i, (observation, action) in enumerate(prefix, start=1):
        lines.append(f"Observation {i}:")
        lines.append(indent_block(observation))
        lines.append(f"Action {i}: {one_line(action)}")
    return "\n".join(lines)


def numbered_items_payload(header: str, items: Sequence[str], preamble: str = "") -> str:
    lines = [preamble] if preamble else []
    lines.append(header)
    for i, item in enumerate(items, start=1):
        first, *rest = item.splitlines() or [""]
        lines.append(f"{i}. {first}")
        lines.extend(INDENT + line for line in rest)
    return "\n".join(lines)


def types_payload(
    types: Sequence[tuple[int, str, Sequence[str]]], new_label: str, new_item: str
) -> str:
    """Layout for the two index (classification) prompts."""
    lines = ["Types:"]
    for type_id, name, examples in types:
        lines.append(f"[{type_id}] {one_line(name)}")
        for example in examples:
            lines.append(f"{INDENT}- {one_line(example)}")
    lines.append(f"{new_label}:")
    lines.append(indent_block(new_item))
    return "\n".join(lines)


def render_subgoals(subgoals: Iterable[tuple[str, str]]) -> str:
    parts = [f"Subgoal {i}: {text} - {status}" for i, (text, status) in enumerate(subgoals, 1)]
    return " ".join(parts) if parts else "none"


def state_block(goal: str, summary: str, evaluation: str, observation: str) -> list[str]:
    return [
        f"Goal: {one_line(goal)}",
        f"Past: {one_line(summary)}",
        f"Evaluation: {evaluation}",
        "The interface is:",
        indent_block(observation),
    ]


def examples_block(examples: Sequence[tuple[str, str, str, str, str]]) -> str:
    lines = ["Examples:"]
    for i, (ex_goal, ex_summary, ex_eval, ex_obs, ex_action) in enumerate(examples, start=1):
        block = state_block(ex_goal, ex_summary, ex_eval, ex_obs)
        block[0] = f"{i}. {block[0]}"
        lines.extend(block)
        lines.append(f"Action: {one_line(ex_action)}")
    return "\n".join(lines)


def decision_payload(
    examples: Sequence[tuple[str, str, str, str, str]],
    goal: str,
    summary: str,
    evaluation: str,
    observation: str,
    rejected: Sequence[tuple[str, str]] = (),
    proposal_format: bool = False,
) -> str:
    """Shared payload of the Action and TreeExploration prompts.

    ``examples`` holds (goal, summary, evaluation, observation, action).
    """
    lines = [examples_block(examples), "Current state:"]
    lines.extend(state_block(goal, summary, evaluation, observation))
    if rejected:
        lines.append("Rejected actions:")
        for action, reason in rejected:
            lines.append(f"- {one_line(action)}: {one_line(reason)}")
    if proposal_format:
        lines.append("The desired format is one action per line: <action> | <confidence>")
    lines.append("Action:")
    return "\n".join(lines)


def processes_payload(goal: str, processes: Sequence[Sequence[str]], choice_format: bool) -> str:
    lines = [f"Goal: {one_line(goal)}"]
    for p, actions in enumerate(processes, start=1):
        lines.append(f"Process {p}:")
        lines.extend(f"{i}. {one_line(a)}" for i, a in enumerate(actions, start=1))
    if choice_format:
        lines.append("Answer: [Process number]: reason")
    return "\n".join(lines)
