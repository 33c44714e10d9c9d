"""Response grammars: strict parsers and their inverse renderers.

Every parser either returns a value or raises ``FormatViolation`` (or one of
its subclasses); none of them raise anything else on arbitrary text.
"""

from __future__ import annotations

import math
import re
from collections.abc import Sequence
from decimal import Decimal
from enum import Enum

from ..errors import DuplicateMember, FormatViolation, NoValidProposal


class Status(str, Enum):
    COMPLETE = "Complete"
    INCOMPLETE = "Incomplete"


SUMMARY_MARKER = "Summary:"
RENORMALIZE_TOLERANCE = 1e-9

_SUBGOAL_RE = re.compile(r"subgoal\s*(\d+)\s*:", re.IGNORECASE)
_STATUS_RE = re.compile(r"^(?P<text>.*?)\s*-\s*(?P<status>in\s*complete|complete)\s*[.;,]?\s*$", re.IGNORECASE | re.DOTALL)
_CLUSTER_RE = re.compile(r"^\s*high-level\s*type\s*(\d+)\s*:\s*(?P<rest>.*)$", re.IGNORECASE)
_BRACKET_LIST_RE = re.compile(r"\[\s*(\d+(?:\s*,\s*\d+)*)\s*\]")
_CLASSIFY_RE = re.compile(r"\[\s*(?:type\s*|process\s*)?(\d+)\s*\]", re.IGNORECASE)
_PROPOSAL_RE = re.compile(r"^(?P<action>\S.*) \| (?P<conf>\d+(?:\.\d*)?|\.\d+)\s*$")
_KEY_STEP_RE = re.compile(r"^\s*(?:number\s*)?(\d+)\s*:", re.IGNORECASE)


def _require_text(raw: object) -> str:
    if not isinstance(raw, str) or not raw.strip():
        raise FormatViolation("empty response")
    return raw


# --- Summarization --------------------------------------------------------


def parse_summary(raw: str) -> str:
    raw = _require_text(raw)
    pos = raw.find(SUMMARY_MARKER)
    if pos < 0:
        raise FormatViolation("missing 'Summary:' marker")
    text = raw[pos + len(SUMMARY_MARKER):].strip()
    if not text:
        raise FormatViolation("empty summary")
    return text


def render_summary(summary: str) -> str:
    return f"{SUMMARY_MARKER} {summary}"


# --- Evaluation -----------------------------------------------------------


def parse_evaluation(raw: str) -> list[tuple[str, Status]]:
    raw = _require_text(raw)
    markers = list(_SUBGOAL_RE.finditer(raw))
    if not markers:
        raise FormatViolation("no 'Subgoal k:' entries")
    result = []
    for here, nxt in zip(markers, markers[1:] + [None]):
        segment = raw[here.end(): nxt.start() if nxt else len(raw)]
        m = _STATUS_RE.match(segment.strip())
        if not m:
            raise FormatViolation(f"subgoal {here.group(1)} has no complete/incomplete status")
        token = re.sub(r"\s+", "", m.group("status")).lower()
        status = Status.INCOMPLETE if token == "incomplete" else Status.COMPLETE
        result.append((" ".join(m.group("text").split()), status))
    return result


def render_evaluation(subgoals: Sequence[tuple[str, Status]]) -> str:
    return "\n".join(
        f"Subgoal {i}: {text} - {Status(status).value}" for i, (text, status) in enumerate(subgoals, 1)
    )


# --- Cluster (goals and observations) -------------------------------------


def parse_cluster(raw: str) -> list[tuple[str, list[int]]]:
    raw = _require_text(raw)
    result: list[tuple[str, list[int]]] = []
    seen: dict[int, str] = {}
    for line in raw.splitlines():
        m = _CLUSTER_RE.match(line)
        if not m:
            continue
        rest = m.group("rest")
        first = rest.find("[")
        name = rest[:first].strip(" \t:-") if first >= 0 else ""
        if not name:
            raise FormatViolation(f"type without a name: {line!r}")
        ids: list[int] = []
        for group in _BRACKET_LIST_RE.findall(rest[first:]):
            ids.extend(int(x) for x in group.split(","))
        if not ids:
            raise FormatViolation(f"type {name!r} has no bracketed members")
        for member in ids:
            if member < 1:
                raise FormatViolation(f"member ids must be positive, got {member}")
            if member in seen:
                raise DuplicateMember(f"member {member} in both {seen[member]!r} and {name!r}")
            seen[member] = name
        result.append((name, ids))
    if not result:
        raise FormatViolation("no 'High-level TypeK:' lines")
    return result


def render_cluster(types: Sequence[tuple[str, Sequence[int]]]) -> str:
    return "\n".join(
        f"High-level Type{k}: {name} " + "".join(f"[{i}]" for i in ids)
        for k, (name, ids) in enumerate(types, 1)
    )


# --- Index (classification) ----------------------------------------------


def parse_classification(raw: str) -> int:
    raw = _require_text(raw)
    m = _CLASSIFY_RE.search(raw)
    if not m:
        raise FormatViolation("no bracketed type number")
    value = int(m.group(1))
    if value < 1:
        raise FormatViolation("type numbers start at 1")
    return value


def render_classification(type_id: int, reason: str = "closest match") -> str:
    return f"[{type_id}]: {reason}"


# --- Tree exploration proposals ------------------------------------------


def parse_proposal_lines(raw: str) -> list[tuple[str, float]]:
    """Raw ``<action> | <confidence>`` pairs, before merging or renormalizing."""
    raw = _require_text(raw)
    pairs = []
    for line in raw.splitlines():
        m = _PROPOSAL_RE.match(line.strip())
        if m:
            pairs.append((m.group("action").strip(), float(m.group("conf"))))
    if not pairs:
        raise FormatViolation("no '<action> | <confidence>' lines")
    return pairs


def needs_renormalization(pairs: Sequence[tuple[str, float]]) -> bool:
    return abs(math.fsum(c for _, c in pairs) - 1.0) > RENORMALIZE_TOLERANCE


def normalize_proposals(pairs: Sequence[tuple[str, float]]) -> list[tuple[str, float]]:
    merged: dict[str, float] = {}
    for action, conf in pairs:
        if not math.isfinite(conf) or conf <= 0:
            continue
        merged[action] = merged.get(action, 0.0) + conf
    if not merged:
        raise NoValidProposal("every proposal has a non-positive confidence")
    items = list(merged.items())
    total = math.fsum(c for _, c in items)
    if abs(total - 1.0) > RENORMALIZE_TOLERANCE:
        items = [(a, c / total) for a, c in items]
    return items


def parse_proposals(raw: str) -> list[tuple[str, float]]:
    return normalize_proposals(parse_proposal_lines(raw))


def format_confidence(value: float) -> str:
    # Positional decimal with the shortest repr digits, so it round-trips exactly.
    return format(Decimal(repr(float(value))), "f")


def render_proposals(proposals: Sequence[tuple[str, float]]) -> str:
    return "\n".join(f"{action} | {format_confidence(conf)}" for action, conf in proposals)


# --- Compare (key step) ---------------------------------------------------


def parse_key_step(raw: str) -> int:
    raw = _require_text(raw)
    m = _KEY_STEP_RE.match(raw)
    if not m:
        raise FormatViolation("expected 'Number: Reason.'")
    value = int(m.group(1))
    if value < 1:
        raise FormatViolation("step numbers start at 1")
    return value


def render_key_step(step: int, reason: str = "The processes differ here.") -> str:
    return f"{step}: {reason}"
