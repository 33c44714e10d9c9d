"""Deterministic stand-in for the LLM, used as the scripted backend's fallback.

``respond(kind, payload)`` is a pure function.  It reads the payload layouts
produced by ``prompts`` and answers in the grammar each kind expects.  The
household and shop rules know the two bundled simulators' observation texts;
anything else gets generic token-overlap answers.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field

from ..errors import FormatViolation, UnparseableGoal
from ..textutil import content_tokens, jaccard, overlap
from .grammar import (Status, parse_evaluation, render_classification, render_cluster, render_evaluation,
                      render_key_step, render_proposals, render_summary)
from .prompts import INDENT, PromptKind

# --- payload readers ----------------------------------------------------------

_ITEM_RE = re.compile(r"^(\d+)\. (.*)$")


def _dedent(line: str) -> str:
    return line[len(INDENT):] if line.startswith(INDENT) else line


def read_past_process(payload: str) -> tuple[str, list[tuple[str, str]]]:
    goal, steps, obs_lines = "", [], []
    for line in payload.splitlines():
        if line.startswith("Goal: ") and not goal:
            goal = line[6:]
        elif re.match(r"^Observation \d+:$", line):
            obs_lines = []
        elif re.match(r"^Action \d+: ", line):
            steps.append(("\n".join(obs_lines), line.split(": ", 1)[1]))
            obs_lines = []
        elif line.startswith(INDENT):
            obs_lines.append(_dedent(line))
    return goal, steps


def read_numbered_items(payload: str) -> tuple[list[str], list[str]]:
    """(preamble lines, items) from a numbered-items payload."""
    preamble, items = [], []
    for line in payload.splitlines():
        m = _ITEM_RE.match(line)
        if m and int(m.group(1)) == len(items) + 1:
            items.append(m.group(2))
        elif items and line.startswith(INDENT):
            items[-1] += "\n" + _dedent(line)
        elif not items:
            preamble.append(line)
    return preamble, items


def read_types(payload: str) -> tuple[list[tuple[int, str, list[str]]], str]:
    types: list[tuple[int, str, list[str]]] = []
    new_item: list[str] = []
    in_new = False
    for line in payload.splitlines():
        m = re.match(r"^\[(\d+)\] (.*)$", line)
        if in_new:
            if line.startswith(INDENT):
                new_item.append(_dedent(line))
        elif m:
            types.append((int(m.group(1)), m.group(2), []))
        elif line.startswith(INDENT + "- ") and types:
            types[-1][2].append(line[len(INDENT) + 2:])
        elif re.match(r"^New [a-z]+:$", line):
            in_new = True
    return types, "\n".join(new_item)


@dataclass
class DecisionState:
    goal: str = ""
    past: str = ""
    evaluation: list[tuple[str, Status]] = field(default_factory=list)
    observation: str = ""
    action: str = ""


def _parse_eval(text: str) -> list[tuple[str, Status]]:
    if not text.strip() or text.strip() == "none":
        return []
    try:
        return parse_evaluation(text)
    except FormatViolation:
        return []


def read_decision(payload: str) -> tuple[list[DecisionState], DecisionState, list[str], bool]:
    """(examples, current state, rejected actions, proposal format requested)."""
    examples: list[DecisionState] = []
    current = DecisionState()
    target: DecisionState | None = None
    rejected: list[str] = []
    proposal = False
    section = ""
    obs_lines: list[str] = []

    def flush() -> None:
        if target is not None and obs_lines:
            target.observation = "\n".join(obs_lines)

    for line in payload.splitlines():
        if section == "obs" and line.startswith(INDENT):
            obs_lines.append(_dedent(line))
            continue
        if section == "obs":
            flush()
            section = ""
        m = re.match(r"^(\d+)\. Goal: (.*)$", line)
        if m and section != "rejected":
            target = DecisionState(goal=m.group(2))
            examples.append(target)
        elif line == "Current state:":
            target = current
        elif line.startswith("Goal: ") and target is current:
            current.goal = line[6:]
        elif line.startswith("Past: ") and target is not None:
            target.past = line[6:]
        elif line.startswith("Evaluation: ") and target is not None:
            target.evaluation = _parse_eval(line[12:])
        elif line == "The interface is:":
            section, obs_lines = "obs", []
        elif line == "Rejected actions:":
            section = "rejected"
        elif section == "rejected" and line.startswith("- "):
            rejected.append(line[2:].split(": ", 1)[0].strip())
        elif line.startswith("The desired format is one action per line"):
            proposal = True
        elif line.startswith("Action: ") and target is not None and target is not current:
            target.action = line[8:]
    flush()
    return examples, current, rejected, proposal


def read_processes(payload: str) -> tuple[str, list[list[str]]]:
    goal, processes = "", []
    for line in payload.splitlines():
        if line.startswith("Goal: ") and not goal:
            goal = line[6:]
        elif re.match(r"^Process \d+:$", line):
            processes.append([])
        elif processes and _ITEM_RE.match(line):
            processes[-1].append(_ITEM_RE.match(line).group(2))
    return goal, processes


# --- domain helpers ------------------------------------------------------------


def _house_goal(goal: str):
    from ..envs.toyhouse import parse_house_goal

    try:
        return parse_house_goal(goal)
    except UnparseableGoal:
        return None


def _is_shop_goal(goal: str) -> bool:
    return "price lower than" in goal.lower()


def _kind(name: str) -> str:
    return name.rpartition(" ")[0]


_TEMPLATE_NAMES = {"Pick": "Pick and place", "Clean": "Clean and place", "Heat": "Heat and place",
                   "Cool": "Cool and place", "Look": "Examine under light", "Pick2": "Pick two and place"}


def goal_key(goal: str) -> str:
    """High-level type name a careful annotator would give this goal."""
    hg = _house_goal(goal)
    if hg is not None:
        return _TEMPLATE_NAMES[hg.template.value]
    if _is_shop_goal(goal):
        from ..envs.toyshop import CATEGORIES

        head = re.split(r" with |,? and price lower than", goal.lower())[0]
        head = head.split(",")[-1].strip()
        for cat in sorted(CATEGORIES, key=lambda c: (-len(c), c)):
            if head.endswith(cat):
                return cat
        return head.split()[-1] if head.split() else "product"
    return "General"


def observation_key(observation: str) -> str:
    text = observation.strip()
    first = text.splitlines()[0] if text else ""
    if text.startswith("You are in the middle of a room"):
        return "room overview"
    if text.startswith("You arrive at"):
        return "closed receptacle" if text.endswith("is closed.") else "receptacle contents"
    if text.startswith("You open the"):
        return "opened receptacle"
    if text.startswith("You pick up the"):
        return "holding object"
    if re.match(r"^You (cool|heat|clean) the", text):
        return "appliance result"
    if text.startswith("You put the"):
        return "placed object"
    if text.startswith("You turn on"):
        return "lamp on"
    lines = text.splitlines()
    if "[Search]" in lines or first.startswith("Instruction:"):
        return "search page"
    if any(line.startswith("Page ") and "Total results" in line for line in lines):
        return "results page"
    if "[Buy Now]" in lines:
        return "product page with selections" if "You have clicked" in text else "product page"
    if text.startswith("Thank you for shopping"):
        return "purchase confirmation"
    return "other"


# --- summarization and evaluation ----------------------------------------------

_CLAUSES = [
    (re.compile(r"^go to (.+)$"), "went to {0}"),
    (re.compile(r"^open (.+)$"), "opened {0}"),
    (re.compile(r"^close (.+)$"), "closed {0}"),
    (re.compile(r"^take (.+) from (.+)$"), "took {0} from {1}"),
    (re.compile(r"^put (.+) (?:in/on|in|on) (.+)$"), "put {0} in/on {1}"),
    (re.compile(r"^cool (.+) with (.+)$"), "cooled {0} with {1}"),
    (re.compile(r"^heat (.+) with (.+)$"), "heated {0} with {1}"),
    (re.compile(r"^clean (.+) with (.+)$"), "cleaned {0} with {1}"),
    (re.compile(r"^use (.+)$"), "used {0}"),
    (re.compile(r"^examine (.+)$"), "examined {0}"),
    (re.compile(r"^look$"), "looked"),
    (re.compile(r"^inventory$"), "checked inventory"),
    (re.compile(r"^search\[(.*)\]$", re.IGNORECASE), "searched for {0}"),
    (re.compile(r"^click\[(.*)\]$", re.IGNORECASE), "clicked {0}"),
]


def _clause(action: str) -> str:
    text = " ".join(action.split())
    for pattern, template in _CLAUSES:
        m = pattern.match(text)
        if m:
            return template.format(*m.groups())
    return f"did {text}"


def _join(clauses: list[str]) -> str:
    if len(clauses) == 1:
        return clauses[0]
    return ", ".join(clauses[:-1]) + " and " + clauses[-1]


_SEE_RE = re.compile(r"you see (.*)\.$")


def _listed(observation: str) -> list[str]:
    m = _SEE_RE.search(observation.strip())
    if not m:
        return []
    return re.findall(r"\ba ([a-z]+ \d+)", m.group(1))


def summarize(goal: str, steps: list[tuple[str, str]]) -> str:
    if not steps:
        return "No past actions."
    parts = []
    overview = next((o for o, _ in steps if o.startswith("You are in the middle of a room")), "")
    if overview:
        counts = Counter(_kind(r) for r in _listed(overview))
        parts.append("The room has " + ", ".join(f"{k} x{n}" for k, n in sorted(counts.items())) + ".")
    hg = _house_goal(goal)
    clauses = []
    for i, (_, action) in enumerate(steps):
        clause = _clause(action)
        after = steps[i + 1][0] if i + 1 < len(steps) else ""
        listed = _listed(after)
        if "desklamp 1" in listed:
            clause += " and saw desklamp 1"
        if hg is not None and not after.startswith("You are in the middle"):
            # goal-object sightings let a later step return for a second instance
            clause += "".join(f" and saw {o}" for o in listed if _kind(o) == hg.obj and o != "desklamp 1")
        clauses.append(clause)
    text = _join(clauses)
    parts.append(text[0].upper() + text[1:] + ".")
    return " ".join(parts)


def _house_subgoals(hg, actions: list[str]) -> list[tuple[str, bool]]:
    obj, target = hg.obj, hg.target
    took = [m.group(1) for a in actions if (m := re.match(rf"^take ({obj} \d+) from ", a))]
    placed = [m.group(1) for a in actions if (m := re.match(rf"^put ({obj} \d+) (?:in/on|in|on) {target} \d+$", a))]
    t = hg.template.value
    if t == "Pick2":
        return [(f"take the first {obj}", len(set(took)) >= 1), (f"put the first {obj} in {target}", len(set(placed)) >= 1),
                (f"take the second {obj}", len(set(took)) >= 2), (f"put the second {obj} in {target}", len(set(placed)) >= 2)]
    subgoals = [(f"take {obj} from somewhere", bool(took))]
    if t in ("Clean", "Heat", "Cool"):
        verb = t.lower()
        subgoals.append((f"{verb} {obj}", any(re.match(rf"^{verb} {obj} \d+ with ", a) for a in actions)))
    if t == "Look":
        subgoals.append(("use the desklamp", any(a.startswith("use desklamp") for a in actions)))
    else:
        subgoals.append((f"put {obj} in {target}", bool(placed)))
    return subgoals


_NAV = {"back to search", "< prev", "next >", "buy now"}


def _goal_options(goal: str) -> list[tuple[str, str]]:
    body = re.split(r",? and price lower than", goal.lower())[0]
    if " with " not in body:
        return []
    pairs = []
    for chunk in re.split(r",\s*(?:and\s+)?", body.split(" with ", 1)[1]):
        group, sep, value = chunk.partition(":")
        if sep:
            pairs.append((group.strip(), value.strip()))
    return pairs


def _shop_subgoals(goal: str, steps: list[tuple[str, str]]) -> list[tuple[str, bool]]:
    searched = any(a.lower().startswith("search[") for _, a in steps)
    clicked_since_product: list[str] = []
    for obs, action in steps:
        m = re.match(r"^click\[(.*)\]$", action.strip(), re.IGNORECASE)
        if not m:
            continue
        label = m.group(1).strip().lower()
        if observation_key(obs) == "results page" and label not in _NAV:
            clicked_since_product = []
        elif label in ("< prev", "back to search"):
            clicked_since_product = []
        else:
            clicked_since_product.append(label)
    bought = any(a.strip().lower() == "click[buy now]" for _, a in steps)
    subgoals = [("search for the product", searched)]
    options = _goal_options(goal)
    if options:
        subgoals.append(("select the product options", all(v in clicked_since_product for _, v in options)))
    subgoals.append(("buy the product", bought))
    return subgoals


def evaluate(goal: str, steps: list[tuple[str, str]]) -> list[tuple[str, Status]]:
    actions = [" ".join(a.lower().split()) for _, a in steps]
    hg = _house_goal(goal)
    if hg is not None:
        flags = _house_subgoals(hg, actions)
    elif _is_shop_goal(goal):
        flags = _shop_subgoals(goal, steps)
    else:
        flags = [(" ".join(goal.split()), False)]
    return [(text, Status.COMPLETE if done else Status.INCOMPLETE) for text, done in flags]


# --- clustering and classification ----------------------------------------------


def cluster(items: list[str], key) -> str:
    groups: dict[str, list[int]] = {}
    for i, item in enumerate(items, start=1):
        groups.setdefault(key(item), []).append(i)
    return render_cluster(list(groups.items()))


def classify(types: list[tuple[int, str, list[str]]], item: str, key) -> int:
    wanted = key(item).lower()
    for type_id, name, _ in types:
        if name.strip().lower() == wanted:
            return type_id
    for type_id, _, examples in types:
        if any(key(ex).lower() == wanted for ex in examples):
            return type_id
    q = content_tokens(item)
    best, best_score = types[0][0], -1
    for type_id, name, examples in sorted(types):
        score = len(q & content_tokens(" ".join([name, *examples])))
        if score > best_score:
            best, best_score = type_id, score
    return best


# --- household decisions ----------------------------------------------------------


@dataclass
class _HouseView:
    goal: object
    inventory: dict[str, int] | None
    visited: list[str]
    holding: str
    placed: list[str]
    location: str
    visible: list[str]
    closed_here: bool
    listing: bool  # current observation shows the location's contents
    sightings: dict[str, str]  # object instance -> receptacle it was last seen in
    taken: list[str]
    known_text: str  # past summary plus current observation


def _house_view(hg, state: DecisionState) -> _HouseView:
    past = state.past
    inventory = None
    m = re.search(r"The room has ([^.]*)\.", past)
    if m:
        inventory = {k: int(n) for k, n in re.findall(r"([a-z]+) x(\d+)", m.group(1))}
    visited = re.findall(r"went to ([a-z]+ \d+)", past)
    events = re.findall(r"(took|put) ([a-z]+ \d+)", past)
    sightings: dict[str, str] = {}
    for where, seen in re.findall(r"(?:went to|opened) ([a-z]+ \d+)((?: and saw [a-z]+ \d+)+)", past):
        for obj in re.findall(r"saw ([a-z]+ \d+)", seen):
            sightings[obj] = where
    taken = [obj for verb, obj in events if verb == "took"]
    holding = ""
    placed = []
    for verb, obj in events:
        if verb == "took":
            holding = obj
        else:
            holding = "" if holding == obj else holding
            placed.append(obj)
    obs = state.observation.strip()
    location = ""
    for pattern in (r"^You arrive at ([a-z]+ \d+)\.", r"^You open the ([a-z]+ \d+)\.", r"from the ([a-z]+ \d+)\.$",
                    r"in/on the ([a-z]+ \d+)\.$", r"using the ([a-z]+ \d+)\.$"):
        lm = re.search(pattern, obs)
        if lm:
            location = lm.group(1)
            break
    if not location and visited:
        location = visited[-1]
    if obs.startswith("You pick up the"):
        holding = re.match(r"^You pick up the ([a-z]+ \d+)", obs).group(1)
    listing = bool(_SEE_RE.search(obs)) and not obs.startswith("You are in the middle")
    if not inventory and obs.startswith("You are in the middle of a room"):
        inventory = dict(Counter(_kind(r) for r in _listed(obs)))
    return _HouseView(hg, inventory, visited, holding, placed, location,
                      _listed(obs) if listing else [], obs.endswith("is closed."), listing, sightings, taken,
                      past + "\n" + obs)


def _stage(evaluation: list[tuple[str, Status]]) -> str:
    for text, status in evaluation:
        if status is Status.INCOMPLETE:
            return text.split()[0].lower()
    return "done" if evaluation else ""


def _instances(view: _HouseView, kind: str) -> list[str]:
    if view.inventory is not None:
        return [f"{kind} {i}" for i in range(1, view.inventory.get(kind, 0) + 1)]
    # the overview fell out of the summary window: only name instances known to exist
    known = sorted({int(n) for n in re.findall(rf"\b{kind} (\d+)", view.known_text)} | {1})
    return [f"{kind} {i}" for i in known]


def _house_fallback_kinds(view: _HouseView) -> list[str]:
    from ..envs.toyhouse import ROOMS

    if view.inventory is not None:
        return sorted(view.inventory)
    room = next((r for r, kinds in ROOMS.items() if view.goal.room == r), "kitchen")
    return sorted(k for k, (lo, _) in ROOMS[room].items() if lo > 0)


def _example_kinds(view: _HouseView, examples: list[DecisionState], stage: str) -> list[str]:
    """Receptacle kinds the examples went to at this stage, most supported first."""
    weights: dict[str, float] = {}
    order: list[str] = []
    for ex in examples:
        m = re.match(r"^go to ([a-z]+) \d+$", ex.action.strip())
        if not m:
            continue
        kind = m.group(1)
        ex_goal = _house_goal(ex.goal)
        weight = 1.0
        if ex_goal is not None and ex_goal.obj == view.goal.obj:
            weight += 2.0
        if _stage(ex.evaluation) == stage:
            weight += 1.0
        if kind not in weights:
            order.append(kind)
        weights[kind] = weights.get(kind, 0.0) + weight
    return sorted(order, key=lambda k: (-weights[k], order.index(k)))


def _house_candidates(state: DecisionState, examples: list[DecisionState], rejected: list[str]) -> list[str]:
    """Ordered candidate actions for the household; the first is the rule's choice."""
    hg = _house_goal(state.goal)
    view = _house_view(hg, state)
    stage = _stage(state.evaluation) or _stage(evaluate(state.goal, []))
    obj, loc = hg.obj, view.location
    if stage in ("take",) or (stage in ("clean", "heat", "cool", "put", "use") and not view.holding):
        wanted = [o for o in view.visible if _kind(o) == obj and o not in view.placed]
        if wanted and not view.holding:
            return [f"take {wanted[0]} from {loc}"]
        if view.closed_here and loc:
            return [f"open {loc}"]
        sighted = [where for o, where in view.sightings.items()
                   if _kind(o) == obj and o not in view.placed and o not in view.taken and where != loc]
        if sighted and not view.holding:
            return [f"go to {sighted[0]}"]
        kinds = _example_kinds(view, examples, "take")
        kinds += [k for k in _house_fallback_kinds(view) if k not in kinds]
        out = []
        for kind in kinds:
            if kind == hg.target:
                continue
            for r in _instances(view, kind):
                if r not in view.visited and r != loc:
                    out.append(f"go to {r}")
        return out
    if stage in ("clean", "heat", "cool"):
        from ..envs.toyhouse import APPLIANCE_FOR, GoalTemplate

        appliance = APPLIANCE_FOR[GoalTemplate(stage.title())]
        if _kind(loc) == appliance:
            return [f"{stage} {view.holding} with {loc}"]
        return [f"go to {r}" for r in _instances(view, appliance)]
    if stage == "put":
        if _kind(loc) == hg.target:
            if view.closed_here:
                return [f"open {loc}"]
            return [f"put {view.holding} in/on {loc}"]
        return [f"go to {r}" for r in _instances(view, hg.target)]
    if stage == "use":
        if "desklamp 1" in view.visible:
            return ["use desklamp 1"]
        seen = re.findall(r"went to ([a-z]+ \d+) and saw desklamp 1", state.past)
        if seen and seen[-1] != loc:
            return [f"go to {seen[-1]}"]
        out = [] if view.listing else ["use desklamp 1"]
        kinds = _example_kinds(view, [ex for ex in examples if _stage(ex.evaluation) == "use"], "use")
        kinds += [k for k in ("desk", "sidetable") if k not in kinds]
        for kind in kinds:
            out += [f"go to {r}" for r in _instances(view, kind) if r != loc or not view.listing]
        return out
    return ["look"]


# --- shop decisions ---------------------------------------------------------------


def _buttons(observation: str) -> list[str]:
    return [line[1:-1] for line in observation.splitlines() if re.fullmatch(r"\[[^\]]+\]", line)]


def _result_products(observation: str) -> list[tuple[str, str]]:
    lines = observation.splitlines()
    out = []
    for i, line in enumerate(lines):
        if re.fullmatch(r"\[[^\]]+\]", line) and line[1:-1].lower() not in _NAV and i + 1 < len(lines):
            out.append((line[1:-1], lines[i + 1]))
    return out


def _option_groups(observation: str) -> list[tuple[str, list[str]]]:
    groups = []
    for line in observation.splitlines():
        m = re.fullmatch(r"([a-z][a-z ]*?) ((?:\[[^\]]+\] ?)+)", line)
        if m:
            groups.append((m.group(1), re.findall(r"\[([^\]]+)\]", m.group(2))))
    return groups


def _selected(observation: str) -> list[str]:
    return re.findall(r"^You have clicked (.+)\.$", observation, flags=re.MULTILINE)


def _click_label(action: str) -> str | None:
    m = re.fullmatch(r"click\[(.*)\]", action.strip(), flags=re.IGNORECASE)
    return m.group(1) if m else None


def _shop_candidates(state: DecisionState, examples: list[DecisionState], rejected: list[str]) -> list[tuple[str, float]]:
    """Weighted candidate actions for the shop, best first."""
    from ..envs.toyshop import search_query

    goal, obs = state.goal, state.observation
    page = observation_key(obs)
    same_goal = [ex for ex in examples if " ".join(ex.goal.split()).lower() == " ".join(goal.split()).lower()]
    shown = [ex.action.strip() for ex in examples]
    if page == "search page":
        return [(f"search[{search_query(goal)}]", 1.0)]
    if page == "results page":
        visited = {m.lower() for m in re.findall(r"clicked ([^,.]+?)(?:,| and |\.|$)", state.past)}
        products = [(code, title) for code, title in _result_products(obs) if code.lower() not in visited]
        remembered = {_click_label(ex.action) for ex in same_goal}
        scored = []
        for code, title in products:
            weight = 1.0 + overlap(title, goal) + 2.0 * shown.count(f"click[{code}]")
            if code in remembered:
                weight += 100.0
            scored.append((f"click[{code}]", weight))
        if "Next >" in _buttons(obs):
            weight = 0.5 + (100.0 if "Next >" in remembered else 0.0)
            scored.append(("click[Next >]", weight))
        return sorted(scored, key=lambda p: -p[1])
    if page.startswith("product page"):
        chosen = {v.lower() for v in _selected(obs)}
        wanted = dict(_goal_options(goal))
        for group, values in _option_groups(obs):
            if any(v.lower() in chosen for v in values):
                continue
            remembered = {(_click_label(ex.action) or "").lower() for ex in same_goal}
            target = wanted.get(group, goal)
            scored = []
            for v in values:
                weight = 1.0 + 3.0 * overlap(v, target) + 2.0 * shown.count(f"click[{v}]")
                if v.lower() in remembered:
                    weight += 100.0
                scored.append((f"click[{v}]", weight))
            return sorted(scored, key=lambda p: -p[1])
        return [("click[Buy Now]", 1.0)]
    return [("click[Back to Search]", 1.0)]


# --- generic decisions ---------------------------------------------------------------


def _rank_examples(state: DecisionState, examples: list[DecisionState]) -> list[DecisionState]:
    stage = [s for _, s in state.evaluation]

    def score(ex: DecisionState) -> float:
        match = 1.0 if [s for _, s in ex.evaluation] == stage else 0.0
        return (2.0 * match + jaccard(ex.observation, state.observation) + 0.5 * jaccard(ex.goal, state.goal)
                + 0.25 * jaccard(ex.past, state.past))

    return sorted(examples, key=score, reverse=True)


def _candidates(state: DecisionState, examples: list[DecisionState], rejected: list[str]) -> list[tuple[str, float]]:
    ranked = _rank_examples(state, examples)
    if _house_goal(state.goal) is not None:
        acts = _house_candidates(state, ranked, rejected)
        weighted = [(a, 1.0 / (i + 1)) for i, a in enumerate(acts)]
    elif _is_shop_goal(state.goal):
        weighted = _shop_candidates(state, ranked, rejected)
    else:
        counts = Counter(ex.action.strip() for ex in ranked if ex.action.strip())
        weighted = [(a, float(n)) for a, n in counts.most_common()]
    lowered = {r.lower() for r in rejected}
    kept = [(a, w) for a, w in weighted if a.lower() not in lowered]
    return kept or [("look", 1.0)]


def decide(payload: str) -> str:
    examples, state, rejected, proposal = read_decision(payload)
    candidates = _candidates(state, examples, rejected)
    if not proposal:
        return candidates[0][0]
    merged: dict[str, float] = {}
    for action, weight in candidates[:4]:
        merged[action] = merged.get(action, 0.0) + weight
    total = sum(merged.values())
    return render_proposals([(a, w / total) for a, w in merged.items()])


# --- process comparison --------------------------------------------------------------


def first_divergence(best: list[str], ground: list[str]) -> int:
    for i, (a, b) in enumerate(zip(best, ground), start=1):
        if a != b:
            return i
    return min(len(best), len(ground)) + 1


def compare(payload: str) -> str:
    _, processes = read_processes(payload)
    if len(processes) < 2:
        return render_key_step(1)
    step = first_divergence(processes[0], processes[1])
    return render_key_step(step, "The processes first take different actions here.")


def final_choice(payload: str) -> str:
    goal, processes = read_processes(payload)
    if not processes:
        return render_classification(1, "only option")
    scores = [overlap(" ".join(p), goal) for p in processes]
    best = max(range(len(processes)), key=lambda i: (scores[i], -i))
    return render_classification(best + 1, "it covers the goal best")


# --- dispatch ---------------------------------------------------------------------


def _summarization(payload: str) -> str:
    goal, steps = read_past_process(payload)
    return render_summary(summarize(goal, steps))


def _evaluation(payload: str) -> str:
    goal, steps = read_past_process(payload)
    return render_evaluation(evaluate(goal, steps))


def _cluster_goals(payload: str) -> str:
    _, items = read_numbered_items(payload)
    return cluster(items, goal_key)


def _cluster_observations(payload: str) -> str:
    _, items = read_numbered_items(payload)
    return cluster(items, observation_key)


def _index_goal(payload: str) -> str:
    types, item = read_types(payload)
    if not types:
        return render_classification(1)
    return render_classification(classify(types, item, goal_key), "closest goal type")


def _index_observation(payload: str) -> str:
    types, item = read_types(payload)
    if not types:
        return render_classification(1)
    return render_classification(classify(types, item, observation_key), "closest observation type")


_HANDLERS = {
    PromptKind.SUMMARIZATION: _summarization,
    PromptKind.EVALUATION: _evaluation,
    PromptKind.CLUSTER_GOALS: _cluster_goals,
    PromptKind.CLUSTER_OBSERVATIONS: _cluster_observations,
    PromptKind.INDEX_GOAL: _index_goal,
    PromptKind.INDEX_OBSERVATION: _index_observation,
    PromptKind.ACTION: decide,
    PromptKind.TREE_EXPLORATION: decide,
    PromptKind.COMPARE: compare,
    PromptKind.FINAL_CHOICE: final_choice,
}


def respond(kind: PromptKind, payload: str) -> str:
    return _HANDLERS[PromptKind(kind)](payload)
