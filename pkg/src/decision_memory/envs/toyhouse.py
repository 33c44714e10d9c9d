"""A miniature household: receptacles, objects, appliances and six goal kinds.

Worlds are generated from (goal, seed).  Object placement follows per-class
priors over receptacle kinds, so demonstrations carry information about
where things usually are.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from enum import Enum

from ..errors import InvalidAction, UnparseableGoal
from .base import Environment, StepResult


class GoalTemplate(str, Enum):
    PICK = "Pick"
    CLEAN = "Clean"
    HEAT = "Heat"
    COOL = "Cool"
    LOOK = "Look"
    PICK2 = "Pick2"


APPLIANCE_FOR = {GoalTemplate.CLEAN: "sinkbasin", GoalTemplate.HEAT: "microwave", GoalTemplate.COOL: "fridge"}
EFFECT_OF = {"sinkbasin": "clean", "microwave": "heat", "fridge": "cool"}

OPENABLE = frozenset({"cabinet", "drawer", "fridge", "microwave", "safe"})

# kind -> (min count, max count) per room
ROOMS: dict[str, dict[str, tuple[int, int]]] = {
    "kitchen": {
        "cabinet": (2, 4), "countertop": (1, 2), "diningtable": (1, 1), "drawer": (1, 2), "fridge": (1, 1),
        "microwave": (1, 1), "sinkbasin": (1, 1), "garbagecan": (1, 1), "stoveburner": (1, 2),
        "coffeemachine": (1, 1), "shelf": (0, 1),
    },
    "bathroom": {
        "cabinet": (2, 4), "countertop": (1, 1), "sinkbasin": (1, 2), "toilet": (1, 1), "bathtubbasin": (1, 1),
        "garbagecan": (1, 1), "towelholder": (1, 1), "shelf": (1, 2), "drawer": (0, 2),
    },
    "bedroom": {
        "bed": (1, 1), "desk": (1, 1), "sidetable": (1, 2), "dresser": (1, 1), "drawer": (2, 3),
        "shelf": (1, 3), "garbagecan": (1, 1), "safe": (0, 1),
    },
}

# class -> (room, {receptacle kind: weight})
OBJECTS: dict[str, tuple[str, dict[str, int]]] = {
    "apple": ("kitchen", {"countertop": 3, "diningtable": 2, "fridge": 3, "garbagecan": 1}),
    "tomato": ("kitchen", {"countertop": 2, "diningtable": 2, "fridge": 3, "sinkbasin": 1}),
    "potato": ("kitchen", {"countertop": 2, "fridge": 2, "diningtable": 1, "garbagecan": 1}),
    "egg": ("kitchen", {"fridge": 3, "countertop": 1, "sinkbasin": 1}),
    "lettuce": ("kitchen", {"fridge": 3, "countertop": 1, "diningtable": 1}),
    "bread": ("kitchen", {"countertop": 2, "diningtable": 2}),
    "mug": ("kitchen", {"countertop": 2, "cabinet": 2, "coffeemachine": 2, "sinkbasin": 1}),
    "cup": ("kitchen", {"cabinet": 3, "countertop": 1, "diningtable": 1}),
    "plate": ("kitchen", {"cabinet": 3, "countertop": 1, "diningtable": 1}),
    "bowl": ("kitchen", {"cabinet": 2, "diningtable": 2, "countertop": 1}),
    "pan": ("kitchen", {"stoveburner": 3, "cabinet": 1, "countertop": 1}),
    "spatula": ("kitchen", {"drawer": 3, "countertop": 1}),
    "soapbar": ("bathroom", {"countertop": 2, "bathtubbasin": 2, "toilet": 1, "sinkbasin": 1}),
    "soapbottle": ("bathroom", {"countertop": 2, "shelf": 1, "toilet": 1}),
    "cloth": ("bathroom", {"cabinet": 2, "countertop": 1, "bathtubbasin": 1}),
    "toiletpaper": ("bathroom", {"toilet": 2, "cabinet": 2, "shelf": 1}),
    "candle": ("bathroom", {"countertop": 2, "shelf": 1, "toilet": 1}),
    "spraybottle": ("bathroom", {"cabinet": 2, "toilet": 1, "countertop": 1}),
    "book": ("bedroom", {"bed": 2, "desk": 2, "sidetable": 2, "shelf": 1}),
    "cd": ("bedroom", {"desk": 2, "drawer": 2, "shelf": 1}),
    "pen": ("bedroom", {"desk": 2, "drawer": 2, "sidetable": 1}),
    "pencil": ("bedroom", {"desk": 2, "drawer": 1, "sidetable": 1}),
    "cellphone": ("bedroom", {"bed": 2, "desk": 1, "sidetable": 2}),
    "keychain": ("bedroom", {"dresser": 2, "drawer": 2, "sidetable": 1}),
    "alarmclock": ("bedroom", {"desk": 2, "sidetable": 2, "dresser": 1}),
}

TEMPLATE_OBJECTS: dict[GoalTemplate, list[str]] = {
    GoalTemplate.PICK: sorted(OBJECTS),
    GoalTemplate.CLEAN: ["apple", "tomato", "potato", "lettuce", "mug", "cup", "plate", "bowl", "pan", "spatula", "soapbar", "cloth"],
    GoalTemplate.HEAT: ["apple", "tomato", "potato", "egg", "bread", "mug", "cup", "plate"],
    GoalTemplate.COOL: ["apple", "tomato", "potato", "egg", "lettuce", "bread", "mug", "cup", "pan", "bowl"],
    GoalTemplate.LOOK: ["book", "cd", "pen", "pencil", "cellphone", "keychain", "alarmclock"],
    GoalTemplate.PICK2: ["apple", "potato", "tomato", "mug", "cup", "soapbar", "soapbottle", "candle", "toiletpaper", "book", "cd", "pen", "cellphone"],
}

TARGETS: dict[str, list[str]] = {
    "kitchen": ["countertop", "diningtable", "cabinet", "fridge", "shelf", "drawer", "garbagecan", "microwave"],
    "bathroom": ["cabinet", "countertop", "garbagecan", "toilet", "shelf", "drawer", "bathtubbasin"],
    "bedroom": ["shelf", "desk", "sidetable", "drawer", "dresser", "bed", "garbagecan", "safe"],
}

MIN_RECEPTACLES, MAX_RECEPTACLES = 8, 15


@dataclass(frozen=True)
class HouseGoal:
    template: GoalTemplate
    obj: str
    target: str = ""  # receptacle kind; empty for Look

    def render(self) -> str:
        t = self.template
        if t is GoalTemplate.PICK:
            return f"put some {self.obj} in {self.target}"
        if t is GoalTemplate.PICK2:
            return f"put two {self.obj} in {self.target}"
        if t is GoalTemplate.LOOK:
            return f"look at {self.obj} under the desklamp"
        return f"{t.value.lower()} some {self.obj} and put it in {self.target}"

    @property
    def room(self) -> str:
        return OBJECTS[self.obj][0]


_GOAL_PATTERNS = [
    (re.compile(r"^put two (\w+) in (\w+)$"), GoalTemplate.PICK2),
    (re.compile(r"^put (?:some|a) (\w+) in (\w+)$"), GoalTemplate.PICK),
    (re.compile(r"^(clean|heat|cool) some (\w+) and put it in (\w+)$"), None),
    (re.compile(r"^look at (\w+) under the desklamp$"), GoalTemplate.LOOK),
]


def parse_house_goal(goal: str) -> HouseGoal:
    text = " ".join(goal.lower().split()).rstrip(".")
    text = re.sub(r"^your task is to:\s*", "", text)
    for pattern, template in _GOAL_PATTERNS:
        m = pattern.match(text)
        if not m:
            continue
        if template is None:
            template, obj, target = GoalTemplate(m.group(1).title()), m.group(2), m.group(3)
        elif template is GoalTemplate.LOOK:
            obj, target = m.group(1), ""
        else:
            obj, target = m.group(1), m.group(2)
        if obj not in OBJECTS or obj not in TEMPLATE_OBJECTS[template]:
            raise UnparseableGoal(f"unknown or unsupported object {obj!r} in {goal!r}")
        room = OBJECTS[obj][0]
        if target and target not in TARGETS[room]:
            raise UnparseableGoal(f"{target!r} is not a valid target in a {room}")
        if template in APPLIANCE_FOR and APPLIANCE_FOR[template] not in ROOMS[room]:
            raise UnparseableGoal(f"{template.value} needs a {APPLIANCE_FOR[template]}, not available in a {room}")
        return HouseGoal(template, obj, target)
    raise UnparseableGoal(f"goal does not match any household template: {goal!r}")


def sample_house_goal(rng: random.Random) -> HouseGoal:
    template = rng.choice(list(GoalTemplate))
    obj = rng.choice(TEMPLATE_OBJECTS[template])
    if template is GoalTemplate.LOOK:
        return HouseGoal(template, obj)
    room = OBJECTS[obj][0]
    targets = [t for t in TARGETS[room] if t != APPLIANCE_FOR.get(template)]
    return HouseGoal(template, obj, rng.choice(targets))


def _name_key(name: str) -> tuple[str, int]:
    kind, _, num = name.rpartition(" ")
    return kind, int(num)


def kind_of(name: str) -> str:
    return name.rpartition(" ")[0]


def describe_items(items: list[str]) -> str:
    if not items:
        return "nothing"
    phrases = [f"a {it}" for it in items]
    if len(phrases) == 1:
        return phrases[0]
    return ", ".join(phrases[:-1]) + ", and " + phrases[-1]


@dataclass
class ToyHouseWorld:
    room: str
    receptacles: list[str]
    contents: dict[str, list[str]]  # receptacle -> objects, kept sorted
    lamp_at: str = ""

    def openable(self, receptacle: str) -> bool:
        return kind_of(receptacle) in OPENABLE

    def location_of(self, obj: str) -> str | None:
        for receptacle, items in self.contents.items():
            if obj in items:
                return receptacle
        return None

    def instances(self, cls: str) -> list[str]:
        found = [o for items in self.contents.values() for o in items if kind_of(o) == cls]
        return sorted(found, key=_name_key)

    def to_dict(self) -> dict:
        return {"room": self.room, "receptacles": list(self.receptacles),
                "contents": {k: list(v) for k, v in self.contents.items()}, "lamp_at": self.lamp_at}

    @classmethod
    def from_dict(cls, d: dict) -> "ToyHouseWorld":
        return cls(d["room"], list(d["receptacles"]), {k: list(v) for k, v in d["contents"].items()}, d.get("lamp_at", ""))


def generate_world(goal: HouseGoal, seed: int) -> ToyHouseWorld:
    rng = random.Random(f"toyhouse:{seed}:{goal.render()}")
    room = goal.room
    counts = {kind: rng.randint(lo, hi) for kind, (lo, hi) in ROOMS[room].items()}
    for required in filter(None, [goal.target, APPLIANCE_FOR.get(goal.template)]):
        counts[required] = max(1, counts.get(required, 0))
    if goal.template is GoalTemplate.LOOK:
        counts["desk"] = max(1, counts.get("desk", 0))
    while sum(counts.values()) > MAX_RECEPTACLES:
        kind = max(sorted(counts), key=lambda k: counts[k])
        counts[kind] -= 1
    while sum(counts.values()) < MIN_RECEPTACLES:
        counts["shelf"] = counts.get("shelf", 0) + 1
    receptacles = sorted((f"{k} {i}" for k, n in counts.items() for i in range(1, n + 1)), key=_name_key)
    contents: dict[str, list[str]] = {r: [] for r in receptacles}

    def place(cls: str, n: int, avoid: str = "") -> None:
        weights = OBJECTS[cls][1]
        kinds = [k for k in sorted(weights) if counts.get(k, 0) > 0 and k != avoid]
        if not kinds:
            kinds = [k for k in sorted(counts) if counts[k] > 0 and k != avoid]
            w = [1] * len(kinds)
        else:
            w = [weights[k] for k in kinds]
        for i in range(1, n + 1):
            kind = rng.choices(kinds, weights=w)[0]
            contents[f"{kind} {rng.randint(1, counts[kind])}"].append(f"{cls} {i}")

    needed = 2 if goal.template is GoalTemplate.PICK2 else 1
    place(goal.obj, needed + rng.randint(0, 1), avoid=goal.target)
    room_classes = sorted(c for c, (r, _) in OBJECTS.items() if r == room and c != goal.obj)
    for cls in rng.sample(room_classes, min(len(room_classes), rng.randint(3, 6))):
        place(cls, rng.randint(1, 2))
    lamp_at = ""
    if room == "bedroom":
        holders = [r for r in receptacles if kind_of(r) in ("desk", "sidetable")]
        lamp_at = rng.choice(holders)
        contents[lamp_at].append("desklamp 1")
    for items in contents.values():
        items.sort(key=_name_key)
    return ToyHouseWorld(room, receptacles, contents, lamp_at)


@dataclass
class _HouseState:
    goal: str
    seed: int
    parsed: HouseGoal
    world: ToyHouseWorld
    observation: str = ""
    step_count: int = 0
    done: bool = False
    reward: float | None = None
    location: str = ""
    holding: str = ""
    opened: set[str] = field(default_factory=set)
    effects: dict[str, set[str]] = field(default_factory=dict)
    lamp_on: bool = False


_ACTION_PATTERNS = [
    ("goto", re.compile(r"^go to (.+)$")),
    ("open", re.compile(r"^open (.+)$")),
    ("close", re.compile(r"^close (.+)$")),
    ("take", re.compile(r"^take (.+?) from (.+)$")),
    ("put", re.compile(r"^put (.+?) (?:in/on|in|on) (.+)$")),
    ("cool", re.compile(r"^cool (.+?) with (.+)$")),
    ("heat", re.compile(r"^heat (.+?) with (.+)$")),
    ("clean", re.compile(r"^clean (.+?) with (.+)$")),
    ("use", re.compile(r"^use (.+)$")),
    ("examine", re.compile(r"^examine (.+)$")),
    ("look", re.compile(r"^look$")),
    ("inventory", re.compile(r"^inventory$")),
]


class ToyHouse(Environment):
    family = "toyhouse"

    def __init__(self, world: ToyHouseWorld | None = None) -> None:
        super().__init__()
        self._fixed_world = world

    def _initial_state(self, goal: str, seed: int) -> _HouseState:
        parsed = parse_house_goal(goal)
        world = self._fixed_world if self._fixed_world is not None else generate_world(parsed, seed)
        s = _HouseState(goal=parsed.render(), seed=seed, parsed=parsed, world=ToyHouseWorld.from_dict(world.to_dict()))
        s.observation = self.overview(s.world)
        return s

    @staticmethod
    def overview(world: ToyHouseWorld) -> str:
        return ("You are in the middle of a room. Looking quickly around you, you see "
                + describe_items(world.receptacles) + ".")

    def exhaustion_reward(self) -> float | None:
        return 0.0

    @property
    def world(self) -> ToyHouseWorld:
        return self._state.world

    # --- helpers ----------------------------------------------------------

    def _describe(self, s: _HouseState, receptacle: str, verb: str) -> str:
        items = s.world.contents[receptacle]
        if s.world.openable(receptacle):
            if receptacle not in s.opened:
                return f"{verb} The {receptacle} is closed."
            return f"{verb} The {receptacle} is open. In it, you see {describe_items(items)}."
        return f"{verb} On the {receptacle}, you see {describe_items(items)}."

    def _require_receptacle(self, s: _HouseState, action: str, name: str) -> str:
        if name not in s.world.contents:
            raise InvalidAction(action, f"There is no {name} in this room.")
        return name

    def _require_here(self, s: _HouseState, action: str, name: str) -> None:
        self._require_receptacle(s, action, name)
        if s.location != name:
            raise InvalidAction(action, f"You are not at {name}; go to {name} first.")

    def _require_open(self, s: _HouseState, action: str, name: str) -> None:
        if s.world.openable(name) and name not in s.opened:
            raise InvalidAction(action, f"The {name} is closed.")

    def _goal_met(self, s: _HouseState) -> bool:
        g = s.parsed
        if g.template is GoalTemplate.LOOK:
            return s.lamp_on and kind_of(s.holding) == g.obj
        placed = [o for r, items in s.world.contents.items() if kind_of(r) == g.target
                  for o in items if kind_of(o) == g.obj]
        if g.template in APPLIANCE_FOR:
            effect = EFFECT_OF[APPLIANCE_FOR[g.template]]
            placed = [o for o in placed if effect in s.effects.get(o, set())]
        return len(placed) >= (2 if g.template is GoalTemplate.PICK2 else 1)

    # --- contract ---------------------------------------------------------

    def admissible_actions(self) -> list[str]:
        s = self._state
        if s.done:
            return []
        acts = [f"go to {r}" for r in s.world.receptacles if r != s.location]
        here = s.location
        if here:
            if s.world.openable(here):
                acts.append(f"close {here}" if here in s.opened else f"open {here}")
            accessible = not s.world.openable(here) or here in s.opened
            if not s.holding and accessible:
                acts.extend(f"take {o} from {here}" for o in s.world.contents[here] if o != "desklamp 1")
            if s.holding and accessible:
                acts.append(f"put {s.holding} in/on {here}")
            kind = kind_of(here)
            if s.holding and kind in EFFECT_OF:
                acts.append(f"{EFFECT_OF[kind]} {s.holding} with {here}")
            if here == s.world.lamp_at:
                acts.append("use desklamp 1")
        return acts

    def _apply(self, s: _HouseState, action: str) -> StepResult:
        text = " ".join(action.lower().split())
        for verb, pattern in _ACTION_PATTERNS:
            m = pattern.match(text)
            if m:
                obs = getattr(self, f"_do_{verb}")(s, action, *m.groups())
                break
        else:
            raise InvalidAction(action, f"Unknown action {action!r}.")
        if self._goal_met(s):
            return StepResult(obs, True, 1.0)
        return StepResult(obs, False, None)

    def _do_goto(self, s: _HouseState, action: str, name: str) -> str:
        self._require_receptacle(s, action, name)
        s.location = name
        return self._describe(s, name, f"You arrive at {name}.")

    def _do_open(self, s: _HouseState, action: str, name: str) -> str:
        self._require_here(s, action, name)
        if not s.world.openable(name):
            raise InvalidAction(action, f"The {name} cannot be opened.")
        if name in s.opened:
            raise InvalidAction(action, f"The {name} is already open.")
        s.opened.add(name)
        return self._describe(s, name, f"You open the {name}.")

    def _do_close(self, s: _HouseState, action: str, name: str) -> str:
        self._require_here(s, action, name)
        if name not in s.opened:
            raise InvalidAction(action, f"The {name} is not open.")
        s.opened.discard(name)
        return f"You close the {name}."

    def _do_take(self, s: _HouseState, action: str, obj: str, name: str) -> str:
        self._require_here(s, action, name)
        self._require_open(s, action, name)
        if obj not in s.world.contents[name] or obj == "desklamp 1":
            raise InvalidAction(action, f"There is no {obj} you can take in {name}.")
        if s.holding:
            raise InvalidAction(action, f"You are already holding {s.holding}.")
        s.world.contents[name].remove(obj)
        s.holding = obj
        return f"You pick up the {obj} from the {name}."

    def _do_put(self, s: _HouseState, action: str, obj: str, name: str) -> str:
        self._require_here(s, action, name)
        self._require_open(s, action, name)
        if s.holding != obj:
            raise InvalidAction(action, f"You are not holding {obj}.")
        s.world.contents[name].append(obj)
        s.world.contents[name].sort(key=_name_key)
        s.holding = ""
        return f"You put the {obj} in/on the {name}."

    def _effect(self, s: _HouseState, action: str, obj: str, name: str, kind: str) -> str:
        self._require_here(s, action, name)
        if kind_of(name) != kind:
            raise InvalidAction(action, f"You cannot do that with {name}.")
        if s.holding != obj:
            raise InvalidAction(action, f"You are not holding {obj}.")
        effect = EFFECT_OF[kind]
        s.effects.setdefault(obj, set()).add(effect)
        return f"You {effect} the {obj} using the {name}."

    def _do_cool(self, s, action, obj, name):
        return self._effect(s, action, obj, name, "fridge")

    def _do_heat(self, s, action, obj, name):
        return self._effect(s, action, obj, name, "microwave")

    def _do_clean(self, s, action, obj, name):
        return self._effect(s, action, obj, name, "sinkbasin")

    def _do_use(self, s: _HouseState, action: str, obj: str) -> str:
        if obj != "desklamp 1" or not s.world.lamp_at:
            raise InvalidAction(action, f"There is no {obj} you can use here.")
        if s.location != s.world.lamp_at:
            raise InvalidAction(action, "There is no desklamp 1 here.")
        s.lamp_on = True
        return "You turn on the desklamp 1."

    def _do_examine(self, s: _HouseState, action: str, name: str) -> str:
        if name in s.world.contents:
            self._require_here(s, action, name)
            return self._describe(s, name, f"You examine the {name}.")
        if name == s.holding:
            return f"This is a normal {name}."
        raise InvalidAction(action, f"You cannot examine {name} from here.")

    def _do_look(self, s: _HouseState, action: str) -> str:
        if s.location:
            return f"You are facing the {s.location}. Next to it, you see nothing."
        return "You are in the middle of a room. Looking quickly around you, you see nothing."

    def _do_inventory(self, s: _HouseState, action: str) -> str:
        return f"You are carrying: a {s.holding}." if s.holding else "You are not carrying anything."
