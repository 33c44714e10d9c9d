"""Scripted expert policies that produce successful demonstrations.

Both experts read the simulator's ground truth, so the demonstrations are
optimal unless a detour is injected on purpose (``noise``).
"""

from __future__ import annotations

import random
from typing import Sequence

from ..memory import Trajectory
from .toyhouse import (APPLIANCE_FOR, GoalTemplate, HouseGoal, ToyHouse, ToyHouseWorld, generate_world,
                       kind_of, sample_house_goal)
from .toyshop import BUY_NOW, NEXT, PREV, ToyShop, ToyShopCatalog, generate_catalog, sample_goal, search_query


def substream(seed: int | str, name: str) -> random.Random:
    """Independent, named random stream derived from one run seed."""
    return random.Random(f"{seed}:{name}")


# --- household --------------------------------------------------------------


def _fetch(world: ToyHouseWorld, obj: str, here: str, opened: set[str]) -> list[str]:
    where = world.location_of(obj)
    acts = [] if where == here else [f"go to {where}"]
    if world.openable(where) and where not in opened:
        acts.append(f"open {where}")
        opened.add(where)
    return acts + [f"take {obj} from {where}"]


def _deliver(world: ToyHouseWorld, obj: str, target: str, here: str, opened: set[str]) -> list[str]:
    acts = [] if target == here else [f"go to {target}"]
    if world.openable(target) and target not in opened:
        acts.append(f"open {target}")
        opened.add(target)
    return acts + [f"put {obj} in/on {target}"]


def _pick_instances(world: ToyHouseWorld, cls: str, count: int) -> list[str]:
    # closed containers cost an extra step, so prefer open surfaces
    ranked = sorted(world.instances(cls), key=lambda o: (world.openable(world.location_of(o)), o))
    return ranked[:count]


def house_expert_plan(goal: HouseGoal, world: ToyHouseWorld) -> list[str]:
    """Shortest scripted action sequence that satisfies ``goal`` in ``world``."""
    targets = sorted((r for r in world.receptacles if kind_of(r) == goal.target),
                     key=lambda r: (world.openable(r), r))
    target = targets[0] if targets else ""
    opened: set[str] = set()
    if goal.template is GoalTemplate.PICK2:
        first, second = _pick_instances(world, goal.obj, 2)
        plan = _fetch(world, first, "", opened)
        plan += _deliver(world, first, target, world.location_of(first), opened)
        plan += _fetch(world, second, target, opened)
        return plan + _deliver(world, second, target, world.location_of(second), opened)
    (obj,) = _pick_instances(world, goal.obj, 1)
    where = world.location_of(obj)
    plan = _fetch(world, obj, "", opened)
    if goal.template is GoalTemplate.LOOK:
        if where != world.lamp_at:
            plan.append(f"go to {world.lamp_at}")
        return plan + ["use desklamp 1"]
    here = where
    if goal.template in APPLIANCE_FOR:
        appliance = f"{APPLIANCE_FOR[goal.template]} 1"
        verb = goal.template.value.lower()
        plan += [f"go to {appliance}", f"{verb} {obj} with {appliance}"]
        here = appliance
    return plan + _deliver(world, obj, target, here, opened)


def _house_detour(goal: HouseGoal, world: ToyHouseWorld, rng: random.Random) -> str:
    wrong = [r for r in world.receptacles
             if kind_of(r) != goal.target and not any(kind_of(o) == goal.obj for o in world.contents[r])]
    return f"go to {rng.choice(wrong)}"


def run_actions(env, goal: str, seed: int, actions: Sequence[str]) -> tuple[list[tuple[str, str]], float | None]:
    obs = env.reset(goal, seed)
    steps, reward = [], None
    for act in actions:
        steps.append((obs, act))
        result = env.step(act)
        obs, reward = result.observation, result.reward
        if result.done:
            break
    return steps, reward


def house_trajectories(count: int, seed: int, noise: float = 0.0,
                       templates: Sequence[GoalTemplate] | None = None) -> list[Trajectory]:
    goals_rng = substream(seed, "expert-goals")
    noise_rng = substream(seed, "expert-noise")
    out = []
    for i in range(count):
        goal = sample_house_goal(goals_rng)
        if templates:
            goal = _resample(goal, goals_rng, templates)
        world_seed = goals_rng.randrange(2**31)
        world = generate_world(goal, world_seed)
        plan = house_expert_plan(goal, world)
        if noise_rng.random() < noise:
            plan.insert(0, _house_detour(goal, world, noise_rng))
        steps, reward = run_actions(ToyHouse(), goal.render(), world_seed, plan)
        if reward != 1.0:
            raise AssertionError(f"expert failed on {goal.render()!r} (seed {world_seed})")
        out.append(Trajectory(f"toyhouse-{seed}-{i:05d}", goal.render(), tuple(steps), world_seed))
    return out


def _resample(goal: HouseGoal, rng: random.Random, templates: Sequence[GoalTemplate]) -> HouseGoal:
    while goal.template not in templates:
        goal = sample_house_goal(rng)
    return goal


# --- shop ---------------------------------------------------------------------


def shop_expert_plan(catalog: ToyShopCatalog, goal: str) -> list[str]:
    """Search, page forward to the first result that can fully satisfy the goal, select options, buy."""
    req = catalog.parse_goal(goal)
    query = search_query(goal)
    results = catalog.search(query)
    selection = dict(req.options)
    best_code, best_score = results[0], -1.0
    for code in results:
        p = catalog.get(code)
        offered = {g: {v.lower(): v for v in values} for g, values in p.options}
        chosen = {g: offered[g][v.lower()] for g, v in selection.items() if g in offered and v.lower() in offered[g]}
        score = catalog.score(p, chosen, req)
        if score > best_score + 1e-12:
            best_code, best_score = code, score
        if best_score >= 1.0:
            break
    position = results.index(best_code)
    plan = [f"search[{query}]"]
    plan += [f"click[{NEXT}]"] * (position // catalog.page_size)
    plan.append(f"click[{best_code}]")
    product = catalog.get(best_code)
    for group, values in product.options:
        want = selection.get(group, "").lower()
        match = next((v for v in values if v.lower() == want), None)
        if match is not None:
            plan.append(f"click[{match}]")
    return plan + [f"click[{BUY_NOW}]"]


def _shop_detour(catalog: ToyShopCatalog, plan: list[str], rng: random.Random) -> list[str]:
    """Open a wrong product on the target's result page, then go back."""
    code_step = next(i for i, a in enumerate(plan) if a.startswith("click[") and catalog.get(a[6:-1]))
    target = plan[code_step][6:-1]
    query = plan[0][len("search["):-1]
    results = catalog.search(query)
    page = results.index(target) // catalog.page_size
    siblings = [c for c in results[page * catalog.page_size:(page + 1) * catalog.page_size] if c != target]
    if not siblings:
        return plan
    wrong = rng.choice(siblings)
    return plan[:code_step] + [f"click[{wrong}]", f"click[{PREV}]"] + plan[code_step:]


def shop_trajectories(catalog: ToyShopCatalog, count: int, seed: int, noise: float = 0.0) -> list[Trajectory]:
    goals_rng = substream(seed, "expert-goals")
    noise_rng = substream(seed, "expert-noise")
    out = []
    for i in range(count):
        goal, _ = sample_goal(catalog, goals_rng)
        plan = shop_expert_plan(catalog, goal)
        if noise_rng.random() < noise:
            plan = _shop_detour(catalog, plan, noise_rng)
        steps, reward = run_actions(ToyShop(catalog), goal, 0, plan)
        if reward != 1.0:
            raise AssertionError(f"expert failed on {goal!r}")
        out.append(Trajectory(f"toyshop-{seed}-{i:05d}", goal, tuple(steps), 0))
    return out


def default_catalog(seed: int) -> ToyShopCatalog:
    return generate_catalog(substream(seed, "catalog"))


def generate_expert_trajectories(family: str, count: int, seed: int, noise: float = 0.0,
                                 catalog: ToyShopCatalog | None = None) -> list[Trajectory]:
    if count < 1:
        raise ValueError("count must be at least 1")
    if not 0.0 <= noise <= 1.0:
        raise ValueError("noise must lie in [0, 1]")
    if family == ToyHouse.family:
        return house_trajectories(count, seed, noise)
    if family == ToyShop.family:
        return shop_trajectories(catalog or default_catalog(seed), count, seed, noise)
    raise ValueError(f"unknown environment family {family!r}")
