"""Deterministic text environments and their expert demonstrators."""

from .base import EnvState, Environment, Snapshot, StepResult
from .experts import generate_expert_trajectories, substream
from .toyhouse import GoalTemplate, HouseGoal, ToyHouse, ToyHouseWorld, parse_house_goal
from .toyshop import Product, ToyShop, ToyShopCatalog, generate_catalog, sample_goal, search_query

__all__ = [
    "EnvState", "Environment", "GoalTemplate", "HouseGoal", "Product", "Snapshot", "StepResult", "ToyHouse",
    "ToyHouseWorld", "ToyShop", "ToyShopCatalog", "generate_catalog", "generate_expert_trajectories",
    "parse_house_goal", "sample_goal", "search_query", "substream",
]
