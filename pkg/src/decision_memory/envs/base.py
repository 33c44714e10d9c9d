"""Environment contract shared by the shop and household simulators."""

from __future__ import annotations

import copy
import itertools
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any

from ..errors import StaleHandle

_RUN_IDS = itertools.count(1)


@dataclass(frozen=True)
class StepResult:
    observation: str
    done: bool
    reward: float | None


@dataclass(frozen=True)
class Snapshot:
    """Opaque, immutable environment state handle."""

    run_id: int
    state: Any


@dataclass(frozen=True)
class EnvState:
    goal: str
    observation: str
    step_count: int
    done: bool
    reward: float | None
    rng_seed: int


class Environment(ABC):
    """Deterministic text environment with snapshot/restore.

    ``step`` raises ``InvalidAction`` for rejected actions and leaves the
    state untouched.  ``restore`` only accepts handles taken since the last
    ``reset`` of this instance.
    """

    family: str = ""

    def __init__(self) -> None:
        self._run_id = 0
        self._state: Any = None

    # subclasses keep everything mutable inside self._state
    @abstractmethod
    def _initial_state(self, goal: str, seed: int) -> Any: ...

    @abstractmethod
    def _apply(self, state: Any, action: str) -> StepResult: ...

    @abstractmethod
    def admissible_actions(self) -> list[str]: ...

    @abstractmethod
    def exhaustion_reward(self) -> float | None:
        """Reward reported when the agent gives up before a terminal step."""

    def reset(self, goal: str, seed: int = 0) -> str:
        self._state = self._initial_state(goal, seed)
        self._run_id = next(_RUN_IDS)
        return self._state.observation

    def step(self, action: str) -> StepResult:
        if self._state is None:
            raise RuntimeError("reset() must be called before step()")
        if self._state.done:
            raise RuntimeError("episode already finished")
        trial = copy.deepcopy(self._state)
        result = self._apply(trial, action.strip())  # raises InvalidAction before mutating self
        trial.step_count += 1
        trial.observation = result.observation
        trial.done = result.done
        trial.reward = result.reward if result.done else None
        self._state = trial
        return result

    def snapshot(self) -> Snapshot:
        return Snapshot(self._run_id, copy.deepcopy(self._state))

    def restore(self, handle: Snapshot) -> "Environment":
        if not isinstance(handle, Snapshot) or handle.run_id != self._run_id or self._run_id == 0:
            raise StaleHandle("snapshot does not belong to the current run of this environment")
        self._state = copy.deepcopy(handle.state)
        return self

    @property
    def state(self) -> EnvState:
        s = self._state
        return EnvState(s.goal, s.observation, s.step_count, s.done, s.reward, s.seed)

    @property
    def goal(self) -> str:
        return self._state.goal

    @property
    def observation(self) -> str:
        return self._state.observation

    @property
    def done(self) -> bool:
        return self._state.done
