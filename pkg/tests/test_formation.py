from __future__ import annotations

import pytest

from decision_memory.errors import EmptyInput
from decision_memory.formation import (
    OTHER,
    FormationConfig,
    build_batch_memory,
    cluster_goals,
    cluster_observations,
    form_memory,
    summarize_history,
    tuples_from_trajectory,
)
from decision_memory.llm.backends import Fallback, FixtureEntry, ScriptedBackend
from decision_memory.llm.grammar import Status
from decision_memory.llm.prompts import RETRY_SUFFIX, PromptKind
from decision_memory.memory import NO_PAST, Source, Trajectory, save_memory

APPLE_GOAL = "cool some apple and put it in diningtable"
ROOM = "You are in the middle of a room. Looking quickly around you, you see a cabinet 1, a fridge 1, and a sinkbasin 1."
SHORTS_GOAL = ("i need long lasting moisture wicking loose fit men's shorts with elastic waistband, color: black, "
               "and size: 4x-large polyester cotton, and price lower than 50.00 dollars")
SHORTS_QUERY = ("search[long lasting moisture wicking loose fit men's shorts with elastic waistband black 4x-large "
                "polyester cotton]")


def test_empty_prefix_gives_sentinel_and_incomplete_subgoals(rule_backend):
    history = summarize_history(rule_backend, APPLE_GOAL, [])
    assert history.summary == NO_PAST
    assert history.subgoals and all(status is Status.INCOMPLETE for _, status in history.subgoals)


def test_summary_from_scripted_fixture():
    backend = ScriptedBackend(
        [FixtureEntry(PromptKind.SUMMARIZATION, "Action 2: go to sinkbasin 1", "Summary: Looked and went to sink basin 1.")],
        Fallback.RULE_BASED)
    history = summarize_history(backend, APPLE_GOAL, [(ROOM, "look"), ("Nothing happens.", "go to sinkbasin 1")])
    assert history.summary == "Looked and went to sink basin 1."


def test_rule_based_summary_has_past_tense_clauses(rule_backend):
    history = summarize_history(rule_backend, APPLE_GOAL, [(ROOM, "look"), ("Nothing happens.", "go to sinkbasin 1")])
    assert history.summary.endswith("Looked and went to sinkbasin 1.")


def test_cooling_marks_the_cool_subgoal_complete(rule_backend):
    prefix = [(ROOM, "go to countertop 1"), ("On the countertop 1, you see a apple 1.", "take apple 1 from countertop 1"),
              ("You pick up the apple 1 from the countertop 1.", "go to fridge 1"),
              ("You arrive at fridge 1. The fridge 1 is closed.", "cool apple 1 with fridge 1")]
    status = dict(summarize_history(rule_backend, APPLE_GOAL, prefix).subgoals)
    assert status["cool apple"] is Status.COMPLETE
    assert status["put apple in diningtable"] is Status.INCOMPLETE


def test_summary_truncates_to_recent_steps():
    backend = ScriptedBackend([
        FixtureEntry(PromptKind.EVALUATION, "", "Subgoal 1: a - Incomplete"),
        FixtureEntry(PromptKind.SUMMARIZATION, "Action 1: act 8", "Summary: recent only"),
        FixtureEntry(PromptKind.SUMMARIZATION, "", "Summary: everything"),
    ])
    prefix = [(f"obs {i}", f"act {i}") for i in range(10)]
    assert summarize_history(backend, "g", prefix, max_steps=2).summary == "recent only"


def test_tuples_from_trajectory(rule_backend):
    traj = Trajectory("s1", SHORTS_GOAL, ((f"Instruction: {SHORTS_GOAL}\n[Search]", SHORTS_QUERY),
                                          ("[Back to Search]\nPage 1 (Total results: 1)", "click[B09QQP3356]"),
                                          ("[Back to Search]\n[< Prev]\ncolor [black]", "click[black]"),
                                          ("[Back to Search]\n[< Prev]\nYou have clicked black.", "click[Buy Now]"),
                                          ("x", "click[Buy Now]")))
    tuples = tuples_from_trajectory(rule_backend, traj)
    assert [t.step for t in tuples] == [1, 2, 3, 4, 5]
    assert tuples[0].action == SHORTS_QUERY and tuples[0].history.summary == NO_PAST
    assert tuples[1].history.summary != NO_PAST and "search" in tuples[1].history.summary.lower()
    assert all(t.source is Source.DEMONSTRATION and t.origin == "s1" for t in tuples)


def test_histories_only_see_the_strict_prefix(rule_backend):
    seen = []

    class Recorder:
        backend_id = "recorder"

        def complete(self, request):
            if request.kind is PromptKind.SUMMARIZATION:
                seen.append(request.payload)
            return rule_backend.complete(request)

    traj = Trajectory("h", APPLE_GOAL, ((ROOM, "go to fridge 1"), ("OBS-TWO", "open fridge 1"), ("OBS-THREE", "look")))
    tuples_from_trajectory(Recorder(), traj)
    assert len(seen) == 2
    assert "OBS-TWO" not in seen[0] and "OBS-THREE" not in seen[1] and "OBS-TWO" in seen[1]


def test_cluster_goals_from_fixture():
    backend = ScriptedBackend([FixtureEntry(PromptKind.CLUSTER_GOALS, "", "High-level Type1: Footwear [1][3]\nHigh-level Type2: Clothing [2][4]")])
    clusters = cluster_goals(backend, ["steel toe shoes", "lounge pants", "running shoes", "shorts"])
    assert [(c.name, c.members) for c in clusters] == [("Footwear", (1, 3)), ("Clothing", (2, 4))]


def test_single_goal_forms_single_type(rule_backend):
    clusters = cluster_goals(rule_backend, ["put some apple in fridge"])
    assert len(clusters) == 1 and clusters[0].members == (1,)


def test_uncovered_goal_lands_in_other_after_one_reprompt():
    partial = "High-level Type1: Footwear [1][3]\nHigh-level Type2: Clothing [2]"
    backend = ScriptedBackend([FixtureEntry(PromptKind.CLUSTER_GOALS, "", partial)])
    clusters = cluster_goals(backend, ["a", "b", "c", "d"])
    assert clusters[-1].name == OTHER and clusters[-1].members == (4,)


def test_reprompt_answer_is_used_when_complete():
    backend = ScriptedBackend([
        FixtureEntry(PromptKind.CLUSTER_GOALS, RETRY_SUFFIX, "High-level Type1: All [1][2]"),
        FixtureEntry(PromptKind.CLUSTER_GOALS, "", "High-level Type1: Half [1]"),
    ])
    assert [(c.name, c.members) for c in cluster_goals(backend, ["a", "b"])] == [("All", (1, 2))]


def test_out_of_range_members_are_dropped():
    backend = ScriptedBackend([FixtureEntry(PromptKind.CLUSTER_GOALS, "", "High-level Type1: A [1][9]\nHigh-level Type2: B [2]")])
    assert [(c.name, c.members) for c in cluster_goals(backend, ["a", "b"])] == [("A", (1,)), ("B", (2,))]


def test_cluster_observations_by_room():
    fixture = "High-level Type1: kitchen room [1]\nHigh-level Type2: bathroom [2]\nHigh-level Type3: bedroom [3]"
    backend = ScriptedBackend([FixtureEntry(PromptKind.CLUSTER_OBSERVATIONS, "Goal type: Pick", fixture)])
    clusters = cluster_observations(backend, "Pick", ["fridge 1 ...", "bathtubbasin 1 ...", "bed 1 ..."])
    assert [c.name for c in clusters] == ["kitchen room", "bathroom", "bedroom"]
    assert sum(len(c.members) for c in clusters) == 3


def test_empty_inputs(rule_backend):
    with pytest.raises(EmptyInput):
        cluster_goals(rule_backend, [])
    with pytest.raises(EmptyInput):
        build_batch_memory(rule_backend, [])


def test_build_batch_memory_conserves_tuples(rule_backend, house_trajectories):
    a, b = house_trajectories[0], house_trajectories[1]
    memory = build_batch_memory(rule_backend, [a, b])
    assert len(memory) == a.length + b.length
    assert sorted(i for ids in memory.index.cells.values() for i in ids) == sorted(memory.tuples)
    assert memory.index.cell_size == {g.id: sum(len(ids) for (k, _), ids in memory.index.cells.items() if k == g.id)
                                      for g in memory.index.goal_types}


def test_formation_is_deterministic_and_worker_independent(tmp_path, rule_backend, house_trajectories):
    one = form_memory(rule_backend, house_trajectories[:20], FormationConfig(batch_size=10), seed=1)
    two = form_memory(rule_backend, house_trajectories[:20], FormationConfig(batch_size=10, workers=4), seed=1)
    save_memory(one, tmp_path / "a")
    save_memory(two, tmp_path / "b")
    for name in ("batch_001.jsonl", "batch_002.index.json", "memory.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_form_memory_partitions(rule_backend, house_memory_set, house_trajectories):
    assert [b.batch_id for b in house_memory_set.batches] == [1, 2]
    assert house_memory_set.batches[0].capacity.batch_count == 2
    assert house_memory_set.tuple_count == sum(t.length for t in house_trajectories)


def test_config_validation():
    with pytest.raises(ValueError):
        FormationConfig(batch_size=0)
    with pytest.raises(ValueError):
        FormationConfig(retrieval_k=0)
