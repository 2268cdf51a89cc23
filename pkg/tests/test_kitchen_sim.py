"""Kitchen simulator: seeding, visibility, blocking, conservation and the BFS oracle."""
import itertools

import numpy as np
import pytest

from conftest import lit

from bcr.domain import TruthValue
from bcr.errors import UnknownTask
from bcr.kitchen_sim import ERROR_STRINGS, TASK_NAMES, KitchenSim, load_task, reset


def all_actions(sim):
    actions = []
    for schema in sim.domain.schemas.values():
        pools = [sorted(o for o, c in sim.instances.items() if c in cats) for _, cats in schema.parameters]
        actions += [" ".join((schema.name,) + combo) for combo in itertools.product(*pools)]
    return actions


def seed_with(task, item, receptacles):
    for seed in range(50):
        sim, _ = reset(task, seed)
        if sim.state.holder[item] in receptacles:
            return sim
    pytest.fail(f"no seed places {item} in {receptacles}")


class TestReset:
    def test_same_seed_same_episode(self):
        a, obs_a = reset("toast", 3)
        b, obs_b = reset("toast", 3)
        assert a.state.key() == b.state.key()
        assert obs_a == obs_b
        actions = ["walk_to_object counter_1", "scanroom bread_1 kitchen", "grab bread_1", "walk_to_object toaster_1"]
        assert [a.execute(x).to_dict() for x in actions] == [b.execute(x).to_dict() for x in actions]

    def test_placements_are_task_legal(self):
        seen = set()
        for seed in range(20):
            sim, _ = reset("mug", seed)
            assert sim.state.holder["mug_1"] in ("cabinet_2", "counter_1", "sink_1")
            seen.add(sim.state.holder["mug_1"])
        assert len(seen) > 1

    def test_start_state(self):
        sim, obs = reset("apple", 0)
        assert sim.state.room == "kitchen" and sim.state.held is None
        assert sim.visible_set() == set()
        assert {i.id for i in obs.instances} == set(sim.fixtures)
        assert lit("handsFree", "character") in obs.literals

    def test_unknown_task(self):
        with pytest.raises(UnknownTask):
            reset("laundry", 0)
        with pytest.raises(UnknownTask):
            load_task("laundry")


class TestStepping:
    def test_unknown_action_is_an_error_not_an_exception(self):
        sim, _ = reset("apple", 0)
        result = sim.execute("teleport apple_1")
        assert result.outcome == "Error"
        assert result.message.startswith("I cannot do 'teleport apple_1'")
        assert sim.state.step_count == 1

    def test_blocked_reports_declared_condition(self):
        sim, _ = reset("apple", 0)
        result = sim.execute("grab apple_1")
        assert result.blocked
        assert result.condition.name == "not-visible"
        assert result.condition.resolutions == (lit("visible", "apple_1"),)
        assert result.message == "The action 'grab apple_1' failed: apple_1 is not visible."

    def test_walk_to_unlocated_object_is_blocked(self):
        sim, _ = reset("apple", 0)
        result = sim.execute("walk_to_object apple_1")
        assert result.condition.name == "not-located"

    def test_scanroom_locates_and_reveals(self):
        sim = seed_with("apple", "apple_1", ("counter_1", "diningtable_1"))
        result = sim.execute("scanroom apple_1 kitchen")
        assert result.success
        assert [i.id for i in result.observation.instances] == ["apple_1"]
        assert lit("visible", "apple_1") in result.observation.literals
        # seen from afar, still out of reach
        assert sim.execute("grab apple_1").condition.name == "not-near"

    def test_scanroom_cannot_see_into_closed_cabinet(self):
        sim = seed_with("apple", "apple_1", ("cabinet_1",))
        assert sim.execute("scanroom apple_1 kitchen").observation.instances == ()
        assert "apple_1" not in sim.state.located

    def test_moves_only_between_fridge_stations(self):
        sim, _ = reset("apple", 0)
        result = sim.execute("moveforward")
        assert result.outcome == "Error"
        assert result.error == ERROR_STRINGS["cannot_move"].format(action="moveforward")

    def test_open_fridge_door_hides_contents_from_side_station(self):
        sim, _ = reset("apple", 0)
        sim.state.holder["apple_1"] = "fridge_1"
        assert sim.execute("walk_to_object fridge_1").success
        assert sim.state.station == "st_fridge_side"
        assert sim.execute("open fridge_1").success
        assert not sim.truth(lit("visible", "apple_1"))

        result = sim.execute("movebackward")
        assert result.success and sim.state.station == "st_fridge_front"
        assert sim.truth(lit("visible", "apple_1"))
        assert "apple_1" in {i.id for i in result.observation.instances}
        assert sim.execute("grab apple_1").success
        assert sim.state.held == "apple_1"

    def test_hands_full_blocks_opening(self):
        sim = seed_with("apple", "apple_1", ("counter_1",))
        sim.execute("walk_to_object counter_1")
        assert sim.execute("grab apple_1").success
        sim.execute("walk_to_object fridge_1")
        assert sim.execute("open fridge_1").condition.name == "hands-full"
        assert sim.execute("putin apple_1 fridge_1").condition.name == "closed"

    def test_preview_does_not_touch_state(self):
        sim, _ = reset("apple", 0)
        before = sim.state.key()
        result = sim.preview("walk_to_object fridge_1", [lit("near", "fridge_1")])
        assert result.success and result.checks_hold
        assert sim.state.key() == before
        assert sim.state.step_count == 0


@pytest.mark.parametrize("task", TASK_NAMES)
def test_random_walk_invariants(task):
    sim, _ = reset(task, 11)
    actions = all_actions(sim)
    rng = np.random.default_rng(11)
    for step in range(300):
        sim.execute(actions[int(rng.integers(len(actions)))])
        state = sim.state
        assert state.step_count == step + 1
        for item in sim.items:
            # every object is held or sits in exactly one place
            assert (state.holder[item] is None) == (state.held == item)
        assert sim.visible_set() <= state.located
        assert state.room in ("kitchen", "hallway")


@pytest.mark.parametrize("task", TASK_NAMES)
def test_observations_agree_with_ground_truth(task):
    sim, observation = reset(task, 23)
    actions = all_actions(sim)
    rng = np.random.default_rng(23)
    for step in range(250):
        for literal in observation.literals:
            assert sim.truth(literal), f"step {step}: {literal}"
        shown = {l.arguments[0] for l in observation.literals
                 if l.predicate == "visible" and l.value is TruthValue.TRUE}
        assert shown == sim.visible_set()
        assert {i.id for i in observation.instances} <= sim.state.located
        observation = sim.execute(actions[int(rng.integers(len(actions)))]).observation


class TestOracle:
    def test_apple_from_table_or_counter_within_six(self):
        sim = seed_with("apple", "apple_1", ("counter_1", "diningtable_1"))
        plan = sim.oracle_min_plan()
        assert 0 < len(plan) <= 6
        assert plan[-1] == "putin apple_1 fridge_1"

    def test_plan_replays_to_goal(self):
        sim, _ = reset("coffee", 0)
        plan = sim.oracle_min_plan()
        assert plan
        replay = sim.clone()
        replay.reveal_locations(replay.things)
        for action in plan:
            assert replay.execute(action).success
        assert replay.goal_satisfied(sim.problem.goal)

    def test_goal_already_true(self):
        sim, _ = reset("apple", 0)
        assert sim.oracle_min_plan([lit("atRoom", "kitchen")]) == []

    @pytest.mark.parametrize("task", TASK_NAMES)
    def test_search_stays_small(self, task):
        for seed in range(12):
            sim, _ = KitchenSim.reset(task, seed)
            plan = sim.oracle_min_plan(max_states=20_000)
            replay = sim.clone()
            replay.reveal_locations(replay.things)
            for action in plan:
                assert replay.execute(action).success, f"{task} seed {seed}: {action}"
            assert replay.goal_satisfied(sim.problem.goal), f"{task} seed {seed}"

    def test_bread_in_fridge_needs_the_front_station(self):
        sim = seed_with("toast", "bread_1", ("fridge_1",))
        plan = sim.oracle_min_plan(max_states=20_000)
        assert "movebackward" in plan
        assert plan.index("open fridge_1") < plan.index("movebackward")
        assert "put bread_1 toaster_1" in plan

    @pytest.mark.slow
    @pytest.mark.parametrize("task", TASK_NAMES)
    def test_every_fixture_seed_is_solvable(self, task):
        for seed in range(50):
            sim, _ = KitchenSim.reset(task, seed)
            assert sim.oracle_min_plan(), f"{task} seed {seed}"
