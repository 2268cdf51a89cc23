"""Trial executor over the scripted milk world and the kitchen simulator."""
import json
from dataclasses import replace

import pytest

from conftest import MilkWorld, lit

from bcr.domain import Observation, TruthValue
from bcr.errors import BCRError, ConfigError
from bcr.executor import (
    BUDGET_EXHAUSTED,
    DEAD_END,
    ENGINE_EXHAUSTED,
    LOG_SCHEMA,
    SUCCESS,
    TrialConfig,
    initial_belief,
    read_log,
    run_trial,
    summarize_agent,
    write_log,
)
from bcr.kitchen_sim import KitchenSim
from bcr.llm_client import ChatClient, MockTransport


def milk_trial(world, engine="oracle", client=None, **overrides):
    cfg = TrialConfig("fetch_milk", engine, 0, **overrides)
    return run_trial(cfg, client=client, world=world, domain=world.domain, problem=world.problem,
                     observation=Observation())


def llm_client(*replies):
    transport = MockTransport(list(replies))
    return ChatClient("http://llm.local", "sk-test", transport, sleep=lambda _: None), transport


class TestTrialConfig:
    def test_defaults(self):
        assert TrialConfig("apple", "oracle", 0).clock == "logical"
        assert TrialConfig("apple", "llm", 0).clock == "wall"
        assert TrialConfig("apple", "ffreplan", 0).condition == "ffreplan"

    @pytest.mark.parametrize("kwargs", [
        {"engine": "psychic"},
        {"max_actions": 0},
        {"retry_budget": -1},
        {"clock": "sundial"},
    ])
    def test_rejects(self, kwargs):
        base = {"task": "apple", "engine": "oracle", "seed": 0}
        base.update(kwargs)
        with pytest.raises(ConfigError):
            TrialConfig(**base)


class TestMilkWithOracle:
    def test_resolves_through_the_forest(self, milk_world):
        record = milk_trial(milk_world)
        assert record.result == SUCCESS
        assert milk_world.executed == [
            "place milk counter", "grasp milk", "open refrigerator", "grasp milk", "place milk counter",
        ]
        assert record.considered == [1, 1, 4, 1, 1]
        assert [s["outcome"] for s in record.steps] == ["Blocked", "Blocked", "Success", "Success", "Success"]
        assert record.steps[1]["condition"]["name"] == "not-visible"
        assert record.steps[2]["context"]["candidates"] == [
            "open freezer", "open oven", "open refrigerator", "visualSearch direction_bias",
        ]
        assert record.runtime == 5.0
        assert not record.loop_detected

    def test_hidden_milk_needs_a_visual_search(self, milk_domain, milk_problem):
        world = MilkWorld(milk_domain, milk_problem, hidden=True)
        record = milk_trial(world)
        assert record.result == SUCCESS
        assert world.executed == [
            "place milk counter", "grasp milk",
            "open freezer", "open oven", "open refrigerator",
            "visualSearch direction_bias", "grasp milk", "place milk counter",
        ]
        assert [s["outcome"] for s in record.steps] == ["Blocked", "Blocked"] + ["Success"] * 6
        assert record.considered == [1, 1, 4, 3, 2, 1, 1, 1]
        assert record.steps[5]["observation"]["literals"] == ["isVisible(milk)=true"]

    def test_step_entries_carry_context(self, milk_world):
        record = milk_trial(milk_world)
        step = record.steps[2]
        assert step["schema"] == LOG_SCHEMA and step["type"] == "step"
        assert step["context"]["previous_actions"] == ["place milk counter", "grasp milk"]
        assert step["context"]["last_error"].startswith("grasp milk")
        assert step["forest"][0]["children"][0]["condition"] == "not-visible"
        assert step["observation"]["literals"] == ["isOpen(refrigerator)=true", "isVisible(milk)=true"]
        assert step["elapsed_s"] == 1.0

    def test_budget(self, milk_world):
        record = milk_trial(milk_world, max_actions=1)
        assert record.result == BUDGET_EXHAUSTED
        assert len(record.steps) == 1

    def test_unfindable_milk_exhausts_budget(self, milk_domain, milk_problem):
        world = MilkWorld(milk_domain, milk_problem, milk_in="pantry")
        record = milk_trial(world)
        # visualSearch is repeatable and never removed, so the oracle keeps trying it
        assert record.result == BUDGET_EXHAUSTED
        assert record.loop_detected

    def test_no_achiever_is_a_dead_end(self, milk_domain, milk_problem):
        problem = replace(milk_problem, goal=(lit("isOpen", "oven", value=TruthValue.FALSE),))
        record = milk_trial(MilkWorld(milk_domain, problem))
        assert record.result == DEAD_END


class TestMilkWithLLM:
    def test_follows_model_choices(self, milk_world):
        client, transport = llm_client(*[MockTransport.completion(f"$$ {a} $$") for a in (
            "place milk counter", "grasp milk", "open refrigerator", "grasp milk", "place milk counter")])
        record = milk_trial(milk_world, engine="llm", client=client, clock="logical")
        assert record.result == SUCCESS
        assert len(transport.calls) == 5
        assert record.steps[0]["prompt"][0]["role"] == "system"
        assert record.steps[0]["responses"] == ["$$ place milk counter $$"]

    def test_exhausted_retries_fall_back_to_oracle(self, milk_world):
        client, transport = llm_client(*[MockTransport.completion("no idea")] * 2)
        record = milk_trial(milk_world, engine="llm", client=client, retry_budget=1, max_actions=1)
        step = record.steps[0]
        assert step["fallback"] is True
        assert step["selected"] == "place milk counter"
        assert step["retries_used"] == 1
        assert len(transport.calls) == 2

    def test_auth_failure_ends_trial(self, milk_world):
        client, _ = llm_client((401, "bad key"))
        record = milk_trial(milk_world, engine="llm", client=client)
        assert record.result == ENGINE_EXHAUSTED
        assert record.steps == []


class TestKitchenTrials:
    def test_oracle_solves_apple(self):
        record = run_trial(TrialConfig("apple", "oracle", 0))
        assert record.result == SUCCESS
        assert len(record.steps) <= 100

    def test_oracle_fetches_bread_from_the_fridge(self):
        seeds = [s for s in range(12) if KitchenSim.reset("toast", s)[0].state.holder["bread_1"] == "fridge_1"]
        assert seeds
        for seed in seeds:
            record = run_trial(TrialConfig("toast", "oracle", seed))
            assert record.result == SUCCESS, f"seed {seed}"
            assert "movebackward" in [s["selected"] for s in record.steps]

    def test_random_is_reproducible(self):
        a = run_trial(TrialConfig("mug", "random", 4, max_actions=30))
        b = run_trial(TrialConfig("mug", "random", 4, max_actions=30))
        assert [s["selected"] for s in a.steps] == [s["selected"] for s in b.steps]
        assert a.result == b.result


class TestLogs:
    def test_round_trip(self, milk_world, tmp_path):
        record = milk_trial(milk_world)
        path = write_log(record, tmp_path / "logs" / "milk.jsonl")
        steps, trailer = read_log(path)
        assert steps == json.loads(json.dumps(record.steps))
        assert trailer["result"] == SUCCESS
        assert trailer["steps"] == 5
        assert trailer["config"]["engine"] == "oracle"

    def test_missing_trailer(self, tmp_path):
        path = tmp_path / "broken.jsonl"
        path.write_text(json.dumps({"type": "step", "schema": LOG_SCHEMA}) + "\n", encoding="utf-8")
        with pytest.raises(BCRError):
            read_log(path)

    def test_wrong_schema(self, tmp_path):
        path = tmp_path / "old.jsonl"
        path.write_text(json.dumps({"type": "trailer", "schema": "bcr-log/v0"}) + "\n", encoding="utf-8")
        with pytest.raises(BCRError):
            read_log(path)


def test_agent_summary(milk_domain, milk_problem):
    belief = initial_belief(milk_problem, milk_domain, Observation())
    assert summarize_agent(belief) == "I am not holding anything."
