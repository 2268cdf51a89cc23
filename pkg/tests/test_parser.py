"""Tests for the .bcr reader, validation and canonical action strings."""
import itertools

import numpy as np
import pytest

from bcr.domain import TruthValue, ground
from bcr.errors import (
    ArityMismatch,
    DomainSyntaxError,
    UnknownInstance,
    UnknownPredicate,
    UnknownSchema,
    ValidationError,
)
from bcr.kitchen_sim import KITCHEN_DOMAIN_PATH, TASK_NAMES, load_task
from bcr.parser import parse_action, parse_domain, parse_problem, render_action, render_domain, render_problem

HEADER = "(define (domain d)\n  (:categories a b)\n  (:predicates (p ?x - a) (q ?x - a ?y - (either a b)))\n"


def domain_with(action: str) -> str:
    return HEADER + action + "\n)\n"


class TestSyntax:
    def test_unclosed_list_reports_end_position(self):
        with pytest.raises(DomainSyntaxError) as err:
            parse_domain("(define (domain d)\n  (:categories a)\n  (:predicates (p ?x - a))\n")
        assert (err.value.line, err.value.col) == (4, 1)

    def test_bad_truth_value_points_at_token(self):
        text = ("(define (domain d)\n  (:categories a)\n  (:predicates (p ?x - a))\n"
                "  (:action act :parameters (?x - a) :effects (((p ?x) maybe))))\n")
        with pytest.raises(DomainSyntaxError) as err:
            parse_domain(text)
        assert (err.value.line, err.value.col) == (4, 55)

    def test_stray_closing_paren(self):
        with pytest.raises(DomainSyntaxError):
            parse_domain(")")

    def test_invalid_utf8(self):
        with pytest.raises(DomainSyntaxError):
            parse_domain(b"(define \xff)")

    def test_comments_are_ignored(self):
        domain = parse_domain("; header\n" + domain_with("  (:action act :parameters (?x - a) ; note\n"
                                                         "    :effects (((p ?x) true)))"))
        assert list(domain.schemas) == ["act"]


class TestValidation:
    def test_either_category_slot(self):
        domain = parse_domain(domain_with("  (:action act :parameters (?x - a ?y - b) :effects (((q ?x ?y) true)))"))
        assert domain.predicates["q"].parameter_categories == (("a",), ("a", "b"))

    def test_repeatable_requires_sensing_effects(self):
        with pytest.raises(ValidationError):
            parse_domain(domain_with("  (:action act :parameters (?x - a) :repeatable :effects (((p ?x) true)))"))

    def test_repeatable_sensing_schema_is_accepted(self):
        domain = parse_domain(domain_with(
            "  (:action look :parameters (?x - a) :repeatable :effects (((p ?x) possibly_true)))"))
        assert domain.schema("look").repeatable and domain.schema("look").is_sensing

    def test_scoped_variable_allowed_in_effects_only(self):
        domain = parse_domain(domain_with("  (:action act :parameters (?x - a) :effects (((q ?x ?z) true)))"))
        assert domain.schema("act").effects[0].arguments == ("?x", "?z")
        with pytest.raises(ValidationError):
            parse_domain(domain_with(
                "  (:action act :parameters (?x - a) :effects (((p ?x) true))\n"
                "    :blocked-when (:condition c :trigger (((p ?z) false)) :resolution (((p ?z) true))))"))

    def test_unknown_predicate(self):
        with pytest.raises(UnknownPredicate):
            parse_domain(domain_with("  (:action act :parameters (?x - a) :effects (((r ?x) true)))"))

    def test_arity_mismatch(self):
        with pytest.raises(ArityMismatch):
            parse_domain(domain_with("  (:action act :parameters (?x - a) :effects (((p ?x ?x) true)))"))

    def test_empty_resolution_list(self):
        with pytest.raises(ValidationError):
            parse_domain(domain_with(
                "  (:action act :parameters (?x - a) :effects (((p ?x) true))\n"
                "    :blocked-when (:condition c :trigger (((p ?x) false)) :resolution ()))"))

    def test_duplicate_action(self):
        action = "  (:action act :parameters (?x - a) :effects (((p ?x) true)))\n"
        with pytest.raises(ValidationError):
            parse_domain(domain_with(action + action))


class TestKitchenFiles:
    def test_kitchen_domain_shape(self, kitchen):
        assert kitchen.constants == {"character": "agent", "kitchen": "room", "hallway": "room"}
        grab = kitchen.schema("grab")
        assert [c.name for c in grab.blocking_conditions] == ["not-visible", "not-near", "hands-full"]
        assert kitchen.schema("scanroom").repeatable
        assert not kitchen.schema("open").is_sensing

    def test_render_then_parse_is_stable(self, kitchen):
        assert parse_domain(render_domain(kitchen)) == kitchen

    def test_every_task_parses(self, kitchen):
        goals = {name: [str(l) for l in load_task(name, kitchen).goal] for name in ("coffee", "apple", "mug", "toast")}
        assert goals["apple"] == ["inside(apple_1, fridge_1)=true"]
        assert all(goals.values())

    @pytest.mark.parametrize("task", TASK_NAMES)
    def test_rendered_problem_parses_back(self, kitchen, task):
        problem = load_task(task, kitchen)
        assert parse_problem(render_problem(problem), kitchen) == problem

    def test_problem_rejects_unknown_instance_in_goal(self, kitchen):
        text = "(define (problem x) (:domain kitchen) (:objects apple_1 - apple) (:goal ((holding mug_1) true)))"
        with pytest.raises(UnknownInstance):
            parse_problem(text, kitchen)

    def test_problem_needs_a_goal(self, kitchen):
        with pytest.raises(ValidationError):
            parse_problem("(define (problem x) (:domain kitchen) (:objects apple_1 - apple) (:goal))", kitchen)

    def test_known_facts_must_be_certain(self, kitchen):
        text = ("(define (problem x) (:domain kitchen) (:objects apple_1 - apple)"
                " (:known ((holding apple_1) possibly_true)) (:goal ((holding apple_1) true)))")
        with pytest.raises(DomainSyntaxError):
            parse_problem(text, kitchen)

    def test_problem_for_other_domain(self, kitchen):
        with pytest.raises(ValidationError):
            parse_problem("(define (problem x) (:domain milk) (:objects apple_1 - apple)"
                          " (:goal ((holding apple_1) true)))", kitchen)


class TestActionStrings:
    @pytest.fixture
    def instances(self, kitchen):
        return load_task("apple", kitchen).instance_map(kitchen)

    def test_parse_and_render(self, kitchen, instances):
        action = parse_action("putin apple_1 fridge_1", kitchen, instances)
        assert action.binding_map == {"?o": "apple_1", "?c": "fridge_1"}
        assert render_action(action) == "putin apple_1 fridge_1"
        assert str(parse_action("scanroom mug_1 kitchen", kitchen, instances)) == "scanroom mug_1 kitchen"

    @pytest.mark.parametrize("text, error", [
        ("fly apple_1", UnknownSchema),
        ("grab", ArityMismatch),
        ("grab pear_1", UnknownInstance),
        ("", UnknownSchema),
    ])
    def test_rejects(self, kitchen, instances, text, error):
        with pytest.raises(error):
            parse_action(text, kitchen, instances)

    @pytest.mark.parametrize("task", TASK_NAMES)
    def test_every_grounding_survives_its_text(self, kitchen, task):
        instances = load_task(task, kitchen).instance_map(kitchen)
        count = 0
        for schema in kitchen.schemas.values():
            pools = [sorted(i for i, c in instances.items() if c in cats) for _, cats in schema.parameters]
            for args in itertools.product(*pools):
                action = ground(schema, dict(zip(schema.parameter_names, args)), instances)
                text = render_action(action)
                assert text.split() == [schema.name, *args]
                assert parse_action(text, kitchen, instances) == action
                count += 1
        assert count > len(kitchen.schemas)


def test_goal_values_are_certain(milk_problem):
    assert [l.value for l in milk_problem.goal] == [TruthValue.TRUE]


# =====================================================================
# MUTATED DOMAIN TEXT
# =====================================================================

EDIT_CHARS = "() ;?-\nxe"


def mutate(text, rng):
    for _ in range(int(rng.integers(1, 4))):
        at = int(rng.integers(len(text)))
        roll = rng.random()
        if roll < 0.4:
            text = text[:at] + text[at + 1:]
        elif roll < 0.8:
            text = text[:at] + EDIT_CHARS[int(rng.integers(len(EDIT_CHARS)))] + text[at:]
        else:
            end = min(len(text), at + int(rng.integers(1, 12)))
            text = text[:at] + text[end:]
    return text


def test_mutated_domains_parse_or_fail_cleanly():
    source = KITCHEN_DOMAIN_PATH.read_text(encoding="utf-8")
    rng = np.random.default_rng(2024)
    outcomes = {"parsed": 0, "syntax": 0, "invalid": 0}
    for _ in range(1000):
        text = mutate(source, rng)
        try:
            parse_domain(text)
            outcomes["parsed"] += 1
        except DomainSyntaxError as e:
            lines = text.split("\n")
            assert 1 <= e.line <= len(lines), text
            assert 1 <= e.col <= len(lines[e.line - 1]) + 1, text
            outcomes["syntax"] += 1
        except ValidationError:
            outcomes["invalid"] += 1
    assert outcomes["parsed"] and outcomes["syntax"] and outcomes["invalid"]
