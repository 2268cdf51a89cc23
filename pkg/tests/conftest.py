from pathlib import Path
from typing import Iterable, List, Set

import pytest

from bcr.domain import Domain, Literal, Observation, TruthValue
from bcr.kitchen_sim import ExecResult, kitchen_domain
from bcr.parser import Problem, load_domain, load_problem, parse_action

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
MILK_DIR = FIXTURES / "milk"
PROMPTS_DIR = FIXTURES / "prompts"


def lit(predicate: str, *args: str, value: TruthValue = TruthValue.TRUE) -> Literal:
    return Literal(predicate, tuple(args), value)


class MilkWorld:
    """
    Scripted world for the milk-fetching domain. The milk sits inside one
    closed appliance and becomes visible once that appliance is opened. With
    hidden=True it stays out of sight until a visualSearch with that
    appliance open.
    """

    def __init__(self, domain: Domain, problem: Problem, milk_in: str = "refrigerator", hidden: bool = False):
        self.domain = domain
        self.problem = problem
        self.instances = problem.instance_map(domain)
        self.milk_in = milk_in
        self.hidden = hidden
        self.visible: Set[str] = {"counter"}
        self.opened: Set[str] = set()
        self.holding = False
        self.on_counter = False
        self.executed: List[str] = []

    def clone(self) -> "MilkWorld":
        twin = MilkWorld(self.domain, self.problem, self.milk_in, self.hidden)
        twin.visible, twin.opened = set(self.visible), set(self.opened)
        twin.holding, twin.on_counter = self.holding, self.on_counter
        return twin

    def _truth(self, literal: Literal) -> bool:
        name, args = literal.predicate, literal.arguments
        atom = {
            "isVisible": lambda: args[0] in self.visible,
            "isHolding": lambda: self.holding,
            "On": lambda: self.on_counter,
            "isOpen": lambda: args[0] in self.opened,
        }[name]()
        return atom if literal.value.certain is TruthValue.TRUE else not atom

    def goal_satisfied(self, goal: Iterable[Literal]) -> bool:
        return all(self._truth(l) for l in goal)

    def _step(self, text: str) -> ExecResult:
        action = parse_action(text, self.domain, self.instances)
        for condition in self.domain.grounded_conditions(action):
            if all(self._truth(l) for l in condition.trigger):
                return ExecResult("Blocked", text, Observation(), condition, message=f"{text}: {condition.name}")

        seen = []
        if action.schema == "open":
            container = action.arguments[0]
            self.opened.add(container)
            seen.append(lit("isOpen", container))
            if container == self.milk_in and not self.hidden:
                self.visible.add("milk")
                seen.append(lit("isVisible", "milk"))
        elif action.schema == "visualSearch":
            if self.milk_in in self.opened and not self.holding and not self.on_counter:
                self.visible.add("milk")
                seen.append(lit("isVisible", "milk"))
        elif action.schema == "grasp":
            self.holding = True
            self.visible.discard("milk")
            seen.append(lit("isHolding", "milk"))
        elif action.schema == "place":
            self.holding = False
            self.on_counter = True
            seen += [lit("On", "milk", "counter"), lit("isHolding", "milk", value=TruthValue.FALSE)]
        return ExecResult("Success", text, Observation(tuple(seen)))

    def execute(self, text: str) -> ExecResult:
        self.executed.append(text)
        return self._step(text)

    def preview(self, text: str, check: Iterable[Literal] = ()) -> ExecResult:
        twin = self.clone()
        result = twin._step(text)
        check = list(check)
        if check:
            result.checks_hold = all(twin._truth(l) for l in check)
        return result


@pytest.fixture(scope="session")
def milk_domain() -> Domain:
    return load_domain(MILK_DIR / "milk.bcr")


@pytest.fixture(scope="session")
def milk_problem(milk_domain) -> Problem:
    return load_problem(MILK_DIR / "fetch_milk.bcr", milk_domain)


@pytest.fixture
def milk_world(milk_domain, milk_problem) -> MilkWorld:
    return MilkWorld(milk_domain, milk_problem)


@pytest.fixture(scope="session")
def kitchen() -> Domain:
    return kitchen_domain()
