"""
Deterministic, seedable kitchen simulator.

The world is topological: every fixture owns one or more stations, the agent
stands at a station facing one of N/E/S/W, and an object is visible only when
the agent is at its station, facing it, looking level, the object is not in a
closed container and not hidden behind the open fridge door. The fridge's
default station is its side station, where the open door occludes the
interior; the front station is one `movebackward` away.

Blocking conditions are not hard-coded: the simulator evaluates the trigger
literals that the domain file declares for each action against ground truth.
"""
import itertools
import logging
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Set, Tuple, Union

import numpy as np

from bcr.domain import BlockingCondition, Domain, GroundedAction, Instance, Literal, Observation, TruthValue
from bcr.errors import BCRError, UnknownTask, Unsolvable
from bcr.parser import Problem, load_domain, load_problem, parse_action

logger = logging.getLogger(__name__)

# =====================================================================
# LAYOUT
# =====================================================================

REPO_ROOT = Path(__file__).resolve().parent.parent
KITCHEN_DOMAIN_PATH = REPO_ROOT / "domains" / "kitchen.bcr"
TASKS_DIR = REPO_ROOT / "tasks"
TASK_NAMES = ("coffee", "apple", "mug", "toast")

AGENT = "character"
ROOMS = ("kitchen", "hallway")
FACINGS = ("N", "E", "S", "W")

# station -> (room, facing that looks at the station's fixture)
STATIONS: Dict[str, Tuple[str, str]] = {
    "st_center": ("kitchen", "N"),
    "st_hallway": ("hallway", "N"),
    "st_fridge_side": ("kitchen", "W"),
    "st_fridge_front": ("kitchen", "W"),
    "st_cabinet_1": ("kitchen", "N"),
    "st_cabinet_2": ("kitchen", "N"),
    "st_counter_1": ("kitchen", "N"),
    "st_diningtable_1": ("kitchen", "S"),
    "st_sink_1": ("kitchen", "E"),
    "st_faucet_1": ("kitchen", "E"),
    "st_coffeemachine_1": ("kitchen", "E"),
    "st_toaster_1": ("kitchen", "N"),
}

# fixture -> stations it can be reached from; the first one is where walk_to_object lands
FIXTURE_STATIONS: Dict[str, Tuple[str, ...]] = {
    "fridge_1": ("st_fridge_side", "st_fridge_front"),
    "cabinet_1": ("st_cabinet_1",),
    "cabinet_2": ("st_cabinet_2",),
    "counter_1": ("st_counter_1",),
    "diningtable_1": ("st_diningtable_1",),
    "sink_1": ("st_sink_1",),
    "faucet_1": ("st_faucet_1",),
    "coffeemachine_1": ("st_coffeemachine_1",),
    "toaster_1": ("st_toaster_1",),
}
OCCLUDING_DOORS = {"fridge_1": "st_fridge_side"}

# task-legal initial receptacles per pickupable object
PLACEMENTS: Dict[str, Tuple[str, ...]] = {
    "apple_1": ("counter_1", "diningtable_1", "cabinet_1"),
    "mug_1": ("cabinet_2", "counter_1", "sink_1"),
    "bread_1": ("counter_1", "diningtable_1", "fridge_1"),
    "knife_1": ("counter_1", "diningtable_1", "cabinet_2"),
}

ITEM_CATEGORIES = frozenset({"apple", "mug", "bread", "knife"})
CONTAINER_CATEGORIES = frozenset({"fridge", "cabinet"})
SURFACE_CATEGORIES = frozenset({"countertop", "diningtable", "sink", "coffeemachine", "toaster"})
APPLIANCE_CATEGORIES = frozenset({"faucet", "coffeemachine", "toaster"})

# BFS never needs these: they only remove visibility, move away from every fixture,
# or spot from afar what a walk to the fixture also shows
ORACLE_SKIPPED_SCHEMAS = frozenset({"close", "turnleft", "turnright", "lookup", "lookdown",
                                    "moveforward", "walk_to_room", "scanroom"})

# Error strings feed prompt component 7; changing them is a breaking change.
ERROR_STRINGS_VERSION = "kitchen-errors/v1"
ERROR_STRINGS = {
    "invalid_action": "I cannot do '{action}': {reason}.",
    "holding_target": "I cannot walk to {target} because I am holding it.",
    "cannot_move": "I cannot {action} from here.",
}
CONDITION_STRINGS = {
    "not-located": "I do not know where {0} is",
    "not-in-room": "I am not in the {1}",
    "not-visible": "{target} is not visible",
    "hands-full": "my hands are full",
    "not-holding": "I am not holding {0}",
    "closed": "{1} is closed",
    "not-near": "I am not close enough to {target}",
    "no-knife": "I am not holding {1}",
}

# domain hints appended to prompt component 2
KITCHEN_NOTES = (
    "scanroom looks around my current room for one object; every other action needs its target to be visible.",
    "Objects can sit inside closed containers, where scanroom cannot see them until the container is opened.",
)


@dataclass
class SimState:
    room: str
    station: str
    facing: str
    horizon: int
    focus: Optional[str]
    held: Optional[str]
    holder: Dict[str, Optional[str]]
    opened: Set[str]
    powered: Set[str]
    sliced: Set[str]
    spotted: Set[str]
    located: Set[str]
    step_count: int = 0

    def clone(self) -> "SimState":
        return SimState(
            self.room, self.station, self.facing, self.horizon, self.focus, self.held,
            dict(self.holder), set(self.opened), set(self.powered), set(self.sliced),
            set(self.spotted), set(self.located), self.step_count,
        )

    def key(self) -> Tuple:
        """World configuration without counters, used for search and loop digests"""
        return (
            self.room, self.station, self.facing, self.horizon, self.focus, self.held,
            tuple(sorted((k, v or "") for k, v in self.holder.items())),
            tuple(sorted(self.opened)), tuple(sorted(self.powered)), tuple(sorted(self.sliced)),
            tuple(sorted(self.spotted)),
        )


@dataclass
class ExecResult:
    outcome: str  # Success | Blocked | Error
    action: str
    observation: Observation
    condition: Optional[BlockingCondition] = None
    error: Optional[str] = None
    message: str = ""
    # set by preview: whether the checked literals hold afterwards
    checks_hold: Optional[bool] = None

    @property
    def success(self) -> bool:
        return self.outcome == "Success"

    @property
    def blocked(self) -> bool:
        return self.outcome == "Blocked"

    def to_dict(self) -> Dict:
        return {
            "outcome": self.outcome,
            "action": self.action,
            "condition": self.condition.to_dict() if self.condition else None,
            "error": self.error,
            "message": self.message,
        }


@lru_cache(maxsize=1)
def kitchen_domain() -> Domain:
    return load_domain(KITCHEN_DOMAIN_PATH)


def load_task(name: str, domain: Optional[Domain] = None) -> Problem:
    if name not in TASK_NAMES:
        raise UnknownTask(name)
    return load_problem(TASKS_DIR / f"{name}.bcr", domain or kitchen_domain())


class KitchenSim:
    """One simulated kitchen episode; single writer"""

    def __init__(self, domain: Domain, problem: Problem, state: SimState, seed: int):
        self.domain = domain
        self.problem = problem
        self.state = state
        self.seed = seed
        self.instances = problem.instance_map(domain)
        self.fixtures = [o for o, c in problem.objects.items() if c not in ITEM_CATEGORIES]
        self.items = [o for o, c in problem.objects.items() if c in ITEM_CATEGORIES]
        self.things = sorted(self.fixtures + self.items)

    # -----------------------------------------------------------------
    # construction
    # -----------------------------------------------------------------

    @classmethod
    def reset(cls, task: Union[str, Problem], seed: int,
              domain: Optional[Domain] = None) -> Tuple["KitchenSim", Observation]:
        """
        Build a fresh episode.

        Args:
            task: task name (coffee, apple, mug, toast) or a parsed kitchen Problem
            seed: placement seed; equal seeds give identical episodes
            domain: kitchen domain, loaded from domains/kitchen.bcr by default
        """
        domain = domain or kitchen_domain()
        problem = load_task(task, domain) if isinstance(task, str) else task
        unknown = [o for o in problem.objects
                   if o not in FIXTURE_STATIONS and o not in PLACEMENTS]
        if unknown:
            raise UnknownTask(f"{problem.name} (objects outside the kitchen layout: {', '.join(unknown)})")

        rng = np.random.default_rng(seed)
        holder: Dict[str, Optional[str]] = {}
        for item in sorted(o for o in problem.objects if o in PLACEMENTS):
            options = PLACEMENTS[item]
            holder[item] = options[int(rng.integers(len(options)))]

        located = {o for o in problem.objects if o in FIXTURE_STATIONS}
        state = SimState(
            room="kitchen", station="st_center", facing="N", horizon=0, focus=None, held=None,
            holder=holder, opened=set(), powered=set(), sliced=set(), spotted=set(), located=located,
        )
        sim = cls(domain, problem, state, seed)
        logger.debug(f"🍳 Reset {problem.name} seed={seed}: {holder}")
        return sim, sim._observe(state, set(), [])

    def clone(self) -> "KitchenSim":
        return KitchenSim(self.domain, self.problem, self.state.clone(), self.seed)

    def reveal_locations(self, ids: Iterable[str]) -> None:
        """Full-knowledge mode: the agent knows where these objects are"""
        self.state.located |= set(ids)

    # -----------------------------------------------------------------
    # ground truth
    # -----------------------------------------------------------------

    def category(self, obj: str) -> str:
        return self.instances[obj]

    def is_item(self, obj: str) -> bool:
        return self.instances.get(obj) in ITEM_CATEGORIES

    def _concealed(self, state: SimState, obj: str) -> bool:
        if not self.is_item(obj):
            return False
        container = state.holder.get(obj)
        if container is None or self.category(container) not in CONTAINER_CATEGORIES:
            return False
        if container not in state.opened:
            return True
        return OCCLUDING_DOORS.get(container) == state.station

    def visible_set(self, state: Optional[SimState] = None) -> Set[str]:
        state = state or self.state
        if state.room != "kitchen" or state.horizon != 0:
            return set()
        candidates = set(state.spotted)
        focus = state.focus
        if focus is not None:
            fixture = focus if not self.is_item(focus) else state.holder.get(focus)
            if fixture is not None and state.station in FIXTURE_STATIONS.get(fixture, ()) \
                    and state.facing == STATIONS[state.station][1]:
                candidates.add(fixture)
                if self.is_item(focus):
                    candidates.add(focus)
                else:
                    candidates |= {i for i in self.items if state.holder.get(i) == fixture}
        return {o for o in candidates if o != state.held and not self._concealed(state, o)}

    def _near(self, state: SimState, obj: str) -> bool:
        if obj == state.held:
            return True
        fixture = obj if not self.is_item(obj) else state.holder.get(obj)
        return fixture is not None and state.station in FIXTURE_STATIONS.get(fixture, ())

    def _atom(self, state: SimState, predicate: str, args: Tuple[str, ...], vis: Set[str]) -> bool:
        if predicate == "atRoom":
            return state.room == args[0]
        if predicate == "near":
            return self._near(state, args[0])
        if predicate == "visible":
            return args[0] in vis
        if predicate == "located":
            return args[0] in state.located
        if predicate == "holding":
            return state.held == args[0]
        if predicate == "handsFree":
            return state.held is None
        if predicate in ("on", "inside"):
            return state.holder.get(args[0]) == args[1]
        if predicate == "isOpen":
            return args[0] in state.opened
        if predicate == "isOn":
            return args[0] in state.powered
        if predicate == "isSliced":
            return args[0] in state.sliced
        raise BCRError(f"kitchen simulator has no semantics for predicate {predicate}")

    def truth(self, literal: Literal, state: Optional[SimState] = None, vis: Optional[Set[str]] = None) -> bool:
        """Whether a ground literal holds as stated in ground truth"""
        state = state or self.state
        vis = self.visible_set(state) if vis is None else vis
        atom = self._atom(state, literal.predicate, literal.arguments, vis)
        return atom if literal.value.certain is TruthValue.TRUE else not atom

    def goal_satisfied(self, goal: Iterable[Literal]) -> bool:
        vis = self.visible_set()
        return all(self.truth(l, self.state, vis) for l in goal)

    def ground_truth_literals(self) -> List[Literal]:
        """Every true atom of the current world, for closed-world baselines"""
        state, vis = self.state, self.visible_set()
        facts = [Literal("atRoom", (state.room,)),
                 Literal("handsFree", (AGENT,))] if state.held is None else [Literal("atRoom", (state.room,))]
        for obj in self.things:
            if self._near(state, obj):
                facts.append(Literal("near", (obj,)))
            if obj in vis:
                facts.append(Literal("visible", (obj,)))
            if obj in state.located:
                facts.append(Literal("located", (obj,)))
        for item in self.items:
            where = state.holder.get(item)
            if where is None:
                facts.append(Literal("holding", (item,)))
            else:
                predicate = "inside" if self.category(where) in CONTAINER_CATEGORIES else "on"
                facts.append(Literal(predicate, (item, where)))
        facts += [Literal("isOpen", (c,)) for c in sorted(state.opened)]
        facts += [Literal("isOn", (d,)) for d in sorted(state.powered)]
        facts += [Literal("isSliced", (b,)) for b in sorted(state.sliced)]
        return sorted(facts, key=str)

    # -----------------------------------------------------------------
    # stepping
    # -----------------------------------------------------------------

    def execute(self, action: Union[str, GroundedAction]) -> ExecResult:
        """Apply one action to the live state; every call counts as one step"""
        result = self._step(self.state, action)
        self.state.step_count += 1
        return result

    def preview(self, action: Union[str, GroundedAction], check: Iterable[Literal] = ()) -> ExecResult:
        """Test-only: outcome of an action on a throwaway clone, optionally checking literals afterwards"""
        state = self.state.clone()
        result = self._step(state, action)
        check = list(check)
        if check:
            vis = self.visible_set(state)
            result.checks_hold = all(self.truth(l, state, vis) for l in check)
        return result

    def _step(self, state: SimState, action: Union[str, GroundedAction]) -> ExecResult:
        before = set(state.located)
        text = str(action)
        try:
            grounded = action if isinstance(action, GroundedAction) \
                else parse_action(action, self.domain, self.instances)
        except BCRError as e:
            message = ERROR_STRINGS["invalid_action"].format(action=text, reason=e)
            return ExecResult("Error", text, self._observe(state, before, []), error=message, message=message)

        outcome, condition, error, feedback = self._transition(state, grounded)
        observation = self._observe(state, before, feedback)
        message = ""
        if condition is not None:
            message = self.describe_condition(text, condition)
        elif error:
            message = error
        return ExecResult(outcome, text, observation, condition, error, message)

    def _transition(self, state: SimState, action: GroundedAction):
        vis = self.visible_set(state)
        for condition in self.domain.grounded_conditions(action):
            if all(self.truth(l, state, vis) for l in condition.trigger):
                return "Blocked", condition, None, []

        handler = getattr(self, f"_do_{action.schema}")
        error, feedback = handler(state, *action.arguments)
        if error:
            return "Error", None, error, []
        state.located |= self.visible_set(state)
        return "Success", None, None, feedback

    def describe_condition(self, action: str, condition: BlockingCondition) -> str:
        args = action.split()[1:]
        subjects = [l.arguments[0] for l in condition.trigger if l.arguments]
        template = CONDITION_STRINGS.get(condition.name, condition.name)
        reason = template.format(*(args + ["", ""]), target=subjects[0] if subjects else "")
        return f"The action '{action}' failed: {reason}."

    # -----------------------------------------------------------------
    # action semantics (blocking conditions already checked)
    # -----------------------------------------------------------------

    def _move_to(self, state: SimState, station: str, focus: Optional[str]) -> None:
        state.room = STATIONS[station][0]
        state.station = station
        state.facing = STATIONS[station][1]
        state.horizon = 0
        state.focus = focus
        state.spotted.clear()

    def _do_walk_to_object(self, state: SimState, target: str):
        if target == state.held:
            return ERROR_STRINGS["holding_target"].format(target=target), []
        fixture = target if not self.is_item(target) else state.holder[target]
        self._move_to(state, FIXTURE_STATIONS[fixture][0], target)
        return None, []

    def _do_walk_to_room(self, state: SimState, room: str):
        self._move_to(state, "st_center" if room == "kitchen" else "st_hallway", None)
        return None, []

    def _do_scanroom(self, state: SimState, target: str, room: str):
        if target in self.instances and target != state.held and not self._concealed(state, target) \
                and state.room == room == "kitchen" and state.horizon == 0:
            state.spotted.add(target)
        return None, []

    def _location_literal(self, item: str, where: str, value: TruthValue) -> Literal:
        predicate = "inside" if self.category(where) in CONTAINER_CATEGORIES else "on"
        return Literal(predicate, (item, where), value)

    def _do_grab(self, state: SimState, item: str):
        former = state.holder[item]
        state.holder[item] = None
        state.held = item
        state.spotted.discard(item)
        if state.focus == item:
            state.focus = former
        return None, [self._location_literal(item, former, TruthValue.FALSE)]

    def _place(self, state: SimState, item: str, where: str):
        remote = where in state.spotted
        state.holder[item] = where
        state.held = None
        if remote:
            state.spotted.add(item)
        return None, [self._location_literal(item, where, TruthValue.TRUE)]

    def _do_put(self, state: SimState, item: str, surface: str):
        return self._place(state, item, surface)

    def _do_putin(self, state: SimState, item: str, container: str):
        return self._place(state, item, container)

    def _do_open(self, state: SimState, container: str):
        state.opened.add(container)
        state.focus = container
        state.facing = STATIONS[state.station][1]
        return None, [Literal("isOpen", (container,), TruthValue.TRUE)]

    def _do_close(self, state: SimState, container: str):
        state.opened.discard(container)
        state.focus = container
        return None, [Literal("isOpen", (container,), TruthValue.FALSE)]

    def _do_toggle_on(self, state: SimState, device: str):
        state.powered.add(device)
        return None, [Literal("isOn", (device,), TruthValue.TRUE)]

    def _do_slice(self, state: SimState, bread: str, knife: str):
        state.sliced.add(bread)
        return None, [Literal("isSliced", (bread,), TruthValue.TRUE)]

    def _turn(self, state: SimState, offset: int):
        state.facing = FACINGS[(FACINGS.index(state.facing) + offset) % 4]
        state.spotted.clear()
        return None, []

    def _do_turnleft(self, state: SimState, agent: str):
        return self._turn(state, -1)

    def _do_turnright(self, state: SimState, agent: str):
        return self._turn(state, 1)

    def _look(self, state: SimState, offset: int):
        state.horizon = max(-1, min(1, state.horizon + offset))
        state.spotted.clear()
        return None, []

    def _do_lookup(self, state: SimState):
        return self._look(state, 1)

    def _do_lookdown(self, state: SimState):
        return self._look(state, -1)

    def _do_moveforward(self, state: SimState):
        if state.station != "st_fridge_front":
            return ERROR_STRINGS["cannot_move"].format(action="moveforward"), []
        state.station = "st_fridge_side"
        state.spotted.clear()
        return None, []

    def _do_movebackward(self, state: SimState):
        if state.station != "st_fridge_side":
            return ERROR_STRINGS["cannot_move"].format(action="movebackward"), []
        state.station = "st_fridge_front"
        state.spotted.clear()
        return None, []

    # -----------------------------------------------------------------
    # observation
    # -----------------------------------------------------------------

    def _observe(self, state: SimState, located_before: Set[str], feedback: List[Literal]) -> Observation:
        vis = self.visible_set(state)
        literals: Dict = {}

        def note(literal: Literal) -> None:
            literals[literal.key] = literal

        def fact(predicate: str, args: Tuple[str, ...], value: bool) -> None:
            note(Literal(predicate, args, TruthValue.TRUE if value else TruthValue.FALSE))

        for room in ROOMS:
            fact("atRoom", (room,), state.room == room)
        fact("handsFree", (AGENT,), state.held is None)
        for item in self.items:
            fact("holding", (item,), state.held == item)
        for obj in self.things:
            fact("visible", (obj,), obj in vis)
            fact("near", (obj,), self._near(state, obj))
        for obj in sorted(state.located):
            fact("located", (obj,), True)
        for obj in sorted(vis):
            category = self.category(obj)
            if category in ITEM_CATEGORIES and state.holder.get(obj):
                note(self._location_literal(obj, state.holder[obj], TruthValue.TRUE))
            if category in CONTAINER_CATEGORIES:
                fact("isOpen", (obj,), obj in state.opened)
            if category in APPLIANCE_CATEGORIES:
                fact("isOn", (obj,), obj in state.powered)
            if category == "bread":
                fact("isSliced", (obj,), obj in state.sliced)
        for literal in feedback:
            note(literal)

        seen = sorted(state.located - located_before)
        return Observation(
            tuple(sorted(literals.values(), key=str)),
            tuple(Instance(o, self.category(o)) for o in seen),
        )

    # -----------------------------------------------------------------
    # breadth-first oracle
    # -----------------------------------------------------------------

    def _oracle_actions(self, goal: Iterable[Literal]) -> List[GroundedAction]:
        """
        Ground actions worth trying for this goal: walks, placements and opens
        restricted to the goal's items (plus the knife when slicing), the
        fixtures named by the goal and the fixtures those items start on or in.
        """
        goal = list(goal)
        relevant = {a for l in goal for a in l.arguments if a in self.items}
        if any(l.predicate == "isSliced" for l in goal):
            relevant |= {i for i in self.items if self.category(i) == "knife"}
        goal_devices = {a for l in goal if l.predicate == "isOn" for a in l.arguments}
        fixtures = {a for l in goal for a in l.arguments if a in FIXTURE_STATIONS}
        fixtures |= {self.state.holder[i] for i in relevant if self.state.holder.get(i)}
        things = fixtures | relevant

        actions = []
        for schema in self.domain.schemas.values():
            if schema.name in ORACLE_SKIPPED_SCHEMAS:
                continue
            pools = []
            for variable, categories in schema.parameters:
                pool = sorted(o for o, c in self.instances.items() if c in categories
                              and (o in things or c == "agent"))
                if schema.name == "toggle_on":
                    pool = [o for o in pool if o in goal_devices]
                pools.append(pool)
            for combo in itertools.product(*pools):
                actions.append(GroundedAction(schema.name, tuple(zip(schema.parameter_names, combo))))
        return actions

    def oracle_min_plan(self, goal: Optional[Iterable[Literal]] = None, max_states: int = 50_000) -> List[str]:
        """
        Shortest action sequence to the goal under full observability.
        Actions that can never shorten a plan are not enumerated.
        """
        goal = list(goal if goal is not None else self.problem.goal)
        start = self.state.clone()
        start.located = set(self.things)
        if all(self.truth(l, start) for l in goal):
            return []

        actions = self._oracle_actions(goal)
        parents: Dict[Tuple, Optional[Tuple[Tuple, str]]] = {start.key(): None}
        frontier = deque([start])
        while frontier:
            current = frontier.popleft()
            current_key = current.key()
            for action in actions:
                child = current.clone()
                outcome, _, _, _ = self._transition(child, action)
                if outcome != "Success":
                    continue
                child_key = child.key()
                if child_key in parents:
                    continue
                parents[child_key] = (current_key, str(action))
                vis = self.visible_set(child)
                if all(self.truth(l, child, vis) for l in goal):
                    return _unwind(parents, child_key)
                if len(parents) > max_states:
                    raise Unsolvable(f"state cap {max_states} reached", nodes_expanded=len(parents))
                frontier.append(child)
        raise Unsolvable("goal unreachable in the kitchen", nodes_expanded=len(parents))


def _unwind(parents: Mapping, key: Tuple) -> List[str]:
    plan = []
    while parents[key] is not None:
        key, action = parents[key]
        plan.append(action)
    return list(reversed(plan))


def reset(task: Union[str, Problem], seed: int, domain: Optional[Domain] = None) -> Tuple[KitchenSim, Observation]:
    return KitchenSim.reset(task, seed, domain)


def main():
    """Print placements and BFS plans for the first few seeds of every task"""
    logging.basicConfig(level=logging.INFO, format="%(asctime)s [%(levelname)s] %(message)s")
    for task in TASK_NAMES:
        for seed in range(3):
            sim, _ = reset(task, seed)
            plan = sim.oracle_min_plan()
            logger.info(f"🍳 {task} seed={seed} placements={sim.state.holder} plan({len(plan)})={plan}")


if __name__ == "__main__":
    main()
